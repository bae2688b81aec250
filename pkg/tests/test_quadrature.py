"""Quadrature oracles.

Closed forms used below (dim 1, two-sided, j(z) = |z|**-(1+2s)):

    L(r, R) = 2 * Int_r^R tau**-(1+2s) dtau = (2/(2s)) * (r**-2s - R**-2s)
    m(r)    = 2 * Int_0^r tau**-2s dtau     = (2/(1-2s)) * r**(1-2s)   (2s < 1)
    TV(r,R) = 2 * (1+2s) * Int_r^R tau**-(2+2s) dtau = 2 * (r**-(1+2s) - R**-(1+2s))

At 2s = 1/2: L(r, R) = 4 (1/sqrt(r) - 1/sqrt(R)), m(r) = 4 sqrt(r).

Cone (half angle pi/8, level 1 on (0, 1], dim 2): angular mass pi/2, so
L(r, R) = (pi/2) log(min(R,1)/r) and m(r) = (pi/2) r for r <= 1.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlreg.kernels import (
    OscOrderTerm,
    PowerTerm,
    RayProfile,
    build_kernel,
    cone_kernel,
    fractional_kernel,
    sin_log_kernel,
)
from nlreg.quadrature import (
    DivergingMomentError,
    IntegralResult,
    QuadConfig,
    adaptive,
    annulus_integral,
    directional_tail,
    first_moment,
    profile_integral,
    scale_intensity,
    tail_integral,
    variation_estimate,
)

CFG = QuadConfig()


def frac_L(r, R, two_s=0.5):
    hi = 0.0 if math.isinf(R) else R**-two_s
    return (2.0 / two_s) * (r**-two_s - hi)


def frac_m(r, two_s=0.5):
    return (2.0 / (1.0 - two_s)) * r ** (1.0 - two_s)


def check_invariant(res: IntegralResult):
    if res.converged:
        assert res.error_estimate <= 1.01 * max(
            CFG.rel_tol * abs(res.value), CFG.abs_tol
        )


def test_config_defaults():
    assert CFG.rel_tol == 1e-8
    assert CFG.abs_tol == 1e-12
    assert CFG.max_subdivisions == 1 << 20
    assert CFG.split_radius == 1.0


def test_engine_polynomial_and_sine():
    res = adaptive(lambda x: x**2, 0.0, 1.0, CFG)
    assert res.converged
    assert res.value == pytest.approx(1.0 / 3.0, rel=1e-12)
    res = adaptive(np.sin, 0.0, math.pi, CFG)
    assert res.value == pytest.approx(2.0, rel=1e-12)
    check_invariant(res)


def test_engine_kink_with_breakpoint():
    f = lambda x: np.abs(x - 1.0 / 3.0)
    exact = (1.0 / 3.0) ** 2 / 2.0 + (2.0 / 3.0) ** 2 / 2.0
    res = adaptive(f, 0.0, 1.0, CFG, breakpoints=(1.0 / 3.0,))
    assert res.converged
    assert res.value == pytest.approx(exact, rel=1e-12)


def test_fractional_closed_forms_are_exact():
    spec = fractional_kernel(0.5)
    for r, R, want in [
        (0.25, 1.0, 4.0),
        (0.5, 2.0, frac_L(0.5, 2.0)),
        (1.0, math.inf, 4.0),
    ]:
        res = annulus_integral(spec, r, R, CFG)
        assert res.value == pytest.approx(want, rel=1e-14)
        assert res.error_estimate == 0.0
        assert res.evaluations == 0
        assert res.converged
    m = first_moment(spec, 0.25, CFG)
    assert m.value == pytest.approx(2.0, rel=1e-14)
    assert first_moment(spec, 1.0, CFG).value == pytest.approx(4.0, rel=1e-14)
    li = scale_intensity(spec, 1.0, CFG)
    assert li.value == pytest.approx(8.0, rel=1e-14)


def test_adaptive_route_matches_exact_route():
    # same integrand, closed-form path disabled: the engine must agree
    profile = fractional_kernel(0.5).ray_positive()
    for k in range(1, 13):
        r = 2.0**-k
        res = profile_integral(profile, 0.0, r, 1.0, CFG, allow_exact=False)
        assert res.converged
        assert res.evaluations > 0
        assert res.value == pytest.approx(0.5 * frac_L(r, 1.0), rel=1e-6)
        check_invariant(res)
    tail = profile_integral(profile, 0.0, 0.25, math.inf, CFG, allow_exact=False)
    assert tail.value == pytest.approx(0.5 * frac_L(0.25, math.inf), rel=1e-6)


def test_log_power_branch():
    profile = RayProfile((PowerTerm(3.0, -1.0, 0.1, 10.0),))
    res = profile_integral(profile, 0.0, 0.01, 20.0, CFG)
    assert res.value == pytest.approx(3.0 * math.log(100.0), rel=1e-14)


def test_sin_log_annulus_oracle():
    # 2 Int_r^1 (1 - sin log tau)/tau dtau = 2 (-log r + 1 - cos log r)
    spec = sin_log_kernel()
    for r in (2.0**-10, 0.1):
        want = 2.0 * (-math.log(r) + 1.0 - math.cos(math.log(r)))
        res = annulus_integral(spec, r, 1.0, CFG)
        assert res.converged
        assert res.value == pytest.approx(want, rel=1e-7)
        check_invariant(res)
    # mass beyond the cutoff is zero
    assert annulus_integral(spec, 1.0, math.inf, CFG).value == 0.0


def test_additivity():
    spec = sin_log_kernel()
    r, mid, R = 0.01, 0.2, 1.0
    whole = annulus_integral(spec, r, R, CFG)
    parts = annulus_integral(spec, r, mid, CFG).value + annulus_integral(
        spec, mid, R, CFG
    ).value
    assert abs(whole.value - parts) <= 2.0 * CFG.rel_tol * whole.value + 2.0 * CFG.abs_tol


@given(st.floats(min_value=0.02, max_value=0.9))
@settings(max_examples=25, deadline=None)
def test_additivity_fractional_exact(mid):
    spec = fractional_kernel(0.5)
    whole = annulus_integral(spec, 0.01, 1.0, CFG).value
    parts = annulus_integral(spec, 0.01, mid, CFG).value + annulus_integral(
        spec, mid, 1.0, CFG
    ).value
    assert parts == pytest.approx(whole, rel=1e-12)


def test_scale_intensity_nonincreasing():
    frac = fractional_kernel(0.5)
    vals = [scale_intensity(frac, 2.0**-k, CFG).value for k in range(0, 10)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    slog = sin_log_kernel()
    vals = [scale_intensity(slog, 2.0**-k, CFG).value for k in range(0, 8)]
    assert all(a <= b * (1.0 + 1e-9) for a, b in zip(vals, vals[1:]))


def test_first_moment_divergence_sentinel():
    spec = fractional_kernel(1.0)
    with pytest.raises(DivergingMomentError):
        first_moment(spec, 0.5, CFG)


def test_first_moment_oscillatory_bounds():
    # integrand tau**(-(cos(1/tau)+4)/6) lies between tau**-5/6 and tau**-1/2;
    # phase below the resolution budget is bracketed, so the error estimate is
    # honest (and small against the total) but not at full precision
    spec = build_kernel(family="custom", dim=1, terms=(OscOrderTerm(1.0, 1.0 / 6.0, 4.0),))
    res = first_moment(spec, 1.0, CFG)
    assert 4.0 <= res.value <= 12.0
    assert res.error_estimate < 0.25 * res.value


def test_tail_integral_constant_data():
    spec = fractional_kernel(0.5)
    for rho in (0.25, 1.0, 4.0):
        res = tail_integral(1.0, 0.0, rho, spec, CFG)
        assert res.converged
        assert res.value == pytest.approx(frac_L(rho, math.inf), rel=1e-6)


def test_tail_integral_decaying_data():
    spec = fractional_kernel(0.5)
    u = lambda y: 1.0 / (1.0 + y**2)
    vals = [tail_integral(u, 0.3, rho, spec, CFG).value for rho in (0.5, 1.0, 2.0)]
    assert all(v > 0.0 for v in vals)
    assert vals[0] > vals[1] > vals[2]


def test_directional_tail():
    spec = fractional_kernel(0.5)
    res = directional_tail(spec, +1, 0.0, 0.25, 1.0, CFG)
    assert res.value == pytest.approx(2.0 / math.sqrt(0.25), rel=1e-6)
    res = directional_tail(spec, -1, 1.5, 0.5, 1.0, CFG)
    assert res.value == pytest.approx(2.0 / math.sqrt(0.5), rel=1e-6)


def test_variation_fractional_endpoint_difference():
    # monotone profile: total variation is the endpoint difference, exactly
    spec = fractional_kernel(0.5)
    for r, R in [(0.25, 1.0), (0.1, 0.5), (2.0**-12, 2.0**-4)]:
        res = variation_estimate(spec, r, R, CFG)
        want = 2.0 * (r**-1.5 - R**-1.5)
        assert res.value == pytest.approx(want, rel=1e-6)


def test_variation_additive_and_jump_at_cutoff():
    spec = sin_log_kernel()
    v_inner = variation_estimate(spec, 0.5, 1.0, CFG).value
    v_outer = variation_estimate(spec, 0.5, 2.0, CFG).value
    # the cutoff jump (level 1 - sin(0) = 1 at tau=1, both rays) enters only
    # once the annulus strictly contains it
    assert v_outer == pytest.approx(v_inner + 2.0, rel=1e-7)
    a = variation_estimate(spec, 0.1, 0.3, CFG).value
    b = variation_estimate(spec, 0.3, 0.9, CFG).value
    whole = variation_estimate(spec, 0.1, 0.9, CFG).value
    assert a + b == pytest.approx(whole, rel=1e-7)
    # net rise is a lower bound for the variation
    g = spec.ray_positive()
    assert whole >= 2.0 * (float(g.val(0.1)) - float(g.val(0.9))) - 1e-9


def test_cone_closed_forms():
    spec = cone_kernel()
    want_L = (math.pi / 2.0) * math.log(4.0)
    assert annulus_integral(spec, 0.25, 1.0, CFG).value == pytest.approx(want_L, rel=1e-12)
    assert annulus_integral(spec, 0.25, math.inf, CFG).value == pytest.approx(
        want_L, rel=1e-12
    )
    assert first_moment(spec, 0.5, CFG).value == pytest.approx(math.pi / 4.0, rel=1e-12)


def test_cone_variation_includes_boundary_rays():
    spec = cone_kernel()
    # gradient: (pi/2) Int_.25^1 2 tau**-3 tau dtau = 3 pi; boundary: 4 rays
    # with Int_.25^1 tau**-2 dtau = 3 each; cutoff jump at tau=1=R excluded
    res = variation_estimate(spec, 0.25, 1.0, CFG)
    assert res.value == pytest.approx(3.0 * math.pi + 12.0, rel=1e-9)
    # enlarging the annulus past the cutoff picks up the jump, weight pi/2
    res2 = variation_estimate(spec, 0.25, 2.0, CFG)
    assert res2.value == pytest.approx(3.5 * math.pi + 12.0, rel=1e-9)


def test_tabulated_kernel_mass():
    spec = build_kernel(
        family="custom",
        dim=1,
        table=((0.1, 1.0, 10.0), (100.0, 1.0, 0.01)),
    )
    # log-log linear through these nodes is exactly tau**-2
    assert annulus_integral(spec, 0.1, 10.0, CFG).value == pytest.approx(19.8, rel=1e-12)
    assert annulus_integral(spec, 0.2, 5.0, CFG).value == pytest.approx(9.6, rel=1e-12)


def test_power_pair_masses():
    # two rays with coefficients 1 and 2, exponent -1.5, no cutoff
    spec = build_kernel(
        family="asymmetric-pair",
        dim=1,
        lam=1.5,
        terms_pos=(PowerTerm(1.0, -1.5),),
        terms_neg=(PowerTerm(2.0, -1.5),),
    )
    res = annulus_integral(spec, 0.25, math.inf, CFG)
    assert res.value == pytest.approx(3.0 * 2.0 / math.sqrt(0.25), rel=1e-14)
    m = first_moment(spec, 1.0, CFG)
    assert m.value == pytest.approx(3.0 * 2.0, rel=1e-14)
