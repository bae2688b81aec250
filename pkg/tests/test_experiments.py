"""Verification-harness tests.

Scenario oracles:

- uniform bound on the 2s = 1 kernel, f = 1, Omega = (-1, 1): the measured
  constant C_full sits near 0.233 and moves by under 0.2% between h = 1/32
  and h = 1/128 (frozen by running the solver refinement study directly).
- decay-step scenario: f = 0 with exterior -1 out to +-2.5 and +1 beyond;
  every annulus node carries -1, so the nonpositive share is exactly 1 and
  the kernel-mass total matches the closed-form annulus integral.
- the modulus bound on the 2s = 0.5 solve is dominated by the data branch
  g = 2*k_tilde/h(r_0) ~ 6.9e3, so the pairwise ratio passes with margin
  near 1; scale invariance of the ratio is exact by construction.
"""

import math

import numpy as np
import pytest

from nlreg.conditions import run_all
from nlreg.experiments import (
    GrowthScenario,
    HypothesisRefused,
    OscillationTrace,
    VerificationReport,
    continuity_modulus,
    measure_oscillation,
    random_bounded_f,
    verify_boundedness,
    verify_continuity,
    verify_growth,
)
from nlreg.growth import growth_params
from nlreg.kernels import build_kernel, fractional_kernel
from nlreg.quadrature import QuadConfig, annulus_integral
from nlreg.solver import (
    DiscreteFunction,
    ExteriorData,
    assemble,
    build_mesh,
    solve,
)

K1 = fractional_kernel(two_s=1.0)
K05 = fractional_kernel(two_s=0.5)


@pytest.fixture(scope="module")
def params05():
    return growth_params(K05, run_all(K05), radii_count=16)


# -- report type --------------------------------------------------------------


def test_report_verdict_is_derived():
    with pytest.raises(ValueError, match="verdict"):
        VerificationReport(
            tag="t", digest="d", measured=2.0, predicted=1.0, slack=0.0,
            verdict="pass", quantities=(),
        )


def test_report_text_and_csv_carry_quantities():
    rep = VerificationReport(
        tag="t", digest="abc", measured=1.0, predicted=2.0, slack=0.5,
        verdict="pass", quantities=(("alpha", 3.0),),
    )
    assert "alpha = 3.0" in rep.text()
    assert "alpha,3.0" in rep.csv()
    assert rep.margin == 2.0 * 1.5 - 1.0


# -- uniform bound ------------------------------------------------------------


def test_boundedness_constant_stable_under_refinement():
    mesh = build_mesh(-1.0, 1.0, 0.5, 1 / 32)
    rep = verify_boundedness(K1, mesh, f=1.0, refinements=3)
    assert rep.verdict == "pass"
    # frozen study: drift well under the 10% slack
    assert rep.measured <= rep.predicted * 1.01
    assert 0.2 < rep.measured < 0.3


def test_boundedness_trivial_data_passes_with_zero_ratio():
    mesh = build_mesh(-1.0, 1.0, 0.5, 1 / 16)
    rep = verify_boundedness(K1, mesh, f=0.0, g=0.0, refinements=2)
    assert rep.verdict == "pass"
    assert rep.measured == 0.0


def test_boundedness_reduced_ratio_identity():
    # C_red / C_full = 1 + l2_share, per mesh, by construction
    mesh = build_mesh(-1.0, 1.0, 0.5, 1 / 32)
    q = dict(verify_boundedness(K1, mesh, f=1.0, refinements=2).quantities)
    for label in ("h=1/32", "h=1/64"):
        lhs = q[f"C_reduced[{label}]"] / q[f"C_full[{label}]"]
        assert lhs == pytest.approx(1.0 + q[f"l2_share[{label}]"], rel=1e-12)
    assert q["reduced_estimate_valid"] == 1.0


def test_boundedness_random_samples_deterministic():
    mesh = build_mesh(-1.0, 1.0, 0.5, 1 / 16)
    a = verify_boundedness(K1, mesh, refinements=2, samples=3, seed=7)
    b = verify_boundedness(K1, mesh, refinements=2, samples=3, seed=7)
    assert a.measured == b.measured
    assert a.digest == b.digest
    f = random_bounded_f(3)
    assert np.array_equal(f(np.linspace(-1, 1, 9)), random_bounded_f(3)(np.linspace(-1, 1, 9)))


def test_boundedness_refuses_oversized_zero_order_term():
    # mass of j = |z|^{-1/2} on (0, 1] both sides is 4; w = 5 breaks the
    # comparison and must be refused before any solve
    from nlreg.kernels import PowerTerm

    k = build_kernel(
        family="custom", dim=1, lam=1.0,
        terms=(PowerTerm(1.0, -0.5, 0.0, 1.0),), gamma_hint=0.5,
    )
    mesh = build_mesh(-1.0, 1.0, 0.5, 1 / 16)
    with pytest.raises(HypothesisRefused, match="solvability"):
        verify_boundedness(k, mesh, f=1.0, w=5.0, refinements=1)


def test_boundedness_fail_path_with_zero_slack():
    # the constant moves a little between meshes; zero slack flips the verdict
    mesh = build_mesh(-1.0, 1.0, 0.5, 1 / 16)
    rep = verify_boundedness(K1, mesh, f=1.0, refinements=2, slack=0.0)
    assert rep.verdict == "fail"
    assert rep.margin < 0.0


# -- oscillation trace --------------------------------------------------------


def test_oscillation_of_linear_function_equals_radius():
    mesh = build_mesh(-1.0, 1.0, 1.0, 1 / 16)
    u = DiscreteFunction(mesh, mesh.nodes.copy(), ExteriorData.constant(0.0))
    tr = measure_oscillation(u, 0.0, [0.25, 0.5, 1.0])
    for r, o in tr.pairs:
        assert o == pytest.approx(r, abs=1e-15)


def test_oscillation_of_constant_is_zero():
    mesh = build_mesh(-1.0, 1.0, 1.0, 1 / 8)
    u = DiscreteFunction(mesh, np.full_like(mesh.nodes, 3.0), ExteriorData.constant(3.0))
    tr = measure_oscillation(u, 0.0, [0.5, 1.5])
    assert all(o == 0.0 for _, o in tr.pairs)


def test_oscillation_monotone_and_csv():
    mesh = build_mesh(-1.0, 1.0, 1.0, 1 / 16)
    rng = np.random.default_rng(1)
    u = DiscreteFunction(mesh, rng.normal(size=mesh.nodes.size), ExteriorData.constant(0.0))
    tr = measure_oscillation(u, 0.25, [0.1, 0.3, 0.7, 1.2])
    spreads = [o for _, o in tr.pairs]
    assert spreads == sorted(spreads)
    assert tr.csv().startswith("r,oscillation\n")


def test_oscillation_rejects_ball_leaving_mesh():
    mesh = build_mesh(-1.0, 1.0, 1.0, 1 / 8)
    u = DiscreteFunction(mesh, np.zeros(mesh.nodes.size), ExteriorData.constant(0.0))
    with pytest.raises(ValueError, match="meshed region"):
        measure_oscillation(u, 0.0, [2.5])


def test_oscillation_trace_invariants_enforced():
    with pytest.raises(ValueError, match="negative"):
        OscillationTrace(center=0.0, pairs=((0.5, -1.0),))
    with pytest.raises(ValueError, match="nondecreasing"):
        OscillationTrace(center=0.0, pairs=((0.5, 1.0), (1.0, 0.5)))


# -- decay step ---------------------------------------------------------------


def scenario():
    g = ExteriorData(breaks=(-2.5, 2.5), values=(1.0, -1.0, 1.0))
    return GrowthScenario(f=0.0, g=g, r=1.05)


def test_growth_scenario_passes_all_gates(params05):
    mesh = build_mesh(-1.0, 1.0, 1.0, 1 / 16)
    rep = verify_growth(K05, params05, 1.95, scenario(), mesh)
    assert rep.verdict == "pass"
    q = dict(rep.quantities)
    assert q["sup_ball"] <= 1.0
    assert q["nonpositive_share"] == 1.0
    assert q["conclusion_sup"] <= 1.0 - params05.improvement
    assert q["raw_margin"] > 0.5


def test_growth_annulus_mass_matches_closed_form(params05):
    mesh = build_mesh(-1.0, 1.0, 1.0, 1 / 16)
    rep = verify_growth(K05, params05, 1.95, scenario(), mesh)
    q = dict(rep.quantities)
    ref = annulus_integral(K05, 1.05, 1.95, QuadConfig()).value
    assert q["annulus_mass"] == pytest.approx(ref, rel=1e-12)


def test_growth_refuses_when_solution_exceeds_one(params05):
    g = ExteriorData(breaks=(-2.5, 2.5), values=(1.0, 2.0, 1.0))
    mesh = build_mesh(-1.0, 1.0, 1.0, 1 / 16)
    with pytest.raises(HypothesisRefused, match="v <= 1 on the ball"):
        verify_growth(K05, params05, 1.95, GrowthScenario(f=0.0, g=g, r=1.05), mesh)


def test_growth_refuses_on_half_mass_even_when_conclusion_would_hold(params05):
    # v ~ 0.9 everywhere satisfies the conclusion, but the measure gate
    # fails first: no conclusion may be asserted from unmet hypotheses
    g = ExteriorData(breaks=(-2.5, 2.5), values=(1.0, 0.9, 1.0))
    mesh = build_mesh(-1.0, 1.0, 1.0, 1 / 16)
    with pytest.raises(HypothesisRefused, match="half-mass"):
        verify_growth(K05, params05, 1.95, GrowthScenario(f=0.0, g=g, r=1.05), mesh)


def test_growth_refuses_annulus_outside_mesh(params05):
    mesh = build_mesh(-1.0, 1.0, 0.5, 1 / 16)
    with pytest.raises(HypothesisRefused, match="meshed region"):
        verify_growth(K05, params05, 1.95, scenario(), mesh)


def test_growth_margin_nonincreasing_under_refinement(params05):
    margins = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        mesh = build_mesh(-1.0, 1.0, 1.0, h)
        rep = verify_growth(K05, params05, 1.95, scenario(), mesh)
        assert rep.verdict == "pass"
        margins.append(dict(rep.quantities)["raw_margin"])
    assert margins[0] >= margins[1] >= margins[2]
    assert margins[0] - margins[2] < 0.01  # converging, not collapsing


def test_growth_interpolation_error_shrinks(params05):
    errs = []
    for h in (1 / 16, 1 / 64):
        mesh = build_mesh(-1.0, 1.0, 1.0, h)
        rep = verify_growth(K05, params05, 1.95, scenario(), mesh)
        errs.append(dict(rep.quantities)["interpolation_error"])
    assert errs[1] < errs[0]


# -- modulus of continuity ----------------------------------------------------

SETS = ((-0.25, 0.25), (-0.5, 0.5), (-0.75, 0.75))


def solved_u(h=1 / 64):
    mesh = build_mesh(-1.0, 1.0, 0.5, h)
    return solve(assemble(K05, mesh), f=1.0, g=0.0)


def test_continuity_pass_with_large_margin(params05):
    u = solved_u()
    rep = verify_continuity(u, 1.0, K05, *SETS, params05)
    assert rep.verdict == "pass"
    assert rep.measured < 1e-3
    assert rep.margin > 0.99


def test_continuity_modulus_pins_zero_and_caps(params05):
    omega, schedule, k_tilde, r_star = continuity_modulus(K05, params05, *SETS)
    assert omega(0.0) == 0.0
    assert r_star == 0.125
    assert k_tilde >= max(1.0, K05.lam)
    # beyond the last schedule radius the modulus is flat
    assert omega(0.5) == omega(10.0)
    assert len(schedule.radii) >= 2


def test_continuity_ratio_scale_invariant(params05):
    u = solved_u(1 / 32)
    rep = verify_continuity(u, 1.0, K05, *SETS, params05)
    t = 37.5
    ut = DiscreteFunction(u.mesh, t * u.values, u.exterior)
    rept = verify_continuity(ut, t, K05, *SETS, params05)
    assert rept.measured == pytest.approx(rep.measured, rel=1e-10)
    assert rept.verdict == rep.verdict


def test_continuity_schedule_recomputation(params05):
    _, schedule, _, _ = continuity_modulus(K05, params05, *SETS)
    hs = [params05.threshold(r, K05) for r in schedule.radii]
    kappa = schedule.kappa
    g = [0.0] + [
        2.0 * schedule.k_tilde * max(kappa ** (i - 1) / hs[n - i] for i in range(1, n + 1))
        for n in range(1, len(schedule.radii))
    ]
    gt = [max(kappa**n, gn) for n, gn in enumerate(g)]
    for n in range(len(gt) - 2, -1, -1):
        gt[n] = max(gt[n], gt[n + 1])
    for a, b in zip(gt, schedule.g_tilde):
        assert abs(a - b) <= 1e-12 * max(1.0, abs(b))


def test_continuity_single_node_region_is_vacuous(params05):
    u = solved_u(1 / 32)
    h = u.mesh.h
    rep = verify_continuity(u, 1.0, K05, (-0.4 * h, 0.4 * h), *SETS[1:], params05)
    assert rep.verdict == "pass"
    assert rep.measured == 0.0


def test_continuity_requires_nesting(params05):
    u = solved_u(1 / 32)
    with pytest.raises(ValueError, match="nested"):
        verify_continuity(u, 1.0, K05, (-0.6, 0.6), (-0.5, 0.5), (-0.75, 0.75), params05)


def test_continuity_region_must_fit_mesh(params05):
    u = solved_u(1 / 32)
    with pytest.raises(ValueError, match="meshed region"):
        verify_continuity(u, 1.0, K05, (-0.25, 0.25), (-0.5, 0.5), (-3.0, 3.0), params05)
