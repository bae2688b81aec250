"""Kernel model: construction, evaluation, decomposition, serialization."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlreg.kernels import (
    KernelConfigError,
    OscOrderTerm,
    PowerTerm,
    SingularPointError,
    TableRangeError,
    TwoPointKernel,
    build_kernel,
    comparability_sample,
    cone_kernel,
    decompose,
    fractional_kernel,
    kernel_from_text,
    kernel_to_text,
    osc_order_pair_kernel,
    power_pair_kernel,
    sin_log_kernel,
)

ALL_STOCK = [
    fractional_kernel,
    power_pair_kernel,
    osc_order_pair_kernel,
    sin_log_kernel,
    cone_kernel,
]


def test_fractional_density_values():
    spec = fractional_kernel(0.5)
    assert float(spec.density(0.5)) == pytest.approx(0.5**-1.5, rel=1e-15)
    assert float(spec.density(-0.5)) == pytest.approx(0.5**-1.5, rel=1e-15)
    out = spec.density(np.array([0.25, -2.0]))
    assert out == pytest.approx([0.25**-1.5, 2.0**-1.5])


def test_singular_point_rejected():
    spec = fractional_kernel(0.5)
    with pytest.raises(SingularPointError):
        spec.density(0.0)
    with pytest.raises(SingularPointError):
        spec.density(np.array([0.5, 0.0]))


def test_sin_log_density():
    spec = sin_log_kernel()
    assert float(spec.density(1.0)) == pytest.approx(1.0)
    assert float(spec.density(1.5)) == 0.0  # beyond the cutoff
    wide = sin_log_kernel(cutoff=10.0)
    # level zero where sin(log tau) = 1
    tau = math.exp(math.pi / 2.0)
    assert float(wide.density(tau)) == pytest.approx(0.0, abs=1e-15)


def test_cone_density_and_geometry():
    spec = cone_kernel()
    assert spec.angular_mass() == pytest.approx(math.pi / 2.0)
    assert spec.boundary_ray_count() == 4
    assert float(spec.density(np.array([0.5, 0.0]))) == pytest.approx(4.0)
    assert float(spec.density(np.array([-0.5, 0.0]))) == pytest.approx(4.0)
    assert float(spec.density(np.array([0.0, 0.5]))) == 0.0
    # batch of displacement vectors
    zs = np.array([[0.5, 0.0], [0.0, 0.5]])
    assert spec.density(zs) == pytest.approx([4.0, 0.0])


def test_asymmetric_pair_decomposition():
    spec = power_pair_kernel()
    k = TwoPointKernel(spec)
    base = 0.5**-1.5
    ks, ka = decompose(k, 0.0, 0.5)
    assert float(ks) == pytest.approx(1.5 * base, rel=1e-14)
    assert float(ka) == pytest.approx(-0.5 * base, rel=1e-14)
    # swapping arguments flips the antisymmetric part
    ks2, ka2 = decompose(k, 0.5, 0.0)
    assert float(ks2) == pytest.approx(float(ks), rel=1e-14)
    assert float(ka2) == pytest.approx(-float(ka), rel=1e-14)


def test_two_point_kernel_modes():
    spec = power_pair_kernel()
    assert not TwoPointKernel(spec).is_symmetric()
    assert TwoPointKernel(spec, mode="symmetrized").is_symmetric()
    sym = TwoPointKernel(spec, mode="symmetrized")
    assert float(sym(0.0, 0.5)) == pytest.approx(1.5 * 0.5**-1.5)
    w = lambda x, y: np.full_like(np.asarray(x, dtype=float), 2.0)
    kw = TwoPointKernel(fractional_kernel(0.5), mode="user-weighted", weight=w)
    assert float(kw(0.0, 0.5)) == pytest.approx(2.0 * 0.5**-1.5)
    with pytest.raises(KernelConfigError):
        TwoPointKernel(spec, mode="user-weighted")
    with pytest.raises(KernelConfigError):
        TwoPointKernel(spec, mode="nope")


@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
@settings(max_examples=50, deadline=None)
def test_decompose_reassembles(x, y):
    if abs(y - x) < 1e-6:
        return
    k = TwoPointKernel(power_pair_kernel())
    ks, ka = decompose(k, x, y)
    assert float(ks + ka) == pytest.approx(float(k(x, y)), rel=1e-12, abs=1e-12)


def test_build_kernel_validation():
    with pytest.raises(KernelConfigError):
        build_kernel(family="nope", dim=1)
    with pytest.raises(KernelConfigError):
        build_kernel(family="fractional", dim=1, s=1.0)  # 2s = 2
    with pytest.raises(KernelConfigError):
        build_kernel(family="fractional", dim=1, s=0.5, gamma_hint=1.5)
    with pytest.raises(KernelConfigError):
        build_kernel(family="cone", dim=1, level=None)
    with pytest.raises(KernelConfigError):
        build_kernel(family="custom", dim=1)
    with pytest.raises(KernelConfigError):
        build_kernel(
            family="custom",
            dim=1,
            terms=(PowerTerm(1.0, -1.5),),
            table=((0.1, 1.0), (1.0, 1.0)),
        )
    with pytest.raises(KernelConfigError):
        build_kernel(family="asymmetric-pair", dim=1, terms_pos=(PowerTerm(1.0, -1.5),))
    with pytest.raises(KernelConfigError):
        build_kernel(family="fractional", dim=1, s=0.25, bogus=1)
    # gamma_hint right at 1 is allowed
    spec = build_kernel(family="fractional", dim=1, s=0.25, gamma_hint=0.99)
    assert spec.gamma_hint == 0.99


def test_cone_arcs_must_close_under_antipodes():
    with pytest.raises(KernelConfigError):
        build_kernel(
            family="cone",
            dim=2,
            level=None,
        )
    with pytest.raises(KernelConfigError):
        from nlreg.kernels import ConstantLevel

        build_kernel(
            family="cone",
            dim=2,
            level=ConstantLevel(1.0),
            arcs=[(0.3, 1.08)],  # missing the antipodal copy
        )
    from nlreg.kernels import ConstantLevel

    spec = build_kernel(
        family="cone",
        dim=2,
        level=ConstantLevel(1.0),
        arcs=[(0.3, 1.08), (math.pi + 0.3, math.pi + 1.08)],
    )
    assert spec.boundary_ray_count() == 4


def test_table_range_errors():
    spec = build_kernel(
        family="custom", dim=1, table=((0.1, 1.0, 10.0), (100.0, 1.0, 0.01))
    )
    assert spec.family == "radial"
    assert float(spec.density(1.0)) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(TableRangeError):
        spec.density(0.05)
    with pytest.raises(TableRangeError):
        spec.density(20.0)


def test_default_gamma():
    assert fractional_kernel(0.5).default_gamma() == pytest.approx(0.75)
    assert fractional_kernel(1.5).default_gamma() == 1.0
    assert osc_order_pair_kernel().default_gamma() == 0.99
    assert sin_log_kernel().default_gamma() == 0.75
    spec = build_kernel(family="fractional", dim=1, s=0.25, gamma_hint=0.6)
    assert spec.default_gamma() == 0.6


@pytest.mark.parametrize("maker", ALL_STOCK)
def test_config_round_trip(maker):
    spec = maker()
    text = kernel_to_text(spec)
    again = kernel_from_text(text)
    assert again == spec
    assert kernel_to_text(again) == text


def test_tabulated_round_trip():
    spec = build_kernel(
        family="custom", dim=1, table=((0.1, 1.0, 10.0), (100.0, 1.0, 0.01))
    )
    again = kernel_from_text(kernel_to_text(spec))
    assert again == spec


def test_comparability_exact_families():
    for maker in (fractional_kernel, sin_log_kernel, cone_kernel):
        rep = comparability_sample(maker(), n_pairs=2000, seed=1)
        assert rep["passed"], maker.__name__
        assert rep["ratio_min"] >= 1.0 - 1e-9
        assert rep["ratio_max"] <= 1.0 + 1e-9
    rep = comparability_sample(cone_kernel(), n_pairs=2000, seed=1)
    assert rep["skipped"] > 0  # off-cone pairs carry no mass on either side


def test_comparability_bounded_pair():
    rep = comparability_sample(power_pair_kernel(), n_pairs=4000, seed=2)
    assert rep["passed"]
    assert rep["ratio_min"] == pytest.approx(2.0 / 3.0, rel=1e-9)
    assert rep["ratio_max"] == pytest.approx(4.0 / 3.0, rel=1e-9)


def test_comparability_detects_degenerate_symmetric_part():
    # the oscillating pair's symmetric part vanishes too fast near tau = 1:
    # no constant multiple of it dominates the kernel, and the sampler says so
    rep = comparability_sample(osc_order_pair_kernel(), n_pairs=10_000, seed=3)
    assert not rep["passed"]
    assert rep["ratio_min"] < 0.01  # far below 1/lam = 0.5


def test_osc_pair_symmetric_dominates_antisymmetric():
    spec = osc_order_pair_kernel()
    tau = np.logspace(-6, 0, 200_001)
    ks = 0.5 * (spec.ray_positive().val(tau) + spec.ray_negative().val(tau))
    ka = 0.5 * (spec.ray_positive().val(tau) - spec.ray_negative().val(tau))
    assert np.min(ks - np.abs(ka)) >= -1e-12
