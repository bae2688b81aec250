"""Constant machinery behind the dyadic growth argument.

Everything here turns certified kernel conditions into explicit numbers:
a sequence of admissible radii, a smooth bump with known C1 norm, the
amplitude/improvement pair, and the threshold function that limits how large
the operator may act on a test function before the pointwise improvement
fails.  The two hypothesis routes (sampled band-ratio bound vs variation
control) assemble different constants but share the radii machinery.

Fixed bump: beta(s) = 1/(1 + s^2).  It is smooth, strictly decreasing,
beta(0) = 1, and its radial gradient 2s/(1+s^2)^2 is maximal at s = 1/sqrt(3)
with value 3*sqrt(3)/8 < 1, so the C1 bound doubles to bump_norm = 2.
"""

from __future__ import annotations

import dataclasses
import math

from nlreg.conditions import (
    ConditionReport,
    VERDICT_PASS,
    check_integrability,
    check_origin_divergence,
)
from nlreg.kernels import KernelSpec
from nlreg.quadrature import (
    DivergingMomentError,
    QuadConfig,
    annulus_integral,
    first_moment,
    scale_intensity,
)


class GrowthError(RuntimeError):
    """Base error for the growth-constant machinery."""


class RadiusSearchError(GrowthError):
    """No admissible radius in range, or the prepared sequence ran out."""


class UnsupportedKernelError(GrowthError):
    """The certified conditions do not cover either hypothesis case."""


# ---------------------------------------------------------------------------
# bump function


@dataclasses.dataclass(frozen=True)
class Bump:
    """The fixed radial bump profile beta(s) = 1/(1+s^2)."""

    sup: float = 1.0
    grad_sup: float = 3.0 * math.sqrt(3.0) / 8.0

    def __call__(self, s):
        return 1.0 / (1.0 + s * s)

    @property
    def at_half(self) -> float:
        return 0.8

    @property
    def at_one(self) -> float:
        return 0.5


def bump_constants() -> tuple[Bump, float]:
    """The bump descriptor and its doubled C1 bound (exactly 2)."""
    bump = Bump()
    return bump, 2.0 * max(bump.sup, bump.grad_sup)


# ---------------------------------------------------------------------------
# growth parameters


@dataclasses.dataclass(frozen=True)
class GrowthParams:
    """All constants of the growth step, plus the admissible radii and the
    tabulated threshold function.

    ``improvement`` is the pointwise gain (v drops below 1 - improvement on
    the shrunken ball), ``ball_ratio`` the shrink factor of that ball,
    ``amplitude`` the bump scaling, ``dip`` the lowered level the scaled bump
    reaches, ``annulus_ratio`` the inner-annulus fraction the case argument
    uses.  ``threshold_coef`` turns the scale intensity into the threshold:
    h(r) = threshold_coef * (m(r)/r + tail(r)).
    """

    alpha: float
    moment_bound: float
    annulus_ratio: float
    ball_ratio: float
    amplitude: float
    improvement: float
    dip: float
    bump_norm: float
    case: str
    case_constants: dict
    lam: float
    R0: float
    radii: tuple
    threshold_coef: float
    threshold_table: tuple

    def __post_init__(self):
        if not 0.0 < self.improvement < 1.0:
            raise GrowthError("improvement must lie in (0, 1)")
        if not 0.0 < self.dip < 2.0:
            raise GrowthError("dip must lie in (0, 2)")
        if not 0.0 < self.ball_ratio < 1.0:
            raise GrowthError("ball_ratio must lie in (0, 1)")
        if not 0.0 < self.annulus_ratio < 1.0:
            raise GrowthError("annulus_ratio must lie in (0, 1)")
        if not self.amplitude >= 1.0:
            raise GrowthError("amplitude must be >= 1")
        if any(b >= a for a, b in zip(self.radii, self.radii[1:])):
            raise GrowthError("radii must be strictly decreasing")

    def threshold(self, r: float, spec: KernelSpec, cfg: QuadConfig | None = None) -> float:
        """h(r): the largest operator bound the growth step tolerates."""
        return self.threshold_coef * scale_intensity(spec, r, cfg or QuadConfig()).value

    def table_csv(self) -> str:
        rows = ["r,h"]
        rows.extend(f"{r!r},{h!r}" for r, h in self.threshold_table)
        return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# admissible radii


def _admissible(spec: KernelSpec, r: float, moment_bound: float, cfg: QuadConfig) -> bool:
    m = first_moment(spec, r, cfg)
    band = annulus_integral(spec, r, 2.0 * r, cfg)
    if not band.value > 0.0:
        return False
    lhs = m.value - m.error_estimate
    rhs = moment_bound * r * (band.value + band.error_estimate)
    return lhs <= rhs * (1.0 + 1e-6)


def find_radii(
    spec: KernelSpec,
    moment_bound: float,
    count: int = 12,
    cfg: QuadConfig | None = None,
) -> tuple:
    """Strictly decreasing radii with m(r) <= moment_bound * r * L(r, 2r).

    Scans dyadic candidates from 1/2 down.  When a dyadic fails the octave
    below it is refined on a fixed log2 grid (eighths) and the shallowest
    admissible interior radius is kept; the landscape need not be monotone
    inside an octave, so a fixed grid replaces bisection.  A floor of 2^-40
    without a hit raises :class:`RadiusSearchError`.
    """
    cfg = cfg or QuadConfig()
    if check_origin_divergence(spec, cfg).verdict != VERDICT_PASS:
        raise UnsupportedKernelError(
            "admissible radii need unbounded small-jump intensity"
        )
    if check_integrability(spec, None, cfg).verdict != VERDICT_PASS:
        raise UnsupportedKernelError("admissible radii need an integrable gamma-moment")
    out = []
    k = 1
    while len(out) < count:
        if 2.0**-k < 2.0**-40:
            raise RadiusSearchError("no admissible radius above the 2^-40 floor")
        try:
            candidate = 2.0**-k
            if _admissible(spec, candidate, moment_bound, cfg):
                out.append(candidate)
            else:
                # refine inside the octave below the failing dyadic
                for eighth in range(1, 8):
                    r_mid = 2.0 ** -(k + eighth / 8.0)
                    if _admissible(spec, r_mid, moment_bound, cfg):
                        out.append(r_mid)
                        break
        except DivergingMomentError as exc:
            raise UnsupportedKernelError(
                "first moment diverges; no admissible radii exist"
            ) from exc
        k += 1
    return tuple(out)


def first_index(
    R: float,
    moment_bound: float,
    radii: tuple,
    ratio_grid: tuple,
    spec: KernelSpec,
    cfg: QuadConfig | None = None,
) -> int:
    """Smallest index k with radii[k] < R whose scale intensity is dominated
    by the annulus mass up to R, checked at every ratio on the grid:
    L(ratio * r_k) <= 2 (moment_bound / ratio + 1) L(r_k, R).
    """
    cfg = cfg or QuadConfig()
    for k, r in enumerate(radii):
        if not r < R:
            continue
        band = annulus_integral(spec, r, R, cfg).value
        ok = True
        for ratio in ratio_grid:
            lhs = scale_intensity(spec, ratio * r, cfg).value
            if lhs > 2.0 * (moment_bound / ratio + 1.0) * band * (1.0 + 1e-9):
                ok = False
                break
        if ok:
            return k
    raise RadiusSearchError("no radius in the sequence passes the intensity check")


def shrink_factor(moment_bound: float, variation_bound: float) -> float:
    """Largest annulus ratio the variation case tolerates, capped at 1/2.

    Solves (t*M/(1-t)) * (2*K/(1-t) + 2) = 1/4 for t by bisection (the left
    side is increasing in t), so the returned value satisfies the inequality
    with <=.
    """
    M, K = variation_bound, moment_bound

    def lhs(t: float) -> float:
        return (t * M / (1.0 - t)) * (2.0 * K / (1.0 - t) + 2.0)

    if lhs(0.5) <= 0.25:
        return 0.5
    lo, hi = 0.0, 0.5
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if lhs(mid) <= 0.25:
            lo = mid
        else:
            hi = mid
    return lo


def _report_map(condition_reports) -> dict:
    if isinstance(condition_reports, dict):
        return condition_reports
    out = {}
    for rep in condition_reports:
        if not isinstance(rep, ConditionReport):
            raise TypeError("condition_reports must hold ConditionReport values")
        out[rep.condition] = rep
    return out


def growth_params(
    spec: KernelSpec,
    condition_reports,
    R0: float = 1.0,
    cfg: QuadConfig | None = None,
    case: str | None = None,
    sigma: float | None = None,
    radii_count: int = 12,
) -> GrowthParams:
    """Assemble every growth constant from certified condition reports.

    ``case`` may force "doubling" or "variation" when both are certified
    (default prefers doubling: its constants are sharper).  ``sigma`` picks a
    specific certified band half-width from the doubling evidence grid.
    """
    cfg = cfg or QuadConfig()
    reports = _report_map(condition_reports)

    def passed(name: str) -> bool:
        rep = reports.get(name)
        return rep is not None and rep.verdict == VERDICT_PASS

    if not (passed("integrability") and passed("origin-divergence")):
        raise UnsupportedKernelError("integrability and origin divergence are required")
    if not passed("moment-order"):
        raise UnsupportedKernelError("a certified moment order is required")
    alpha = reports["moment-order"].constants["alpha"]
    if not alpha > 0.0:
        raise UnsupportedKernelError("moment order must be positive")

    if case is None:
        if passed("radial-doubling"):
            case = "doubling"
        elif passed("variation-control"):
            case = "variation"
        else:
            raise UnsupportedKernelError(
                "neither the band-ratio bound nor variation control is certified"
            )
    if case == "doubling" and not passed("radial-doubling"):
        raise UnsupportedKernelError("doubling case requested but not certified")
    if case == "variation" and not passed("variation-control"):
        raise UnsupportedKernelError("variation case requested but not certified")
    if case not in ("doubling", "variation"):
        raise ValueError(f"unknown case {case!r}")

    moment_bound = 2.0 * 8.0 / (2.0**alpha - 1.0)
    bump, bump_norm = bump_constants()
    lam = spec.lam

    if case == "doubling":
        rep = reports["radial-doubling"]
        if sigma is None:
            ratio = rep.constants["sigma"]
            c0 = rep.constants["c0"]
        else:
            grid = {s: c for s, c in rep.evidence}
            if sigma not in grid or not grid[sigma] > 0.0:
                raise UnsupportedKernelError(
                    f"sigma={sigma!r} is not a certified band half-width"
                )
            ratio, c0 = sigma, grid[sigma]
        annulus_ratio = ratio
        amplitude = max(
            1.0,
            (16.0 * lam**2 * bump_norm / c0) * (moment_bound / annulus_ratio + 1.0),
        )
        coef = c0 / (lam * 33.0 * (moment_bound / annulus_ratio + 1.0))
        case_constants = {"c0": c0, "sigma": ratio}
    else:
        rep = reports["variation-control"]
        M = rep.constants["M"]
        theta0 = shrink_factor(moment_bound, M)
        annulus_ratio = theta0
        amplitude = (
            32.0 * lam**2 * bump_norm * (moment_bound / annulus_ratio + 1.0)
        ) * (1.0 + 1e-6)
        coef = 1.0 / (lam * 33.0 * (moment_bound / annulus_ratio + 1.0))
        case_constants = {"M": M, "shrink0": theta0}

    improvement = (bump.at_half - bump.at_one) / amplitude
    dip = 1.0 + bump.at_one / amplitude
    radii = find_radii(spec, moment_bound, radii_count, cfg)
    table = tuple(
        (r, coef * scale_intensity(spec, r, cfg).value) for r in (R0,) + radii if r <= R0
    )
    return GrowthParams(
        alpha=alpha,
        moment_bound=moment_bound,
        annulus_ratio=annulus_ratio,
        ball_ratio=annulus_ratio / 2.0,
        amplitude=amplitude,
        improvement=improvement,
        dip=dip,
        bump_norm=bump_norm,
        case=case,
        case_constants=case_constants,
        lam=lam,
        R0=R0,
        radii=radii,
        threshold_coef=coef,
        threshold_table=table,
    )


def pick_r(
    R: float,
    v_inf: float,
    params: GrowthParams,
    spec: KernelSpec,
    cfg: QuadConfig | None = None,
    c: float = 0.0,
) -> float:
    """First admissible radius for the growth step at outer radius ``R``.

    Scans the prepared radii from the first feasible index up and returns the
    first r_k whose far-tail mass (plus the drift allowance c) is strictly
    dominated by the case fraction of the annulus mass L(r_k, R).
    """
    cfg = cfg or QuadConfig()
    if not 0.0 < R < params.R0:
        raise GrowthError("need 0 < R < R0")
    lam = params.lam
    grid = (1.0, 0.5, 0.25, params.annulus_ratio)
    start = first_index(R, params.moment_bound, params.radii, grid, spec, cfg)
    for r in params.radii[start:]:
        band = annulus_integral(spec, r, R, cfg).value
        far = annulus_integral(spec, R - r, math.inf, cfg).value
        if params.case == "doubling":
            c0 = params.case_constants["c0"]
            bound = c0 * band / (lam**2 * 4.0 * (v_inf + 2.0))
        else:
            bound = band / (lam**2 * 8.0 * (v_inf + 2.0))
        if c / lam + far < bound:
            return r
    raise RadiusSearchError("no prepared radius satisfies the tail inequality")
