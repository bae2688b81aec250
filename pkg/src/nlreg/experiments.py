"""End-to-end verification harnesses for the solver.

Each harness solves (or receives) a discrete problem, measures the quantity
the corresponding estimate controls, and packages measured value, predicted
bound, slack, and verdict into a report.  Hypotheses are gated before any
conclusion is asserted: a scenario that fails its preconditions is refused
with the failed hypothesis named instead of producing a fail verdict.

Estimate conventions used throughout:

- the uniform bound controls ||u||_inf over the domain by
  ||f||_inf + ||u||_inf outside + ||u||_L2, with the L2 term droppable for
  symmetric kernels and nonpositive zero-order term; the harness reports
  both ratios and their spread across mesh refinements.
- the decay step promises v <= 1 - improvement on the shrunken ball once
  v <= 1 on the big ball, the operator bound holds weakly, and the kernel
  measure of {v <= 0} fills half the annulus.
- the modulus harness re-checks |u(x_i) - u(x_j)| <= omega(|x_i - x_j|)
  * c(f, u) pairwise, with omega built from the decay schedule.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math

import numpy as np

from .continuity import OscillationSchedule, build_modulus, k_tilde_bound
from .growth import GrowthParams
from .kernels import KernelSpec
from .quadrature import QuadConfig, annulus_integral, profile_integral
from .solver import (
    DiscreteFunction,
    ExteriorData,
    Mesh1D,
    assemble,
    build_mesh,
    residual,
    solve,
)


class HypothesisRefused(RuntimeError):
    """A precondition of the estimate under test failed; the message names it."""

    def __init__(self, hypothesis: str, detail: str = ""):
        self.hypothesis = hypothesis
        super().__init__(f"{hypothesis}" + (f": {detail}" if detail else ""))


def _digest(*parts) -> str:
    blob = "|".join(repr(p) for p in parts).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclasses.dataclass(frozen=True)
class VerificationReport:
    """Outcome of one estimate check.

    ``verdict`` is derived: pass iff measured <= predicted * (1 + slack).
    ``quantities`` keeps every measured number as (name, value) pairs, one
    CSV row each.
    """

    tag: str
    digest: str
    measured: float
    predicted: float
    slack: float
    verdict: str
    quantities: tuple

    def __post_init__(self):
        expected = "pass" if self.measured <= self.predicted * (1.0 + self.slack) else "fail"
        if self.verdict != expected:
            raise ValueError("verdict inconsistent with measured/predicted/slack")

    @property
    def margin(self) -> float:
        """Headroom before the slacked bound: negative once the check fails."""
        return self.predicted * (1.0 + self.slack) - self.measured

    def text(self) -> str:
        lines = [
            f"estimate:  {self.tag}",
            f"inputs:    {self.digest}",
            f"measured:  {self.measured!r}",
            f"predicted: {self.predicted!r}",
            f"slack:     {self.slack!r}",
            f"margin:    {self.margin!r}",
            f"verdict:   {self.verdict}",
        ]
        lines.extend(f"  {name} = {value!r}" for name, value in self.quantities)
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        rows = ["quantity,value"]
        rows.append(f"measured,{self.measured!r}")
        rows.append(f"predicted,{self.predicted!r}")
        rows.append(f"slack,{self.slack!r}")
        rows.extend(f"{name},{value!r}" for name, value in self.quantities)
        return "\n".join(rows) + "\n"


def _report(tag, digest, measured, predicted, slack, quantities) -> VerificationReport:
    verdict = "pass" if measured <= predicted * (1.0 + slack) else "fail"
    return VerificationReport(
        tag=tag, digest=digest, measured=float(measured), predicted=float(predicted),
        slack=float(slack), verdict=verdict, quantities=tuple(quantities),
    )


@dataclasses.dataclass(frozen=True)
class OscillationTrace:
    """Half peak-to-peak spread of nodal values over growing balls."""

    center: float
    pairs: tuple  # (radius, spread) with spread nondecreasing

    def __post_init__(self):
        spreads = [o for _, o in self.pairs]
        if any(o < 0.0 for o in spreads):
            raise ValueError("oscillation cannot be negative")
        if any(b < a - 1e-15 for a, b in zip(spreads, spreads[1:])):
            raise ValueError("oscillation must be nondecreasing in the radius")

    def csv(self) -> str:
        rows = ["r,oscillation"]
        rows.extend(f"{r!r},{o!r}" for r, o in self.pairs)
        return "\n".join(rows) + "\n"


def measure_oscillation(u: DiscreteFunction, x0: float, radii) -> OscillationTrace:
    """Nodal max minus min over balls around x0, halved, per radius."""
    mesh = u.mesh
    radii = sorted(float(r) for r in radii)
    if not radii or radii[0] < 0.0:
        raise ValueError("radii must be nonnegative")
    if x0 - radii[-1] < mesh.nodes[0] or x0 + radii[-1] > mesh.nodes[-1]:
        raise ValueError("largest ball leaves the meshed region")
    pairs = []
    for r in radii:
        sel = np.abs(mesh.nodes - x0) <= r + 1e-12 * max(1.0, abs(x0) + r)
        if not np.any(sel):
            pairs.append((r, 0.0))
            continue
        vals = u.values[sel]
        pairs.append((r, 0.5 * float(vals.max() - vals.min())))
    return OscillationTrace(center=float(x0), pairs=tuple(pairs))


# -- uniform bound ------------------------------------------------------------


def _l2_domain(mesh: Mesh1D, values: np.ndarray) -> float:
    lo = mesh.domain_lo
    acc = 0.0
    for k in range(mesh.domain_cells):
        va, vb = values[lo + k], values[lo + k + 1]
        acc += mesh.h * (va * va + va * vb + vb * vb) / 3.0
    return math.sqrt(acc)


def _sup_outside(mesh: Mesh1D, values: np.ndarray, g: ExteriorData) -> float:
    collar = float(np.max(np.abs(values[mesh.collar_idx]), initial=0.0))
    return max(collar, g.sup())


def random_bounded_f(seed: int):
    """Deterministic smooth test datum with values in [-1, 1]-ish range."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, size=6)
    b = rng.uniform(-1.0, 1.0, size=6)

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, a[0])
        for m in range(1, 6):
            out = out + (a[m] * np.cos(m * math.pi * x) + b[m] * np.sin(m * math.pi * x)) / m
        return out

    return f


def verify_boundedness(
    kernel: KernelSpec,
    mesh: Mesh1D,
    f=0.0,
    w=None,
    g=0.0,
    refinements: int = 3,
    samples: int = 1,
    seed: int = 0,
    slack: float = 0.10,
    cfg: QuadConfig | None = None,
) -> VerificationReport:
    """Measure the uniform-bound constant and its stability under refinement.

    Solves on ``refinements`` successive halvings of the mesh; with
    ``samples`` > 1 the datum f is replaced by that many seeded random
    bounded draws and the per-mesh constant is their worst ratio.  The
    verdict checks that the constant moves by at most ``slack`` relative
    across the meshes.  Raises :class:`HypothesisRefused` when the
    zero-order term breaks the solvability comparison with the kernel mass.
    """
    cfg = cfg or QuadConfig()
    probe = assemble(kernel, mesh, w=w, cfg=cfg)
    w_plus = float(np.max(probe.w_values, initial=0.0))
    if w_plus > 0.0:
        mass = annulus_integral(kernel, 2.0**-40, math.inf, cfg).value
        if kernel.lam * w_plus >= mass:
            raise HypothesisRefused(
                "solvability comparison",
                f"lam * sup W+ = {kernel.lam * w_plus!r} is not below the "
                f"kernel mass lower bound {mass!r}",
            )
    reduced_valid = kernel.is_symmetric() and w_plus <= 0.0

    data = [f] if samples <= 1 else [random_bounded_f(seed + 17 * i) for i in range(samples)]
    quantities = []
    per_mesh_full = []
    for level in range(refinements):
        m = build_mesh(mesh.a, mesh.b, mesh.collar, mesh.h / 2**level)
        system = probe if level == 0 else assemble(kernel, m, w=w, cfg=cfg)
        worst_full = 0.0
        worst_reduced = 0.0
        share = 0.0
        for fk in data:
            u = solve(system, f=fk, g=g)
            num = float(np.max(np.abs(u.values[m.interior]), initial=0.0))
            f_vals = fk(m.nodes[m.interior]) if callable(fk) else np.full(m.interior.size, fk)
            f_sup = float(np.max(np.abs(f_vals), initial=0.0))
            out_sup = _sup_outside(m, u.values, u.exterior)
            l2 = _l2_domain(m, u.values)
            denom_full = f_sup + out_sup + l2
            denom_red = f_sup + out_sup
            full = 0.0 if num == 0.0 else (math.inf if denom_full == 0.0 else num / denom_full)
            red = 0.0 if num == 0.0 else (math.inf if denom_red == 0.0 else num / denom_red)
            worst_full = max(worst_full, full)
            worst_reduced = max(worst_reduced, red)
            share = max(share, 0.0 if denom_red == 0.0 else l2 / denom_red)
        label = f"h=1/{round(1 / m.h)}" if m.h <= 1 else f"h={m.h!r}"
        quantities.append((f"C_full[{label}]", worst_full))
        quantities.append((f"C_reduced[{label}]", worst_reduced))
        quantities.append((f"l2_share[{label}]", share))
        per_mesh_full.append(worst_full)
    quantities.append(("reduced_estimate_valid", 1.0 if reduced_valid else 0.0))

    measured = max(per_mesh_full)
    predicted = min(per_mesh_full)
    return _report(
        "uniform-bound",
        _digest(kernel, mesh.a, mesh.b, mesh.collar, mesh.h, refinements, samples, seed),
        measured, predicted, slack, quantities,
    )


# -- decay step ---------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GrowthScenario:
    """Data producing the test function of one decay-step check.

    ``f`` and ``g`` feed the solve; ``r`` is the inner annulus radius the
    measure condition uses (the outer one is the ball radius of the check).
    """

    f: object
    g: object
    r: float
    center: float = 0.0


def _annulus_masses(kernel, mesh, values, center, r, R, cfg):
    """Kernel measure of the annulus and of its {v <= 0} part.

    Cells count fully when both endpoint values are <= 0 and by their
    zero-crossing fraction when the sign changes across the cell.
    """
    rp, rn = kernel.ray_positive(), kernel.ray_negative()
    total = 0.0
    negative = 0.0
    for k in range(mesh.nodes.size - 1):
        xl, xr = mesh.nodes[k], mesh.nodes[k + 1]
        va, vb = values[k], values[k + 1]
        if va <= 0.0 and vb <= 0.0:
            frac = 1.0
        elif va > 0.0 and vb > 0.0:
            frac = 0.0
        else:  # linear sign change: the nonpositive side of the crossing
            t = va / (va - vb)
            frac = t if va <= 0.0 else 1.0 - t
        for lo, hi, ray in ((xl - center, xr - center, rp), (center - xr, center - xl, rn)):
            # overlap of [lo, hi] (signed, this side positive) with [r, R]
            a, b = max(lo, r), min(hi, R)
            if b <= a:
                continue
            mass = profile_integral(ray, 0.0, a, b, cfg).value
            total += mass
            negative += frac * mass
    return total, negative


def verify_growth(
    kernel: KernelSpec,
    params: GrowthParams,
    R: float,
    scenario: GrowthScenario,
    mesh: Mesh1D,
    cfg: QuadConfig | None = None,
) -> VerificationReport:
    """Check the decay step on a manufactured scenario.

    Gates all three hypotheses before asserting the conclusion: the
    solution stays <= 1 on the ball, the weak operator bound holds at the
    decay threshold, and the kernel measure of the nonpositive set fills
    half the annulus.  A failed gate raises :class:`HypothesisRefused`
    naming it.  The conclusion is asserted with additive slack of five
    times the measured interpolation error.
    """
    cfg = cfg or QuadConfig()
    r = float(scenario.r)
    x0 = float(scenario.center)
    if not 0.0 < r < R:
        raise ValueError("need 0 < r < R")
    if x0 - R < mesh.nodes[0] or x0 + R > mesh.nodes[-1]:
        raise HypothesisRefused("annulus inside the meshed region",
                                f"ball of radius {R!r} leaves the mesh")

    system = assemble(kernel, mesh, cfg=cfg)
    v = solve(system, f=scenario.f, g=scenario.g)

    ball = np.abs(mesh.nodes - x0) <= R + 1e-12
    sup_ball = float(v.values[ball].max())
    if sup_ball > 1.0 + 1e-9:
        raise HypothesisRefused("v <= 1 on the ball",
                                f"nodal max {sup_ball!r} exceeds 1")

    h_R = params.threshold(R, kernel, cfg)
    in_ball = [i for i in mesh.interior if abs(mesh.nodes[i] - x0) <= R + 1e-12]
    defect = residual(system, v, f=h_R, nodes=in_ball).sub_defect
    if defect > 1e-9 * max(1.0, h_R):
        raise HypothesisRefused("weak operator bound",
                                f"defect {defect!r} above the threshold {h_R!r}")

    total, negative = _annulus_masses(kernel, mesh, v.values, x0, r, R, cfg)
    if negative < 0.5 * total:
        raise HypothesisRefused(
            "half-mass on the annulus",
            f"nonpositive share {negative!r} of {total!r} is below one half",
        )

    eta = params.ball_ratio
    core = np.abs(mesh.nodes - x0) <= eta * r + 1e-12
    measured = float(v.values[core].max())
    second = np.abs(np.diff(v.values, 2))
    interp_err = float(second.max()) / 8.0 if second.size else 0.0
    predicted = 1.0 - params.improvement
    slack = 5.0 * interp_err / predicted
    quantities = (
        ("sup_ball", sup_ball),
        ("operator_defect", defect),
        ("annulus_mass", total),
        ("nonpositive_mass", negative),
        ("nonpositive_share", negative / total if total else 0.0),
        ("conclusion_sup", measured),
        ("improvement", params.improvement),
        ("shrunken_radius", eta * r),
        ("interpolation_error", interp_err),
        ("raw_margin", predicted - measured),
    )
    return _report(
        "decay-step",
        _digest(kernel, mesh.h, R, r, x0),
        measured, predicted, slack, quantities,
    )


# -- modulus of continuity ----------------------------------------------------


def continuity_modulus(
    kernel: KernelSpec,
    params: GrowthParams,
    a_set: tuple,
    b_star: tuple,
    b_set: tuple,
    w_sup: float = 0.0,
    n_max: int = 24,
    cfg: QuadConfig | None = None,
):
    """Build the modulus attached to the nested sets A within B_* within B.

    Returns (modulus, schedule, coupling constant, starting radius); the
    starting radius is half of the smaller of the decay horizon and the
    distance from A to the complement of B_*.  ``params`` must carry a
    radii table deep enough to step below the starting radius; for the
    stock kernels a table of 16 entries suffices.
    """
    (a_lo, a_hi), (s_lo, s_hi), (b_lo, b_hi) = a_set, b_star, b_set
    if not (b_lo < s_lo < a_lo < a_hi < s_hi < b_hi):
        raise ValueError("need strictly nested intervals A within B_* within B")
    k_tilde = k_tilde_bound(kernel, b_star, b_set, w_sup=w_sup, cfg=cfg)
    dist = min(a_lo - s_lo, s_hi - a_hi)
    r_star = 0.5 * min(params.R0, dist)
    omega, schedule = build_modulus(params, k_tilde, r_star, kernel, n_max=n_max, cfg=cfg)
    return omega, schedule, k_tilde, r_star


def _tail_coupling(kernel, mesh, u, b_star, b_set, cfg) -> float:
    """Bound on the far contribution: sup of |u| beyond B times the kernel
    mass reaching from B_* past B."""
    outside = (mesh.nodes < b_set[0]) | (mesh.nodes > b_set[1])
    sup_out = float(np.max(np.abs(u.values[outside]), initial=0.0))
    sup_out = max(sup_out, u.exterior.sup())
    gap = min(b_star[0] - b_set[0], b_set[1] - b_star[1])
    if gap <= 0.0:
        raise ValueError("B_* must sit strictly inside B")
    mass = annulus_integral(kernel, gap, math.inf, cfg or QuadConfig()).value
    return sup_out * mass


def verify_continuity(
    u: DiscreteFunction,
    f,
    kernel: KernelSpec,
    a_set: tuple,
    b_star: tuple,
    b_set: tuple,
    params: GrowthParams,
    w_sup: float = 0.0,
    cfg: QuadConfig | None = None,
) -> VerificationReport:
    """Pairwise modulus check over the nodes of A.

    measured is the worst ratio |u_i - u_j| / (omega(|x_i - x_j|) * c(f, u))
    over node pairs in A; the bound predicts 1 with no slack.  c(f, u) sums
    the sup of |u| over B, the sup of |f| over B_*, and the far coupling.
    """
    cfg = cfg or QuadConfig()
    mesh = u.mesh
    if b_set[0] < mesh.nodes[0] or b_set[1] > mesh.nodes[-1]:
        raise ValueError("B must stay within the meshed region")
    omega, schedule, k_tilde, r_star = continuity_modulus(
        kernel, params, a_set, b_star, b_set, w_sup=w_sup, cfg=cfg)

    in_b = (mesh.nodes >= b_set[0]) & (mesh.nodes <= b_set[1])
    sup_u_b = float(np.max(np.abs(u.values[in_b]), initial=0.0))
    in_star = (mesh.nodes >= b_star[0]) & (mesh.nodes <= b_star[1])
    if callable(f):
        f_vals = np.abs(f(mesh.nodes[in_star]))
        sup_f = float(np.max(f_vals, initial=0.0))
    else:
        sup_f = abs(float(f))
    c_fu = sup_u_b + sup_f + _tail_coupling(kernel, mesh, u, b_star, b_set, cfg)

    sel = np.nonzero((mesh.nodes > a_set[0]) & (mesh.nodes < a_set[1]))[0]
    worst = 0.0
    worst_pair = (math.nan, math.nan)
    for p, i in enumerate(sel):
        for j in sel[p + 1:]:
            gap = abs(mesh.nodes[j] - mesh.nodes[i])
            bound = omega(gap) * c_fu
            ratio = abs(u.values[j] - u.values[i]) / bound if bound > 0.0 else math.inf
            if ratio > worst:
                worst = ratio
                worst_pair = (float(mesh.nodes[i]), float(mesh.nodes[j]))
    quantities = (
        ("k_tilde", k_tilde),
        ("r_star", r_star),
        ("c_fu", c_fu),
        ("pairs_checked", sel.size * (sel.size - 1) / 2.0),
        ("worst_pair_lo", worst_pair[0]),
        ("worst_pair_hi", worst_pair[1]),
        ("schedule_radii", float(len(schedule.radii))),
    )
    return _report(
        "modulus-of-continuity",
        _digest(kernel, mesh.h, a_set, b_star, b_set, w_sup),
        worst, 1.0, 0.0, quantities,
    )
