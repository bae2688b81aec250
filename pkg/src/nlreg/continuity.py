"""Modulus of continuity assembled from the oscillation-decay recursion.

The decay step: on a ball of radius R the oscillation of a bounded solution
either shrinks by the fixed factor kappa = 1 - improvement/2 or is already
dominated by the data term 2*k_tilde*c_fu/h(R).  Iterating from an anchor
radius R_star produces radii r_0 > r_1 > ... and decay levels; the modulus is
the continuous upper envelope of the resulting piecewise-constant bound,
linear between the computed radii and constant beyond r_1.

The radii collapse doubly exponentially (each step multiplies the depth by
roughly the square of the current exterior bound), so the prepared radii
table runs out after a handful of steps; the schedule is then truncated and
flagged incomplete, which the envelope construction tolerates: below the
deepest computed radius the modulus ramps linearly to zero, which still
dominates the (unknown) deeper levels because they only shrink.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from nlreg.growth import GrowthParams, RadiusSearchError, pick_r
from nlreg.kernels import KernelSpec
from nlreg.quadrature import QuadConfig, directional_tail


class ContinuityError(RuntimeError):
    """Invalid modulus construction input."""


# ---------------------------------------------------------------------------
# modulus


@dataclasses.dataclass(frozen=True)
class Modulus:
    """Piecewise-linear nondecreasing function through ``breakpoints``.

    The first breakpoint is pinned at (0, 0); evaluation interpolates
    linearly between breakpoints and is constant after the last one.
    """

    breakpoints: tuple

    def __post_init__(self):
        pts = tuple((float(t), float(w)) for t, w in self.breakpoints)
        object.__setattr__(self, "breakpoints", pts)
        if not pts or pts[0] != (0.0, 0.0):
            raise ContinuityError("breakpoints must start at (0, 0)")
        ts = [t for t, _ in pts]
        ws = [w for _, w in pts]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ContinuityError("breakpoint abscissae must increase strictly")
        if any(b < a for a, b in zip(ws, ws[1:])):
            raise ContinuityError("modulus values must be nondecreasing")
        if not all(map(math.isfinite, ts + ws)):
            raise ContinuityError("breakpoints must be finite")

    def __call__(self, t):
        arr = np.asarray(t, dtype=float)
        if np.any(arr < 0.0):
            raise ContinuityError("modulus arguments must be >= 0")
        ts = np.fromiter((p[0] for p in self.breakpoints), dtype=float)
        ws = np.fromiter((p[1] for p in self.breakpoints), dtype=float)
        out = np.interp(arr, ts, ws)
        return float(out) if arr.ndim == 0 else out

    def csv(self) -> str:
        rows = ["t,omega"]
        rows.extend(f"{t!r},{w!r}" for t, w in self.breakpoints)
        return "\n".join(rows) + "\n"


def eval_modulus(omega: Modulus, t):
    """Evaluate the modulus; exactly 0 at t = 0, constant beyond the last
    breakpoint, error on negative arguments."""
    return omega(t)


# ---------------------------------------------------------------------------
# oscillation schedule


@dataclasses.dataclass(frozen=True)
class OscillationSchedule:
    """Radii r_0 > r_1 > ... with their decay levels.

    g[n] = 2*k_tilde * max_{i=1..n} kappa^(i-1)/h(r_{n-i}) (zero at n = 0,
    where the max is empty); g_tilde[n] = max(kappa^n, g[n]) made
    nonincreasing by a running maximum over tails.  ``complete`` is False
    when the radius search gave out before the requested number of steps.
    """

    radii: tuple
    kappa: float
    g: tuple
    g_tilde: tuple
    k_tilde: float
    complete: bool

    def __post_init__(self):
        if not 0.5 < self.kappa < 1.0:
            raise ContinuityError("kappa must lie in (1/2, 1)")
        if any(b >= a for a, b in zip(self.radii, self.radii[1:])):
            raise ContinuityError("radii must decrease strictly")
        if not len(self.radii) == len(self.g) == len(self.g_tilde):
            raise ContinuityError("schedule columns must align")
        if any(b > a for a, b in zip(self.g_tilde, self.g_tilde[1:])):
            raise ContinuityError("g_tilde must be nonincreasing")

    def csv(self) -> str:
        rows = ["n,r,g,g_tilde"]
        rows.extend(
            f"{n},{r!r},{g!r},{gt!r}"
            for n, (r, g, gt) in enumerate(zip(self.radii, self.g, self.g_tilde))
        )
        return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# construction


def oscillation_step(
    osc: float,
    R: float,
    params: GrowthParams,
    k_tilde: float,
    c_fu: float,
    spec: KernelSpec,
    cfg: QuadConfig | None = None,
) -> tuple:
    """One decay step at outer radius R: (next radius, new oscillation bound).

    The next radius is ball_ratio times the admissible radius for exterior
    bound 2*h(R)/k_tilde; the bound is the larger of the decay branch
    kappa*osc and the data branch 2*k_tilde*c_fu/h(R).
    """
    cfg = cfg or QuadConfig()
    if osc < 0.0:
        raise ContinuityError("oscillation must be >= 0")
    if not c_fu > 0.0:
        raise ContinuityError("the data norm must be positive")
    if not k_tilde >= max(1.0, params.lam):
        raise ContinuityError("k_tilde must dominate max(1, lam)")
    h = params.threshold(R, spec, cfg)
    r = pick_r(R, 2.0 * h / k_tilde, params, spec, cfg)
    kappa = 1.0 - 0.5 * params.improvement
    return params.ball_ratio * r, max(kappa * osc, 2.0 * k_tilde * c_fu / h)


def build_modulus(
    params: GrowthParams,
    k_tilde: float,
    R_star: float,
    spec: KernelSpec,
    n_max: int = 24,
    cfg: QuadConfig | None = None,
) -> tuple:
    """Repeated decay steps from R_star, then the continuous envelope.

    Returns (Modulus, OscillationSchedule).  Each computed radius r_k gets
    the level of the interval just above it (g_tilde[k-2], the bound valid on
    (r_k, r_{k-1}]), so linear interpolation dominates the piecewise-constant
    bound everywhere; the value is capped at max(2, g_tilde[0]) beyond r_1
    because the oscillation never exceeds twice the bounded-data norm.
    """
    cfg = cfg or QuadConfig()
    if n_max < 1:
        raise ContinuityError("need at least one decay step")
    if not k_tilde >= max(1.0, params.lam):
        raise ContinuityError("k_tilde must dominate max(1, lam)")
    if not 0.0 < R_star <= 0.5 * params.R0:
        raise ContinuityError("anchor radius must lie in (0, R0/2]")

    kappa = 1.0 - 0.5 * params.improvement
    radii = [float(R_star)]
    hs = [params.threshold(R_star, spec, cfg)]
    complete = True
    for _ in range(n_max):
        try:
            r = pick_r(radii[-1], 2.0 * hs[-1] / k_tilde, params, spec, cfg)
        except RadiusSearchError:
            complete = False
            break
        nxt = params.ball_ratio * r
        radii.append(nxt)
        hs.append(params.threshold(nxt, spec, cfg))

    g = [0.0]
    for n in range(1, len(radii)):
        g.append(
            2.0 * k_tilde * max(kappa ** (i - 1) / hs[n - i] for i in range(1, n + 1))
        )
    g_tilde = [max(kappa**n, gn) for n, gn in enumerate(g)]
    for n in range(len(g_tilde) - 2, -1, -1):
        g_tilde[n] = max(g_tilde[n], g_tilde[n + 1])
    schedule = OscillationSchedule(
        tuple(radii), kappa, tuple(g), tuple(g_tilde), k_tilde, complete
    )

    steps = len(radii) - 1
    if steps < 1:
        raise ContinuityError(
            "no decay step completed; deepen the prepared radii table"
        )
    cap = max(2.0, g_tilde[0])
    pts = [(0.0, 0.0)]
    for k in range(steps, 1, -1):
        pts.append((radii[k], g_tilde[k - 2]))
    pts.append((radii[1], cap))
    return Modulus(tuple(pts)), schedule


# ---------------------------------------------------------------------------
# data-coupling constant


def tail_mass_bound(
    spec: KernelSpec,
    inner: tuple,
    outer: tuple,
    cfg: QuadConfig | None = None,
    grid_points: int = 33,
) -> float:
    """Supremum over x in ``inner`` of the kernel mass outside ``outer``.

    Both arguments are (lo, hi) intervals, outer strictly containing inner;
    the supremum is taken over a uniform grid including the endpoints.
    """
    cfg = cfg or QuadConfig()
    (a, b), (c, d) = inner, outer
    if not c < a < b < d:
        raise ContinuityError("the outer interval must strictly contain the inner")
    best = 0.0
    for x in np.linspace(a, b, grid_points):
        x = float(x)
        left = directional_tail(spec, -1, x, x - c, 1.0, cfg).value
        right = directional_tail(spec, 1, x, d - x, 1.0, cfg).value
        best = max(best, left + right)
    return best


def k_tilde_bound(
    spec: KernelSpec,
    inner: tuple,
    outer: tuple,
    w_sup: float = 0.0,
    cfg: QuadConfig | None = None,
) -> float:
    """max(1, lam, lam * tail mass bound, w_sup): the constant coupling the
    data terms into the decay step."""
    tail = tail_mass_bound(spec, inner, outer, cfg)
    return max(1.0, spec.lam, spec.lam * tail, float(w_sup))
