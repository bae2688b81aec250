"""Adaptive quadrature for kernel densities.

Radial integrals of ray profiles are the workhorse of every check in this
package.  Profiles that are piecewise pure powers (fractional, constant and
power levels, tabulated levels in log-log form) integrate in closed form;
everything else goes through an adaptive Gauss-Kronrod 7/15 panel scheme with
a logarithmic substitution near the origin, an inverse substitution ``u=1/tau``
for infinite tails and for profiles that oscillate against ``1/tau``, and
breakpoint-aware initial panels.

Profiles oscillating in ``1/tau`` have unboundedly many periods near 0; phase
is resolved down to a fixed period budget and the remaining origin mass is
enclosed between the profile's exact power envelopes.  The midpoint enters the
value, the half-width enters the error estimate, and ``converged`` stays
honest.
"""

from __future__ import annotations

import dataclasses
import heapq
import math

import numpy as np

from nlreg.kernels import KernelSpec


class QuadratureError(RuntimeError):
    pass


class DivergingMomentError(QuadratureError):
    """The small-ball first moment fails to converge at the origin."""


@dataclasses.dataclass(frozen=True)
class QuadConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_subdivisions: int = 1 << 20
    split_radius: float = 1.0

    def scaled(self, factor: float) -> "QuadConfig":
        return dataclasses.replace(
            self, rel_tol=self.rel_tol * factor, abs_tol=self.abs_tol * factor
        )


@dataclasses.dataclass(frozen=True)
class IntegralResult:
    value: float
    error_estimate: float
    converged: bool
    evaluations: int

    def __add__(self, other: "IntegralResult") -> "IntegralResult":
        return IntegralResult(
            self.value + other.value,
            self.error_estimate + other.error_estimate,
            self.converged and other.converged,
            self.evaluations + other.evaluations,
        )

    def scale(self, c: float) -> "IntegralResult":
        return IntegralResult(
            c * self.value, abs(c) * self.error_estimate, self.converged, self.evaluations
        )


_ZERO = IntegralResult(0.0, 0.0, True, 0)

# phase-resolution budget for 1/tau oscillation: longest u-interval we are
# willing to tile at a few panels per period
_U_SPAN_MAX = float(1 << 18)
_PANELS_PER_PERIOD = 4.0
_KNOT = 0.5 * math.pi  # oscillation panels align to sin/cos sign structure
_CHUNK = 1 << 14


def _combine(results, cfg: QuadConfig) -> IntegralResult:
    value = math.fsum(r.value for r in results)
    err = math.fsum(r.error_estimate for r in results)
    evals = sum(r.evaluations for r in results)
    conv = all(r.converged for r in results) and err <= 1.0001 * max(
        cfg.rel_tol * abs(value), cfg.abs_tol
    )
    return IntegralResult(value, err, conv, evals)


# ---------------------------------------------------------------------------
# Gauss-Kronrod 7/15 panel rule (QUADPACK dqk15 constants)

_XGK = np.array(
    [
        0.991455371120813,
        0.949107912342759,
        0.864864423359769,
        0.741531185599394,
        0.586087235467691,
        0.405845151377397,
        0.207784955007898,
        0.0,
    ]
)
_WGK = np.array(
    [
        0.022935322010529,
        0.063092092629979,
        0.104790010322250,
        0.140653259715525,
        0.169004726639267,
        0.190350578064785,
        0.204432940075298,
        0.209482141084728,
    ]
)
_WG = np.array(
    [
        0.129484966168870,
        0.279705391489277,
        0.381830050505119,
        0.417959183673469,
    ]
)

# all 15 Kronrod nodes on [-1, 1], ascending; Gauss nodes sit at odd indices
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[1::2][:4] = _WG[:4]
_GWEIGHTS[9::2] = _WG[2::-1]


def _eval_panels(f, los: np.ndarray, his: np.ndarray):
    """Evaluate the GK15 rule on many panels at once; returns (vals, errs)."""
    n = los.size
    vals = np.empty(n)
    errs = np.empty(n)
    for start in range(0, n, _CHUNK):
        lo = los[start : start + _CHUNK]
        hi = his[start : start + _CHUNK]
        hw = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        x = mid[:, None] + hw[:, None] * _NODES[None, :]
        fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
        resk = hw * (fx @ _WEIGHTS)
        resg = hw * (fx @ _GWEIGHTS)
        mean = np.where(hi > lo, resk / np.where(hi > lo, hi - lo, 1.0), 0.0)
        resasc = hw * (np.abs(fx - mean[:, None]) @ _WEIGHTS)
        diff = np.abs(resk - resg)
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = np.where(
                resasc > 0.0,
                resasc * np.minimum(1.0, (200.0 * diff / np.where(resasc > 0.0, resasc, 1.0)) ** 1.5),
                diff,
            )
        vals[start : start + _CHUNK] = resk
        errs[start : start + _CHUNK] = scaled
    return vals, errs


def adaptive(f, a: float, b: float, cfg: QuadConfig, breakpoints=(), initial=None) -> IntegralResult:
    """Adaptively integrate the vectorized callable ``f`` over finite [a, b].

    ``breakpoints`` seeds panel edges at known kinks; ``initial`` forces a
    minimum number of uniform starting panels (used for oscillatory integrands
    whose period is known in advance).
    """
    if not b > a:
        return _ZERO
    bp = np.asarray(breakpoints, dtype=float)
    if bp.size:
        bp = bp[(bp > a) & (bp < b)]
    edges = np.unique(np.concatenate([np.array([a, b]), bp]))
    if initial is not None and initial > 1:
        refined = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            n = max(1, int(round(initial * (hi - lo) / (b - a))))
            refined.extend(np.linspace(lo, hi, n + 1)[:-1])
        refined.append(b)
        edges = np.asarray(refined)

    los = edges[:-1]
    his = edges[1:]
    vals, errs = _eval_panels(f, los, his)
    evals = 15 * los.size

    total = math.fsum(vals)
    total_err = math.fsum(errs)
    if total_err <= max(cfg.abs_tol, cfg.rel_tol * abs(total)):
        return IntegralResult(total, total_err, True, evals)

    heap = [
        (-e, i, lo, hi, v, e)
        for i, (lo, hi, v, e) in enumerate(zip(los, his, vals, errs))
    ]
    heapq.heapify(heap)
    counter = los.size
    splits = 0
    stale = 0
    while True:
        tol = max(cfg.abs_tol, cfg.rel_tol * abs(total))
        if total_err <= tol or splits >= cfg.max_subdivisions:
            break
        neg_err, cnt, lo, hi, val, err = heapq.heappop(heap)
        if err <= 0.0 or hi - lo <= abs(hi) * 1e-16 + 1e-300:
            heapq.heappush(heap, (neg_err, cnt, lo, hi, val, err))
            break
        mid = 0.5 * (lo + hi)
        v2, e2 = _eval_panels(f, np.array([lo, mid]), np.array([mid, hi]))
        evals += 30
        for k in range(2):
            heapq.heappush(heap, (-e2[k], counter, (lo, mid)[k], (mid, hi)[k], v2[k], e2[k]))
            counter += 1
        total += (v2[0] + v2[1]) - val
        total_err += (e2[0] + e2[1]) - err
        splits += 1
        stale += 1
        if stale >= 4096:
            # refresh running sums to keep float drift out of the loop test
            total = math.fsum(p[4] for p in heap)
            total_err = math.fsum(p[5] for p in heap)
            stale = 0

    panels = sorted(heap, key=lambda p: (p[2], p[3]))
    value = math.fsum(p[4] for p in panels)
    err = math.fsum(p[5] for p in panels)
    converged = err <= max(cfg.abs_tol, cfg.rel_tol * abs(value))
    return IntegralResult(value, err, converged, evals)


# ---------------------------------------------------------------------------
# closed-form power pieces


def _power_primitive_diff(expo: float, lo: float, hi: float) -> float:
    """Int_lo^hi tau**expo dtau; hi may be inf, lo may be 0."""
    e1 = expo + 1.0
    if e1 == 0.0:
        if lo <= 0.0 or not math.isfinite(hi):
            return math.inf
        return math.log(hi / lo)
    if math.isfinite(hi):
        hi_part = hi**e1
    else:
        hi_part = 0.0 if e1 < 0.0 else math.inf
    if lo > 0.0:
        lo_part = lo**e1
    else:
        lo_part = 0.0 if e1 > 0.0 else math.inf
    return (hi_part - lo_part) / e1


def _exact_pieces_integral(pieces, weight_power: float, r: float, R: float) -> float:
    vals = []
    for coef, expo, lo, hi in pieces:
        a, b = max(r, lo), min(R, hi)
        if b > a:
            vals.append(coef * _power_primitive_diff(expo + weight_power, a, b))
    return math.fsum(vals)


def _exact_profile_integral(pieces, weight_power: float, r: float, R: float) -> IntegralResult:
    value = _exact_pieces_integral(pieces, weight_power, r, R)
    return IntegralResult(value, 0.0, math.isfinite(value), 0)


def _bracket_integral(profile, weight_power: float, r: float, R: float, cfg: QuadConfig):
    """Enclose the integral between the profile's power envelopes, if it has
    them; returns None when unavailable."""
    env = getattr(profile, "envelope_pieces", lambda: None)()
    if env is None:
        return None
    lo_v = _exact_pieces_integral(env[0], weight_power, r, R)
    hi_v = _exact_pieces_integral(env[1], weight_power, r, R)
    if not (math.isfinite(lo_v) and math.isfinite(hi_v)):
        return IntegralResult(lo_v, math.inf, False, 0)
    mid = 0.5 * (lo_v + hi_v)
    half = 0.5 * (hi_v - lo_v)
    conv = half <= max(cfg.rel_tol * abs(mid), cfg.abs_tol)
    return IntegralResult(mid, half, conv, 0)


# ---------------------------------------------------------------------------
# profile integrals with substitutions


def _map_breaks(breaks, transform):
    return tuple(transform(t) for t in breaks)


def profile_integral(
    profile,
    weight_power: float,
    r: float,
    R: float,
    cfg: QuadConfig,
    allow_exact: bool = True,
) -> IntegralResult:
    """``Int_r^R g(tau) tau**weight_power dtau`` for a ray profile ``g``.

    ``R`` may be infinite; the support of the profile clips the range.  The
    closed-form path handles ``r = 0`` and reports divergence through a
    non-finite value with ``converged=False``.  The adaptive path needs
    ``r > 0`` unless the profile oscillates at the origin and carries power
    envelopes; the unresolvable origin mass is then enclosed between them.
    """
    sup = profile.support()
    R_eff = min(R, sup)
    if R_eff <= r:
        return _ZERO
    if allow_exact:
        pieces = profile.power_pieces()
        if pieces is not None:
            return _exact_profile_integral(pieces, weight_power, r, R_eff)
    if r < 0.0 or (r == 0.0 and not profile.osc_at_origin):
        raise QuadratureError("adaptive profile integral needs r > 0")

    breaks = [t for t in profile.breaks() if r < t < R_eff]
    segments = []  # (kind, a, b)
    s0 = cfg.split_radius
    near_hi = min(R_eff, s0)
    if r < near_hi:
        segments.append(("near", r, near_hi))
    mid_lo = max(r, s0)
    if math.isfinite(R_eff):
        if mid_lo < R_eff:
            segments.append(("mid", mid_lo, R_eff))
    else:
        segments.append(("tail", mid_lo, math.inf))

    seg_cfg = cfg.scaled(1.0 / 4.0)
    results = []
    for kind, a, b in segments:
        seg_breaks = [t for t in breaks if a < t < b]
        if kind == "mid":
            f = lambda x: profile.val(x) * x**weight_power
            results.append(adaptive(f, a, b, seg_cfg, seg_breaks))
        elif kind == "near":
            if profile.osc_at_origin:
                results.extend(
                    _osc_near_segments(profile, weight_power, a, b, seg_cfg, seg_breaks)
                )
            else:
                # tau = e^t
                f = lambda t: (
                    lambda tau: profile.val(tau) * tau ** (weight_power + 1.0)
                )(np.exp(t))
                results.append(
                    adaptive(
                        f,
                        math.log(a),
                        math.log(b),
                        seg_cfg,
                        _map_breaks(seg_breaks, math.log),
                    )
                )
        else:  # tail, b = inf
            u_hi = 1.0 / a
            f = lambda u: profile.val(1.0 / u) * u ** (-(weight_power + 2.0))
            n0 = None
            if profile.osc_at_origin:
                n0 = int(max(4, _PANELS_PER_PERIOD * u_hi / (2.0 * math.pi)))
            results.append(
                adaptive(
                    f,
                    0.0,
                    u_hi,
                    seg_cfg,
                    _map_breaks(seg_breaks, lambda t: 1.0 / t),
                    initial=n0,
                )
            )
    return _combine(results, cfg)


def _knot_grid(u_lo: float, u_hi: float) -> np.ndarray:
    """Panel edges at multiples of pi/2 strictly inside (u_lo, u_hi).

    Aligning edges to the sign structure of sin/cos keeps each panel smooth,
    so kinked integrands like |g'| need almost no adaptive splitting.
    """
    k0 = math.floor(u_lo / _KNOT) + 1
    k1 = math.ceil(u_hi / _KNOT) - 1
    if k1 < k0:
        return np.empty(0)
    return _KNOT * np.arange(k0, k1 + 1)


def _osc_near_segments(profile, weight_power, a, b, cfg, seg_breaks):
    """Near-origin integration of a 1/tau-oscillating profile.

    The inverse substitution makes the phase uniform; the u-interval is tiled
    panel-per-quarter-period up to the resolution budget, and anything deeper
    (``a`` may be 0) is enclosed by the power envelopes.
    """
    u_lo = 1.0 / b
    u_hi = math.inf if a <= 0.0 else 1.0 / a
    out = []
    a_res = a
    if u_hi - u_lo > _U_SPAN_MAX:
        a_res = 1.0 / (u_lo + _U_SPAN_MAX)
        bracket = _bracket_integral(profile, weight_power, a, a_res, cfg)
        if bracket is None:
            if a <= 0.0:
                raise QuadratureError(
                    "oscillatory profile without power envelopes cannot reach 0"
                )
            # no envelopes: integrate a capped tiling and report non-converged
            f = lambda u: profile.val(1.0 / u) * u ** (-(weight_power + 2.0))
            capped = dataclasses.replace(cfg, max_subdivisions=1 << 12)
            res = adaptive(f, u_lo + _U_SPAN_MAX, u_hi, capped, initial=1 << 16)
            out.append(
                IntegralResult(
                    res.value,
                    max(res.error_estimate, abs(res.value)),
                    False,
                    res.evaluations,
                )
            )
        else:
            out.append(bracket)
        u_hi = u_lo + _U_SPAN_MAX
    f = lambda u: profile.val(1.0 / u) * u ** (-(weight_power + 2.0))
    mapped = [1.0 / t for t in seg_breaks if a_res < t < b]
    bp = np.concatenate([_knot_grid(u_lo, u_hi), np.asarray(mapped)])
    out.append(adaptive(f, u_lo, u_hi, cfg, bp))
    return out


# ---------------------------------------------------------------------------
# kernel-level quantities


def annulus_integral(spec: KernelSpec, r: float, R: float, cfg: QuadConfig) -> IntegralResult:
    """Mass ``Int_{r < |z| < R} j(z) dz``; ``R`` may be infinite."""
    if not 0.0 <= r:
        raise QuadratureError("annulus needs 0 <= r")
    if R <= r:
        return _ZERO
    results = [
        profile_integral(ray.profile, spec.dim - 1.0, r, R, cfg).scale(ray.weight)
        for ray in spec.rays()
    ]
    return _combine(results, cfg)


def first_moment(spec: KernelSpec, r: float, cfg: QuadConfig) -> IntegralResult:
    """Small-ball first moment ``Int_{B_r} |z| j(z) dz``.

    Raises :class:`DivergingMomentError` when the origin contribution fails to
    decay.  Power profiles are integrated in closed form and oscillating-order
    profiles in one pass down to 0 (enclosing the unresolvable origin mass
    between their power envelopes); everything else is evaluated on 16-octave
    blocks toward 0, where the block ratio must fall below 0.9 and the
    geometric remainder is added to both the value and the error estimate.
    """
    if not r > 0.0:
        raise QuadratureError("first moment needs r > 0")
    results = []
    for ray in spec.rays():
        pieces = ray.profile.power_pieces()
        if pieces is not None:
            res = _exact_profile_integral(
                pieces, float(spec.dim), 0.0, min(r, ray.profile.support())
            )
            if not math.isfinite(res.value):
                raise DivergingMomentError(
                    f"first moment over B_{r!r} diverges (power profile)"
                )
            results.append(res.scale(ray.weight))
            continue
        if ray.profile.osc_at_origin and ray.profile.envelope_pieces() is not None:
            res = profile_integral(ray.profile, float(spec.dim), 0.0, r, cfg)
            if not math.isfinite(res.value):
                raise DivergingMomentError(
                    f"first moment over B_{r!r} diverges (envelope bound)"
                )
            results.append(res.scale(ray.weight))
            continue
        block = 2.0**-16
        hi = r
        total = []
        prev = None
        ratio = None
        for _ in range(6):
            lo = hi * block
            part = profile_integral(ray.profile, float(spec.dim), lo, hi, cfg)
            total.append(part)
            if prev is not None and prev.value > 0.0:
                ratio = part.value / prev.value
                if ratio <= 0.5:
                    break
                if ratio >= 0.9 and len(total) >= 4:
                    raise DivergingMomentError(
                        f"first moment over B_{r!r} diverges (block ratio {ratio:.3f})"
                    )
            if part.value <= cfg.abs_tol:
                ratio = 0.0
                break
            prev = part
            hi = lo
        acc = _combine(total, cfg)
        if ratio is None or ratio >= 0.9:
            raise DivergingMomentError(
                f"first moment over B_{r!r}: no decaying block ratio found"
            )
        remainder = total[-1].value * ratio / (1.0 - ratio) if ratio > 0.0 else 0.0
        acc = IntegralResult(
            acc.value + remainder,
            acc.error_estimate + remainder,
            acc.converged,
            acc.evaluations,
        )
        results.append(acc.scale(ray.weight))
    out = _combine(results, cfg)
    conv = out.error_estimate <= max(cfg.rel_tol * abs(out.value), cfg.abs_tol)
    return IntegralResult(out.value, out.error_estimate, out.converged or conv, out.evaluations)


def scale_intensity(spec: KernelSpec, r: float, cfg: QuadConfig) -> IntegralResult:
    """``m(r)/r + Int_{|z|>r} j``: total jump intensity seen at scale ``r``.

    Nonincreasing in ``r``; this is the quantity the growth thresholds are
    proportional to.
    """
    m = first_moment(spec, r, cfg)
    tail = annulus_integral(spec, r, math.inf, cfg)
    return m.scale(1.0 / r) + tail


def tail_integral(data, x: float, rho: float, spec: KernelSpec, cfg: QuadConfig) -> IntegralResult:
    """``Int_{|y-x|>rho} |data(y)| j(y-x) dy`` for bounded data (dim 1).

    ``data`` is a vectorized callable or a constant.  Absolute values are
    taken inside, so the result is monotone in the cut radius.
    """
    if spec.dim != 1:
        raise QuadratureError("tail_integral supports dim 1 only")
    g = data if callable(data) else _const_fn(float(data))
    results = []
    for profile, sign in ((spec.ray_positive(), 1.0), (spec.ray_negative(), -1.0)):
        weighted = _DataWeightedProfile(profile, g, x, sign)
        results.append(profile_integral(weighted, 0.0, rho, math.inf, cfg, allow_exact=False))
    return _combine(results, cfg)


def directional_tail(
    spec: KernelSpec,
    side: int,
    x: float,
    dist: float,
    data,
    cfg: QuadConfig,
    data_breaks=(),
) -> IntegralResult:
    """One-sided tail ``Int_dist^inf |data(x + side*tau)| j_side(tau) dtau``.

    Used for tails over the complement of an interval not centered at ``x``;
    ``side`` is +1 or -1.
    """
    profile = spec.ray_positive() if side > 0 else spec.ray_negative()
    g = data if callable(data) else _const_fn(float(data))
    weighted = _DataWeightedProfile(profile, g, x, float(side), extra_breaks=data_breaks)
    return profile_integral(weighted, 0.0, dist, math.inf, cfg, allow_exact=False)


def _const_fn(c: float):
    return lambda y: np.full_like(np.asarray(y, dtype=float), c)


class _DataWeightedProfile:
    """Ray profile multiplied by |data(x + sign*tau)|; quacks like RayProfile."""

    def __init__(self, profile, data_fn, x, sign, extra_breaks=()):
        self._p = profile
        self._g = data_fn
        self._x = x
        self._sign = sign
        self._extra = tuple(extra_breaks)

    def val(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self._p.val(tau) * np.abs(self._g(self._x + self._sign * tau))

    def breaks(self):
        own = list(self._p.breaks())
        for t in self._extra:
            # translate data-space breakpoints into ray distance
            d = self._sign * (t - self._x)
            if d > 0.0:
                own.append(d)
        return tuple(sorted(set(own)))

    def support(self):
        return self._p.support()

    def power_pieces(self):
        return None

    def envelope_pieces(self):
        return None

    @property
    def osc_at_origin(self):
        return self._p.osc_at_origin

    @property
    def log_period(self):
        return self._p.log_period


def variation_estimate(spec: KernelSpec, r: float, R: float, cfg: QuadConfig) -> IntegralResult:
    """Total variation of ``j`` on the open annulus ``r < |z| < R``.

    Sums, per ray: the radial gradient mass ``Int |g'(tau)| tau^(dim-1) dtau``
    weighted by the angular measure, plus value jumps at cutoffs; for cone
    kernels the jump across each angular boundary segment adds
    ``Int_r^R g(tau) dtau`` per boundary ray.
    """
    if not 0.0 < r < R:
        raise QuadratureError("variation needs 0 < r < R")
    results = []
    for ray in spec.rays():
        profile = ray.profile
        sup = profile.support()
        R_eff = min(R, sup)
        pieces = profile.power_pieces()
        if pieces is not None:
            # |g'| integrates exactly: |coef * expo| tau^(expo - 1)
            vals = []
            for coef, expo, lo, hi in pieces:
                a, b = max(r, lo), min(R_eff, hi)
                if b > a and expo != 0.0:
                    vals.append(
                        abs(coef * expo)
                        * _power_primitive_diff(expo - 2.0 + spec.dim, a, b)
                    )
            grad = IntegralResult(math.fsum(vals), 0.0, True, 0)
        else:
            dp = _DerivativeMagnitudeProfile(profile)
            grad = profile_integral(dp, spec.dim - 1.0, r, R_eff, cfg, allow_exact=False)
        # the annulus is open: a cutoff landing exactly on R sits outside it
        jump_vals = [
            tau ** (spec.dim - 1.0) * dj
            for tau, dj in profile.jumps()
            if r < tau < R
        ]
        jumps = IntegralResult(math.fsum(jump_vals), 0.0, True, 0)
        results.append((grad + jumps).scale(ray.weight))
    n_boundary = spec.boundary_ray_count()
    if n_boundary:
        base = profile_integral(spec.rays()[0].profile, 0.0, r, R, cfg)
        results.append(base.scale(float(n_boundary)))
    return _combine(results, cfg)


class _DerivativeMagnitudeProfile:
    """|g'(tau)| wrapped as a profile for the adaptive integrator."""

    def __init__(self, profile):
        self._p = profile

    def val(self, tau):
        return np.abs(self._p.dval(tau))

    def breaks(self):
        return self._p.breaks()

    def support(self):
        return self._p.support()

    def power_pieces(self):
        return None

    def envelope_pieces(self):
        return None

    @property
    def osc_at_origin(self):
        return self._p.osc_at_origin

    @property
    def log_period(self):
        return self._p.log_period
