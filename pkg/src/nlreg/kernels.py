"""Jump-kernel models.

A kernel here is the density ``j`` of a nonlocal operator

    (L u)(x) = p.v. Int ( u(x) - u(y) ) K(x, y) dy,

where ``K`` is comparable to a fixed, possibly anisotropic density
``j(y - x)`` that is weakly singular at the origin.  This module holds the
one-point density models (families), their decomposition into rays with
one-dimensional radial profiles, and the two-point kernels built on top of
them.  All numerical work on the profiles lives in :mod:`nlreg.quadrature`.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from typing import Callable

import numpy as np

TWO_PI = 2.0 * math.pi


class KernelConfigError(ValueError):
    """Raised for invalid kernel parameters or malformed kernel config text."""


class TableRangeError(ValueError):
    """Raised when a tabulated density is evaluated outside its radius range."""


class SingularPointError(ValueError):
    """Raised when a density is evaluated at the singular point z = 0."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# radial profile terms
#
# A ray profile is a finite sum of terms; each term knows its pointwise value
# and derivative in the radius, its kink/cutoff radii, its value jumps, and,
# when it is a pure power on pieces, the exact piece list used by the
# closed-form integrator.


@dataclasses.dataclass(frozen=True)
class PowerTerm:
    """``coef * tau**exponent`` on ``lo < tau <= hi``, zero elsewhere."""

    coef: float
    exponent: float
    lo: float = 0.0
    hi: float = math.inf

    def val(self, tau: np.ndarray) -> np.ndarray:
        tau = _as_array(tau)
        mask = (tau > self.lo) & (tau <= self.hi)
        safe = np.where(mask, tau, 1.0)
        return np.where(mask, self.coef * safe**self.exponent, 0.0)

    def dval(self, tau: np.ndarray) -> np.ndarray:
        tau = _as_array(tau)
        mask = (tau > self.lo) & (tau <= self.hi)
        safe = np.where(mask, tau, 1.0)
        return np.where(mask, self.coef * self.exponent * safe ** (self.exponent - 1.0), 0.0)

    def breaks(self) -> tuple[float, ...]:
        out = []
        if self.lo > 0.0:
            out.append(self.lo)
        if math.isfinite(self.hi):
            out.append(self.hi)
        return tuple(out)

    def jumps(self) -> tuple[tuple[float, float], ...]:
        out = []
        if self.lo > 0.0:
            out.append((self.lo, self.coef * self.lo**self.exponent))
        if math.isfinite(self.hi):
            out.append((self.hi, -self.coef * self.hi**self.exponent))
        return tuple(out)

    def support(self) -> float:
        return self.hi

    def power_pieces(self):
        return ((self.coef, self.exponent, self.lo, self.hi),)

    def envelope_pieces(self):
        p = self.power_pieces()
        return (p, p)

    log_period: float = dataclasses.field(default=0.0, init=False, repr=False)
    osc_at_origin = False

    def scaled(self, c: float) -> "PowerTerm":
        return dataclasses.replace(self, coef=self.coef * c)

    def config_row(self) -> str:
        return f"power, {self.coef!r}, {self.exponent!r}, {self.lo!r}, {self.hi!r}"


@dataclasses.dataclass(frozen=True)
class OscOrderTerm:
    """Power density whose order itself oscillates near the origin:

    ``coef * tau ** -(1 + amp * (cos(1/tau) + offset))`` for ``tau <= hi``.

    The exponent stays in ``[-(1 + amp*(offset+1)), -(1 + amp*(offset-1))]``,
    so the term is pinched between two pure powers.
    """

    coef: float
    amp: float
    offset: float
    hi: float = math.inf

    def _exponent(self, tau: np.ndarray) -> np.ndarray:
        return -(1.0 + self.amp * (np.cos(1.0 / tau) + self.offset))

    def val(self, tau: np.ndarray) -> np.ndarray:
        tau = _as_array(tau)
        mask = (tau > 0.0) & (tau <= self.hi)
        safe = np.where(mask, tau, 1.0)
        return np.where(mask, self.coef * safe ** self._exponent(safe), 0.0)

    def dval(self, tau: np.ndarray) -> np.ndarray:
        # d/dtau exp(e(tau) log tau) with e(tau) = -(1 + amp (cos(1/tau)+offset)):
        # e'(tau) = -amp sin(1/tau) / tau^2.
        tau = _as_array(tau)
        mask = (tau > 0.0) & (tau <= self.hi)
        safe = np.where(mask, tau, 1.0)
        v = self.coef * safe ** self._exponent(safe)
        eprime = -self.amp * np.sin(1.0 / safe) / safe**2
        return np.where(mask, v * (eprime * np.log(safe) + self._exponent(safe) / safe), 0.0)

    def breaks(self) -> tuple[float, ...]:
        return (self.hi,) if math.isfinite(self.hi) else ()

    def jumps(self) -> tuple[tuple[float, float], ...]:
        if math.isfinite(self.hi):
            return ((self.hi, -float(self.val(self.hi))),)
        return ()

    def support(self) -> float:
        return self.hi

    def power_pieces(self):
        return None

    def envelope_pieces(self):
        # pinching powers; which exponent bounds which side flips at tau = 1
        e_lo = -(1.0 + self.amp * (self.offset - 1.0))
        e_hi = -(1.0 + self.amp * (self.offset + 1.0))
        m1 = min(self.hi, 1.0)
        lower = [(self.coef, e_lo, 0.0, m1)]
        upper = [(self.coef, e_hi, 0.0, m1)]
        if self.hi > 1.0:
            lower.append((self.coef, e_hi, 1.0, self.hi))
            upper.append((self.coef, e_lo, 1.0, self.hi))
        if self.coef < 0.0:
            lower, upper = upper, lower
        return (tuple(lower), tuple(upper))

    log_period: float = dataclasses.field(default=0.0, init=False, repr=False)
    osc_at_origin = True

    def scaled(self, c: float) -> "OscOrderTerm":
        return dataclasses.replace(self, coef=self.coef * c)

    def config_row(self) -> str:
        return f"osc-order, {self.coef!r}, {self.amp!r}, {self.offset!r}, {self.hi!r}"


@dataclasses.dataclass(frozen=True)
class LevelOverPowerTerm:
    """``level(tau) / tau**dim`` for a level profile, the radial-family density."""

    level: "LevelProfile"
    dim: int
    coef: float = 1.0

    def val(self, tau: np.ndarray) -> np.ndarray:
        tau = _as_array(tau)
        mask = tau > 0.0
        safe = np.where(mask, tau, 1.0)
        return np.where(mask, self.coef * self.level.value(safe) * safe ** (-self.dim), 0.0)

    def dval(self, tau: np.ndarray) -> np.ndarray:
        tau = _as_array(tau)
        mask = tau > 0.0
        safe = np.where(mask, tau, 1.0)
        d = (
            self.level.derivative(safe) * safe ** (-self.dim)
            - self.dim * self.level.value(safe) * safe ** (-self.dim - 1.0)
        )
        return np.where(mask, self.coef * d, 0.0)

    def breaks(self) -> tuple[float, ...]:
        return self.level.breaks()

    def jumps(self) -> tuple[tuple[float, float], ...]:
        return tuple(
            (r, self.coef * dj * r ** (-self.dim)) for r, dj in self.level.jumps()
        )

    def support(self) -> float:
        return self.level.support()

    def power_pieces(self):
        pieces = self.level.power_pieces()
        if pieces is None:
            return None
        return tuple((self.coef * c, e - self.dim, lo, hi) for c, e, lo, hi in pieces)

    def envelope_pieces(self):
        p = self.power_pieces()
        return None if p is None else (p, p)

    @property
    def log_period(self) -> float:
        return self.level.log_period

    @property
    def osc_at_origin(self) -> bool:
        return False

    def scaled(self, c: float) -> "LevelOverPowerTerm":
        return dataclasses.replace(self, coef=self.coef * c)


@dataclasses.dataclass(frozen=True)
class RayProfile:
    """One-dimensional radial density along a ray: a sum of terms."""

    terms: tuple

    def val(self, tau) -> np.ndarray:
        tau = _as_array(tau)
        out = np.zeros_like(tau)
        for t in self.terms:
            out = out + t.val(tau)
        return out

    def dval(self, tau) -> np.ndarray:
        tau = _as_array(tau)
        out = np.zeros_like(tau)
        for t in self.terms:
            out = out + t.dval(tau)
        return out

    def breaks(self) -> tuple[float, ...]:
        out = set()
        for t in self.terms:
            out.update(t.breaks())
        return tuple(sorted(out))

    def jumps(self) -> tuple[tuple[float, float], ...]:
        # aggregate signed value jumps by radius, report magnitudes
        agg: dict[float, float] = {}
        for t in self.terms:
            for r, d in t.jumps():
                agg[r] = agg.get(r, 0.0) + d
        return tuple(sorted((r, abs(d)) for r, d in agg.items() if d != 0.0))

    def support(self) -> float:
        return max((t.support() for t in self.terms), default=0.0)

    def power_pieces(self):
        pieces = []
        for t in self.terms:
            p = t.power_pieces()
            if p is None:
                return None
            pieces.extend(p)
        return tuple(pieces)

    def envelope_pieces(self):
        lowers, uppers = [], []
        for t in self.terms:
            env = t.envelope_pieces()
            if env is None:
                return None
            lowers.extend(env[0])
            uppers.extend(env[1])
        return (tuple(lowers), tuple(uppers))

    @property
    def log_period(self) -> float:
        return max((t.log_period for t in self.terms), default=0.0)

    @property
    def osc_at_origin(self) -> bool:
        return any(t.osc_at_origin for t in self.terms)

    def scaled(self, c: float) -> "RayProfile":
        return RayProfile(tuple(t.scaled(c) for t in self.terms))

    def plus(self, other: "RayProfile") -> "RayProfile":
        return RayProfile(self.terms + other.terms)


@dataclasses.dataclass(frozen=True)
class Ray:
    """A ray profile together with the angular measure it carries."""

    weight: float
    profile: RayProfile


# ---------------------------------------------------------------------------
# level profiles (the "strength at radius s" functions of the radial family)


@dataclasses.dataclass(frozen=True)
class ConstantLevel:
    """Level 1 on ``(0, cutoff]``, 0 beyond."""

    cutoff: float = 1.0
    kind = "constant"
    log_period = 0.0

    def value(self, s: np.ndarray) -> np.ndarray:
        s = _as_array(s)
        return np.where((s > 0.0) & (s <= self.cutoff), 1.0, 0.0)

    def derivative(self, s: np.ndarray) -> np.ndarray:
        return np.zeros_like(_as_array(s))

    def breaks(self) -> tuple[float, ...]:
        return (self.cutoff,)

    def jumps(self) -> tuple[tuple[float, float], ...]:
        return ((self.cutoff, -1.0),)

    def support(self) -> float:
        return self.cutoff

    def power_pieces(self):
        return ((1.0, 0.0, 0.0, self.cutoff),)

    def config_items(self) -> dict[str, str]:
        return {"kind": "constant", "cutoff": repr(self.cutoff)}


@dataclasses.dataclass(frozen=True)
class OneMinusSinLogLevel:
    """Level ``1 - sin(log s)`` on ``(0, cutoff]``: nonnegative, with quadratic
    zeros accumulating geometrically at the origin."""

    cutoff: float = 1.0
    kind = "one-minus-sin-log"
    log_period = TWO_PI

    def value(self, s: np.ndarray) -> np.ndarray:
        s = _as_array(s)
        mask = (s > 0.0) & (s <= self.cutoff)
        safe = np.where(mask, s, 1.0)
        return np.where(mask, 1.0 - np.sin(np.log(safe)), 0.0)

    def derivative(self, s: np.ndarray) -> np.ndarray:
        s = _as_array(s)
        mask = (s > 0.0) & (s <= self.cutoff)
        safe = np.where(mask, s, 1.0)
        return np.where(mask, -np.cos(np.log(safe)) / safe, 0.0)

    def breaks(self) -> tuple[float, ...]:
        return (self.cutoff,)

    def jumps(self) -> tuple[tuple[float, float], ...]:
        edge = 1.0 - math.sin(math.log(self.cutoff))
        return ((self.cutoff, -edge),) if edge != 0.0 else ()

    def support(self) -> float:
        return self.cutoff

    def power_pieces(self):
        return None

    def config_items(self) -> dict[str, str]:
        return {"kind": "one-minus-sin-log", "cutoff": repr(self.cutoff)}


@dataclasses.dataclass(frozen=True)
class PowerLevel:
    """Level ``s**rho`` on ``(0, cutoff]``.  ``rho = dim - 1 - 2s`` recovers a
    fractional-type density ``s**(-1-2s)`` in one dimension."""

    rho: float
    cutoff: float = math.inf
    kind = "power"
    log_period = 0.0

    def value(self, s: np.ndarray) -> np.ndarray:
        s = _as_array(s)
        mask = (s > 0.0) & (s <= self.cutoff)
        safe = np.where(mask, s, 1.0)
        return np.where(mask, safe**self.rho, 0.0)

    def derivative(self, s: np.ndarray) -> np.ndarray:
        s = _as_array(s)
        mask = (s > 0.0) & (s <= self.cutoff)
        safe = np.where(mask, s, 1.0)
        return np.where(mask, self.rho * safe ** (self.rho - 1.0), 0.0)

    def breaks(self) -> tuple[float, ...]:
        return (self.cutoff,) if math.isfinite(self.cutoff) else ()

    def jumps(self) -> tuple[tuple[float, float], ...]:
        if math.isfinite(self.cutoff):
            return ((self.cutoff, -self.cutoff**self.rho),)
        return ()

    def support(self) -> float:
        return self.cutoff

    def power_pieces(self):
        return ((1.0, self.rho, 0.0, self.cutoff),)

    def config_items(self) -> dict[str, str]:
        return {"kind": "power", "rho": repr(self.rho), "cutoff": repr(self.cutoff)}


@dataclasses.dataclass(frozen=True)
class TabulatedLevel:
    """Log-log linear interpolation through positive nodes.

    Nodes must be strictly increasing in radius and strictly positive in
    value; between nodes the level is the pure power through the bracketing
    pair, which keeps piecewise-exact integration available.  For integration
    the level is zero outside the table range; pointwise density evaluation
    outside the range is refused upstream (an extrapolation error).
    """

    radii: tuple[float, ...]
    values: tuple[float, ...]
    kind = "tabulated"
    log_period = 0.0

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.size < 2 or v.shape != r.shape:
            raise KernelConfigError("tabulated level needs matching radius/value lists (>= 2 nodes)")
        if not (np.all(np.diff(r) > 0.0) and np.all(r > 0.0)):
            raise KernelConfigError("tabulated radii must be positive and strictly increasing")
        if not np.all(v > 0.0):
            raise KernelConfigError("tabulated values must be strictly positive")

    def _slopes(self) -> np.ndarray:
        r = np.asarray(self.radii)
        v = np.asarray(self.values)
        return np.diff(np.log(v)) / np.diff(np.log(r))

    def value(self, s: np.ndarray) -> np.ndarray:
        s = _as_array(s)
        r = np.asarray(self.radii)
        v = np.asarray(self.values)
        out = np.exp(np.interp(np.log(np.maximum(s, r[0])), np.log(r), np.log(v)))
        return np.where((s >= r[0]) & (s <= r[-1]), out, 0.0)

    def derivative(self, s: np.ndarray) -> np.ndarray:
        s = _as_array(s)
        r = np.asarray(self.radii)
        idx = np.clip(np.searchsorted(r, s, side="right") - 1, 0, r.size - 2)
        slope = self._slopes()[idx]
        return np.where((s >= r[0]) & (s <= r[-1]), slope * self.value(np.maximum(s, r[0])) / np.maximum(s, r[0]), 0.0)

    def breaks(self) -> tuple[float, ...]:
        return tuple(self.radii)

    def jumps(self) -> tuple[tuple[float, float], ...]:
        return ((self.radii[-1], -self.values[-1]),)

    def support(self) -> float:
        return self.radii[-1]

    def power_pieces(self):
        r = self.radii
        v = self.values
        slopes = self._slopes()
        pieces = []
        for i, slope in enumerate(slopes):
            coef = v[i] * r[i] ** (-slope)
            pieces.append((coef, slope, r[i], r[i + 1]))
        return tuple(pieces)

    def config_items(self) -> dict[str, str]:
        return {
            "kind": "tabulated",
            "radii": ", ".join(repr(x) for x in self.radii),
            "values": ", ".join(repr(x) for x in self.values),
        }


LevelProfile = ConstantLevel | OneMinusSinLogLevel | PowerLevel | TabulatedLevel

_LEVEL_KINDS = {
    "constant": ConstantLevel,
    "one-minus-sin-log": OneMinusSinLogLevel,
    "power": PowerLevel,
    "tabulated": TabulatedLevel,
}


# ---------------------------------------------------------------------------
# kernel families

_FAMILIES = ("fractional", "radial", "cone", "custom", "asymmetric-pair")


def _normalize_angle(t: float) -> float:
    t = math.fmod(t, TWO_PI)
    return t + TWO_PI if t < 0.0 else t


@dataclasses.dataclass(frozen=True)
class KernelSpec:
    """A one-point jump density ``j``.

    Families:

    - ``fractional``: ``j(z) = |z| ** -(dim + 2 s)``.
    - ``radial``: ``j(z) = level(|z|) / |z|**dim`` for a level profile.
    - ``cone``: same radial form, restricted to a symmetric union of angular
      arcs on the unit circle (``dim == 2`` only).
    - ``custom``: symmetric density from explicit terms or a tabulated level.
    - ``asymmetric-pair``: ``dim == 1`` density with independent term lists on
      the two half-lines.
    """

    family: str
    dim: int
    lam: float = 1.0
    gamma_hint: float | None = None
    s: float | None = None
    level: LevelProfile | None = None
    arcs: tuple[tuple[float, float], ...] | None = None
    terms_pos: tuple | None = None
    terms_neg: tuple | None = None

    # -- geometry -----------------------------------------------------------

    def angular_mass(self) -> float:
        """Total angular measure seen by the density (arc length on S^1, or
        the count 2 of ray directions in one dimension)."""
        if self.dim == 1:
            return 2.0
        if self.family == "cone":
            return sum(b - a for a, b in self.arcs)
        return TWO_PI

    def boundary_ray_count(self) -> int:
        """Number of radial boundary segments of the angular support."""
        if self.family == "cone":
            return 2 * len(self.arcs)
        return 0

    # -- profiles ------------------------------------------------------------

    def _base_profile(self) -> RayProfile:
        if self.family == "fractional":
            return RayProfile((PowerTerm(1.0, -(self.dim + 2.0 * self.s)),))
        if self.family in ("radial", "cone"):
            return RayProfile((LevelOverPowerTerm(self.level, self.dim),))
        if self.family == "custom":
            return RayProfile(self.terms_pos)
        raise KernelConfigError(f"no single base profile for family {self.family!r}")

    def ray_positive(self) -> RayProfile:
        """Density profile along the positive half-line (dim 1)."""
        if self.family == "asymmetric-pair":
            return RayProfile(self.terms_pos)
        return self._base_profile()

    def ray_negative(self) -> RayProfile:
        if self.family == "asymmetric-pair":
            return RayProfile(self.terms_neg)
        return self._base_profile()

    def rays(self) -> tuple[Ray, ...]:
        """Rays with angular weights such that ``Int F(|z|) j(z) dz`` equals
        ``sum_r w_r Int F(tau) g_r(tau) tau**(dim-1) dtau``."""
        if self.dim == 1:
            if self.family == "asymmetric-pair":
                return (Ray(1.0, self.ray_positive()), Ray(1.0, self.ray_negative()))
            return (Ray(2.0, self._base_profile()),)
        return (Ray(self.angular_mass(), self._base_profile()),)

    def symmetric_profile(self) -> RayProfile:
        """Radial profile of the even part ``(j(z) + j(-z)) / 2``."""
        if self.family == "asymmetric-pair":
            return self.ray_positive().scaled(0.5).plus(self.ray_negative().scaled(0.5))
        return self._base_profile()

    def antisymmetric_profile(self) -> RayProfile:
        """Radial profile of the odd part, read on the positive half-line."""
        if self.family == "asymmetric-pair":
            return self.ray_positive().scaled(0.5).plus(self.ray_negative().scaled(-0.5))
        return RayProfile(())

    def reference_profile(self) -> RayProfile:
        """Profile of the comparability reference density (the even part for
        asymmetric pairs, the density itself otherwise)."""
        return self.symmetric_profile()

    def support_radius(self) -> float:
        return max(self.ray_positive().support(), self.ray_negative().support())

    def is_symmetric(self) -> bool:
        if self.family != "asymmetric-pair":
            return True
        return len(self.antisymmetric_profile().terms) == 0

    # -- evaluation ----------------------------------------------------------

    def _check_radii(self, tau: np.ndarray) -> None:
        if np.any(tau == 0.0):
            raise SingularPointError("density evaluated at z = 0")
        if isinstance(self.level, TabulatedLevel):
            lo, hi = self.level.radii[0], self.level.radii[-1]
            if np.any((tau < lo) | (tau > hi)):
                raise TableRangeError(
                    f"tabulated density queried outside radius range [{lo!r}, {hi!r}]"
                )

    def density(self, z):
        """Evaluate ``j`` at displacement(s) ``z``.

        ``dim == 1``: scalar or array of signed displacements.
        ``dim == 2``: array of shape (..., 2).
        """
        if self.dim == 1:
            z = _as_array(z)
            self._check_radii(np.abs(z))
            pos = self.ray_positive().val(np.abs(z))
            neg = self.ray_negative().val(np.abs(z))
            return np.where(z > 0.0, pos, np.where(z < 0.0, neg, 0.0))
        z = _as_array(z)
        if z.shape[-1] != 2:
            raise KernelConfigError("dim-2 kernels take displacements of shape (..., 2)")
        tau = np.hypot(z[..., 0], z[..., 1])
        self._check_radii(tau)
        vals = self._base_profile().val(tau)
        if self.family == "cone":
            ang = np.mod(np.arctan2(z[..., 1], z[..., 0]), TWO_PI)
            inside = np.zeros(ang.shape, dtype=bool)
            for a, b in self.arcs:
                inside |= (ang >= a) & (ang <= b)
                # arcs stored normalized to [0, 2pi); handle wrap-around
                if b > TWO_PI:
                    inside |= ang <= b - TWO_PI
            vals = np.where(inside, vals, 0.0)
        return vals

    def default_gamma(self) -> float:
        """Working exponent for the small-jump integrability check when the
        caller supplies none."""
        if self.gamma_hint is not None:
            return self.gamma_hint
        if self.family == "fractional":
            return min(1.0, (2.0 * self.s + 1.0) / 2.0)
        if any(
            p.osc_at_origin
            for p in (self.ray_positive(), self.ray_negative())
        ):
            return 0.99
        return 0.75


@dataclasses.dataclass(frozen=True)
class TwoPointKernel:
    """A two-point kernel built from a one-point density.

    Modes: ``translation-invariant`` (``K(x,y) = j(y-x)``), ``symmetrized``
    (``K(x,y) = (j(y-x)+j(x-y))/2``) and ``user-weighted``
    (``K(x,y) = w(x,y) j(y-x)`` with ``1/Lambda <= w <= Lambda``).
    ``box`` bounds the x-region used by sampled checks.
    """

    spec: KernelSpec
    mode: str = "translation-invariant"
    weight: Callable | None = None
    box: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.mode not in ("translation-invariant", "symmetrized", "user-weighted"):
            raise KernelConfigError(f"unknown kernel mode {self.mode!r}")
        if self.mode == "user-weighted" and self.weight is None:
            raise KernelConfigError("user-weighted mode needs a weight callable")
        if self.mode != "user-weighted" and self.weight is not None:
            raise KernelConfigError("weight callable only allowed in user-weighted mode")

    def __call__(self, x, y):
        x = _as_array(x)
        y = _as_array(y)
        z = y - x
        if self.mode == "translation-invariant":
            return self.spec.density(z)
        if self.mode == "symmetrized":
            return 0.5 * (self.spec.density(z) + self.spec.density(-z))
        return self.weight(x, y) * self.spec.density(z)

    def symmetric_part(self, x, y):
        return 0.5 * (self(x, y) + self(y, x))

    def antisymmetric_part(self, x, y):
        return 0.5 * (self(x, y) - self(y, x))

    def is_symmetric(self) -> bool:
        if self.mode == "symmetrized":
            return True
        if self.mode == "translation-invariant":
            return self.spec.is_symmetric()
        return False


def decompose(kernel: TwoPointKernel, x, y):
    """Split ``K`` at ``(x, y)`` into its symmetric and antisymmetric parts."""
    return kernel.symmetric_part(x, y), kernel.antisymmetric_part(x, y)


# ---------------------------------------------------------------------------
# construction and validation


def _validate_arcs(arcs) -> tuple[tuple[float, float], ...]:
    if not arcs:
        raise KernelConfigError("cone kernels need at least one angular arc")
    norm = []
    for a, b in arcs:
        if not b > a:
            raise KernelConfigError(f"arc ({a}, {b}) has nonpositive length")
        if b - a > TWO_PI:
            raise KernelConfigError(f"arc ({a}, {b}) longer than the full circle")
        a0 = _normalize_angle(a)
        norm.append((a0, a0 + (b - a)))
    norm.sort()
    # antipodal closure: rotating the arc set by pi must reproduce it
    tol = 1e-12
    for a, b in norm:
        matched = any(
            abs(_normalize_angle(a + math.pi) - a2) < tol and abs((b - a) - (b2 - a2)) < tol
            for a2, b2 in norm
        )
        if not matched:
            raise KernelConfigError("cone arcs must be symmetric under the antipodal map")
    return tuple(norm)


def _check_nonnegative(profile: RayProfile, label: str) -> None:
    # deterministic log grid; densities must be nonnegative pointwise
    sup = profile.support()
    hi = min(sup, 1e3) if math.isfinite(sup) else 1e3
    lo = 1e-9
    for t in profile.terms:
        if isinstance(t, LevelOverPowerTerm) and isinstance(t.level, TabulatedLevel):
            lo = max(lo, t.level.radii[0])
    taus = np.exp(np.linspace(math.log(lo), math.log(hi), 257))
    if np.any(profile.val(taus) < -1e-15):
        raise KernelConfigError(f"{label} density is negative on its support")


def build_kernel(config=None, **kwargs) -> KernelSpec:
    """Build and validate a :class:`KernelSpec` from a mapping or kwargs."""
    params = dict(config or {})
    params.update(kwargs)
    family = params.pop("family", None)
    if family not in _FAMILIES:
        raise KernelConfigError(f"unknown kernel family {family!r}")
    dim = params.pop("dim", 1)
    if dim not in (1, 2):
        raise KernelConfigError("dim must be 1 or 2")
    lam = float(params.pop("lam", 1.0))
    if not lam >= 1.0:
        raise KernelConfigError("comparability constant lam must be >= 1")
    gamma_hint = params.pop("gamma_hint", None)
    if gamma_hint is not None:
        gamma_hint = float(gamma_hint)
        if not 0.0 < gamma_hint <= 1.0:
            raise KernelConfigError("gamma_hint must lie in (0, 1]")

    fields: dict = {"family": family, "dim": dim, "lam": lam, "gamma_hint": gamma_hint}
    if family == "fractional":
        s = params.pop("s", None)
        if s is None or not 0.0 < 2.0 * float(s) < 2.0:
            raise KernelConfigError("fractional family needs s with 0 < 2s < 2")
        fields["s"] = float(s)
    elif family in ("radial", "cone"):
        level = params.pop("level", None)
        if level is None:
            raise KernelConfigError(f"{family} family needs a level profile")
        fields["level"] = level
        if family == "cone":
            if dim != 2:
                raise KernelConfigError("cone family is two-dimensional")
            fields["arcs"] = _validate_arcs(params.pop("arcs", None))
    elif family == "custom":
        terms = params.pop("terms", None)
        table = params.pop("table", None)
        if (terms is None) == (table is None):
            raise KernelConfigError("custom family needs exactly one of terms= or table=")
        if table is not None:
            # the table gives the density itself; the level stores j * r**dim,
            # and log-log interpolation commutes with the power shift
            radii = tuple(float(t) for t in table[0])
            dens = tuple(float(v) for v in table[1])
            level = TabulatedLevel(radii, tuple(v * t**dim for t, v in zip(radii, dens)))
            fields["family"] = "radial"
            fields["level"] = level
        else:
            fields["terms_pos"] = tuple(terms)
    else:  # asymmetric-pair
        if dim != 1:
            raise KernelConfigError("asymmetric-pair family is one-dimensional")
        tp = params.pop("terms_pos", None)
        tn = params.pop("terms_neg", None)
        if not tp or not tn:
            raise KernelConfigError("asymmetric-pair needs terms_pos and terms_neg")
        fields["terms_pos"] = tuple(tp)
        fields["terms_neg"] = tuple(tn)
    if params:
        raise KernelConfigError(f"unknown kernel parameters: {sorted(params)}")

    spec = KernelSpec(**fields)
    _check_nonnegative(spec.ray_positive(), "positive-side")
    _check_nonnegative(spec.ray_negative(), "negative-side")
    return spec


# ---------------------------------------------------------------------------
# sampled comparability check (condition relating K to its reference density)


def comparability_sample(kernel, n_pairs: int = 10_000, seed: int = 0) -> dict:
    """Sample ``K(x, y) / j_ref(y - x)`` and compare to ``[1/lam, lam]``.

    ``kernel`` is a :class:`TwoPointKernel` or a bare :class:`KernelSpec`
    (taken translation-invariant).  Pairs where both values vanish are skipped
    (outside the angular support, or beyond the cutoff); a vanishing reference
    with nonvanishing kernel counts as a violation.
    """
    if isinstance(kernel, KernelSpec):
        kernel = TwoPointKernel(kernel)
    spec = kernel.spec
    rng = np.random.default_rng(seed)
    lo, hi = kernel.box
    x = rng.uniform(lo, hi, size=n_pairs)
    if isinstance(spec.level, TabulatedLevel):
        r_lo, r_hi = spec.level.radii[0], spec.level.radii[-1]
    else:
        sup = spec.support_radius()
        r_lo, r_hi = 1e-8, sup if math.isfinite(sup) else 10.0
    radii = np.exp(rng.uniform(math.log(r_lo), math.log(r_hi), size=n_pairs))
    if spec.dim == 1:
        sign = rng.choice((-1.0, 1.0), size=n_pairs)
        y = x + sign * radii
        z = y - x  # displacement as the kernel evaluation sees it
        keep = np.abs(z) >= r_lo
        x, y, z = x[keep], y[keep], z[keep]
        ref = spec.symmetric_profile().val(np.abs(z))
        kv = kernel(x, y)
    else:
        ang = rng.uniform(0.0, TWO_PI, size=n_pairs)
        xv = np.stack([x, rng.uniform(lo, hi, size=n_pairs)], axis=-1)
        yv = xv + np.stack([radii * np.cos(ang), radii * np.sin(ang)], axis=-1)
        z = yv - xv
        keep = np.hypot(z[..., 0], z[..., 1]) >= r_lo
        xv, yv, z = xv[keep], yv[keep], z[keep]
        ref = spec.density(z)  # symmetric families only in dim 2
        kv = kernel(xv, yv)
    both_zero = (ref == 0.0) & (kv == 0.0)
    ok = ~both_zero
    ratio = np.divide(kv, ref, out=np.full_like(kv, np.nan), where=ref > 0.0)
    bad_support = np.count_nonzero((ref == 0.0) & (kv != 0.0))
    ratio = ratio[ok & (ref > 0.0)]
    lam = spec.lam
    r_min = float(np.min(ratio)) if ratio.size else math.nan
    r_max = float(np.max(ratio)) if ratio.size else math.nan
    tol = 1e-9  # float slack for evaluation-point rounding
    passed = (
        bad_support == 0
        and ratio.size > 0
        and r_min >= (1.0 / lam) * (1.0 - tol)
        and r_max <= lam * (1.0 + tol)
    )
    return {
        "ratio_min": r_min,
        "ratio_max": r_max,
        "skipped": int(np.count_nonzero(both_zero)),
        "support_violations": int(bad_support),
        "pairs": int(ratio.size),
        "passed": bool(passed),
    }


# ---------------------------------------------------------------------------
# config round-trip (INI text with dotted subsections)


def _terms_to_section(terms) -> dict[str, str]:
    out = {}
    for i, t in enumerate(terms):
        if isinstance(t, (PowerTerm, OscOrderTerm)):
            out[f"term{i}"] = t.config_row()
        else:
            raise KernelConfigError("only power/osc-order terms serialize to config")
    return out


def _terms_from_section(sec) -> tuple:
    terms = []
    for key in sorted(sec, key=lambda k: int(k.removeprefix("term"))):
        parts = [p.strip() for p in sec[key].split(",")]
        kind, args = parts[0], [float(p) for p in parts[1:]]
        if kind == "power":
            terms.append(PowerTerm(*args))
        elif kind == "osc-order":
            terms.append(OscOrderTerm(*args))
        else:
            raise KernelConfigError(f"unknown term kind {kind!r}")
    return tuple(terms)


def kernel_to_text(spec: KernelSpec) -> str:
    """Serialize a kernel to INI text; inverse of :func:`kernel_from_text`."""
    cp = configparser.ConfigParser()
    main = {"family": spec.family, "dim": str(spec.dim), "lam": repr(spec.lam)}
    if spec.gamma_hint is not None:
        main["gamma_hint"] = repr(spec.gamma_hint)
    if spec.s is not None:
        main["s"] = repr(spec.s)
    cp["kernel"] = main
    if spec.level is not None:
        cp["kernel.level"] = spec.level.config_items()
    if spec.arcs is not None:
        cp["kernel.arcs"] = {
            f"arc{i}": f"{a!r}, {b!r}" for i, (a, b) in enumerate(spec.arcs)
        }
    if spec.family in ("custom", "asymmetric-pair") and spec.terms_pos is not None:
        key = "kernel.terms" if spec.family == "custom" else "kernel.positive"
        cp[key] = _terms_to_section(spec.terms_pos)
    if spec.terms_neg is not None:
        cp["kernel.negative"] = _terms_to_section(spec.terms_neg)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def kernel_from_text(text: str) -> KernelSpec:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise KernelConfigError(f"malformed kernel config: {exc}") from exc
    if "kernel" not in cp:
        raise KernelConfigError("kernel config needs a [kernel] section")
    main = cp["kernel"]
    params: dict = {"family": main.get("family")}
    params["dim"] = int(main.get("dim", "1"))
    params["lam"] = float(main.get("lam", "1.0"))
    if "gamma_hint" in main:
        params["gamma_hint"] = float(main["gamma_hint"])
    if "s" in main:
        params["s"] = float(main["s"])
    if "kernel.level" in cp:
        sec = cp["kernel.level"]
        kind = sec.get("kind")
        if kind not in _LEVEL_KINDS:
            raise KernelConfigError(f"unknown level kind {kind!r}")
        if kind == "constant":
            params["level"] = ConstantLevel(cutoff=float(sec.get("cutoff", "1.0")))
        elif kind == "one-minus-sin-log":
            params["level"] = OneMinusSinLogLevel(cutoff=float(sec.get("cutoff", "1.0")))
        elif kind == "power":
            params["level"] = PowerLevel(
                rho=float(sec["rho"]), cutoff=float(sec.get("cutoff", "inf"))
            )
        else:
            radii = tuple(float(x) for x in sec["radii"].split(","))
            values = tuple(float(x) for x in sec["values"].split(","))
            params["level"] = TabulatedLevel(radii, values)
    if "kernel.arcs" in cp:
        arcs = []
        sec = cp["kernel.arcs"]
        for key in sorted(sec, key=lambda k: int(k.removeprefix("arc"))):
            a, b = (float(p) for p in sec[key].split(","))
            arcs.append((a, b))
        params["arcs"] = tuple(arcs)
    if "kernel.terms" in cp:
        params["terms"] = _terms_from_section(cp["kernel.terms"])
    if "kernel.positive" in cp:
        params["terms_pos"] = _terms_from_section(cp["kernel.positive"])
    if "kernel.negative" in cp:
        params["terms_neg"] = _terms_from_section(cp["kernel.negative"])
    return build_kernel(params)


# ---------------------------------------------------------------------------
# stock kernels used across the test-suite and docs


def fractional_kernel(two_s: float = 0.5, dim: int = 1, lam: float = 1.0) -> KernelSpec:
    return build_kernel(family="fractional", s=two_s / 2.0, dim=dim, lam=lam)


def power_pair_kernel() -> KernelSpec:
    """``j = h**-1.5`` on ``h > 0`` and ``2 |h|**-1.5`` on ``h < 0``: comparable
    but genuinely asymmetric, with an odd part of the same order as the even
    part (so the asymmetry-control integral diverges)."""
    return build_kernel(
        family="asymmetric-pair",
        dim=1,
        lam=1.5,
        terms_pos=(PowerTerm(1.0, -1.5),),
        terms_neg=(PowerTerm(2.0, -1.5),),
    )


def osc_order_pair_kernel() -> KernelSpec:
    """Even part with oscillating order ``|h|**-(1+(cos(1/h)+4)/6)``, odd part
    ``sign(h) |h|**-7/6`` below radius 1: the odd part is of strictly lower
    order, so asymmetry is integrably controlled."""
    return build_kernel(
        family="asymmetric-pair",
        dim=1,
        lam=2.0,
        gamma_hint=0.99,
        terms_pos=(OscOrderTerm(1.0, 1.0 / 6.0, 4.0), PowerTerm(1.0, -7.0 / 6.0, 0.0, 1.0)),
        terms_neg=(OscOrderTerm(1.0, 1.0 / 6.0, 4.0), PowerTerm(-1.0, -7.0 / 6.0, 0.0, 1.0)),
    )


def sin_log_kernel(cutoff: float = 1.0, dim: int = 1) -> KernelSpec:
    """Radial kernel with level ``1 - sin(log |z|)``: vanishes on spheres
    accumulating at the origin, so pointwise doubling fails while variation
    control holds."""
    return build_kernel(family="radial", dim=dim, level=OneMinusSinLogLevel(cutoff=cutoff))


def cone_kernel(half_angle: float = math.pi / 8.0, cutoff: float = 1.0) -> KernelSpec:
    """Planar kernel supported on a symmetric double cone of the given
    half-angle around the x-axis, constant level up to the cutoff."""
    arcs = (
        (-half_angle, half_angle),
        (math.pi - half_angle, math.pi + half_angle),
    )
    return build_kernel(
        family="cone", dim=2, level=ConstantLevel(cutoff=cutoff), arcs=arcs
    )
