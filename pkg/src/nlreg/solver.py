"""Galerkin discretization of the nonlocal Dirichlet problem on an interval.

The mesh covers the domain plus a collar of prescribed exterior values; data
beyond the outermost nodes enters through one-dimensional tail integrals.
With P1 hats on a uniform grid and a translation-invariant kernel, every
stiffness entry reduces to a one-dimensional integral of the kernel density
against a piecewise-cubic correlation spline, so the matrix is Toeplitz by
construction.  Entries at offset >= 3 are computed by fixed Gauss panels on
the shifted window (the integrand is analytic there); the near-diagonal
offsets use exact power-law primitives when the density is piecewise power,
falling back to adaptive quadrature otherwise.

The discrete space keeps full hats everywhere (a basis clipped at the mesh
edge would have infinite energy for strongly singular kernels); the mismatch
between the decaying edge ramp and the true exterior data is corrected by
explicit product integrals against the outermost basis functions.
"""

from __future__ import annotations

import dataclasses
import fractions
import math
import struct
from typing import Callable

import numpy as np
import scipy.linalg

from .kernels import KernelSpec
from .quadrature import QuadConfig, adaptive, annulus_integral, profile_integral


class MeshError(ValueError):
    """Invalid mesh geometry."""


class AssemblyError(RuntimeError):
    """A stiffness or load integral could not be computed."""


class SolveError(RuntimeError):
    """The discrete problem violates a solvability precondition."""


class NearResonanceError(SolveError):
    """The zero-order term sits on (or too close to) an eigenvalue."""


_F = fractions.Fraction

# Autocorrelation of the unit hat, a(t) = Int hat(s) hat(s + t) ds: even,
# piecewise cubic with knots at the integers, zero beyond |t| = 2.
_ACORR = (
    (_F(2, 3), _F(0), _F(-1), _F(1, 2)),  # 0 <= t <= 1
    (_F(4, 3), _F(-2), _F(1), -_F(1, 6)),  # 1 <= t <= 2
)


def _acorr_at(d: int) -> fractions.Fraction:
    if d == 0:
        return _F(2, 3)
    if abs(d) == 1:
        return _F(1, 6)
    return _F(0)


def _acorr_vals(t: np.ndarray) -> np.ndarray:
    t = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    near = t <= 1.0
    out[near] = 2.0 / 3.0 - t[near] ** 2 + 0.5 * t[near] ** 3
    mid = (t > 1.0) & (t < 2.0)
    out[mid] = (2.0 - t[mid]) ** 3 / 6.0
    return out


def _compose(piece, shift: int, sign: int):
    """Coefficients of P(shift + sign*z) as a cubic in z, exact."""
    out = [_F(0)] * 4
    for k, ck in enumerate(piece):
        if ck == 0:
            continue
        for i in range(k + 1):
            out[i] += ck * math.comb(k, i) * _F(shift) ** (k - i) * sign**i
    return out


def _a_window(shift: int, sign: int, m: int):
    """a(shift + sign*z) on z in [m, m+1] as exact cubic coefficients.

    The argument sweeps one integer-length window, so a single
    autocorrelation piece (or none) covers it; evenness folds negative
    windows back onto the tabulated ones.
    """
    lo = min(shift + sign * m, shift + sign * (m + 1))
    if lo >= 2 or lo <= -3:
        return None
    if lo >= 0:
        return _compose(_ACORR[lo], shift, sign)
    k = -lo - 1
    if k >= 2:
        return None
    return _compose(_ACORR[k], -shift, -sign)


def _corr_cells(d: int, drift: bool):
    """Correlation spline for offset d on integer cells, plus its tail value.

    Symmetric pairing: 2 a(d) - a(d + z) - a(d - z); drift pairing:
    a(z - d) - a(z + d).  Coefficients are expanded exactly so the
    vanishing of the low-order terms at z = 0 survives in floats; that
    cancellation is what keeps the diagonal cells integrable.
    """
    cells = {}
    for m in range(max(0, d - 2), d + 2):
        c = [_F(0)] * 4
        if drift:
            for comp, sgn in ((_a_window(-d, 1, m), 1), (_a_window(d, 1, m), -1)):
                if comp is not None:
                    for k in range(4):
                        c[k] += sgn * comp[k]
        else:
            c[0] += 2 * _acorr_at(d)
            for comp in (_a_window(d, 1, m), _a_window(d, -1, m)):
                if comp is not None:
                    for k in range(4):
                        c[k] -= comp[k]
        if any(ck != 0 for ck in c):
            cells[m] = tuple(float(ck) for ck in c)
    tail = 0.0 if drift else float(2 * _acorr_at(d))
    return cells, tail


def _cells_eval(cells, zeta: np.ndarray) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=float)
    out = np.zeros_like(zeta)
    m = np.floor(zeta).astype(int)
    for cell, cs in cells.items():
        mask = m == cell
        if mask.any():
            z = zeta[mask]
            out[mask] = ((cs[3] * z + cs[2]) * z + cs[1]) * z + cs[0]
    return out


def _power_int(q: float, lo: float, hi: float) -> float:
    """Int_lo^hi z^q dz with the logarithmic branch at q = -1."""
    if hi <= lo:
        return 0.0
    if q == -1.0:
        return math.log(hi / lo)
    e = q + 1.0
    if lo == 0.0:
        if e <= 0.0:
            raise AssemblyError("cell integral diverges at coincident points")
        return hi**e / e
    return (hi**e - lo**e) / e


def _signed_pieces(spec: KernelSpec, drift: bool):
    """Power pieces of the even (or odd) density part, or None."""
    pp = spec.ray_positive().power_pieces()
    pn = spec.ray_negative().power_pieces()
    if pp is None or pn is None:
        return None
    neg_sign = -0.5 if drift else 0.5
    out = [(0.5 * c, e, lo, hi) for c, e, lo, hi in pp]
    out += [(neg_sign * c, e, lo, hi) for c, e, lo, hi in pn]
    return tuple(out)


def _near_entry_exact(pieces, h: float, d: int, drift: bool) -> float:
    cells, tail = _corr_cells(d, drift)
    total = 0.0
    for coef, expo, lo, hi in pieces:
        if coef == 0.0:
            continue
        scale = coef * h**expo
        zlo, zhi = lo / h, hi / h
        for m, cs in cells.items():
            aa, bb = max(float(m), zlo), min(m + 1.0, zhi)
            if bb <= aa:
                continue
            for k in range(4):
                if cs[k] != 0.0:
                    total += scale * cs[k] * _power_int(expo + k, aa, bb)
        if tail != 0.0:
            aa = max(float(d + 2), zlo)
            if zhi > aa:
                total += scale * tail * _power_int(expo, aa, zhi)
    # the substitution z = h * zeta contributes one power of h on top of
    # the one from the correlation spline's own scaling
    return h * h * (-total if drift else total)


def _near_cfg(cfg: QuadConfig) -> QuadConfig:
    # Tighter than the user budget so entry errors stay below the
    # constant-annihilation tolerance; capped panel count keeps densities
    # that oscillate at unbounded frequency near 0 from grinding for
    # minutes before the honest non-convergence error.
    return dataclasses.replace(
        cfg,
        rel_tol=min(cfg.rel_tol, 1e-12),
        abs_tol=min(cfg.abs_tol, 1e-14),
        max_subdivisions=min(cfg.max_subdivisions, 1 << 14),
    )


def _near_entry_adaptive(spec: KernelSpec, h: float, d: int, drift: bool, cfg: QuadConfig) -> float:
    cells, tail = _corr_cells(d, drift)
    rp, rn = spec.ray_positive(), spec.ray_negative()
    sgn = -0.5 if drift else 0.5
    cfg = _near_cfg(cfg)

    def integrand(z):
        dens = 0.5 * rp.val(z) + sgn * rn.val(z)
        return dens * _cells_eval(cells, z / h)

    hi = (d + 2.0) * h
    breaks = [m * h for m in range(1, d + 2)]
    breaks += [b for b in set(rp.breaks()) | set(rn.breaks()) if 0.0 < b < hi]
    # geometric panels toward the diagonal: equivalent to log coordinates
    # for the singular end of the z-integral
    breaks += [h * 2.0 ** (-k) for k in range(1, 49)]
    core = adaptive(integrand, 0.0, hi, cfg, breakpoints=sorted(breaks))
    if not core.converged:
        raise AssemblyError(
            f"quadrature for the node pair (0, {d}) did not converge"
        )
    total = core.value
    if tail != 0.0:
        mass = profile_integral(rp, 0.0, hi, math.inf, cfg)
        mass = mass + profile_integral(rn, 0.0, hi, math.inf, cfg)
        if not mass.converged:
            raise AssemblyError(
                f"kernel tail behind the node pair (0, {d}) did not converge"
            )
        total += 0.5 * tail * mass.value
    return h * (-total if drift else total)


# Shifted-window Gauss grid: offsets d >= 3 see the spline -a(|s|) (symmetric
# pairing) or a(|s|) (drift) on s = z/h - d in (-2, 2), and the density is
# analytic across each unit cell there, so fixed panels are exact to
# machine precision.
_GL24 = np.polynomial.legendre.leggauss(24)


def _gl_panels(edges):
    x, w = _GL24
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes.append(mid + half * x)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


_S_NODES, _S_WEIGHTS = _gl_panels([-2.0, -1.0, 0.0, 1.0, 2.0])
_S_WA = _S_WEIGHTS * _acorr_vals(_S_NODES)


def _far_entries(spec: KernelSpec, h: float, n: int, symmetric: bool):
    """Stiffness entries for offsets 3 .. n-1 in one vectorized sweep."""
    ds = np.arange(3, n)
    ent_s = np.zeros(n)
    ent_a = np.zeros(n)
    if ds.size == 0:
        return ent_s, ent_a
    rp, rn = spec.ray_positive(), spec.ray_negative()
    t = h * (ds[:, None] + _S_NODES[None, :])
    jp = rp.val(t.ravel()).reshape(t.shape)
    jn = jp if symmetric else rn.val(t.ravel()).reshape(t.shape)
    ent_s[3:] = -h * h * (0.5 * (jp + jn) @ _S_WA)
    if not symmetric:
        ent_a[3:] = -h * h * (0.5 * (jp - jn) @ _S_WA)

    # offsets whose window straddles a profile kink get split panels
    kinks = {b for b in set(rp.breaks()) | set(rn.breaks()) if math.isfinite(b) and b > 0.0}
    redo: dict[int, set] = {}
    for b in kinks:
        for d in range(max(3, math.ceil(b / h - 2.0)), min(n, math.floor(b / h + 2.0) + 1)):
            if d - 2.0 < b / h < d + 2.0:
                redo.setdefault(d, set()).add(b / h - d)
    for d, offs in redo.items():
        edges = sorted({-2.0, -1.0, 0.0, 1.0, 2.0} | offs)
        s, w = _gl_panels(edges)
        wa = w * _acorr_vals(s)
        tt = h * (d + s)
        jps = rp.val(tt)
        jns = jps if symmetric else rn.val(tt)
        ent_s[d] = -h * h * np.sum(0.5 * (jps + jns) * wa)
        if not symmetric:
            ent_a[d] = -h * h * np.sum(0.5 * (jps - jns) * wa)
    return ent_s, ent_a


@dataclasses.dataclass(frozen=True, eq=False)
class Mesh1D:
    """Uniform grid over the domain (a, b) plus a collar on each side."""

    a: float
    b: float
    collar: float
    h: float
    nodes: np.ndarray
    interior: np.ndarray
    collar_idx: np.ndarray

    @property
    def n_interior(self) -> int:
        return int(self.interior.size)

    @property
    def domain_cells(self) -> int:
        return int(round((self.b - self.a) / self.h))

    @property
    def domain_lo(self) -> int:
        """Index of the node sitting on the left domain endpoint."""
        return int(round(self.collar / self.h))


def build_mesh(a: float, b: float, collar_width: float, h: float) -> Mesh1D:
    """Mesh the interval (a, b) with spacing h and a collar of given width.

    h must divide both the domain length and the collar width; the domain
    needs at least one interior node.
    """
    if not (math.isfinite(a) and math.isfinite(b) and b > a):
        raise MeshError("domain endpoints must satisfy a < b")
    if not (h > 0.0 and math.isfinite(h)):
        raise MeshError("mesh spacing must be positive")
    if not (collar_width > 0.0 and math.isfinite(collar_width)):
        raise MeshError("collar width must be positive")
    n_dom = (b - a) / h
    n_col = collar_width / h
    if abs(n_dom - round(n_dom)) > 1e-9 * max(1.0, n_dom):
        raise MeshError("mesh spacing does not divide the domain length")
    if abs(n_col - round(n_col)) > 1e-9 * max(1.0, n_col):
        raise MeshError("mesh spacing does not divide the collar width")
    n_dom, n_col = int(round(n_dom)), int(round(n_col))
    if n_dom < 2:
        raise MeshError("mesh has no interior nodes; shrink h")
    idx = np.arange(n_dom + 2 * n_col + 1)
    nodes = a + (idx - n_col) * h
    interior = idx[(idx > n_col) & (idx < n_col + n_dom)]
    collar_idx = idx[(idx <= n_col) | (idx >= n_col + n_dom)]
    return Mesh1D(float(a), float(b), float(collar_width), float(h), nodes, interior, collar_idx)


@dataclasses.dataclass(frozen=True)
class ExteriorData:
    """Piecewise-constant prescribed values on the complement of the domain.

    Supplies both the collar nodal values and the far-field tail loads; a
    single constant is the common case.
    """

    breaks: tuple = ()
    values: tuple = (0.0,)

    def __post_init__(self):
        breaks = tuple(float(t) for t in self.breaks)
        values = tuple(float(v) for v in self.values)
        if len(values) != len(breaks) + 1:
            raise ValueError("need one more value than breakpoints")
        if any(t1 <= t0 for t0, t1 in zip(breaks, breaks[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if not all(map(math.isfinite, breaks + values)):
            raise ValueError("exterior data must be finite")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "values", values)

    @staticmethod
    def constant(c: float) -> "ExteriorData":
        return ExteriorData((), (float(c),))

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)

    def sup(self) -> float:
        return max(abs(v) for v in self.values)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(np.asarray(self.breaks), y, side="left")
        return np.asarray(self.values, dtype=float)[idx]


def _as_exterior(g) -> ExteriorData:
    if isinstance(g, ExteriorData):
        return g
    return ExteriorData.constant(float(g))


@dataclasses.dataclass(frozen=True, eq=False)
class DiscreteFunction:
    """Nodal values on the mesh plus exterior data beyond it."""

    mesh: Mesh1D
    values: np.ndarray
    exterior: ExteriorData = ExteriorData()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.mesh.nodes.shape:
            raise ValueError("nodal values do not match the mesh")
        if not np.all(np.isfinite(vals)):
            raise ValueError("nodal values must be finite")
        object.__setattr__(self, "values", vals)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        nodes = self.mesh.nodes
        inside = (x >= nodes[0]) & (x <= nodes[-1])
        out = self.exterior(x)
        if inside.any():
            out = np.where(inside, np.interp(x, nodes, self.values), out)
        return out


@dataclasses.dataclass(frozen=True)
class ResidualReport:
    """Scaled weak-form defects over a set of test functions."""

    sup: float
    sub_defect: float
    super_defect: float
    nodes: tuple
    values: tuple


@dataclasses.dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Discrete operator pieces for one kernel on one mesh.

    ``stiffness`` carries the symmetric and drift parts together;
    ``stiffness_sym`` the symmetric part alone (Toeplitz, PSD).  The glue
    vectors correct the coupling of interior tests to the outermost
    nodes, whose basis ramps are replaced by exterior data beyond the
    mesh; the g-dependent remainder comes from :meth:`tail_load`.
    """

    mesh: Mesh1D
    kernel: KernelSpec
    cfg: QuadConfig
    stiffness: np.ndarray
    stiffness_sym: np.ndarray
    mass: np.ndarray
    w_mass: np.ndarray
    w_values: np.ndarray
    glue_left: np.ndarray
    glue_right: np.ndarray
    exact_near: bool

    def tail_load(self, g) -> np.ndarray:
        """Load vector from exterior data beyond the outermost nodes."""
        g = _as_exterior(g)
        mesh = self.mesh
        out = np.zeros(mesh.nodes.size)
        if g.is_zero:
            return out
        rp, rn = self.kernel.ray_positive(), self.kernel.ray_negative()
        x_lo, x_hi = mesh.nodes[0], mesh.nodes[-1]
        edges_r = [x_hi] + [b for b in g.breaks if b > x_hi] + [math.inf]
        vals_r = [g(0.5 * (e0 + min(e1, e0 + 1.0)) + 1e-12) for e0, e1 in zip(edges_r[:-1], edges_r[1:])]
        edges_l = [-math.inf] + [b for b in g.breaks if b < x_lo] + [x_lo]
        vals_l = [g(0.5 * (max(e0, e1 - 1.0) + e1) - 1e-12) for e0, e1 in zip(edges_l[:-1], edges_l[1:])]

        def tail_at(x: float) -> float:
            acc = 0.0
            for (e0, e1), v in zip(zip(edges_r[:-1], edges_r[1:]), vals_r):
                if v != 0.0:
                    acc += v * profile_integral(rp, 0.0, e0 - x, e1 - x, self.cfg).value
            for (e0, e1), v in zip(zip(edges_l[:-1], edges_l[1:]), vals_l):
                if v != 0.0:
                    acc += v * profile_integral(rn, 0.0, x - e1, x - e0, self.cfg).value
            return acc

        xg, wg = np.polynomial.legendre.leggauss(16)
        h = mesh.h
        lo = mesh.domain_lo
        for k in range(mesh.domain_cells):
            xl = mesh.nodes[lo + k]
            xs = xl + 0.5 * (xg + 1.0) * h
            ws = 0.5 * wg * h
            tv = np.array([tail_at(x) for x in xs])
            lam = (xs - xl) / h
            out[lo + k] += np.sum(ws * tv * (1.0 - lam))
            out[lo + k + 1] += np.sum(ws * tv * lam)
        return out

    def action(self, values: np.ndarray, g) -> np.ndarray:
        """E(u, phi_i) for all nodes i, with u given by nodal values and g."""
        values = np.asarray(values, dtype=float)
        out = self.stiffness @ values
        out += self.glue_left * values[0] + self.glue_right * values[-1]
        return out - self.tail_load(g)


def _ramp_corr_vals(t: np.ndarray) -> np.ndarray:
    """Cross-correlation of the unit hat with the outer decay ramp.

    c(t) = int hat(s) * ramp(s + t) ds with ramp(u) = (1-u) on [0, 1];
    piecewise cubic supported on (-1, 2).
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = (t >= -1.0) & (t < 0.0)
    out[m] = 1.0 / 3.0 + t[m] * (0.5 - t[m] * t[m] / 6.0)
    m = (t >= 0.0) & (t < 1.0)
    out[m] = 1.0 / 3.0 + t[m] * (0.5 + t[m] * (-1.0 + t[m] / 3.0))
    m = (t >= 1.0) & (t <= 2.0)
    out[m] = (2.0 - t[m]) ** 3 / 6.0
    return out


_G_NODES, _G_WEIGHTS = _gl_panels([-1.0, 0.0, 1.0, 2.0])
_G_WC = _G_WEIGHTS * _ramp_corr_vals(_G_NODES)


def _glue_vectors(spec: KernelSpec, mesh: Mesh1D, cfg: QuadConfig):
    """Couplings of interior tests to the exterior continuation ramps.

    Each outermost basis function decays linearly over one cell beyond the
    mesh, where the true function equals exterior data instead; replacing
    the ramp by data shifts the coupling by the product integral of the
    ramp against each test function.  Integrating out the test variable
    leaves a single z-integral of the density against the hat-ramp
    correlation spline, taken at separations >= one cell, so fixed Gauss
    panels (split at density kinks) are accurate to machine precision.
    """
    h = mesh.h
    n = mesh.nodes.size
    rp, rn = spec.ray_positive(), spec.ray_negative()
    idx = np.arange(n, dtype=float)
    kinks = {b for b in set(rp.breaks()) | set(rn.breaks()) if math.isfinite(b) and b > 0.0}

    def one_side(profile, ds):
        out = np.zeros(n)
        ok = ds >= 2.0  # closer rows touch z = 0; never consumed (collar rows)
        t = h * (ds[ok][:, None] + _G_NODES[None, :])
        out[ok] = h * h * (profile.val(t.ravel()).reshape(t.shape) @ _G_WC)
        for i in np.nonzero(ok)[0]:
            offs = {b / h - ds[i] for b in kinks if -1.0 < b / h - ds[i] < 2.0}
            if offs:
                s, w = _gl_panels(sorted({-1.0, 0.0, 1.0, 2.0} | offs))
                wc = w * _ramp_corr_vals(s)
                out[i] = h * h * np.sum(profile.val(h * (ds[i] + s)) * wc)
        return out

    right = one_side(rp, idx[-1] - idx)
    left = one_side(rn, idx)
    return left, right


def _w_nodal(mesh: Mesh1D, w) -> np.ndarray:
    out = np.zeros(mesh.nodes.size)
    lo = mesh.domain_lo
    hi = lo + mesh.domain_cells
    if w is None:
        return out
    if callable(w):
        out[lo : hi + 1] = np.asarray(w(mesh.nodes[lo : hi + 1]), dtype=float)
    else:
        out[lo : hi + 1] = float(w)
    if not np.all(np.isfinite(out)):
        raise SolveError("zero-order coefficient must be finite on the domain")
    return out


def _w_mass_matrix(mesh: Mesh1D, w_nodal: np.ndarray) -> np.ndarray:
    """Int W phi_i phi_j over the domain, with W interpolated on the cells."""
    n = mesh.nodes.size
    out = np.zeros((n, n))
    h = mesh.h
    lo = mesh.domain_lo
    for k in range(mesh.domain_cells):
        i = lo + k
        wl, wr = w_nodal[i], w_nodal[i + 1]
        out[i, i] += h * (wl / 4.0 + wr / 12.0)
        out[i + 1, i + 1] += h * (wl / 12.0 + wr / 4.0)
        off = h * (wl + wr) / 12.0
        out[i, i + 1] += off
        out[i + 1, i] += off
    return out


def assemble(kernel: KernelSpec, mesh: Mesh1D, w=None, cfg: QuadConfig | None = None) -> AssembledSystem:
    """Build the stiffness, mass and coupling pieces for one kernel.

    The symmetric part comes from the difference form and is positive
    semidefinite with exact Toeplitz structure; the drift part is skew.
    Raises AssemblyError when a pair integral diverges or fails to
    converge.
    """
    if kernel.dim != 1:
        raise AssemblyError("only interval meshes are supported")
    cfg = cfg or QuadConfig()
    n = mesh.nodes.size
    h = mesh.h
    rp, rn = kernel.ray_positive(), kernel.ray_negative()
    symmetric = rp == rn

    sym_pieces = _signed_pieces(kernel, drift=False)
    exact_near = sym_pieces is not None
    ent_s, ent_a = _far_entries(kernel, h, n, symmetric)
    for d in range(min(3, n)):
        try:
            if exact_near:
                ent_s[d] = _near_entry_exact(sym_pieces, h, d, drift=False)
            else:
                ent_s[d] = _near_entry_adaptive(kernel, h, d, drift=False, cfg=cfg)
            if not symmetric and d > 0:
                if exact_near:
                    ent_a[d] = _near_entry_exact(_signed_pieces(kernel, drift=True), h, d, drift=True)
                else:
                    ent_a[d] = _near_entry_adaptive(kernel, h, d, drift=True, cfg=cfg)
        except AssemblyError as exc:
            raise AssemblyError(f"node pair (0, {d}): {exc}") from exc
    if not np.all(np.isfinite(ent_s)) or not np.all(np.isfinite(ent_a)):
        bad = int(np.flatnonzero(~np.isfinite(ent_s + ent_a))[0])
        raise AssemblyError(f"stiffness entry for the node pair (0, {bad}) is not finite")

    stiff_sym = scipy.linalg.toeplitz(ent_s)
    stiffness = stiff_sym
    if not symmetric:
        stiffness = stiff_sym + scipy.linalg.toeplitz(-ent_a, ent_a)

    mass_col = np.zeros(n)
    mass_col[0] = 2.0 / 3.0
    mass_col[1] = 1.0 / 6.0
    mass = h * scipy.linalg.toeplitz(mass_col)

    w_vals = _w_nodal(mesh, w)
    w_mass = _w_mass_matrix(mesh, w_vals)
    glue_left, glue_right = _glue_vectors(kernel, mesh, cfg)
    return AssembledSystem(
        mesh=mesh,
        kernel=kernel,
        cfg=cfg,
        stiffness=stiffness,
        stiffness_sym=stiff_sym,
        mass=mass,
        w_mass=w_mass,
        w_values=w_vals,
        glue_left=glue_left,
        glue_right=glue_right,
        exact_near=exact_near,
    )


def _f_nodal(mesh: Mesh1D, f) -> np.ndarray:
    out = np.zeros(mesh.nodes.size)
    lo = mesh.domain_lo
    hi = lo + mesh.domain_cells
    if f is None:
        return out
    if callable(f):
        out[lo : hi + 1] = np.asarray(f(mesh.nodes[lo : hi + 1]), dtype=float)
    else:
        out[lo : hi + 1] = float(f)
    if not np.all(np.isfinite(out)):
        raise SolveError("source term must be finite on the domain")
    return out


def _check_solvable(system: AssembledSystem) -> None:
    w_plus = float(np.max(system.w_values, initial=0.0))
    if w_plus <= 0.0:
        return
    # lower bound for the total kernel mass; singular kernels make it huge
    mass = annulus_integral(system.kernel, 2.0**-40, math.inf, system.cfg).value
    if not system.kernel.lam * w_plus < mass:
        raise SolveError(
            "zero-order term exceeds the kernel mass; the problem may be ill-posed"
        )


def solve(system: AssembledSystem, f=0.0, g=0.0) -> DiscreteFunction:
    """Solve the interior system with prescribed exterior data.

    Collar nodes carry g; far-field data beyond the mesh enters through
    tail loads.  Raises NearResonanceError when the shifted stiffness is
    numerically singular.
    """
    _check_solvable(system)
    mesh = system.mesh
    g = _as_exterior(g)
    n = mesh.nodes.size
    idx_i = mesh.interior
    idx_c = mesh.collar_idx

    u = np.zeros(n)
    u[idx_c] = g(mesh.nodes[idx_c])

    rhs = (system.mass @ _f_nodal(mesh, f))[idx_i]
    rhs += system.tail_load(g)[idx_i]
    coupling = system.stiffness[np.ix_(idx_i, idx_c)] - system.w_mass[np.ix_(idx_i, idx_c)]
    rhs -= coupling @ u[idx_c]
    rhs -= system.glue_left[idx_i] * u[0] + system.glue_right[idx_i] * u[-1]

    a_mat = system.stiffness[np.ix_(idx_i, idx_i)] - system.w_mass[np.ix_(idx_i, idx_i)]
    lu, piv = scipy.linalg.lu_factor(a_mat)
    gecon = scipy.linalg.get_lapack_funcs("gecon", (a_mat,))
    rcond, _ = gecon(lu, np.linalg.norm(a_mat, 1))
    if not np.isfinite(rcond) or rcond < 1e-12:
        raise NearResonanceError(
            "stiffness is numerically singular; the zero-order term sits near resonance"
        )
    u[idx_i] = scipy.linalg.lu_solve((lu, piv), rhs)
    return DiscreteFunction(mesh, u, g)


def residual(system: AssembledSystem, u: DiscreteFunction, f=0.0, nodes=None) -> ResidualReport:
    """Weak-form defect of u over interior test functions, scaled by their mass.

    Positive defects flag a failed subsolution inequality, negative a failed
    supersolution one; the zero-order term is the one assembled into the
    system.
    """
    mesh = system.mesh
    if nodes is None:
        sel = mesh.interior
    else:
        sel = np.asarray(nodes, dtype=int)
        if not np.all(np.isin(sel, mesh.interior)):
            raise ValueError("test functions must sit at interior nodes")
    lhs = system.action(u.values, u.exterior)
    rhs = system.mass @ _f_nodal(mesh, f) + system.w_mass @ u.values
    r = (lhs - rhs)[sel] / mesh.h
    return ResidualReport(
        sup=float(np.max(np.abs(r), initial=0.0)),
        sub_defect=float(np.max(r, initial=0.0)),
        super_defect=float(np.max(-r, initial=0.0)),
        nodes=tuple(int(i) for i in sel),
        values=tuple(float(v) for v in r),
    )


def _system_for(k, mesh, cfg) -> AssembledSystem:
    if isinstance(k, AssembledSystem):
        return k
    if mesh is None:
        raise ValueError("a mesh is required when passing a kernel")
    return assemble(k, mesh, None, cfg)


def garding_check(kernel, mesh: Mesh1D | None = None, trials: int = 120, cfg: QuadConfig | None = None, seed: int = 0) -> float:
    """Empirical lower-bound constant for the form over random discrete u.

    Measures the worst quotient (D_s(u,u)/4 - E(u,u)) / ||u||^2 over random
    nodal vectors supported on the mesh and floors it at zero; symmetric
    kernels give exactly zero since the drift form is skew.  Accepts a
    prebuilt AssembledSystem in place of the kernel.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    system = _system_for(kernel, mesh, cfg)
    rng = np.random.default_rng(seed)
    n = system.mesh.nodes.size
    worst = -math.inf
    for _ in range(trials):
        u = rng.standard_normal(n)
        e_sym = u @ (system.stiffness_sym @ u)
        e_full = u @ (system.stiffness @ u)
        norm2 = u @ (system.mass @ u)
        worst = max(worst, (0.5 * e_sym - e_full) / norm2)
    return max(0.0, worst)


def poincare_lambda1(kernel, mesh: Mesh1D | None = None, cfg: QuadConfig | None = None) -> float:
    """Smallest eigenvalue of the symmetric difference form over the domain.

    Discrete functions vanish outside the domain, so the eigenproblem runs
    on the interior block; the returned value is positive for comparable
    kernels.  Accepts a prebuilt AssembledSystem in place of the kernel.
    """
    system = _system_for(kernel, mesh, cfg)
    idx = system.mesh.interior
    d_s = 2.0 * system.stiffness_sym[np.ix_(idx, idx)]
    m = system.mass[np.ix_(idx, idx)]
    vals = scipy.linalg.eigh(d_s, m, subset_by_index=(0, 0), eigvals_only=True)
    return float(vals[0])


# -- serialization ----------------------------------------------------------
#
# Both formats carry the same named sections of double matrices.
#   CSV:    one header line "name,rows,cols" per section, then `rows` lines
#           of `cols` comma-separated floats (repr round-trip).
#   binary: magic b"NLRG1\n", uint32 section count, then per section a
#           uint32 name length, the name bytes, uint64 rows, uint64 cols,
#           and rows*cols little-endian float64 in row-major order.
# The leading section name tags the object kind; kernels and quadrature
# budgets are configuration, not data, and are not serialized.

_MAGIC = b"NLRG1\n"


def _sections(obj):
    if isinstance(obj, Mesh1D):
        return [("mesh1d", np.array([[obj.a, obj.b, obj.collar, obj.h]]))]
    if isinstance(obj, DiscreteFunction):
        return [
            ("function", np.array([[obj.mesh.a, obj.mesh.b, obj.mesh.collar, obj.mesh.h]])),
            ("values", obj.values.reshape(1, -1)),
            ("ext_breaks", np.array(obj.exterior.breaks, dtype=float).reshape(1, -1)),
            ("ext_values", np.array(obj.exterior.values, dtype=float).reshape(1, -1)),
        ]
    if isinstance(obj, AssembledSystem):
        m = obj.mesh
        return [
            ("system", np.array([[m.a, m.b, m.collar, m.h]])),
            ("stiffness", obj.stiffness),
            ("stiffness_sym", obj.stiffness_sym),
            ("mass", obj.mass),
            ("w_mass", obj.w_mass),
            ("w_values", obj.w_values.reshape(1, -1)),
            ("glue_left", obj.glue_left.reshape(1, -1)),
            ("glue_right", obj.glue_right.reshape(1, -1)),
        ]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_csv(obj, path) -> None:
    """Serialize a mesh, discrete function, or assembled system to CSV."""
    with open(path, "w", encoding="ascii") as fh:
        for name, mat in _sections(obj):
            rows, cols = mat.shape
            fh.write(f"{name},{rows},{cols}\n")
            for row in mat:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_binary(obj, path) -> None:
    """Serialize a mesh, discrete function, or assembled system to binary."""
    secs = _sections(obj)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(secs)))
        for name, mat in secs:
            raw = name.encode("ascii")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<QQ", *mat.shape))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def _rebuild(secs):
    kind, head = secs[0]
    mesh = build_mesh(*head[0])
    if kind == "mesh1d":
        return mesh
    body = dict(secs[1:])
    if kind == "function":
        ext = ExteriorData(
            breaks=tuple(body["ext_breaks"][0]), values=tuple(body["ext_values"][0])
        )
        return DiscreteFunction(mesh=mesh, values=body["values"][0], exterior=ext)
    if kind == "system":
        # numeric content only; the kernel and quadrature budget are rebuilt
        # by the caller when needed
        vecs = {"w_values", "glue_left", "glue_right"}
        return {"mesh": mesh, **{k: (v[0] if k in vecs else v) for k, v in body.items()}}
    raise ValueError(f"unknown object tag {kind!r}")


def read_csv(path):
    """Inverse of :func:`write_csv`; systems come back as plain arrays."""
    secs = []
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        name, rows, cols = lines[i].split(",")
        rows, cols = int(rows), int(cols)
        mat = np.zeros((rows, cols))
        for r in range(rows):
            line = lines[i + 1 + r]
            if line:
                mat[r] = [float(v) for v in line.split(",")]
        secs.append((name, mat))
        i += 1 + rows
    return _rebuild(secs)


def read_binary(path):
    """Inverse of :func:`write_binary`; systems come back as plain arrays."""
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("not a recognized binary dump")
        (count,) = struct.unpack("<I", fh.read(4))
        secs = []
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode("ascii")
            rows, cols = struct.unpack("<QQ", fh.read(16))
            mat = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8")
            secs.append((name, mat.reshape(rows, cols).astype(float)))
    return _rebuild(secs)
