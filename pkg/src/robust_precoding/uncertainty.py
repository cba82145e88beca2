"""Bounded channel-uncertainty regions and the worst-case MSE oracle.

A region is the intersection of ellipsoids sharing one center::

    { h = center + w @ basis : w^T Q w <= radius^2 }

with ``h`` a real-embedded channel row. Geometry is handled in orthonormal
coordinates ``z`` of the subspace of admissible offsets, where every member
becomes ``z^T G z <= 1`` (see :meth:`UncertaintyRegion.geometry`).
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg, optimize

from . import kernels
from .embed import embed_matrix, embed_row, unembed_row
from .metrics import mse

PSD_FLOOR = -1e-10
CONTAIN_SLACK = 1e-12


class RegionError(ValueError):
    """Invalid uncertainty region, for example one with unbounded directions."""


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    center: np.ndarray
    basis: np.ndarray
    shape: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).ravel()
        basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        shape = np.atleast_2d(np.asarray(self.shape, dtype=float))
        radius = float(self.radius)
        if center.size == 0 or center.size % 2:
            raise RegionError("center must be a real-embedded row of even length")
        J = basis.shape[0]
        if J < 1 or basis.shape[1] != center.size:
            raise RegionError(f"basis must be J x {center.size} with J >= 1")
        if shape.shape != (J, J):
            raise RegionError(f"shape must be {J}x{J}")
        if not (np.all(np.isfinite(basis)) and np.all(np.isfinite(shape)) and np.all(np.isfinite(center))):
            raise RegionError("non-finite entries in ellipsoid data")
        if not np.allclose(shape, shape.T, atol=1e-12):
            raise RegionError("shape matrix must be symmetric")
        if np.linalg.eigvalsh(shape).min() < PSD_FLOOR:
            raise RegionError("shape matrix must be positive semidefinite")
        if np.linalg.matrix_rank(basis) < J:
            raise RegionError("basis rows must be linearly independent")
        if not radius >= 0:
            raise RegionError("radius must be nonnegative")
        for name, val in (("center", center), ("basis", basis), ("shape", (shape + shape.T) / 2)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "radius", radius)

    @property
    def n_coords(self):
        return self.basis.shape[0]

    @cached_property
    def _coord_map(self):
        # e -> w with w @ basis the orthogonal projection of e onto the row space
        return self.basis.T @ np.linalg.inv(self.basis @ self.basis.T)

    def coordinates(self, offset):
        """Return ``(w, residual)`` for an offset from the center."""
        offset = np.asarray(offset, dtype=float)
        w = offset @ self._coord_map
        resid = np.linalg.norm(offset - w @ self.basis, axis=-1)
        return w, resid

    def contains(self, h):
        e = np.asarray(h, dtype=float) - self.center
        w, resid = self.coordinates(e)
        scale = 1.0 + np.linalg.norm(e, axis=-1)
        q = np.einsum("...i,ij,...j->...", w, self.shape, w)
        return (resid <= 1e-9 * scale) & (q <= self.radius**2 + CONTAIN_SLACK)


@dataclass(frozen=True)
class RegionGeometry:
    """Admissible offsets ``z @ subspace`` with ``z^T G_l z <= 1`` for every ``l``."""

    subspace: np.ndarray  # r x 2Nt, orthonormal rows
    forms: np.ndarray  # L' x r x r, radius-normalised shape forms

    @property
    def dim(self):
        return self.subspace.shape[0]


@dataclass(frozen=True, eq=False)
class UncertaintyRegion:
    sets: tuple

    def __post_init__(self):
        sets = tuple(self.sets)
        if not sets:
            raise RegionError("a region needs at least one ellipsoid")
        c0 = sets[0].center
        for s in sets[1:]:
            if s.center.shape != c0.shape or not np.array_equal(s.center, c0):
                raise RegionError("all members of a region must share the same center")
        object.__setattr__(self, "sets", sets)
        self.geometry  # validates boundedness eagerly

    @property
    def center(self):
        return self.sets[0].center

    @property
    def dim(self):
        return self.center.size

    @property
    def n_tx(self):
        return self.dim // 2

    def __len__(self):
        return len(self.sets)

    @property
    def radius(self):
        return max(s.radius for s in self.sets)

    @property
    def is_point(self):
        return self.geometry.dim == 0

    @cached_property
    def geometry(self):
        d = self.dim
        rows = []
        for s in self.sets:
            proj = s.basis.T @ np.linalg.solve(s.basis @ s.basis.T, s.basis)
            rows.append(np.eye(d) - proj)
            if s.radius == 0:
                # w^T Q w <= 0 pins the offset to the null space of Q^{1/2} w
                rows.append((s._coord_map @ _psd_sqrt(s.shape)).T)
        S = linalg.null_space(np.vstack(rows), rcond=1e-10).T
        r = S.shape[0]
        forms = []
        for s in self.sets:
            if s.radius == 0:
                continue
            A = S @ s._coord_map
            forms.append(A @ s.shape @ A.T / s.radius**2)
        forms = np.array(forms, dtype=float).reshape(len(forms), r, r)
        if r > 0:
            total = forms.sum(axis=0) if len(forms) else np.zeros((r, r))
            if np.linalg.eigvalsh(total).min() <= 1e-12 * max(1.0, np.abs(total).max()):
                raise RegionError("region is unbounded along some admissible direction")
        S.setflags(write=False)
        forms.setflags(write=False)
        return RegionGeometry(S, forms)

    def contains(self, h):
        """Membership of one row or of a stack of rows (2Nt on the last axis)."""
        h = np.asarray(h, dtype=float)
        if h.shape[-1] != self.dim:
            raise ValueError(f"expected rows of length {self.dim}, got {h.shape}")
        out = np.ones(h.shape[:-1], dtype=bool)
        for s in self.sets:
            out &= s.contains(h)
        return bool(out) if out.ndim == 0 else out

    def boundary_scale(self, z):
        """Largest ``t`` with ``t * z`` admissible, for coordinate rows ``z``."""
        return kernels.radial_limit(np.atleast_2d(z), self.geometry.forms)

    def sample(self, n, rng, boundary_fraction=0.9):
        """Draw ``n`` admissible channels (rows of an ``n x 2Nt`` array).

        A ``boundary_fraction`` share lies on the boundary along uniformly
        random directions; the rest is uniform over the region volume.
        """
        if n < 1:
            raise ValueError("n must be positive")
        if not 0 <= boundary_fraction <= 1:
            raise ValueError("boundary_fraction must lie in [0, 1]")
        geo = self.geometry
        if geo.dim == 0:
            return np.tile(self.center, (n, 1))
        z = rng.standard_normal((n, geo.dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        t = self.boundary_scale(z)
        n_boundary = int(round(boundary_fraction * n))
        scale = np.ones(n)
        scale[n_boundary:] = rng.random(n - n_boundary) ** (1.0 / geo.dim)
        z *= (t * scale)[:, None]
        return self.center + z @ geo.subspace


def _psd_sqrt(Q):
    w, V = np.linalg.eigh(Q)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


def make_ellipsoid(center, basis, shape, radius):
    return UncertaintyRegion((Ellipsoid(center, basis, shape, radius),))


def make_spherical(center, delta):
    center = np.asarray(center, dtype=float).ravel()
    eye = np.eye(center.size)
    return make_ellipsoid(center, eye, eye, delta)


def make_interval(center, halfwidths):
    """Box region: coordinate ``l`` of the offset confined to ``+-halfwidths[l]``.

    Encoded as ``2Nt`` slabs, each with a single nonzero shape entry, sharing
    one radius (the largest halfwidth).
    """
    center = np.asarray(center, dtype=float).ravel()
    hw = np.asarray(halfwidths, dtype=float).ravel()
    if hw.shape != center.shape:
        raise RegionError("need one halfwidth per embedded coordinate")
    if np.any(hw < 0):
        raise RegionError("halfwidths must be nonnegative")
    d = center.size
    eye = np.eye(d)
    delta = float(hw.max())
    sets = []
    for l in range(d):
        Q = np.zeros((d, d))
        if hw[l] > 0:
            Q[l, l] = (delta / hw[l]) ** 2
            sets.append(Ellipsoid(center, eye, Q, delta))
        else:
            Q[l, l] = 1.0
            sets.append(Ellipsoid(center, eye, Q, 0.0))
    return UncertaintyRegion(tuple(sets))


def scaled(region, rho):
    """Region with every radius replaced by ``rho`` times its nominal value.

    Nominal radii are read relative to the region radius, so ``scaled(r, r.radius)``
    reproduces ``r``.
    """
    base = region.radius
    sets = []
    for s in region.sets:
        frac = s.radius / base if base > 0 else 1.0
        sets.append(Ellipsoid(s.center, s.basis, s.shape, rho * frac))
    return UncertaintyRegion(tuple(sets))


# --- worst-case MSE oracle -------------------------------------------------

@dataclass(frozen=True)
class OracleBudget:
    n_samples: int = 10_000
    boundary_fraction: float = 0.9
    n_starts: int = 10
    ascent_steps: int = 200
    refine_rounds: int = 50


def _mse_model(design, k, region, sigma):
    """MSE of user ``k`` as ``||r0 + z M||^2 + c`` over region coordinates ``z``."""
    g = design.g[k]
    Pr = embed_matrix(design.P)
    target = np.zeros(2 * design.n_users)
    target[k] = 1.0
    target += embed_row(design.B[k])
    r0 = g * (region.center @ Pr) - target
    M = g * (region.geometry.subspace @ Pr)
    return r0, M, g**2 * sigma**2


def worst_case_mse(design, k, region, sigma, rng=None, budget=OracleBudget()):
    """Certified lower bound on the largest MSE of user ``k`` over ``region``.

    Every value returned is attained at an admissible channel: the bound comes
    from boundary-biased sampling, projected gradient ascent from the best
    samples and, for a single ellipsoid, great-circle line searches on its
    boundary.
    """
    value, _ = worst_case_channel(design, k, region, sigma, rng, budget)
    return value


def worst_case_channel(design, k, region, sigma, rng=None, budget=OracleBudget()):
    """Like :func:`worst_case_mse` but also returns the maximising complex channel.

    The value is :func:`~robust_precoding.metrics.mse` evaluated at that
    channel, never less than the value at the center.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    h0 = unembed_row(region.center)
    at_center = mse(design, k, h0, sigma)
    geo = region.geometry
    if geo.dim == 0:
        return at_center, h0
    r0, M, c = _mse_model(design, k, region, sigma)
    H = region.sample(budget.n_samples, rng, budget.boundary_fraction)
    Z = (H - region.center) @ geo.subspace.T
    vals = kernels.quad_values(Z, M, r0)
    n_starts = min(budget.n_starts, len(vals))
    starts = np.argsort(vals)[-n_starts:]
    Z1, v1 = kernels.ascend(Z[starts], M, r0, geo.forms, budget.ascent_steps)
    best = int(np.argmax(v1))
    z, val = Z1[best], float(v1[best])
    if len(geo.forms) == 1:
        z, val = _refine_on_ellipsoid(z, val, M, r0, geo.forms[0], budget.refine_rounds)
    h = unembed_row(region.center + z @ geo.subspace)
    value = mse(design, k, h, sigma)
    if value < at_center:
        return at_center, h0
    return value, h


def _refine_on_ellipsoid(z, val, M, r0, G, rounds):
    # y = z G^{1/2} maps the ellipsoid onto the unit ball
    w, V = np.linalg.eigh(G)
    root = (V * np.sqrt(w)) @ V.T
    inv_root = (V / np.sqrt(w)) @ V.T
    N = inv_root @ M

    def f(y):
        r = r0 + y @ N
        return float(r @ r)

    y = z @ root
    ny = np.linalg.norm(y)
    if ny == 0:
        return z, val
    y = y / ny
    cur = f(y)
    thetas = np.linspace(-np.pi, np.pi, 65)[:-1]
    for _ in range(rounds):
        grad = 2.0 * N @ (r0 + y @ N)
        tau = grad - (grad @ y) * y
        nt = np.linalg.norm(tau)
        if nt < 1e-14:
            break
        tau /= nt
        arc = lambda th: f(np.cos(th) * y + np.sin(th) * tau)
        grid = np.array([arc(th) for th in thetas])
        i = int(np.argmax(grid))
        res = optimize.minimize_scalar(
            lambda th: -arc(th), bounds=(thetas[i] - 0.1, thetas[i] + 0.1),
            method="bounded", options={"xatol": 1e-12})
        th = res.x if -res.fun >= grid[i] else thetas[i]
        new = np.cos(th) * y + np.sin(th) * tau
        new /= np.linalg.norm(new)
        fn = f(new)
        if fn <= cur * (1 + 1e-15):
            break
        y, cur = new, fn
    zr = y @ inv_root
    # the refined point must stay admissible; shrink by the radial limit if needed
    t = kernels.radial_limit(zr[None], G[None])[0]
    if t < 1:
        zr = zr * t
    r = r0 + zr @ M
    vr = float(r @ r)
    if vr > val:
        return zr, vr
    return z, val
