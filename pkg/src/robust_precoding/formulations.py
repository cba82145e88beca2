"""Conic programs for power-minimising transceiver design.

Every user's MSE requirement becomes, after dividing through by the receiver
gain ``g_k = 1/f_k``, the second-order cone::

    || [h_k P_r - f_k m_k - bt_k, sigma_k] || <= sqrt(zeta_k) f_k

over the real embedding ``P_r`` of the precoder and the scaled feedback row
``bt_k = b_k / g_k``. When ``h_k`` ranges over an ellipsoid the infinite family
of cones is replaced by one linear matrix inequality in ``(P, bt, f)`` and a
nonnegative multiplier; for an intersection of ellipsoids the multipliers are
summed, which is a conservative restriction.
"""
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .conic import Affine, ConicProgram, lin_comb
from .embed import as_complex_matrix, embed_row, unembed_matrix
from .metrics import Design, QoSTargets
from .uncertainty import UncertaintyRegion, make_spherical, scaled

F_FLOOR = 1e-6
F_CEIL = 1e4
FEAS_MARGIN = 1e-7
LMI_BUDGET = 64
VERTEX_BUDGET = 4096


class FormulationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Channel estimates (rows of ``H``), noise levels, targets and regions.

    ``ordering[p]`` is the user precoded at position ``p``; it only matters in
    ``thp`` mode.
    """

    H: np.ndarray
    sigma: np.ndarray
    targets: QoSTargets
    regions: tuple = None
    mode: str = "linear"
    ordering: tuple = None

    def __post_init__(self):
        H = as_complex_matrix(self.H, "H")
        K, nt = H.shape
        sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), (K,)).copy()
        if np.any(sigma <= 0):
            raise FormulationError("noise levels must be positive")
        if len(self.targets) != K:
            raise FormulationError(f"need {K} targets, got {len(self.targets)}")
        if self.mode not in ("linear", "thp"):
            raise FormulationError(f"mode must be 'linear' or 'thp', got {self.mode!r}")
        regions = self.regions
        if regions is None:
            regions = tuple(make_spherical(embed_row(h), 0.0) for h in H)
        regions = tuple(regions)
        if len(regions) != K:
            raise FormulationError(f"need {K} regions, got {len(regions)}")
        for k, reg in enumerate(regions):
            if not isinstance(reg, UncertaintyRegion):
                raise FormulationError("regions must be UncertaintyRegion instances")
            if reg.dim != 2 * nt:
                raise FormulationError(f"region {k} has dimension {reg.dim}, expected {2 * nt}")
            if not np.allclose(reg.center, embed_row(H[k]), rtol=0, atol=1e-12):
                raise FormulationError(f"region {k} is not centred on the estimate of user {k}")
        ordering = tuple(range(K)) if self.ordering is None else tuple(int(i) for i in self.ordering)
        if sorted(ordering) != list(range(K)):
            raise FormulationError(f"ordering {ordering} is not a permutation of {K} users")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "ordering", ordering)

    @classmethod
    def spherical(cls, H, sigma, targets, delta=0.0, **kw):
        H = as_complex_matrix(H, "H")
        deltas = np.broadcast_to(np.asarray(delta, dtype=float), (H.shape[0],))
        regions = tuple(make_spherical(embed_row(h), d) for h, d in zip(H, deltas))
        return cls(H, sigma, targets, regions, **kw)

    @property
    def n_users(self):
        return self.H.shape[0]

    @property
    def n_tx(self):
        return self.H.shape[1]

    def with_(self, **changes):
        kw = dict(H=self.H, sigma=self.sigma, targets=self.targets, regions=self.regions,
                  mode=self.mode, ordering=self.ordering)
        kw.update(changes)
        return ProblemData(**kw)

    def ordered(self):
        """Same instance with users relabelled into precoding order."""
        o = list(self.ordering)
        t = self.targets
        targets = QoSTargets(t.zeta[o], None if t.sinr is None else t.sinr[o])
        return ProblemData(self.H[o], self.sigma[o], targets, tuple(self.regions[i] for i in o),
                           self.mode, None)

    def perfect_csi(self):
        return self.with_(regions=None)

    def scaled_regions(self, rho):
        return self.with_(regions=tuple(scaled(r, rho) for r in self.regions))


@dataclass
class VariableLayout:
    """Where each design entry lives among the conic variables."""

    n_tx: int
    n_users: int
    thp: bool
    P_real: np.ndarray = field(init=False)  # 2Nt x 2K array of Affine, tied blocks
    f: list = field(default_factory=list)
    bt: dict = field(default_factory=dict)  # (k, j) -> (re, im) for j < k
    mu: dict = field(default_factory=dict)
    t: Affine = None

    @classmethod
    def declare(cls, prog, n_tx, n_users, thp):
        lay = cls(n_tx, n_users, thp)
        nt, K = n_tx, n_users
        re = [[prog.var(f"Pre[{i},{j}]") for j in range(K)] for i in range(nt)]
        im = [[prog.var(f"Pim[{i},{j}]") for j in range(K)] for i in range(nt)]
        Pr = np.empty((2 * nt, 2 * K), dtype=object)
        for i in range(nt):
            for j in range(K):
                Pr[i, j] = re[i][j]
                Pr[i, K + j] = im[i][j]
                Pr[nt + i, j] = -im[i][j]
                Pr[nt + i, K + j] = re[i][j]
        lay.P_real = Pr
        lay.f = [prog.var(f"f[{k}]") for k in range(K)]
        if thp:
            for k in range(K):
                for j in range(k):
                    lay.bt[k, j] = (prog.var(f"bre[{k},{j}]"), prog.var(f"bim[{k},{j}]"))
        return lay

    def row_times_P(self, x):
        """``x @ P_r`` for a constant real row ``x`` of length 2Nt."""
        x = np.asarray(x, dtype=float)
        cols = self.P_real.shape[1]
        return [lin_comb(x, self.P_real[:, c]) for c in range(cols)]

    def nominal_row(self, k, h_real, sigma):
        """``[h P_r - f_k m_k - bt_k, sigma_k]`` as a list of affine entries."""
        K = self.n_users
        row = self.row_times_P(h_real)
        row[k] = row[k] - self.f[k]
        for j in range(k):
            if (k, j) in self.bt:
                re, im = self.bt[k, j]
                row[j] = row[j] - re
                row[K + j] = row[K + j] - im
        row.append(Affine.constant(sigma))
        return row

    def direction_rows(self, basis, scale):
        """``scale * [phi_j P_r, 0]`` for each basis row ``phi_j``."""
        out = []
        for phi in np.atleast_2d(basis):
            r = self.row_times_P(scale * phi)
            r.append(Affine())
            out.append(r)
        return out


def lmi_canonical(region):
    """Common basis, radius-normalised shapes and scale of a region.

    Returns ``(basis, shapes, scale)`` such that the region is
    ``{center + scale * theta @ basis : theta^T Q theta <= 1 for Q in shapes}``.
    Members must share one basis; zero-radius members pin ``theta`` to the null
    space of their shape and are folded into a reduced basis.
    """
    sets = region.sets
    basis = sets[0].basis
    for s in sets[1:]:
        if s.basis.shape != basis.shape or not np.allclose(s.basis, basis, atol=1e-14):
            raise FormulationError("LMI reformulation needs members that share one basis")
    scale = region.radius
    if scale == 0:
        return basis, [np.eye(basis.shape[0])], 0.0
    keep = np.eye(basis.shape[0])
    for s in sets:
        if s.radius == 0:
            keep = keep @ linalg.null_space(s.shape @ keep, rcond=1e-12)
    shapes = [keep.T @ s.shape @ keep * (scale / s.radius) ** 2 for s in sets if s.radius > 0]
    return keep.T @ basis, shapes, scale


def robust_soc_lmi(prog, nominal, directions, bound, shapes, mode="summed", name="",
                   bound_directions=None, shift=None, mu_prefix=None):
    """Replace ``||nominal + sum_j theta_j directions[j]|| <= bound`` for all
    ``theta`` with ``theta^T Q theta <= 1`` (every ``Q`` in ``shapes``) by LMIs.

    ``mode="summed"`` emits one LMI whose multiplier is the sum over shapes;
    with a single shape it is exact. ``mode="per_set"`` emits one exact LMI per
    shape, which enforces the constraint over the *union* of the sets.
    ``shift`` is subtracted along the diagonal (used for margin probes).
    Returns the list of multiplier expressions.
    """
    if bound_directions is not None and np.any(np.asarray(bound_directions) != 0):
        raise FormulationError("uncertainty may only enter inside the norm")
    J = len(directions)
    n = len(nominal)
    order = 1 + J + n
    prefix = mu_prefix or f"mu[{name}]"
    groups = [list(range(len(shapes)))] if mode == "summed" else [[l] for l in range(len(shapes))]
    if mode not in ("summed", "per_set"):
        raise FormulationError(f"unknown intersection mode {mode!r}")
    mus = []
    for gi, group in enumerate(groups):
        mu = [prog.var(f"{prefix}[{gi},{l}]") for l in group]
        prog.add_nonneg(mu, name=f"{name}:mu>=0")
        mus.extend(mu)
        musum = sum(mu, Affine())
        ent = {(0, 0): bound - musum}
        for a in range(J):
            for b in range(a + 1):
                ent[1 + a, 1 + b] = lin_comb([shapes[l][a, b] for l in group], mu)
        for c in range(n):
            ent[1 + J + c, 0] = nominal[c]
            for j in range(J):
                ent[1 + J + c, 1 + j] = directions[j][c]
            ent[1 + J + c, 1 + J + c] = bound
        if shift is not None:
            for i in range(order):
                ent[i, i] = ent[i, i] - shift
        prog.add_psd(order, ent, name=f"{name}:lmi{gi}")
    return mus


def parallelotope_vertices(shapes):
    """Vertices of ``{theta : theta^T Q theta <= 1 for all Q}`` when every ``Q``
    has rank one and their normals form a square invertible system; else None."""
    J = shapes[0].shape[0]
    if len(shapes) != J:
        return None
    normals = []
    for Q in shapes:
        w, V = np.linalg.eigh(Q)
        if np.sum(w > 1e-12 * max(1.0, w.max())) != 1:
            return None
        normals.append(V[:, -1] * np.sqrt(w[-1]))
    N = np.array(normals)
    if np.linalg.matrix_rank(N) < J:
        return None
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=J)))
    return np.linalg.solve(N, signs.T).T


def _user_constraint(prog, lay, k, region, sigma, bound, intersection, name):
    """Add the (robust) MSE constraint of user ``k``; returns block count added."""
    nominal = lay.nominal_row(k, region.center, sigma)
    basis, shapes, scale = lmi_canonical(region)
    if scale == 0 or len(shapes) == 0:
        prog.add_soc(bound, nominal, name=name)
        return 1
    directions = lay.direction_rows(basis, scale)
    if len(shapes) == 1:
        robust_soc_lmi(prog, nominal, directions, bound, shapes, "summed", name)
        return 1
    if intersection == "conservative":
        robust_soc_lmi(prog, nominal, directions, bound, shapes, "summed", name)
        return 1
    if intersection == "per_set":
        robust_soc_lmi(prog, nominal, directions, bound, shapes, "per_set", name)
        return len(shapes)
    if intersection != "exact":
        raise FormulationError(f"unknown intersection handling {intersection!r}")
    verts = parallelotope_vertices(shapes)
    if verts is None:
        raise FormulationError(
            "no exact reformulation for this intersection; use intersection='conservative'")
    if len(verts) > VERTEX_BUDGET:
        raise FormulationError(f"{len(verts)} vertices exceed the budget of {VERTEX_BUDGET}")
    for v_i, theta in enumerate(verts):
        h = region.center + scale * theta @ basis
        prog.add_soc(bound, lay.nominal_row(k, h, sigma), name=f"{name}:v{v_i}")
    return len(verts)


def _base_program(data, kind):
    d = data.ordered()
    prog = ConicProgram()
    prog.meta.update(kind=kind, mode=d.mode, ordering=data.ordering)
    lay = VariableLayout.declare(prog, d.n_tx, d.n_users, d.mode == "thp")
    prog.add_nonneg([f - F_FLOOR for f in lay.f], name="f>=floor")
    # vacuous targets (zeta = 1) approach their infimum only as f -> inf
    prog.add_nonneg([F_CEIL - f for f in lay.f], name="f<=ceil")
    prog.meta["layout"] = lay
    return d, prog, lay


def _power_epigraph(prog, lay):
    lay.t = prog.var("t")
    prog.add_soc(lay.t, list(lay.P_real.ravel()), name="power")
    prog.minimize(lay.t)


def build_perfect_csi(data):
    """Power minimisation with the estimates taken as the true channels."""
    d, prog, lay = _base_program(data, "perfect_csi")
    _power_epigraph(prog, lay)
    zeta = d.targets.zeta
    for k in range(d.n_users):
        prog.add_soc(np.sqrt(zeta[k]) * lay.f[k], lay.nominal_row(k, embed_row(d.H[k]), d.sigma[k]),
                     name=f"mse[{k}]")
    return prog


def build_robust(data, intersection="exact"):
    d, prog, lay = _base_program(data, f"robust_{intersection}")
    _power_epigraph(prog, lay)
    zeta = d.targets.zeta
    for k in range(d.n_users):
        _user_constraint(prog, lay, k, d.regions[k], d.sigma[k], np.sqrt(zeta[k]) * lay.f[k],
                         intersection, f"mse[{k}]")
    return prog


def build_robust_exact(data):
    """Exact robust counterpart: one LMI per single-ellipsoid user, vertex
    cones for parallelotope (interval) intersections."""
    return build_robust(data, "exact")


def build_robust_conservative(data):
    """One LMI per user with summed multipliers; an upper bound on the exact power."""
    return build_robust(data, "conservative")


def lmi_count(data):
    return sum(len(r) for r in data.regions)


@dataclass(frozen=True)
class DeltaProbe:
    """Fixed uncertainty scale ``rho`` (regions scaled to radius ``rho``)."""

    rho: float


@dataclass(frozen=True)
class MinimaxProbe:
    """Common MSE level ``sqrt(zeta0)`` under a total power cap."""

    sqrt_zeta0: float
    p_total: float


def build_feasibility_fixed(data, fixed, intersection="conservative", margin=FEAS_MARGIN):
    """Zero-objective feasibility program with one parameter held fixed.

    The probed parameter is tightened by ``margin`` (larger region, smaller MSE
    level) so that a feasible verdict certifies the nominal value.
    """
    if isinstance(fixed, DeltaProbe):
        if fixed.rho < 0:
            raise FormulationError("rho must be nonnegative")
        probe = data.scaled_regions(fixed.rho + margin if fixed.rho > 0 else 0.0)
        zeta_bounds = np.sqrt(probe.ordered().targets.zeta)
        kind = "delta_probe"
    elif isinstance(fixed, MinimaxProbe):
        if fixed.sqrt_zeta0 < 0 or fixed.p_total <= 0:
            raise FormulationError("need sqrt_zeta0 >= 0 and p_total > 0")
        probe = data
        zeta_bounds = np.full(data.n_users, max(fixed.sqrt_zeta0 - margin, 0.0))
        kind = "minimax_probe"
    else:
        raise FormulationError(f"unsupported fixed parameter {fixed!r}")
    d, prog, lay = _base_program(probe, kind)
    prog.meta["fixed"] = fixed
    if isinstance(fixed, MinimaxProbe):
        cap = np.sqrt(2.0 * fixed.p_total)
        prog.add_soc(Affine.constant(cap), list(lay.P_real.ravel()), name="power_cap")
    for k in range(d.n_users):
        _user_constraint(prog, lay, k, d.regions[k], d.sigma[k], zeta_bounds[k] * lay.f[k],
                         intersection, f"mse[{k}]")
    prog.minimize(Affine())
    return prog


def extract_design(prog, result):
    """Recover ``(P, B, g)`` in precoding order from a solved program."""
    lay = prog.meta["layout"]
    x = result.x
    Pr = np.array([[e.value(x) for e in row] for row in lay.P_real])
    P = unembed_matrix(Pr)
    f = np.array([e.value(x) for e in lay.f])
    g = 1.0 / f
    K = lay.n_users
    B = np.zeros((K, K), dtype=complex)
    for (k, j), (re, im) in lay.bt.items():
        B[k, j] = g[k] * (re.value(x) + 1j * im.value(x))
    return Design(P, B, g)


def lmi_margin(design, data, k, solver=None):
    """Largest ``s`` with the user-``k`` LMI at the fixed ``design`` being
    ``>= s I`` for some nonnegative multiplier; ``s >= 0`` means certified.

    ``design`` and ``k`` are in precoding order of ``data``.
    """
    from .conic import solve

    d = data.ordered()
    region = d.regions[k]
    basis, shapes, scale = lmi_canonical(region)
    prog = ConicProgram()
    s = prog.var("s")
    g = design.g[k]
    f = 1.0 / g
    K = design.n_users
    from .embed import embed_matrix

    Pr = embed_matrix(design.P)
    m = np.zeros(2 * K)
    m[k] = 1.0
    bt = embed_row(design.B[k]) * f
    nominal = [Affine.constant(v) for v in np.append(region.center @ Pr - f * m - bt, d.sigma[k])]
    dirs = [[Affine.constant(v) for v in np.append(scale * phi @ Pr, 0.0)] for phi in basis]
    bound = Affine.constant(np.sqrt(d.targets.zeta[k]) * f)
    robust_soc_lmi(prog, nominal, dirs, bound, shapes, "summed", "margin", shift=s)
    prog.add_nonneg([1.0 - s], name="s<=1")
    prog.minimize(-s)
    res = solve(prog, solver=solver)
    if res.status not in ("optimal", "inaccurate"):
        raise RuntimeError(f"margin probe failed with status {res.status}")
    return res.value("s")
