"""End-to-end design: power minimisation, fairness and largest-uncertainty
bisections, and THP user orderings."""
import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .conic import Tolerances, feasibility_verdict, solve, solve_robustly
from .formulations import (
    FEAS_MARGIN,
    LMI_BUDGET,
    DeltaProbe,
    FormulationError,
    MinimaxProbe,
    build_feasibility_fixed,
    build_robust,
    extract_design,
    lmi_count,
)
from .uncertainty import OracleBudget, worst_case_mse

log = logging.getLogger(__name__)

CERT_TOL = 1e-6


@dataclass
class DesignOutcome:
    """Result of a power-minimising design.

    ``design``, ``certificates`` and ``zeta`` follow the precoding order given
    by ``ordering`` (``ordering[p]`` is the user at position ``p``).
    """

    status: str
    design: object = None
    power: float = np.inf
    certificates: np.ndarray = None
    zeta: np.ndarray = None
    ordering: tuple = ()
    formulation: str = ""
    solver_status: str = ""

    @property
    def feasible(self):
        """A design exists and passed its worst-case certificate."""
        return self.design is not None and self.status in ("optimal", "inaccurate") and (
            self.certificates is None or self.certified)

    @property
    def max_certificate(self):
        return np.nan if self.certificates is None else float(np.max(self.certificates))

    @property
    def certified(self):
        return self.certificates is not None and bool(np.all(self.certificates <= self.zeta + CERT_TOL))


@dataclass(frozen=True)
class BisectionConfig:
    lower: float = 0.0
    upper: float = 1.0
    tol: float = 1e-4
    max_iter: int = 60

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("bisection needs lower < upper")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tolerance and iteration cap must be positive")


@dataclass
class BisectionTrace:
    lower: float
    upper: float
    iterations: int = 0
    probes: list = field(default_factory=list)  # (value, feasible)

    def record(self, value, feasible):
        self.probes.append((float(value), bool(feasible)))


def certify(design, data, rng=None, budget=OracleBudget()):
    """Worst-case MSE of every user over its region (precoding order)."""
    if rng is None:
        rng = np.random.default_rng(0)
    d = data.ordered()
    return np.array([worst_case_mse(design, k, d.regions[k], d.sigma[k], rng, budget)
                     for k in range(d.n_users)])


def choose_intersection(data, method="auto"):
    if method != "auto":
        return method
    if any(len(r) > 1 for r in data.regions) and lmi_count(data) > LMI_BUDGET:
        return "conservative"
    return "exact"


def solve_power_min(data, method="auto", certify_design=True, rng=None, budget=OracleBudget(),
                    tolerances=None, solver=None):
    """Minimum-power design meeting every MSE target over every admissible channel.

    ``method`` is ``"exact"``, ``"conservative"`` or ``"auto"`` (exact unless
    the intersection has no exact form or exceeds the LMI budget).
    Infeasible instances return ``status="infeasible"`` and no design.
    """
    intersection = choose_intersection(data, method)
    try:
        prog = build_robust(data, intersection)
    except FormulationError:
        if method != "auto":
            raise
        intersection = "conservative"
        prog = build_robust(data, intersection)
    tol = tolerances or Tolerances()
    res = solve_robustly(prog, tol, solver)
    zeta = data.ordered().targets.zeta
    out = DesignOutcome(res.status, zeta=zeta, ordering=data.ordering,
                        formulation=intersection, solver_status=res.status)
    usable = res.status == "optimal" or (
        res.status == "inaccurate" and res.residuals is not None and res.residuals.ok(tol.verify))
    if not usable:
        if res.status == "unbounded":
            out.status = "failed"
        return out
    design = extract_design(prog, res)
    out.design = design
    out.power = design.power
    if certify_design:
        out.certificates = certify(design, data, rng, budget)
        if not out.certified:
            out.status = "uncertified"
            log.warning("design failed its worst-case certificate: %s > %s", out.certificates, zeta)
    return out


# -- fairness (minimax MSE) --------------------------------------------------------

@dataclass
class MinimaxOutcome:
    zeta0: float
    sqrt_bracket: tuple
    design: object
    trace: BisectionTrace
    certificates: np.ndarray = None
    upper_failed: bool = False

    @property
    def iterations(self):
        return self.trace.iterations


def _probe(prog, solver):
    feasible, res = feasibility_verdict(prog, solver=solver)
    return feasible, res


def solve_minimax(data, p_total, config=BisectionConfig(1e-3, 1.0), certify_design=True, rng=None,
                  budget=OracleBudget(), intersection="conservative", solver=None):
    """Smallest common MSE level ``zeta0`` achievable for all users and all
    admissible channels with ``tr(P^H P) <= p_total``, by bisection on ``sqrt(zeta0)``.
    """
    if p_total <= 0:
        raise ValueError("p_total must be positive")
    trace = BisectionTrace(config.lower, config.upper)

    def probe(s):
        # sqrt(zeta0) = 1 is feasible in exact arithmetic (g -> 0); no margin there
        margin = 0.0 if s >= 1.0 else FEAS_MARGIN
        prog = build_feasibility_fixed(data, MinimaxProbe(s, p_total), intersection=intersection,
                                       margin=margin)
        ok, res = _probe(prog, solver)
        trace.record(s, ok)
        return ok, (extract_design(prog, res) if ok else None)

    ok, design = probe(config.upper)
    if not ok:
        # only numerically possible: zeta0 = 1 is always attainable with g -> 0
        warnings.warn(f"minimax probe failed at the upper bracket sqrt(zeta0)={config.upper}",
                      RuntimeWarning)
        return MinimaxOutcome(config.upper**2, (config.upper, config.upper), None, trace,
                              upper_failed=True)
    lo, hi = config.lower, config.upper
    ok_lo, d_lo = probe(lo)
    if ok_lo:
        hi, design = lo, d_lo
    else:
        while hi - lo > config.tol and trace.iterations < config.max_iter:
            mid = 0.5 * (lo + hi)
            ok, d_mid = probe(mid)
            trace.iterations += 1
            if ok:
                hi, design = mid, d_mid
            else:
                lo = mid
    trace.lower, trace.upper = lo, hi
    out = MinimaxOutcome(hi**2, (lo, hi), design, trace)
    if certify_design:
        out.certificates = certify(design, data, rng, budget)
    return out


# -- largest feasible uncertainty ----------------------------------------------------

@dataclass
class MaxDeltaOutcome:
    delta_max: float
    bracket: tuple
    trace: BisectionTrace
    cap_hit: bool = False
    design: object = None
    lower_bound_only: bool = False

    @property
    def iterations(self):
        return self.trace.iterations


def solve_max_delta(data, tol=1e-4, cap_exp=10, max_iter=60, intersection="conservative", solver=None):
    """Largest scale ``rho`` of the regions for which a finite-power design exists.

    Regions are rescaled with :func:`~robust_precoding.uncertainty.scaled`, so
    ``rho`` replaces the region radius. For intersections the summed-multiplier
    LMI is used and the result is a lower bound.
    """
    trace = BisectionTrace(0.0, 1.0)
    lower_only = any(len(r) > 1 for r in data.regions)

    def probe(rho):
        prog = build_feasibility_fixed(data, DeltaProbe(rho), intersection=intersection)
        ok, res = _probe(prog, solver)
        trace.record(rho, ok)
        return ok, (extract_design(prog, res) if ok else None)

    ok0, design = probe(0.0)
    if not ok0:
        return MaxDeltaOutcome(0.0, (0.0, 0.0), trace, design=None, lower_bound_only=lower_only)
    lo, hi = 0.0, 1.0
    cap = 2.0**cap_exp
    cap_hit = False
    while True:
        ok, d_hi = probe(hi)
        if not ok:
            break
        lo, design = hi, d_hi
        if hi >= cap:
            cap_hit = True
            break
        hi *= 2.0
    if not cap_hit:
        while hi - lo > tol and trace.iterations < max_iter:
            mid = 0.5 * (lo + hi)
            ok, d_mid = probe(mid)
            trace.iterations += 1
            if ok:
                lo, design = mid, d_mid
            else:
                hi = mid
    trace.lower, trace.upper = lo, hi
    return MaxDeltaOutcome(lo, (lo, hi), trace, cap_hit, design, lower_only)


# -- orderings ----------------------------------------------------------------------

def order_blast(H):
    """Successive pseudo-inverse ordering of the channel estimates (rows of ``H``).

    Positions are filled from last to first; each step puts the remaining user
    with the smallest pseudo-inverse column norm (best post-nulling gain) at the
    latest free position. Rank-deficient estimates fall back to row-norm
    ordering with a ``RuntimeWarning``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    K = H.shape[0]
    if np.linalg.matrix_rank(H) < K:
        warnings.warn("channel estimates are rank deficient; using norm ordering", RuntimeWarning)
        norms = np.linalg.norm(H, axis=1)
        return tuple(int(i) for i in np.argsort(norms, kind="stable"))
    remaining = list(range(K))
    order = [None] * K
    for pos in range(K - 1, -1, -1):
        pinv = np.linalg.pinv(H[remaining])
        col_norms = np.linalg.norm(pinv, axis=0)
        pick = int(np.argmin(col_norms))
        order[pos] = remaining.pop(pick)
    return tuple(order)


def ordering_cost(H, gamma, sigma, order):
    """Sum over positions of ``gamma / SINR`` with an identity precoder and
    earlier streams pre-subtracted."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    K = H.shape[0]
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (K,))
    total = 0.0
    for p, u in enumerate(order):
        desired = abs(H[u, p]) ** 2
        if desired == 0:
            return np.inf
        interf = np.sum(np.abs(H[u, p + 1:K]) ** 2)
        total += gamma[u] * (interf + sigma[u] ** 2) / desired
    return total


def order_weighted(H, gamma, sigma):
    """Exhaustive search for the ordering minimising :func:`ordering_cost` (K <= 8).

    Ties go to the lexicographically smallest permutation.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    K, nt = H.shape
    if K > 8:
        raise ValueError("exhaustive ordering search is limited to K <= 8")
    if nt < K:
        raise ValueError("the identity-precoder proxy needs at least as many antennas as users")
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(K)):
        c = ordering_cost(H, gamma, sigma, perm)
        if best is None or c < best_cost:
            best, best_cost = perm, c
    return tuple(best)
