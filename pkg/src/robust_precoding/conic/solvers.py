"""Adapters that run a :class:`ConicProgram` through an interior-point solver."""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .program import check_solution

log = logging.getLogger(__name__)

STATUSES = ("optimal", "infeasible", "unbounded", "inaccurate", "failed")


@dataclass(frozen=True)
class Tolerances:
    feas: float = 1e-8
    gap: float = 1e-8
    # independent residual check applied before reporting ``optimal``
    verify: float = 1e-6
    max_iter: int = 200

    def tighter(self, factor=10.0):
        return replace(self, feas=self.feas / factor, gap=self.gap / factor)


@dataclass
class SolveResult:
    status: str
    x: np.ndarray = None
    objective: float = np.nan
    residuals: object = None
    solver: str = ""
    diagnostics: dict = field(default_factory=dict)
    program: object = None

    @property
    def optimal(self):
        return self.status == "optimal"

    def value(self, name):
        return float(self.x[self.program.index(name)])

    def values(self, names):
        idx = [self.program.index(n) for n in names]
        return self.x[idx]

    @property
    def point(self):
        return None if self.x is None else self.program.point(self.x)


def _finish(program, status, x, solver, tol, diagnostics):
    res = SolveResult(status, x, solver=solver, diagnostics=diagnostics, program=program)
    if x is not None and np.all(np.isfinite(x)):
        res.residuals = check_solution(program, x)
        res.objective = res.residuals.objective
        if status == "optimal" and not res.residuals.ok(tol.verify):
            worst = res.residuals.worst()
            res.diagnostics["downgraded"] = f"{worst.name}:{worst.violation:.3e}"
            res.status = "inaccurate"
    elif status == "optimal":
        res.status = "failed"
    return res


# -- Clarabel -------------------------------------------------------------------

_CLARABEL_STATUS = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostSolved": "inaccurate",
    "AlmostPrimalInfeasible": "inaccurate",
    "AlmostDualInfeasible": "inaccurate",
}


def solve_clarabel(program, tol):
    import clarabel

    A, b = program.compile()
    scale = np.ones(len(b))
    cones = []
    row = 0
    for blk in program.blocks:
        if blk.cone == "zero":
            cones.append(clarabel.ZeroConeT(blk.dim))
        elif blk.cone == "nonneg":
            cones.append(clarabel.NonnegativeConeT(blk.dim))
        elif blk.cone == "soc":
            cones.append(clarabel.SecondOrderConeT(blk.dim))
        else:
            # clarabel's svec is the upper triangle by columns, which visits the
            # same (i, j) pairs as our row-major lower triangle
            cones.append(clarabel.PSDTriangleConeT(blk.order))
            k = 0
            for i in range(blk.order):
                for j in range(i + 1):
                    if i != j:
                        scale[row + k] = np.sqrt(2.0)
                    k += 1
        row += blk.dim
    D = sparse.diags(scale)
    Acl = (-(D @ A)).tocsc()
    bcl = scale * b
    n = program.n_vars
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol.feas
    settings.tol_gap_abs = tol.gap
    settings.tol_gap_rel = tol.gap
    settings.max_iter = tol.max_iter
    Pq = sparse.csc_matrix((n, n))
    try:
        sol = clarabel.DefaultSolver(Pq, program.objective_vector(), Acl, bcl, cones, settings).solve()
    except Exception as exc:  # solver-level crash; reported, never swallowed as optimal
        return SolveResult("failed", solver="clarabel", diagnostics={"error": repr(exc)}, program=program)
    raw = str(sol.status)
    status = _CLARABEL_STATUS.get(raw, "failed")
    x = np.array(sol.x) if status in ("optimal", "inaccurate") else None
    diag = {"raw_status": raw, "iterations": sol.iterations, "r_prim": sol.r_prim, "r_dual": sol.r_dual}
    return _finish(program, status, x, "clarabel", tol, diag)


# -- CVXOPT -----------------------------------------------------------------------

def solve_cvxopt(program, tol):
    import cvxopt
    from cvxopt import solvers as cvs

    A, b = program.compile()
    A = A.tocsr()
    n = program.n_vars
    eq_rows, lin_rows, soc, psd = [], [], [], []
    row = 0
    for blk in program.blocks:
        rows = list(range(row, row + blk.dim))
        if blk.cone == "zero":
            eq_rows += rows
        elif blk.cone == "nonneg":
            lin_rows += rows
        elif blk.cone == "soc":
            soc.append(rows)
        else:
            psd.append((blk.order, rows))
        row += blk.dim

    G_parts, h_parts = [], []
    if lin_rows:
        G_parts.append(-A[lin_rows])
        h_parts.append(b[lin_rows])
    for rows in soc:
        G_parts.append(-A[rows])
        h_parts.append(b[rows])
    for m, rows in psd:
        # cvxopt wants the full matrix column-major; fill both triangles
        full = np.empty(m * m, dtype=int)
        k = 0
        for i in range(m):
            for j in range(i + 1):
                full[j * m + i] = rows[k]
                full[i * m + j] = rows[k]
                k += 1
        G_parts.append(-A[full])
        h_parts.append(b[full])
    dims = {"l": len(lin_rows), "q": [len(r) for r in soc], "s": [m for m, _ in psd]}

    def spmat(M):
        M = M.tocoo()
        return cvxopt.spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), size=M.shape)

    if G_parts:
        G = spmat(sparse.vstack(G_parts))
        h = cvxopt.matrix(np.concatenate(h_parts))
    else:
        G = cvxopt.spmatrix([], [], [], (0, n))
        h = cvxopt.matrix(np.zeros(0))
    kw = {}
    if eq_rows:
        kw["A"] = spmat(A[eq_rows])
        kw["b"] = cvxopt.matrix(-b[eq_rows])
    opts = {"show_progress": False, "abstol": tol.gap, "reltol": tol.gap,
            "feastol": tol.feas, "maxiters": tol.max_iter}
    try:
        sol = cvs.conelp(cvxopt.matrix(program.objective_vector()), G, h, dims, options=opts, **kw)
    except (ValueError, ArithmeticError) as exc:
        return SolveResult("failed", solver="cvxopt", diagnostics={"error": repr(exc)}, program=program)
    raw = sol["status"]
    status = {"optimal": "optimal", "primal infeasible": "infeasible",
              "dual infeasible": "unbounded"}.get(raw, "inaccurate")
    x = None
    if status in ("optimal", "inaccurate") and sol["x"] is not None:
        x = np.array(sol["x"]).ravel()
    return _finish(program, status, x, "cvxopt", tol, {"raw_status": raw, "iterations": sol["iterations"]})


SOLVERS = {"clarabel": solve_clarabel, "cvxopt": solve_cvxopt}
DEFAULT_SOLVER = "clarabel"


def solve(program, tolerances=None, solver=None):
    """Solve ``program`` with a registered adapter.

    ``status == "optimal"`` is only reported when the independent residual
    check passes ``tolerances.verify``; otherwise the status is downgraded to
    ``inaccurate``.
    """
    tol = tolerances or Tolerances()
    name = solver or DEFAULT_SOLVER
    try:
        fn = SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None
    return fn(program, tol)


def _available(name):
    mod = {"clarabel": "clarabel", "cvxopt": "cvxopt"}[name]
    try:
        __import__(mod)
    except ImportError:
        return False
    return True


def solve_robustly(program, tolerances=None, solver=None):
    """Solve with one tighter retry, then the other adapter if none is pinned.

    Used where an inconclusive status would otherwise discard the instance.
    """
    tol = tolerances or Tolerances()
    res = solve(program, tol, solver)
    if res.status not in ("inaccurate", "failed"):
        return res
    res = solve(program, tol.tighter(), solver)
    if res.status not in ("inaccurate", "failed") or solver is not None:
        return res
    for name in SOLVERS:
        if name != DEFAULT_SOLVER and _available(name):
            alt = solve(program, tol, name)
            log.debug("fallback %s: %s", name, alt.status)
            if alt.status == "optimal" or alt.status in ("infeasible", "unbounded"):
                return alt
    return res


def feasibility_verdict(program, tolerances=None, solver=None):
    """Binary verdict for a feasibility probe.

    ``inaccurate`` gets one retry at 10x tighter tolerances (and the other
    adapter when none is pinned); if still not conclusive the probe counts as
    infeasible, the conservative direction.
    Returns ``(feasible, result)``.
    """
    tol = tolerances or Tolerances()
    res = solve_robustly(program, tol, solver)
    return res.status == "optimal", res
