"""Solver-agnostic conic programs.

A program minimises a linear objective over named scalar variables subject to
cone blocks. Each block is a list of affine rows that must lie in one of:

``zero``     every row equals 0
``nonneg``   every row is >= 0
``soc``      ``rows[0] >= ||rows[1:]||``
``psd``      the symmetric matrix whose lower triangle is ``rows`` (row-major,
             ``(i, j)`` with ``i >= j``) is positive semidefinite

PSD blocks only ever store the lower triangle, so symmetry holds by
construction.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

CONES = ("zero", "nonneg", "soc", "psd")


class Affine:
    """Sparse affine expression ``sum(coef * x[i]) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def constant(cls, c):
        return cls(None, c)

    def copy(self):
        return Affine(self.terms, self.const)

    def _iadd(self, other, sign=1.0):
        if isinstance(other, Affine):
            t = self.terms
            for i, c in other.terms.items():
                t[i] = t.get(i, 0.0) + sign * c
            self.const += sign * other.const
        else:
            self.const += sign * float(other)
        return self

    def __add__(self, other):
        return self.copy()._iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy()._iadd(other, -1.0)

    def __rsub__(self, other):
        return (-self)._iadd(other)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, s):
        s = float(s)
        return Affine({i: s * c for i, c in self.terms.items()}, s * self.const)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self * (1.0 / float(s))

    def value(self, x):
        return self.const + sum(c * x[i] for i, c in self.terms.items())

    def __repr__(self):
        return f"Affine({self.terms!r}, {self.const!r})"


def lin_comb(coefs, exprs, const=0.0):
    """``sum(c * e) + const`` skipping zero coefficients."""
    out = Affine.constant(const)
    for c, e in zip(coefs, exprs):
        if c != 0.0:
            out._iadd(e * c)
    return out


@dataclass
class ConeBlock:
    cone: str
    rows: list
    name: str = ""
    order: int = 0  # matrix order for psd blocks

    @property
    def dim(self):
        return len(self.rows)


def packed_index(i, j):
    """Position of ``(i, j)``, ``i >= j``, in row-major packed lower storage."""
    if i < j:
        i, j = j, i
    return i * (i + 1) // 2 + j


@dataclass
class ConicProgram:
    var_names: list = field(default_factory=list)
    objective: Affine = field(default_factory=Affine)
    blocks: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._index = {n: i for i, n in enumerate(self.var_names)}

    # -- variables -----------------------------------------------------------
    def var(self, name):
        if name in self._index:
            raise ValueError(f"variable {name!r} already declared")
        self._index[name] = len(self.var_names)
        self.var_names.append(name)
        return Affine({self._index[name]: 1.0})

    def ref(self, name):
        return Affine({self._index[name]: 1.0})

    def index(self, name):
        return self._index[name]

    @property
    def n_vars(self):
        return len(self.var_names)

    # -- constraints ---------------------------------------------------------
    def _add(self, cone, rows, name, order=0):
        rows = [r if isinstance(r, Affine) else Affine.constant(r) for r in rows]
        n = self.n_vars
        for r in rows:
            for i in r.terms:
                if not 0 <= i < n:
                    raise ValueError(f"block {name!r} references undeclared variable {i}")
        self.blocks.append(ConeBlock(cone, rows, name, order))
        return len(self.blocks) - 1

    def add_zero(self, rows, name=""):
        return self._add("zero", rows, name)

    def add_nonneg(self, rows, name=""):
        return self._add("nonneg", rows, name)

    def add_soc(self, bound, rows, name=""):
        """``bound >= ||rows||``."""
        return self._add("soc", [bound, *rows], name)

    def add_psd(self, order, entries, name=""):
        """PSD constraint from lower-triangle entries ``{(i, j): expr}``, ``i >= j``.

        Missing entries are zero.
        """
        rows = [Affine() for _ in range(order * (order + 1) // 2)]
        for (i, j), e in entries.items():
            if i < j:
                raise ValueError("PSD entries must be given on or below the diagonal")
            if i >= order:
                raise ValueError(f"entry {(i, j)} outside order {order}")
            rows[packed_index(i, j)] = e if isinstance(e, Affine) else Affine.constant(e)
        return self._add("psd", rows, name, order)

    def minimize(self, expr):
        self.objective = expr if isinstance(expr, Affine) else Affine.constant(expr)

    # -- export --------------------------------------------------------------
    def compile(self):
        """Stack every block into ``A x + b`` (sparse CSR ``A``, dense ``b``)."""
        data, ri, ci, b = [], [], [], []
        row = 0
        for blk in self.blocks:
            for r in blk.rows:
                for i, c in r.terms.items():
                    if c != 0.0:
                        data.append(c)
                        ri.append(row)
                        ci.append(i)
                b.append(r.const)
                row += 1
        A = sparse.csr_matrix((data, (ri, ci)), shape=(row, self.n_vars))
        return A, np.array(b, dtype=float)

    def objective_vector(self):
        q = np.zeros(self.n_vars)
        for i, c in self.objective.terms.items():
            q[i] += c
        return q

    def point(self, x):
        """Map a solution vector onto variable names."""
        return {n: float(x[i]) for i, n in enumerate(self.var_names)}

    def as_vector(self, point):
        if isinstance(point, dict):
            missing = [n for n in self.var_names if n not in point]
            if missing:
                raise ValueError(f"point does not assign {missing[:5]}")
            return np.array([point[n] for n in self.var_names], dtype=float)
        x = np.asarray(point, dtype=float).ravel()
        if x.size != self.n_vars:
            raise ValueError(f"expected {self.n_vars} values, got {x.size}")
        return x

    def block_matrix(self, blk, x):
        """Dense symmetric matrix of a PSD block at ``x``."""
        m = blk.order
        S = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1):
                S[i, j] = S[j, i] = blk.rows[packed_index(i, j)].value(x)
        return S


@dataclass(frozen=True)
class BlockResidual:
    name: str
    cone: str
    violation: float


@dataclass(frozen=True)
class ResidualReport:
    blocks: tuple
    objective: float

    @property
    def max_violation(self):
        return max((b.violation for b in self.blocks), default=0.0)

    def ok(self, tol):
        return self.max_violation <= tol

    def worst(self):
        return max(self.blocks, key=lambda b: b.violation, default=None)


def check_solution(program, point, tol=None):
    """Recompute every cone membership at ``point`` without any solver state.

    Violations are absolute: ``|row|`` for zero rows, ``-row`` for nonnegative
    rows, ``||rows[1:]|| - rows[0]`` for second-order cones and the negated
    smallest eigenvalue for PSD blocks (all clipped at zero).
    """
    x = program.as_vector(point)
    out = []
    for blk in program.blocks:
        if blk.cone == "psd":
            viol = -np.linalg.eigvalsh(program.block_matrix(blk, x)).min()
        else:
            v = np.array([r.value(x) for r in blk.rows])
            if blk.cone == "zero":
                viol = np.abs(v).max(initial=0.0)
            elif blk.cone == "nonneg":
                viol = -v.min(initial=0.0)
            else:
                viol = np.linalg.norm(v[1:]) - v[0]
        out.append(BlockResidual(blk.name, blk.cone, float(max(viol, 0.0))))
    report = ResidualReport(tuple(out), float(program.objective.value(x)))
    return report


# -- plain-text dump -----------------------------------------------------------

def dump_program(program, fh):
    """Write ``program`` in the sparse text format read by :func:`load_program`.

    Layout::

        conic-program 1
        variables <n>
        <var id> <name>                 # ids start at 1
        objective <n terms>
        <var id> <coef>                 # id 0 is the constant term
        blocks <n>
        block <block id> <cone> <dim> <order> <name or ->
        <block id> <cone> <row> <col> <var id> <coef>

    ``row``/``col`` are matrix indices for PSD blocks and ``row``/0 otherwise.
    """
    w = fh.write
    w("conic-program 1\n")
    w(f"variables {program.n_vars}\n")
    for i, n in enumerate(program.var_names):
        w(f"{i + 1} {n}\n")
    obj = [(i + 1, c) for i, c in sorted(program.objective.terms.items())]
    if program.objective.const:
        obj.insert(0, (0, program.objective.const))
    w(f"objective {len(obj)}\n")
    for i, c in obj:
        w(f"{i} {c!r}\n")
    w(f"blocks {len(program.blocks)}\n")
    for bid, blk in enumerate(program.blocks, start=1):
        w(f"block {bid} {blk.cone} {blk.dim} {blk.order} {blk.name or '-'}\n")
        coords = _block_coords(blk)
        for (r, c), expr in zip(coords, blk.rows):
            if expr.const:
                w(f"{bid} {blk.cone} {r} {c} 0 {expr.const!r}\n")
            for i, coef in sorted(expr.terms.items()):
                w(f"{bid} {blk.cone} {r} {c} {i + 1} {coef!r}\n")


def _block_coords(blk):
    if blk.cone == "psd":
        return [(i, j) for i in range(blk.order) for j in range(i + 1)]
    return [(r, 0) for r in range(blk.dim)]


def load_program(fh):
    lines = iter(l.strip() for l in fh if l.strip())
    head = next(lines).split()
    if head != ["conic-program", "1"]:
        raise ValueError("not a conic-program v1 dump")
    n = int(next(lines).split()[1])
    names = [next(lines).split(maxsplit=1)[1] for _ in range(n)]
    prog = ConicProgram(list(names))
    nobj = int(next(lines).split()[1])
    obj = Affine()
    for _ in range(nobj):
        i, c = next(lines).split()
        obj._iadd(Affine({int(i) - 1: float(c)}) if int(i) else float(c))
    prog.objective = obj
    nblocks = int(next(lines).split()[1])
    pending = None
    for line in lines:
        parts = line.split()
        if parts[0] == "block":
            if pending:
                prog.blocks.append(pending)
            _, bid, cone, dim, order, name = parts
            pending = ConeBlock(cone, [Affine() for _ in range(int(dim))],
                                "" if name == "-" else name, int(order))
            continue
        _, cone, r, c, i, coef = parts
        r, c, i = int(r), int(c), int(i)
        pos = packed_index(r, c) if cone == "psd" else r
        term = Affine({i - 1: float(coef)}) if i else float(coef)
        pending.rows[pos]._iadd(term)
    if pending:
        prog.blocks.append(pending)
    if len(prog.blocks) != nblocks:
        raise ValueError("block count mismatch in dump")
    return prog
