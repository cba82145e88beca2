"""Symbol-level Tomlinson-Harashima chain and its empirical statistics.

The transmitter pre-subtracts earlier streams and wraps the result into the
Voronoi square of the constellation; receivers scale, wrap again and slice.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .metrics import Design, mse

_QAM_ORDERS = (4, 16, 64, 256)


@dataclass(frozen=True)
class ConstellationSpec:
    """Square M-QAM with unit average symbol energy.

    Attributes
    ----------
    M : int
        Constellation size, a perfect square.
    d : float
        Per-dimension half distance between neighbouring points.
    D : float
        Side of the square Voronoi region used by the modulo.
    """

    M: int = 64

    def __post_init__(self):
        side = int(round(np.sqrt(self.M)))
        if self.M < 4 or side * side != self.M:
            raise ValueError(f"M must be a square QAM order such as {_QAM_ORDERS}, got {self.M}")

    @property
    def side(self):
        return int(round(np.sqrt(self.M)))

    @property
    def d(self):
        return float(np.sqrt(3.0 / (2.0 * (self.M - 1))))

    @property
    def D(self):
        return 2.0 * self.d * self.side

    @property
    def levels(self):
        """Per-dimension amplitudes, ``d * (-(side-1), ..., side-1)``."""
        return self.d * (2.0 * np.arange(self.side) - (self.side - 1))

    @property
    def points(self):
        lv = self.levels
        return (lv[:, None] + 1j * lv[None, :]).ravel()

    @property
    def precoding_loss(self):
        return self.M / (self.M - 1.0)

    def draw(self, shape, rng):
        lv = self.levels
        re = rng.integers(0, self.side, size=shape)
        im = rng.integers(0, self.side, size=shape)
        return lv[re] + 1j * lv[im]

    def slice(self, z):
        """Nearest constellation point, per dimension."""
        z = np.asarray(z, dtype=complex)
        top = self.side - 1

        def axis(x):
            m = np.clip(np.round((x / self.d + top) / 2.0), 0, top)
            return self.d * (2.0 * m - top)

        return axis(z.real) + 1j * axis(z.imag)


def modulo(z, D):
    """Wrap real and imaginary parts independently into ``[-D/2, D/2)``."""
    if D <= 0:
        raise ValueError("D must be positive")
    return kernels.modulo(np.asarray(z, dtype=complex), float(D))


def thp_precode(s, B, P, D):
    """Precode symbol vectors.

    Parameters
    ----------
    s : array_like
        ``K`` symbols, or an ``n x K`` batch.
    B : array_like
        Strictly lower triangular feedback matrix.
    P : array_like
        ``Nt x K`` feedforward matrix.
    D : float
        Modulo period.

    Returns
    -------
    x, v, i : ndarray
        Transmit vectors, wrapped symbols and the Gaussian integers with
        ``(I + B) v = s + D i``. Batched input gives batched output.
    """
    S = np.asarray(s, dtype=complex)
    single = S.ndim == 1
    S = np.atleast_2d(S)
    B = np.asarray(B, dtype=complex)
    if np.any(np.abs(np.triu(B)) > 0):
        raise ValueError("B must be strictly lower triangular")
    V, I = kernels.thp_precode(S, B, float(D))
    X = V @ np.asarray(P, dtype=complex).T
    if single:
        return X[0], V[0], I[0]
    return X, V, I


@dataclass
class _Tally:
    n: int = 0
    err2: np.ndarray = None
    errors: np.ndarray = None
    v2: np.ndarray = None
    tx2: float = 0.0
    gram: np.ndarray = None
    cross: np.ndarray = None
    zz: np.ndarray = None

    def merge(self, other):
        if self.n == 0:
            return other
        return _Tally(self.n + other.n, self.err2 + other.err2, self.errors + other.errors,
                      self.v2 + other.v2, self.tx2 + other.tx2, self.gram + other.gram,
                      self.cross + other.cross, self.zz + other.zz)


@dataclass
class SimulationReport:
    """Empirical statistics of one seeded run.

    ``sinr`` regresses each decision statistic, less its feedback term
    ``b_k v``, on the wrapped symbols ``v``: the own-stream component is
    the useful part, the remainder counts as interference plus noise.
    ``analytic_mse`` is the closed form with unit ``v`` variance.
    """

    mse: np.ndarray
    sinr: np.ndarray
    ser: np.ndarray
    v_variance: np.ndarray
    tx_power: float
    n_symbols: int
    seed: object
    analytic_mse: np.ndarray = field(default=None)

    def as_rows(self):
        for k in range(len(self.mse)):
            yield {"user": k, "mse": self.mse[k], "analytic_mse": self.analytic_mse[k],
                   "sinr": self.sinr[k], "ser": self.ser[k], "v_variance": self.v_variance[k]}


def _run_batch(design, H, sigma, n, constellation, rng):
    K = design.n_users
    S = constellation.draw((n, K), rng)
    if design.is_linear:
        V, I = S, np.zeros_like(S)
    else:
        V, I = kernels.thp_precode(S, design.B, constellation.D)
    X = V @ design.P.T
    noise = (rng.standard_normal((n, K)) + 1j * rng.standard_normal((n, K))) * (sigma / np.sqrt(2.0))
    R = design.g * (X @ H.T + noise)
    U = S + constellation.D * I
    E = R - U
    Shat = R if design.is_linear else kernels.modulo(R, constellation.D)
    wrong = constellation.slice(Shat) != S
    Z = R - V @ design.B.T
    return _Tally(n, np.sum(np.abs(E) ** 2, axis=0), wrong.sum(axis=0),
                  np.sum(np.abs(V) ** 2, axis=0), float(np.sum(np.abs(X) ** 2)),
                  V.conj().T @ V, V.conj().T @ Z, np.sum(np.abs(Z) ** 2, axis=0))


def simulate(design, H, sigma, n_symbols=100_000, constellation=None, rng=None,
             batch=20_000, workers=1):
    """Run the transmit/receive chain on true channels ``H``.

    Rows of ``H`` follow the design's precoding order. Batches draw from
    independent child streams of one seed, so the report does not depend
    on ``workers``.
    """
    if n_symbols < 1000:
        raise ValueError("n_symbols must be at least 1000")
    if not isinstance(design, Design):
        raise TypeError("design must be a Design")
    constellation = constellation or ConstellationSpec()
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    K = design.n_users
    if H.shape != (K, design.n_tx):
        raise ValueError(f"H must be {K}x{design.n_tx}, got {H.shape}")
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (K,)).copy()

    if isinstance(rng, np.random.Generator):
        seed = None
        root = np.random.SeedSequence(int(rng.integers(2 ** 63)))
    else:
        seed = rng
        root = np.random.SeedSequence(rng)
    sizes = [batch] * (n_symbols // batch)
    if n_symbols % batch:
        sizes.append(n_symbols % batch)
    children = root.spawn(len(sizes))

    def job(i):
        return _run_batch(design, H, sigma, sizes[i], constellation, np.random.default_rng(children[i]))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]
    tot = _Tally()
    for p in parts:
        tot = tot.merge(p)

    n = tot.n
    coef = np.linalg.solve(tot.gram, tot.cross)
    own = np.diag(coef)
    gkk = np.real(np.diag(tot.gram))
    useful = np.abs(own) ** 2 * gkk
    rest = tot.zz - 2.0 * np.real(own.conj() * np.diag(tot.cross)) + useful
    # residuals at rounding level mean an interference- and noise-free stream
    rest = np.where(rest > 1e-12 * tot.zz, rest, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr = np.where(rest > 0, useful / rest, np.inf)
    analytic = np.array([mse(design, k, H[k], sigma[k]) for k in range(K)])
    return SimulationReport(tot.err2 / n, sinr, tot.errors / n, tot.v2 / n, tot.tx2 / n, n, seed, analytic)
