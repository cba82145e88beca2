"""Transceiver designs, per-user MSE and the SINR that an MSE bound implies."""
from dataclasses import dataclass, field

import numpy as np

from .embed import as_complex_matrix, embed_matrix, embed_row


@dataclass(frozen=True)
class Design:
    """Precoder ``P`` (Nt x K), strictly lower feedback ``B`` (K x K), gains ``g``.

    Users are indexed in precoding order: row ``k`` of ``B`` only touches
    streams precoded before ``k``. Linear precoding is ``B == 0``.
    """

    P: np.ndarray
    B: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        P = as_complex_matrix(self.P, "P")
        K = P.shape[1]
        B = np.asarray(self.B, dtype=complex)
        if B.shape != (K, K):
            raise ValueError(f"B must be {K}x{K}, got {B.shape}")
        if np.any(np.triu(B) != 0):
            raise ValueError("B must be strictly lower triangular")
        g = np.asarray(self.g, dtype=float).ravel()
        if g.shape != (K,):
            raise ValueError(f"g must have {K} entries, got {g.shape}")
        if np.any(~np.isfinite(g)) or np.any(g <= 0):
            raise ValueError("receiver gains must be finite and positive")
        for name, arr in (("P", P), ("B", B), ("g", g)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def linear(cls, P, g):
        K = np.asarray(P).shape[1]
        return cls(P, np.zeros((K, K), dtype=complex), g)

    @property
    def n_tx(self):
        return self.P.shape[0]

    @property
    def n_users(self):
        return self.P.shape[1]

    @property
    def power(self):
        """Transmit power ``tr(P^H P)`` under unit-variance precoded symbols."""
        return float(np.real(np.vdot(self.P, self.P)))

    @property
    def is_linear(self):
        return not np.any(self.B)


@dataclass(frozen=True)
class QoSTargets:
    """Per-user MSE ceilings ``zeta`` in (0, 1]."""

    zeta: np.ndarray
    sinr: np.ndarray = field(default=None)

    def __post_init__(self):
        z = np.asarray(self.zeta, dtype=float).ravel()
        if np.any(~(z > 0)) or np.any(z > 1):
            raise ValueError("MSE targets must lie in (0, 1]")
        object.__setattr__(self, "zeta", z)
        if self.sinr is not None:
            object.__setattr__(self, "sinr", np.asarray(self.sinr, dtype=float).ravel())

    @classmethod
    def from_sinr(cls, gamma):
        gamma = np.asarray(gamma, dtype=float).ravel()
        if np.any(gamma < 0):
            raise ValueError("SINR floors must be nonnegative")
        return cls(1.0 / (1.0 + gamma), sinr=gamma)

    @classmethod
    def from_sinr_db(cls, gamma_db):
        return cls.from_sinr(10.0 ** (np.asarray(gamma_db, dtype=float) / 10.0))

    def __len__(self):
        return self.zeta.size


def _error_row(g, h, P, B, k):
    """Coefficients of ``u_hat_k - u_k`` on the precoded symbols ``v``."""
    h = np.asarray(h, dtype=complex).ravel()
    row = g * (h @ P)
    row = row - B[k]
    row[k] -= 1.0
    return row


def mse_value(g, h, P, B, k, sigma):
    """MSE of user ``k`` for a possibly complex gain ``g``.

    Kept separate from :func:`mse` so the phase-invariance argument can be
    checked against an unnormalised gain.
    """
    row = _error_row(g, h, P, B, k)
    return float(np.real(np.vdot(row, row)) + abs(g) ** 2 * sigma**2)


def mse(design, k, h, sigma):
    """``|| [g_k h_k P - m_k - b_k, g_k sigma_k] ||^2`` for user ``k``."""
    if sigma < 0:
        raise ValueError("noise standard deviation must be nonnegative")
    return mse_value(design.g[k], h, design.P, design.B, k, sigma)


def mse_embedded(design, k, h, sigma):
    """Same quantity as :func:`mse`, evaluated through the real embedding."""
    f = 1.0 / design.g[k]
    K = design.n_users
    Pr = embed_matrix(design.P)
    m = np.zeros(2 * K)
    m[k] = 1.0
    bt = embed_row(design.B[k]) * f
    r = np.concatenate([embed_row(h) @ Pr - f * m - bt, [sigma]])
    return float(r @ r) / f**2


@dataclass(frozen=True)
class SinrDecomposition:
    """Decision statistic of user ``k`` written on the precoded symbols.

    ``s_hat = desired * v_k + sum_i interference[i] * v_i + noise_gain * n_k``
    once the feedback contribution of earlier users is taken out.
    """

    desired: complex
    interference: np.ndarray
    noise_gain: float
    sigma: float

    @property
    def signal_power(self):
        return abs(self.desired) ** 2

    @property
    def disturbance_power(self):
        return float(np.sum(np.abs(self.interference) ** 2) + self.noise_gain**2 * self.sigma**2)

    @property
    def degenerate(self):
        return self.desired == 0

    @property
    def unbounded(self):
        return not self.degenerate and self.disturbance_power == 0

    @property
    def sinr(self):
        if self.degenerate:
            return 0.0
        if self.unbounded:
            return np.inf
        return self.signal_power / self.disturbance_power

    @property
    def mse(self):
        return float(abs(self.desired - 1) ** 2 + self.disturbance_power)


def sinr_decomposition(design, k, h, sigma):
    g = design.g[k]
    coeffs = g * (np.asarray(h, dtype=complex).ravel() @ design.P) - design.B[k]
    desired = complex(coeffs[k])
    interference = np.delete(coeffs, k)
    return SinrDecomposition(desired, interference, float(g), float(sigma))


def sinr(design, k, h, sigma):
    """SINR of user ``k``; 0 for a vanishing desired gain, inf without disturbance."""
    return sinr_decomposition(design, k, h, sigma).sinr


def sinr_floor_from_mse(zeta):
    """SINR guaranteed by an MSE ceiling ``zeta`` <= 1."""
    zeta = float(zeta)
    if not 0 < zeta <= 1:
        raise ValueError(f"MSE ceiling must lie in (0, 1], got {zeta}")
    return 1.0 / zeta - 1.0
