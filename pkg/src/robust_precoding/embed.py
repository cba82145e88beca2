"""Complex-to-real embeddings of channel rows and precoding matrices.

A complex row ``h`` (1 x Nt) maps to ``[Re h, Im h]`` and a complex matrix
``P`` (Nt x K) maps to the 2Nt x 2K block matrix::

    [[ Re P, Im P],
     [-Im P, Re P]]

so that ``embed_row(h) @ embed_matrix(P) == embed_row(h @ P)``.
"""
import numpy as np

BLOCK_TIE_TOL = 1e-9


class EmbeddingError(ValueError):
    """Raised when a real matrix does not carry the tied block structure."""


def as_complex_matrix(a, name="matrix"):
    """Validate and return ``a`` as a 2-D complex array with finite entries."""
    arr = np.atleast_2d(np.asarray(a, dtype=complex))
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def embed_row(h):
    """Stack real and imaginary parts of a complex row into a real vector."""
    h = np.asarray(h, dtype=complex).ravel()
    if not np.all(np.isfinite(h)):
        raise ValueError("row has non-finite entries")
    return np.concatenate([h.real, h.imag])


def unembed_row(x):
    x = np.asarray(x, dtype=float).ravel()
    if x.size % 2:
        raise EmbeddingError(f"embedded row must have even length, got {x.size}")
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def embed_matrix(P):
    P = as_complex_matrix(P, "P")
    re, im = P.real, P.imag
    out = np.block([[re, im], [-im, re]])
    out.setflags(write=False)
    return out


def block_tie_residual(M):
    """Largest violation of the ``[[A, B], [-B, A]]`` tie in ``M``."""
    M = np.asarray(M, dtype=float)
    r, c = M.shape
    if r % 2 or c % 2:
        return np.inf
    n, k = r // 2, c // 2
    a1, b1 = M[:n, :k], M[:n, k:]
    b2, a2 = M[n:, :k], M[n:, k:]
    return float(max(np.max(np.abs(a1 - a2)), np.max(np.abs(b1 + b2))))


def unembed_matrix(M, tol=BLOCK_TIE_TOL):
    """Inverse of :func:`embed_matrix`.

    Raises :class:`EmbeddingError` when the block tie is violated by more than
    ``tol``; that only happens when a solver returned a corrupted point.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] % 2 or M.shape[1] % 2:
        raise EmbeddingError(f"embedded matrix must have even dimensions, got {M.shape}")
    res = block_tie_residual(M)
    if res > tol:
        raise EmbeddingError(f"block-tie residual {res:.3e} exceeds {tol:.1e}")
    n, k = M.shape[0] // 2, M.shape[1] // 2
    return M[:n, :k] + 1j * M[:n, k:]
