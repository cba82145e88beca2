"""Pure NumPy versions of the hot loops; used when the compiled core is absent."""
import numpy as np


def modulo(z, D):
    """Wrap real and imaginary parts into ``[-D/2, D/2)``."""
    z = np.asarray(z, dtype=complex)
    re = z.real - D * np.floor(z.real / D + 0.5)
    im = z.imag - D * np.floor(z.imag / D + 0.5)
    return re + 1j * im


def thp_precode(S, B, D):
    """Successive pre-subtraction with modulo for a batch of symbol vectors.

    ``S`` is ``n x K``. Returns ``(V, I)`` with ``V`` the precoded symbols and
    ``I`` the Gaussian integers such that ``(I + B) v = s + D i`` row-wise.
    """
    S = np.asarray(S, dtype=complex)
    B = np.asarray(B, dtype=complex)
    n, K = S.shape
    V = np.empty((n, K), dtype=complex)
    I = np.empty((n, K), dtype=complex)
    for k in range(K):
        x = S[:, k] - V[:, :k] @ B[k, :k]
        V[:, k] = modulo(x, D)
        I[:, k] = np.round((V[:, k] - x).real / D) + 1j * np.round((V[:, k] - x).imag / D)
    return V, I


def quad_values(Z, M, r0):
    R = r0 + Z @ M
    return np.einsum("ij,ij->i", R, R)


def radial_limit(Z, forms):
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if len(forms) == 0:
        return np.full(Z.shape[0], np.inf)
    q = np.einsum("ni,lij,nj->nl", Z, forms, Z).max(axis=1)
    with np.errstate(divide="ignore"):
        return np.where(q > 0, 1.0 / np.sqrt(np.where(q > 0, q, 1.0)), np.inf)


def ascend(Z0, M, r0, forms, steps):
    """Projected gradient ascent of ``||r0 + z M||^2`` over ``z^T G_l z <= 1``.

    Each candidate step is pulled back along its ray to the region and also
    pushed out to the boundary; the better of the two is kept. Step sizes
    adapt per start (grow on success, halve on failure).
    """
    Z = np.array(Z0, dtype=float, copy=True)
    vals = quad_values(Z, M, r0)
    lip = 2.0 * max(np.linalg.norm(M, 2) ** 2, 1e-300)
    alpha = np.full(len(Z), 1.0 / lip)
    for _ in range(steps):
        grad = 2.0 * (r0 + Z @ M) @ M.T
        cand = Z + alpha[:, None] * grad
        t = radial_limit(cand, forms)
        shrink = cand * np.minimum(t, 1.0)[:, None]
        fs = quad_values(shrink, M, r0)
        finite = np.isfinite(t)
        push = cand * np.where(finite, t, 1.0)[:, None]
        fp = np.where(finite, quad_values(push, M, r0), -np.inf)
        use_push = fp > fs
        new = np.where(use_push[:, None], push, shrink)
        fnew = np.maximum(fs, fp)
        better = fnew > vals
        Z[better] = new[better]
        vals[better] = fnew[better]
        alpha = np.where(better, alpha * 1.5, alpha * 0.5)
        if np.all(alpha * lip < 1e-12):
            break
    return Z, vals
