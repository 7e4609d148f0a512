"""Small dense-array utilities shared across the package.

Arrays are plain float64 numpy arrays throughout: vectors (d,), matrices
(rows, cols), and rank-3 tensors indexed [output, input_1, input_2]. numpy is
the storage and contraction backend; the routines here add the conventions
the rest of the package relies on (initializer distributions, deterministic
operator norms, symmetrization).
"""

from __future__ import annotations

import numpy as np

from .rng import Rng

__all__ = [
    "frobenius_norm",
    "symmetrize_last_two",
    "operator_norm",
    "init_lecun_normal",
    "init_orthogonal",
]


def frobenius_norm(t: np.ndarray) -> float:
    """Square root of the sum of squared entries, any rank."""
    return float(np.linalg.norm(np.asarray(t, dtype=np.float64).ravel()))


def symmetrize_last_two(t: np.ndarray) -> np.ndarray:
    """Average a tensor with its transpose in the trailing two axes."""
    return 0.5 * (t + np.swapaxes(t, -1, -2))


def operator_norm(mat: np.ndarray, iters: int = 50, tol: float = 1e-10) -> float:
    """Largest singular value of a matrix by deterministic power iteration.

    Iterates v <- M^T M v from a fixed (seed-free) start vector; 50 rounds
    with a relative stagnation tolerance of 1e-10 is far past convergence for
    the small, well-separated spectra this package produces. The estimate
    approaches the true norm from below.
    """
    m = np.asarray(mat, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"operator_norm expects a matrix, got ndim={m.ndim}")
    if m.size == 0 or not np.any(m):
        return 0.0
    # fixed ramp start: never orthogonal to the top singular subspace in practice
    v = 1.0 + 0.01 * np.arange(m.shape[1], dtype=np.float64)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = m @ v
        sigma_new = float(np.linalg.norm(w))
        if sigma_new == 0.0:
            return 0.0
        v = m.T @ w
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return sigma_new
        v /= nv
        if abs(sigma_new - sigma) <= tol * max(sigma_new, 1e-300):
            return sigma_new
        sigma = sigma_new
    return sigma


def init_lecun_normal(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """Kernel with i.i.d. normal entries of standard deviation 1/sqrt(fan_in).

    fan_in is the number of columns (inputs feeding each output unit).
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"kernel shape must be positive, got ({rows}, {cols})")
    return rng.normal((rows, cols), scale=1.0 / np.sqrt(cols))


def init_orthogonal(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """Kernel with orthonormal rows (rows <= cols) or columns (rows > cols).

    Built from the QR factorization of a Gaussian draw, with the sign of R's
    diagonal folded in so the distribution is uniform over the orthogonal
    group rather than biased by QR's sign convention.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"kernel shape must be positive, got ({rows}, {cols})")
    n, k = max(rows, cols), min(rows, cols)
    a = rng.normal((n, k))
    q, r = np.linalg.qr(a)
    d = np.diagonal(r)
    q = q * np.where(d >= 0, 1.0, -1.0)[np.newaxis, :]
    return np.ascontiguousarray(q.T if rows <= cols else q)
