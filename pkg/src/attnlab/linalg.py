"""Dense linear algebra helpers on float64 numpy arrays.

Matrices are plain ``np.ndarray`` objects of dtype float64. Random streams use
numpy's PCG64 generator, whose output is bit-identical across platforms for a
given seed.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("matmul produced non-finite entries")
    return out


def gaussian_matrix(rng: np.random.Generator, rows: int, cols: int, scale: float) -> np.ndarray:
    """I.i.d. N(0, scale**2) entries. ``scale == 0`` gives the zero matrix."""
    if scale < 0:
        raise ValueError(f"scale must be non-negative, got {scale}")
    return scale * rng.standard_normal((rows, cols))


def _jacobi_eig(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations. Returns (eigenvalues, eigenvectors as columns)."""
    a = a.copy()
    n = a.shape[0]
    vecs = np.eye(n)
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = vecs[:, p].copy()
                vq = vecs[:, q].copy()
                vecs[:, p] = c * vp - s * vq
                vecs[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi eigensolver did not converge")
    return np.diag(a).copy(), vecs


def sym_eig_top(cov, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``k`` eigenpairs of a symmetric matrix.

    Eigenvalues are returned in descending order; eigenvectors are the columns
    of the second result, unit norm, with their largest-magnitude entry made
    positive.
    """
    cov = as_matrix(cov)
    n = cov.shape[0]
    if cov.shape[1] != n:
        raise ShapeError(f"expected a square matrix, got {cov.shape}")
    if not 0 < k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if np.any(np.abs(cov - cov.T) >= 1e-12):
        raise ValueError("matrix is not symmetric")
    vals, vecs = _jacobi_eig(cov)
    order = np.argsort(-vals, kind="stable")[:k]
    vals = vals[order]
    vecs = vecs[:, order]
    for c in range(k):
        col = vecs[:, c]
        col /= np.linalg.norm(col)
        if col[np.argmax(np.abs(col))] < 0:
            col *= -1.0
    return vals, vecs
