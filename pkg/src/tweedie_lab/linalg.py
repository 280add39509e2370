"""vec / vech and the duplication and elimination matrices.

``vec`` stacks columns (column-major), ``vech`` stacks the lower triangle
column by column.  For every symmetric ``A``::

    duplication(n) @ vech(A) == vec(A)
    elimination(n) @ vec(A) == vech(A)
"""

from functools import lru_cache

import numpy as np

from .errors import NotSymmetric

__all__ = [
    "vec",
    "unvec",
    "vech",
    "unvech",
    "duplication_matrix",
    "elimination_matrix",
    "vech_operators",
]


def vec(a):
    """Column-stacking vectorization."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return a.copy()
    return a.reshape(-1, order="F")


def unvec(v, n_rows):
    """Inverse of :func:`vec` for a matrix with ``n_rows`` rows."""
    v = np.asarray(v, dtype=float)
    return v.reshape(n_rows, -1, order="F")


def _lower_indices(n):
    # column-major walk over the lower triangle: (i, j) with i >= j
    return [(i, j) for j in range(n) for i in range(j, n)]


def vech(a, atol=1e-10):
    """Half-vectorization of a symmetric matrix.

    Raises
    ------
    NotSymmetric
        If ``a`` is not square or differs from its transpose by more than
        ``atol`` (scaled by the largest entry).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"vech needs a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > atol * scale:
        raise NotSymmetric("vech input is not symmetric within tolerance")
    n = a.shape[0]
    return np.array([a[i, j] for i, j in _lower_indices(n)])


def unvech(v):
    """Rebuild the symmetric matrix whose half-vectorization is ``v``."""
    v = np.asarray(v, dtype=float)
    n = _order_from_vech_length(v.shape[-1])
    return (duplication_matrix(n) @ v).reshape(n, n, order="F")


def _order_from_vech_length(m):
    n = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if n * (n + 1) // 2 != m:
        raise ValueError(f"{m} is not a triangular number")
    return n


@lru_cache(maxsize=None)
def _duplication(n):
    d = np.zeros((n * n, n * (n + 1) // 2))
    for col, (i, j) in enumerate(_lower_indices(n)):
        d[i + j * n, col] = 1.0
        d[j + i * n, col] = 1.0
    d.setflags(write=False)
    return d


@lru_cache(maxsize=None)
def _elimination(n):
    el = np.zeros((n * (n + 1) // 2, n * n))
    for row, (i, j) in enumerate(_lower_indices(n)):
        el[row, i + j * n] = 1.0
    el.setflags(write=False)
    return el


def duplication_matrix(n):
    """Duplication matrix ``D_n`` of shape ``(n**2, n(n+1)/2)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _duplication(int(n))


def elimination_matrix(n):
    """Elimination matrix ``L_n`` of shape ``(n(n+1)/2, n**2)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _elimination(int(n))


def vech_operators(n):
    """Return ``(D_n, L_n)``."""
    return duplication_matrix(n), elimination_matrix(n)
