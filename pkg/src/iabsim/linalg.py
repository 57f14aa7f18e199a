"""Small dense complex linear algebra helpers.

Matrices are plain ``numpy`` complex arrays; nothing here mutates its input.
"""

import numpy as np
import scipy.linalg

from .errors import RankDeficient

# smallest/largest Gram eigenvalue ratio below which a stack counts as singular
RANK_TOL = 1e-12


def hermitian(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose of a 2-D array."""
    m = np.asarray(m)
    return np.conj(m.T)


def right_pseudo_inverse(h: np.ndarray) -> np.ndarray:
    """Return ``H^* (H H^*)^{-1}`` for a wide, full-row-rank ``h``.

    The Gram system is solved with a Cholesky factorisation instead of an
    explicit inverse.

    Raises
    ------
    RankDeficient
        If ``h`` has more rows than columns, or its Gram matrix is singular
        to within ``RANK_TOL`` relative to its largest eigenvalue.
    """
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    rows, cols = h.shape
    if rows > cols:
        raise RankDeficient(f"stack has {rows} rows but only {cols} columns")
    gram = h @ hermitian(h)
    eig = np.linalg.eigvalsh(gram)
    if eig[-1] <= 0 or eig[0] < RANK_TOL * eig[-1]:
        raise RankDeficient(
            f"Gram matrix is singular (eigenvalue ratio {eig[0] / max(eig[-1], 1e-300):.3e})"
        )
    factor = scipy.linalg.cho_factor(gram, lower=True)
    # (H H^*)^{-1} H, then conjugate transpose gives H^* (H H^*)^{-1}
    return hermitian(scipy.linalg.cho_solve(factor, h))


def column_norms(m: np.ndarray) -> np.ndarray:
    """Euclidean norm of every column."""
    m = np.atleast_2d(np.asarray(m))
    return np.sqrt(np.sum(np.abs(m) ** 2, axis=0))
