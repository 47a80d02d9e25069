"""Small complex linear-algebra helpers used by the recovery pipeline.

The solver is a Cholesky factorization written here rather than delegated,
because callers need the failing pivot index when a matrix that should be
positive definite is not: that index points at the offending user/AP in the
parameterization that built the matrix.
"""

import numpy as np

from . import kernels
from .errors import CranoptError


class DefinitenessError(CranoptError):
    """Matrix expected Hermitian positive definite failed factorization.

    ``pivot_index`` is the zero-based diagonal position whose remainder fell
    below the definiteness threshold.
    """

    def __init__(self, pivot_index: int):
        self.pivot_index = int(pivot_index)
        super().__init__(
            f"matrix is not positive definite: pivot {self.pivot_index} "
            "fell below threshold"
        )


HERMITIAN_TOL = 1e-10


def hermitian_pd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for Hermitian positive definite ``a``.

    Args:
        a: (m, m) complex128, Hermitian within ``HERMITIAN_TOL``.
        b: (m,) complex128 right-hand side.

    Raises:
        DefinitenessError: if a Cholesky pivot falls below
            1e-12 * max(real diagonal), with the failing index attached.
        ValueError: on shape mismatch or a clearly non-Hermitian input.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if b.shape != (a.shape[0],):
        raise ValueError(f"rhs shape {b.shape} does not match matrix {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and float(np.max(np.abs(a - a.conj().T))) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    lower, piv = kernels.chol_factor(np.ascontiguousarray(a))
    if piv >= 0:
        raise DefinitenessError(piv)
    return kernels.chol_solve(lower, np.ascontiguousarray(b))


def outer_hermitian(h: np.ndarray) -> np.ndarray:
    """Rank-one Hermitian outer product ``h h^H`` for a vector ``h``."""
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 1:
        raise ValueError(f"expected a vector, got shape {h.shape}")
    return np.outer(h, h.conj())


def vec_norm2(h: np.ndarray) -> float:
    """Euclidean norm of a complex vector."""
    h = np.asarray(h)
    if h.ndim != 1:
        raise ValueError(f"expected a vector, got shape {h.shape}")
    return float(np.linalg.norm(h))
