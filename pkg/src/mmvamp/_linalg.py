"""Small symmetric-matrix helpers shared by the denoiser and the solvers."""

import numpy as np

# Eigenvalue floor applied to effective-noise covariances before inversion.
# Noiseless runs drive these matrices toward zero; the floor keeps every
# factorization finite without visibly perturbing any non-degenerate case.
COV_EIG_FLOOR = 1e-12

SYM_TOL = 1e-12


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """Return the symmetric part of ``mat`` (works on stacks ``(..., J, J)``)."""
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


def check_symmetric(mat: np.ndarray, name: str, tol: float = SYM_TOL) -> None:
    scale = max(float(np.max(np.abs(mat))), 1.0)
    if np.max(np.abs(mat - mat.T)) > tol * scale:
        raise ValueError(f"{name} must be symmetric (asymmetry above {tol:g})")


def check_spd(mat: np.ndarray, name: str, min_eig: float = 0.0) -> None:
    """Raise ValueError unless ``mat`` is symmetric with eigenvalues > min_eig."""
    check_symmetric(mat, name)
    eigvals = np.linalg.eigvalsh(symmetrize(mat))
    if eigvals.min() <= min_eig:
        raise ValueError(
            f"{name} must be positive definite; smallest eigenvalue "
            f"{eigvals.min():.3e}"
        )


def floor_spd(mat: np.ndarray, floor: float = COV_EIG_FLOOR) -> np.ndarray:
    """Clamp the eigenvalues of a symmetric stack ``(..., J, J)`` at ``floor``."""
    sym = symmetrize(mat)
    w, v = np.linalg.eigh(sym)
    if np.all(w >= floor):
        return sym
    w = np.maximum(w, floor)
    return symmetrize(np.einsum("...ij,...j,...kj->...ik", v, w, v))


def chol_logdet(chol: np.ndarray) -> np.ndarray:
    """Log-determinant from a (stack of) Cholesky factor(s)."""
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    return 2.0 * np.sum(np.log(diag), axis=-1)
