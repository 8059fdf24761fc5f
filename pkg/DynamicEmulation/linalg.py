# In DynamicEmulation/linalg.py
"""
Dense numerical kernels shared by the emulators: a sign-fixed SVD, Cholesky
factors of correlation matrices, and the partitioned inverse update that makes
evaluating the neighborhood criterion O(k^2) per candidate.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .exceptions import DegenerateUpdateError, InputError, SingularMatrixError

# Relative floor on the Schur complement of an augmented correlation matrix.
PHI_FLOOR = 1e-12


def svd(Y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Thin SVD of an L x N matrix with a deterministic sign convention.

    Args:
        Y: The L x N matrix to decompose.

    Returns:
        (U, d, V) with U of shape (L, k), d of length k sorted descending and V of
        shape (N, k), k = min(N, L), such that Y = U diag(d) V^T. The entry of largest
        magnitude in every column of U is positive.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise InputError(f"Expected a 2-D matrix, got shape {Y.shape}.")
    if not np.all(np.isfinite(Y)):
        raise InputError("Matrix to decompose contains non-finite entries.")

    U, d, Vt = scipy.linalg.svd(Y, full_matrices=False, check_finite=False)
    V = Vt.T

    # Flip columns so the largest-magnitude entry of each u_i is positive.
    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivots, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, d, V * signs


@dataclass(frozen=True, eq=False)
class SpdFactor:
    """Lower Cholesky factor of K + eta*I together with log|K + eta*I|."""
    dimension: int
    factor: np.ndarray
    log_det: float

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solves (K + eta*I) z = b."""
        return scipy.linalg.cho_solve((self.factor, True), b, check_finite=False)

    def inverse(self) -> np.ndarray:
        """Explicit inverse; only the neighborhood hot loop asks for it."""
        return self.solve(np.eye(self.dimension))

    def matrix(self) -> np.ndarray:
        """Reconstructs K + eta*I from the factor."""
        return self.factor @ self.factor.T


def spd_factorize(K: np.ndarray, eta: float = 0.0) -> SpdFactor:
    """
    Cholesky-factorizes K + eta*I.

    Raises:
        InputError: K is not square, not finite, or eta is negative.
        SingularMatrixError: the factorization broke down; `pivot` is the order of
            the first leading minor that is not positive definite.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"Expected a square matrix, got shape {K.shape}.")
    if eta < 0:
        raise InputError(f"Nugget must be nonnegative, got {eta}.")
    if not np.all(np.isfinite(K)):
        raise InputError("Correlation matrix contains non-finite entries.")

    n = K.shape[0]
    A = K + eta * np.eye(n)
    c, info = lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        raise SingularMatrixError(
            f"Matrix is not positive definite: leading minor of order {info} failed (nugget {eta:g}).",
            pivot=int(info),
        )
    if info < 0:
        raise InputError(f"Illegal argument passed to the Cholesky routine (info={info}).")

    log_det = 2.0 * float(np.sum(np.log(np.diag(c))))
    return SpdFactor(dimension=n, factor=c, log_det=log_det)


@dataclass(frozen=True, eq=False)
class PartitionedInverse:
    """
    Inverse of the augmented matrix [[K, k], [k^T, c]] in block form:

        [[K^-1 + phi g g^T, g], [g^T, 1/phi]],  g = -K^-1 k / phi,  phi = c - k^T K^-1 k.
    """
    base: SpdFactor
    u: np.ndarray  # K^-1 k
    g: np.ndarray
    phi: float

    def assemble(self) -> np.ndarray:
        """Dense (k+1) x (k+1) inverse."""
        k = self.base.dimension
        out = np.empty((k + 1, k + 1))
        out[:k, :k] = self.base.inverse() + self.phi * np.outer(self.g, self.g)
        out[:k, k] = self.g
        out[k, :k] = self.g
        out[k, k] = 1.0 / self.phi
        return out

    def quad_form(self, a: np.ndarray, b: float, kinv_a: Optional[np.ndarray] = None) -> float:
        """
        Returns [a; b]^T (augmented)^-1 [a; b].

        With K^-1 a supplied the cost is O(k): a^T K^-1 a + (u^T a - b)^2 / phi.
        """
        if kinv_a is None:
            kinv_a = self.base.solve(a)
        s = float(self.u @ a)
        return float(a @ kinv_a) + (s - b) ** 2 / self.phi


def partitioned_inverse_update(base: SpdFactor, k_vec: np.ndarray, diag_new: float) -> PartitionedInverse:
    """
    Block inverse of K^(k) augmented by one row/column, reusing the stored factor.

    Args:
        base: Factor of the current k x k matrix (nugget already folded in).
        k_vec: Cross-correlations between the new point and the k current points.
        diag_new: Diagonal entry of the new point, normally 1 + eta.

    Raises:
        DegenerateUpdateError: phi <= 0, i.e. the new point coincides numerically
            with the current set.
    """
    k_vec = np.asarray(k_vec, dtype=float)
    if k_vec.shape != (base.dimension,):
        raise InputError(f"Expected a cross-correlation vector of length {base.dimension}, got {k_vec.shape}.")

    u = base.solve(k_vec)
    phi = float(diag_new - k_vec @ u)
    if not phi > PHI_FLOOR * abs(diag_new):
        raise DegenerateUpdateError(f"Augmented matrix is not positive definite (phi={phi:.3e}).", phi=phi)
    return PartitionedInverse(base=base, u=u, g=-u / phi, phi=phi)
