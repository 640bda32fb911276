"""Eigendecomposition of the normalized adjacency and its low-rank factorization."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceFailure,
    DimensionTooLarge,
    NegativeEigenvalue,
    ShapeMismatch,
)
from .graph import NormalizedMatrices


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Full spectrum of the normalized adjacency, eigenvalues in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    k: int

    @property
    def F_star(self) -> np.ndarray:
        return self.eigenvectors[:, : self.k]

    @property
    def lambdas(self) -> np.ndarray:
        """Laplacian eigenvalues, ascending."""
        return 1.0 - self.eigenvalues

    @property
    def N(self) -> int:
        return len(self.eigenvalues)

    def with_k(self, k: int) -> "SpectralDecomposition":
        if not 1 <= k <= self.N:
            raise DimensionTooLarge(f"k={k} outside [1, {self.N}]")
        return SpectralDecomposition(self.eigenvalues, self.eigenvectors, k)


def _fix_signs(V):
    # Largest |entry| of each column made positive; argmax returns the lowest index on ties.
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _adjacency(m):
    return m.adjacency if isinstance(m, NormalizedMatrices) else np.asarray(m, dtype=float)


def eigendecompose(m: NormalizedMatrices, k: int) -> SpectralDecomposition:
    A = _adjacency(m)
    N = A.shape[0]
    if not 1 <= k <= N:
        raise DimensionTooLarge(f"k={k} outside [1, {N}]")
    try:
        vals, vecs = scipy.linalg.eigh(A)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise ConvergenceFailure(str(exc)) from None
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = _fix_signs(vecs[:, order])
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralDecomposition(vals, vecs, int(k))


def mf_loss(m, F) -> float:
    """Squared Frobenius distance between the normalized adjacency and F F^T."""
    A = _adjacency(m)
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != A.shape[0]:
        raise ShapeMismatch(f"F has shape {F.shape}, expected ({A.shape[0]}, k)")
    R = A - F @ F.T
    return float(np.sum(R * R))


def best_rank_k_value(dec: SpectralDecomposition, k: int) -> float:
    if not 0 <= k <= dec.N:
        raise DimensionTooLarge(f"k={k} outside [0, {dec.N}]")
    tail = dec.eigenvalues[k:]
    return float(np.sum(tail * tail))


def eckart_young_minimizer(dec: SpectralDecomposition, k: int) -> np.ndarray:
    if not 1 <= k <= dec.N:
        raise DimensionTooLarge(f"k={k} outside [1, {dec.N}]")
    gk = dec.eigenvalues[k - 1]
    if gk < 0:
        raise NegativeEigenvalue(f"gamma_{k} = {gk:.3e} < 0 cannot be written as F F^T")
    return dec.eigenvectors[:, :k] * np.sqrt(dec.eigenvalues[:k])[None, :]


def principal_angles(A, B) -> np.ndarray:
    """Canonical angles (radians, ascending) between the column spans of A and B."""
    return scipy.linalg.subspace_angles(np.asarray(A, float), np.asarray(B, float))[::-1]


def reconstruct(dec: SpectralDecomposition) -> np.ndarray:
    V = dec.eigenvectors
    return (V * dec.eigenvalues) @ V.T
