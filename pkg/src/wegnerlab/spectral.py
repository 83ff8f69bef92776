"""Dense symmetric eigendecomposition and eigenvalue counting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .hamiltonian import AssembledHamiltonian

__all__ = [
    "Spectrum",
    "EigenSolverError",
    "eigen_symmetric",
    "eigenvalues",
    "counting_function",
    "spectral_distance",
    "windowed_trace",
]


class EigenSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues (with multiplicity) and orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)


def _as_dense(H) -> np.ndarray:
    if isinstance(H, AssembledHamiltonian):
        return H.dense()
    if sp.issparse(H):
        return H.toarray()
    return np.asarray(H, dtype=float)


def eigen_symmetric(H, vectors: bool = True) -> Spectrum:
    """Full decomposition of a real symmetric matrix (LAPACK ``syevd`` via numpy)."""
    A = _as_dense(H)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    try:
        if vectors:
            w, Q = np.linalg.eigh(A)
        else:
            w, Q = np.linalg.eigvalsh(A), None
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(str(exc)) from exc
    return Spectrum(w, Q)


def eigenvalues(H) -> np.ndarray:
    return eigen_symmetric(H, vectors=False).eigenvalues


def _values(S) -> np.ndarray:
    return S.eigenvalues if isinstance(S, Spectrum) else np.asarray(S, dtype=float)


def counting_function(S, E):
    """``#{n : E_n <= E}``; ``E`` may be an array."""
    return np.searchsorted(_values(S), E, side="right")


def spectral_distance(S, E: float) -> float:
    w = _values(S)
    return float(np.min(np.abs(w - E)))


def windowed_trace(S, E, kappa):
    """Number of eigenvalues in the half-open window ``(E - kappa, E + kappa]``.

    Counted from the offsets ``E_n - E`` so that an eigenvalue strictly
    closer than ``kappa`` to ``E`` is always inside the window, even when
    ``E +/- kappa`` rounds to ``E``.  Whenever ``E +/- kappa`` are exact this
    equals ``counting_function(E + kappa) - counting_function(E - kappa)``.
    """
    if np.any(np.asarray(kappa) < 0):
        raise ValueError("kappa must be non-negative")
    off = _values(S) - np.asarray(E, dtype=float)[..., None]
    kappa = np.asarray(kappa, dtype=float)[..., None]
    return np.sum((off > -kappa) & (off <= kappa), axis=-1)
