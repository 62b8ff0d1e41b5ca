"""
AirFC Simulator - Complex Linear-Algebra Kernel
===============================================

Dense complex linear-algebra contracts the channel, emulator and network
modules rely on:
- Hermitian eigendecomposition with a PSD clamp and descending ordering.
- Numerical rank from singular values.
- Frobenius norms, Hermitian transposes and regularized PSD solves.

All functions are pure; inputs are never modified. Double precision throughout.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from shared_modules.config import EIG_CLAMP_TOL, HERMITIAN_TOL, RANK_REL_TOL
from shared_modules.errors import DimensionMismatch, IndefiniteInput, NotHermitian


# =========================
# MATRIX CONSTRUCTION
# =========================

def as_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    """
    Coerce to a 2-D complex128 array and enforce the construction invariants
    (positive dimensions, all entries finite).
    """
    m = np.array(a, dtype=np.complex128, copy=True)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN/Inf entries")
    return m


def herm(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(a).T


def fro2(a: np.ndarray) -> float:
    """Squared Frobenius norm."""
    return float(np.vdot(a, a).real)


# =========================
# EIGENDECOMPOSITION
# =========================

@dataclass(frozen=True)
class HermitianEig:
    """Eigenpairs of a Hermitian PSD matrix, eigenvalues in descending order."""
    U: np.ndarray
    eigenvalues: np.ndarray

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.eigenvalues) @ herm(self.U)


def hermitian_eig(a: np.ndarray) -> HermitianEig:
    """
    Eigendecomposition of a Hermitian PSD matrix.

    The input is symmetrized as (A + A^H)/2 after checking the asymmetry.
    Both tolerances are relative to the matrix scale max(1, max|A_ij|) so the
    same rule holds for unit-scale test matrices and for large Gram matrices.

    Raises:
        NotHermitian: max|A - A^H| beyond tolerance.
        IndefiniteInput: an eigenvalue below -1e-10 (scaled); values in
            [-tol, 0) are clamped to zero.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"hermitian_eig needs a square matrix, got shape {a.shape}")

    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    asym = float(np.max(np.abs(a - herm(a)))) if a.size else 0.0
    if asym > HERMITIAN_TOL * scale:
        raise NotHermitian(f"Asymmetry {asym:.3e} exceeds tolerance {HERMITIAN_TOL * scale:.3e}")
    sym = 0.5 * (a + herm(a))

    w, U = sla.eigh(sym)
    w = w[::-1].copy()
    U = U[:, ::-1].copy()

    tol = EIG_CLAMP_TOL * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if w.size and w[-1] < -tol:
        raise IndefiniteInput(f"Eigenvalue {w[-1]:.3e} below -{tol:.1e}")
    w[w < 0] = 0.0
    return HermitianEig(U=U, eigenvalues=w)


# =========================
# RANK
# =========================

def numerical_rank(a: np.ndarray, rel_tol: float = RANK_REL_TOL) -> int:
    """Count of singular values above rel_tol * sigma_max (0 for the zero matrix)."""
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    s = np.linalg.svd(np.asarray(a, dtype=np.complex128), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


# =========================
# REGULARIZED SOLVES
# =========================

def psd_solve(gram: np.ndarray, rhs: np.ndarray, reg: float = 0.0) -> np.ndarray:
    """
    Solve (G + reg*I) X = rhs for Hermitian PSD G.

    reg > 0: Cholesky-based solve. reg == 0: pseudo-inverse semantics through
    the eigendecomposition, zero eigenvalues excluded.
    """
    n = gram.shape[0]
    if reg > 0.0:
        return sla.solve(0.5 * (gram + herm(gram)) + reg * np.eye(n), rhs, assume_a="pos")
    eig = hermitian_eig(gram)
    return pinv_apply(eig, rhs)


def pinv_apply(eig: HermitianEig, rhs: np.ndarray, shift: float = 0.0) -> np.ndarray:
    """
    Apply (U diag(w + shift) U^H)^+ to rhs, skipping eigenvalues that are
    numerically zero after the shift.
    """
    w = eig.eigenvalues + shift
    cutoff = RANK_REL_TOL * max(float(np.max(np.abs(w))) if w.size else 0.0, 0.0)
    inv = np.zeros_like(w)
    keep = w > cutoff
    inv[keep] = 1.0 / w[keep]
    return eig.U @ (inv[:, None] * (herm(eig.U) @ rhs))
