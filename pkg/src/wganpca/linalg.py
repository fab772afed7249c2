"""Dense symmetric linear algebra: Jacobi eigensolver, Cholesky, Frobenius distance.

Matrices are plain ``float64`` numpy arrays. Every function here is pure and
never mutates its arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

SYMMETRY_TOL = 1e-12
SIGN_TOL = 1e-12
PSD_CLAMP_TOL = 1e-8
PIVOT_TOL = 1e-10


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted descending; ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T

    def top(self, r: int) -> np.ndarray:
        return self.eigenvectors[:, :r].copy()


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.array(a, dtype=np.float64, copy=True)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError(f"{name} has non-finite entries")
    return m


def _as_square(a, name: str) -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _fix_signs(v: np.ndarray) -> np.ndarray:
    # first component with magnitude > SIGN_TOL is made positive
    v = v.copy()
    for j in range(v.shape[1]):
        col = v[:, j]
        idx = np.flatnonzero(np.abs(col) > SIGN_TOL)
        if idx.size and col[idx[0]] < 0:
            v[:, j] = -col
    return v


def sym_eig(a, max_sweeps: int = 100) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    The input is symmetrized first. Eigenvalues come back sorted descending
    (ties keep their original diagonal order) and each eigenvector's first
    component of magnitude above ``1e-12`` is positive.
    """
    m = symmetrize(_as_square(a, "a"))
    n = m.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(m)
    if n > 1 and scale > 0:
        target = (1e-15 * scale) ** 2
        for _ in range(max_sweeps):
            off = np.sum(np.square(m - np.diag(np.diag(m))))
            if off <= target:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = m[p, q]
                    if apq == 0.0:
                        continue
                    app, aqq = m[p, p], m[q, q]
                    if abs(apq) < 1e-300 * max(abs(app), abs(aqq), 1.0):
                        m[p, q] = m[q, p] = 0.0
                        continue
                    theta = (aqq - app) / (2.0 * apq)
                    t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(theta, 1.0))
                    c = 1.0 / np.hypot(t, 1.0)
                    s = t * c
                    mp, mq = m[:, p].copy(), m[:, q].copy()
                    m[:, p] = c * mp - s * mq
                    m[:, q] = s * mp + c * mq
                    mp, mq = m[p, :].copy(), m[q, :].copy()
                    m[p, :] = c * mp - s * mq
                    m[q, :] = s * mp + c * mq
                    m[p, q] = m[q, p] = 0.0
                    vp, vq = v[:, p].copy(), v[:, q].copy()
                    v[:, p] = c * vp - s * vq
                    v[:, q] = s * vp + c * vq
    w = np.diag(m).copy()
    order = np.argsort(-w, kind="stable")
    return EigenDecomposition(w[order], _fix_signs(v[:, order]))


def cholesky_factor(a) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == a`` for symmetric PSD ``a``.

    Positive-definite input goes through LAPACK. Semidefinite input falls back
    to the eigendecomposition, clamping eigenvalues in ``[-1e-8, 0)`` to zero,
    and is brought back to lower-triangular form by a QR step.
    """
    m = symmetrize(_as_square(a, "a"))
    try:
        low = np.linalg.cholesky(m)
        # a tiny pivot means the input is (numerically) singular; LAPACK's factor is then noise there
        if np.min(np.diag(low)) ** 2 > PIVOT_TOL * max(float(np.max(np.diag(m))), 1e-300):
            return low
    except np.linalg.LinAlgError:
        pass
    eig = sym_eig(m)
    lam = eig.eigenvalues
    if lam[-1] < -PSD_CLAMP_TOL * max(1.0, abs(lam[0])):
        raise DomainError(f"matrix is indefinite (min eigenvalue {lam[-1]:.3e})")
    b = eig.eigenvectors * np.sqrt(np.clip(lam, 0.0, None))
    _, r = np.linalg.qr(b.T, mode="complete")
    lower = r.T
    signs = np.where(np.diag(lower) < 0, -1.0, 1.0)
    return lower * signs


def frobenius_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def orthonormalize(u: np.ndarray) -> np.ndarray:
    """Column-orthonormal basis of ``span(u)`` keeping each column's orientation."""
    q, r = np.linalg.qr(u)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs


def projector_distance(u1: np.ndarray, u2: np.ndarray) -> float:
    """``||U1 U1^T - U2 U2^T||_F``; invariant to right-rotations of either basis."""
    return frobenius_distance(u1 @ u1.T, u2 @ u2.T)
