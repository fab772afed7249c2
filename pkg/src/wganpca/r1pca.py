"""The rotational-invariant L1 subspace problem ``min_U E||Y - U U^T Y||``.

With a linear generator the WGAN objective reduces to this problem. Its minimizer
``U*`` is characterized by a fixed point: ``U*`` spans the top-r eigenvectors of

    M(U) = E[ Y Y^T / ||Y - U U^T Y|| ].

Everything here is estimated by Monte Carlo on Gaussian draws from a
:class:`~wganpca.gaussian_model.CovarianceModel`, and every statistical output
carries a standard error.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, DimensionError, DomainError, UnsupportedError
from .gaussian_model import CovarianceModel, sample_gaussian
from .linalg import EigenDecomposition, orthonormalize, projector_distance, sym_eig, symmetrize
from .pca import eigen_tie
from .rng import as_stream

log = logging.getLogger(__name__)

ORTHO_TOL = 1e-8
INIT_ANGLE = 0.2


@dataclass(frozen=True)
class SubspaceBasis:
    """Column-orthonormal ``d x r`` matrix plus solver diagnostics (if any)."""

    u: np.ndarray
    iterations: int = 0
    last_distance: float = 0.0
    tie: bool = False

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        if u.ndim != 2 or u.shape[1] > u.shape[0]:
            raise DimensionError(f"basis must be d x r with r <= d, got {u.shape}")
        err = np.linalg.norm(u.T @ u - np.eye(u.shape[1]))
        if err > ORTHO_TOL:
            raise DomainError(f"basis columns not orthonormal (||U^T U - I||_F = {err:.2e})")
        object.__setattr__(self, "u", u)

    @property
    def d(self) -> int:
        return self.u.shape[0]

    @property
    def r(self) -> int:
        return self.u.shape[1]

    def projector(self) -> np.ndarray:
        return self.u @ self.u.T


@dataclass(frozen=True)
class ProjectionDecomposition:
    y_s: np.ndarray
    y_sperp: np.ndarray


@dataclass(frozen=True)
class KeyConditionReport:
    m_hat: np.ndarray
    m_eigs: EigenDecomposition
    cross_term_max: float
    ordering_ok: bool
    std_err: float

    def to_dict(self) -> dict:
        return {
            "m_hat": self.m_hat.tolist(),
            "m_eigs": {
                "eigenvalues": self.m_eigs.eigenvalues.tolist(),
                "eigenvectors": self.m_eigs.eigenvectors.tolist(),
            },
            "cross_term_max": self.cross_term_max,
            "ordering_ok": self.ordering_ok,
            "std_err": self.std_err,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, obj: dict) -> "KeyConditionReport":
        eigs = EigenDecomposition(
            np.array(obj["m_eigs"]["eigenvalues"]), np.array(obj["m_eigs"]["eigenvectors"])
        )
        return cls(np.array(obj["m_hat"]), eigs, float(obj["cross_term_max"]),
                   bool(obj["ordering_ok"]), float(obj["std_err"]))


def project_decompose(y, basis: SubspaceBasis) -> ProjectionDecomposition:
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != basis.d:
        raise DimensionError(f"vector of length {y.shape[-1]} vs basis dimension {basis.d}")
    y_s = (y @ basis.u) @ basis.u.T
    return ProjectionDecomposition(y_s, y - y_s)


def _residual_norms(y: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.linalg.norm(y - (y @ u) @ u.T, axis=1)


def residual_objective(cov: CovarianceModel, basis: SubspaceBasis, n_mc: int, rng) -> tuple[float, float]:
    """Monte-Carlo ``E||Y - U U^T Y||`` and its standard error."""
    if n_mc < 100:
        raise DomainError(f"n_mc must be >= 100, got {n_mc}")
    if basis.d != cov.d:
        raise DimensionError(f"basis dimension {basis.d} vs covariance dimension {cov.d}")
    if basis.r == basis.d:
        return 0.0, 0.0
    y = sample_gaussian(cov, n_mc, rng).samples
    w = _residual_norms(y, basis.u)
    return float(w.mean()), float(w.std(ddof=1) / np.sqrt(n_mc))


def _check_codim(d: int, r: int) -> None:
    if d - r < 2:
        raise UnsupportedError(
            f"d - r = {d - r} < 2: 1/||Y - UU^T Y|| has infinite expectation; "
            "compare residual_objective values instead"
        )


def _weighted_moment(y: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = _residual_norms(y, u)
    n = y.shape[0]
    a = y / np.sqrt(w)[:, None]
    m = symmetrize(a.T @ a / n)
    b = y * y / w[:, None]
    second = b.T @ b / n
    var = np.clip(second - m * m, 0.0, None) * n / max(n - 1, 1)
    return m, np.sqrt(var / n)


def _conditional_moment(cov: CovarianceModel, u: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``M(U)`` with the in-subspace coordinates integrated out analytically.

    Write ``Y = U a + W b`` with ``W`` the orthogonal complement of ``U``. Given
    ``b``, ``a`` is Gaussian with mean ``A b`` and covariance ``S``, so

        E[Y Y^T / ||b||] = E[(y~ y~^T + U S U^T) / ||b||],   y~ = U A b + W b.

    Only ``b`` is sampled, as ``L_bb z`` from the standard normal rows ``z``,
    which removes the variance contributed by ``a``. The estimator is unbiased
    for every ``U``.
    """
    d, r = u.shape
    q, _ = np.linalg.qr(u, mode="complete")
    w = q[:, r:]
    k = cov.k_y
    c_ab = u.T @ k @ w
    c_bb = symmetrize(w.T @ k @ w)
    a_map = np.linalg.solve(c_bb, c_ab.T).T
    s_cond = symmetrize(u.T @ k @ u - a_map @ c_ab.T)
    l_bb = np.linalg.cholesky(c_bb)
    n_mc = z.shape[0]
    b = z[:, : d - r] @ l_bb.T
    nb = np.linalg.norm(b, axis=1)
    yt = b @ (u @ a_map + w).T
    q_in = u @ s_cond @ u.T
    inv = 1.0 / nb
    c = yt * np.sqrt(inv)[:, None]
    m = symmetrize(c.T @ c / n_mc + q_in * inv.mean())
    # entrywise second moment of (y~_i y~_j + Q_ij) / ||b||
    b2 = yt * yt * inv[:, None]
    c2 = yt * inv[:, None]
    second = b2.T @ b2 / n_mc + 2.0 * q_in * (c2.T @ c2 / n_mc) + q_in ** 2 * np.mean(inv ** 2)
    var = np.clip(second - m * m, 0.0, None) * n_mc / max(n_mc - 1, 1)
    return m, np.sqrt(var / n_mc)


def key_condition_report(m_hat: np.ndarray, se: np.ndarray, cov: CovarianceModel, r: int) -> KeyConditionReport:
    v = cov.eig.eigenvectors
    c = v.T @ m_hat @ v
    off = c - np.diag(np.diag(c))
    diag = np.diag(c)
    ordering_ok = bool(np.min(diag[:r]) >= np.max(diag[r:])) if r < cov.d else True
    return KeyConditionReport(m_hat, sym_eig(m_hat), float(np.max(np.abs(off))), ordering_ok, float(np.max(se)))


def estimate_m_matrix(cov: CovarianceModel, basis: SubspaceBasis, n_mc: int, rng) -> KeyConditionReport:
    """Monte-Carlo estimate of ``M(U)`` with diagnostics in the true eigenbasis of ``cov``.

    ``cross_term_max`` is the largest off-diagonal magnitude of ``V^T M V``;
    ``ordering_ok`` says whether every ``v_j^T M v_j`` for ``j <= r`` is at least
    every ``v_k^T M v_k`` for ``k > r``.
    """
    _check_codim(basis.d, basis.r)
    if n_mc < 1000:
        raise DomainError(f"n_mc must be >= 1000, got {n_mc}")
    if basis.d != cov.d:
        raise DimensionError(f"basis dimension {basis.d} vs covariance dimension {cov.d}")
    y = sample_gaussian(cov, n_mc, rng).samples
    m_hat, se = _weighted_moment(y, basis.u)
    return key_condition_report(m_hat, se, cov, basis.r)


def rotated_start(v_r: np.ndarray, angle: float, rng) -> np.ndarray:
    """Rotate ``span(v_r)`` by ``angle`` radians in a random plane crossing its boundary.

    The plane is spanned by a random unit vector inside the subspace and one
    orthogonal to it, so the projector moves by exactly ``sqrt(2) sin(angle)``.
    """
    d, r = v_r.shape
    gen = as_stream(rng).generator()
    a = v_r @ gen.standard_normal(r)
    a /= np.linalg.norm(a)
    b = gen.standard_normal(d)
    b -= v_r @ (v_r.T @ b)
    b /= np.linalg.norm(b)
    rot = (np.eye(d) + (np.cos(angle) - 1.0) * (np.outer(a, a) + np.outer(b, b))
           + np.sin(angle) * (np.outer(b, a) - np.outer(a, b)))
    return orthonormalize(rot @ v_r)


def solve_key_condition(cov: CovarianceModel, r: int, n_mc: int, max_iter: int, tol: float, rng,
                        init: np.ndarray | None = None, conditional: bool = True) -> SubspaceBasis:
    """Fixed-point iteration ``U <- top_r(M(U))`` on one shared set of Monte-Carlo draws.

    The draws are fixed across iterations (common random numbers), so the
    update is a deterministic map and successive iterates can settle. With
    ``conditional=False`` the plain estimator is used and each step is a
    majorize-minimize update of the empirical objective; the default
    conditional estimator has far lower variance at the same ``n_mc``.
    Convergence is measured by projector distance between successive iterates.
    """
    _check_codim(cov.d, r)
    if tol <= 0:
        raise DomainError("tol must be positive")
    stream = as_stream(rng)
    tie = eigen_tie(cov.spectrum, r)
    if tie:
        log.warning("covariance has an eigenvalue tie at r=%d; minimizer is not unique", r)
    u = init if init is not None else rotated_start(cov.eig.top(r), INIT_ANGLE, stream.child(0))
    if conditional:
        z = stream.child(1).normals(n_mc * (cov.d - r)).reshape(n_mc, cov.d - r)
    else:
        y = sample_gaussian(cov, n_mc, stream.child(1)).samples
    dist = np.inf
    for it in range(1, max_iter + 1):
        m_hat, _ = _conditional_moment(cov, u, z) if conditional else _weighted_moment(y, u)
        u_next = orthonormalize(sym_eig(m_hat).top(r))
        dist = projector_distance(u_next, u)
        u = u_next
        if dist < tol:
            return SubspaceBasis(u, it, dist, tie)
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (last projector step {dist:.3e})", dist, max_iter
    )


def generator_from_subspace(cov: CovarianceModel, basis: SubspaceBasis) -> np.ndarray:
    """Covariance ``P K_Y P`` of the projected data, ``P = U U^T``."""
    if basis.d != cov.d:
        raise DimensionError(f"basis dimension {basis.d} vs covariance dimension {cov.d}")
    p = basis.projector()
    return symmetrize(p @ cov.k_y @ p)
