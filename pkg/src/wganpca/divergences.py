"""Vanilla-GAN divergences and two Wasserstein-1 oracles.

The JSD between a data Gaussian and a lower-dimensional generated Gaussian is
the constant ``log 2``: the supports barely intersect, so the optimal
discriminator separates them perfectly whatever the generator. The Wasserstein-1
oracles bracket the linear-generator WGAN value from two sides: the cost of the
projection coupling ``Y -> U U^T Y`` and exact discrete OT between point sets.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import DimensionError, DomainError, UnsupportedError
from .gaussian_model import CovarianceModel, SampleSet
from .linalg import as_matrix, sym_eig, symmetrize
from .r1pca import SubspaceBasis, residual_objective
from .rng import as_stream, polar_normals

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
ANGLE_TOL = 1e-8
LOG2 = float(np.log(2.0))
MAX_EXACT_OT = 1024


@dataclass(frozen=True)
class GaussianDist:
    """Zero-mean Gaussian ``N(0, cov)`` (possibly degenerate)."""

    dim: int
    cov: np.ndarray
    rank: int

    @classmethod
    def from_cov(cls, cov) -> "GaussianDist":
        c = symmetrize(as_matrix(cov, "cov"))
        lam = sym_eig(c).eigenvalues
        if lam[-1] < -RANK_TOL * max(1.0, abs(lam[0])):
            raise DomainError("covariance is not positive semidefinite")
        return cls(c.shape[0], c, int(np.sum(lam > RANK_TOL)))

    @classmethod
    def from_generator(cls, g) -> "GaussianDist":
        g = np.asarray(g, dtype=np.float64)
        return cls.from_cov(g @ g.T)

    def support_basis(self) -> np.ndarray:
        """Orthonormal basis of the column space of ``cov``."""
        return sym_eig(self.cov).top(self.rank)


@dataclass(frozen=True)
class CouplingCost:
    cost: float
    method: str
    std_err: float = 0.0


@dataclass(frozen=True)
class JsdEstimate:
    value: float
    std_err: float
    raw: float
    analytic: bool

    def __iter__(self):
        return iter((self.value, self.std_err))


def _check_dims(p: GaussianDist, q: GaussianDist) -> None:
    if p.dim != q.dim:
        raise DimensionError(f"dimension mismatch {p.dim} vs {q.dim}")


def _logdet_and_inv(c: np.ndarray) -> tuple[float, np.ndarray]:
    sign, logdet = np.linalg.slogdet(c)
    return float(logdet), np.linalg.inv(c)


def _span_angle(u1: np.ndarray, u2: np.ndarray) -> float:
    # largest principal angle, via the sine for accuracy at small angles
    resid = u2 - u1 @ (u1.T @ u2)
    s = np.linalg.norm(resid, 2) if resid.size else 0.0
    return float(np.arcsin(min(s, 1.0)))


def gaussian_kl(p: GaussianDist, q: GaussianDist) -> float:
    """``KL(p || q)`` for zero-mean Gaussians; ``inf`` when ``p`` escapes ``q``'s support."""
    _check_dims(p, q)
    if q.rank < q.dim:
        if p.rank > q.rank:
            return float("inf")
        bq = q.support_basis()
        bp = p.support_basis()
        if p.rank and _span_angle(bq, bp) > ANGLE_TOL:
            return float("inf")
        # both live in span(q): compare in those coordinates
        p = GaussianDist.from_cov(bq.T @ p.cov @ bq)
        q = GaussianDist.from_cov(bq.T @ q.cov @ bq)
        if p.dim == 0:
            return 0.0
    if p.rank < p.dim:
        return float("inf")
    ld_q, inv_q = _logdet_and_inv(q.cov)
    ld_p, _ = _logdet_and_inv(p.cov)
    return 0.5 * float(np.trace(inv_q @ p.cov) - p.dim + ld_q - ld_p)


def _log_density(x: np.ndarray, cov: np.ndarray) -> np.ndarray:
    k = cov.shape[0]
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, x.T)
    return -0.5 * np.sum(z * z, axis=0) - np.sum(np.log(np.diag(chol))) - 0.5 * k * np.log(2 * np.pi)


def jsd_gaussian(p: GaussianDist, q: GaussianDist, n_mc: int, rng) -> JsdEstimate:
    """Jensen-Shannon divergence between zero-mean Gaussians (natural log).

    Mismatched supports (different rank, or column spaces at a principal angle
    above ``1e-8``) give exactly ``log 2``. Otherwise both are restricted to
    their common support and the JSD is estimated by Monte Carlo with ``n_mc``
    draws from each; the value is clipped to ``[0, log 2]`` and the unclipped
    estimate kept in ``raw``.
    """
    _check_dims(p, q)
    if p.rank != q.rank:
        return JsdEstimate(LOG2, 0.0, LOG2, True)
    bp, bq = p.support_basis(), q.support_basis()
    if p.rank and _span_angle(bp, bq) > ANGLE_TOL:
        return JsdEstimate(LOG2, 0.0, LOG2, True)
    if p.rank == 0:
        return JsdEstimate(0.0, 0.0, 0.0, True)
    cp, cq = bp.T @ p.cov @ bp, bp.T @ q.cov @ bp
    stream = as_stream(rng)
    k = p.rank
    xp = polar_normals(stream.child(0).generator(), n_mc * k).reshape(n_mc, k) @ np.linalg.cholesky(cp).T
    xq = polar_normals(stream.child(1).generator(), n_mc * k).reshape(n_mc, k) @ np.linalg.cholesky(cq).T

    def terms(x, own, other):
        lo, lt = _log_density(x, own), _log_density(x, other)
        # log(2 p / (p + q)) = log 2 - log(1 + exp(lt - lo))
        return LOG2 - np.logaddexp(0.0, lt - lo)

    tp = terms(xp, cp, cq)
    tq = terms(xq, cq, cp)
    raw = 0.5 * (tp.mean() + tq.mean())
    se = 0.5 * np.sqrt(tp.var(ddof=1) / n_mc + tq.var(ddof=1) / n_mc)
    value = float(np.clip(raw, 0.0, LOG2))
    if value != raw:
        log.debug("JSD Monte-Carlo estimate %.3e clipped to %.3e", raw, value)
    return JsdEstimate(value, float(se), float(raw), False)


def optimal_discriminator(p_density: float, q_density: float) -> float:
    """Pointwise optimal vanilla-GAN discriminator ``p / (p + q)``."""
    if p_density < 0 or q_density < 0:
        raise DomainError("densities must be non-negative")
    if p_density == 0 and q_density == 0:
        raise DomainError("discriminator undefined where both densities vanish")
    return p_density / (p_density + q_density)


def projection_coupling_cost(cov: CovarianceModel, basis: SubspaceBasis, n_mc: int, rng) -> CouplingCost:
    """Transport cost of the coupling that sends ``Y`` to ``U U^T Y``."""
    est, se = residual_objective(cov, basis, n_mc, rng)
    return CouplingCost(est, "projection", se)


def empirical_w1_exact(a: SampleSet, b: SampleSet) -> CouplingCost:
    """Exact W1 between two equal-size empirical measures via optimal assignment."""
    if a.n != b.n or a.dim != b.dim:
        raise UnsupportedError(f"need equal sizes and dims, got {a.n}x{a.dim} vs {b.n}x{b.dim}")
    if a.n > MAX_EXACT_OT:
        raise UnsupportedError(f"exact OT capped at n={MAX_EXACT_OT}; subsample first")
    cost = cdist(a.samples, b.samples)
    rows, cols = linear_sum_assignment(cost)
    return CouplingCost(float(cost[rows, cols].mean()), "exact-assignment", 0.0)
