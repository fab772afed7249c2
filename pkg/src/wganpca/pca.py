"""Closed-form r-PCA baselines (population and empirical)."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .gaussian_model import CovarianceModel, SampleSet, empirical_covariance
from .linalg import frobenius_distance

log = logging.getLogger(__name__)

TIE_TOL = 1e-8


@dataclass(frozen=True)
class PcaSolution:
    r: int
    generator_gram: np.ndarray
    basis: np.ndarray
    residual: float
    tie: bool = False


def eigen_tie(spectrum: np.ndarray, r: int) -> bool:
    """True when the r-th and (r+1)-th eigenvalues are indistinguishable."""
    return r < len(spectrum) and abs(spectrum[r - 1] - spectrum[r]) < TIE_TOL


def population_pca(cov: CovarianceModel, r: int) -> PcaSolution:
    if not 1 <= r <= cov.d:
        raise DomainError(f"rank r={r} outside [1, {cov.d}]")
    lam = cov.eig.eigenvalues[:r]
    basis = cov.eig.eigenvectors[:, :r] * np.sqrt(np.clip(lam, 0.0, None))
    if r == cov.d:
        gram = cov.k_y.copy()
    else:
        gram = basis @ basis.T
    tie = eigen_tie(cov.eig.eigenvalues, r)
    if tie:
        log.warning("eigenvalue tie at position r=%d; r-PCA subspace is not unique", r)
    return PcaSolution(r, gram, basis, frobenius_distance(cov.k_y, gram), tie)


def empirical_pca(samples: SampleSet, r: int) -> PcaSolution:
    if not 1 <= r <= samples.dim:
        raise DomainError(f"rank r={r} outside [1, {samples.dim}]")
    return population_pca(CovarianceModel.from_matrix(empirical_covariance(samples)), r)
