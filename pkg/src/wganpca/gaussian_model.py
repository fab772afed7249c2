"""Ground-truth covariances, Gaussian sampling and empirical covariances."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError
from .linalg import EigenDecomposition, as_matrix, cholesky_factor, sym_eig, symmetrize
from .rng import as_stream, polar_normals


@dataclass(frozen=True)
class CovarianceModel:
    d: int
    k_y: np.ndarray
    eig: EigenDecomposition
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_matrix(cls, k) -> "CovarianceModel":
        """Wrap a symmetric PSD matrix as-is (no renormalization)."""
        k = symmetrize(as_matrix(k, "k_y"))
        if k.shape[0] != k.shape[1]:
            raise DimensionError(f"covariance must be square, got {k.shape}")
        eig = sym_eig(k)
        if eig.eigenvalues[-1] < -1e-10 * max(1.0, abs(eig.eigenvalues[0])):
            raise DomainError("covariance is not positive semidefinite")
        return cls(k.shape[0], k, eig)

    @property
    def spectrum(self) -> np.ndarray:
        return self.eig.eigenvalues

    def cholesky(self) -> np.ndarray:
        if self._chol is None:
            object.__setattr__(self, "_chol", cholesky_factor(self.k_y))
        return self._chol


@dataclass(frozen=True)
class SampleSet:
    n: int
    dim: int
    samples: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("a sample set needs at least one sample")
        if self.samples.shape != (self.n, self.dim):
            raise DimensionError(f"samples shape {self.samples.shape} != ({self.n}, {self.dim})")

    @classmethod
    def from_array(cls, x, seed: int = 0) -> "SampleSet":
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return cls(x.shape[0], x.shape[1], x, seed)


def generate_covariance(d: int, rng) -> CovarianceModel:
    """Random unit-Frobenius covariance ``A diag(s) A^T / ||.||_F``.

    ``A`` has i.i.d. standard normal entries (drawn first, row-major) and
    ``s_i ~ Uniform(0, 10)``. The canonical orthonormal eigenbasis is obtained
    afterwards from the normalized product.
    """
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    gen = as_stream(rng).generator()
    a = polar_normals(gen, d * d).reshape(d, d)
    s2 = 10.0 * gen.random(d)
    k = (a * s2) @ a.T
    k = symmetrize(k / np.linalg.norm(k))
    return CovarianceModel(d, k, sym_eig(k))


def sample_gaussian(cov: CovarianceModel, n: int, rng) -> SampleSet:
    """``n`` rows ``L z`` with ``L`` the Cholesky factor of ``cov.k_y``."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    stream = as_stream(rng)
    z = stream.normals(n * cov.d).reshape(n, cov.d)
    return SampleSet(n, cov.d, z @ cov.cholesky().T, stream.seed)


def sample_latent(r: int, n: int, rng) -> SampleSet:
    if n < 1 or r < 1:
        raise DomainError(f"need r >= 1 and n >= 1, got r={r}, n={n}")
    stream = as_stream(rng)
    return SampleSet(n, r, stream.normals(n * r).reshape(n, r), stream.seed)


def empirical_covariance(s: SampleSet) -> np.ndarray:
    """Second-moment matrix ``(1/n) sum y y^T``; the model is zero-mean so no centering."""
    x = s.samples
    return symmetrize(x.T @ x / s.n)


def write_samples_csv(s: SampleSet, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"dim={s.dim},n={s.n},seed={s.seed}\n")
        w = csv.writer(fh)
        for row in s.samples:
            w.writerow([format(float(v), ".17g") for v in row])
    return path


def read_samples_csv(path) -> SampleSet:
    with Path(path).open(newline="") as fh:
        header = fh.readline().strip()
        meta = dict(item.split("=", 1) for item in header.split(","))
        dim, n, seed = int(meta["dim"]), int(meta["n"]), int(meta["seed"])
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    x = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    if x.shape[0] != n:
        raise DimensionError(f"header says n={n} but file has {x.shape[0]} rows")
    return SampleSet(n, dim, x, seed)
