import numpy as np
import pytest
from hypothesis import given, strategies as st

from wganpca.errors import DomainError
from wganpca.gaussian_model import (CovarianceModel, SampleSet, empirical_covariance, generate_covariance,
                                    read_samples_csv, sample_gaussian, sample_latent, write_samples_csv)
from wganpca.linalg import sym_eig
from wganpca.rng import RngStream, polar_normals


def test_unit_frobenius_d32():
    for seed in range(5):
        cov = generate_covariance(32, RngStream(seed))
        assert abs(np.linalg.norm(cov.k_y) - 1.0) <= 1e-10


def test_generate_deterministic():
    a = generate_covariance(6, RngStream(3, 1))
    b = generate_covariance(6, RngStream(3, 1))
    assert np.array_equal(a.k_y, b.k_y)
    assert np.array_equal(a.eig.eigenvectors, b.eig.eigenvectors)


def test_psd_over_100_seeds():
    for seed in range(100):
        cov = generate_covariance(8, RngStream(seed))
        assert sym_eig(cov.k_y).eigenvalues.min() >= -1e-10
        assert np.array_equal(cov.k_y, cov.k_y.T)


def test_generate_rejects_small_d():
    with pytest.raises(DomainError):
        generate_covariance(1, RngStream(0))


def test_sample_identity_deterministic():
    cov = CovarianceModel.from_matrix(np.eye(2))
    a = sample_gaussian(cov, 1, RngStream(9)).samples
    b = sample_gaussian(cov, 1, RngStream(9)).samples
    assert a.shape == (1, 2) and np.array_equal(a, b)


def test_sample_covariance_clt():
    cov = CovarianceModel.from_matrix(np.diag([0.8, 0.6]))
    s = sample_gaussian(cov, 100000, RngStream(1))
    assert np.max(np.abs(empirical_covariance(s) - cov.k_y)) <= 0.02


def test_sample_degenerate_support():
    cov = CovarianceModel.from_matrix(np.full((2, 2), 0.5))
    y = sample_gaussian(cov, 1000, RngStream(2)).samples
    assert np.max(np.abs(y[:, 1] - y[:, 0])) <= 1e-9


def test_latent_examples():
    x = sample_latent(1, 10**6, RngStream(4)).samples
    assert abs(x.var() - 1.0) <= 0.01
    assert np.array_equal(sample_latent(3, 10, RngStream(5)).samples, sample_latent(3, 10, RngStream(5)).samples)
    s = sample_latent(8, 10**5, RngStream(6))
    assert np.max(np.abs(empirical_covariance(s) - np.eye(8))) <= 0.05


def test_empirical_covariance_examples():
    np.testing.assert_array_equal(empirical_covariance(SampleSet.from_array([[1.0, 2.0]])), [[1, 2], [2, 4]])
    np.testing.assert_array_equal(empirical_covariance(SampleSet.from_array([[1.0, 0], [-1.0, 0]])), np.diag([1.0, 0]))
    cov = generate_covariance(8, RngStream(7))
    s = sample_gaussian(cov, 10**5, RngStream(8))
    assert np.linalg.norm(empirical_covariance(s) - cov.k_y) <= 0.02


def test_error_halves_when_n_quadruples():
    cov = generate_covariance(4, RngStream(10))
    errs = []
    for n in (4000, 16000):
        e = [np.linalg.norm(empirical_covariance(sample_gaussian(cov, n, RngStream(s, n))) - cov.k_y)
             for s in range(40)]
        errs.append(np.mean(e))
    assert 0.25 <= errs[1] / errs[0] <= 0.75


def test_streams_do_not_overlap():
    a = RngStream(1, 0).generator().random(10**6)
    b = RngStream(1, 1).generator().random(10**6)
    assert np.intersect1d(a, b).size == 0
    assert abs(np.corrcoef(a, b)[0, 1]) < 5e-3


def test_polar_normals_moments():
    z = polar_normals(RngStream(11).generator(), 10**6)
    assert abs(z.mean()) < 5e-3 and abs(z.var() - 1) < 5e-3
    assert abs(np.mean(z ** 4) - 3) < 0.03


@given(n=st.integers(1, 20), d=st.integers(1, 5), seed=st.integers(0, 2**63))
def test_csv_round_trip(n, d, seed, tmp_path_factory):
    s = sample_gaussian(CovarianceModel.from_matrix(np.eye(d)), n, RngStream(seed))
    path = write_samples_csv(s, tmp_path_factory.mktemp("csv") / "s.csv")
    assert path.read_text().splitlines()[0] == f"dim={d},n={n},seed={s.seed}"
    back = read_samples_csv(path)
    assert np.array_equal(back.samples, s.samples) and back.seed == s.seed
