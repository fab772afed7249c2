import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wganpca.divergences import (GaussianDist, empirical_w1_exact, gaussian_kl, jsd_gaussian,
                                 optimal_discriminator, projection_coupling_cost)
from wganpca.errors import DomainError, UnsupportedError
from wganpca.gaussian_model import CovarianceModel, SampleSet, generate_covariance
from wganpca.r1pca import SubspaceBasis, residual_objective
from wganpca.rng import RngStream

KL_1_4 = 0.3181471805599453        # 0.5 * (1/4 - 1 + ln 4)
JSD_1_4 = 0.0927333816664125       # adaptive quadrature, N(0,1) vs N(0,4)
LOG2 = math.log(2)


def test_kl_examples():
    p = GaussianDist.from_cov(np.diag([0.8, 0.6]))
    assert gaussian_kl(p, p) == pytest.approx(0.0, abs=1e-14)
    assert gaussian_kl(GaussianDist.from_cov([[1.0]]), GaussianDist.from_cov([[4.0]])) == pytest.approx(KL_1_4, abs=1e-14)
    assert gaussian_kl(p, GaussianDist.from_generator([[1.0], [1.0]])) == math.inf


def test_kl_within_shared_support():
    q = GaussianDist.from_generator([[1.0], [0.0]])
    p = GaussianDist.from_generator([[2.0], [0.0]])
    assert gaussian_kl(p, q) == pytest.approx(0.5 * (4 - 1 - math.log(4)))
    assert gaussian_kl(q, GaussianDist.from_cov(np.eye(2))) == math.inf


def test_jsd_saturates_on_rank_mismatch():
    p = GaussianDist.from_cov(np.diag([0.8, 0.6]))
    est = jsd_gaussian(p, GaussianDist.from_generator([[1.0], [2.0]]), 1000, RngStream(0))
    assert est.value == LOG2 and est.std_err == 0.0 and est.analytic


def test_jsd_saturates_on_different_spans():
    a = GaussianDist.from_generator([[1.0], [0.0], [0.0]])
    b = GaussianDist.from_generator([[1.0], [1e-6], [0.0]])
    assert jsd_gaussian(a, b, 1000, RngStream(0)).value == LOG2


def test_jsd_equal_is_zero():
    p = GaussianDist.from_cov(np.diag([0.8, 0.6]))
    value, se = jsd_gaussian(p, p, 10**5, RngStream(1))
    assert abs(value) <= 3 * se + 1e-15


def test_jsd_matches_quadrature():
    vals = []
    for seed in range(3):
        est = jsd_gaussian(GaussianDist.from_cov([[1.0]]), GaussianDist.from_cov([[4.0]]), 10**5, RngStream(seed))
        assert 0 < est.value < LOG2
        assert abs(est.value - JSD_1_4) <= 3 * est.std_err
        vals.append(est.value)


@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_jsd_in_range(seed, d):
    g = np.random.default_rng(seed)
    a, b = g.standard_normal((d, d)), g.standard_normal((d, d))
    value, _ = jsd_gaussian(GaussianDist.from_generator(a), GaussianDist.from_generator(b), 200, RngStream(seed))
    assert 0.0 <= value <= LOG2


def test_optimal_discriminator():
    assert optimal_discriminator(0.3, 0.3) == 0.5
    assert optimal_discriminator(0.4, 0.0) == 1.0
    assert optimal_discriminator(0.2, 0.6) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        optimal_discriminator(0.0, 0.0)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_optimal_discriminator_range(p, q):
    if p == 0 and q == 0:
        return
    assert 0.0 <= optimal_discriminator(p, q) <= 1.0


def test_projection_cost_examples():
    cov = CovarianceModel.from_matrix(np.diag([0.8, 0.6]))
    assert projection_coupling_cost(cov, SubspaceBasis(np.eye(2)), 100, RngStream(0)).cost == 0.0
    c = projection_coupling_cost(cov, SubspaceBasis(np.eye(2)[:, :1]), 10**6, RngStream(1))
    assert c.method == "projection" and abs(c.cost - 0.6180387232371033) <= 3 * c.std_err
    gcov = generate_covariance(5, RngStream(2))
    basis = SubspaceBasis(gcov.eig.top(2))
    c2 = projection_coupling_cost(gcov, basis, 5000, RngStream(3))
    assert (c2.cost, c2.std_err) == residual_objective(gcov, basis, 5000, RngStream(3))


def test_w1_exact_examples(gen):
    a = gen.standard_normal((20, 3))
    assert empirical_w1_exact(SampleSet.from_array(a), SampleSet.from_array(a[gen.permutation(20)])).cost == 0.0
    c = empirical_w1_exact(SampleSet.from_array([[0.0]]), SampleSet.from_array([[3.0]]))
    assert c.cost == 3.0 and c.method == "exact-assignment" and c.std_err == 0.0


def test_w1_exact_brute_force_8_points(gen):
    a, b = gen.standard_normal((8, 2)), gen.standard_normal((8, 2))
    dist = np.linalg.norm(a[:, None] - b[None], axis=2)
    brute = min(dist[np.arange(8), list(p)].mean() for p in itertools.permutations(range(8)))
    assert empirical_w1_exact(SampleSet.from_array(a), SampleSet.from_array(b)).cost == pytest.approx(brute, abs=1e-14)


def test_w1_exact_refusals(gen):
    with pytest.raises(UnsupportedError):
        empirical_w1_exact(SampleSet.from_array(gen.standard_normal((3, 2))), SampleSet.from_array(gen.standard_normal((4, 2))))
    big = SampleSet.from_array(np.zeros((1025, 1)))
    with pytest.raises(UnsupportedError):
        empirical_w1_exact(big, big)


def test_w1_exact_never_exceeds_projection_pairing():
    cov = CovarianceModel.from_matrix(np.diag([0.8, 0.6]))
    p = np.diag([1.0, 0.0])
    for seed in range(3):
        a = RngStream(seed).normals(512 * 2).reshape(512, 2) @ cov.cholesky().T
        b = a @ p
        paired = float(np.mean(np.linalg.norm(a - b, axis=1)))
        assert empirical_w1_exact(SampleSet.from_array(a), SampleSet.from_array(b)).cost <= paired + 1e-12
