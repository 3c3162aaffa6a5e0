import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genreadout.batch import build_batch
from genreadout.checks import gradient_suite, random_grad_config
from genreadout.grad import Feature, backward, backward_powermean, backward_softmax, finite_diff_oracle
from genreadout.readout import Family, ReadoutDomainError, ReadoutParameterError, ReadoutParams

mpmath = pytest.importorskip("mpmath")


def softmax(beta, p):
    return ReadoutParams(Family.SOFTMAX, beta, p)


def powermean(beta, p):
    return ReadoutParams(Family.POWERMEAN, beta, p)


def all_fd(batch, params, up, h=1e-6):
    d_x = np.zeros_like(batch.node_features)
    for n in range(d_x.shape[0]):
        for d in range(d_x.shape[1]):
            d_x[n, d] = finite_diff_oracle(batch, params, Feature(n, d), h, weights=up)
    return (d_x, finite_diff_oracle(batch, params, "beta", h, weights=up),
            finite_diff_oracle(batch, params, "p", h, weights=up))


def test_single_node_softmax():
    b = build_batch([(np.array([[0.4, -2.0]]), [])])
    up = np.array([[1.5, -0.25]])
    g = backward_softmax(b, softmax(0.7, 2.3), up)
    assert np.array_equal(g.d_features, up)
    assert g.d_beta == 0.0 and g.d_p == 0.0


def test_single_node_powermean():
    b = build_batch([(np.array([[0.4, 2.0]]), [])])
    up = np.array([[1.5, -0.25]])
    g = backward_powermean(b, powermean(0.0, 2.3), up)
    assert np.array_equal(g.d_features, up)
    assert g.d_p == 0.0 and g.d_beta == 0.0


def test_softmax_mean_gradient(softmax_batch):
    up = np.random.default_rng(0).normal(size=(softmax_batch.num_graphs, softmax_batch.feature_dim))
    g = backward_softmax(softmax_batch, softmax(1.0, 0.0), up)
    expected = (up / softmax_batch.sizes[:, None])[softmax_batch.graph_index]
    np.testing.assert_allclose(g.d_features, expected, rtol=1e-14, atol=1e-15)


def test_powermean_mean_gradient(positive_batch):
    up = np.random.default_rng(0).normal(size=(positive_batch.num_graphs, positive_batch.feature_dim))
    g = backward_powermean(positive_batch, powermean(1.0, 1.0), up)
    expected = (up / positive_batch.sizes[:, None])[positive_batch.graph_index]
    np.testing.assert_allclose(g.d_features, expected, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("family,params,lo,hi", [
    ("softmax", softmax(0.7, 1.3), -1.0, 1.0),
    ("powermean", powermean(0.5, 2.5), 0.1, 10.0),
])
def test_random_batch_vs_central_differences(rng, family, params, lo, hi):
    from conftest import random_graphs

    b = build_batch(random_graphs(rng, 4, 3, lo=lo, hi=hi))
    up = rng.normal(size=(b.num_graphs, b.feature_dim))
    g = backward(b, params, up)
    d_x, d_beta, d_p = all_fd(b, params, up)
    np.testing.assert_allclose(g.d_features, d_x, rtol=1e-6, atol=1e-8)
    assert g.d_beta == pytest.approx(d_beta, rel=1e-6)
    assert g.d_p == pytest.approx(d_p, rel=1e-6)


def test_oracle_constant_graph_mean_derivative():
    b = build_batch([(np.full((4, 1), 0.3), [])])
    for n in range(4):
        assert finite_diff_oracle(b, softmax(1.0, 0.8), Feature(n, 0)) == pytest.approx(0.25, rel=1e-8)


def test_oracle_rejects_zero_step(softmax_batch):
    with pytest.raises(ValueError):
        finite_diff_oracle(softmax_batch, softmax(1.0, 1.0), "beta", h=0.0)


def test_oracle_domain_exit():
    b = build_batch([(np.array([[1e-7], [1.0]]), [])])
    with pytest.raises(ReadoutDomainError):
        finite_diff_oracle(b, powermean(1.0, 1.0), Feature(0, 0), h=1e-6)


def test_powermean_gradient_margin():
    b = build_batch([(np.array([[1e-7], [1.0]]), [])])
    with pytest.raises(ReadoutDomainError):
        backward_powermean(b, powermean(1.0, 2.0), np.ones((1, 1)))


def test_pole_raises():
    b = build_batch([(np.ones((3, 1)), [])])
    with pytest.raises(ReadoutParameterError):
        backward_softmax(b, softmax(-0.5, 1.0), np.ones((1, 1)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), family=st.sampled_from(["softmax", "powermean"]))
def test_gradient_locality(seed, family):
    rng = np.random.default_rng(seed)
    b, params, up = random_grad_config(rng, Family(family))
    zero = int(rng.integers(b.num_graphs))
    up[zero] = 0.0
    g = backward(b, params, up)
    lo, hi = b.offsets[zero], b.offsets[zero + 1]
    assert np.all(g.d_features[lo:hi] == 0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), family=st.sampled_from(["softmax", "powermean"]),
       lam=st.floats(-10, 10))
def test_linear_in_upstream(seed, family, lam):
    rng = np.random.default_rng(seed)
    b, params, up = random_grad_config(rng, Family(family))
    g1 = backward(b, params, up)
    g2 = backward(b, params, lam * up)
    np.testing.assert_allclose(g2.d_features, lam * g1.d_features, rtol=1e-12, atol=1e-12)
    assert g2.d_beta == pytest.approx(lam * g1.d_beta, rel=1e-12, abs=1e-12)
    assert g2.d_p == pytest.approx(lam * g1.d_p, rel=1e-12, abs=1e-12)


def test_gradient_suite_small():
    for report in gradient_suite(num_configs=20, seed=3):
        assert report.passed, report.failures[:3]


@pytest.mark.parametrize("p", [0.01, -0.004, 0.002])
def test_powermean_dp_near_floor_against_high_precision(p):
    # h = 1e-6 differences are truncation-limited here (r ~ exp(K / p)), so
    # check d/dp against a 50-digit derivative of the textbook formula.
    x = [0.5, 2.0, 3.5, 7.0]
    beta = 0.3
    b = build_batch([(np.array(x)[:, None], [])])
    g = backward_powermean(b, powermean(beta, p), np.ones((1, 1)))
    mpmath.mp.dps = 50

    def f(q):
        s = mpmath.fsum(mpmath.mpf(v) ** q for v in x)
        return (s / (1 + mpmath.mpf(beta) * (len(x) - 1))) ** (1 / q)

    exact = float(mpmath.diff(f, mpmath.mpf(p)))
    exact_beta = float(mpmath.diff(
        lambda bb: (mpmath.fsum(mpmath.mpf(v) ** p for v in x) / (1 + bb * 3)) ** (1 / mpmath.mpf(p)),
        mpmath.mpf(beta)))
    assert g.d_p == pytest.approx(exact, rel=1e-9)
    assert g.d_beta == pytest.approx(exact_beta, rel=1e-9)
