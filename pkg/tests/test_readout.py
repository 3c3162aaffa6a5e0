import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genreadout.batch import build_batch, permute_nodes, random_permutations
from genreadout.checks import limit_suite, random_batch
from genreadout.readout import (
    Family,
    ReadoutDomainError,
    ReadoutParameterError,
    ReadoutParams,
    readout,
    readout_classic,
    readout_powermean,
    readout_softmax,
    softmax_forward,
)

from conftest import naive_readout, random_graphs


def one_graph(values):
    return build_batch([(np.asarray(values, dtype=float)[:, None], [])])


def softmax(beta, p):
    return ReadoutParams(Family.SOFTMAX, beta, p)


def powermean(beta, p):
    return ReadoutParams(Family.POWERMEAN, beta, p)


# --------------------------------------------------------------- worked values

def test_softmax_two_nodes_hand_value():
    # weights 1/3, 2/3 for x = [0, ln 2] at p = 1; scale 2/(1+1) = 1
    expected = math.log(2) * 2 / 3
    b = one_graph([0.0, math.log(2)])
    got = readout_softmax(b, softmax(1.0, 1.0))[0, 0]
    assert got == pytest.approx(0.46210, abs=5e-6)
    assert got == pytest.approx(expected, rel=1e-15)
    assert got == pytest.approx(naive_readout(b, "softmax", 1.0, 1.0)[0, 0], rel=1e-15)


def test_softmax_mean_and_sum_settings():
    b = one_graph([1.0, 2.0, 3.0])
    assert readout_softmax(b, softmax(1.0, 0.0))[0, 0] == pytest.approx(2.0, abs=1e-15)
    assert readout_softmax(b, softmax(0.0, 0.0))[0, 0] == pytest.approx(6.0, abs=1e-14)


@pytest.mark.parametrize("beta,p", [(0.0, 0.0), (1.0, 3.0), (-0.4, -7.0), (2.5, 1e6)])
def test_single_node_identity(beta, p):
    x = np.array([[0.3, -1.7, 4.0]])
    b = build_batch([(x, [])])
    assert np.array_equal(readout_softmax(b, softmax(beta, p)), x)
    if p != 0.0:
        xp = np.abs(x) + 0.1
        got = readout_powermean(build_batch([(xp, [])]), powermean(abs(beta), p))
        assert np.array_equal(got, xp)


def test_powermean_mean_sum_quadratic():
    b = one_graph([1.0, 2.0, 3.0])
    assert readout_powermean(b, powermean(1.0, 1.0))[0, 0] == pytest.approx(2.0, rel=1e-14)
    assert readout_powermean(b, powermean(0.0, 1.0))[0, 0] == pytest.approx(6.0, rel=1e-14)
    q = one_graph([1.0, 2.0, 2.0, 5.0])
    got = readout_powermean(q, powermean(1.0, 2.0))[0, 0]
    assert got == pytest.approx(2.91548, abs=5e-6)
    assert got == pytest.approx(math.sqrt((1 + 4 + 4 + 25) / 4), rel=1e-14)


def test_powermean_geometric_mean_near_zero_p_at_beta_one():
    x = [1.0, 2.0, 8.0]
    got = readout_powermean(one_graph(x), powermean(1.0, 1e-4))[0, 0]
    assert got == pytest.approx((1 * 2 * 8) ** (1 / 3), rel=1e-3)


def test_powermean_harmonic_mean():
    x = [1.0, 2.0, 4.0]
    got = readout_powermean(one_graph(x), powermean(1.0, -1.0))[0, 0]
    assert got == pytest.approx(3 / (1 + 0.5 + 0.25), rel=1e-14)


def test_classic_pools():
    assert readout_classic(one_graph([1, 2, 3]), "mean")[0, 0] == 2.0
    assert readout_classic(one_graph([-1, 5, 2]), "max")[0, 0] == 5.0
    assert readout_classic(one_graph([1, 2, 3]), "sum")[0, 0] == 6.0
    assert readout_classic(one_graph([-1, 5, 2]), "min")[0, 0] == -1.0


@pytest.mark.parametrize("family,lo", [("softmax", -1.0), ("powermean", 0.1)])
@pytest.mark.parametrize("beta,p", [(0.0, 1.5), (0.7, -2.0), (1.3, 0.5)])
def test_matches_textbook_formula(rng, family, lo, beta, p):
    b = build_batch(random_graphs(rng, 6, 3, lo=lo, hi=lo + 2.0))
    got = readout(b, ReadoutParams(family, beta, p))
    np.testing.assert_allclose(got, naive_readout(b, family, beta, p), rtol=1e-12, atol=1e-14)


# ------------------------------------------------------------------- errors

def test_nonpositive_feature_rejected_for_powermean():
    with pytest.raises(ReadoutDomainError):
        readout_powermean(one_graph([1.0, 0.0]), powermean(1.0, 2.0))
    with pytest.raises(ReadoutDomainError):
        readout_powermean(one_graph([1.0, -2.0]), powermean(1.0, 2.0))


def test_small_p_rejected_for_powermean():
    with pytest.raises(ReadoutParameterError):
        readout_powermean(one_graph([1.0, 2.0]), powermean(1.0, 5e-5))
    readout_powermean(one_graph([1.0, 2.0]), powermean(1.0, 1e-4))


def test_non_finite_features_rejected():
    with pytest.raises(ReadoutDomainError):
        readout_softmax(one_graph([1.0, np.nan]), softmax(1.0, 1.0))


def test_non_finite_params_rejected():
    with pytest.raises(ReadoutParameterError):
        softmax(np.inf, 1.0)
    with pytest.raises(ReadoutParameterError):
        softmax(1.0, np.nan)


def test_pole_detected():
    # 1 + beta * (3 - 1) == 0 at beta = -0.5
    with pytest.raises(ReadoutParameterError):
        readout_softmax(one_graph([1.0, 2.0, 3.0]), softmax(-0.5, 1.0))
    # the pole only exists for graphs with that size
    readout_softmax(one_graph([1.0, 2.0]), softmax(-0.5, 1.0))


def test_extreme_p_stays_finite():
    b = one_graph([0.5, 1.0, 3.0])
    for p in (1e6, -1e6):
        assert np.isfinite(readout_softmax(b, softmax(1.0, p))).all()
        assert np.isfinite(readout_powermean(b, powermean(0.0, p))).all()
    assert readout_powermean(b, powermean(0.0, 1e6))[0, 0] == pytest.approx(3.0, rel=1e-12)
    assert readout_powermean(b, powermean(0.0, -1e6))[0, 0] == pytest.approx(0.5, rel=1e-12)


# --------------------------------------------------------------- properties

def test_limit_suite_passes():
    reports = limit_suite(num_batches=30, seed=7)
    assert len(reports) == 8
    for r in reports:
        assert r.passed, r.failures[:3]


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), family=st.sampled_from(["softmax", "powermean"]),
       beta=st.floats(0.0, 2.0), p=st.floats(-5.0, 5.0))
def test_permutation_invariance(seed, family, beta, p):
    # small |p| makes power-mean outputs astronomically large, where an
    # absolute tolerance is meaningless
    if family == "powermean" and abs(p) < 0.5:
        p = 0.5
    rng = np.random.default_rng(seed)
    b = random_batch(rng, Family(family))
    params = ReadoutParams(family, beta, p)
    permuted = permute_nodes(b, random_permutations(b, rng))
    np.testing.assert_allclose(readout(permuted, params), readout(b, params), rtol=0, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), family=st.sampled_from(["softmax", "powermean"]))
def test_graph_independence(seed, family):
    rng = np.random.default_rng(seed)
    b = random_batch(rng, Family(family), max_graphs=5)
    if b.num_graphs < 2:
        return
    params = ReadoutParams(family, 0.6, 1.7)
    before = readout(b, params)
    j = int(rng.integers(b.num_graphs))
    x = b.node_features.copy()
    lo, hi = b.offsets[j], b.offsets[j + 1]
    x[lo:hi] = x[lo:hi] * 1.5 + 0.1
    after = readout(b.with_features(x), params)
    others = np.arange(b.num_graphs) != j
    assert np.array_equal(before[others], after[others])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(0.1, 10.0), p=st.floats(-3, 3))
def test_softmax_scale_behaviour(seed, s, p):
    rng = np.random.default_rng(seed)
    b = random_batch(rng, Family.SOFTMAX)
    _, ctx = softmax_forward(b.node_features, b.offsets, 0.4, p)
    r_scaled, ctx_scaled = softmax_forward(b.node_features * s, b.offsets, 0.4, p / s)
    np.testing.assert_allclose(ctx_scaled.weights, ctx.weights, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(r_scaled, s * readout(b, softmax(0.4, p)), rtol=1e-12, atol=1e-12)


def test_reductions_are_reproducible(softmax_batch):
    params = softmax(0.3, 2.0)
    assert np.array_equal(readout(softmax_batch, params), readout(softmax_batch, params))
