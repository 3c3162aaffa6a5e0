import math

import numpy as np
import pytest

from genreadout.batch import build_batch


def naive_softmax_readout(column, beta, p):
    """Textbook evaluation for one graph, one feature column (no stabilization)."""
    n = len(column)
    e = [math.exp(p * v) for v in column]
    z = sum(e)
    return n / (1 + beta * (n - 1)) * sum(ei / z * v for ei, v in zip(e, column))


def naive_powermean_readout(column, beta, p):
    n = len(column)
    return (sum(v ** p for v in column) / (1 + beta * (n - 1))) ** (1 / p)


def naive_readout(batch, family, beta, p):
    f = naive_softmax_readout if family == "softmax" else naive_powermean_readout
    out = np.zeros((batch.num_graphs, batch.feature_dim))
    for i in range(batch.num_graphs):
        x = batch.node_features[batch.offsets[i]:batch.offsets[i + 1]]
        for d in range(batch.feature_dim):
            out[i, d] = f(list(x[:, d]), beta, p)
    return out


def random_graphs(rng, num_graphs, dim, lo=-1.0, hi=1.0, nodes=(1, 8), edge_dim=0):
    graphs = []
    for _ in range(num_graphs):
        n = int(rng.integers(nodes[0], nodes[1] + 1))
        x = rng.uniform(lo, hi, size=(n, dim))
        m = int(rng.integers(0, 2 * n + 1))
        e = rng.integers(0, n, size=(m, 2))
        if edge_dim:
            graphs.append((x, e, rng.normal(size=(m, edge_dim))))
        else:
            graphs.append((x, e))
    return graphs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def softmax_batch(rng):
    return build_batch(random_graphs(rng, 5, 3))


@pytest.fixture
def positive_batch(rng):
    return build_batch(random_graphs(rng, 5, 3, lo=0.1, hi=10.0))
