"""Generalized readouts: softmax and power-mean families plus classic pools.

All reductions are segment reductions over the node rows of each graph, done
independently per feature column, in ascending node order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .batch import GraphBatch

P_FLOOR = 1e-4
POLE_TOL = 1e-12


class ReadoutError(ValueError):
    pass


class ReadoutDomainError(ReadoutError):
    """Input features outside the domain of the readout."""


class ReadoutParameterError(ReadoutError):
    """(beta, p) unusable for this batch."""


class Family(str, enum.Enum):
    SOFTMAX = "softmax"
    POWERMEAN = "powermean"


class Classic(str, enum.Enum):
    MEAN = "mean"
    MAX = "max"
    SUM = "sum"
    MIN = "min"


@dataclass(frozen=True)
class ReadoutParams:
    family: Family
    beta: float
    p: float
    learnable: Tuple[bool, bool] = (False, False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "learnable", tuple(bool(v) for v in self.learnable))
        if not (math.isfinite(self.beta) and math.isfinite(self.p)):
            raise ReadoutParameterError(f"beta and p must be finite, got {self.beta}, {self.p}")
        if len(self.learnable) != 2:
            raise ReadoutParameterError("learnable is a (beta, p) pair of flags")

    def replace(self, **kw) -> "ReadoutParams":
        fields = dict(family=self.family, beta=self.beta, p=self.p, learnable=self.learnable)
        fields.update(kw)
        return ReadoutParams(**fields)


# Initial values used in the reference experiments; learnable by default.
PRESETS = {
    "Softmax1": ReadoutParams(Family.SOFTMAX, 1.0, 1.0, (True, True)),
    "Softmax2": ReadoutParams(Family.SOFTMAX, 1e-5, 1e-5, (True, True)),
    "PowerMean1": ReadoutParams(Family.POWERMEAN, 1.0, 1.0, (True, True)),
    "PowerMean2": ReadoutParams(Family.POWERMEAN, 1e-5, 10.0, (True, True)),
}


def _segments(offsets):
    return offsets[:-1], np.diff(offsets)


def _denominator(sizes, beta):
    denom = 1.0 + beta * (sizes - 1).astype(np.float64)
    if np.any(np.abs(denom) < POLE_TOL):
        raise ReadoutParameterError(f"beta={beta} puts 1 + beta*(N-1) at a pole for this batch")
    return denom


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise ReadoutDomainError("node features must be finite")


# ---------------------------------------------------------------- softmax family

@dataclass
class _SoftmaxCtx:
    x: np.ndarray
    starts: np.ndarray
    sizes: np.ndarray
    gi: np.ndarray
    weights: np.ndarray
    pooled: np.ndarray
    scale: np.ndarray
    denom: np.ndarray
    p: float


def softmax_forward(x, offsets, beta, p):
    """Return ``(r, ctx)`` for the softmax family on a raw feature matrix."""
    _check_finite(x)
    starts, sizes = _segments(offsets)
    gi = np.repeat(np.arange(len(sizes)), sizes)
    denom = _denominator(sizes, beta)
    s = p * x
    shifted = s - np.maximum.reduceat(s, starts, axis=0)[gi]
    e = np.exp(shifted)
    w = e / np.add.reduceat(e, starts, axis=0)[gi]
    pooled = np.add.reduceat(w * x, starts, axis=0)
    scale = sizes / denom
    r = scale[:, None] * pooled
    return r, _SoftmaxCtx(x, starts, sizes, gi, w, pooled, scale, denom, p)


def softmax_backward(ctx: _SoftmaxCtx, upstream):
    """Gradients of ``sum(upstream * r)`` w.r.t. features, beta and p."""
    g = upstream * ctx.scale[:, None]
    centered = ctx.x - ctx.pooled[ctx.gi]
    d_x = g[ctx.gi] * ctx.weights * (1.0 + ctx.p * centered)
    spread = np.add.reduceat(ctx.weights * centered * centered, ctx.starts, axis=0)
    d_p = float(np.sum(g * spread))
    dscale = -(ctx.sizes - 1) / ctx.denom
    d_beta = float(np.sum(g * dscale[:, None] * ctx.pooled))
    return d_x, d_beta, d_p


# -------------------------------------------------------------- power-mean family

@dataclass
class _PowerMeanCtx:
    x: np.ndarray
    starts: np.ndarray
    sizes: np.ndarray
    gi: np.ndarray
    log_gap: np.ndarray
    weights: np.ndarray
    t: np.ndarray
    r: np.ndarray
    denom: np.ndarray
    p: float


def powermean_forward(x, offsets, beta, p):
    """Return ``(r, ctx)`` for the power-mean family.

    Evaluated as ``x_ext * exp(t)`` where ``x_ext`` is the per-column max
    (p > 0) or min (p < 0) of the graph and
    ``t = (log sum_n exp(p * (log x_n - log x_ext)) + log c) / p``.
    Every exponent is <= 0, so large |p| stays finite.
    """
    _check_finite(x)
    if np.any(x <= 0):
        raise ReadoutDomainError("power-mean readout needs strictly positive features")
    if abs(p) < P_FLOOR:
        raise ReadoutParameterError(f"|p| must be >= {P_FLOOR} for the power-mean family, got {p}")
    starts, sizes = _segments(offsets)
    gi = np.repeat(np.arange(len(sizes)), sizes)
    denom = _denominator(sizes, beta)
    if np.any(denom < 0):
        raise ReadoutParameterError(f"beta={beta} makes 1 + beta*(N-1) negative for this batch")
    reduce = np.maximum if p > 0 else np.minimum
    x_ext = reduce.reduceat(x, starts, axis=0)
    log_x = np.log(x)
    log_gap = log_x - np.log(x_ext)[gi]
    q = np.exp(p * log_gap)
    total = np.add.reduceat(q, starts, axis=0)
    w = q / total[gi]
    t = (np.log(total) - np.log(denom)[:, None]) / p
    with np.errstate(over="ignore"):
        r = x_ext * np.exp(t)
    if not np.all(np.isfinite(r)):
        raise ReadoutDomainError(f"power-mean readout overflowed at beta={beta}, p={p}")
    return r, _PowerMeanCtx(x, starts, sizes, gi, log_gap, w, t, r, denom, p)


def powermean_backward(ctx: _PowerMeanCtx, upstream):
    gr = upstream * ctx.r
    # r / x first: it is exactly 1 for a single-node graph
    d_x = upstream[ctx.gi] * ctx.weights * (ctx.r[ctx.gi] / ctx.x)
    mean_gap = np.add.reduceat(ctx.weights * ctx.log_gap, ctx.starts, axis=0)
    d_p = float(np.sum(gr * (mean_gap - ctx.t))) / ctx.p
    dlogc = -(ctx.sizes - 1) / ctx.denom
    d_beta = float(np.sum(gr * dlogc[:, None])) / ctx.p
    return d_x, d_beta, d_p


# ------------------------------------------------------------------ classic pools

def classic_forward(x, offsets, kind):
    starts, sizes = _segments(offsets)
    kind = Classic(kind)
    if kind is Classic.MEAN:
        return np.add.reduceat(x, starts, axis=0) / sizes[:, None]
    if kind is Classic.SUM:
        return np.add.reduceat(x, starts, axis=0)
    if kind is Classic.MAX:
        return np.maximum.reduceat(x, starts, axis=0)
    return np.minimum.reduceat(x, starts, axis=0)


def classic_backward(x, offsets, kind, upstream):
    """Gradient of a classic pool; max/min route to the first extreme node."""
    starts, sizes = _segments(offsets)
    gi = np.repeat(np.arange(len(sizes)), sizes)
    kind = Classic(kind)
    if kind is Classic.SUM:
        return upstream[gi].copy()
    if kind is Classic.MEAN:
        return (upstream / sizes[:, None])[gi]
    ext = classic_forward(x, offsets, kind)
    hit = x == ext[gi]
    before = np.cumsum(hit, axis=0) - hit
    first = hit & (before == before[starts][gi])
    return np.where(first, upstream[gi], 0.0)


# ----------------------------------------------------------------- public surface

def readout_softmax(batch: GraphBatch, params: ReadoutParams) -> np.ndarray:
    """Softmax-family readout, shape ``(num_graphs, feature_dim)``.

    ``r_i = N_i / (1 + beta (N_i - 1)) * sum_n softmax(p x)_n x_n`` with the
    softmax taken over the nodes of graph ``i``, separately per column.
    """
    return softmax_forward(batch.node_features, batch.offsets, params.beta, params.p)[0]


def readout_powermean(batch: GraphBatch, params: ReadoutParams) -> np.ndarray:
    """Power-mean readout ``(sum_n x_n^p / (1 + beta (N_i - 1)))^(1/p)``."""
    return powermean_forward(batch.node_features, batch.offsets, params.beta, params.p)[0]


def readout(batch: GraphBatch, params: ReadoutParams) -> np.ndarray:
    if params.family is Family.SOFTMAX:
        return readout_softmax(batch, params)
    return readout_powermean(batch, params)


def readout_classic(batch: GraphBatch, kind) -> np.ndarray:
    return classic_forward(batch.node_features, batch.offsets, kind)
