"""Analytic readout gradients and a central-difference oracle to check them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .batch import GraphBatch
from .readout import (
    Family,
    ReadoutDomainError,
    ReadoutError,
    ReadoutParams,
    powermean_backward,
    powermean_forward,
    softmax_backward,
    softmax_forward,
)

GRAD_MARGIN = 1e-6


@dataclass
class ReadoutGradients:
    d_features: np.ndarray
    d_beta: float
    d_p: float


class Feature(NamedTuple):
    node: int
    dim: int


Target = Union[Feature, str]


def _upstream(batch, upstream):
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (batch.num_graphs, batch.feature_dim):
        raise ValueError(
            f"upstream shape {upstream.shape} != {(batch.num_graphs, batch.feature_dim)}"
        )
    return upstream


def backward_softmax(batch: GraphBatch, params: ReadoutParams, upstream) -> ReadoutGradients:
    upstream = _upstream(batch, upstream)
    _, ctx = softmax_forward(batch.node_features, batch.offsets, params.beta, params.p)
    return ReadoutGradients(*softmax_backward(ctx, upstream))


def backward_powermean(batch: GraphBatch, params: ReadoutParams, upstream) -> ReadoutGradients:
    upstream = _upstream(batch, upstream)
    if np.any(batch.node_features < GRAD_MARGIN):
        raise ReadoutDomainError(f"power-mean gradients need features >= {GRAD_MARGIN}")
    _, ctx = powermean_forward(batch.node_features, batch.offsets, params.beta, params.p)
    return ReadoutGradients(*powermean_backward(ctx, upstream))


def backward(batch: GraphBatch, params: ReadoutParams, upstream) -> ReadoutGradients:
    if params.family is Family.SOFTMAX:
        return backward_softmax(batch, params, upstream)
    return backward_powermean(batch, params, upstream)


def finite_diff_oracle(
    batch: GraphBatch,
    params: ReadoutParams,
    target: Target,
    h: float = 1e-6,
    weights: Optional[np.ndarray] = None,
) -> float:
    """Central difference of ``sum(weights * readout)`` along one input.

    ``target`` is a :class:`Feature` or one of ``"beta"``, ``"p"``. The
    difference is accumulated entrywise, ``sum(w * (r+ - r-))``, so graphs the
    perturbation does not touch contribute exact zeros.
    """
    if not h > 0:
        raise ValueError("finite-difference step h must be positive")
    forward = softmax_forward if params.family is Family.SOFTMAX else powermean_forward
    x, beta, p = batch.node_features, params.beta, params.p

    def evaluate(sign):
        xs, bs, ps = x, beta, p
        if isinstance(target, Feature):
            xs = x.copy()
            xs[target.node, target.dim] += sign * h
        elif target == "beta":
            bs = beta + sign * h
        elif target == "p":
            ps = p + sign * h
        else:
            raise ValueError(f"unknown target {target!r}")
        try:
            return forward(xs, batch.offsets, bs, ps)[0]
        except ReadoutError as exc:
            raise ReadoutDomainError(f"perturbation left the readout domain: {exc}") from exc

    diff = evaluate(+1) - evaluate(-1)
    if weights is not None:
        diff = diff * weights
    return float(np.sum(diff)) / (2 * h)
