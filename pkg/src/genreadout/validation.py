"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

from typing import List, Union

import numpy as np

from .batch import BatchError, GraphBatch, build_batch
from .readout import PRESETS, Classic, Family, ReadoutParams


def check_graphs(X) -> GraphBatch:
    """Accept a GraphBatch or a sequence of ``(features, edges[, edge_features])``."""
    if isinstance(X, GraphBatch):
        X.validate()
        return X
    if isinstance(X, np.ndarray) and X.dtype != object:
        raise BatchError("pass a GraphBatch or a list of graphs, not a plain array")
    return build_batch(list(X))


def graph_list(X) -> List[tuple]:
    if isinstance(X, GraphBatch):
        X.validate()
        return X.split()
    batch = build_batch(list(X))
    return batch.split()


def check_targets(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n:
        raise ValueError(f"{n} graphs but {y.shape[0]} targets")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    return y


def check_readout(readout) -> Union[ReadoutParams, Classic]:
    """Resolve a preset name, classic pool name or ReadoutParams."""
    if isinstance(readout, (ReadoutParams, Classic)):
        return readout
    if isinstance(readout, str):
        if readout in PRESETS:
            return PRESETS[readout]
        try:
            return Classic(readout.lower())
        except ValueError:
            pass
    raise ValueError(
        f"readout must be ReadoutParams, one of {sorted(PRESETS)} or a classic pool "
        f"({[c.value for c in Classic]}), got {readout!r}"
    )


def check_family(family) -> Union[Family, Classic]:
    for enum_cls in (Family, Classic):
        try:
            return enum_cls(family)
        except ValueError:
            continue
    raise ValueError(f"unknown readout family {family!r}")
