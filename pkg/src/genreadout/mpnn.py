"""A small message-passing network with a swappable graph readout."""

from __future__ import annotations

from typing import Dict, List, Optional, Union

import numpy as np

from . import autograd as ag
from .autograd import Value
from .batch import GraphBatch
from .readout import Classic, Family, ReadoutParams


class ModelConfigError(ValueError):
    pass


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


class MpnnModel:
    """Message passing for ``num_steps`` rounds, then readout, then an MLP head.

    Round ``t`` computes, for every directed edge ``w -> v``, the message
    ``M_t([h_v, h_w, e_vw])``, sums messages per receiving node and updates
    ``h_v <- U_t([h_v, m_v])``. ``M_t``, ``U_t`` and the head are one-hidden-
    layer relu perceptrons.

    ``readout`` is either a :class:`ReadoutParams` (generalized readout, its
    beta and p become parameters when flagged learnable) or a
    :class:`Classic` kind.
    """

    def __init__(self, in_dim: int, hidden_dim: int = 32, out_dim: int = 1,
                 num_steps: int = 3, edge_dim: int = 0,
                 readout: Union[ReadoutParams, Classic, str] = "mean",
                 positivity: Optional[str] = None, seed: int = 0):
        if num_steps < 1:
            raise ModelConfigError("num_steps must be >= 1")
        if isinstance(readout, str):
            readout = Classic(readout)
        if positivity is None:
            positivity = "softplus" if _is_powermean(readout) else "none"
        if positivity not in ("none", "softplus"):
            raise ModelConfigError(f"unknown positivity map {positivity!r}")
        if _is_powermean(readout) and positivity != "softplus":
            raise ModelConfigError("power-mean readout needs the softplus positivity map")
        self.in_dim, self.hidden_dim, self.out_dim = in_dim, hidden_dim, out_dim
        self.num_steps, self.edge_dim = num_steps, edge_dim
        self.readout = readout
        self.positivity = positivity

        rng = np.random.default_rng(seed)
        self.params: Dict[str, Value] = {}
        h = hidden_dim
        d = in_dim
        for t in range(num_steps):
            self._mlp(rng, f"message.{t}", 2 * d + edge_dim, h, h)
            self._mlp(rng, f"update.{t}", d + h, h, h)
            d = h
        self._mlp(rng, "head", h, h, out_dim)
        if isinstance(readout, ReadoutParams):
            learn_beta, learn_p = readout.learnable
            self.beta = Value(readout.beta, requires_grad=learn_beta, name="readout.beta")
            self.p = Value(readout.p, requires_grad=learn_p, name="readout.p")
        else:
            self.beta = self.p = None

    def _mlp(self, rng, prefix, n_in, n_hidden, n_out):
        self.params[f"{prefix}.W1"] = ag.parameter(glorot(rng, n_in, n_hidden), f"{prefix}.W1")
        self.params[f"{prefix}.b1"] = ag.parameter(np.zeros((1, n_hidden)), f"{prefix}.b1")
        self.params[f"{prefix}.W2"] = ag.parameter(glorot(rng, n_hidden, n_out), f"{prefix}.W2")
        self.params[f"{prefix}.b2"] = ag.parameter(np.zeros((1, n_out)), f"{prefix}.b2")

    def _apply_mlp(self, prefix, x: Value) -> Value:
        P = self.params
        hidden = ag.relu(ag.add(ag.matmul(x, P[f"{prefix}.W1"]), P[f"{prefix}.b1"]))
        return ag.add(ag.matmul(hidden, P[f"{prefix}.W2"]), P[f"{prefix}.b2"])

    @property
    def family(self) -> Optional[Family]:
        return self.readout.family if isinstance(self.readout, ReadoutParams) else None

    def readout_values(self):
        """Current (beta, p), or (None, None) for a classic readout."""
        if self.beta is None:
            return None, None
        return self.beta.item(), self.p.item()

    def trainable(self) -> List[Value]:
        out = list(self.params.values())
        out += [v for v in (self.beta, self.p) if v is not None and v.requires_grad]
        return out

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {k: v.data.copy() for k, v in self.params.items()}
        if self.beta is not None:
            state["readout.beta"] = self.beta.data.copy()
            state["readout.p"] = self.p.data.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        expected = set(self.state_dict())
        if set(state) != expected:
            raise ModelConfigError(f"checkpoint keys differ: {sorted(set(state) ^ expected)}")
        for k, arr in state.items():
            target = self.beta if k == "readout.beta" else self.p if k == "readout.p" else self.params[k]
            if arr.shape != target.shape:
                raise ModelConfigError(f"{k}: shape {arr.shape} != {target.shape}")
            target.data = np.array(arr, dtype=np.float64)


def _is_powermean(readout) -> bool:
    return isinstance(readout, ReadoutParams) and readout.family is Family.POWERMEAN


def message_pass(model: MpnnModel, batch: GraphBatch) -> Value:
    if batch.feature_dim != model.in_dim:
        raise ModelConfigError(f"batch feature_dim {batch.feature_dim} != model in_dim {model.in_dim}")
    edge_dim = 0 if batch.edge_features is None else batch.edge_features.shape[1]
    if edge_dim != model.edge_dim:
        raise ModelConfigError(f"batch edge_dim {edge_dim} != model edge_dim {model.edge_dim}")
    num_nodes = batch.node_features.shape[0]
    src, dst = batch.edges[:, 0], batch.edges[:, 1]
    h = Value(batch.node_features)
    edge_x = None if batch.edge_features is None else Value(batch.edge_features)
    for t in range(model.num_steps):
        parts = [ag.gather_rows(h, dst), ag.gather_rows(h, src)]
        if edge_x is not None:
            parts.append(edge_x)
        messages = model._apply_mlp(f"message.{t}", ag.concat(parts))
        incoming = ag.scatter_add_rows(messages, dst, num_nodes)
        h = model._apply_mlp(f"update.{t}", ag.concat([h, incoming]))
    return h


def pool(model: MpnnModel, h: Value, offsets) -> Value:
    if model.positivity == "softplus":
        h = ag.softplus(h)
    if isinstance(model.readout, ReadoutParams):
        return ag.readout_primitive(h, offsets, model.readout.family, model.beta, model.p)
    return ag.classic_readout_primitive(h, offsets, model.readout)


def forward(model: MpnnModel, batch: GraphBatch) -> Value:
    """Predictions of shape ``(num_graphs, out_dim)``, recorded for backward."""
    h = message_pass(model, batch)
    return model._apply_mlp("head", pool(model, h, batch.offsets))


def save_checkpoint(model: MpnnModel, path) -> None:
    """Write parameters as a flat ``name -> array`` ``.npz`` archive."""
    np.savez(path, **model.state_dict())


def load_checkpoint(model: MpnnModel, path) -> None:
    with np.load(path) as data:
        model.load_state_dict({k: data[k] for k in data.files})
