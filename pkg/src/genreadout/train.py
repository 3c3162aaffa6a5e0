"""Seeded training loop and the per-run result record."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from . import autograd as ag
from .batch import build_batch
from .mpnn import MpnnModel, forward
from .optim import AdamState, adam_step
from .readout import ReadoutError
from .tasks import SyntheticTask


@dataclass
class GraphDataset:
    """Train/val/test lists of ``(graph, label)`` pairs, like a SyntheticTask."""

    name: str
    classification: bool
    train: list
    val: list
    test: list

    def splits(self):
        return {"train": self.train, "val": self.val, "test": self.test}

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class RunResult:
    preset: str
    seed: int
    task: str
    metric: str
    status: str = "ok"
    message: str = ""
    epochs: List[dict] = field(default_factory=list)
    final_test_metric: Optional[float] = None
    beta_trajectory: List[Optional[float]] = field(default_factory=list)
    p_trajectory: List[Optional[float]] = field(default_factory=list)
    # kept out of to_json() so identical runs serialize identically
    wall_time: float = 0.0

    def to_json(self) -> str:
        payload = asdict(self)
        del payload["wall_time"]
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunResult":
        return cls(**json.loads(text))

    @property
    def beta_final(self):
        return self.beta_trajectory[-1] if self.beta_trajectory else None

    @property
    def p_final(self):
        return self.p_trajectory[-1] if self.p_trajectory else None


def _targets(examples):
    return np.array([[y] for _, y in examples], dtype=np.float64)


def loss_value(model: MpnnModel, batch, y, classification: bool):
    out = forward(model, batch)
    return ag.bce_with_logits(out, y) if classification else ag.mse(out, y)


def predict(model: MpnnModel, batch) -> np.ndarray:
    return forward(model, batch).data


def evaluate(model: MpnnModel, batch, y, classification: bool):
    """Return (loss, metric); metric is MSE or accuracy."""
    out = forward(model, batch).data
    if classification:
        z = out
        loss = float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))
        return loss, float(np.mean((z > 0) == (y > 0.5)))
    mse = float(np.mean((out - y) ** 2))
    return mse, mse


def _finite(*values):
    return all(v is not None and math.isfinite(v) for v in values)


def train(model: MpnnModel, task: "SyntheticTask | GraphDataset", epochs: int, batch_size: int = 32,
          seed: int = 0, optimizer: Optional[AdamState] = None, preset: str = "") -> RunResult:
    """Mini-batch Adam training; records metrics after every epoch.

    Epoch 0 in the record is the untrained model evaluated on the whole
    training split; later epochs report the example-weighted mean of that
    epoch's minibatch losses. A non-finite loss or a
    readout domain failure ends the run with ``status="aborted"``.
    """
    if epochs < 0 or batch_size < 1:
        raise ValueError("epochs must be >= 0 and batch_size >= 1")
    optimizer = optimizer if optimizer is not None else AdamState()
    cls = task.classification
    result = RunResult(preset=preset, seed=seed, task=getattr(task.name, "value", str(task.name)),
                       metric="accuracy" if cls else "mse")
    start = time.perf_counter()
    rng = np.random.default_rng([seed, 1])
    graphs = [g for g, _ in task.train]
    y_train = _targets(task.train)
    full = {s: (build_batch([g for g, _ in ex]), _targets(ex)) for s, ex in task.splits().items()}
    params = model.trainable()

    def record(epoch, train_loss):
        _, val_metric = evaluate(model, *full["val"], cls)
        if not _finite(train_loss, val_metric):
            raise TrainingDiverged(f"non-finite metrics after epoch {epoch}")
        result.epochs.append({"epoch": epoch, "train_loss": train_loss, "val_metric": val_metric})
        beta, p = model.readout_values()
        result.beta_trajectory.append(beta)
        result.p_trajectory.append(p)

    try:
        record(0, evaluate(model, *full["train"], cls)[0])
        for epoch in range(1, epochs + 1):
            order = rng.permutation(len(graphs))
            losses = []
            for lo in range(0, len(order), batch_size):
                idx = order[lo:lo + batch_size]
                batch = build_batch([graphs[i] for i in idx])
                ag.zero_grad(params)
                loss = loss_value(model, batch, y_train[idx], cls)
                if not math.isfinite(loss.item()):
                    raise TrainingDiverged(f"non-finite training loss in epoch {epoch}")
                losses.append(loss.item() * len(idx))
                ag.backward(loss)
                adam_step(optimizer, params)
            record(epoch, float(np.sum(losses)) / len(order))
        _, result.final_test_metric = evaluate(model, *full["test"], cls)
        if not _finite(result.final_test_metric):
            raise TrainingDiverged("non-finite test metric")
    except (TrainingDiverged, ReadoutError, FloatingPointError) as exc:
        log.warning("run %s seed %d aborted: %s", preset, seed, exc)
        result.status = "aborted"
        result.message = str(exc)
        result.final_test_metric = None
    result.wall_time = time.perf_counter() - start
    return result
