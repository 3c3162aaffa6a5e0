"""Seeded synthetic graph-property tasks with a known best readout."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .batch import build_batch, read_batch, write_batch


class TaskName(str, enum.Enum):
    NODE_COUNT = "NodeCount"              # sum-like
    MAX_NODE_FEATURE = "MaxNodeFeature"   # max-like
    MEAN_NODE_FEATURE = "MeanNodeFeature"  # mean-like
    THRESHOLD_CLASSIFY = "ThresholdClassify"


EDGE_PROB = 0.3


def label_of(name, x: np.ndarray) -> float:
    name = TaskName(name)
    if name is TaskName.NODE_COUNT:
        return float(x.shape[0])
    if name is TaskName.MAX_NODE_FEATURE:
        return float(np.max(x[:, 0]))
    if name is TaskName.MEAN_NODE_FEATURE:
        return float(np.mean(x[:, 0]))
    return 1.0 if np.mean(x[:, 0]) > 0.5 else 0.0


def is_classification(name) -> bool:
    return TaskName(name) is TaskName.THRESHOLD_CLASSIFY


Example = Tuple[tuple, float]


@dataclass
class SyntheticTask:
    name: TaskName
    generator_seed: int
    feature_dim: int
    train: List[Example] = field(default_factory=list)
    val: List[Example] = field(default_factory=list)
    test: List[Example] = field(default_factory=list)

    @property
    def classification(self) -> bool:
        return is_classification(self.name)

    def splits(self):
        return {"train": self.train, "val": self.val, "test": self.test}


def random_graph(rng: np.random.Generator, num_nodes: int, feature_dim: int,
                 edge_prob: float = EDGE_PROB):
    """Erdos-Renyi graph; each undirected edge is stored in both directions."""
    x = rng.uniform(0.0, 1.0, size=(num_nodes, feature_dim))
    iu, ju = np.triu_indices(num_nodes, k=1)
    keep = rng.random(len(iu)) < edge_prob
    i, j = iu[keep], ju[keep]
    edges = np.concatenate([np.stack([i, j], 1), np.stack([j, i], 1)]).reshape(-1, 2)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    return x, edges[order].astype(np.int64)


def generate(name, num_graphs: int, node_range=(2, 12), feature_dim: int = 4,
             seed: int = 0) -> SyntheticTask:
    """Generate ``num_graphs`` graphs split 80/10/10 (at least one per split)."""
    name = TaskName(name)
    lo, hi = node_range
    if lo < 1 or hi < lo:
        raise ValueError(f"invalid node_range {node_range}")
    if num_graphs < 3:
        raise ValueError("need at least 3 graphs (one per split)")
    if feature_dim < 1:
        raise ValueError("feature_dim must be >= 1")
    rng = np.random.default_rng(seed)
    examples = []
    for _ in range(num_graphs):
        n = int(rng.integers(lo, hi + 1))
        x, edges = random_graph(rng, n, feature_dim)
        examples.append(((x, edges), label_of(name, x)))
    n_hold = max(1, int(round(0.1 * num_graphs)))
    n_train = num_graphs - 2 * n_hold
    return SyntheticTask(
        name, seed, feature_dim,
        train=examples[:n_train],
        val=examples[n_train:n_train + n_hold],
        test=examples[n_train + n_hold:],
    )


def save_task(task: SyntheticTask, directory) -> None:
    """Write ``<split>.graphs`` text batches plus a ``labels.json`` index."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {"name": task.name.value, "generator_seed": task.generator_seed,
             "feature_dim": task.feature_dim, "labels": {}}
    for split, examples in task.splits().items():
        with open(directory / f"{split}.graphs", "w") as fh:
            write_batch(build_batch([g for g, _ in examples]), fh)
        index["labels"][split] = [y for _, y in examples]
    (directory / "labels.json").write_text(json.dumps(index, indent=2) + "\n")


def load_task(directory) -> SyntheticTask:
    directory = Path(directory)
    index = json.loads((directory / "labels.json").read_text())
    task = SyntheticTask(TaskName(index["name"]), index["generator_seed"], index["feature_dim"])
    for split in ("train", "val", "test"):
        with open(directory / f"{split}.graphs") as fh:
            graphs = [(x, e) for x, e, _ in read_batch(fh).split()]
        labels = index["labels"][split]
        if len(labels) != len(graphs):
            raise ValueError(f"{split}: {len(graphs)} graphs but {len(labels)} labels")
        setattr(task, split, list(zip(graphs, labels)))
    return task
