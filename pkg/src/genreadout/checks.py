"""Randomized verification suites: limit cases, gradients, permutation invariance.

Each suite returns a :class:`CheckReport`; the CLI and the acceptance tests
both call these.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .batch import GraphBatch, build_batch, permute_nodes, random_permutations
from .grad import Feature, backward, finite_diff_oracle
from .mpnn import MpnnModel, forward
from .readout import P_FLOOR, Family, ReadoutError, ReadoutParams, readout, readout_classic


@dataclass
class CheckReport:
    name: str
    passed: bool
    checked: int
    worst: float
    seconds: float
    failures: List[str] = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: {self.checked} checks, worst={self.worst:.3e}, "
                f"{self.seconds:.2f}s")


def _column(rng, n, lo, hi, separated):
    while True:
        col = rng.uniform(lo, hi, size=n)
        if n == 1 or separated(np.sort(col)):
            return col


def random_batch(rng: np.random.Generator, family: Family, max_graphs: int = 6,
                 node_range=(1, 16), dims=(1, 4, 8), separated: bool = False) -> GraphBatch:
    """Random edgeless batch for readout checks.

    Softmax batches draw features from [-1, 1]; power-mean batches from
    [0.1, 10]. With ``separated`` every column keeps its top two and bottom
    two values apart: a gap of 0.05 for softmax, a ratio of 1.05 for power
    mean.
    """
    softmax = Family(family) is Family.SOFTMAX
    lo, hi = (-1.0, 1.0) if softmax else (0.1, 10.0)
    if not separated:
        ok = lambda s: True  # noqa: E731
    elif softmax:
        ok = lambda s: s[-1] - s[-2] >= 0.05 and s[1] - s[0] >= 0.05  # noqa: E731
    else:
        ok = lambda s: s[-1] / s[-2] >= 1.05 and s[1] / s[0] >= 1.05  # noqa: E731
    dim = int(rng.choice(dims))
    graphs = []
    for _ in range(int(rng.integers(1, max_graphs + 1))):
        n = int(rng.integers(node_range[0], node_range[1] + 1))
        x = np.stack([_column(rng, n, lo, hi, ok) for _ in range(dim)], axis=1)
        graphs.append((x, []))
    return build_batch(graphs)


# -------------------------------------------------------------------- limits

SOFTMAX_LIMITS = [
    # (beta, p, classic, tolerance) with absolute error
    (1.0, 0.0, "mean", 1e-12),
    (0.0, 0.0, "sum", 1e-12),
    (1.0, 1e4, "max", 1e-6),
    (1.0, -1e4, "min", 1e-6),
]
POWERMEAN_LIMITS = [
    # relative error
    (1.0, 1.0, "mean", 1e-12),
    (0.0, 1.0, "sum", 1e-12),
    (0.0, 200.0, "max", 1e-6),
    (0.0, -200.0, "min", 1e-6),
]


def limit_suite(num_batches: int = 100, seed: int = 0) -> List[CheckReport]:
    """One report per documented (family, beta, p) special case."""
    reports = []
    rng = np.random.default_rng(seed)
    for family, cases, relative in ((Family.SOFTMAX, SOFTMAX_LIMITS, False),
                                    (Family.POWERMEAN, POWERMEAN_LIMITS, True)):
        batches = [random_batch(rng, family, separated=True) for _ in range(num_batches)]
        for beta, p, kind, tol in cases:
            start = time.perf_counter()
            worst, failures = 0.0, []
            params = ReadoutParams(family, beta, p)
            for k, b in enumerate(batches):
                got = readout(b, params)
                want = readout_classic(b, kind)
                err = np.abs(got - want)
                if relative:
                    err = err / np.abs(want)
                e = float(err.max())
                worst = max(worst, e)
                if e > tol:
                    failures.append(f"batch {k}: error {e:.3e} > {tol:.0e}")
            name = f"{family.value}(beta={beta:g}, p={p:g}) -> {kind} [{'rel' if relative else 'abs'} {tol:.0e}]"
            reports.append(CheckReport(name, not failures, len(batches), worst,
                                       time.perf_counter() - start, failures))
    return reports


# ----------------------------------------------------------------- gradients

def _partial_ok(analytic, numeric, rtol=1e-5, atol=1e-8, small=1e-3):
    err = abs(analytic - numeric)
    if abs(numeric) < small:
        return err <= atol, err
    return err <= rtol * abs(numeric), err / abs(numeric)


def random_grad_config(rng, family: Family):
    """Batch, params and upstream weights inside the gradient-check domain."""
    while True:
        batch = random_batch(rng, family, max_graphs=4)
        beta = float(rng.uniform(0.0, 2.0))
        p = float(rng.uniform(-3.0, 3.0))
        if family is Family.POWERMEAN and abs(p) < P_FLOOR:
            continue
        params = ReadoutParams(family, beta, p)
        try:
            readout(batch, params)
        except ReadoutError:
            continue
        upstream = rng.normal(size=(batch.num_graphs, batch.feature_dim))
        return batch, params, upstream


def gradient_suite(num_configs: int = 200, seed: int = 0, h: float = 1e-6) -> List[CheckReport]:
    """Analytic partials vs central differences for every feature, beta and p."""
    reports = []
    rng = np.random.default_rng(seed)
    for family in (Family.SOFTMAX, Family.POWERMEAN):
        start = time.perf_counter()
        worst, checked, failures = 0.0, 0, []
        for k in range(num_configs):
            batch, params, up = random_grad_config(rng, family)
            g = backward(batch, params, up)
            targets = [("beta", g.d_beta), ("p", g.d_p)]
            targets += [(Feature(n, d), g.d_features[n, d])
                        for n in range(batch.node_features.shape[0])
                        for d in range(batch.feature_dim)]
            for target, analytic in targets:
                checked += 1
                try:
                    numeric = finite_diff_oracle(batch, params, target, h, weights=up)
                except ReadoutError as exc:
                    failures.append(f"config {k} d/d{target}: {exc}")
                    continue
                ok, e = _partial_ok(analytic, numeric)
                worst = max(worst, e)
                if not ok:
                    failures.append(f"config {k} (beta={params.beta:.4f}, p={params.p:.4f}) "
                                    f"d/d{target}: analytic {analytic!r} vs fd {numeric!r}")
        reports.append(CheckReport(f"{family.value} gradients vs central differences (h={h:g})",
                                   not failures, checked, worst, time.perf_counter() - start, failures))
    return reports


# ------------------------------------------------------------- permutations

def permutation_suite(num_triples: int = 100, num_models: int = 10, seed: int = 0) -> List[CheckReport]:
    reports = []
    rng = np.random.default_rng(seed)
    for family in (Family.SOFTMAX, Family.POWERMEAN):
        start = time.perf_counter()
        worst, failures = 0.0, []
        for k in range(num_triples):
            batch, params, _ = random_grad_config(rng, family)
            perms = random_permutations(batch, rng)
            e = float(np.max(np.abs(readout(permute_nodes(batch, perms), params) - readout(batch, params))))
            worst = max(worst, e)
            if e > 1e-10:
                failures.append(f"triple {k}: {e:.3e}")
        reports.append(CheckReport(f"{family.value} readout permutation invariance [abs 1e-10]",
                                   not failures, num_triples, worst, time.perf_counter() - start, failures))

    from .tasks import random_graph

    start = time.perf_counter()
    worst, failures = 0.0, []
    presets = [ReadoutParams(Family.SOFTMAX, 0.5, 1.5, (True, True)),
               ReadoutParams(Family.POWERMEAN, 0.3, 2.0, (True, True))]
    for k in range(num_models):
        params = presets[k % 2]
        model = MpnnModel(3, 8, 1, 2, readout=params, seed=k)
        graphs = [random_graph(rng, int(rng.integers(1, 10)), 3) for _ in range(4)]
        batch = build_batch(graphs)
        perms = random_permutations(batch, rng)
        a = forward(model, batch).data
        b = forward(model, permute_nodes(batch, perms)).data
        e = float(np.max(np.abs(a - b)))
        worst = max(worst, e)
        if e > 1e-8:
            failures.append(f"model {k}: {e:.3e}")
    reports.append(CheckReport("MPNN forward permutation invariance [abs 1e-8]", not failures,
                               num_models, worst, time.perf_counter() - start, failures))
    return reports
