"""Multi-preset, multi-run experiment runner with CSV summaries."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import statistics
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence, Union

from .mpnn import MpnnModel
from .optim import AdamState
from .readout import PRESETS, Classic, Family, ReadoutParams
from .tasks import TaskName, generate, is_classification
from .train import RunResult, train

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class TaskConfig:
    name: str = "NodeCount"
    num_graphs: int = 2000
    node_range: Sequence[int] = (2, 12)
    feature_dim: int = 4
    seed: int = 0

    def __post_init__(self):
        self.name = TaskName(self.name).value
        self.node_range = tuple(int(v) for v in self.node_range)
        if len(self.node_range) != 2 or self.node_range[0] < 1 or self.node_range[1] < self.node_range[0]:
            raise ValueError(f"bad node_range {self.node_range}")
        if self.num_graphs < 3:
            raise ValueError("num_graphs must be >= 3")


@dataclass
class ModelConfig:
    hidden_dim: int = 32
    num_steps: int = 3

    def __post_init__(self):
        if self.hidden_dim < 1 or self.num_steps < 1:
            raise ValueError("hidden_dim and num_steps must be >= 1")


@dataclass
class OptimizerConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ReadoutSpec:
    """A named readout: a generalized family with initial (beta, p), or a classic pool."""

    name: str
    family: str
    beta: Optional[float] = None
    p: Optional[float] = None
    learnable: Sequence[bool] = (True, True)

    def __post_init__(self):
        if self.family in {c.value for c in Classic}:
            return
        family = Family(self.family)
        if self.beta is None or self.p is None:
            raise ValueError(f"readout {self.name!r} needs beta and p")
        self.learnable = [bool(v) for v in self.learnable]
        ReadoutParams(family, self.beta, self.p, tuple(self.learnable))

    def resolve(self) -> Union[ReadoutParams, Classic]:
        if self.family in {c.value for c in Classic}:
            return Classic(self.family)
        return ReadoutParams(Family(self.family), self.beta, self.p, tuple(self.learnable))


def preset_spec(entry) -> ReadoutSpec:
    """Accept a preset name, a classic pool name, or an explicit object."""
    if isinstance(entry, str):
        if entry in PRESETS:
            rp = PRESETS[entry]
            return ReadoutSpec(entry, rp.family.value, rp.beta, rp.p, list(rp.learnable))
        if entry.lower() in {c.value for c in Classic}:
            return ReadoutSpec(entry, entry.lower())
        raise ConfigError(f"unknown readout preset {entry!r}; known: {sorted(PRESETS)} or classic pools")
    return _build(ReadoutSpec, entry, "readouts[]")


@dataclass
class ExperimentConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    readouts: List[ReadoutSpec] = field(
        default_factory=lambda: [preset_spec(n) for n in ("Softmax1", "Softmax2", "PowerMean1", "PowerMean2")]
    )
    epochs: int = 100
    num_runs: int = 10
    base_seed: int = 0
    batch_size: int = 32
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.num_runs < 1:
            raise ConfigError("num_runs must be >= 1")
        if self.batch_size < 1 or self.workers < 1:
            raise ConfigError("batch_size and workers must be >= 1")
        if not self.readouts:
            raise ConfigError("at least one readout is required")
        names = [r.name for r in self.readouts]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate readout names {names}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        kw = dict(data)
        if "task" in kw:
            kw["task"] = _build(TaskConfig, kw["task"], "task")
        if "model" in kw:
            kw["model"] = _build(ModelConfig, kw["model"], "model")
        if "optimizer" in kw:
            kw["optimizer"] = _build(OptimizerConfig, kw["optimizer"], "optimizer")
        if "readouts" in kw:
            if not isinstance(kw["readouts"], list):
                raise ConfigError("readouts must be a list")
            kw["readouts"] = [preset_spec(r) for r in kw["readouts"]]
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- running

@lru_cache(maxsize=4)
def _task(name, num_graphs, node_range, feature_dim, seed):
    return generate(name, num_graphs, node_range, feature_dim, seed)


def task_for(config: ExperimentConfig):
    t = config.task
    return _task(t.name, t.num_graphs, tuple(t.node_range), t.feature_dim, t.seed)


def run_one(config: ExperimentConfig, spec: ReadoutSpec, run: int) -> RunResult:
    """Run ``run`` of one readout; seed is ``base_seed + run``."""
    seed = config.base_seed + run
    task = task_for(config)
    model = MpnnModel(
        in_dim=config.task.feature_dim,
        hidden_dim=config.model.hidden_dim,
        out_dim=1,
        num_steps=config.model.num_steps,
        readout=spec.resolve(),
        seed=seed,
    )
    opt = config.optimizer
    adam = AdamState(lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps)
    return train(model, task, config.epochs, config.batch_size, seed, adam, preset=spec.name)


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_writable(directory: Path) -> None:
    try:
        (directory / "runs").mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory)
        os.close(fd)
        os.unlink(tmp)
    except OSError as exc:
        raise ConfigError(f"output directory {directory} is not writable: {exc}") from exc


def _job(args):
    config, spec, run = args
    return run_one(config, spec, run)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> "Summary":
    """Run every readout ``num_runs`` times and write results.

    Writes ``runs/<name>_run<k>.json`` per run, then ``summary.csv``,
    ``table.csv``/``table.txt`` (one column per readout, one row per run,
    mean and std footer) and ``timings.json``.
    """
    out = Path(config.output_dir)
    _check_writable(out)
    workers = workers or config.workers
    jobs = [(config, spec, k) for spec in config.readouts for k in range(config.num_runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    for (_, spec, k), res in zip(jobs, results):
        atomic_write(out / "runs" / f"{spec.name}_run{k}.json", res.to_json())
    summary = Summary.from_results(config.task.name, results)
    atomic_write(out / "summary.csv", summary.to_csv())
    atomic_write(out / "table.csv", summary.table_csv())
    atomic_write(out / "table.txt", summary.table_text())
    timings = {f"{r.preset}_run{k}": r.wall_time for (_, _, k), r in zip(jobs, results)}
    atomic_write(out / "timings.json", json.dumps(timings, indent=2, sort_keys=True) + "\n")
    return summary


# ---------------------------------------------------------------- summaries

def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _parse_num(s: str):
    return None if s == "" else float(s)


@dataclass
class SummaryRow:
    preset: str
    run: int
    seed: int
    final_metric: Optional[float]
    beta_final: Optional[float]
    p_final: Optional[float]
    status: str = "ok"


@dataclass
class PresetStats:
    preset: str
    n: int
    mean: Optional[float]
    std: Optional[float]
    beta_mean: Optional[float]
    beta_std: Optional[float]
    p_mean: Optional[float]
    p_std: Optional[float]


def _mean_std(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


HEADER = ["preset", "run", "seed", "final_metric", "beta_final", "p_final"]


@dataclass
class Summary:
    """Per-run final numbers plus per-preset mean and sample std (n - 1).

    Aborted runs appear with ``final_metric`` = ``aborted`` and are left out
    of the footer statistics. With a single usable run the std is 0 and the
    footer label reads ``std[n=1]``.
    """

    task: str
    metric: str
    rows: List[SummaryRow]

    @classmethod
    def from_results(cls, task: str, results: Sequence[RunResult]) -> "Summary":
        metric = "accuracy" if is_classification(task) else "mse"
        rows = []
        counters = {}
        for r in results:
            k = counters.get(r.preset, 0)
            counters[r.preset] = k + 1
            ok = r.status == "ok"
            rows.append(SummaryRow(r.preset, k, r.seed, r.final_test_metric if ok else None,
                                   r.beta_final, r.p_final, r.status))
        return cls(task, metric, rows)

    @property
    def presets(self) -> List[str]:
        seen = []
        for r in self.rows:
            if r.preset not in seen:
                seen.append(r.preset)
        return seen

    def stats(self, preset: str) -> PresetStats:
        ok = [r for r in self.rows if r.preset == preset and r.status == "ok"]
        aborted = sum(1 for r in self.rows if r.preset == preset and r.status != "ok")
        if aborted:
            log.warning("%s: %d aborted run(s) excluded from mean/std", preset, aborted)
        m = _mean_std([r.final_metric for r in ok])
        b = _mean_std([r.beta_final for r in ok])
        p = _mean_std([r.p_final for r in ok])
        return PresetStats(preset, len(ok), *m, *b, *p)

    def higher_is_better(self) -> bool:
        return self.metric == "accuracy"

    # -- long CSV

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# task={self.task} metric={self.metric}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for r in self.rows:
            metric = _num(r.final_metric) if r.status == "ok" else r.status
            w.writerow([r.preset, r.run, r.seed, metric, _num(r.beta_final), _num(r.p_final)])
        for preset in self.presets:
            s = self.stats(preset)
            std_label = "std[n=1]" if s.n == 1 else "std"
            w.writerow([preset, "mean", s.n, _num(s.mean), _num(s.beta_mean), _num(s.p_mean)])
            w.writerow([preset, std_label, s.n, _num(s.std), _num(s.beta_std), _num(s.p_std)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Summary":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# "):
            raise ValueError("summary CSV must start with a '# task=... metric=...' line")
        meta = dict(kv.split("=", 1) for kv in lines[0][2:].split())
        reader = csv.reader(lines[1:])
        if next(reader) != HEADER:
            raise ValueError("unexpected summary CSV header")
        rows = []
        for rec in reader:
            preset, run, seed, metric, beta, p = rec
            if run in ("mean",) or run.startswith("std"):
                continue
            status = "ok"
            try:
                value = _parse_num(metric)
            except ValueError:
                status, value = metric, None
            rows.append(SummaryRow(preset, int(run), int(seed), value, _parse_num(beta), _parse_num(p), status))
        return cls(meta["task"], meta["metric"], rows)

    @classmethod
    def load(cls, path) -> "Summary":
        return cls.from_csv(Path(path).read_text())

    # -- wide table: one column per preset, one row per run

    def _columns(self):
        return {p: [r for r in self.rows if r.preset == p] for p in self.presets}

    def table_csv(self) -> str:
        cols = self._columns()
        n_rows = max(len(v) for v in cols.values())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run"] + self.presets)
        for k in range(n_rows):
            line = [k]
            for p in self.presets:
                rows = cols[p]
                if k >= len(rows):
                    line.append("")
                elif rows[k].status != "ok":
                    line.append(rows[k].status)
                else:
                    line.append(f"{rows[k].final_metric:.4f}")
            w.writerow(line)
        w.writerow(["mean ± std"] + [self._pm(p) for p in self.presets])
        return buf.getvalue()

    def _pm(self, preset):
        s = self.stats(preset)
        if s.mean is None:
            return "n/a"
        flag = " (n=1)" if s.n == 1 else ""
        return f"{s.mean:.4f} ± {s.std:.4f}{flag}"

    def table_text(self) -> str:
        rows = list(csv.reader(io.StringIO(self.table_csv())))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        fmt = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
        title = f"{self.task}: test {self.metric} per run"
        rule = "-" * len(fmt(rows[0]))
        body = [fmt(rows[0]), rule] + [fmt(r) for r in rows[1:-1]] + [rule, fmt(rows[-1])]
        return "\n".join([title] + body) + "\n"


# ---------------------------------------------------------------- comparison

@dataclass
class Ranked:
    preset: str
    mean: float
    std: float
    n: int
    source: str


def compare_presets(paths: Sequence[Union[str, Path]]):
    """Rank presets from several summary CSVs of the same task.

    Lower MSE or higher accuracy ranks first; ties break by preset name.
    Returns ``(ranked, csv_text, plain_text)``.
    """
    summaries = [(str(p), Summary.load(p)) for p in paths]
    if len(summaries) < 2:
        raise ConfigError("compare needs at least two summaries")
    tasks = {(s.task, s.metric) for _, s in summaries}
    if len(tasks) != 1:
        raise ConfigError(f"summaries come from different tasks: {sorted(tasks)}")
    task, metric = tasks.pop()
    entries = []
    for source, s in summaries:
        for preset in s.presets:
            st = s.stats(preset)
            if st.mean is not None:
                entries.append(Ranked(preset, st.mean, st.std, st.n, source))
    sign = -1.0 if metric == "accuracy" else 1.0
    entries.sort(key=lambda e: (sign * e.mean, e.preset))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "preset", "mean", "std", "n", "source"])
    for i, e in enumerate(entries, 1):
        w.writerow([i, e.preset, _num(e.mean), _num(e.std), e.n, e.source])
    lines = [f"{task}: ranked by test {metric} ({'higher' if sign < 0 else 'lower'} is better)"]
    for i, e in enumerate(entries, 1):
        lines.append(f"{i:>3}. {e.preset:<16} {e.mean:.4f} ± {e.std:.4f}  (n={e.n})")
    return entries, buf.getvalue(), "\n".join(lines) + "\n"
