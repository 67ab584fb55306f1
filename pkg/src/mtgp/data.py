"""Datasets and the synthetic calculus benchmark.

A :class:`TaskedDataset` is a list of named tasks, each a sorted time series
with a boolean train mask.  The synthetic benchmark draws a smooth signal
from a spectral mixture GP, then derives two coupled tasks from it: the
running integral and the finite-difference derivative.  CSV ingestion
accepts ``timestamp,value`` files (one per task) or a single file with a
``task`` column; timestamps may be ISO-8601 or plain numbers and are
converted to hours since the first sample.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from datetime import datetime

import numpy as np
from scipy import integrate

from .kernels import ComponentParams
from .multitask import SM_LMC, CoregionalizationSet, KernelSpec, SMLMCParams

__all__ = [
    "SeriesParseError",
    "Task",
    "TaskedDataset",
    "SPLIT_STRATEGIES",
    "split",
    "mae",
    "cumulative_integral",
    "derivative",
    "generate_synthetic",
    "load_series",
    "save_series",
]

log = logging.getLogger(__name__)

SPLIT_STRATEGIES = ("random_half", "first_half", "last_half")

SECONDS_PER_HOUR = 3600.0


class SeriesParseError(ValueError):
    """A CSV row could not be interpreted."""


@dataclass(frozen=True)
class Task:
    label: str
    x: np.ndarray
    y: np.ndarray
    train_mask: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        mask = np.array(self.train_mask, dtype=bool)
        if x.ndim != 1 or x.shape != y.shape or mask.shape != x.shape:
            raise ValueError(f"task {self.label!r}: x, y and train_mask must be equal-length vectors")
        if np.any(np.diff(x) <= 0):
            raise ValueError(f"task {self.label!r}: inputs must be strictly increasing")
        for arr in (x, y, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "train_mask", mask)

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class TaskedDataset:
    tasks: tuple

    def __post_init__(self):
        tasks = tuple(self.tasks)
        if len(tasks) == 0:
            raise ValueError("dataset needs at least one task")
        labels = [t.label for t in tasks]
        if len(set(labels)) != len(labels):
            raise ValueError("task labels must be unique")
        object.__setattr__(self, "tasks", tasks)

    @property
    def m(self) -> int:
        return len(self.tasks)

    @property
    def labels(self):
        return tuple(t.label for t in self.tasks)

    @property
    def n_total(self) -> int:
        return int(sum(t.n for t in self.tasks))

    def subset(self, train: bool) -> "TaskedDataset":
        """The train (or test) points of every task, masks reset to train."""
        picked = []
        for t in self.tasks:
            keep = t.train_mask if train else ~t.train_mask
            picked.append(Task(t.label, t.x[keep], t.y[keep], np.ones(int(keep.sum()), dtype=bool)))
        return TaskedDataset(tuple(picked))


def mae(y_true, y_pred) -> float:
    """Mean absolute error."""
    a = np.asarray(y_true, dtype=float)
    b = np.asarray(y_pred, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("mae of empty arrays is undefined")
    return float(np.mean(np.abs(a - b)))


def _mask_for(n: int, strategy: str, rng: np.random.Generator) -> np.ndarray:
    n_train = n // 2
    mask = np.zeros(n, dtype=bool)
    if strategy == "first_half":
        mask[:n_train] = True
    elif strategy == "last_half":
        mask[n - n_train:] = True
    elif strategy == "random_half":
        mask[rng.choice(n, size=n_train, replace=False)] = True
    else:
        raise ValueError(f"unknown split strategy {strategy!r}; pick from {SPLIT_STRATEGIES}")
    return mask


def split(dataset: TaskedDataset, strategy, seed: int = 0) -> TaskedDataset:
    """Assign train masks: exactly floor(N/2) train points per task.

    ``strategy`` is one of ``random_half``, ``first_half``, ``last_half``,
    or a sequence giving one strategy per task.
    """
    if isinstance(strategy, str):
        strategies = [strategy] * dataset.m
    else:
        strategies = list(strategy)
        if len(strategies) != dataset.m:
            raise ValueError(f"got {len(strategies)} strategies for {dataset.m} tasks")
    rng = np.random.default_rng(seed)
    tasks = [
        replace(t, train_mask=_mask_for(t.n, s, rng))
        for t, s in zip(dataset.tasks, strategies)
    ]
    return TaskedDataset(tuple(tasks))


def cumulative_integral(x, y) -> np.ndarray:
    """Running trapezoid integral of the series, starting at zero."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return integrate.cumulative_trapezoid(y, x, initial=0.0)


def derivative(x, y) -> np.ndarray:
    """Finite-difference derivative: central inside, one-sided at the ends."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] < 2:
        raise ValueError("derivative needs at least two points")
    return np.gradient(y, x)


def generate_synthetic(seed: int, n: int = 300, interval=(-10.0, 10.0), q: int = 3):
    """The coupled signal / integral / derivative benchmark.

    Draws spectral mixture parameters (weights uniform on [0.5, 1.5],
    frequencies on [0.15, 0.45], variances on [0.001, 0.01]), samples one
    GP signal of length ``n`` on the interval, and builds the two calculus
    tasks from that sample.  The draw is recentred to zero sample mean and
    frequencies stay bounded away from zero, keeping the integral task free
    of linear drift; otherwise the drift dominates both extrapolation
    halves and drowns the cross-task comparison.  Returns the dataset (all
    points marked train; apply :func:`split` for an experiment) and a dict
    of everything drawn, for the run manifest.
    """
    from .gp import sample_prior

    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.5, 1.5, size=q)
    means = rng.uniform(0.15, 0.45, size=q)
    variances = rng.uniform(0.001, 0.01, size=q)
    comps = tuple(
        ComponentParams(weight=float(w), mean_freq=[float(f)], variance=[float(v)])
        for w, f, v in zip(weights, means, variances)
    )
    spec = KernelSpec(
        SM_LMC, m=1, q=q, p=1,
        params=SMLMCParams(comps, CoregionalizationSet(tuple(np.eye(1) for _ in range(q)))),
    )
    x = np.linspace(interval[0], interval[1], n)
    signal_seed = int(rng.integers(0, 2**31 - 1))
    signal = sample_prior(spec, [x], seed=signal_seed)
    # recentre the draw: a leftover sample mean m would hand the integral
    # task a linear m*(x - x0) drift no stationary model can extrapolate
    signal = signal - signal.mean()

    all_train = np.ones(n, dtype=bool)
    dataset = TaskedDataset((
        Task("signal", x, signal, all_train),
        Task("integral", x, cumulative_integral(x, signal), all_train),
        Task("derivative", x, derivative(x, signal), all_train),
    ))
    info = {
        "seed": int(seed),
        "n": int(n),
        "interval": [float(interval[0]), float(interval[1])],
        "q": int(q),
        "weights": [float(w) for w in weights],
        "mean_freqs": [float(f) for f in means],
        "variances": [float(v) for v in variances],
        "signal_seed": signal_seed,
    }
    return dataset, info


def _parse_timestamp(text: str, lineno: int) -> tuple[float, bool]:
    """A timestamp as (value, is_datetime); numeric values pass through."""
    try:
        return float(text), False
    except ValueError:
        pass
    try:
        stamp = datetime.fromisoformat(text)
    except ValueError:
        raise SeriesParseError(f"line {lineno}: cannot parse timestamp {text!r}") from None
    return stamp.timestamp(), True


def _parse_value(text: str) -> float | None:
    stripped = text.strip()
    if stripped == "" or stripped.lower() == "nan":
        return None
    try:
        return float(stripped)
    except ValueError:
        raise SeriesParseError(f"cannot parse value {text!r}") from None


def _read_rows(path):
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SeriesParseError(f"{path}: empty file") from None
        header = [h.strip().lower() for h in header]
        if header[:2] != ["timestamp", "value"] or len(header) > 3 or (
            len(header) == 3 and header[2] != "task"
        ):
            raise SeriesParseError(f"{path}: header must be timestamp,value[,task]")
        has_task = len(header) == 3
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(header):
                raise SeriesParseError(f"{path} line {lineno}: expected {len(header)} fields")
            stamp, is_dt = _parse_timestamp(row[0].strip(), lineno)
            try:
                value = _parse_value(row[1])
            except SeriesParseError as err:
                raise SeriesParseError(f"{path} line {lineno}: {err}") from None
            task = row[2].strip() if has_task else None
            rows.append((stamp, is_dt, value, task, lineno))
    return rows, has_task


def load_series(paths, labels=None) -> TaskedDataset:
    """Read one or more CSV files into a dataset.

    A single path with a ``task`` column yields one task per distinct task
    value (in order of first appearance); otherwise each file becomes one
    task, named by ``labels`` or its stem.  Rows with an empty or NaN value
    are dropped and counted.  Times become hours since the earliest sample
    across all tasks.
    """
    if isinstance(paths, (str, bytes)) or hasattr(paths, "__fspath__"):
        paths = [paths]
    groups: dict[str, list] = {}
    dropped = 0
    any_datetime = False
    for idx, path in enumerate(paths):
        rows, has_task = _read_rows(path)
        for stamp, is_dt, value, task, lineno in rows:
            any_datetime = any_datetime or is_dt
            if task is None:
                if labels is not None:
                    task = labels[idx]
                else:
                    stem = str(path).rsplit("/", 1)[-1]
                    task = stem[:-4] if stem.endswith(".csv") else stem
            if value is None:
                dropped += 1
                continue
            groups.setdefault(task, []).append((stamp, value, lineno, path))
    if dropped:
        log.info("dropped %d rows with missing values", dropped)
    if not groups:
        raise SeriesParseError("no usable observations found")

    t0 = min(stamp for obs in groups.values() for stamp, _, _, _ in obs)
    scale = SECONDS_PER_HOUR if any_datetime else 1.0
    tasks = []
    for label, obs in groups.items():
        xs = np.array([(stamp - t0) / scale for stamp, _, _, _ in obs])
        ys = np.array([v for _, v, _, _ in obs])
        order = np.argsort(xs, kind="stable")
        xs, ys = xs[order], ys[order]
        if np.any(np.diff(xs) <= 0):
            dup = int(np.nonzero(np.diff(xs) <= 0)[0][0])
            _, _, lineno, path = obs[order[dup + 1]]
            raise SeriesParseError(f"{path} line {lineno}: duplicate timestamp in task {label!r}")
        tasks.append(Task(label, xs, ys, np.ones(len(xs), dtype=bool)))
    return TaskedDataset(tuple(tasks))


def save_series(dataset: TaskedDataset, path) -> None:
    """Write a dataset to one CSV with a task column.

    Floats are written with repr precision so a reload reproduces the exact
    values, and a second save of the reloaded data is byte identical.
    """
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["timestamp", "value", "task"])
        for task in dataset.tasks:
            for x, y in zip(task.x, task.y):
                writer.writerow([format(x, ".17g"), format(y, ".17g"), task.label])
