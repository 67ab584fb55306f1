"""Config-driven experiment runs: fit, compare, and serialize models.

Everything here is deliberately plain: JSON configs in, CSV/JSON files
out, one run per process.  A run that fails part-way removes whatever it
already wrote so a results directory never holds a half-finished run.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import params as pv
from .data import (
    SPLIT_STRATEGIES,
    Task,
    TaskedDataset,
    generate_synthetic,
    load_series,
    mae,
    save_series,
    split,
)
from .gp import NOISE_MODES, TrainedModel, build_model, predict_batch
from .multitask import FAMILIES, MATERN_LMC, KernelSpec
from .spectral import InitConfig, empirical_spectrum, fit_gmm, init_hyperparams, initial_noise
from .trainer import TrainConfig, optimize

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "SchemaError",
    "ExperimentConfig",
    "config_from_dict",
    "load_config",
    "default_splits",
    "run_experiment",
    "run_fit",
    "run_predict",
    "run_inspect_init",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# task 1 interpolates, tasks 2 and 3 extrapolate forward and backward
DEFAULT_PROTOCOL = ("random_half", "first_half", "last_half")


class ConfigError(ValueError):
    """Raised when an experiment config is malformed."""


class SchemaError(RuntimeError):
    """Raised when a model file was written by an incompatible version."""


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: str = "gcsm_cc"
    baselines: tuple = ("sm_lmc",)
    q: int = 3
    seed: int = 0
    data: dict = dataclasses.field(default_factory=lambda: {"source": "synthetic"})
    splits: tuple = None  # None = per-task default protocol
    train: TrainConfig = TrainConfig()
    init: InitConfig = InitConfig()
    noise_mode: str = "shared"
    standardize: bool = True
    out_dir: str = "mtgp-out"
    notes: str = ""

    def __post_init__(self):
        for family in (self.kernel, *self.baselines):
            if family not in FAMILIES:
                raise ConfigError(f"unknown kernel family {family!r}")
        if self.q < 1:
            raise ConfigError("q must be at least 1")
        if self.noise_mode not in NOISE_MODES:
            raise ConfigError(f"noise_mode must be one of {NOISE_MODES}")
        source = self.data.get("source")
        if source not in ("synthetic", "csv"):
            raise ConfigError("data.source must be 'synthetic' or 'csv'")
        if source == "csv" and not self.data.get("paths"):
            raise ConfigError("data.source 'csv' requires data.paths")
        if self.splits is not None:
            for strategy in self.splits:
                if strategy not in SPLIT_STRATEGIES:
                    raise ConfigError(f"unknown split strategy {strategy!r}")

    def families(self):
        return (self.kernel, *self.baselines)


def _sub_config(cls, raw, what):
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown {what} option(s): {sorted(extra)}")
    return cls(**raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    if "train" in raw:
        raw["train"] = _sub_config(TrainConfig, raw["train"], "train")
    if "init" in raw:
        raw["init"] = _sub_config(InitConfig, raw["init"], "init")
    if "baselines" in raw:
        raw["baselines"] = tuple(raw["baselines"])
    if raw.get("splits") is not None:
        raw["splits"] = tuple(raw["splits"])
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config key(s): {sorted(extra)}")
    return ExperimentConfig(**raw)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(raw)


def resolved_dict(config: ExperimentConfig) -> dict:
    """Config with every default filled in, for the manifest."""
    out = dataclasses.asdict(config)
    out["splits"] = list(config.splits) if config.splits is not None else None
    out["baselines"] = list(config.baselines)
    return out


def default_splits(m: int):
    return tuple(DEFAULT_PROTOCOL[i % len(DEFAULT_PROTOCOL)] for i in range(m))


# ---------------------------------------------------------------------------
# data plumbing


def _load_dataset(config: ExperimentConfig):
    """Returns (dataset, info dict for the manifest)."""
    data = config.data
    if data["source"] == "synthetic":
        dataset, info = generate_synthetic(
            seed=data.get("seed", config.seed),
            n=data.get("n", 300),
            interval=tuple(data.get("interval", (-10.0, 10.0))),
            q=data.get("q", 3),
        )
        return dataset, {"source": "synthetic", **info}
    dataset = load_series(data["paths"], labels=data.get("labels"))
    return dataset, {"source": "csv", "paths": list(data["paths"]), "labels": list(dataset.labels)}


def _standardize(dataset: TaskedDataset):
    """Shift/scale each task's y by its training statistics.

    Returns the transformed dataset plus per-task (shift, scale) arrays.
    A constant training signal gets scale 1 so the transform stays invertible.
    """
    shift = np.zeros(dataset.m)
    scale = np.ones(dataset.m)
    tasks = []
    for i, task in enumerate(dataset.tasks):
        train_y = task.y[task.train_mask]
        if train_y.size:
            shift[i] = float(np.mean(train_y))
            sd = float(np.std(train_y))
            scale[i] = sd if sd > 0 else 1.0
        tasks.append(Task(task.label, task.x, (task.y - shift[i]) / scale[i], task.train_mask))
    return TaskedDataset(tuple(tasks)), shift, scale


def _template(family: str, m: int, q: int) -> KernelSpec:
    return KernelSpec(family, m, q=q, p=1)


# ---------------------------------------------------------------------------
# model files


def save_model(path, model: TrainedModel, shift=None, scale=None) -> None:
    spec = model.spec
    order = None
    if spec.family == MATERN_LMC:
        order = spec.params.base.matern_order
    m = spec.m
    payload = {
        "schema": SCHEMA_VERSION,
        "version": __version__,
        "family": spec.family,
        "m": m,
        "q": spec.q,
        "p": spec.p,
        "matern_order": order,
        "noise_mode": model.noise_mode,
        "vector": pv.pack(spec, model.noise, model.noise_mode).tolist(),
        "nlml": model.nlml,
        "labels": list(model.dataset.labels),
        "shift": (np.zeros(m) if shift is None else np.asarray(shift)).tolist(),
        "scale": (np.ones(m) if scale is None else np.asarray(scale)).tolist(),
        "tasks": [
            {"x": np.asarray(t.x, dtype=float).tolist(), "y": np.asarray(t.y, dtype=float).tolist()}
            for t in model.dataset.tasks
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Rebuild a trained model from its JSON file.

    Returns (model, shift, scale).  The stored task values are the ones the
    model was trained on (already standardized when the run asked for it),
    so the rebuilt NLML matches the stored one.
    """
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    found = payload.get("schema")
    if found != SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: model schema version {found!r}, this build reads version {SCHEMA_VERSION}"
        )
    template = KernelSpec(payload["family"], payload["m"], payload["q"], payload["p"])
    spec, noise = pv.unpack(template, np.asarray(payload["vector"]), payload["noise_mode"])
    if payload["family"] == MATERN_LMC and payload["matern_order"] is not None:
        base = dataclasses.replace(spec.params.base, matern_order=payload["matern_order"])
        spec = dataclasses.replace(spec, params=dataclasses.replace(spec.params, base=base))
    tasks = []
    for label, raw in zip(payload["labels"], payload["tasks"]):
        x = np.asarray(raw["x"], dtype=float)
        y = np.asarray(raw["y"], dtype=float)
        tasks.append(Task(label, x, y, np.ones(x.shape[0], dtype=bool)))
    model = build_model(spec, noise, TaskedDataset(tuple(tasks)), payload["noise_mode"])
    return model, np.asarray(payload["shift"]), np.asarray(payload["scale"])


# ---------------------------------------------------------------------------
# output bookkeeping


class _Outputs:
    """Tracks files written by one run so a failure can clean them up."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.created_dir = not os.path.isdir(out_dir)
        os.makedirs(out_dir, exist_ok=True)
        self.paths = []

    def path(self, name):
        full = os.path.join(self.out_dir, name)
        self.paths.append(full)
        return full

    def discard(self):
        for p in self.paths:
            try:
                os.unlink(p)
            except FileNotFoundError:
                pass
        if self.created_dir:
            try:
                os.rmdir(self.out_dir)
            except OSError:
                pass


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_predictions(path, dataset: TaskedDataset, means, stds) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("task,x,y_true,y_mean,y_std,is_train\n")
        for task, mean, std in zip(dataset.tasks, means, stds):
            for j in range(task.x.shape[0]):
                fh.write(
                    f"{task.label},{task.x[j]:.17g},{task.y[j]:.17g},"
                    f"{mean[j]:.17g},{std[j]:.17g},{int(task.train_mask[j])}\n"
                )


# ---------------------------------------------------------------------------
# the runs


def _fit_one(family, dataset_std, config: ExperimentConfig):
    template = _template(family, dataset_std.m, config.q)
    spec = init_hyperparams(dataset_std, template, seed=config.seed, config=config.init)
    noise = initial_noise(
        dataset_std, config.init.noise_fraction, per_task=config.noise_mode == "per_task"
    )
    train_cfg = dataclasses.replace(
        config.train, noise_mode=config.noise_mode, seed=config.seed
    )
    return optimize(spec, dataset_std, config=train_cfg, noise=noise, init_config=config.init)


def _predict_all(model: TrainedModel, dataset: TaskedDataset, shift, scale):
    """Posterior means/stds for every point of every task, on the original scale."""
    means, stds = [], []
    for i, task in enumerate(dataset.tasks):
        mean, var = predict_batch(model, task.x, np.full(task.x.shape[0], i))
        means.append(mean * scale[i] + shift[i])
        stds.append(np.sqrt(var) * scale[i])
    return means, stds


def run_experiment(config: ExperimentConfig, dataset_csv_name="dataset.csv"):
    """Fit the candidate kernel and every baseline on one shared dataset.

    Writes dataset CSV, per-kernel prediction CSVs, metrics JSON and the
    manifest into ``config.out_dir``.  Returns the metrics dict.
    """
    outputs = _Outputs(config.out_dir)
    try:
        dataset, data_info = _load_dataset(config)
        strategies = config.splits if config.splits is not None else default_splits(dataset.m)
        if len(strategies) != dataset.m:
            raise ConfigError(
                f"{len(strategies)} split strategies for {dataset.m} tasks"
            )
        dataset = split(dataset, strategies, seed=config.seed)
        save_series(dataset, outputs.path(dataset_csv_name))

        train_only = dataset.subset(train=True)
        if config.standardize:
            std_train, shift, scale = _standardize(train_only)
        else:
            std_train, shift, scale = train_only, np.zeros(dataset.m), np.ones(dataset.m)

        metrics = {"mae": {}}
        fits = {}
        for family in config.families():
            log.info("fitting %s (q=%d, seed=%d)", family, config.q, config.seed)
            model = _fit_one(family, std_train, config)
            means, stds = _predict_all(model, dataset, shift, scale)
            _write_predictions(outputs.path(f"predictions_{family}.csv"), dataset, means, stds)
            per_task = {}
            for i, task in enumerate(dataset.tasks):
                test = ~task.train_mask
                per_task[task.label] = mae(task.y[test], means[i][test])
            metrics["mae"][family] = per_task
            fits[family] = model
            log.info("%s: nlml %.3f, mae %s", family, model.nlml,
                     {k: round(v, 4) for k, v in per_task.items()})

        _write_json(outputs.path("metrics.json"), metrics)
        manifest = {
            "version": __version__,
            "config": resolved_dict(config),
            "data": data_info,
            "splits": list(strategies),
            "split_seed": config.seed,
            "nlml": {family: fits[family].nlml for family in config.families()},
            "notes": config.notes,
        }
        _write_json(outputs.path("manifest.json"), manifest)
        return metrics
    except BaseException:
        outputs.discard()
        raise


def run_fit(config: ExperimentConfig, model_name="model.json"):
    """Fit a single kernel and persist the trained model."""
    outputs = _Outputs(config.out_dir)
    try:
        dataset, data_info = _load_dataset(config)
        if config.splits is not None:
            dataset = split(dataset, config.splits, seed=config.seed)
        train_only = dataset.subset(train=True)
        if config.standardize:
            std_train, shift, scale = _standardize(train_only)
        else:
            std_train, shift, scale = train_only, np.zeros(dataset.m), np.ones(dataset.m)
        model = _fit_one(config.kernel, std_train, config)
        path = outputs.path(model_name)
        save_model(path, model, shift, scale)
        manifest = {
            "version": __version__,
            "config": resolved_dict(config),
            "data": data_info,
            "nlml": model.nlml,
            "notes": config.notes,
        }
        _write_json(outputs.path("manifest.json"), manifest)
        log.info("fitted %s: nlml %.3f -> %s", config.kernel, model.nlml, path)
        return path
    except BaseException:
        outputs.discard()
        raise


def _read_inputs(path, labels):
    """Prediction inputs CSV: columns task,x with task as label or index."""
    index = {label: i for i, label in enumerate(labels)}
    tasks, xs = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().lower()
        if header.split(",")[:2] != ["task", "x"]:
            raise ValueError(f"{path}: expected header 'task,x'")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            cell, raw_x = line.split(",")[:2]
            if cell in index:
                task = index[cell]
            else:
                try:
                    task = int(cell)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: unknown task {cell!r}") from None
                if not 0 <= task < len(labels):
                    raise ValueError(
                        f"{path}:{lineno}: task index {task} out of range for {len(labels)} tasks"
                    )
            tasks.append(task)
            xs.append(float(raw_x))
    return np.asarray(tasks), np.asarray(xs)


def run_predict(model_path, inputs_path, out_path):
    model, shift, scale = load_model(model_path)
    tasks, xs = _read_inputs(inputs_path, model.dataset.labels)
    mean, var = predict_batch(model, xs, tasks)
    mean = mean * scale[tasks] + shift[tasks]
    std = np.sqrt(var) * scale[tasks]
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("task,x,y_mean,y_std\n")
        for t, x, m_, s_ in zip(tasks, xs, mean, std):
            fh.write(f"{model.dataset.labels[t]},{x:.17g},{m_:.17g},{s_:.17g}\n")
    return out_path


def run_inspect_init(config: ExperimentConfig):
    """Emit per-task periodograms and the fitted mixture, for eyeballing."""
    outputs = _Outputs(config.out_dir)
    try:
        dataset, data_info = _load_dataset(config)
        spectra = {}
        with open(outputs.path("periodogram.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write("task,frequency,power\n")
            for task in dataset.tasks:
                spectrum = empirical_spectrum(task.x, task.y, resample=True)
                spectra[task.label] = spectrum
                for f, p in zip(spectrum.frequencies, spectrum.power):
                    fh.write(f"{task.label},{f:.17g},{p:.17g}\n")
        first = next(iter(spectra.values()))
        gmm = fit_gmm(first, config.q, seed=config.seed, config=config.init)
        payload = {
            "q": config.q,
            "seed": config.seed,
            "weights": gmm.weights.tolist(),
            "means": gmm.means.tolist(),
            "variances": gmm.variances.tolist(),
            "loglik": gmm.loglik,
            "n_iter": gmm.n_iter,
            "converged": gmm.converged,
            "noise": initial_noise(dataset, config.init.noise_fraction).tolist(),
            "data": data_info,
        }
        _write_json(outputs.path("gmm.json"), payload)
        return payload
    except BaseException:
        outputs.discard()
        raise
