"""Experiment harness internals: configs, standardization, model files."""

import dataclasses
import json

import numpy as np
import pytest

from mtgp.data import Task, TaskedDataset
from mtgp.experiment import (
    ConfigError,
    ExperimentConfig,
    SchemaError,
    _standardize,
    config_from_dict,
    default_splits,
    load_config,
    load_model,
    resolved_dict,
    save_model,
)
from mtgp.gp import build_model
from mtgp.kernels import BaselineKernelParams
from mtgp.multitask import MATERN_LMC, KernelSpec, LMCParams


# ---------------------------------------------------------------------------
# config


def test_defaults_are_valid():
    config = ExperimentConfig()
    assert config.kernel == "gcsm_cc"
    assert config.families() == ("gcsm_cc", "sm_lmc")


def test_unknown_family_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig(kernel="deep_gp")
    with pytest.raises(ConfigError):
        ExperimentConfig(baselines=("sm_lmc", "warped"))


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"kernell": "gcsm_cc"})
    with pytest.raises(ConfigError):
        config_from_dict({"train": {"max_itres": 5}})


def test_csv_source_needs_paths():
    with pytest.raises(ConfigError):
        ExperimentConfig(data={"source": "csv"})


def test_bad_split_strategy_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig(splits=("random_half", "middle_half"))


def test_load_config_roundtrip(tmp_path):
    raw = {"kernel": "sm_lmc", "q": 4, "seed": 11,
           "train": {"max_iters": 7}, "init": {"pooled": True}}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(raw))
    config = load_config(p)
    assert config.kernel == "sm_lmc"
    assert config.q == 4
    assert config.train.max_iters == 7
    assert config.init.pooled is True
    # the resolved dict fills every default for the manifest
    resolved = resolved_dict(config)
    assert resolved["noise_mode"] == "shared"
    assert resolved["train"]["restarts"] == 3


def test_default_splits_cycle():
    assert default_splits(3) == ("random_half", "first_half", "last_half")
    assert default_splits(5) == (
        "random_half", "first_half", "last_half", "random_half", "first_half")


# ---------------------------------------------------------------------------
# standardization


def make_dataset():
    x = np.arange(10, dtype=float)
    y0 = np.arange(10, dtype=float) * 3.0 + 5.0
    y1 = np.full(10, 2.0)
    mask = np.zeros(10, dtype=bool)
    mask[:5] = True
    return TaskedDataset((
        Task("a", x, y0, mask),
        Task("b", x, y1, np.ones(10, dtype=bool)),
    ))


def test_standardize_uses_train_statistics_only():
    ds, shift, scale = _standardize(make_dataset())
    train_y = np.arange(5) * 3.0 + 5.0
    assert shift[0] == pytest.approx(train_y.mean())
    assert scale[0] == pytest.approx(train_y.std())
    got = ds.tasks[0].y[:5]
    np.testing.assert_allclose(got.mean(), 0.0, atol=1e-12)
    np.testing.assert_allclose(got.std(), 1.0, atol=1e-12)


def test_standardize_constant_task_keeps_unit_scale():
    _, shift, scale = _standardize(make_dataset())
    assert shift[1] == pytest.approx(2.0)
    assert scale[1] == 1.0  # sd 0 would make the transform singular


# ---------------------------------------------------------------------------
# model files


def matern_model(order=2.5):
    spec = KernelSpec(MATERN_LMC, 2, 1, 1, LMCParams(
        np.array([[1.0, 0.0], [0.4, 0.9]]),
        BaselineKernelParams(1.2, np.array([0.8]), order)))
    rng = np.random.default_rng(5)
    tasks = tuple(
        Task(f"t{i}", np.sort(rng.uniform(-2, 2, 6)), rng.normal(0, 1, 6),
             np.ones(6, dtype=bool))
        for i in range(2))
    return build_model(spec, np.array([0.2]), TaskedDataset(tasks))


def test_matern_order_survives_model_file(tmp_path):
    model = matern_model(order=2.5)
    path = tmp_path / "m.json"
    save_model(path, model)
    back, shift, scale = load_model(path)
    assert back.spec.params.base.matern_order == 2.5
    assert back.nlml == pytest.approx(model.nlml, abs=1e-10)
    np.testing.assert_array_equal(shift, np.zeros(2))
    np.testing.assert_array_equal(scale, np.ones(2))


def test_model_file_rejects_other_schema(tmp_path):
    model = matern_model()
    path = tmp_path / "m.json"
    save_model(path, model)
    payload = json.loads(path.read_text())
    payload["schema"] = 0
    path.write_text(json.dumps(payload))
    with pytest.raises(SchemaError):
        load_model(path)


def test_model_file_keeps_scaler(tmp_path):
    model = matern_model()
    path = tmp_path / "m.json"
    save_model(path, model, shift=np.array([1.5, -2.0]), scale=np.array([3.0, 0.5]))
    _, shift, scale = load_model(path)
    np.testing.assert_array_equal(shift, [1.5, -2.0])
    np.testing.assert_array_equal(scale, [3.0, 0.5])


def test_config_is_frozen():
    config = ExperimentConfig()
    with pytest.raises(dataclasses.FrozenInstanceError):
        config.q = 7
