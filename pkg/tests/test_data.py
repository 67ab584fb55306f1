"""Dataset plumbing: synthetic generation, splits, calculus, CSV ingestion."""

import os

import numpy as np
import pytest

from mtgp.data import (
    SeriesParseError,
    Task,
    TaskedDataset,
    cumulative_integral,
    derivative,
    generate_synthetic,
    load_series,
    mae,
    save_series,
    split,
)

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
STATIONS = [os.path.join(FIXTURES, f"station_{name}.csv") for name in ("east", "west", "north")]


# ---------------------------------------------------------------------------
# containers


def test_task_requires_increasing_x():
    with pytest.raises(ValueError):
        Task("a", np.array([0.0, 2.0, 1.0]), np.zeros(3), np.ones(3, dtype=bool))


def test_task_copies_and_freezes_inputs():
    x = np.array([0.0, 1.0, 2.0])
    y = np.array([1.0, 2.0, 3.0])
    task = Task("a", x, y, np.ones(3, dtype=bool))
    x[0] = 99.0  # caller's array stays the caller's business
    assert task.x[0] == 0.0
    with pytest.raises(ValueError):
        task.y[0] = 5.0


def test_dataset_rejects_duplicate_labels():
    t = Task("a", np.array([0.0]), np.array([1.0]), np.ones(1, dtype=bool))
    with pytest.raises(ValueError):
        TaskedDataset((t, t))


# ---------------------------------------------------------------------------
# synthetic experiment data


def test_synthetic_layout():
    ds, info = generate_synthetic(seed=4, n=50)
    assert ds.labels == ("signal", "integral", "derivative")
    for task in ds.tasks:
        assert task.x.shape == (50,)
        assert np.all(task.train_mask)
        assert task.x[0] == pytest.approx(-10.0)
        assert task.x[-1] == pytest.approx(10.0)
    assert info["seed"] == 4
    assert len(info["mean_freqs"]) == info["q"] == 3


def test_synthetic_deterministic():
    a, info_a = generate_synthetic(seed=9, n=40)
    b, info_b = generate_synthetic(seed=9, n=40)
    c, _ = generate_synthetic(seed=10, n=40)
    for ta, tb in zip(a.tasks, b.tasks):
        np.testing.assert_array_equal(ta.y, tb.y)
    assert np.any(a.tasks[0].y != c.tasks[0].y)
    np.testing.assert_array_equal(info_a["weights"], info_b["weights"])


def test_synthetic_tasks_are_calculus_of_signal():
    ds, _ = generate_synthetic(seed=2, n=80)
    signal, integral, deriv = (ds.tasks[i].y for i in range(3))
    x = ds.tasks[0].x
    np.testing.assert_allclose(integral, cumulative_integral(x, signal), atol=1e-12)
    np.testing.assert_allclose(deriv, derivative(x, signal), atol=1e-12)


def test_synthetic_parameters_within_documented_ranges():
    _, info = generate_synthetic(seed=77, n=24)
    assert np.all((np.asarray(info["weights"]) >= 0.5) & (np.asarray(info["weights"]) <= 1.5))
    assert np.all((np.asarray(info["mean_freqs"]) >= 0.15) & (np.asarray(info["mean_freqs"]) <= 0.45))
    assert np.all((np.asarray(info["variances"]) >= 0.001) & (np.asarray(info["variances"]) <= 0.01))


# ---------------------------------------------------------------------------
# numerical calculus on known functions


def test_cumulative_integral_of_sine():
    x = np.linspace(0, np.pi, 2001)
    got = cumulative_integral(x, np.sin(x))
    np.testing.assert_allclose(got, 1.0 - np.cos(x), atol=1e-6)
    assert got[0] == 0.0


def test_derivative_of_sine():
    x = np.linspace(0, 2 * np.pi, 2001)
    got = derivative(x, np.sin(x))
    np.testing.assert_allclose(got, np.cos(x), atol=1e-5)


# ---------------------------------------------------------------------------
# splits


def fresh_dataset(n=20, m=3):
    tasks = tuple(
        Task(f"t{i}", np.arange(n, dtype=float), np.sin(np.arange(n) + i),
             np.ones(n, dtype=bool))
        for i in range(m)
    )
    return TaskedDataset(tasks)


@pytest.mark.parametrize("n", [20, 21])
def test_split_takes_exactly_half(n):
    for strategy in ("random_half", "first_half", "last_half"):
        ds = split(fresh_dataset(n=n), strategy, seed=0)
        for task in ds.tasks:
            assert int(task.train_mask.sum()) == n // 2


def test_first_and_last_half_are_contiguous():
    ds = split(fresh_dataset(n=10), "first_half", seed=0)
    np.testing.assert_array_equal(ds.tasks[0].train_mask[:5], True)
    np.testing.assert_array_equal(ds.tasks[0].train_mask[5:], False)
    ds = split(fresh_dataset(n=10), "last_half", seed=0)
    np.testing.assert_array_equal(ds.tasks[0].train_mask[:5], False)
    np.testing.assert_array_equal(ds.tasks[0].train_mask[5:], True)


def test_random_half_seeded():
    a = split(fresh_dataset(), "random_half", seed=5)
    b = split(fresh_dataset(), "random_half", seed=5)
    c = split(fresh_dataset(), "random_half", seed=6)
    np.testing.assert_array_equal(a.tasks[0].train_mask, b.tasks[0].train_mask)
    assert any(np.any(x.train_mask != y.train_mask) for x, y in zip(a.tasks, c.tasks))


def test_per_task_strategies():
    ds = split(fresh_dataset(), ("random_half", "first_half", "last_half"), seed=1)
    assert not np.all(ds.tasks[1].train_mask[10:])
    np.testing.assert_array_equal(ds.tasks[1].train_mask[:10], True)
    np.testing.assert_array_equal(ds.tasks[2].train_mask[10:], True)


def test_split_rejects_unknown_strategy():
    with pytest.raises(ValueError):
        split(fresh_dataset(), "every_other", seed=0)
    with pytest.raises(ValueError):
        split(fresh_dataset(), ("first_half",), seed=0)  # wrong count


def test_mae_frozen_value():
    assert mae([1.0, 2.0, 3.0], [2.0, 2.0, 1.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mae([1.0], [1.0, 2.0])


# ---------------------------------------------------------------------------
# CSV ingestion


def test_fixture_stations_load():
    ds = load_series(STATIONS)
    assert ds.labels == ("station_east", "station_west", "station_north")
    east, west, north = ds.tasks
    # east drops 3 empty cells, west drops NaN and nan, north is complete
    assert east.x.shape == (93,)
    assert west.x.shape == (94,)
    assert north.x.shape == (96,)
    # hourly stamps, shared origin
    assert east.x[0] == 0.0
    assert north.x[-1] == pytest.approx(95.0)
    assert np.all(np.diff(north.x) == pytest.approx(1.0))


def test_fixture_custom_labels():
    ds = load_series(STATIONS, labels=["a", "b", "c"])
    assert ds.labels == ("a", "b", "c")


def test_numeric_timestamps_taken_verbatim():
    ds = load_series(os.path.join(FIXTURES, "tone_numeric.csv"))
    task = ds.tasks[0]
    assert task.x.shape == (64,)
    np.testing.assert_allclose(task.x, np.arange(64.0), atol=0)


def test_round_trip_is_bit_exact(tmp_path):
    ds = load_series(STATIONS)
    first = tmp_path / "combined.csv"
    save_series(ds, first)
    back = load_series(first)
    assert back.labels == ds.labels
    for ta, tb in zip(ds.tasks, back.tasks):
        np.testing.assert_array_equal(ta.x, tb.x)
        np.testing.assert_array_equal(ta.y, tb.y)
    second = tmp_path / "again.csv"
    save_series(back, second)
    assert first.read_bytes() == second.read_bytes()


def test_task_column_groups_by_first_appearance(tmp_path):
    p = tmp_path / "multi.csv"
    p.write_text(
        "timestamp,value,task\n"
        "0,1.0,beta\n1,2.0,beta\n0,5.0,alpha\n2,3.0,beta\n1,6.0,alpha\n")
    ds = load_series(p)
    assert ds.labels == ("beta", "alpha")
    np.testing.assert_array_equal(ds.tasks[0].y, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(ds.tasks[1].y, [5.0, 6.0])


def test_duplicate_timestamp_reports_line(tmp_path):
    p = tmp_path / "dup.csv"
    p.write_text("timestamp,value\n0,1.0\n1,2.0\n1,3.0\n")
    with pytest.raises(SeriesParseError) as err:
        load_series(p)
    assert "line 4" in str(err.value)


def test_missing_header_rejected(tmp_path):
    p = tmp_path / "nohdr.csv"
    p.write_text("0,1.0\n1,2.0\n")
    with pytest.raises(SeriesParseError):
        load_series(p)


def test_all_values_missing_rejected(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("timestamp,value\n0,\n1,NaN\n")
    with pytest.raises(SeriesParseError):
        load_series(p)


def test_iso_and_numeric_agree_on_spacing(tmp_path):
    iso = tmp_path / "iso.csv"
    iso.write_text(
        "timestamp,value\n"
        "2024-01-01T00:00:00,1.0\n2024-01-01T01:00:00,2.0\n2024-01-01T03:30:00,3.0\n")
    ds = load_series(iso)
    np.testing.assert_allclose(ds.tasks[0].x, [0.0, 1.0, 3.5], atol=1e-12)
