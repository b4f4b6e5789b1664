import csv

import numpy as np
import pytest

from omega_lab.automaton import fixtures
from omega_lab.experiment import (
    EvalConfig,
    EvalGrid,
    RunRecord,
    category,
    category_table,
    correlate_runs,
    dump_json,
    evaluate_range,
    load_run,
    summarize_id_ood,
    train_run,
    write_run,
)
from omega_lab.neural import RnnParams, TrainConfig

FX = fixtures()


def _grid(acc, lengths=None):
    lengths = lengths or list(range(2, 2 + len(acc)))
    return EvalGrid(lengths, 4, list(acc), [0.5] * len(acc))


def test_summary_all_perfect():
    assert summarize_id_ood(_grid([1.0] * 10), 5) == (1.0, 1.0, "Perfect")


def test_summary_means():
    g = _grid([1.0, 0.5, 0.25, 0.75], [2, 3, 4, 5])
    assert summarize_id_ood(g, 3) == (0.75, 0.5, "Poor")


@pytest.mark.parametrize(
    "ood, name",
    [(0.791, "Poor"), (0.998, "Near-Perfect"), (1.0, "Perfect"), (0.9995, "Perfect"), (0.999, "Near-Perfect"),
     (0.98, "Near-Perfect"), (0.97, "Good"), (0.95, "Good"), (0.93, "Moderate"), (0.9, "Moderate"), (0.8999, "Poor")],
)
def test_categories(ood, name):
    assert category(ood) == name


# (name, low, low inclusive, high, high inclusive) as stated by the category table
BINS = [
    ("Perfect", 0.999, False, 1.0, True),
    ("Near-Perfect", 0.98, True, 0.999, True),
    ("Good", 0.95, True, 0.98, False),
    ("Moderate", 0.90, True, 0.95, False),
    ("Poor", 0.0, True, 0.90, False),
]


def _bins_containing(x):
    out = []
    for name, lo, lo_inc, hi, hi_inc in BINS:
        if (x > lo or (lo_inc and x == lo)) and (x < hi or (hi_inc and x == hi)):
            out.append(name)
    return out


def test_category_bins_partition():
    rng = np.random.default_rng(0)
    xs = np.concatenate([rng.random(1_000_000), [0.0, 0.9, 0.95, 0.98, 0.999, 1.0]])
    for x in xs.tolist():
        hits = _bins_containing(x)
        assert len(hits) == 1
        assert category(x) == hits[0]


def test_summary_is_pure():
    g = _grid(list(np.linspace(0.5, 1.0, 30)))
    assert summarize_id_ood(g, 10) == summarize_id_ood(EvalGrid(**g.to_json()), 10)


def test_evaluate_zero_params_predicts_negative():
    cfg = EvalConfig(min_len=2, max_len=12, per_length_count=40, seed=3)
    grid = evaluate_range(RnnParams.zeros(5, 3), FX["fig1"], cfg)
    assert grid.lengths == list(range(2, 13))
    for acc, pos in zip(grid.accuracy, grid.positive_fraction):
        assert acc == pytest.approx(1.0 - pos)


def test_evaluate_perfect_on_universal():
    p = RnnParams.zeros(3, 2)
    p.b_out[:] = [0.0, 1.0]
    grid = evaluate_range(p, FX["universal"], EvalConfig(max_len=20, per_length_count=16))
    assert grid.accuracy == [1.0] * 19


def test_evaluate_reproducible():
    p = RnnParams.zeros(5, 3)
    p.b_out[:] = [0.0, 1.0]
    cfg = EvalConfig(max_len=15, per_length_count=16, seed=1)
    assert evaluate_range(p, FX["fig1"], cfg) == evaluate_range(p, FX["fig1"], cfg)


SMALL_TRAIN = TrainConfig(hidden=16, batch=16, steps=200, train_max_len=16, seed=1)
SMALL_EVAL = EvalConfig(max_len=32, per_length_count=16, validation_count=64, validation_len=64, validation_interval=50)


def test_train_universal_degenerate():
    rec = train_run(FX["universal"], SMALL_TRAIN, SMALL_EVAL)
    assert rec.history[-1]["val_accuracy"] == 1.0
    assert rec.balance["flagged"]
    assert rec.balance["accuracy_neg"] is None
    assert [h["step"] for h in rec.history] == [50, 100, 150, 200]


def test_train_deterministic(tmp_path):
    a = train_run(FX["gf_a"], SMALL_TRAIN, SMALL_EVAL)
    b = train_run(FX["gf_a"], SMALL_TRAIN, SMALL_EVAL)
    assert dump_json(a.to_json()) == dump_json(b.to_json())
    write_run(a, tmp_path / "a")
    write_run(b, tmp_path / "b")
    for name in ("run.json", "grid.csv", "checkpoint.json", "validation.svg", "range.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    back = load_run(tmp_path / "a" / "run.json")
    assert dump_json(back.to_json()) == dump_json(a.to_json())
    rows = list(csv.reader(open(tmp_path / "a" / "grid.csv")))
    assert rows[0] == ["length", "n_samples", "accuracy", "positive_fraction"]
    assert len(rows) == 1 + 31


def test_default_protocol_shape():
    cfg = EvalConfig()
    assert (cfg.validation_count, cfg.validation_len) == (1024, 512)
    assert (cfg.min_len, cfg.max_len, cfg.per_length_count) == (2, 512, 512)


def _synthetic(name, states, ood, norm):
    return RunRecord(name, states, 0, {"train": {"train_max_len": 64}}, [], _grid([1.0, ood], [2, 100]),
                     1.0, ood, category(ood), norm, {})


def test_correlate_proportional_norms(tmp_path):
    recs = [_synthetic(f"cycle_{k}", k, 1.0 - 0.01 * i, 2.5 * k) for i, k in enumerate((3, 8, 16))]
    res = correlate_runs(recs, tmp_path)
    assert res["norm"].r == pytest.approx(1.0, abs=1e-12)
    rows = list(csv.reader(open(tmp_path / "correlation.csv")))
    assert len(rows) == 1 + 3
    assert (tmp_path / "states_vs_norm.svg").exists()


def test_correlate_needs_three():
    with pytest.raises(ValueError):
        correlate_runs([_synthetic("a", 1, 1.0, 1.0)] * 2)


def test_category_table():
    recs = [_synthetic("x", 3, 1.0, 1), _synthetic("y", 4, 0.998, 1), _synthetic("z", 5, 0.791, 1)]
    rows = {r["category"]: r for r in category_table(recs)}
    assert rows["Perfect"]["tasks"] == 1 and rows["Poor"]["mean_ood"] == pytest.approx(0.791)
    assert rows["Good"]["mean_id"] is None
    assert rows["Overall"]["tasks"] == 3
