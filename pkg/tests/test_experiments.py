import csv
import io
import json

import numpy as np
import pytest

from helpers import oblique_dataset
from swodt.datagen import LabeledDataset, with_offset
from swodt.errors import DatasetError, SwodtError
from swodt.experiments import CSV_FIELDS, cross_validate, error_rate, grid_report, lambda_sweep
from swodt.tree import TrainConfig

SEEDS = range(10)


@pytest.fixture(scope="module")
def seed_rows():
    """CV rows per seed for WODT, SWODT (lam 0.01) and UDT at depth 6."""
    out = []
    for seed in SEEDS:
        ds = oblique_dataset(500, seed, dim=10)
        out.append({v: cross_validate(ds, TrainConfig.for_variant(v, 0.01, depth=6), k=5, seed=seed)
                    for v in ("wodt", "swodt", "udt")})
    return out


def test_error_rate_constant_predictor_on_balanced_data():
    y = np.array([0, 1] * 50)
    assert error_rate(np.zeros(100, dtype=int), y) == 0.5
    assert error_rate(np.ones(100, dtype=int), y) == 0.5
    assert error_rate(y, y) == 0.0
    with pytest.raises(SwodtError):
        error_rate([0, 1], [0])


def test_memorizing_model_separates_train_and_validation_error():
    rng = np.random.default_rng(0)
    X = with_offset(rng.normal(size=(200, 3)))
    y = rng.integers(0, 2, 200)  # pure noise: only memorization fits
    ds = LabeledDataset(X, y, ["a", "b", "c", "const"])
    row = cross_validate(ds, TrainConfig(variant="udt", depth=30, min_split=2), k=5)
    # greedy splits stop where no single threshold lowers entropy, so a few
    # training points stay misfit
    assert row.train_error_mean < 0.05
    assert row.val_error_mean > 0.3
    assert [f.train_error for f in row.folds] != [f.val_error for f in row.folds]
    assert len(row.folds) == 5


def test_swodt_beats_udt_on_oblique_boundary(seed_rows):
    sw = np.mean([r["swodt"].val_error_mean for r in seed_rows])
    udt = np.mean([r["udt"].val_error_mean for r in seed_rows])
    assert sw < udt


def test_swodt_has_fewer_leaves_than_wodt(seed_rows):
    sw = np.mean([r["swodt"].n_leaves_mean for r in seed_rows])
    wodt = np.mean([r["wodt"].n_leaves_mean for r in seed_rows])
    assert sw < wodt


def test_metric_ranges(seed_rows):
    for rows in seed_rows:
        for row in rows.values():
            for f in row.folds:
                assert 0.0 <= f.val_error <= 1.0 and 0.0 <= f.train_error <= 1.0
                assert 0.0 <= f.sparsity <= 1.0 and 0.0 <= f.rule_sparsity <= 1.0
                assert f.train_seconds >= 0.0


def test_lambda_sweep_zero_row_is_wodt_and_saturates():
    ds = oblique_dataset(400, 3, dim=20)
    rep = lambda_sweep(ds, TrainConfig(depth=4), [0.0, 0.01, 1.0], k=3)
    assert [r.lam1 for r in rep.rows] == [0.0, 0.01, 1.0]
    assert all(r.lam2 == r.lam1 for r in rep.rows)
    wodt = cross_validate(ds, TrainConfig.for_variant("wodt", depth=4), k=3)
    zero = rep.rows[0]
    assert zero.val_error_mean == wodt.val_error_mean
    assert zero.sparsity_mean == wodt.sparsity_mean
    assert zero.sparsity_mean > 0.9
    top = rep.rows[-1]
    assert top.sparsity_mean < 0.1
    assert np.mean([f.n_fallbacks for f in top.folds]) >= 1
    assert rep.rows[0].sparsity_mean > rep.rows[1].sparsity_mean > top.sparsity_mean


def test_swodtl_sweep_keeps_ridge_off():
    ds = oblique_dataset(300, 4, dim=6)
    rep = lambda_sweep(ds, TrainConfig.for_variant("swodtl"), [0.0, 0.05], k=2)
    assert [(r.variant, r.lam1, r.lam2) for r in rep.rows] == [("swodtl", 0.0, 0.0), ("swodtl", 0.05, 0.0)]
    rep = lambda_sweep(ds, TrainConfig.for_variant("udt", depth=3), [0.0, 0.05], k=2)
    assert len(rep.rows) == 1


def test_reports_reproducible_without_timings():
    ds = oblique_dataset(300, 5, dim=6)
    args = (ds, ["udt", "swodt"], [2, 3], [0.01, 0.05])
    a = grid_report(*args, k=3, seeds=(0, 1))
    b = grid_report(*args, k=3, seeds=(0, 1))
    assert a.to_json(timings=False) == b.to_json(timings=False)
    assert len(a.rows) == 2 * 2 + 2 * 2 * 2
    d = json.loads(a.to_json())
    assert d["meta"]["seed"] == [0, 1] and "train_seconds" in d["rows"][0]["per_fold"][0]
    assert "train_seconds" not in json.dumps(a.to_dict(timings=False))
    rows = list(csv.DictReader(io.StringIO(a.to_csv())))
    assert tuple(rows[0]) == CSV_FIELDS and len(rows) == len(a.rows)
    assert "val err %" in a.table()


def test_workers_do_not_change_results():
    ds = oblique_dataset(300, 6, dim=6)
    cfg = TrainConfig(depth=3, lam1=0.01, lam2=0.01)
    a = cross_validate(ds, cfg, k=3, seed=2, workers=1)
    b = cross_validate(ds, cfg, k=3, seed=2, workers=2)
    assert a.summary()["val_error_mean"] == b.summary()["val_error_mean"]
    assert [f.n_leaves for f in a.folds] == [f.n_leaves for f in b.folds]


def test_harness_errors():
    ds = LabeledDataset(with_offset(np.arange(10.0)[:, None]), np.ones(10), ["x", "const"])
    with pytest.raises(DatasetError):
        cross_validate(ds)
    ds = oblique_dataset(50, 0, dim=3)
    with pytest.raises(SwodtError):
        cross_validate(ds, k=1)
    with pytest.raises(SwodtError):
        lambda_sweep(ds, TrainConfig(), [0.1, 0.01])
    with pytest.raises(SwodtError):
        cross_validate(ds, TrainConfig(variant="wodt", lam1=0.1))
