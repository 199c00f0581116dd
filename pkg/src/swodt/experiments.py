"""Cross-validation and regularization sweeps over tree variants."""

from __future__ import annotations

import csv
import io
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .datagen import kfold_split
from .errors import DatasetError, SwodtError
from .rules import extract_rules
from .tree import TrainConfig, fit_tree

CSV_FIELDS = (
    "variant", "depth", "lam1", "lam2", "seed", "folds",
    "train_error_mean", "train_error_std", "val_error_mean", "val_error_std",
    "sparsity_mean", "rule_sparsity_mean", "n_leaves_mean", "n_fallbacks_mean", "train_seconds_mean",
)


@dataclass
class FoldResult:
    train_error: float
    val_error: float
    sparsity: float
    rule_sparsity: float
    n_leaves: int
    n_fallbacks: int
    train_seconds: float


@dataclass
class CVRow:
    """Fold-averaged metrics for one (variant, depth, lambda, seed) setting."""

    variant: str
    depth: int
    lam1: float
    lam2: float
    seed: int
    folds: list = field(default_factory=list)

    def _stat(self, name, fn):
        return float(fn([getattr(f, name) for f in self.folds]))

    @property
    def val_error_mean(self):
        return self._stat("val_error", np.mean)

    @property
    def train_error_mean(self):
        return self._stat("train_error", np.mean)

    @property
    def sparsity_mean(self):
        return self._stat("sparsity", np.mean)

    @property
    def rule_sparsity_mean(self):
        return self._stat("rule_sparsity", np.mean)

    @property
    def n_leaves_mean(self):
        return self._stat("n_leaves", np.mean)

    def summary(self):
        out = {"variant": self.variant, "depth": self.depth, "lam1": self.lam1,
               "lam2": self.lam2, "seed": self.seed, "folds": len(self.folds)}
        for name in ("train_error", "val_error"):
            out[name + "_mean"] = self._stat(name, np.mean)
            out[name + "_std"] = self._stat(name, np.std)
        for name in ("sparsity", "rule_sparsity", "n_leaves", "n_fallbacks", "train_seconds"):
            out[name + "_mean"] = self._stat(name, np.mean)
        return out

    def to_dict(self):
        d = self.summary()
        d["per_fold"] = [asdict(f) for f in self.folds]
        return d


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self, timings=True):
        rows = [r.to_dict() for r in self.rows]
        if not timings:
            for r in rows:
                r.pop("train_seconds_mean", None)
                for f in r["per_fold"]:
                    f.pop("train_seconds", None)
        return {"format": "swodt-report/1", "meta": dict(self.meta), "rows": rows}

    def to_json(self, timings=True):
        return json.dumps(self.to_dict(timings), indent=1) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: v for k, v in r.summary().items() if k in CSV_FIELDS})
        return buf.getvalue()

    def table(self):
        head = ("variant", "depth", "lam", "val err %", "train err %", "sparsity", "leaves", "sec")
        lines = [head]
        for r in self.rows:
            s = r.summary()
            lines.append((r.variant, str(r.depth), "%g/%g" % (r.lam1, r.lam2),
                          "%.2f" % (100 * s["val_error_mean"]), "%.2f" % (100 * s["train_error_mean"]),
                          "%.3f" % s["rule_sparsity_mean"], "%.1f" % s["n_leaves_mean"],
                          "%.2f" % s["train_seconds_mean"]))
        w = [max(len(l[i]) for l in lines) for i in range(len(head))]
        return "\n".join("  ".join(c.rjust(w[i]) for i, c in enumerate(l)) for l in lines)


def error_rate(pred, y):
    """Misclassification rate (fraction of wrong labels)."""
    pred = np.asarray(pred)
    y = np.asarray(y)
    if pred.shape != y.shape:
        raise SwodtError("prediction and label arrays differ in shape")
    if y.size == 0:
        return float("nan")
    return float(np.mean(pred != y))


def environment_meta(seed=None):
    return {"seed": seed, "python": platform.python_version(), "machine": platform.machine(),
            "platform": platform.platform(), "numpy": np.__version__}


def _run_fold(args):
    train, val, cfg = args
    t0 = time.perf_counter()
    model = fit_tree(train, cfg)
    seconds = time.perf_counter() - t0
    rules = extract_rules(model) if any(l.label == 1 for l in model.leaves) else None
    return FoldResult(
        train_error=error_rate(model.predict(train.X), train.y),
        val_error=error_rate(model.predict(val.X), val.y) if len(val) else float("nan"),
        sparsity=model.sparsity,
        rule_sparsity=rules.sparsity if rules is not None else 0.0,
        n_leaves=model.n_leaves,
        n_fallbacks=model.n_fallbacks,
        train_seconds=seconds,
    )


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def cross_validate(ds, cfg=None, k=5, seed=0, workers=1):
    """Train on each of ``k`` folds and score misclassification on the
    held-out part. Returns one :class:`CVRow`."""
    cfg = cfg or TrainConfig()
    cfg.validate()
    if len(np.unique(ds.y)) < 2:
        raise DatasetError("cross-validation needs both classes in the dataset")
    if k < 2:
        raise SwodtError("k must be at least 2")
    jobs = [(tr, va, cfg) for tr, va in kfold_split(ds, k, seed)]
    return CVRow(cfg.variant, cfg.depth, cfg.lam1, cfg.lam2, seed, _map(_run_fold, jobs, workers))


def lambda_sweep(ds, cfg, lambdas, k=5, seed=0, workers=1):
    """One cross-validated row per lambda. SWODT sets ``lam1 = lam2``,
    SWODTL ``lam2 = 0``; other variants are run once, unregularized."""
    lambdas = [float(l) for l in lambdas]
    if lambdas != sorted(lambdas):
        raise SwodtError("lambda grid must be sorted ascending")
    report = ExperimentReport(meta=environment_meta(seed))
    base = replace(cfg)
    if base.variant not in ("swodt", "swodtl"):
        lambdas = [0.0]
    for lam in lambdas:
        c = replace(base, lam1=lam, lam2=lam if base.variant == "swodt" else 0.0)
        if c.variant not in ("swodt", "swodtl"):
            c = replace(c, lam1=0.0, lam2=0.0)
        report.rows.append(cross_validate(ds, c, k, seed, workers))
    return report


def grid_report(ds, variants, depths, lambdas, k=5, seeds=(0,), workers=1, base=None):
    """Cross-validate every (variant, depth, lambda, seed) combination."""
    base = base or TrainConfig()
    report = ExperimentReport(meta=environment_meta(list(seeds)))
    for variant in variants:
        for depth in depths:
            lams = lambdas if variant in ("swodt", "swodtl") else [0.0]
            for lam in lams:
                cfg = TrainConfig.for_variant(variant, lam, depth=depth, min_split=base.min_split,
                                              scale=base.scale, owlqn=base.owlqn)
                for seed in seeds:
                    report.rows.append(cross_validate(ds, cfg, k, seed, workers))
    return report
