"""Scenario sampling, dataset generation, persistence and fold splitting."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import special, stats

from .errors import DatasetError, SamplerError
from .grid import base_flows, build_ed_lp, bus_injections, n1_secure_batch
from .lp import solve_lp

OFFSET_NAME = "const"


@dataclass
class SamplerConfig:
    """Parameters of the correlated scenario sampler.

    Loads are truncated Gaussians (truncated at 0) around ``load_scale``
    times the nominal bus load with relative standard deviation
    ``load_std``. Wind and PV capacity factors are Beta-distributed with
    the given mean and standard deviation. Dependence inside each group
    comes from a Gaussian copula with equicorrelation ``load_correlation``
    or ``renewable_correlation``; ``renewable_corr_matrix`` overrides the
    latter with a full matrix over renewable units (spec order).

    ``cost_jitter`` draws a per-scenario multiplier in ``1 +- cost_jitter``
    for every dispatchable unit's marginal cost. It spreads the generated
    states over dispatch patterns other than the nominal merit order;
    security evaluation switches it off.
    """

    load_scale: float = 1.0
    load_std: float = 0.1
    load_correlation: float = 0.8
    wind_mean: float = 0.4
    wind_std: float = 0.25
    pv_mean: float = 0.35
    pv_std: float = 0.25
    renewable_correlation: float = 0.3
    renewable_corr_matrix: list | None = None
    cost_jitter: float = 0.0

    def validate(self):
        if not 0.0 <= self.cost_jitter < 1.0:
            raise SamplerError("cost_jitter must lie in [0, 1)")
        if self.load_scale < 0:
            raise SamplerError("load_scale must be nonnegative")
        for name in ("load_std", "wind_std", "pv_std"):
            if getattr(self, name) < 0:
                raise SamplerError("{} must be nonnegative".format(name))
        for kind in ("wind", "pv"):
            m, s = getattr(self, kind + "_mean"), getattr(self, kind + "_std")
            if not 0.0 <= m <= 1.0:
                raise SamplerError("{}_mean must lie in [0, 1]".format(kind))
            if s > 0 and s * s >= m * (1.0 - m):
                raise SamplerError("{}_std too large for a Beta with mean {}".format(kind, m))
        for name in ("load_correlation", "renewable_correlation"):
            if not -1.0 < getattr(self, name) < 1.0:
                raise SamplerError("{} must lie in (-1, 1)".format(name))

    @classmethod
    def from_dict(cls, data):
        try:
            cfg = cls(**(data or {}))
        except TypeError as exc:
            raise SamplerError(str(exc)) from exc
        cfg.validate()
        return cfg


class Scenario(NamedTuple):
    renewable_MW: np.ndarray  # available output per renewable unit
    load_MW: np.ndarray  # per bus, spec order
    cost_scale: np.ndarray | None = None  # per dispatchable unit


def _equicorrelation(n, rho):
    C = np.full((n, n), rho)
    np.fill_diagonal(C, 1.0)
    return C


def _copula_uniforms(rng, n, corr):
    dim = corr.shape[0]
    if dim == 0:
        return np.zeros((n, 0))
    w, V = np.linalg.eigh(corr)
    if w.min() < -1e-10:
        raise SamplerError("correlation matrix is not positive semidefinite")
    root = V * np.sqrt(np.clip(w, 0.0, None))
    z = rng.standard_normal((n, dim)) @ root.T
    return special.ndtr(z)


def _beta_from_moments(mean, std):
    k = mean * (1.0 - mean) / (std * std) - 1.0
    return mean * k, (1.0 - mean) * k


def sample_scenarios(spec, n, sampler=None, seed=0):
    """Draw ``n`` (renewable availability, per-bus load) scenarios.

    Deterministic in ``seed``.
    """
    if n < 1:
        raise SamplerError("n must be at least 1")
    sampler = sampler or SamplerConfig()
    sampler.validate()
    rng = np.random.default_rng(seed)
    ren = spec.renewables
    load_buses = [i for i, b in enumerate(spec.buses) if b.load_MW > 0]

    if sampler.renewable_corr_matrix is not None:
        rc = np.asarray(sampler.renewable_corr_matrix, dtype=float)
        if rc.shape != (len(ren), len(ren)):
            raise SamplerError("renewable_corr_matrix must be {0}x{0}".format(len(ren)))
    else:
        rc = _equicorrelation(len(ren), sampler.renewable_correlation)
    u_ren = _copula_uniforms(rng, n, rc)
    u_load = _copula_uniforms(rng, n, _equicorrelation(len(load_buses), sampler.load_correlation))

    cf = np.empty((n, len(ren)))
    for j, g in enumerate(ren):
        mean = getattr(sampler, g.kind + "_mean")
        std = getattr(sampler, g.kind + "_std")
        if std == 0.0:
            cf[:, j] = mean
        else:
            a, b = _beta_from_moments(mean, std)
            cf[:, j] = stats.beta.ppf(u_ren[:, j], a, b)
    pmax = np.array([g.p_max_MW for g in ren])
    renewable = np.clip(cf, 0.0, 1.0) * pmax

    nominal = spec.nominal_loads()[load_buses] * sampler.load_scale
    loads = np.zeros((n, spec.n_buses))
    if sampler.load_std == 0.0:
        loads[:, load_buses] = nominal
    else:
        sd = sampler.load_std * nominal
        lo = special.ndtr(-nominal / sd)
        q = lo + u_load * (1.0 - lo)
        loads[:, load_buses] = np.maximum(nominal + sd * special.ndtri(np.clip(q, 1e-16, 1 - 1e-16)), 0.0)
    if sampler.cost_jitter > 0:
        j = sampler.cost_jitter
        costs = rng.uniform(1.0 - j, 1.0 + j, size=(n, len(spec.dispatchable)))
        return [Scenario(renewable[i].copy(), loads[i].copy(), costs[i].copy()) for i in range(n)]
    return [Scenario(renewable[i].copy(), loads[i].copy()) for i in range(n)]


@dataclass
class Scaling:
    """Per-feature z-score transform; the offset column is left untouched."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X, offset_index=-1):
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std < 1e-12] = 1.0
        mean[offset_index] = 0.0
        std[offset_index] = 1.0
        return cls(mean, std)

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def unscale_theta(self, theta, offset_index=-1):
        """Map split weights fitted on scaled features to raw feature units,
        so that ``raw_theta @ p == theta @ apply(p)``."""
        theta = np.asarray(theta, dtype=float)
        raw = theta / self.std
        mask = np.ones(theta.size, dtype=bool)
        mask[offset_index] = False
        raw[offset_index] = theta[offset_index] - float(np.dot(raw[mask], self.mean[mask]))
        return raw

    def to_dict(self):
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


@dataclass
class LabeledDataset:
    """Feature matrix (one operating state per row) with security labels.

    The last column is the constant 1 that lets a split learn its offset.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DatasetError("states and labels differ in length")
        if self.X.shape[1] != len(self.feature_names):
            raise DatasetError("feature_names does not match the state dimension")
        if not np.isin(self.y, (0, 1)).all():
            raise DatasetError("labels must be 0 or 1")

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def states(self):
        return list(self.X)

    def subset(self, idx):
        return LabeledDataset(self.X[idx], self.y[idx], list(self.feature_names), dict(self.meta))

    def class_counts(self):
        return np.bincount(self.y, minlength=2)


def with_offset(X):
    X = np.asarray(X, dtype=float)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def feature_names_for(spec):
    names = ["g:" + g.name for g in spec.dispatchable]
    names += ["r:" + g.name for g in spec.renewables]
    names += ["l:" + br.name for br in spec.branches]
    names += ["d:bus{}".format(b.id) for b in spec.load_buses]
    names.append(OFFSET_NAME)
    return names


def _dispatch_chunk(args):
    spec, net, scenarios = args
    load_idx = [i for i, b in enumerate(spec.buses) if b.load_MW > 0]
    rows, flows, skipped = [], [], []
    for k, sc in scenarios:
        lp, lay = build_ed_lp(spec, net, sc.renewable_MW, sc.load_MW, sc.cost_scale)
        res = solve_lp(lp)
        if not res.optimal:
            skipped.append(k)
            continue
        g = res.x[lay.dispatch]
        r = sc.renewable_MW - res.x[lay.curtail]
        f = base_flows(net, bus_injections(spec, g, r, sc.load_MW))
        rows.append(np.concatenate([g, r, f, sc.load_MW[load_idx], [1.0]]))
        flows.append(f)
    return rows, flows, skipped


def generate_dataset(spec, net, scenarios, workers=1, meta=None):
    """Dispatch every scenario, build its feature vector and N-1 label.

    Infeasible scenarios are skipped; their indices are recorded in
    ``meta["skipped_infeasible"]``. Output order follows scenario order for
    any ``workers`` count.
    """
    items = list(enumerate(scenarios))
    if workers and workers > 1 and len(items) > 1:
        chunks = [items[i::workers] for i in range(workers)]
        # Round-robin chunks keep load balanced; results re-sorted below.
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_dispatch_chunk, [(spec, net, c) for c in chunks]))
        order = []
        for c, (rows, flows, skipped) in zip(chunks, parts):
            ok = [k for k, _ in c if k not in set(skipped)]
            order.extend(zip(ok, rows, flows))
        order.sort(key=lambda t: t[0])
        rows = [t[1] for t in order]
        flows = [t[2] for t in order]
        skipped = sorted(k for p in parts for k in p[2])
    else:
        rows, flows, skipped = _dispatch_chunk((spec, net, items))
    if not rows:
        raise DatasetError("all {} scenarios were infeasible".format(len(items)))
    y = n1_secure_batch(net, np.array(flows)).astype(int)
    info = dict(meta or {})
    info.update({
        "grid_hash": spec.content_hash(),
        "n_scenarios": len(items),
        "skipped_infeasible": skipped,
    })
    return LabeledDataset(np.array(rows), y, feature_names_for(spec), info)


def kfold_indices(n, k, seed=0):
    if k < 2:
        raise DatasetError("k must be at least 2")
    if k > n:
        raise DatasetError("cannot make {} folds from {} samples".format(k, n))
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i in range(k):
        train = np.sort(np.concatenate([folds[j] for j in range(k) if j != i]))
        out.append((train, np.sort(folds[i])))
    return out


def kfold_split(ds, k, seed=0):
    """Split ``ds`` into ``k`` (train, validation) dataset pairs."""
    return [(ds.subset(tr), ds.subset(va)) for tr, va in kfold_indices(len(ds), k, seed)]


# persistence ----------------------------------------------------------------

def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sidecar_path(csv_path):
    p = Path(csv_path)
    return p.with_name(p.stem + ".meta.json")


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_dataset(ds, path):
    """Write ``ds`` as CSV (17 significant digits) plus a JSON sidecar."""
    lines = [",".join(list(ds.feature_names) + ["label"])]
    for row, label in zip(ds.X, ds.y):
        lines.append(",".join("%.17g" % v for v in row) + ",%d" % label)
    atomic_write_text(path, "\n".join(lines) + "\n")
    atomic_write_text(sidecar_path(path), json.dumps(_to_jsonable(ds.meta), indent=2, sort_keys=True) + "\n")


def load_dataset(path):
    """Read a dataset CSV; malformed content raises :class:`DatasetError`
    carrying the offending line number."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DatasetError("cannot read {}: {}".format(path, exc)) from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError("empty dataset file", line=1) from None
        if len(header) < 2 or header[-1] != "label":
            raise DatasetError("header must end with a 'label' column", line=1)
        names = header[:-1]
        rows, labels = [], []
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError("expected {} fields, found {}".format(len(header), len(row)), line=lineno)
            try:
                values = [float(v) for v in row[:-1]]
                label = int(row[-1])
            except ValueError as exc:
                raise DatasetError("unparsable value ({})".format(exc), line=lineno) from None
            if label not in (0, 1):
                raise DatasetError("label {} is not 0 or 1".format(label), line=lineno)
            if not all(math.isfinite(v) for v in values):
                raise DatasetError("non-finite feature value", line=lineno)
            if values[-1] != 1.0:
                raise DatasetError("last feature must be the constant 1", line=lineno)
            rows.append(values)
            labels.append(label)
    if not rows:
        raise DatasetError("dataset has no rows", line=2)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise DatasetError("sidecar {} is not valid JSON: {}".format(side, exc)) from exc
    return LabeledDataset(np.array(rows), np.array(labels), names, meta)


def sampler_to_dict(cfg):
    return asdict(cfg)
