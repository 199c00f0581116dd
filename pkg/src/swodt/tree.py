"""Oblique decision-tree induction (UDT, WODT, SWODTL, SWODT) and prediction.

A node sends state ``p`` left when ``theta.p < 0`` and right otherwise.
Split weights are fitted on standardized features (optionally) and stored
in raw feature units, so a trained model and the rules extracted from it
apply directly to physical quantities.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .datagen import Scaling
from .errors import DatasetError, SwodtError
from .objective import NodeObjective
from .owlqn import OwlqnConfig, minimize

VARIANTS = ("udt", "wodt", "swodtl", "swodt")
ZERO_TOL = 1e-8


@dataclass
class TrainConfig:
    """Tree hyperparameters.

    ``depth`` is the maximum number of split levels; a node splits only if
    it holds more than ``min_split`` samples.
    """

    variant: str = "swodt"
    depth: int = 6
    min_split: int = 10
    lam1: float = 0.05
    lam2: float = 0.05
    scale: bool = True
    seed: int = 0
    owlqn: OwlqnConfig = field(default_factory=OwlqnConfig)

    def __post_init__(self):
        self.variant = self.variant.lower()
        if isinstance(self.owlqn, dict):
            self.owlqn = OwlqnConfig.from_dict(self.owlqn)

    @classmethod
    def for_variant(cls, variant, lam=0.05, **kw):
        """Config with the regularization implied by ``variant``:
        WODT/UDT none, SWODTL lasso only, SWODT ``lam1 = lam2 = lam``."""
        variant = variant.lower()
        lam1 = lam2 = lam
        if variant in ("wodt", "udt"):
            lam1 = lam2 = 0.0
        elif variant == "swodtl":
            lam2 = 0.0
        return cls(variant=variant, lam1=lam1, lam2=lam2, **kw)

    def validate(self):
        if self.variant not in VARIANTS:
            raise SwodtError("unknown variant {!r}".format(self.variant))
        if self.depth < 1:
            raise SwodtError("depth must be at least 1")
        if self.min_split < 2:
            raise SwodtError("min_split must be at least 2")
        if self.lam1 < 0 or self.lam2 < 0:
            raise SwodtError("regularization weights must be nonnegative")
        if self.variant == "wodt" and (self.lam1 or self.lam2):
            raise SwodtError("WODT is unregularized (lam1 = lam2 = 0)")
        if self.variant == "swodtl" and self.lam2:
            raise SwodtError("SWODTL uses lasso only (lam2 = 0)")
        self.owlqn.validate()

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Leaf:
    label: int
    counts: tuple
    id: int = -1

    @property
    def is_leaf(self):
        return True


@dataclass
class Internal:
    theta: np.ndarray  # raw feature units
    left: object
    right: object
    counts: tuple
    udt_fallback: bool = False

    @property
    def is_leaf(self):
        return False


def _majority(counts):
    # Ties go to class 0 (insecure).
    return int(np.argmax(counts))


def _entropy_counts(counts):
    """``n H`` (base 2) for count arrays along the last axis."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(n > 0, n * np.log2(np.where(n > 0, n, 1.0)), 0.0)
        t2 = np.where(counts > 0, counts * np.log2(np.where(counts > 0, counts, 1.0)), 0.0).sum(axis=-1)
    return t1 - t2


def udt_best_split(samples, labels, offset_index=-1, n_classes=2):
    """Best axis-aligned split by hard-split weighted entropy.

    Candidate thresholds are midpoints of consecutive distinct values. Ties
    go to the lowest feature index, then the lowest threshold. Returns
    ``theta0`` with ``theta0 @ p < 0  <=>  p[j] < t``, or ``None`` when no
    split lowers the impurity.
    """
    X = np.asarray(samples, dtype=float)
    y = np.asarray(labels, dtype=int)
    n, dim = X.shape
    off = offset_index % dim
    if n < 2:
        return None
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    total = onehot.sum(axis=0)
    parent = _entropy_counts(total)
    tol = 1e-12 * max(1.0, n)
    best = (parent - tol, -1, 0.0)
    for j in range(dim):
        if j == off:
            continue
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cum = np.cumsum(onehot[order], axis=0)[:-1]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        imp = _entropy_counts(cum) + _entropy_counts(total - cum)
        imp = np.where(valid, imp, np.inf)
        i = int(np.argmin(imp))
        if imp[i] < best[0] - tol:
            best = (imp[i], j, 0.5 * (xs[i] + xs[i + 1]))
    if best[1] < 0:
        return None
    theta = np.zeros(dim)
    theta[best[1]] = 1.0
    theta[off] = -best[2]
    return theta


def _split_is_zero(theta, off):
    mask = np.ones(theta.size, dtype=bool)
    mask[off] = False
    return float(np.max(np.abs(theta[mask]), initial=0.0)) < ZERO_TOL


def sparse_subtree(X_scaled, X_raw, y, depth, cfg, scaling, hook=None, offset_index=-1):
    """Recursive node construction.

    ``depth`` is the 1-based depth of the node being built; splitting stops
    when the node holds ``<= cfg.min_split`` samples, ``depth > cfg.depth``,
    the node is pure, no univariate split helps, or the fitted hard split
    sends every sample to one side.
    """
    counts = np.bincount(y, minlength=2)
    leaf = Leaf(_majority(counts), tuple(int(c) for c in counts))
    if len(y) <= cfg.min_split or depth > cfg.depth:
        return leaf
    if np.count_nonzero(counts) == 1:
        return leaf
    off = offset_index % X_scaled.shape[1]
    theta0 = udt_best_split(X_scaled, y, offset_index=off)
    if theta0 is None:
        return leaf
    fallback = False
    if cfg.variant == "udt":
        theta = theta0
    else:
        obj = NodeObjective(X_scaled, y, cfg.lam1, cfg.lam2, offset_index=off)
        res = minimize(obj, theta0, cfg.owlqn, record=hook is not None)
        if hook is not None:
            hook(depth, len(y), obj, res)
        theta = res.theta
        if _split_is_zero(theta, off):
            theta, fallback = theta0, True
    raw = scaling.unscale_theta(theta, off)
    go_left = X_raw @ raw < 0
    n_left = int(go_left.sum())
    if n_left == 0 or n_left == len(y):
        return leaf
    left = sparse_subtree(X_scaled[go_left], X_raw[go_left], y[go_left], depth + 1, cfg, scaling, hook, off)
    right = sparse_subtree(X_scaled[~go_left], X_raw[~go_left], y[~go_left], depth + 1, cfg, scaling, hook, off)
    return Internal(raw, left, right, leaf.counts, fallback)


def _walk(node, depth=0):
    yield node, depth
    if not node.is_leaf:
        yield from _walk(node.left, depth + 1)
        yield from _walk(node.right, depth + 1)


@dataclass
class TreeModel:
    root: object
    feature_names: list
    config: TrainConfig
    scaling: Scaling | None = None
    train_accuracy: float = float("nan")

    def __post_init__(self):
        leaf_id = 0
        for node, _ in _walk(self.root):
            if node.is_leaf:
                node.id = leaf_id
                leaf_id += 1

    @property
    def dim(self):
        return len(self.feature_names)

    @property
    def depth(self):
        return max(d for _, d in _walk(self.root))

    @property
    def leaves(self):
        return [n for n, _ in _walk(self.root) if n.is_leaf]

    @property
    def internal_nodes(self):
        return [n for n, _ in _walk(self.root) if not n.is_leaf]

    @property
    def n_leaves(self):
        return len(self.leaves)

    @property
    def sparsity(self):
        """Fraction of nonzero split parameters over all internal nodes."""
        nodes = self.internal_nodes
        if not nodes:
            return 0.0
        nz = sum(int(np.count_nonzero(n.theta)) for n in nodes)
        return nz / (len(nodes) * self.dim)

    @property
    def n_fallbacks(self):
        return sum(1 for n in self.internal_nodes if n.udt_fallback)

    def apply(self, X):
        """Leaf id reached by each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise DatasetError("state has {} features, model expects {}".format(X.shape[1], self.dim))
        out = np.empty(X.shape[0], dtype=int)

        def rec(node, idx):
            if node.is_leaf:
                out[idx] = node.id
                return
            left = X[idx] @ node.theta < 0
            rec(node.left, idx[left])
            rec(node.right, idx[~left])

        rec(self.root, np.arange(X.shape[0]))
        return out

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        labels = np.array([leaf.label for leaf in self.leaves], dtype=int)
        out = labels[self.apply(X)]
        return int(out[0]) if X.ndim == 1 else out

    # persistence -------------------------------------------------------------
    def to_dict(self):
        def enc(node):
            if node.is_leaf:
                return {"leaf": node.id, "label": node.label, "counts": list(node.counts)}
            nz = np.flatnonzero(node.theta)
            return {
                "theta": [[int(i), float(node.theta[i])] for i in nz],
                "counts": list(node.counts),
                "udt_fallback": node.udt_fallback,
                "left": enc(node.left),
                "right": enc(node.right),
            }

        return {
            "format": "swodt-model/1",
            "feature_names": list(self.feature_names),
            "config": self.config.to_dict(),
            "scaling": self.scaling.to_dict() if self.scaling is not None else None,
            "train_accuracy": self.train_accuracy,
            "depth": self.depth,
            "n_leaves": self.n_leaves,
            "sparsity": self.sparsity,
            "root": enc(self.root),
        }

    @classmethod
    def from_dict(cls, data):
        dim = len(data["feature_names"])

        def dec(d):
            if "leaf" in d:
                return Leaf(int(d["label"]), tuple(d["counts"]))
            theta = np.zeros(dim)
            for i, v in d["theta"]:
                theta[int(i)] = float(v)
            return Internal(theta, dec(d["left"]), dec(d["right"]), tuple(d["counts"]), bool(d.get("udt_fallback")))

        try:
            scaling = Scaling.from_dict(data["scaling"]) if data.get("scaling") else None
            return cls(dec(data["root"]), list(data["feature_names"]),
                       TrainConfig.from_dict(data["config"]), scaling, float(data.get("train_accuracy", "nan")))
        except (KeyError, TypeError, ValueError) as exc:
            raise SwodtError("malformed model file: {}".format(exc)) from exc

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"


def fit_tree(ds, cfg=None, hook=None):
    """Train a tree on a :class:`~swodt.datagen.LabeledDataset`.

    ``hook(depth, n_samples, objective, result)`` is called after every
    node optimization (and switches on per-step recording).
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    X_raw = np.asarray(ds.X, dtype=float)
    y = np.asarray(ds.y, dtype=int)
    if len(y) == 0:
        raise DatasetError("empty training set")
    scaling = Scaling.fit(X_raw) if cfg.scale else Scaling.identity(X_raw.shape[1])
    X_scaled = scaling.apply(X_raw)
    root = sparse_subtree(X_scaled, X_raw, y, 1, cfg, scaling, hook)
    model = TreeModel(root, list(ds.feature_names), cfg, scaling if cfg.scale else None)
    model.train_accuracy = float(np.mean(model.predict(X_raw) == y))
    return model


def load_model(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SwodtError("cannot read model {}: {}".format(path, exc)) from exc
    return TreeModel.from_dict(data)
