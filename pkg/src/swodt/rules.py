"""Rule-matrix extraction from a trained tree and Big-M assembly.

Each secure leaf yields a matrix ``R`` whose rows are ``k * theta`` for the
splits on its root path (``k = -1`` when the path goes left, ``+1`` right),
so that ``R p >= 0`` describes the leaf region with closed half-spaces.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import RuleError

SECURE = 1


@dataclass
class RuleMatrix:
    rows: np.ndarray  # [depth x dim]
    leaf_id: int

    @property
    def depth(self):
        return self.rows.shape[0]

    def satisfied(self, X, tol=0.0):
        """Boolean per state: ``R p >= -tol`` holds row-wise."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.rows.shape[0] == 0:
            return np.ones(X.shape[0], dtype=bool)
        return (X @ self.rows.T >= -tol).all(axis=1)


@dataclass
class RuleSet:
    rules: list
    feature_names: list
    big_M: np.ndarray | None = None

    @property
    def G(self):
        return len(self.rules)

    @property
    def dim(self):
        return len(self.feature_names)

    @property
    def sparsity(self):
        """Fraction of nonzero entries over all rule-matrix rows."""
        total = sum(r.rows.size for r in self.rules)
        if total == 0:
            return 0.0
        return sum(int(np.count_nonzero(r.rows)) for r in self.rules) / total

    def n_satisfied(self, X, tol=0.0):
        """Number of rules each state satisfies."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        counts = np.zeros(X.shape[0], dtype=int)
        for r in self.rules:
            counts += r.satisfied(X, tol)
        return counts

    def to_dict(self):
        return {
            "format": "swodt-rules/1",
            "feature_names": list(self.feature_names),
            "rules": [
                {
                    "leaf_id": r.leaf_id,
                    "rows": [[[int(i), float(row[i])] for i in np.flatnonzero(row)] for row in r.rows],
                }
                for r in self.rules
            ],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            names = list(data["feature_names"])
            dim = len(names)
            rules = []
            for r in data["rules"]:
                rows = np.zeros((len(r["rows"]), dim))
                for j, row in enumerate(r["rows"]):
                    for i, v in row:
                        rows[j, int(i)] = float(v)
                rules.append(RuleMatrix(rows, int(r["leaf_id"])))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise RuleError("malformed rules file: {}".format(exc)) from exc
        return cls(rules, names)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"


def load_rules(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise RuleError("cannot read rules {}: {}".format(path, exc)) from exc
    return RuleSet.from_dict(data)


def extract_rules(model):
    """Collect one :class:`RuleMatrix` per leaf labeled secure."""
    rules = []
    stack = []

    def visit(node):
        if node.is_leaf:
            if node.label == SECURE:
                rows = np.array(stack) if stack else np.zeros((0, model.dim))
                rules.append(RuleMatrix(rows, node.id))
            return
        for k, child in ((-1.0, node.left), (1.0, node.right)):
            stack.append(k * node.theta)
            visit(child)
            stack.pop()

    visit(model.root)
    if not rules:
        warnings.warn("tree has no secure leaf; rule set is empty", stacklevel=2)
    return RuleSet(rules, list(model.feature_names))


@dataclass
class BigMSystem:
    """Rows ``a_j . p >= -M_j (1 - I_{rule_j})`` plus ``sum(I) = 1``."""

    A: np.ndarray  # stacked rule rows [n_rows x dim]
    M: np.ndarray  # per-row Big-M
    rule_of_row: np.ndarray
    G: int
    margin: float = 1.0
    row_min: np.ndarray = field(default=None, repr=False)

    def satisfied(self, p, indicators, tol=1e-9):
        p = np.asarray(p, dtype=float)
        I = np.asarray(indicators, dtype=float)
        lhs = self.A @ p
        rhs = -self.M * (1.0 - I[self.rule_of_row])
        return bool((lhs >= rhs - tol).all())


def interval_min(rows, lower, upper):
    """Minimum of each ``row . p`` over the box ``lower <= p <= upper``."""
    rows = np.atleast_2d(rows)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    with np.errstate(invalid="ignore"):
        cand = np.minimum(rows * lo, rows * hi)
    cand[rows == 0] = 0.0
    return cand.sum(axis=1)


def big_m_system(rs, lower, upper, margin=1.0):
    """Big-M constants by interval arithmetic over a per-feature box.

    ``M_j = max(0, -min_box(a_j . p)) + margin``: the smallest constant that
    deactivates row j for every point of the box, plus a safety margin.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != (rs.dim,) or upper.shape != (rs.dim,):
        raise RuleError("box bounds must have one entry per feature")
    if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
        raise RuleError("Big-M needs finite bounds on every feature")
    if (lower > upper).any():
        raise RuleError("box lower bound exceeds upper bound")
    blocks = [r.rows for r in rs.rules]
    A = np.vstack(blocks) if blocks and sum(b.shape[0] for b in blocks) else np.zeros((0, rs.dim))
    owner = np.concatenate([np.full(b.shape[0], i) for i, b in enumerate(blocks)]) if blocks else np.zeros(0)
    mins = interval_min(A, lower, upper) if A.shape[0] else np.zeros(0)
    M = np.maximum(0.0, -mins) + margin
    rs.big_M = M
    return BigMSystem(A, M, owner.astype(int), rs.G, margin, mins)
