"""Linear programs: container, two-phase dense simplex, LP-file writer.

The solver is a textbook tableau simplex. Problems are brought to the
standard form ``min c'z, Az = b, z >= 0`` (bounds shifted or turned into
rows, free variables split), phase 1 drives artificials out of the basis
and phase 2 optimizes the real objective. Dantzig pricing is used first;
after ``bland_after`` pivots the solver switches to Bland's rule so that
degenerate cycling cannot stall it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LPError

LE, GE, EQ = "<=", ">=", "="
_RELATIONS = (LE, GE, EQ)

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11


@dataclass
class Constraint:
    coeffs: dict  # variable index -> coefficient
    relation: str
    rhs: float
    name: str = ""


@dataclass
class LinearProgram:
    """A minimization LP over named, bounded variables."""

    names: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    binary: set = field(default_factory=set)

    @property
    def n_vars(self):
        return len(self.names)

    def add_variable(self, name, lower=0.0, upper=math.inf, cost=0.0, binary=False):
        if lower > upper:
            raise LPError("variable {}: lower bound {} > upper bound {}".format(name, lower, upper))
        self.names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.cost.append(float(cost))
        idx = len(self.names) - 1
        if binary:
            self.binary.add(idx)
        return idx

    def add_constraint(self, coeffs, relation, rhs, name=""):
        if relation not in _RELATIONS:
            raise LPError("unknown relation {!r}".format(relation))
        if isinstance(coeffs, dict):
            row = {int(k): float(v) for k, v in coeffs.items() if v != 0.0}
        else:
            arr = np.asarray(coeffs, dtype=float)
            if arr.shape != (self.n_vars,):
                raise LPError("dense row has length {}, expected {}".format(arr.size, self.n_vars))
            row = {int(j): float(arr[j]) for j in np.flatnonzero(arr)}
        for j in row:
            if not 0 <= j < self.n_vars:
                raise LPError("constraint {!r} references unknown variable {}".format(name, j))
        self.constraints.append(Constraint(row, relation, float(rhs), name))

    def copy(self):
        return LinearProgram(
            list(self.names),
            list(self.lower),
            list(self.upper),
            list(self.cost),
            [Constraint(dict(c.coeffs), c.relation, c.rhs, c.name) for c in self.constraints],
            set(self.binary),
        )

    def dense(self):
        """Return ``(A, relations, rhs)`` with A as a dense matrix."""
        A = np.zeros((len(self.constraints), self.n_vars))
        for i, con in enumerate(self.constraints):
            for j, v in con.coeffs.items():
                A[i, j] = v
        rel = [c.relation for c in self.constraints]
        rhs = np.array([c.rhs for c in self.constraints], dtype=float)
        return A, rel, rhs

    def objective_value(self, x):
        return float(np.dot(self.cost, x))

    def max_violation(self, x):
        """Largest bound or row violation at ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        viol = max(0.0, float(np.max(np.asarray(self.lower) - x, initial=0.0)),
                   float(np.max(x - np.asarray(self.upper), initial=0.0)))
        if self.constraints:
            A, rel, rhs = self.dense()
            lhs = A @ x
            for r, a, b in zip(rel, lhs, rhs):
                if r == LE:
                    viol = max(viol, a - b)
                elif r == GE:
                    viol = max(viol, b - a)
                else:
                    viol = max(viol, abs(a - b))
        return viol


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float
    iterations: int

    @property
    def optimal(self):
        return self.status == "optimal"


def _standard_form(lp):
    """Map ``lp`` to ``min c'z  s.t.  Az = b, z >= 0``.

    Returns the standard-form data and a recovery map ``x = T z + t``.
    """
    n = lp.n_vars
    lo = np.asarray(lp.lower, dtype=float)
    hi = np.asarray(lp.upper, dtype=float)
    c = np.asarray(lp.cost, dtype=float)
    A, rel, rhs = lp.dense() if lp.constraints else (np.zeros((0, n)), [], np.zeros(0))

    # Column transform: x_j = shift_j + sum_k T[j, k] z_k.
    cols = []  # (var index, sign)
    shift = np.zeros(n)
    extra_rows = []  # (col index, ub) meaning z_col <= ub
    for j in range(n):
        if np.isfinite(lo[j]):
            shift[j] = lo[j]
            cols.append((j, 1.0))
            if np.isfinite(hi[j]):
                extra_rows.append((len(cols) - 1, hi[j] - lo[j]))
        elif np.isfinite(hi[j]):
            shift[j] = hi[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nz = len(cols)
    T = np.zeros((n, nz))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s

    rows_A = A @ T if A.size else np.zeros((0, nz))
    rows_b = rhs - (A @ shift if A.size else 0.0)
    rows_rel = list(rel)
    for k, ub in extra_rows:
        row = np.zeros(nz)
        row[k] = 1.0
        rows_A = np.vstack([rows_A, row])
        rows_b = np.append(rows_b, ub)
        rows_rel.append(LE)

    m = rows_A.shape[0]
    n_slack = sum(1 for r in rows_rel if r != EQ)
    std_A = np.zeros((m, nz + n_slack))
    std_A[:, :nz] = rows_A
    s = nz
    slack_col = [-1] * m
    for i, r in enumerate(rows_rel):
        if r == LE:
            std_A[i, s] = 1.0
            slack_col[i] = s
            s += 1
        elif r == GE:
            std_A[i, s] = -1.0
            slack_col[i] = s
            s += 1
    std_b = np.array(rows_b, dtype=float)
    std_c = np.zeros(nz + n_slack)
    std_c[:nz] = c @ T
    const = float(c @ shift)
    return std_A, std_b, std_c, const, T, shift, slack_col


class _Tableau:
    def __init__(self, A, b, basis, bland_after, max_iter):
        m, n = A.shape
        self.m, self.n = m, n
        self.T = np.zeros((m + 1, n + 1))
        self.T[:m, :n] = A
        self.T[:m, n] = b
        self.basis = list(basis)
        self.iterations = 0
        self.bland_after = bland_after
        self.max_iter = max_iter

    def set_objective(self, c):
        n = self.n
        self.T[-1, :n] = c
        self.T[-1, n] = 0.0
        for i, j in enumerate(self.basis):
            if self.T[-1, j] != 0.0:
                self.T[-1, :] -= self.T[-1, j] * self.T[i, :]

    def pivot(self, r, col):
        T = self.T
        T[r, :] /= T[r, col]
        piv_row = T[r, :]
        factors = T[:, col].copy()
        factors[r] = 0.0
        T -= np.outer(factors, piv_row)
        T[:, col] = 0.0
        T[r, col] = 1.0
        self.basis[r] = col
        self.iterations += 1

    def run(self, allowed):
        """Iterate to optimality over ``allowed`` columns.

        Returns "optimal" or "unbounded".
        """
        T = self.T
        m, n = self.m, self.n
        start = self.iterations
        while True:
            if self.iterations - start > self.max_iter:
                raise LPError("simplex stalled", self.iterations)
            red = T[-1, :n]
            cand = np.flatnonzero((red < -OPT_TOL) & allowed)
            if cand.size == 0:
                return "optimal"
            if self.iterations < self.bland_after:
                col = int(cand[np.argmin(red[cand])])
            else:
                col = int(cand[0])
            colv = T[:m, col]
            pos = colv > PIVOT_TOL
            if not pos.any():
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = T[:m, n][pos] / colv[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + FEAS_TOL * max(1.0, abs(best)))
            if self.iterations < self.bland_after:
                # Prefer the largest pivot among tied rows for stability.
                r = int(ties[np.argmax(colv[ties])])
            else:
                r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, col)


def solve_lp(lp, bland_after=1000, max_iter=50000):
    """Solve ``lp`` with the two-phase simplex.

    Parameters
    ----------
    lp : LinearProgram
    bland_after : int
        Pivot count after which Dantzig pricing is replaced by Bland's rule.
    max_iter : int
        Per-phase pivot cap; exceeding it raises :class:`LPError`.

    Returns
    -------
    LPResult
    """
    A, b, c, const, Tmap, shift, slack_col = _standard_form(lp)
    m, n = A.shape
    # Quick rejection of bound-only infeasibility is handled by add_variable.
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    basis = []
    art_rows = []
    for i in range(m):
        sc = slack_col[i]
        if sc >= 0 and A[i, sc] == 1.0:
            basis.append(sc)
        else:
            basis.append(-1)
            art_rows.append(i)
    n_art = len(art_rows)
    A_full = np.hstack([A, np.zeros((m, n_art))])
    for k, i in enumerate(art_rows):
        A_full[i, n + k] = 1.0
        basis[i] = n + k
    tab = _Tableau(A_full, b, basis, bland_after, max_iter)
    n_all = n + n_art

    if n_art:
        c1 = np.zeros(n_all)
        c1[n:] = 1.0
        tab.set_objective(c1)
        tab.run(np.ones(n_all, dtype=bool))
        if -tab.T[-1, -1] > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LPResult("infeasible", None, math.nan, tab.iterations)
        # Drive remaining artificials out of the basis.
        for i in range(m):
            if tab.basis[i] >= n:
                row = tab.T[i, :n]
                nzc = np.flatnonzero(np.abs(row) > 1e-9)
                if nzc.size:
                    tab.pivot(i, int(nzc[0]))
    allowed = np.zeros(n_all, dtype=bool)
    allowed[:n] = True
    c2 = np.zeros(n_all)
    c2[:n] = c
    tab.set_objective(c2)
    status = tab.run(allowed)
    if status == "unbounded":
        return LPResult("unbounded", None, -math.inf, tab.iterations)

    z = np.zeros(n_all)
    for i, j in enumerate(tab.basis):
        z[j] = tab.T[i, -1]
    x = Tmap @ z[: Tmap.shape[1]] + shift
    return LPResult("optimal", x, float(np.dot(lp.cost, x)), tab.iterations)


def _fmt(v):
    return repr(float(v))


def _lp_name(name):
    return "".join(ch if ch.isalnum() or ch in "_.[]" else "_" for ch in name)


def _terms(coeffs, names):
    parts = []
    for j in sorted(coeffs):
        v = coeffs[j]
        sign = "-" if v < 0 else "+"
        parts.append("{} {} {}".format(sign, _fmt(abs(v)), _lp_name(names[j])))
    if not parts:
        return "0 {}".format(_lp_name(names[0]))
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def write_lp_file(lp, comment=""):
    """Render ``lp`` in CPLEX LP text format (deterministic output)."""
    names = lp.names
    lines = []
    if comment:
        for c in comment.splitlines():
            lines.append("\\ " + c)
    lines.append("Minimize")
    obj = {j: v for j, v in enumerate(lp.cost) if v != 0.0}
    lines.append(" obj: " + _terms(obj, names))
    lines.append("Subject To")
    for i, con in enumerate(lp.constraints):
        label = _lp_name(con.name) if con.name else "c{}".format(i)
        lines.append(" {}: {} {} {}".format(label, _terms(con.coeffs, names), con.relation, _fmt(con.rhs)))
    lines.append("Bounds")
    for j, nm in enumerate(names):
        if j in lp.binary:
            continue
        lo, hi = lp.lower[j], lp.upper[j]
        nm = _lp_name(nm)
        if math.isinf(lo) and math.isinf(hi):
            lines.append(" {} free".format(nm))
        elif math.isinf(hi):
            lines.append(" {} >= {}".format(nm, _fmt(lo)))
        elif math.isinf(lo):
            lines.append(" -inf <= {} <= {}".format(nm, _fmt(hi)))
        else:
            lines.append(" {} <= {} <= {}".format(_fmt(lo), nm, _fmt(hi)))
    if lp.binary:
        lines.append("Binary")
        for j in sorted(lp.binary):
            lines.append(" " + _lp_name(names[j]))
    lines.append("End")
    return "\n".join(lines) + "\n"
