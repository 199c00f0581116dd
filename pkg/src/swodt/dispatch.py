"""Security-constrained economic dispatch with embedded tree rules.

The Big-M program selects exactly one secure leaf through binary
indicators, so its optimum equals the cheapest of the per-leaf LPs
``base ED + R_i (A x + b) >= 0``. :func:`secure_dispatch` solves those LPs
one by one; :func:`build_big_m_lp` produces the equivalent MILP for
external solvers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .datagen import SamplerConfig, Scenario, feature_names_for, sample_scenarios
from .errors import DispatchError
from .grid import base_flows, build_ed_lp, bus_injections, n1_secure
from .lp import EQ, GE, solve_lp
from .rules import big_m_system, extract_rules, interval_min

OPTIMAL = "optimal"
ALL_RULES_INFEASIBLE = "all_rules_infeasible"
ED_INFEASIBLE = "ed_infeasible"


@dataclass
class FeatureMap:
    """Affine map ``p = A x + b`` from ED variables to the state vector.

    ``x`` is (dispatchable outputs, renewable curtailments); ``p`` follows
    the training feature order (g, r, l, d, 1).
    """

    A: np.ndarray
    b: np.ndarray
    feature_names: list

    @classmethod
    def build(cls, spec, net, scenario):
        r = np.asarray(scenario.renewable_MW, dtype=float)
        d = np.asarray(scenario.load_MW, dtype=float)
        nd, nr, nl = len(spec.dispatchable), len(spec.renewables), spec.n_branches
        load_idx = [i for i, b in enumerate(spec.buses) if b.load_MW > 0]
        Cg = spec.incidence("dispatchable")
        Cr = spec.incidence("renewable")
        dim = nd + nr + nl + len(load_idx) + 1
        A = np.zeros((dim, nd + nr))
        b = np.zeros(dim)
        A[:nd, :nd] = np.eye(nd)
        A[nd:nd + nr, nd:] = -np.eye(nr)
        b[nd:nd + nr] = r
        s = nd + nr
        A[s:s + nl, :nd] = net.ptdf @ Cg
        A[s:s + nl, nd:] = -(net.ptdf @ Cr)
        b[s:s + nl] = net.ptdf @ (Cr @ r - d)
        b[s + nl:s + nl + len(load_idx)] = d[load_idx]
        b[-1] = 1.0
        return cls(A, b, feature_names_for(spec))

    def features(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.b

    def check(self, ruleset):
        if list(ruleset.feature_names) != list(self.feature_names):
            raise DispatchError("rule features do not match the grid's feature order")


@dataclass
class DispatchResult:
    status: str
    x: np.ndarray | None
    cost: float
    active_leaf: int | None
    features: np.ndarray | None = None
    leaf_status: dict = field(default_factory=dict)
    solve_seconds: float = 0.0


def solve_ed(spec, net, scenario):
    lp, _ = build_ed_lp(spec, net, scenario.renewable_MW, scenario.load_MW, scenario.cost_scale)
    return solve_lp(lp)


def secure_dispatch(spec, net, ruleset, scenario, fmap=None):
    """Cheapest dispatch satisfying at least one secure-leaf rule.

    Ties in cost go to the lowest leaf id. Returns status
    ``all_rules_infeasible`` when no leaf LP is feasible.
    """
    if ruleset.G == 0:
        raise DispatchError("rule set is empty; nothing to embed")
    fmap = fmap or FeatureMap.build(spec, net, scenario)
    fmap.check(ruleset)
    t0 = time.perf_counter()
    base, _ = build_ed_lp(spec, net, scenario.renewable_MW, scenario.load_MW, scenario.cost_scale)
    best = None
    statuses = {}
    for rule in ruleset.rules:
        lp = base.copy()
        rows_x = rule.rows @ fmap.A
        consts = rule.rows @ fmap.b
        for j in range(rule.depth):
            lp.add_constraint(rows_x[j], GE, -consts[j], "rule{}_{}".format(rule.leaf_id, j))
        res = solve_lp(lp)
        statuses[rule.leaf_id] = res.status
        if res.optimal:
            key = (res.objective, rule.leaf_id)
            if best is None or key < best[0]:
                best = (key, res.x)
    elapsed = time.perf_counter() - t0
    if best is None:
        return DispatchResult(ALL_RULES_INFEASIBLE, None, float("nan"), None, None, statuses, elapsed)
    (cost, leaf), x = best
    return DispatchResult(OPTIMAL, x, cost, leaf, fmap.features(x), statuses, elapsed)


def feature_box(spec, net, scenario, fmap=None):
    """Per-feature bounds implied by the ED variable bounds."""
    fmap = fmap or FeatureMap.build(spec, net, scenario)
    lp, _ = build_ed_lp(spec, net, scenario.renewable_MW, scenario.load_MW, scenario.cost_scale)
    lo = np.asarray(lp.lower)
    hi = np.asarray(lp.upper)
    low = fmap.b + interval_min(fmap.A, lo, hi)
    high = fmap.b - interval_min(-fmap.A, lo, hi)
    return low, high


def build_big_m_lp(spec, net, ruleset, scenario, margin=1.0, include_sum=True):
    """Big-M MILP: base ED plus indicator-switched rule rows."""
    if ruleset.G == 0:
        raise DispatchError("rule set is empty; nothing to embed")
    fmap = FeatureMap.build(spec, net, scenario)
    fmap.check(ruleset)
    lp, _ = build_ed_lp(spec, net, scenario.renewable_MW, scenario.load_MW, scenario.cost_scale)
    n_x = lp.n_vars
    low, high = feature_box(spec, net, scenario, fmap)
    system = big_m_system(ruleset, low, high, margin)
    ind = [lp.add_variable("I_leaf{}".format(r.leaf_id), 0.0, 1.0, 0.0, binary=True) for r in ruleset.rules]
    row_x = system.A @ fmap.A
    row_c = system.A @ fmap.b
    for j in range(system.A.shape[0]):
        i = int(system.rule_of_row[j])
        coeffs = np.zeros(lp.n_vars)
        coeffs[:n_x] = row_x[j]
        coeffs[ind[i]] = -system.M[j]
        # a.(Ax+b) >= -M (1 - I)  <=>  a.A x - M I >= -M - a.b
        lp.add_constraint(coeffs, GE, -system.M[j] - row_c[j],
                          "rule_leaf{}_{}".format(ruleset.rules[i].leaf_id, j))
    if include_sum:
        coeffs = np.zeros(lp.n_vars)
        coeffs[ind] = 1.0
        lp.add_constraint(coeffs, EQ, 1.0, "one_leaf")
    return lp, ind


def pin_indicators(lp, indicators, values):
    """Copy of ``lp`` with binary indicators fixed (LP relaxation removed)."""
    out = lp.copy()
    for j, v in zip(indicators, values):
        out.lower[j] = out.upper[j] = float(v)
        out.binary.discard(j)
    return out


def state_is_secure(spec, net, scenario, x):
    nd = len(spec.dispatchable)
    g = x[:nd]
    r = np.asarray(scenario.renewable_MW) - x[nd:]
    flows = base_flows(net, bus_injections(spec, g, r, scenario.load_MW))
    return n1_secure(net, flows)[0]


@dataclass
class SecurityReport:
    n_scenarios: int
    unconstrained: dict
    constrained: dict
    leaf_activations: dict

    def to_dict(self):
        return {
            "n_scenarios": self.n_scenarios,
            "unconstrained": self.unconstrained,
            "constrained": self.constrained,
            "leaf_activations": {str(k): v for k, v in sorted(self.leaf_activations.items())},
        }

    def table(self):
        rows = [("", "unconstrained ED", "rules-constrained ED")]
        u, c = self.unconstrained, self.constrained
        rows.append(("secure states (% of all)", "%.1f" % u["secure_pct"], "%.1f" % c["secure_pct"]))
        rows.append(("secure states (% of feasible)", "%.1f" % u["secure_pct_feasible"], "%.1f" % c["secure_pct_feasible"]))
        rows.append(("infeasible scenarios", str(u["infeasible"]), str(c["infeasible"])))
        rows.append(("mean solve time (s)", "%.4f" % u["mean_seconds"], "%.4f" % c["mean_seconds"]))
        rows.append(("max solve time (s)", "%.4f" % u["max_seconds"], "%.4f" % c["max_seconds"]))
        w = [max(len(r[i]) for r in rows) for i in range(3)]
        return "\n".join("  ".join(cell.ljust(w[i]) for i, cell in enumerate(r)) for r in rows)


def _summary(n, secure, infeasible, times):
    feasible = n - infeasible
    return {
        "secure": secure,
        "infeasible": infeasible,
        "secure_pct": 100.0 * secure / n if n else 0.0,
        "secure_pct_feasible": 100.0 * secure / feasible if feasible else 0.0,
        "mean_seconds": float(np.mean(times)) if times else 0.0,
        "max_seconds": float(np.max(times)) if times else 0.0,
    }


def evaluate_security_rate(spec, net, rules_or_model, n_scenarios=2000, seed=11, sampler=None, scenarios=None):
    """Secure-state percentages of plain vs rule-constrained dispatch over
    fresh scenarios. Infeasible dispatches count as not secure in
    ``secure_pct``. Scenarios are dispatched at nominal costs, so any
    ``cost_jitter`` in ``sampler`` is ignored."""
    ruleset = rules_or_model if hasattr(rules_or_model, "rules") else extract_rules(rules_or_model)
    if scenarios is None:
        sampler = replace(sampler or SamplerConfig(), cost_jitter=0.0)
        scenarios = sample_scenarios(spec, n_scenarios, sampler, seed)
    n = len(scenarios)
    u_sec = u_inf = c_sec = c_inf = 0
    u_t, c_t = [], []
    activations = {r.leaf_id: 0 for r in ruleset.rules}
    for sc in scenarios:
        t0 = time.perf_counter()
        res = solve_ed(spec, net, sc)
        u_t.append(time.perf_counter() - t0)
        if res.optimal:
            u_sec += state_is_secure(spec, net, sc, res.x)
        else:
            u_inf += 1
        sd = secure_dispatch(spec, net, ruleset, sc)
        c_t.append(sd.solve_seconds)
        if sd.status == OPTIMAL:
            activations[sd.active_leaf] += 1
            c_sec += state_is_secure(spec, net, sc, sd.x)
        else:
            c_inf += 1
    return SecurityReport(n, _summary(n, u_sec, u_inf, u_t), _summary(n, c_sec, c_inf, c_t), activations)


def scenario_from_dict(spec, data):
    try:
        r = np.asarray(data["renewable_MW"], dtype=float)
        d = np.asarray(data["load_MW"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DispatchError("malformed scenario: {}".format(exc)) from exc
    if r.shape != (len(spec.renewables),) or d.shape != (spec.n_buses,):
        raise DispatchError("scenario needs {} renewable values and {} bus loads".format(
            len(spec.renewables), spec.n_buses))
    cost = data.get("cost_scale")
    if cost is not None:
        cost = np.asarray(cost, dtype=float)
        if cost.shape != (len(spec.dispatchable),):
            raise DispatchError("cost_scale needs {} entries".format(len(spec.dispatchable)))
    return Scenario(r, d, cost)


def scenario_to_dict(scenario):
    out = {"renewable_MW": [float(v) for v in scenario.renewable_MW],
           "load_MW": [float(v) for v in scenario.load_MW]}
    if scenario.cost_scale is not None:
        out["cost_scale"] = [float(v) for v in scenario.cost_scale]
    return out
