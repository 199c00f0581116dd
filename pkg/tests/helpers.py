"""Small builders shared by the test modules."""

import numpy as np

from swodt.datagen import LabeledDataset, with_offset
from swodt.grid import grid_from_dict


def make_grid(n_buses, branches, generators, loads=None, slack=1, **extra):
    """Grid from compact tuples: branches (from, to, x, rating[, emergency])."""
    loads = loads or {}
    data = {
        "slack_bus": slack,
        "buses": [{"id": i, "load_MW": loads.get(i, 0.0)} for i in range(1, n_buses + 1)],
        "branches": [],
        "generators": generators,
    }
    for br in branches:
        d = {"from": br[0], "to": br[1], "reactance_pu": br[2], "rating_MW": br[3]}
        if len(br) > 4:
            d["emergency_rating_MW"] = br[4]
        data["branches"].append(d)
    data.update(extra)
    return grid_from_dict(data)


def dc_flows(spec, injections, drop=None):
    """Branch flows from a direct solve of the DC power-flow equations.

    Independent of the PTDF code: builds B, fixes the slack angle and
    solves for angles. ``drop`` removes one branch first.
    """
    idx = spec.bus_index()
    branches = [br for k, br in enumerate(spec.branches) if k != drop]
    n = spec.n_buses
    B = np.zeros((n, n))
    for br in branches:
        i, j, b = idx[br.from_bus], idx[br.to_bus], 1.0 / br.reactance_pu
        B[i, i] += b
        B[j, j] += b
        B[i, j] -= b
        B[j, i] -= b
    s = idx[spec.slack_bus_id]
    keep = [i for i in range(n) if i != s]
    ang = np.zeros(n)
    ang[keep] = np.linalg.solve(B[np.ix_(keep, keep)], np.asarray(injections, dtype=float)[keep])
    flows = np.zeros(spec.n_branches)
    for k, br in enumerate(spec.branches):
        if k == drop:
            continue
        flows[k] = (ang[idx[br.from_bus]] - ang[idx[br.to_bus]]) / br.reactance_pu
    return flows


def oblique_dataset(n, seed, dim=40, n_active=3, noise=0.05, margin=0.3):
    """Gaussian features labeled by a sparse oblique hyperplane with label noise."""
    rng = np.random.default_rng(1000 + seed)
    X = rng.standard_normal((n, dim))
    w = np.zeros(dim)
    active = rng.choice(dim, n_active, replace=False)
    w[active] = rng.uniform(0.5, 1.5, n_active) * rng.choice([-1.0, 1.0], n_active)
    y = (X @ w + margin > 0).astype(int)
    flip = rng.random(n) < noise
    y[flip] = 1 - y[flip]
    names = ["x%d" % i for i in range(dim)] + ["const"]
    return LabeledDataset(with_offset(X), y, names)


class Quadratic:
    """``f = 0.5 (t - c)' A (t - c)`` with an L1 weight vector, for optimizer tests."""

    def __init__(self, c, lam1=0.0, A=None, penalize_last=False):
        self.c = np.asarray(c, dtype=float)
        self.A = np.eye(self.c.size) if A is None else np.asarray(A, dtype=float)
        self.l1_weights = np.full(self.c.size, float(lam1))
        if not penalize_last:
            self.l1_weights[-1] = 0.0

    def smooth(self, theta):
        r = np.asarray(theta, dtype=float) - self.c
        g = self.A @ r
        return 0.5 * float(r @ g), g

    def value(self, theta):
        return self.smooth(theta)[0] + float(self.l1_weights @ np.abs(theta))


def reference_lbfgs(fg, x0, cfg):
    """Textbook L-BFGS with Armijo backtracking, no L1 term."""
    x = np.array(x0, float)
    f, g = fg(x)
    S, Y = [], []
    path = [x.copy()]
    for _ in range(cfg.max_iters):
        if np.max(np.abs(g)) <= cfg.tol_grad:
            break
        if S:
            q = g.copy()
            al = []
            for s, y in zip(S[::-1], Y[::-1]):
                a = (s @ q) / (y @ s)
                al.append(a)
                q = q - a * y
            q = q * (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
            for (s, y), a in zip(zip(S, Y), al[::-1]):
                q = q + (a - (y @ q) / (y @ s)) * s
            d = -q
            if -g @ d <= 0:
                d = -g
        else:
            d = -g
        t = 1.0
        for _ in range(cfg.max_backtracks):
            xn = x + t * d
            fn, gn = fg(xn)
            if fn <= f + cfg.gamma * (g @ (xn - x)):
                break
            t *= cfg.beta
        else:
            break
        s, y = xn - x, gn - g
        stop = abs(f - fn) <= cfg.tol_obj * max(1.0, abs(f))
        x, f, g = xn, fn, gn
        path.append(x.copy())
        if stop:
            break
        if s @ y > cfg.eps:
            S.append(s)
            Y.append(y)
            if len(S) > cfg.memory:
                S.pop(0)
                Y.pop(0)
    return x, path
