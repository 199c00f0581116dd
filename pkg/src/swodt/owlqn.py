"""Modified orthant-wise limited-memory quasi-Newton (OWL-QN) solver.

Minimizes ``f(theta) + sum_i lam_i |theta_i|`` for any smooth ``f``. The
objective object must expose ``smooth(theta) -> (f, grad)`` and an array
``l1_weights`` (zero entries mark unpenalized coordinates).

Each iteration:

1. pseudo-gradient ``pg`` and steepest pseudo-descent ``v = -pg``;
2. if curvature pairs are stored, ``d = H v`` by the two-loop recursion and
   penalized components whose sign disagrees with ``v`` are zeroed; with no
   usable history the step falls back to ``q = v``;
3. backtracking ``alpha = beta**m`` with every trial projected onto the
   orthant fixed at the start of the iteration, accepted once
   ``E(new) <= E(old) - gamma * v.(new - old)``;
4. curvature pair ``(s, y)`` stored only if ``s.y > eps``.

Unpenalized coordinates are neither constrained nor projected, so with all
weights zero the iterates are those of plain L-BFGS with the same line
search.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import OptimizerError
from .objective import pseudo_gradient

CONVERGED_GRAD = "converged_grad"
CONVERGED_OBJ = "converged_obj"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAILURE = "line_search_failure"


@dataclass
class OwlqnConfig:
    max_iters: int = 200
    memory: int = 10
    eps: float = 1e-10
    beta: float = 0.5
    gamma: float = 1e-4
    tol_grad: float = 1e-6
    tol_obj: float = 1e-9
    max_backtracks: int = 50

    def validate(self):
        if self.max_iters < 1 or self.memory < 1 or self.max_backtracks < 1:
            raise OptimizerError("max_iters, memory and max_backtracks must be positive")
        if not 0 < self.beta < 1 or not 0 < self.gamma < 1:
            raise OptimizerError("beta and gamma must lie in (0, 1)")
        if self.eps <= 0 or self.tol_grad <= 0 or self.tol_obj < 0:
            raise OptimizerError("tolerances must be positive")

    @classmethod
    def from_dict(cls, d):
        cfg = cls(**(d or {}))
        cfg.validate()
        return cfg


@dataclass
class IterationRecord:
    """One accepted step; kept only when ``record=True``."""

    theta: np.ndarray
    theta_next: np.ndarray
    orthant: np.ndarray
    v: np.ndarray
    q: np.ndarray
    alpha: float
    value: float
    value_next: float
    used_history: bool


@dataclass
class OwlqnResult:
    theta: np.ndarray
    value: float
    status: str
    iterations: int
    trace: list = field(default_factory=list)  # (E, |pg|_inf) per iterate
    steps: list = field(default_factory=list)


def project_orthant(point, orthant):
    """Keep components whose sign matches ``orthant``; zero the rest."""
    point = np.asarray(point, dtype=float)
    return np.where(np.sign(point) == np.sign(orthant), point, 0.0)


def select_orthant(theta, pseudo_grad):
    """Sign of ``theta``, or of ``-pseudo_grad`` where ``theta`` is 0."""
    theta = np.asarray(theta, dtype=float)
    return np.where(theta != 0, np.sign(theta), np.sign(-np.asarray(pseudo_grad, dtype=float)))


def constrain_direction(d, v):
    """Zero components of ``d`` whose sign differs from ``v``."""
    return np.where(np.sign(d) == np.sign(v), d, 0.0)


def two_loop(v, S, Y):
    """L-BFGS product ``H v`` from curvature pairs (oldest first)."""
    q = np.array(v, dtype=float)
    rho = [1.0 / float(y @ s) for s, y in zip(S, Y)]
    alphas = []
    for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
        a = r * float(s @ q)
        alphas.append(a)
        q -= a * y
    s, y = S[-1], Y[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, r), a in zip(zip(S, Y, rho), reversed(alphas)):
        b = r * float(y @ q)
        q += (a - b) * s
    return q


def _check(value, what):
    if not math.isfinite(value):
        raise OptimizerError("objective returned a non-finite {}".format(what))


def minimize(obj, theta0, cfg=None, record=False):
    """Run the modified OWL-QN from ``theta0``.

    Returns
    -------
    OwlqnResult
        ``status`` is one of ``converged_grad``, ``converged_obj``,
        ``max_iters`` or ``line_search_failure`` (the last accepted point is
        returned in that case).
    """
    cfg = cfg or OwlqnConfig()
    cfg.validate()
    theta = np.array(theta0, dtype=float)
    if not np.isfinite(theta).all():
        raise OptimizerError("initial point is not finite")
    lam = np.broadcast_to(np.asarray(obj.l1_weights, dtype=float), theta.shape)
    penalized = lam > 0

    f, g = obj.smooth(theta)
    E = f + float(lam @ np.abs(theta))
    _check(E, "value")
    S, Y = deque(maxlen=cfg.memory), deque(maxlen=cfg.memory)
    trace, steps = [], []
    status = MAX_ITERS
    k = 0
    for k in range(cfg.max_iters):
        pg = pseudo_gradient(g, theta, lam)
        pg_norm = float(np.max(np.abs(pg), initial=0.0))
        trace.append((E, pg_norm))
        if pg_norm <= cfg.tol_grad:
            status = CONVERGED_GRAD
            break
        v = -pg
        used = bool(S)
        if used:
            d = two_loop(v, list(S), list(Y))
            q = np.where(penalized, constrain_direction(d, v), d)
            if float(v @ q) <= 0.0:
                q, used = v, False
        else:
            q = v
        xi = select_orthant(theta, pg)

        alpha = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            trial = theta + alpha * q
            trial = np.where(penalized, project_orthant(trial, xi), trial)
            f_new, g_new = obj.smooth(trial)
            E_new = f_new + float(lam @ np.abs(trial))
            _check(E_new, "value")
            if E_new <= E - cfg.gamma * float(v @ (trial - theta)):
                accepted = True
                break
            alpha *= cfg.beta
        if not accepted:
            status = LINE_SEARCH_FAILURE
            break
        if record:
            steps.append(IterationRecord(theta.copy(), trial.copy(), xi, v, q, alpha, E, E_new, used))
        s = trial - theta
        y = g_new - g
        if abs(E - E_new) <= cfg.tol_obj * max(1.0, abs(E)):
            theta, g, E = trial, g_new, E_new
            trace.append((E, float(np.max(np.abs(pseudo_gradient(g, theta, lam)), initial=0.0))))
            status = CONVERGED_OBJ
            k += 1
            break
        if float(s @ y) > cfg.eps:
            S.append(s)
            Y.append(y)
        theta, g, E = trial, g_new, E_new
    else:
        k = cfg.max_iters
        trace.append((E, float(np.max(np.abs(pseudo_gradient(g, theta, lam)), initial=0.0))))
    return OwlqnResult(theta, E, status, k, trace, steps)
