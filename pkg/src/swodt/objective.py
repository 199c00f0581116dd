"""Soft-split node objective: weighted entropy plus elastic-net penalty.

For a node holding samples ``P`` (rows, last column the constant 1) with
labels ``y`` the split weights ``theta`` route each sample left with weight
``sigmoid(-theta.p)`` and right with ``sigmoid(theta.p)``. The objective is

    E(theta) = (W_L H_L + W_R H_R) / N + lam1 |theta|_1 + lam2 |theta|^2

where ``W_L``, ``W_R`` are summed soft weights and ``H_L``, ``H_R`` the base-2
entropies of the per-class weight fractions on each side. The constant
(offset) coordinate is not penalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_FLOOR = 1e-12
_LN2 = np.log(2.0)


def sigmoid(z):
    """Overflow-safe logistic function."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    ez = np.exp(-np.abs(z))
    out[pos] = 1.0 / (1.0 + ez[pos])
    out[~pos] = ez[~pos] / (1.0 + ez[~pos])
    return out


def soft_weights(theta, p):
    """Left/right routing weights of sample(s) ``p``; they sum to 1."""
    z = np.asarray(p, dtype=float) @ np.asarray(theta, dtype=float)
    w_right = sigmoid(z)
    w_left = sigmoid(-z)
    return w_left, w_right


def _xlog2x(w):
    w = np.asarray(w, dtype=float)
    out = np.zeros_like(w)
    nz = w > 0
    out[nz] = w[nz] * np.log2(w[nz])
    return out


def weighted_entropy(side_class_weights):
    """``W H`` for one side, given its per-class weight sums.

    Uses ``W H = W log2 W - sum_k W^k log2 W^k`` with ``0 log 0 = 0``.
    """
    w = np.asarray(side_class_weights, dtype=float)
    return float(_xlog2x(w.sum()) - _xlog2x(w).sum())


def pseudo_gradient(grad_f, theta, lam1):
    """Orthant-wise pseudo-gradient of ``f + lam1 |theta|_1``.

    ``lam1`` may be a scalar or a per-coordinate vector (0 for unpenalized
    coordinates). Where ``theta_i == 0`` the one-sided derivatives are used
    if both point the same way, otherwise the component is 0.
    """
    g = np.asarray(grad_f, dtype=float)
    th = np.asarray(theta, dtype=float)
    lam = np.broadcast_to(np.asarray(lam1, dtype=float), g.shape)
    right = g + lam
    left = g - lam
    out = np.zeros_like(g)
    pos, neg, zero = th > 0, th < 0, th == 0
    out[pos] = right[pos]
    out[neg] = left[neg]
    m = zero & (right < 0)
    out[m] = right[m]
    m = zero & (left > 0)
    out[m] = left[m]
    return out


@dataclass
class ObjectiveEval:
    value: float
    smooth_value: float
    grad_f: np.ndarray
    pseudo_grad: np.ndarray
    W_L: float
    W_R: float
    W_L_k: np.ndarray
    W_R_k: np.ndarray


class NodeObjective:
    """Elastic-net weighted-entropy objective of one tree node.

    Parameters
    ----------
    samples : ndarray, shape (N, dim)
        Feature rows at the node; column ``offset_index`` is the constant 1.
    labels : ndarray of int, shape (N,)
        Class labels in ``range(n_classes)``.
    lam1, lam2 : float
        Lasso and ridge weights.
    offset_index : int
        Coordinate exempt from both penalties.
    """

    def __init__(self, samples, labels, lam1=0.0, lam2=0.0, n_classes=2, offset_index=-1):
        self.P = np.asarray(samples, dtype=float)
        self.y = np.asarray(labels, dtype=int)
        if self.P.ndim != 2 or self.P.shape[0] < 1:
            raise ValueError("need at least one sample")
        if lam1 < 0 or lam2 < 0:
            raise ValueError("regularization weights must be nonnegative")
        self.N, self.dim = self.P.shape
        self.n_classes = n_classes
        self.lam1 = float(lam1)
        self.lam2 = float(lam2)
        self.offset_index = offset_index % self.dim
        self.penalty_mask = np.ones(self.dim)
        self.penalty_mask[self.offset_index] = 0.0
        self.l1_weights = self.lam1 * self.penalty_mask
        self._onehot = np.zeros((self.N, n_classes))
        self._onehot[np.arange(self.N), self.y] = 1.0

    def _class_weights(self, theta):
        z = self.P @ theta
        wr = sigmoid(z)
        wl = sigmoid(-z)
        WRk = wr @ self._onehot
        WLk = wl @ self._onehot
        return z, wl, wr, WLk, WRk

    def smooth(self, theta):
        """Return ``(f, grad_f)`` of the smooth part (entropy + ridge)."""
        theta = np.asarray(theta, dtype=float)
        z, wl, wr, WLk, WRk = self._class_weights(theta)
        ent = weighted_entropy(WLk) + weighted_entropy(WRk)
        masked = theta * self.penalty_mask
        f = ent / self.N + self.lam2 * float(masked @ masked)
        WL = max(WLk.sum(), LOG_FLOOR)
        WR = max(WRk.sum(), LOG_FLOOR)
        WLy = np.maximum(WLk[self.y], LOG_FLOOR)
        WRy = np.maximum(WRk[self.y], LOG_FLOOR)
        # d(W_R H_R)/dW_R^k = log2(W_R / W_R^k), likewise on the left.
        ratio = (np.log(WR) - np.log(WRy) - np.log(WL) + np.log(WLy)) / _LN2
        coef = wr * wl * ratio
        grad = (coef @ self.P) / self.N + 2.0 * self.lam2 * masked
        return f, grad

    def value(self, theta):
        f, _ = self.smooth(theta)
        return f + float(self.l1_weights @ np.abs(theta))

    def evaluate(self, theta):
        theta = np.asarray(theta, dtype=float)
        f, grad = self.smooth(theta)
        _, _, _, WLk, WRk = self._class_weights(theta)
        return ObjectiveEval(
            value=f + float(self.l1_weights @ np.abs(theta)),
            smooth_value=f,
            grad_f=grad,
            pseudo_grad=pseudo_gradient(grad, theta, self.l1_weights),
            W_L=float(WLk.sum()),
            W_R=float(WRk.sum()),
            W_L_k=WLk,
            W_R_k=WRk,
        )

    def impurity(self, theta):
        """Unnormalized weighted entropy ``W_L H_L + W_R H_R``."""
        _, _, _, WLk, WRk = self._class_weights(np.asarray(theta, dtype=float))
        return weighted_entropy(WLk) + weighted_entropy(WRk)


def eval_objective(obj, theta):
    return obj.evaluate(theta)
