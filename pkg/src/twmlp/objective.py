"""Training objective: L1 rotation and rotation-velocity losses, the L2
weight term, and learned uncertainty weighting of the two task losses."""

from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .errors import ContractError, ShapeError
from .model import is_weight_matrix

REG_COEF = 1e-4


@dataclass
class LossBreakdown:
    l_theta: float
    l_rv: float
    l_reg: float
    total: float
    w_theta: float
    w_rv: float

    def recompute_total(self, s_theta=0.0, s_rv=0.0, mode="uncertainty"):
        base = self.w_theta * self.l_theta + self.w_rv * self.l_rv + REG_COEF * self.l_reg
        return base + (s_theta + s_rv if mode == "uncertainty" else 0.0)


def _check_pair(pred, gt):
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and target {gt.shape} differ")


def rotation_loss(pred, gt):
    """Mean over frames (and batch) of the summed per-joint 6D L1 error."""
    _check_pair(pred, gt)
    frames = int(np.prod(pred.shape[:-1]))
    return tc.mul(tc.sum_all(tc.absolute(tc.sub(pred, gt))), 1.0 / frames)


def rotation_velocity_loss(pred, gt):
    """L1 error between frame-to-frame 6D differences, averaged over T-1."""
    _check_pair(pred, gt)
    if pred.shape[-2] < 2:
        raise ContractError("rotation velocity loss needs T >= 2")
    frames = int(np.prod(pred.shape[:-2])) * (pred.shape[-2] - 1)
    d = tc.sub(tc.diff_time(pred), tc.diff_time(gt))
    return tc.mul(tc.sum_all(tc.absolute(d)), 1.0 / frames)


def l2_regularizer(tensors):
    """Sum of squared weight-matrix entries; norms, biases and log-variances excluded."""
    terms = [tc.square_sum(t) for name, t in tensors.items() if is_weight_matrix(name)]
    if not terms:
        return tc.Tensor(np.zeros(()))
    out = terms[0]
    for t in terms[1:]:
        out = tc.add(out, t)
    return out


def total_loss(l_theta, l_rv, l_reg, s_theta=None, s_rv=None, mode="uncertainty", lambdas=(1.0, 1.0)):
    """Combine the loss terms.

    ``uncertainty``: exp(-s_theta) l_theta + s_theta + exp(-s_rv) l_rv + s_rv
    + 1e-4 l_reg. ``fixed``: lambda_theta l_theta + lambda_rv l_rv + 1e-4 l_reg.
    """
    if mode == "uncertainty":
        w_theta, w_rv = tc.exp(tc.mul(s_theta, -1.0)), tc.exp(tc.mul(s_rv, -1.0))
        total = tc.add(tc.mul(w_theta, l_theta), s_theta)
        total = tc.add(total, tc.add(tc.mul(w_rv, l_rv), s_rv))
        weights = (float(w_theta.data), float(w_rv.data))
    elif mode == "fixed":
        total = tc.add(tc.mul(l_theta, lambdas[0]), tc.mul(l_rv, lambdas[1]))
        weights = tuple(float(x) for x in lambdas)
    else:
        raise ContractError(f"unknown loss mode {mode!r}")
    total = tc.add(total, tc.mul(l_reg, REG_COEF))
    breakdown = LossBreakdown(
        l_theta=float(l_theta.data),
        l_rv=float(l_rv.data),
        l_reg=float(l_reg.data),
        total=float(total.data),
        w_theta=weights[0],
        w_rv=weights[1],
    )
    return total, breakdown


def objective(tensors, pred, gt, mode="uncertainty", lambdas=(1.0, 1.0), explicit_reg=True):
    """Total loss graph for model output ``pred`` against target ``gt``."""
    l_theta = rotation_loss(pred, gt)
    l_rv = rotation_velocity_loss(pred, gt)
    l_reg = l2_regularizer(tensors) if explicit_reg else tc.Tensor(np.zeros((), dtype=pred.dtype))
    return total_loss(l_theta, l_rv, l_reg, tensors.get("s_theta"), tensors.get("s_rv"), mode, lambdas)
