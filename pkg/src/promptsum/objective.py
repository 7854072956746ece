"""Training losses for the dual-prompt contrastive objective.

Four components per example: NLL of the gold summary under the control-prompt
branch and under the latent-prompt branch (each averaged over target length),
plus two stop-gradient KL terms summed over positions: one distilling the
control branch into the latent branch, one pulling the control branch back
toward the latent branch so it does not overfit its prompt. The combined
loss is

    total = nll_c + nll_l + lambda1 * KL(sg(p_c) || p_l)
                          + lambda2 * KL(sg(p_l) || p_c)

and with N control prompts the NLL and KL control terms are summed over
prompts. The NLL/KL normalization asymmetry (mean over positions vs. sum) is
deliberate and preserved; ``normalize_kl_by_length`` opts into per-length
normalization of the KL terms instead.

All functions take (T, V) probability matrices and return the loss value
together with gradients w.r.t. those matrices. Stop-gradient is structural:
a KL term contributes gradient only through its student distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """KL term weights (lambda1 scales the control-teacher term, lambda2 the
    latent-teacher term)."""

    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lambda1) and np.isfinite(self.lambda2)):
            raise ValueError("loss weights must be finite")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be non-negative")


# The weight settings searched in practice: both KL terms on, or exactly one.
LOSS_PRESETS = {
    "both": LossWeights(1.0, 1.0),
    "c_teacher_only": LossWeights(1.0, 0.0),
    "l_teacher_only": LossWeights(0.0, 1.0),
}


@dataclass(frozen=True)
class LossBreakdown:
    nll_c: float
    nll_l: float
    cl_c_to_l: float
    cl_l_to_c: float
    total: float

    def to_dict(self) -> dict[str, float]:
        return {
            "nll_c": self.nll_c,
            "nll_l": self.nll_l,
            "cl_c_to_l": self.cl_c_to_l,
            "cl_l_to_c": self.cl_l_to_c,
            "total": self.total,
        }


def _check_dist(dist: np.ndarray, gold: Sequence[int]) -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2:
        raise ValueError(f"distribution sequence must be (T, V), got {dist.shape}")
    if len(gold) != dist.shape[0]:
        raise ValueError(f"gold length {len(gold)} != {dist.shape[0]} positions")
    return dist


def nll(dist: np.ndarray, gold: Sequence[int]) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of ``gold`` under ``dist``.

    Returns the scalar and its gradient w.r.t. ``dist``: -1/(T * p[t, y_t])
    at the gold entries, zero elsewhere.
    """
    if len(gold) == 0:
        raise ValueError("cannot score an empty gold sequence")
    dist = _check_dist(dist, gold)
    t_len = len(gold)
    rows = np.arange(t_len)
    gold = np.asarray(gold, dtype=np.int64)
    picked = np.maximum(dist[rows, gold], PROB_FLOOR)
    value = float(-np.log(picked).sum() / t_len)
    grad = np.zeros_like(dist)
    grad[rows, gold] = -1.0 / (t_len * picked)
    return value, grad


def kl_contrastive(
    teacher: np.ndarray, student: np.ndarray, normalize_by_length: bool = False
) -> tuple[float, np.ndarray]:
    """Position-summed KL(teacher || student) with the teacher stop-gradiented.

    Returns the scalar and the gradient w.r.t. the student only; the teacher
    is treated as a constant, so its gradient is identically zero and is not
    returned. Probabilities are floored at 1e-12 before logs and divisions.
    """
    teacher = np.asarray(teacher, dtype=np.float64)
    student = np.asarray(student, dtype=np.float64)
    if teacher.shape != student.shape or teacher.ndim != 2:
        raise ValueError(
            f"teacher/student shapes must match as (T, V): {teacher.shape} vs {student.shape}"
        )
    q = np.maximum(teacher, PROB_FLOOR)
    p = np.maximum(student, PROB_FLOOR)
    scale = 1.0 / teacher.shape[0] if normalize_by_length else 1.0
    value = float((teacher * (np.log(q) - np.log(p))).sum() * scale)
    grad = -(teacher / p) * scale
    return value, grad


def multi_control_loss(
    dists_c: Sequence[np.ndarray],
    dist_l: np.ndarray,
    gold: Sequence[int],
    weights: LossWeights = LOSS_PRESETS["both"],
    normalize_kl_by_length: bool = False,
) -> tuple[LossBreakdown, list[np.ndarray], np.ndarray]:
    """Loss over N control branches plus the latent branch.

    Returns (breakdown, per-control-branch gradients, latent-branch
    gradient). The breakdown's nll_c and KL fields hold the sums over
    control branches, so total = nll_c + nll_l + l1*cl_c_to_l + l2*cl_l_to_c
    always holds.
    """
    if len(dists_c) == 0:
        raise ValueError("at least one control-branch distribution required")
    nll_l_value, grad_l = nll(dist_l, gold)
    nll_c_total = 0.0
    cl_c_to_l_total = 0.0
    cl_l_to_c_total = 0.0
    grads_c: list[np.ndarray] = []
    for dist_c in dists_c:
        nll_c_value, grad_c = nll(dist_c, gold)
        nll_c_total += nll_c_value
        kl_cl, grad_student_l = kl_contrastive(dist_c, dist_l, normalize_kl_by_length)
        kl_lc, grad_student_c = kl_contrastive(dist_l, dist_c, normalize_kl_by_length)
        cl_c_to_l_total += kl_cl
        cl_l_to_c_total += kl_lc
        grad_l = grad_l + weights.lambda1 * grad_student_l
        grads_c.append(grad_c + weights.lambda2 * grad_student_c)
    total = (
        nll_c_total
        + nll_l_value
        + weights.lambda1 * cl_c_to_l_total
        + weights.lambda2 * cl_l_to_c_total
    )
    breakdown = LossBreakdown(
        nll_c=nll_c_total,
        nll_l=nll_l_value,
        cl_c_to_l=cl_c_to_l_total,
        cl_l_to_c=cl_l_to_c_total,
        total=total,
    )
    return breakdown, grads_c, grad_l


def dual_prompt_loss(
    dist_c: np.ndarray,
    dist_l: np.ndarray,
    gold: Sequence[int],
    weights: LossWeights = LOSS_PRESETS["both"],
    normalize_kl_by_length: bool = False,
) -> tuple[LossBreakdown, np.ndarray, np.ndarray]:
    """Single-control-prompt combined loss (the N=1 case, bit for bit)."""
    breakdown, grads_c, grad_l = multi_control_loss(
        [dist_c], dist_l, gold, weights, normalize_kl_by_length
    )
    return breakdown, grads_c[0], grad_l
