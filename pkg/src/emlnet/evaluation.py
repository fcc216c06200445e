"""Unknown-rejecting prediction and H-score evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import PROB_EPS
from .model import ModelParams, forward
from .scenario import UNKNOWN

logger = logging.getLogger(__name__)


@dataclass
class EvalResult:
    os_star: float
    unk: float
    hsc: float
    per_class: dict = field(default_factory=dict)
    reject_threshold: float = 0.5

    CSV_FIELDS = ("threshold", "os_star", "unk", "hsc")

    def csv_row(self) -> dict:
        return {"threshold": self.reject_threshold, "os_star": self.os_star,
                "unk": self.unk, "hsc": self.hsc}

    def summary(self) -> str:
        lines = [
            f"threshold  {self.reject_threshold:.3f}",
            f"OS*        {100 * self.os_star:6.2f}",
            f"UNK        {100 * self.unk:6.2f}",
            f"H-score    {100 * self.hsc:6.2f}",
        ]
        lines += [f"  class {c:>3}  {100 * a:6.2f}" for c, a in sorted(self.per_class.items())]
        return "\n".join(lines)


def harmonic(os_star: float, unk: float) -> float:
    denom = os_star + unk
    # ratio first so tiny inputs do not underflow to zero
    return 2.0 * os_star * (unk / denom) if denom > 0 else 0.0


def decide(p_c, p_o, threshold: float = 0.5) -> np.ndarray:
    """Argmax of the closed-set head, replaced by UNKNOWN where that class's in-lier score is below threshold."""
    p_c = np.atleast_2d(np.asarray(p_c, dtype=np.float64))
    p_o = np.atleast_2d(np.asarray(p_o, dtype=np.float64))
    top = p_c.argmax(axis=1)
    score = np.clip(p_o[np.arange(len(top)), top], PROB_EPS, 1.0 - PROB_EPS)
    return np.where(score < threshold, UNKNOWN, top)


def predict(params: ModelParams, x, threshold: float = 0.5) -> np.ndarray:
    out = forward(params, np.atleast_2d(x))
    return decide(out.p_c.data, out.p_o.data, threshold)


def h_score(predictions, labels, shared, threshold: float = 0.5, unk_per_class: bool = False) -> EvalResult:
    """OS*, UNK and their harmonic mean.

    ``labels`` holds shared class ids for known samples; any other value
    (UNKNOWN or a raw target-private id) marks a sample that should be
    rejected. Shared classes without samples are left out of OS*.
    With ``unk_per_class`` the unknown accuracy is averaged per distinct
    private label instead of pooled over samples.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    gt = np.asarray(labels, dtype=np.int64)
    if pred.shape != gt.shape:
        raise ValueError("predictions and labels differ in length")
    shared = sorted(int(c) for c in shared)
    known = np.isin(gt, shared)
    if gt.size == 0:
        raise ValueError("empty evaluation")

    per_class = {}
    for c in shared:
        mask = gt == c
        if mask.any():
            per_class[c] = float(np.mean(pred[mask] == c))
        else:
            logger.info("shared class %d has no target samples; left out of OS*", c)
    os_star = float(np.mean(list(per_class.values()))) if per_class else 0.0

    unknown = ~known
    if not unknown.any():
        logger.warning("no target-private samples; UNK and H-score reported as 0")
        unk = 0.0
    elif unk_per_class:
        unk = float(np.mean([np.mean(pred[gt == c] == UNKNOWN) for c in np.unique(gt[unknown])]))
    else:
        unk = float(np.mean(pred[unknown] == UNKNOWN))
    return EvalResult(os_star, unk, harmonic(os_star, unk), per_class, threshold)


def evaluate(params: ModelParams, x, labels, shared, threshold: float = 0.5, unk_per_class=False) -> EvalResult:
    return h_score(predict(params, x, threshold), labels, shared, threshold, unk_per_class)


def threshold_sweep(params: ModelParams, x, labels, shared, grid, unk_per_class=False) -> dict:
    """One EvalResult per rejection threshold."""
    grid = [float(t) for t in grid]
    if not grid or any(t < 0 or t > 1 for t in grid):
        raise ValueError("grid must be a non-empty list of values in [0, 1]")
    out = forward(params, np.atleast_2d(x))
    p_c, p_o = out.p_c.data, out.p_o.data
    return {t: h_score(decide(p_c, p_o, t), labels, shared, t, unk_per_class) for t in grid}
