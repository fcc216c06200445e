"""Plain numpy versions of the elementwise maths, with input validation.

These are the value-level counterparts of the differentiable primitives in
:mod:`emlnet.autodiff` and are used wherever no gradient is needed
(evaluation, memory bank bookkeeping).
"""

from __future__ import annotations

import numpy as np


def softmax(logits, axis=-1) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    if x.size == 0:
        raise ValueError("softmax of an empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("softmax input must be finite")
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def binary_entropy(p):
    """Natural-log binary entropy with 0 ln 0 taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("binary_entropy needs probabilities in [0, 1]")
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log(p), 0.0) + np.where(q > 0, q * np.log(q), 0.0))
    return h if h.ndim else float(h)


def l2_normalize(v, axis=-1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / norm
