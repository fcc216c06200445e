"""SGD/Nesterov optimization loop over paired source and target batches."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .evaluation import EvalResult, evaluate
from .losses import LossReport, LossWeights, loss_all
from .memory import MemoryBank
from .model import ModelParams, init_params
from .scenario import Scenario

logger = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, step: int, report: LossReport | None, what: str = "loss"):
        self.step = step
        self.report = report
        detail = f": {report.values()}" if report is not None else ""
        super().__init__(f"non-finite {what} at step {step}{detail}")


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (64, 64)
    d_feat: int = 32


@dataclass(frozen=True)
class MemoryConfig:
    k_nn: int = 5
    tau: float = 0.05
    momentum: float = 0.0


@dataclass(frozen=True)
class OptimConfig:
    lr_backbone: float = 1e-3
    lr_heads: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: tuple = (10.0, 0.75)
    epochs: int = 50
    batch: int = 36

    def __post_init__(self):
        if self.lr_backbone <= 0 or self.lr_heads <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch < 2 or self.batch % 2:
            raise ValueError("batch must be even (split between source and target)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class TrainHistory:
    steps: list[LossReport] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    evals: list[EvalResult] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    steps_per_epoch: int = 0


def lr_at(base_lr: float, progress: float, schedule=(10.0, 0.75)) -> float:
    """Inverse decay ``base_lr * (1 + a * progress) ** -b``."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {progress}")
    a, b = schedule
    return base_lr * (1.0 + a * progress) ** (-b)


def nesterov_update(w, g, v, lr, momentum, weight_decay=0.0):
    """One Nesterov step; returns ``(w', v')``."""
    d = g + weight_decay * w
    v_new = momentum * v - lr * d
    return w + momentum * v_new - lr * d, v_new


def sgd_step(params: ModelParams, grads, velocity, config: OptimConfig, progress: float):
    """Update every leaf; heads use ``lr_heads``, the extractor ``lr_backbone``.

    Weight decay applies to weight matrices only.
    """
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    lr_b = lr_at(config.lr_backbone, progress, config.schedule)
    lr_h = lr_at(config.lr_heads, progress, config.schedule)
    new_w, new_v = [], []
    for w, g, v, head, bias in zip(params.leaves(), grads, velocity, params.is_head(), params.is_bias()):
        wd = 0.0 if bias else config.weight_decay
        w2, v2 = nesterov_update(w, g, v, lr_h if head else lr_b, config.momentum, wd)
        new_w.append(w2)
        new_v.append(v2)
    return ModelParams.from_leaves(new_w), new_v


class _Sampler:
    """Seeded reshuffling index stream that wraps around at the end of each pass."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n, self.rng = n, rng
        self.order, self.pos = rng.permutation(n), 0

    def take(self, k: int) -> np.ndarray:
        out = []
        while len(out) < k:
            if self.pos == self.n:
                self.order, self.pos = self.rng.permutation(self.n), 0
            m = min(k - len(out), self.n - self.pos)
            out.extend(self.order[self.pos:self.pos + m].tolist())
            self.pos += m
        return np.array(out, dtype=np.int64)


def train(
    scenario: Scenario,
    model_config: ModelConfig = ModelConfig(),
    optim: OptimConfig = OptimConfig(),
    weights: LossWeights = LossWeights(),
    oem_mode: str = "weighted",
    seed: int = 0,
    memory: MemoryConfig = MemoryConfig(),
    threshold: float = 0.5,
    on_step=None,
) -> tuple[ModelParams, TrainHistory]:
    """Train from scratch; deterministic given the arguments.

    An epoch is one pass over the larger domain. When the target carries
    ground-truth labels an :class:`EvalResult` is recorded after every epoch;
    those labels never enter the loss. ``on_step(step, report)`` is called
    after each update when given.
    """
    rng = np.random.default_rng(seed)
    src, tgt = scenario.source, scenario.target
    if src.labels is None:
        raise ValueError("source domain must be labeled")
    if src.dim != tgt.dim:
        raise ValueError(f"source dim {src.dim} != target dim {tgt.dim}")
    if np.any(src.labels < 0) or np.any(src.labels >= scenario.K):
        raise ValueError(f"source labels must lie in 0..{scenario.K - 1}")

    params = init_params(src.dim, model_config.hidden, model_config.d_feat, scenario.K, rng)
    velocity = [np.zeros_like(w) for w in params.leaves()]
    bank = MemoryBank(tgt.n, model_config.d_feat, memory.k_nn, memory.tau, memory.momentum)
    half = optim.batch // 2
    s_sampler, t_sampler = _Sampler(src.n, rng), _Sampler(tgt.n, rng)
    steps_per_epoch = -(-max(src.n, tgt.n) // half)
    total_steps = steps_per_epoch * optim.epochs
    history = TrainHistory(steps_per_epoch=steps_per_epoch)
    eval_labels = scenario.target_eval_labels()

    step = 0
    for epoch in range(optim.epochs):
        t0 = time.perf_counter()
        for _ in range(steps_per_epoch):
            progress = step / total_steps
            si, ti = s_sampler.take(half), t_sampler.take(half)
            leaves = params.as_tensors()
            report = loss_all(
                leaves, src.features[si], src.labels[si], tgt.features[ti], ti,
                bank, weights, oem_mode, rng,
            )
            if not np.isfinite(report.total):
                raise NonFiniteLossError(step, report)
            grads = ad.grad(report.graph, leaves.leaves())
            report.graph = None
            try:
                params, velocity = sgd_step(params, grads, velocity, optim, progress)
            except FloatingPointError:
                raise NonFiniteLossError(step, report, "gradient") from None
            history.steps.append(report)
            history.lrs.append(lr_at(optim.lr_heads, progress, optim.schedule))
            if on_step is not None:
                on_step(step, report)
            step += 1
        history.epoch_seconds.append(time.perf_counter() - t0)
        if eval_labels is not None:
            result = evaluate(params, tgt.features, eval_labels, scenario.shared_classes, threshold)
            history.evals.append(result)
            logger.debug("epoch %d: HSC %.4f (OS* %.4f, UNK %.4f)", epoch, result.hsc, result.os_star, result.unk)
    return params, history
