"""Feature extractor, closed-set head and one-vs-all open-set head bank."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

#: Column of each two-logit open-set head that scores "in-lier".
INLIER = 1


@dataclass
class ModelParams:
    """Network weights; entries are ndarrays, or Tensors while training.

    Weight matrices use the (out, in) convention: ``extractor[i]`` is a
    ``(W, b)`` pair with ``W`` of shape ``(fan_out, fan_in)``, ``closed_w`` is
    ``K x d_feat`` and ``ova_w`` stacks K heads of shape ``2 x d_feat``.
    """

    extractor: list
    closed_w: object
    closed_b: object
    ova_w: object
    ova_b: object

    @property
    def K(self) -> int:
        return self.closed_w.shape[0]

    @property
    def d_in(self) -> int:
        return self.extractor[0][0].shape[1] if self.extractor else self.closed_w.shape[1]

    @property
    def d_feat(self) -> int:
        return self.closed_w.shape[1]

    def leaves(self) -> list:
        out = []
        for w, b in self.extractor:
            out += [w, b]
        return out + [self.closed_w, self.closed_b, self.ova_w, self.ova_b]

    def names(self) -> list[str]:
        out = []
        for i in range(len(self.extractor)):
            out += [f"extractor.{i}.weight", f"extractor.{i}.bias"]
        return out + ["closed.weight", "closed.bias", "ova.weight", "ova.bias"]

    @classmethod
    def from_leaves(cls, leaves) -> "ModelParams":
        leaves = list(leaves)
        n_layers = (len(leaves) - 4) // 2
        extractor = [(leaves[2 * i], leaves[2 * i + 1]) for i in range(n_layers)]
        return cls(extractor, *leaves[2 * n_layers:])

    def map(self, fn) -> "ModelParams":
        return ModelParams.from_leaves(fn(x) for x in self.leaves())

    def copy(self) -> "ModelParams":
        return self.map(lambda a: np.array(a, dtype=np.float64))

    def as_tensors(self) -> "ModelParams":
        return self.map(Tensor.param)

    def is_head(self) -> list[bool]:
        return [False] * (2 * len(self.extractor)) + [True] * 4

    def is_bias(self) -> list[bool]:
        return [name.endswith(".bias") for name in self.names()]


class ForwardOut(NamedTuple):
    z: Tensor
    p_c: Tensor
    p_o: Tensor


def _glorot(rng, fan_out, fan_in, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_out, fan_in))


def init_params(d_in, hidden=(64, 64), d_feat=32, K=2, seed=0) -> ModelParams:
    """Glorot-uniform weights, zero biases. ``seed`` may be an int or a Generator."""
    dims = [d_in, *hidden, d_feat]
    if min(dims + [K]) < 1:
        raise ValueError(f"all dimensions must be >= 1, got d_in={d_in}, hidden={hidden}, d_feat={d_feat}, K={K}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    extractor = [(_glorot(rng, fo, fi), np.zeros(fo)) for fi, fo in zip(dims[:-1], dims[1:])]
    closed_w = _glorot(rng, K, d_feat)
    ova_w = _glorot(rng, 2, d_feat, shape=(K, 2, d_feat))
    return ModelParams(extractor, closed_w, np.zeros(K), ova_w, np.zeros((K, 2)))


def extract(params: ModelParams, x) -> Tensor:
    """Features z: affine layers with ReLU between them, linear output layer."""
    h = ad.as_tensor(x)
    last = len(params.extractor) - 1
    for i, (w, b) in enumerate(params.extractor):
        h = h @ ad.as_tensor(w).T + b
        if i < last:
            h = ad.relu(h)
    return h


def closed_probs(params: ModelParams, z) -> Tensor:
    return ad.softmax(ad.as_tensor(z) @ ad.as_tensor(params.closed_w).T + params.closed_b)


def open_probs(params: ModelParams, z) -> Tensor:
    """In-lier probability of every one-vs-all head, shape (batch, K)."""
    z = ad.as_tensor(z)
    K, d = params.K, params.d_feat
    w = ad.as_tensor(params.ova_w).reshape(2 * K, d)
    b = ad.as_tensor(params.ova_b).reshape(2 * K)
    logits = (z @ w.T + b).reshape(z.shape[0], K, 2)
    return ad.softmax(logits, axis=-1)[:, :, INLIER]


def forward(params: ModelParams, x) -> ForwardOut:
    x = ad.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise ValueError(f"expected input of shape (batch, {params.d_in}), got {x.shape}")
    z = extract(params, x)
    return ForwardOut(z, closed_probs(params, z), open_probs(params, z))


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, params: ModelParams) -> None:
    """Text checkpoint: one ``[name] dims...`` section per tensor, 17 significant digits."""
    lines = [f"emlnet-checkpoint {len(params.extractor)} {params.K}"]
    for name, arr in zip(params.names(), params.leaves()):
        arr = np.asarray(arr, dtype=np.float64)
        lines.append(f"[{name}] " + " ".join(str(s) for s in arr.shape))
        rows = arr.reshape(-1, arr.shape[-1]) if arr.ndim > 1 else arr.reshape(1, -1)
        lines += [" ".join(f"{v:.17g}" for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("emlnet-checkpoint"):
        raise ValueError(f"{path}:1: not a checkpoint file")
    leaves, i = [], 1
    while i < len(lines):
        head = lines[i].strip()
        if not head:
            i += 1
            continue
        if not head.startswith("["):
            raise ValueError(f"{path}:{i + 1}: expected a '[name] dims' section header")
        shape = tuple(int(s) for s in head.split("]", 1)[1].split())
        n_rows = int(np.prod(shape[:-1])) if len(shape) > 1 else 1
        try:
            values = [float(v) for ln in lines[i + 1:i + 1 + n_rows] for v in ln.split()]
            arr = np.array(values).reshape(shape)
        except ValueError as exc:
            raise ValueError(f"{path}:{i + 1}: malformed section: {exc}") from None
        leaves.append(arr)
        i += 1 + n_rows
    return ModelParams.from_leaves(leaves)
