"""Training objectives.

Every per-sample loss accepts a single probability row (returns a 0-d
Tensor) or a batch of rows (returns one value per row). Probabilities are
clamped to ``[1e-12, 1 - 1e-12]`` before any logarithm.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import PROB_EPS, Tensor
from .memory import MemoryBank
from .model import ModelParams, forward, open_probs

OEM_MODES = ("uniform", "weighted")


@dataclass(frozen=True)
class LossWeights:
    beta1: float = 0.5   # neighborhood invariance
    beta2: float = 0.1   # cross-domain mixup
    eta: float = 0.16    # consistency
    gamma: float = 0.1   # open-set entropy
    alpha: float = 2.0   # Beta(alpha, alpha) mixing coefficient
    detach_weights: bool = False  # stop gradients through p_c in weighted OEM

    def __post_init__(self):
        if min(self.beta1, self.beta2, self.eta, self.gamma) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")

    @classmethod
    def source_only(cls) -> "LossWeights":
        return cls(beta1=0.0, beta2=0.0, eta=0.0, gamma=0.0)


@dataclass
class LossReport:
    cls: float
    ova: float
    oem: float
    nil: float
    cmm: float
    cc: float
    total: float
    oem_mode: str
    graph: Tensor | None = field(default=None, repr=False, compare=False)

    FIELDS = ("cls", "ova", "oem", "nil", "cmm", "cc", "total")

    def recompute_total(self, w: LossWeights) -> float:
        return combine(self.cls, self.ova, self.nil, self.cc, self.oem, self.cmm, w)

    def values(self) -> dict:
        d = asdict(self)
        d.pop("graph")
        return d


def combine(cls, ova, nil, cc, oem, cmm, w: LossWeights):
    """Weighted sum of the batch-mean terms; works on floats and Tensors alike."""
    return cls + ova + w.beta1 * nil + w.eta * cc + w.gamma * oem + w.beta2 * cmm


def _rows(x):
    t = ad.as_tensor(x)
    if t.ndim == 1:
        return t.reshape(1, t.shape[0]), True
    if t.ndim != 2:
        raise ValueError(f"expected a probability row or batch, got shape {t.shape}")
    return t, False


def _done(per_sample: Tensor, squeeze: bool) -> Tensor:
    return per_sample[0] if squeeze else per_sample


def _labels(y, P: Tensor) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if y.shape != (P.shape[0],):
        raise ValueError(f"need one label per row, got {y.shape} for {P.shape[0]} rows")
    if np.any(y < 0) or np.any(y >= P.shape[1]):
        raise ValueError(f"class id out of range 0..{P.shape[1] - 1}")
    return y


def _log(p) -> Tensor:
    return ad.log(ad.clip(p, PROB_EPS, 1.0 - PROB_EPS))


def loss_cls(p_c, y) -> Tensor:
    """Cross-entropy -ln p_c(y)."""
    P, sq = _rows(p_c)
    y = _labels(y, P)
    return _done(-_log(P[np.arange(len(y)), y]), sq)


def hardest_negative(p_o, y) -> np.ndarray:
    """Index of the largest in-lier score among the classes other than y."""
    P = np.atleast_2d(np.asarray(ad.as_tensor(p_o).data))
    y = np.atleast_1d(y)
    masked = P.copy()
    masked[np.arange(len(y)), y] = -np.inf
    return masked.argmax(axis=1)


def loss_ova(p_o, y) -> Tensor:
    """One-vs-all loss with hard negative classifier sampling.

    The positive head is pushed towards in-lier and only the most confused
    negative head is pushed towards out-lier.
    """
    P, sq = _rows(p_o)
    if P.shape[1] < 2:
        raise ValueError("one-vs-all loss needs K >= 2")
    y = _labels(y, P)
    rows = np.arange(len(y))
    hard = hardest_negative(P, y)
    return _done(-_log(P[rows, y]) - _log(1.0 - P[rows, hard]), sq)


def loss_oem_uniform(p_o) -> Tensor:
    """Mean binary entropy over the K open-set heads."""
    P, sq = _rows(p_o)
    return _done(ad.binary_entropy(P).mean(axis=1), sq)


def loss_oem_weighted(p_o, p_c, detach_weights: bool = False) -> Tensor:
    """Open-set entropy with each head weighted by the closed-set probability of its class.

    Keeps the 1/K normalization, so a uniform ``p_c`` gives the uniform loss
    divided by K and a one-hot ``p_c`` leaves only the selected head.
    """
    P, sq = _rows(p_o)
    W, _ = _rows(p_c)
    if W.shape != P.shape:
        raise ValueError(f"p_o and p_c shapes differ: {P.shape} vs {W.shape}")
    if detach_weights:
        W = W.detach()
    K = P.shape[1]
    return _done((W * ad.binary_entropy(P)).sum(axis=1) / float(K), sq)


def loss_nil(p, w) -> Tensor:
    """Jaccard-weighted negative log-likelihood of neighbor similarities."""
    P, sq = _rows(p)
    W = np.atleast_2d(np.asarray(w, dtype=np.float64))
    if P.shape[1] == 0:
        raise ValueError("empty neighborhood; skip the term instead")
    if W.shape != P.shape:
        raise ValueError(f"weights {W.shape} do not match probabilities {P.shape}")
    return _done(-(W * _log(P)).sum(axis=1) / float(P.shape[1]), sq)


def mixup_feature(z_s, z_t, lam):
    """Convex combination lam * z_s + (1 - lam) * z_t, lam scalar or one per row."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0) or np.any(lam > 1):
        raise ValueError("mixing coefficient must lie in [0, 1]")
    if lam.ndim == 1:
        lam = lam[:, None]
    if not isinstance(z_s, Tensor) and not isinstance(z_t, Tensor):
        return lam * np.asarray(z_s, dtype=np.float64) + (1.0 - lam) * np.asarray(z_t, dtype=np.float64)
    return ad.as_tensor(z_s) * lam + ad.as_tensor(z_t) * (1.0 - lam)


def loss_cmm(p_o_mix, y_s) -> Tensor:
    """-ln(1 - p_o(y_s)) on mixed features: the source head must reject the mixture."""
    P, sq = _rows(p_o_mix)
    y = _labels(y_s, P)
    return _done(-_log(1.0 - P[np.arange(len(y)), y]), sq)


def loss_cc(p_c, p_o) -> Tensor:
    """-(1/K) sum_k p_c(k) p_o(k); lies in [-1/K, 0]."""
    C, sq = _rows(p_c)
    P, _ = _rows(p_o)
    if C.shape != P.shape:
        raise ValueError(f"p_c and p_o shapes differ: {C.shape} vs {P.shape}")
    return _done(-(C * P).sum(axis=1) / float(P.shape[1]), sq)


def nil_batch(z_t: Tensor, rows, bank: MemoryBank) -> Tensor:
    """Summed neighborhood-invariance loss over the target rows that have neighbors.

    Neighbors and Jaccard weights come from the bank and are constants; the
    gradient reaches the live features only.
    """
    rows = np.asarray(rows, dtype=np.int64)
    # a zero feature has no direction to compare
    active = np.flatnonzero(bank.valid[rows] & np.any(z_t.data != 0, axis=1))
    if len(active) == 0:
        return Tensor(0.0)
    table = bank.neighbor_table(rows[active])
    if table.shape[1] == 0:
        return Tensor(0.0)
    weights = bank.jaccard_table(rows[active], table)
    z = ad.l2_normalize(z_t[active])
    nb = bank.entries[table]
    B, k = table.shape
    logits = (z.reshape(B, 1, z.shape[1]) * nb).sum(axis=-1) / bank.tau
    return loss_nil(ad.softmax(logits, axis=-1), weights).sum()


def loss_all(
    params: ModelParams,
    x_s,
    y_s,
    x_t,
    t_rows,
    bank: MemoryBank | None,
    weights: LossWeights,
    oem_mode: str = "weighted",
    rng: np.random.Generator | None = None,
    update_bank: bool = True,
) -> LossReport:
    """Full objective on one source batch and one target batch.

    Source terms (cls, ova) and the mixup term are averaged over the source
    batch; target terms (nil, cc, oem) over the target batch. Target rows are
    written to ``bank`` before neighborhoods are looked up. Source sample i is
    mixed with target sample ``i mod len(x_t)`` using its own Beta draw. The
    report's ``graph`` holds the differentiable total.
    """
    if oem_mode not in OEM_MODES:
        raise ValueError(f"oem_mode must be one of {OEM_MODES}, got {oem_mode!r}")
    if len(x_s) == 0 or len(x_t) == 0:
        raise ValueError("both batches must be non-empty")
    rng = np.random.default_rng(0) if rng is None else rng

    src = forward(params, x_s)
    tgt = forward(params, x_t)
    if bank is not None and update_bank:
        bank.update(t_rows, tgt.z.data, skip_zero=True)

    cls = loss_cls(src.p_c, y_s).mean()
    ova = loss_ova(src.p_o, y_s).mean()

    if oem_mode == "weighted":
        oem = loss_oem_weighted(tgt.p_o, tgt.p_c, weights.detach_weights).mean()
    else:
        oem = loss_oem_uniform(tgt.p_o).mean()
    cc = loss_cc(tgt.p_c, tgt.p_o).mean()
    nil = nil_batch(tgt.z, t_rows, bank) / float(len(x_t)) if bank is not None else Tensor(0.0)

    n_s, n_t = len(x_s), len(x_t)
    lam = rng.beta(weights.alpha, weights.alpha, size=n_s)
    pair = np.arange(n_s) % n_t
    z_mix = mixup_feature(src.z, tgt.z[pair], lam)
    cmm = loss_cmm(open_probs(params, z_mix), y_s).mean()

    total = combine(cls, ova, nil, cc, oem, cmm, weights)
    return LossReport(
        cls=cls.item(), ova=ova.item(), oem=oem.item(), nil=nil.item(),
        cmm=cmm.item(), cc=cc.item(), total=total.item(),
        oem_mode=oem_mode, graph=total,
    )
