"""Memory bank of normalized target features and neighborhood retrieval."""

from __future__ import annotations

import numpy as np

from .functional import l2_normalize, softmax


class MemoryBank:
    """One unit-norm row per target sample plus a validity mask.

    Rows become valid on their first update. Updates replace the row outright
    unless ``momentum`` > 0, in which case the new feature is blended with the
    stored one and renormalized.
    """

    def __init__(self, n: int, dim: int, k_nn: int = 5, tau: float = 0.05, momentum: float = 0.0):
        if n < 1 or dim < 1 or k_nn < 1:
            raise ValueError("n, dim and k_nn must be >= 1")
        if tau <= 0:
            raise ValueError("tau must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.entries = np.zeros((n, dim))
        self.valid = np.zeros(n, dtype=bool)
        self.k_nn = k_nn
        self.tau = tau
        self.momentum = momentum

    def __len__(self):
        return len(self.entries)

    def copy(self) -> "MemoryBank":
        other = MemoryBank(len(self), self.entries.shape[1], self.k_nn, self.tau, self.momentum)
        other.entries = self.entries.copy()
        other.valid = self.valid.copy()
        return other

    def update(self, rows, feats, skip_zero: bool = False) -> "MemoryBank":
        """Write features to ``rows``; with ``skip_zero`` all-zero features leave their row untouched."""
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
        if np.any(rows < 0) or np.any(rows >= len(self)):
            raise IndexError(f"bank row out of range 0..{len(self) - 1}")
        if skip_zero:
            keep = np.any(feats != 0, axis=1)
            rows, feats = rows[keep], feats[keep]
            if len(rows) == 0:
                return self
        new = l2_normalize(feats)
        if self.momentum > 0:
            old = self.valid[rows]
            blended = self.momentum * self.entries[rows] + (1 - self.momentum) * new
            new = np.where(old[:, None], l2_normalize(blended), new)
        self.entries[rows] = new
        self.valid[rows] = True
        return self

    def neighbor_table(self, rows) -> np.ndarray:
        """Neighbors of each row, shape ``(len(rows), min(k_nn, n_valid - 1))``.

        Columns are ordered by decreasing similarity; equal similarities go to
        the lower index.
        """
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        if not np.all(self.valid[rows]):
            raise ValueError("neighbors requested for a row that was never written")
        k = min(self.k_nn, int(self.valid.sum()) - 1)
        if k < 1:
            return np.empty((len(rows), 0), dtype=np.int64)
        sims = self.entries[rows] @ self.entries.T
        sims[:, ~self.valid] = -np.inf
        sims[np.arange(len(rows)), rows] = -np.inf
        order = np.argsort(-sims, axis=1, kind="stable")
        return order[:, :k]

    def neighbors(self, j: int) -> np.ndarray:
        return self.neighbor_table([j])[0]

    def jaccard_table(self, rows, table=None) -> np.ndarray:
        """Jaccard weight between each row's neighborhood and each neighbor's neighborhood."""
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        if table is None:
            table = self.neighbor_table(rows)
        if table.shape[1] == 0:
            return np.zeros(table.shape)
        uniq, inv = np.unique(table, return_inverse=True)
        nb_sets = [set(r) for r in self.neighbor_table(uniq).tolist()]
        inv = inv.reshape(table.shape)
        weights = np.empty(table.shape)
        for a, row in enumerate(table.tolist()):
            own = set(row)
            for b in range(len(row)):
                weights[a, b] = jaccard_weight(own, nb_sets[inv[a, b]])
        return weights

    def similarity_probs(self, j: int) -> np.ndarray:
        nb = self.neighbors(j)
        if len(nb) == 0:
            raise ValueError(f"row {j} has no neighbors yet")
        return softmax(self.entries[nb] @ self.entries[j] / self.tau)


def bank_update(bank: MemoryBank, j: int, z) -> MemoryBank:
    return bank.update([j], [z])


def neighbors(bank: MemoryBank, j: int) -> np.ndarray:
    return bank.neighbors(j)


def similarity_probs(bank: MemoryBank, j: int) -> np.ndarray:
    return bank.similarity_probs(j)


def jaccard_weight(a, b) -> float:
    """|a & b| / |a | b|; two empty sets give 0."""
    a, b = set(a), set(b)
    union = len(a | b)
    return len(a & b) / union if union else 0.0
