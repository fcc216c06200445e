"""Synthetic and file-backed source/target problem instances."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

#: Evaluation label for target samples whose class the source never saw.
UNKNOWN = -1


class FeatureFileError(ValueError):
    """Malformed feature file; the message carries ``path:line``."""


@dataclass(frozen=True)
class SplitSpec:
    n_shared: int
    n_source_private: int
    n_target_private: int

    def __post_init__(self):
        if min(self.n_shared, self.n_source_private, self.n_target_private) < 0:
            raise ValueError(f"split counts must be >= 0, got {self}")
        if self.K < 2:
            raise ValueError(f"need at least 2 source classes, split {self} gives K={self.K}")

    @property
    def K(self) -> int:
        return self.n_shared + self.n_source_private

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        """Parse ``shared/source-private/target-private``, e.g. ``"10/10/11"``."""
        parts = text.strip().split("/")
        if len(parts) != 3:
            raise ValueError(f"split must look like 'a/b/c', got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError as exc:
            raise ValueError(f"bad split {text!r}: {exc}") from None

    def __str__(self):
        return f"{self.n_shared}/{self.n_source_private}/{self.n_target_private}"

    @property
    def setting(self) -> str:
        sp, tp = self.n_source_private > 0, self.n_target_private > 0
        return {(False, False): "CDA", (True, False): "PDA",
                (False, True): "ODA", (True, True): "OPDA"}[(sp, tp)]


@dataclass
class DomainDataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    label_space: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or len(self.features) < 1:
            raise ValueError("a domain needs a non-empty (N, d) feature matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("feature rows must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.features),):
                raise ValueError("labels must have one entry per feature row")
            if not self.label_space:
                self.label_space = frozenset(int(v) for v in np.unique(self.labels))
            elif not set(np.unique(self.labels).tolist()) <= self.label_space:
                raise ValueError("labels fall outside the declared label space")

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class Scenario:
    source: DomainDataset
    target: DomainDataset
    split: SplitSpec

    @property
    def K(self) -> int:
        return self.split.K

    @property
    def shared_classes(self) -> frozenset:
        return frozenset(range(self.split.n_shared))

    def target_eval_labels(self) -> np.ndarray | None:
        """Target ground truth with every non-source class collapsed to UNKNOWN."""
        if self.target.labels is None:
            return None
        y = self.target.labels
        return np.where((y >= 0) & (y < self.K), y, UNKNOWN)


def _sphere(rng, n, d, radius):
    v = rng.standard_normal((n, d))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True)


def _repelled_means(rng, n, d, radius, min_dist, fixed=None, max_tries=2_000):
    """Draw n points on the sphere, each at least min_dist from the others and from ``fixed``.

    Returns None when a point cannot be placed, so the caller can restart.
    """
    fixed = np.empty((0, d)) if fixed is None else fixed
    means = np.empty((0, d))
    for _ in range(n):
        others = np.vstack([fixed, means])
        for _attempt in range(max_tries):
            cand = _sphere(rng, 1, d, radius)
            if len(others) == 0 or np.min(np.linalg.norm(others - cand, axis=1)) >= min_dist:
                means = np.vstack([means, cand])
                break
        else:
            return None
    return means


def _class_layout(rng, K, n_private, d, radius, min_dist, restarts=50):
    # sequential placement can box itself in, so redraw the whole layout when stuck
    for _ in range(restarts):
        source = _repelled_means(rng, K, d, radius, min_dist)
        if source is None:
            continue
        private = _repelled_means(rng, n_private, d, radius, min_dist, fixed=source)
        if private is not None:
            return source, private
    raise ValueError(
        f"cannot place {K + n_private} class means {min_dist:g} apart on a radius-{radius:g} sphere in {d} dims"
    )


def generate_scenario(
    split: SplitSpec,
    d: int = 16,
    n_per_class: int = 60,
    shift_magnitude: float = 2.0,
    spread: float = 1.0,
    seed: int = 0,
) -> Scenario:
    """Gaussian class clouds for a source domain and a shifted target domain.

    Source classes are ``0..K-1`` (shared first, then source-private).
    Target-private classes get ids ``K..K+n_target_private-1`` and their means
    are kept away from every source mean. Each target class is displaced by its
    own random vector of norm ``shift_magnitude``.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if n_per_class < 4:
        raise ValueError("n_per_class must be >= 4")
    if spread <= 0:
        raise ValueError("spread must be positive")
    if split.K < 2:
        raise ValueError("split must define at least 2 source classes")

    rng = np.random.default_rng(seed)
    radius, min_dist = 10.0 * spread, 4.0 * spread
    K, n_tp = split.K, split.n_target_private
    source_means, private_means = _class_layout(rng, K, n_tp, d, radius, min_dist)

    target_ids = list(range(split.n_shared)) + list(range(K, K + n_tp))
    target_means = np.vstack([source_means[: split.n_shared], private_means])
    shifts = _sphere(rng, len(target_ids), d, 1.0) * shift_magnitude

    xs = source_means[np.repeat(np.arange(K), n_per_class)]
    xs = xs + spread * rng.standard_normal(xs.shape)
    ys = np.repeat(np.arange(K), n_per_class)

    xt = (target_means + shifts)[np.repeat(np.arange(len(target_ids)), n_per_class)]
    xt = xt + spread * rng.standard_normal(xt.shape)
    yt = np.repeat(np.array(target_ids, dtype=np.int64), n_per_class)

    ps, pt = rng.permutation(len(xs)), rng.permutation(len(xt))
    source = DomainDataset(xs[ps], ys[ps], frozenset(range(K)))
    target = DomainDataset(xt[pt], yt[pt], frozenset(target_ids))
    return Scenario(source, target, split)


# -- feature files -----------------------------------------------------------

def save_features(path, dataset: DomainDataset) -> None:
    """Write ``N d`` then one row per sample, labels appended when present."""
    lines = [f"{dataset.n} {dataset.dim}"]
    for i, row in enumerate(dataset.features):
        fields = [repr(float(v)) for v in row]
        if dataset.labels is not None:
            fields.append(str(int(dataset.labels[i])))
        lines.append(" ".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_features(path, has_labels: bool | None = True) -> DomainDataset:
    """Parse a feature file.

    With ``has_labels=None`` the label column is detected from the first row.
    """
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    def fail(lineno, msg):
        raise FeatureFileError(f"{path}:{lineno}: {msg}")

    numbered = [(i + 1, ln.strip()) for i, ln in enumerate(lines)]
    numbered = [(i, ln) for i, ln in numbered if ln]
    if not numbered:
        fail(1, "missing header '<N> <d>'")
    lineno, header = numbered[0]
    try:
        n, d = (int(t) for t in header.split())
    except ValueError:
        fail(lineno, f"missing header '<N> <d>', got {header!r}")
    body = numbered[1:]
    if n == 0 or not body:
        fail(lineno, "no samples")
    if d < 1:
        fail(lineno, f"dimension must be >= 1, got {d}")
    if len(body) != n:
        fail(body[-1][0], f"header declares {n} rows, found {len(body)}")

    if has_labels is None:
        has_labels = len(body[0][1].split()) == d + 1

    feats = np.empty((n, d))
    labels = np.empty(n, dtype=np.int64)
    for r, (lineno, text) in enumerate(body):
        tokens = text.split()
        if len(tokens) not in (d, d + 1):
            fail(lineno, f"expected {d} values (plus optional label), found {len(tokens)}")
        if has_labels and len(tokens) != d + 1:
            fail(lineno, "label missing")
        try:
            feats[r] = [float(t) for t in tokens[:d]]
        except ValueError:
            fail(lineno, "non-numeric field")
        if not np.all(np.isfinite(feats[r])):
            fail(lineno, "non-finite value")
        if has_labels:
            try:
                labels[r] = int(tokens[d])
            except ValueError:
                fail(lineno, f"label must be an integer, got {tokens[d]!r}")
    return DomainDataset(feats, labels if has_labels else None)


def save_scenario(scenario: Scenario, directory) -> Path:
    """Write source/target feature files and a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_features(directory / "source.txt", scenario.source)
    save_features(directory / "target.txt", scenario.target)
    manifest = directory / "manifest.txt"
    manifest.write_text(
        "source = source.txt\n"
        "target = target.txt\n"
        f"split = {scenario.split}\n"
        f"K = {scenario.K}\n",
        encoding="utf-8",
    )
    return manifest


def load_manifest(path) -> Scenario:
    """Load a scenario from a ``key = value`` manifest; file paths resolve relative to it."""
    path = Path(path)
    entries = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FeatureFileError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        entries[key] = (lineno, value)
    for key in ("source", "target", "split"):
        if key not in entries:
            raise FeatureFileError(f"{path}: manifest lacks '{key}'")
    split = SplitSpec.parse(entries["split"][1])
    if "K" in entries and int(entries["K"][1]) != split.K:
        raise FeatureFileError(f"{path}:{entries['K'][0]}: K={entries['K'][1]} disagrees with split {split}")
    source = load_features(path.parent / entries["source"][1], has_labels=True)
    target = load_features(path.parent / entries["target"][1], has_labels=None)
    source.label_space = frozenset(range(split.K))
    if not set(np.unique(source.labels).tolist()) <= source.label_space:
        raise FeatureFileError(f"{path}: source labels outside 0..{split.K - 1}")
    return Scenario(source, target, split)
