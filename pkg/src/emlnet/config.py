"""Experiment configuration: sectioned ``key = value`` text files.

Every key has a documented default (see ``SCHEMA``); :func:`to_text` writes
the fully resolved configuration so a run never depends on implicit state.
Errors point at ``path:line``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .losses import OEM_MODES, LossWeights
from .scenario import SplitSpec
from .trainer import MemoryConfig, ModelConfig, OptimConfig


class ConfigError(ValueError):
    pass


VARIANTS = {
    "weighted": {"oem_mode": "weighted"},
    "uniform": {"oem_mode": "uniform"},
    "source_only": {"beta1": 0.0, "beta2": 0.0, "eta": 0.0, "gamma": 0.0},
    "weighted_detach": {"oem_mode": "weighted", "detach_weights": True},
    "no_nil": {"beta1": 0.0},
    "no_cmm": {"beta2": 0.0},
    "no_cc": {"eta": 0.0},
    "no_oem": {"gamma": 0.0},
}


@dataclass(frozen=True)
class Task:
    split: SplitSpec
    shift: float | None = None

    @classmethod
    def parse(cls, text: str) -> "Task":
        text = text.strip()
        if "@" in text:
            s, shift = text.split("@", 1)
            return cls(SplitSpec.parse(s), float(shift))
        return cls(SplitSpec.parse(text))

    def __str__(self):
        return str(self.split) if self.shift is None else f"{self.split}@{self.shift!r}"


@dataclass(frozen=True)
class ExperimentConfig:
    split: SplitSpec = SplitSpec(5, 2, 3)
    dim: int = 16
    n_per_class: int = 60
    shift: float = 2.0
    spread: float = 1.0
    manifest: str = ""
    model: ModelConfig = ModelConfig()
    optim: OptimConfig = OptimConfig()
    weights: LossWeights = LossWeights()
    oem_mode: str = "weighted"
    memory: MemoryConfig = MemoryConfig()
    threshold: float = 0.5
    unk_per_class: bool = False
    sweep_grid: tuple = tuple(i / 20 for i in range(21))
    seeds: tuple = (0,)
    out: str = "runs"
    variants: tuple = ("uniform", "weighted")
    tasks: tuple = ()

    def variant(self, name: str) -> "ExperimentConfig":
        """This configuration with a named variant's overrides applied."""
        if name not in VARIANTS:
            raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
        over = dict(VARIANTS[name])
        mode = over.pop("oem_mode", self.oem_mode)
        return replace(self, oem_mode=mode, weights=replace(self.weights, **over))

    def for_task(self, task: Task) -> "ExperimentConfig":
        return replace(self, split=task.split, shift=self.shift if task.shift is None else task.shift)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _list(conv):
    def parse(text):
        return tuple(conv(t) for t in re.split(r"[,\s]+", text.strip()) if t)
    return parse


def _fmt_list(values):
    return ", ".join(str(v) if not isinstance(v, float) else repr(v) for v in values)


def _oem(text):
    t = text.strip()
    if t not in OEM_MODES:
        raise ValueError(f"oem_mode must be one of {OEM_MODES}")
    return t


def _variant_list(text):
    names = _list(str)(text)
    for n in names:
        if n not in VARIANTS:
            raise ValueError(f"unknown variant {n!r}; choose from {sorted(VARIANTS)}")
    return names


# (section, key, attribute path, parser, formatter)
SCHEMA = [
    ("scenario", "split", "split", SplitSpec.parse, str),
    ("scenario", "dim", "dim", int, str),
    ("scenario", "n_per_class", "n_per_class", int, str),
    ("scenario", "shift", "shift", float, repr),
    ("scenario", "spread", "spread", float, repr),
    ("scenario", "manifest", "manifest", str.strip, str),
    ("model", "hidden", "model.hidden", _list(int), _fmt_list),
    ("model", "d_feat", "model.d_feat", int, str),
    ("optim", "lr_backbone", "optim.lr_backbone", float, repr),
    ("optim", "lr_heads", "optim.lr_heads", float, repr),
    ("optim", "momentum", "optim.momentum", float, repr),
    ("optim", "weight_decay", "optim.weight_decay", float, repr),
    ("optim", "schedule", "optim.schedule", _list(float), _fmt_list),
    ("optim", "epochs", "optim.epochs", int, str),
    ("optim", "batch", "optim.batch", int, str),
    ("loss", "beta1", "weights.beta1", float, repr),
    ("loss", "beta2", "weights.beta2", float, repr),
    ("loss", "eta", "weights.eta", float, repr),
    ("loss", "gamma", "weights.gamma", float, repr),
    ("loss", "alpha", "weights.alpha", float, repr),
    ("loss", "detach_weights", "weights.detach_weights", _bool, lambda v: str(v).lower()),
    ("loss", "oem_mode", "oem_mode", _oem, str),
    ("memory", "k_nn", "memory.k_nn", int, str),
    ("memory", "tau", "memory.tau", float, repr),
    ("memory", "momentum", "memory.momentum", float, repr),
    ("eval", "threshold", "threshold", float, repr),
    ("eval", "unk_per_class", "unk_per_class", _bool, lambda v: str(v).lower()),
    ("eval", "sweep_grid", "sweep_grid", _list(float), _fmt_list),
    ("experiment", "seeds", "seeds", _list(int), _fmt_list),
    ("experiment", "out", "out", str.strip, str),
    ("ablate", "variants", "variants", _variant_list, _fmt_list),
    ("ablate", "tasks", "tasks", _list(Task.parse), _fmt_list),
]
_KEYS = {(s, k): (attr, parse) for s, k, attr, parse, _ in SCHEMA}


def _get(cfg, attr):
    obj = cfg
    for part in attr.split("."):
        obj = getattr(obj, part)
    return obj


def _set(cfg, attr, value):
    head, _, rest = attr.partition(".")
    if not rest:
        return replace(cfg, **{head: value})
    return replace(cfg, **{head: _set(getattr(cfg, head), rest, value)})


def parse_text(text: str, source: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig()
    section = None
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        m = re.fullmatch(r"\[\s*([\w-]+)\s*\]", line)
        if m:
            section = m.group(1)
            if section not in {s for s, *_ in SCHEMA}:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside any [section]")
        key, value = (s.strip() for s in line.split("=", 1))
        if (section, key) not in _KEYS:
            raise ConfigError(f"{where}: unknown key '{key}' in [{section}]")
        if (section, key) in seen:
            raise ConfigError(f"{where}: '{key}' already set on line {seen[section, key]}")
        seen[section, key] = lineno
        attr, parse = _KEYS[section, key]
        try:
            cfg = _set(cfg, attr, parse(value))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: bad value for '{key}': {exc}") from None
    return _validate(cfg, source)


def _validate(cfg: ExperimentConfig, source: str) -> ExperimentConfig:
    # rebuild frozen sub-configs so their own invariants run on the final values
    try:
        OptimConfig(**{f: getattr(cfg.optim, f) for f in OptimConfig.__dataclass_fields__})
        LossWeights(**{f: getattr(cfg.weights, f) for f in LossWeights.__dataclass_fields__})
        MemoryConfig(**{f: getattr(cfg.memory, f) for f in MemoryConfig.__dataclass_fields__})
        if len(cfg.optim.schedule) != 2:
            raise ValueError("schedule needs two numbers: a, b")
        if not cfg.seeds:
            raise ValueError("at least one seed is required")
        if not 0.0 <= cfg.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_text(path.read_text(encoding="utf-8"), str(path))


def to_text(cfg: ExperimentConfig) -> str:
    lines, section = [], None
    for sec, key, attr, _, fmt in SCHEMA:
        if sec != section:
            if lines:
                lines.append("")
            lines.append(f"[{sec}]")
            section = sec
        lines.append(f"{key} = {fmt(_get(cfg, attr))}".rstrip())
    return "\n".join(lines) + "\n"
