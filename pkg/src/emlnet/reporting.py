"""CSV emitters/parsers and the variant-by-task comparison table."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .evaluation import EvalResult
from .losses import LossReport

HISTORY_FIELDS = ("step", "lr", "cls", "ova", "oem", "nil", "cmm", "cc", "total")
CELL_FIELDS = ("variant", "task", "seed", "os_star", "unk", "hsc")


def _write(fieldnames, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def _read(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def history_csv(reports: list[LossReport], lrs: list[float]) -> str:
    rows = []
    for step, (rep, lr) in enumerate(zip(reports, lrs)):
        row = {"step": step, "lr": float(lr)}
        row.update({f: float(getattr(rep, f)) for f in HISTORY_FIELDS[2:]})
        rows.append(row)
    return _write(HISTORY_FIELDS, rows)


def parse_history_csv(text: str) -> list[dict]:
    return [{k: int(v) if k == "step" else float(v) for k, v in row.items()} for row in _read(text)]


def eval_csv(results: list[EvalResult]) -> str:
    return _write(EvalResult.CSV_FIELDS, [r.csv_row() for r in results])


def parse_eval_csv(text: str) -> list[dict]:
    return [{k: float(v) for k, v in row.items()} for row in _read(text)]


@dataclass(frozen=True)
class Cell:
    variant: str
    task: str
    seed: int
    os_star: float
    unk: float
    hsc: float


def cells_csv(cells: list[Cell]) -> str:
    return _write(CELL_FIELDS, [c.__dict__ for c in cells])


def parse_cells_csv(text: str) -> list[Cell]:
    return [
        Cell(r["variant"], r["task"], int(r["seed"]), float(r["os_star"]), float(r["unk"]), float(r["hsc"]))
        for r in _read(text)
    ]


class ComparisonTable:
    """HSC percentages: one row per variant, one column per (task, seed).

    A variant wins a column when no other variant scores higher there; ties
    credit every tied variant.
    """

    def __init__(self, cells: list[Cell]):
        self.cells = list(cells)
        self.variants = list(dict.fromkeys(c.variant for c in cells))
        self.columns = list(dict.fromkeys((c.task, c.seed) for c in cells))
        lookup = {(c.variant, c.task, c.seed): c.hsc for c in cells}
        self.values = np.array(
            [[lookup[v, t, s] * 100.0 for t, s in self.columns] for v in self.variants]
        )

    def means(self) -> np.ndarray:
        return self.values.mean(axis=1)

    def wins(self) -> np.ndarray:
        best = self.values.max(axis=0)
        return (self.values >= best).sum(axis=1)

    def header(self) -> list[str]:
        return ["method"] + [f"{t} s{s}" for t, s in self.columns] + ["avg", "wins"]

    def rows(self) -> list[list[str]]:
        out = []
        for v, vals, mean, wins in zip(self.variants, self.values, self.means(), self.wins()):
            out.append([v] + [f"{x:.1f}" for x in vals] + [f"{mean:.1f}", str(int(wins))])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_text(self) -> str:
        """Aligned table; task headers use the shared/source-private/target-private notation."""
        table = [self.header()] + self.rows()
        widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
        lines = []
        for n, row in enumerate(table):
            cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(cells))
            if n == 0:
                lines.append("-" * len(lines[0]))
        return "\n".join(lines) + "\n"
