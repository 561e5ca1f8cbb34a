"""Computed-versus-published comparison of persisted sweep results."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .config import parse_config
from .tables import DEFAULT_TABLE, PaperTable, get_table


class ResultIntegrityError(ValueError):
    """Persisted result does not match the configuration it claims."""


@dataclass(frozen=True)
class Cell:
    row: object
    col: object
    computed: float
    paper: float
    tolerance: float

    @property
    def deviation(self) -> float:
        return self.computed - self.paper

    @property
    def flagged(self) -> bool:
        return abs(self.deviation) > self.tolerance


@dataclass(frozen=True)
class Comparison:
    table: PaperTable
    source: str
    config_hash: str
    cells: tuple

    @property
    def n_flagged(self) -> int:
        return sum(c.flagged for c in self.cells)

    def to_markdown(self) -> str:
        t = self.table
        lines = [
            f"## {t.title} (`{t.key}`)",
            "",
            f"Source `{self.source}`, config hash `{self.config_hash[:12]}`. "
            f"Tolerance +-{self.cells[0].tolerance:g} on `{t.quantity}`; "
            f"{len(self.cells)} matched cells, {self.n_flagged} flagged.",
            "",
            f"| {t.row_name} | {t.col_name} | computed | paper | deviation | flag |",
            "|---|---|---|---|---|---|",
        ]
        for c in self.cells:
            lines.append(
                f"| {_label(c.row)} | {_label(c.col)} | {c.computed:.4f} | {c.paper:.4f} | {c.deviation:+.4f} | {'FLAG' if c.flagged else ''} |"
            )
        return "\n".join(lines) + "\n"


def _label(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (tuple, list)):
        return " / ".join(_label(x) for x in v)
    return f"{v:g}"


def _key(v):
    return tuple(v) if isinstance(v, list) else v


def load_result(json_path: str | Path) -> dict:
    """Load a result's JSON metadata and check it against its config and CSV.

    Raises
    ------
    ResultIntegrityError
        The recorded hash differs from the hash of the embedded config, or
        the CSV header or checksum does not match.
    """
    path = Path(json_path)
    if path.suffix == ".csv":
        path = path.with_suffix(".json")
    meta = json.loads(path.read_text())
    cfg = parse_config({k: v for k, v in meta["config"].items() if v != [] and v != ()})
    if cfg.config_hash() != meta.get("config_hash"):
        raise ResultIntegrityError(f"{path}: recorded config hash does not match the embedded config")
    csv_path = path.parent / meta.get("csv", path.with_suffix(".csv").name)
    if csv_path.exists():
        text = csv_path.read_text()
        first = text.splitlines()[0] if text else ""
        if f"config_hash={meta['config_hash']}" not in first:
            raise ResultIntegrityError(f"{csv_path}: config hash differs from {path.name}")
        if "csv_sha256" in meta and hashlib.sha256(text.encode()).hexdigest() != meta["csv_sha256"]:
            raise ResultIntegrityError(f"{csv_path}: content changed since it was written")
    meta["_config"] = cfg
    meta["_source"] = str(path)
    return meta


def compare(meta: dict, table_key: str | None = None) -> Comparison:
    """Match the cells of a loaded result against a published table."""
    cfg = meta["_config"]
    key = table_key or cfg.paper_table or DEFAULT_TABLE.get(cfg.experiment)
    if key is None:
        raise KeyError(f"no paper table for experiment {cfg.experiment!r}")
    table = get_table(key)
    tol = cfg.tolerance[table.tolerance]
    axes = list(meta["axes"])
    if len(axes) != 2:
        raise ValueError("table comparison needs a two-axis sweep")
    any_col = len(table.cols) == 1 and table.cols[0] is None
    cells, seen = [], set()
    for r in meta["rows"]:
        row, col = _key(r[axes[0]]), _key(r[axes[1]])
        paper = table.lookup(row, None if any_col else col)
        if paper is None or r.get(table.quantity) is None:
            continue
        if any_col:
            if row in seen:
                continue
            seen.add(row)
            col = None
        cells.append(Cell(row, col, float(r[table.quantity]), paper, tol))
    if not cells:
        raise ValueError(f"{meta['_source']}: no cells overlap table {table.key}")
    return Comparison(table, meta["_source"], meta["config_hash"], tuple(cells))


def report(results, table: str | None = None, expected_hash: str | None = None) -> str:
    """Markdown report for one or more result files.

    ``expected_hash`` (optional) must match the config hash of every result.
    """
    parts = ["# Comparison with published tables", ""]
    total = 0
    for src in results:
        meta = load_result(src) if not isinstance(src, dict) else src
        if expected_hash is not None and meta["config_hash"] != expected_hash:
            raise ResultIntegrityError(f"{meta['_source']}: config hash {meta['config_hash'][:12]} != expected {expected_hash[:12]}")
        cmp = compare(meta, table)
        total += cmp.n_flagged
        parts.append(cmp.to_markdown())
    parts.append(f"Total flagged cells: {total}\n")
    return "\n".join(parts)


def read_result_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))
