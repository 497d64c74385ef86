"""Versioned, bit-stable CSV and JSON result tables.

Reals are written as 6-decimal fixed point, columns keep their declared order
and the first line of every CSV file identifies the table kind, format
version, master seed and config hash.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TABLE_VERSION = 1
PREFIX = "knnorder"


@dataclass
class Table:
    kind: str
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)  # written and read back as strings

    def add(self, **values):
        unknown = set(values) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)} for table {self.kind}")
        self.rows.append({c: values.get(c) for c in self.columns})

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return f"{float(value):.6f}"
    return str(value)


def _json_value(value):
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if math.isnan(value) else float(f"{float(value):.6f}")
    return str(value)


def _parse_cell(text: str):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    if text == "nan":
        return float("nan")
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _header_line(table: Table) -> str:
    parts = [f"# {PREFIX}/{table.kind} v{TABLE_VERSION}"]
    parts += [f"{k}={table.meta[k]}" for k in sorted(table.meta)]
    return " ".join(parts)


def to_csv(table: Table) -> str:
    buf = io.StringIO()
    buf.write(_header_line(table) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_cell(row[c]) for c in table.columns])
    return buf.getvalue()


def to_json(table: Table) -> str:
    doc = {
        "format": f"{PREFIX}/{table.kind}",
        "version": TABLE_VERSION,
        "meta": {k: str(table.meta[k]) for k in sorted(table.meta)},
        "columns": list(table.columns),
        "rows": [[_json_value(row[c]) for c in table.columns] for row in table.rows],
    }
    return json.dumps(doc, indent=1) + "\n"


def emit(table: Table, fmt: str, path) -> Path:
    """Write ``table`` to ``path`` as csv or json; returns the path written."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown output format {fmt!r}")
    path = Path(path)
    text = to_csv(table) if fmt == "csv" else to_json(table)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _parse_meta(line: str) -> tuple[str, dict]:
    tokens = line.lstrip("#").split()
    if not tokens or not tokens[0].startswith(PREFIX + "/"):
        raise ValueError("missing table header line")
    kind = tokens[0].split("/", 1)[1]
    version = tokens[1] if len(tokens) > 1 else ""
    if version != f"v{TABLE_VERSION}":
        raise ValueError(f"unsupported table version {version!r}")
    meta = {}
    for tok in tokens[2:]:
        key, _, value = tok.partition("=")
        meta[key] = value
    return kind, meta


def from_csv(text: str) -> Table:
    lines = text.splitlines()
    kind, meta = _parse_meta(lines[0])
    reader = csv.reader(lines[1:])
    columns = next(reader)
    table = Table(kind, columns, meta=meta)
    for rec in reader:
        table.rows.append({c: _parse_cell(v) for c, v in zip(columns, rec)})
    return table


def from_json(text: str) -> Table:
    doc = json.loads(text)
    if doc.get("version") != TABLE_VERSION:
        raise ValueError(f"unsupported table version {doc.get('version')!r}")
    kind = doc["format"].split("/", 1)[1]
    columns = doc["columns"]
    table = Table(kind, columns, meta={k: str(v) for k, v in doc.get("meta", {}).items()})
    for rec in doc["rows"]:
        table.rows.append(dict(zip(columns, rec)))
    return table


def read_table(path) -> Table:
    path = Path(path)
    text = path.read_text()
    return from_json(text) if text.lstrip().startswith("{") else from_csv(text)


# dumped training sets ---------------------------------------------------------------------

TRAINING_KIND = "training-set"


def training_to_csv(ts, **meta) -> str:
    """Exact text dump of a training set: columns x1..xd,label (reals at full precision)."""
    info = {"model": ts.model}
    if ts.seed_record:
        info["seed"], info["stream"] = ts.seed_record[0], ts.seed_record[1]
    info.update(meta)
    buf = io.StringIO()
    buf.write(f"# {PREFIX}/{TRAINING_KIND} v{TABLE_VERSION} "
              + " ".join(f"{k}={info[k]}" for k in sorted(info)) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{j + 1}" for j in range(ts.d)] + ["label"])
    for point, lab in zip(ts.points, ts.labels):
        writer.writerow([repr(float(v)) for v in point] + [lab])
    return buf.getvalue()


def training_from_csv(text: str):
    from .sampling import MODELS, POISSON, TrainingSet

    lines = text.splitlines()
    kind, meta = _parse_meta(lines[0])
    if kind != TRAINING_KIND:
        raise ValueError(f"expected a {TRAINING_KIND} file, got {kind!r}")
    reader = csv.reader(lines[1:])
    columns = next(reader)
    if not columns or columns[-1] != "label" or columns[:-1] != [f"x{j + 1}" for j in range(len(columns) - 1)]:
        raise ValueError("training-set columns must be x1..xd,label")
    d = len(columns) - 1
    points, labels = [], []
    for lineno, rec in enumerate(reader, start=3):
        if len(rec) != d + 1:
            raise ValueError(f"line {lineno}: expected {d + 1} fields")
        points.append([float(v) for v in rec[:d]])
        labels.append(rec[d])
    model = meta.get("model", POISSON)
    if model not in MODELS:
        model = POISSON
    record = ()
    if "seed" in meta and "stream" in meta:
        record = (int(meta["seed"]), int(meta["stream"]))
    return TrainingSet.from_labels(np.asarray(points, dtype=float).reshape(-1, d), labels,
                                   model=model, seed_record=record)


def write_training(ts, path, **meta) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(training_to_csv(ts, **meta))
    return path


def read_training(path):
    return training_from_csv(Path(path).read_text())
