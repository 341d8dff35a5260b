"""Versioned CSV tables, JSON sidecars and run configuration files."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from ._compat import StrEnum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, SchemaError
from .sweeps import SweepResult

SCHEMA_LINE = "# varprop-csv v1"
KIND_PREFIX = "# kind="


class CsvKind(StrEnum):
    BENCH = "bench"
    GRAPHENE = "graphene"
    HUBBARD_LEVELS = "hubbard-levels"
    HUBBARD_AGGREGATE = "hubbard-aggregate"


@dataclass
class CsvTable:
    kind: CsvKind
    header: List[str]
    rows: List[List[str]]

    def column(self, name: str) -> List[str]:
        if name not in self.header:
            raise SchemaError(f"{self.kind} table has no column {name!r}")
        i = self.header.index(name)
        return [row[i] for row in self.rows]

    def floats(self, name: str) -> np.ndarray:
        return np.array([float(v) for v in self.column(name)])


def format_value(value: Any) -> str:
    """Round-trip exact text for floats, plain text for everything else."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _atomic_write_text(path: Path, text: str):
    temp_file = path.with_name(path.name + ".tmp")
    with open(temp_file, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    temp_file.replace(path)


def write_csv(path: Path, kind: CsvKind, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    """Writes the schema line, the kind line, the header and rows atomically."""
    buffer = io.StringIO()
    buffer.write(f"{SCHEMA_LINE}\n{KIND_PREFIX}{kind}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"Row has {len(row)} fields, header has {len(header)}")
        writer.writerow([format_value(v) for v in row])
    _atomic_write_text(Path(path), buffer.getvalue())


def sweep_rows(
    result: SweepResult, extra: Optional[Dict[str, Any]] = None
) -> Tuple[List[str], List[List[Any]]]:
    """(header, rows) for a sweep, with constant extra columns appended."""
    extra = extra or {}
    header = [result.abscissa_name, *result.columns.keys(), *extra.keys()]
    rows = [
        [x, *(values[i] for values in result.columns.values()), *extra.values()]
        for i, x in enumerate(result.abscissa)
    ]
    return header, rows


def read_csv(path: Path) -> CsvTable:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Input CSV not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = f.read().splitlines()

    if len(lines) < 3 or lines[0] != SCHEMA_LINE:
        raise SchemaError(f"{path} does not start with '{SCHEMA_LINE}'")
    if not lines[1].startswith(KIND_PREFIX):
        raise SchemaError(f"{path} has no '{KIND_PREFIX}' line")
    try:
        kind = CsvKind(lines[1][len(KIND_PREFIX) :])
    except ValueError as e:
        raise SchemaError(f"{path}: unknown table kind {lines[1]!r}") from e

    parsed = list(csv.reader(lines[2:]))
    header, rows = parsed[0], parsed[1:]
    for row in rows:
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {row} does not match header {header}")
    return CsvTable(kind, header, rows)


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_sidecar(path: Path, config: Dict[str, Any], summary: Dict[str, Any]) -> Path:
    """Saves the run configuration and summary statistics next to an output file."""
    out = sidecar_path(path)
    text = json.dumps(
        {"config": config, "summary": summary}, indent=2, sort_keys=True, default=str
    )
    _atomic_write_text(out, text + "\n")
    return out


def load_config(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            config = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(config, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return config


def validate_output_path(path: Path, inputs: Sequence[Path] = ()) -> Path:
    """Creates the parent directory if needed; refuses to overwrite an input."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"Cannot create output directory {path.parent}: {e}") from e
    if path.is_dir():
        raise ConfigError(f"Output path {path} is a directory")
    resolved = path.resolve()
    for source in inputs:
        if Path(source).resolve() == resolved:
            raise ConfigError(f"Output {path} would overwrite input {source}")
    return path
