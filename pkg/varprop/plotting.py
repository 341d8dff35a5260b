"""Static SVG renderings of the varprop CSV tables."""

from __future__ import annotations

import io
import os
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

os.environ.setdefault("MPLCONFIGDIR", "/tmp/matplotlib")

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import SchemaError
from .records import CsvKind, CsvTable, read_csv

SVG_RC = {"svg.hashsalt": "varprop", "svg.fonttype": "path", "path.simplify": False}
FIGSIZE = (6.4, 4.8)

Curve = Tuple[str, np.ndarray, np.ndarray]


def _bench_curves(table: CsvTable) -> Tuple[str, str, List[Curve]]:
    methods, dims = table.column("method"), table.column("dim")
    t_norm, mean = table.floats("t_norm"), table.floats("l2_mean")
    curves = []
    for key in dict.fromkeys(zip(methods, dims)):
        mask = np.array([(m, d) == key for m, d in zip(methods, dims)])
        curves.append((f"{key[0]} (d={key[1]})", t_norm[mask], mean[mask]))
    return "t ||H||", "l2 distance", curves


def _graphene_curves(table: CsvTable) -> Tuple[str, str, List[Curve]]:
    p2 = table.floats("p2")
    return "p2 / gamma", "relative mismatch", [
        ("second order", p2, table.floats("delta_std")),
        ("variational", p2, table.floats("delta_var")),
    ]


def _hubbard_aggregate_curves(table: CsvTable) -> Tuple[str, str, List[Curve]]:
    x = table.floats("t_over_u")
    return "t / U", "relative error", [
        ("ground, second order", x, table.floats("err_std_ground")),
        ("ground, variational", x, table.floats("err_var_ground")),
        ("first half, second order", x, table.floats("err_std_first_half")),
        ("first half, variational", x, table.floats("err_var_first_half")),
    ]


def _hubbard_level_curves(table: CsvTable) -> Tuple[str, str, List[Curve]]:
    ground = table.floats("level_index") == 0
    x = table.floats("t_over_u")[ground]
    return "t / U", "relative error (ground level)", [
        ("second order", x, table.floats("err_std")[ground]),
        ("variational", x, table.floats("err_var")[ground]),
    ]


CURVE_BUILDERS: Dict[CsvKind, Callable[[CsvTable], Tuple[str, str, List[Curve]]]] = {
    CsvKind.BENCH: _bench_curves,
    CsvKind.GRAPHENE: _graphene_curves,
    CsvKind.HUBBARD_AGGREGATE: _hubbard_aggregate_curves,
    CsvKind.HUBBARD_LEVELS: _hubbard_level_curves,
}


def render_svg(table: CsvTable, log_y: bool = False, title: Optional[str] = None) -> bytes:
    """SVG bytes with no timestamp and fixed element ids."""
    if table.kind not in CURVE_BUILDERS:
        raise SchemaError(f"No plot defined for table kind {table.kind}")
    xlabel, ylabel, curves = CURVE_BUILDERS[table.kind](table)

    buffer = io.BytesIO()
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        for label, x, y in curves:
            if log_y:
                keep = y > 0
                x, y = x[keep], y[keep]
            ax.plot(x, y, label=label, linewidth=1.2)
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title or str(table.kind))
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buffer.getvalue()


def save_svg(path: Path, table: CsvTable, log_y: bool = False, title: Optional[str] = None):
    path = Path(path)
    temp_file = path.with_name(path.name + ".tmp")
    temp_file.write_bytes(render_svg(table, log_y, title))
    temp_file.replace(path)


def plot_csv(in_csv: Path, out_svg: Path, log_y: bool = False, title: Optional[str] = None):
    save_svg(out_svg, read_csv(in_csv), log_y, title)
