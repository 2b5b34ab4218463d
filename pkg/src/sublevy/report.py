"""Run reports and deterministic delimited/JSON output.

CSV cells are printed with repr-faithful %.17g formatting so identical runs
are byte-identical; timing lives only in the JSON report, never in CSV.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["RunReport", "write_field_csv", "write_table_csv", "write_report_json",
           "format_cell"]

SCHEMA_VERSION = 1


@dataclass
class RunReport:
    mode: str
    dt: float = 0.0
    n_steps: int = 0
    sup_norm_history: list = field(default_factory=list)
    argmax_hist: dict = field(default_factory=dict)
    final_argmax: list = field(default_factory=list)
    eps: float | None = None
    extension: str | None = None
    grid: dict = field(default_factory=dict)
    seed: int | None = None
    elapsed_s: float = 0.0
    metrics: dict = field(default_factory=dict)
    verification_passed: bool | None = None
    extras: dict = field(default_factory=dict)      # in-memory only (trace arrays etc)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = {
            "schema_version": self.schema_version,
            "mode": self.mode,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "sup_norm_history": self.sup_norm_history,
            "argmax_hist": self.argmax_hist,
            "final_argmax": self.final_argmax,
            "eps": self.eps,
            "extension": self.extension,
            "grid": self.grid,
            "seed": self.seed,
            "elapsed_s": self.elapsed_s,
            "metrics": self.metrics,
        }
        if self.verification_passed is not None:
            out["verification_passed"] = self.verification_passed
        return _plain(out)


def _plain(obj):
    """Recursively convert numpy scalars/arrays for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_field_csv(path, grid, values) -> None:
    """x (or x, y) coordinates plus field values, one grid point per row."""
    values = np.asarray(values)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if grid.dim == 1:
            w.writerow(["x", "u"])
            for x, u in zip(grid.axis(), values):
                w.writerow([format_cell(float(x)), format_cell(float(u))])
        else:
            w.writerow(["x", "y", "u"])
            ax = grid.axis()
            for i, x in enumerate(ax):
                for jj, y in enumerate(ax):
                    w.writerow([format_cell(float(x)), format_cell(float(y)),
                                format_cell(float(values[i, jj]))])


def write_table_csv(path, columns, rows) -> None:
    """rows may be dicts (keyed by column) or sequences in column order."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(columns))
        for row in rows:
            if isinstance(row, dict):
                w.writerow([format_cell(row[c]) for c in columns])
            else:
                w.writerow([format_cell(v) for v in row])


def write_report_json(path, report: RunReport) -> None:
    payload = json.dumps(report.to_dict(), sort_keys=True, indent=2)
    Path(path).write_text(payload + "\n")
