"""Check records and deterministic report files (summary.json plus CSV tables)."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .snapshot import atomic_write_bytes


@dataclass
class CheckResult:
    """One verified statement: pass iff ``lhs <= rhs + tolerance`` (or as the producer decides)."""

    name: str
    anchor: str
    lhs: float
    rhs: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "anchor": self.anchor, "lhs": self.lhs, "rhs": self.rhs,
            "tolerance": self.tolerance, "pass": bool(self.passed), "detail": self.detail,
        }

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: lhs={self.lhs:.3e} rhs={self.rhs:.3e} tol={self.tolerance:.1e}"


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def to_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False, allow_nan=False) + "\n"


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def write_text(path: str | os.PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path: str | os.PathLike, header, rows) -> Path:
    return write_text(path, csv_text(header, rows))


def emit_report(out_dir: str | os.PathLike, checks: list[CheckResult], tables: dict | None = None,
                extra: dict | None = None) -> dict:
    """Write ``summary.json`` and one CSV per table; returns the summary dict.

    ``tables`` maps a file stem to ``(header, rows)``.  The summary's
    ``all_pass`` is true for an empty check list.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for stem, (header, rows) in (tables or {}).items():
        write_csv(out / f"{stem}.csv", header, rows)
    summary = {
        "n_checks": len(checks),
        "n_failed": sum(not c.passed for c in checks),
        "all_pass": all(c.passed for c in checks),
        "checks": [c.to_dict() for c in checks],
    }
    if extra:
        summary.update(extra)
    write_text(out / "summary.json", to_json(summary))
    return summary
