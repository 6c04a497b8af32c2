"""Experiment reports: fixed-column rows, persistence, and the seed audit."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

CSV_COLUMNS = [
    "experiment", "n", "p", "t", "q", "measure", "body",
    "lhs_log", "rhs_exponent", "fitted_C", "seed", "wall_ms",
]

# wall time is the one column that cannot reproduce across runs
AUDIT_IGNORED = {"wall_ms"}


@dataclass
class Row:
    """One grid cell: empirical packing exponent against a theorem exponent."""

    experiment: str
    n: int
    p: float
    t: float
    q: float
    measure: str
    body: str
    lhs_log: float
    rhs_exponent: float
    fitted_C: float
    seed: int
    wall_ms: float
    note: str = ""
    extra: dict = field(default_factory=dict)

    def csv_values(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]

    def to_dict(self) -> dict:
        return asdict(self)


def skipped_row(experiment, n, p, t, q, measure, body, seed, reason) -> Row:
    return Row(experiment, n, p, t, q, measure, body,
               lhs_log=math.nan, rhs_exponent=math.nan, fitted_C=math.nan,
               seed=seed, wall_ms=0.0, note=f"skipped: {reason}")


@dataclass
class ExperimentReport:
    """Rows plus metadata; reproducible from (config, seed) by construction."""

    rows: list
    metadata: dict

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "rows": [r.to_dict() for r in self.rows]}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentReport":
        rows = [Row(**r) for r in doc["rows"]]
        return cls(rows=rows, metadata=doc["metadata"])

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "ExperimentReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(row.csv_values())
        return buf.getvalue()

    def to_table(self) -> str:
        cols = CSV_COLUMNS
        cells = [[_fmt(v) for v in row.csv_values()] for row in self.rows]
        widths = [max(len(c), *(len(r[i]) for r in cells)) if cells else len(c)
                  for i, c in enumerate(cols)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for r in cells:
            lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
        fitted = self.metadata.get("fitted_constants", {})
        if fitted:
            lines.append("")
            for k, v in sorted(fitted.items()):
                lines.append(f"fitted {k}: {_fmt(v)}")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    return str(v)


def numeric_fingerprint(report: ExperimentReport) -> list:
    """All reproducible numeric columns, for byte-level audit comparison."""
    out = []
    for row in report.rows:
        d = row.to_dict()
        d.pop("extra", None)
        for k in AUDIT_IGNORED:
            d.pop(k, None)
        out.append(json.dumps(d, sort_keys=True))
    out.append(json.dumps(report.metadata.get("fitted_constants", {}),
                          sort_keys=True))
    return out


def seed_audit(report: ExperimentReport):
    """Re-run the embedded config and compare every numeric column.

    Returns (ok, mismatches).  Wall-time columns are excluded: they are the
    only quantity not a pure function of (config, seed).
    """
    from .config import ExperimentConfig
    from .experiments import run

    cfg_doc = dict(report.metadata["config"])
    cfg_doc.pop("output", None)
    cfg = ExperimentConfig.from_dict(cfg_doc)
    fresh = run(cfg)
    old = numeric_fingerprint(report)
    new = numeric_fingerprint(fresh)
    mismatches = [i for i, (a, b) in enumerate(zip(old, new)) if a != b]
    if len(old) != len(new):
        mismatches.append(min(len(old), len(new)))
    return (not mismatches, mismatches)
