"""Outer-iteration records, solve reports and their text/CSV/JSON renderings."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .stationarity import Classification, PointKind, StationarityMeasures


class SolveStatus(str, enum.Enum):
    RUNNING = "Running"
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    LINE_SEARCH_FAILURE = "LineSearchFailure"
    EVALUATION_FAILURE = "EvaluationFailure"


@dataclass
class OuterRecord:
    """One table row.

    ``rho`` is the penalty parameter in force after the Step-2 update of this
    outer iteration, while ``e_dual`` uses the parameter the inner loop ran with.
    ``iter_sb`` is ``None`` on the initial row.
    """

    k: int
    f: float
    e_dual: float
    e_compl: float
    e_feas: float
    iter_sb: Optional[int]
    rho: float
    numf: int
    numg: int
    x: List[float] = field(default_factory=list)


@dataclass
class SolveReport:
    problem: str
    records: List[OuterRecord]
    status: SolveStatus
    classification: Optional[Classification]
    total_inner: int
    final_x: np.ndarray
    final_mu: np.ndarray
    final_lam: np.ndarray
    final_f: float
    final_measures: StationarityMeasures
    rho_final: float
    wall_time: float = 0.0
    message: str = ""
    trace: Optional[object] = field(default=None, repr=False, compare=False)

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED

    @property
    def kind(self) -> PointKind:
        return self.classification.kind if self.classification else PointKind.UNCLASSIFIED

    @property
    def final_multipliers(self):
        return self.final_mu, self.final_lam


# ---------------------------------------------------------------------------
# Table rendering

HEADER = ("k", "f_k", "E_dual", "E_compl", "E_feas", "iter-sb", "rho_k", "numf_k", "numg_k")


def format_number(v: float) -> str:
    """Integral values bare, ``|v| >= 1e-3`` with four decimals, smaller values in ``.4e``."""
    v = float(v)
    if not math.isfinite(v):
        return str(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    if abs(v) >= 1e-3:
        return f"{v:.4f}"
    return f"{v:.4e}"


def format_rho(v: float) -> str:
    # Integral penalty values keep one decimal ("1.0"); the rest follow format_number.
    v = float(v)
    if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
        return f"{v:.1f}"
    return format_number(v)


def table_rows(report: SolveReport):
    for r in report.records:
        yield (
            str(r.k), format_number(r.f), format_number(r.e_dual), format_number(r.e_compl),
            format_number(r.e_feas), "-" if r.iter_sb is None else str(r.iter_sb),
            format_rho(r.rho), str(r.numf), str(r.numg),
        )


def render_table(report: SolveReport) -> str:
    rows = [HEADER, *table_rows(report)]
    widths = [max(len(row[i]) for row in rows) for i in range(len(HEADER))]
    lines = [" | ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    lines.append(f"{report.total_inner} inner iterations")
    if report.records:
        verdict = report.kind.value
        lines.append(f"status: {report.status.value}; classification: {verdict}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Machine-readable exports

CSV_COLUMNS = ("k", "f", "e_dual", "e_compl", "e_feas", "iter_sb", "rho", "numf", "numg")


def to_csv(report: SolveReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.records:
        w.writerow([
            r.k, repr(float(r.f)), repr(float(r.e_dual)), repr(float(r.e_compl)),
            repr(float(r.e_feas)), "" if r.iter_sb is None else r.iter_sb,
            repr(float(r.rho)), r.numf, r.numg,
        ])
    return buf.getvalue()


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def to_dict(report: SolveReport) -> dict:
    cls = report.classification
    return {
        "problem": report.problem,
        "status": report.status.value,
        "classification": None if cls is None else {
            "kind": cls.kind.value, "rho_final": cls.rho_final, "feasible": cls.feasible,
            "rho_near_zero": cls.rho_near_zero,
        },
        "total_inner": report.total_inner,
        "final_x": _floats(report.final_x),
        "final_mu": _floats(report.final_mu),
        "final_lam": _floats(report.final_lam),
        "final_f": float(report.final_f),
        "final_measures": {
            "e_dual": report.final_measures.e_dual,
            "e_compl": report.final_measures.e_compl,
            "e_feas": report.final_measures.e_feas,
        },
        "rho_final": float(report.rho_final),
        "wall_time": float(report.wall_time),
        "message": report.message,
        "records": [
            {"k": r.k, "f": r.f, "e_dual": r.e_dual, "e_compl": r.e_compl, "e_feas": r.e_feas,
             "iter_sb": r.iter_sb, "rho": r.rho, "numf": r.numf, "numg": r.numg,
             "x": _floats(r.x)}
            for r in report.records
        ],
    }


def to_json(report: SolveReport) -> str:
    # json.dumps uses repr for floats, which round-trips exactly
    return json.dumps(to_dict(report), indent=2)


def from_dict(doc: dict) -> SolveReport:
    cls = doc.get("classification")
    return SolveReport(
        problem=doc["problem"],
        records=[OuterRecord(**{**r, "x": list(r.get("x", []))}) for r in doc["records"]],
        status=SolveStatus(doc["status"]),
        classification=None if cls is None else Classification(
            kind=PointKind(cls["kind"]), rho_final=cls["rho_final"], feasible=cls["feasible"],
            rho_near_zero=cls.get("rho_near_zero", False)),
        total_inner=doc["total_inner"],
        final_x=np.array(doc["final_x"], dtype=float),
        final_mu=np.array(doc["final_mu"], dtype=float),
        final_lam=np.array(doc["final_lam"], dtype=float),
        final_f=doc["final_f"],
        final_measures=StationarityMeasures(**doc["final_measures"]),
        rho_final=doc["rho_final"],
        wall_time=doc.get("wall_time", 0.0),
        message=doc.get("message", ""),
    )


def from_json(text: str) -> SolveReport:
    return from_dict(json.loads(text))


def export(report: SolveReport, fmt: str) -> str:
    if fmt == "csv":
        return to_csv(report)
    if fmt == "json":
        return to_json(report)
    if fmt == "table":
        return render_table(report)
    raise ValueError(f"unknown export format {fmt!r}")
