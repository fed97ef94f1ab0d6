"""Exact l1-penalty SQP with inner and outer iterations and infeasibility detection."""

from .errors import (
    CapabilityError, EvaluationError, L1SqpError, LineSearchFailure, ProblemParseError,
    QpCyclingError, QpMatrixError, UnknownProblemError,
)
from .nlp_model import NlpProblem, check_derivatives, evaluate, load_polynomial_problem
from .qp import ActiveSetQP, QpInstance, QpSolution, oracle_solve, solve_steering
from .report import OuterRecord, SolveReport, SolveStatus, export, render_table
from .sqp import SolverConfig, solve
from .stationarity import PointKind, active_set_certificate, classify, measures

__all__ = [
    "ActiveSetQP", "CapabilityError", "EvaluationError", "L1SqpError", "LineSearchFailure",
    "NlpProblem", "OuterRecord", "PointKind", "ProblemParseError", "QpCyclingError",
    "QpInstance", "QpMatrixError", "QpSolution", "SolveReport", "SolveStatus", "SolverConfig",
    "UnknownProblemError", "active_set_certificate", "check_derivatives", "classify",
    "evaluate", "export", "load_polynomial_problem", "measures", "oracle_solve",
    "render_table", "solve", "solve_steering",
]
