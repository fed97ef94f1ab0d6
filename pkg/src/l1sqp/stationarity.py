"""Stationarity measures and classification of terminating points."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .nlp_model import NlpProblem, evaluate


class PointKind(str, enum.Enum):
    KKT = "KKT"
    DL = "DL-stationary"
    SINGULAR = "singular-stationary"
    DZ = "DZ-stationary"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class StationarityMeasures:
    e_dual: float
    e_compl: float
    e_feas: float


@dataclass(frozen=True)
class Classification:
    kind: PointKind
    rho_final: float
    feasible: bool
    rho_near_zero: bool = False


def _inf_norm(a):
    a = np.asarray(a, dtype=float)
    return float(np.max(np.abs(a))) if a.size else 0.0


def measures_from(grad_f, jac_h, jac_g, h, g, mu, lam, rho_prev) -> StationarityMeasures:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    neg_g = np.maximum(0.0, -g)
    dual = rho_prev * np.asarray(grad_f) - np.asarray(jac_h) @ mu - np.asarray(jac_g) @ lam
    compl = max(_inf_norm(mu * h + np.abs(h)), _inf_norm(lam * g + neg_g))
    feas = max(_inf_norm(h), _inf_norm(neg_g))
    return StationarityMeasures(e_dual=_inf_norm(dual), e_compl=compl, e_feas=feas)


def measures(problem: NlpProblem, x, mu, lam, rho_prev) -> StationarityMeasures:
    """Dual, complementarity and feasibility errors of ``(x, mu, lam)``.

    ``rho_prev`` is the penalty parameter the multipliers were computed with.
    """
    ev = evaluate(problem, x)
    return measures_from(ev.grad_f, ev.jac_h, ev.jac_g, ev.h, ev.g, mu, lam, rho_prev)


def rho_near_zero(rho_final, rho0, e_feas_history: Sequence[float] = (), *,
                  rho_min=1e-12, decay_decades=6.0, stall_tol=1e-6) -> bool:
    """Decide whether the terminal penalty parameter counts as close to zero.

    True below ``rho_min``.  Also true when rho has dropped at least
    ``decay_decades`` orders of magnitude from its start while the feasibility
    error stopped moving over the last two records.
    """
    if rho_final <= rho_min:
        return True
    if rho0 is None or rho_final > rho0 * 10.0 ** (-decay_decades):
        return False
    hist = list(e_feas_history)
    if len(hist) < 2:
        return False
    return abs(hist[-1] - hist[-2]) <= stall_tol * max(1.0, abs(hist[-1]))


def classify(m: StationarityMeasures, rho_final, *, converged=True, rho0=None,
             e_feas_history: Sequence[float] = (), rho_min=1e-12, feas_tol=1e-6,
             decay_decades=6.0) -> Classification:
    feasible = m.e_feas <= feas_tol
    near_zero = rho_near_zero(rho_final, rho0, e_feas_history, rho_min=rho_min,
                              decay_decades=decay_decades)
    if not converged:
        kind = PointKind.UNCLASSIFIED
    elif feasible:
        kind = PointKind.SINGULAR if near_zero else PointKind.KKT
    else:
        kind = PointKind.DZ if near_zero else PointKind.DL
    return Classification(kind=kind, rho_final=float(rho_final), feasible=feasible,
                          rho_near_zero=near_zero)


@dataclass(frozen=True)
class Certificate:
    active_eq: tuple
    active_ineq: tuple
    residual: float
    kind: str  # "active-set" or "violation-interior"
    multipliers: Optional[np.ndarray] = None


def active_set_certificate(problem: NlpProblem, x, tol=1e-6) -> Certificate:
    """Least-squares check that ``x`` is stationary for ``f`` on its active constraint manifold.

    Active constraints (``|h_i| <= tol``, ``|g_i| <= tol``) are treated as
    equalities.  A small residual supports ``x`` being a best-objective point
    among least-violation points; a large one refutes it.  With no active
    constraint at an infeasible point only the violation gradient is checked.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    ev = evaluate(problem, x)
    I_h = tuple(int(i) for i in np.nonzero(np.abs(ev.h) <= tol)[0])
    I_g = tuple(int(i) for i in np.nonzero(np.abs(ev.g) <= tol)[0])
    A = np.hstack([ev.jac_h[:, list(I_h)], ev.jac_g[:, list(I_g)]])
    infeasible = np.any(np.abs(ev.h) > tol) or np.any(ev.g < -tol)
    if A.shape[1] == 0 and infeasible:
        grad_c = ev.jac_h @ np.sign(ev.h) - ev.jac_g @ (ev.g < 0).astype(float)
        return Certificate(I_h, I_g, float(np.linalg.norm(grad_c)), "violation-interior")
    if A.shape[1] == 0:
        return Certificate(I_h, I_g, float(np.linalg.norm(ev.grad_f)), "active-set", np.zeros(0))
    theta = np.linalg.lstsq(A, ev.grad_f, rcond=None)[0]
    res = ev.grad_f - A @ theta
    return Certificate(I_h, I_g, float(np.linalg.norm(res)), "active-set", theta)
