"""Exact l1-penalty SQP method with inner (fixed penalty) and outer iterations."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import EvaluationError, LineSearchFailure, QpCyclingError, QpMatrixError
from .merit import SlackPair, directional_derivative, slack_lift, violation
from .nlp_model import Evaluation, Evaluator, NlpProblem, lagrangian_hessian
from .qp import ActiveSetQP, QpInstance, QpSolution
from .report import OuterRecord, SolveReport, SolveStatus
from .stationarity import StationarityMeasures, classify, measures_from

log = logging.getLogger(__name__)

HESSIAN_MODES = ("identity", "bfgs", "exact")
_MODE_ALIASES = {"damped_bfgs": "bfgs"}
AFTER_UPDATE_RULES = ("steer", "reset", "keep")
# Row k's dual error weights grad f by the penalty of the previous outer
# iteration; the initial row has no predecessor and uses weight one.
INITIAL_DUAL_WEIGHT = 1.0


@dataclass
class SolverConfig:
    rho0: float = 1.0
    sigma: float = 0.01
    tau: float = 0.5
    eps: float = 1e-8
    max_inner: int = 200
    max_outer: int = 100
    max_backtracks: int = 50
    hessian_mode: str = "bfgs"
    rho_min: float = 1e-12
    feas_tol: float = 1e-6
    lambda_floor: float = 1e-8
    # inner r >= -eps test; None shares eps with the outer test
    inner_eps: Optional[float] = None
    # smallest penalty value the update may produce
    rho_floor: float = 1e-30
    # B after a penalty update: "steer" applies the quasi-Newton update along the
    # steering step with the new rho, "reset" restarts from I, "keep" carries B over.
    # Exact mode always recomputes.
    hessian_after_update: str = "steer"
    decay_decades: float = 6.0

    def __post_init__(self):
        self.hessian_mode = _MODE_ALIASES.get(self.hessian_mode, self.hessian_mode)
        if self.hessian_mode not in HESSIAN_MODES:
            raise ValueError(f"hessian_mode must be one of {HESSIAN_MODES}, got {self.hessian_mode!r}")
        if self.hessian_after_update not in AFTER_UPDATE_RULES:
            raise ValueError(f"hessian_after_update must be one of {AFTER_UPDATE_RULES}")
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        for name in ("sigma", "tau"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.inner_eps is not None and not self.inner_eps > 0:
            raise ValueError("inner_eps must be positive")
        for name in ("max_inner", "max_outer", "max_backtracks"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.rho_floor < 0 or self.lambda_floor <= 0:
            raise ValueError("rho_floor must be >= 0 and lambda_floor > 0")

    @property
    def effective_inner_eps(self) -> float:
        return self.eps if self.inner_eps is None else self.inner_eps


# ---------------------------------------------------------------------------
# Trace of everything the invariant checks need

@dataclass(frozen=True)
class InnerStep:
    k: int
    x: np.ndarray
    d: np.ndarray
    alpha: float
    rho: float
    merit_before: float
    merit_after: float
    dir_deriv: float
    dBd: float
    slack: SlackPair


@dataclass(frozen=True)
class SteeringRecord:
    k: int
    x: np.ndarray
    d: np.ndarray
    r: float
    alpha: Optional[float]
    c_before: float
    c_after: Optional[float]


@dataclass(frozen=True)
class PenaltyUpdate:
    k: int
    rho_old: float
    rho_formula: float
    rho_new: float
    branch: str


@dataclass
class Trace:
    inner_steps: List[InnerStep] = field(default_factory=list)
    steering: List[SteeringRecord] = field(default_factory=list)
    updates: List[PenaltyUpdate] = field(default_factory=list)
    iterates: List[tuple] = field(default_factory=list)  # (x, slack) at every stored point


# ---------------------------------------------------------------------------
# Building blocks

@dataclass(frozen=True)
class ArmijoResult:
    alpha: float
    value: float
    trials: int


def armijo_search(merit: Callable[[np.ndarray], float], x, d, dir_deriv, *, sigma=0.01, tau=0.5,
                  max_backtracks=50, merit_x: Optional[float] = None) -> ArmijoResult:
    """Largest ``alpha`` in ``{1, tau, tau^2, ...}`` with
    ``merit(x + alpha d) - merit(x) <= sigma * alpha * dir_deriv``."""
    if not dir_deriv < 0:
        raise ValueError(f"dir_deriv must be negative, got {dir_deriv}")
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    p0 = merit(x) if merit_x is None else merit_x
    alpha = 1.0
    for i in range(max_backtracks + 1):
        value = merit(x + alpha * d)
        if value - p0 <= sigma * alpha * dir_deriv:
            return ArmijoResult(alpha=alpha, value=value, trials=i + 1)
        alpha *= tau
    raise LineSearchFailure(f"no acceptable step after {max_backtracks} backtracks")


def update_penalty(rho, f_old, f_steered, c_old, c_steered, steered, d_inner_norm, eps):
    """Step-2 penalty update.  Returns ``(rho_new, branch)``.

    ``branch`` is one of ``"ratio"``, ``"ratio-fallback"``, ``"geometric"``,
    ``"no-steer"`` or ``"unchanged"``.
    """
    if steered:
        if rho * f_steered + c_steered > rho * f_old + c_old:
            denom = f_steered - f_old
            ratio = (c_old - c_steered) / denom if denom != 0 else float("inf")
            if not np.isfinite(ratio) or denom <= 0:
                warnings.warn("degenerate penalty ratio; falling back to 0.01*rho", RuntimeWarning)
                return 0.01 * rho, "ratio-fallback"
            return min(0.01 * rho, ratio), "ratio"
        return min(0.1 * rho, rho ** 1.5), "geometric"
    if d_inner_norm > eps:
        return min(0.01 * rho, rho ** 1.5), "no-steer"
    return rho, "unchanged"


def _is_spd(B, floor):
    try:
        np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        return False
    return float(np.min(np.linalg.eigvalsh(B))) >= floor


def regularize(H, lambda_floor=1e-8):
    """Shift ``H`` by the smallest ``xi`` on the ladder 0, 1e-8, 1e-6, ... giving eigenvalues >= floor."""
    H = 0.5 * (H + H.T)
    eye = np.eye(H.shape[0])
    for xi in [0.0] + [10.0 ** e for e in range(-8, 13, 2)]:
        if _is_spd(H + xi * eye, lambda_floor):
            return H + xi * eye
    lam_min = float(np.min(np.linalg.eigvalsh(H)))
    return H + (lambda_floor - lam_min) * eye


def hessian_update(mode, B_prev, x_step=None, grad_change=None, exact=None, lambda_floor=1e-8):
    """Next Hessian approximation for the QP model.

    ``identity`` ignores its inputs, ``bfgs`` applies a Powell-damped update
    (skipped for steps shorter than 1e-14 or when the result would lose
    positive definiteness) and ``exact`` regularizes the supplied Lagrangian
    Hessian.
    """
    mode = _MODE_ALIASES.get(mode, mode)
    n = np.asarray(B_prev).shape[0]
    if mode == "identity":
        return np.eye(n)
    if mode == "exact":
        if exact is None:
            raise ValueError("exact mode needs the Lagrangian Hessian")
        return regularize(np.asarray(exact, dtype=float), lambda_floor)
    if mode != "bfgs":
        raise ValueError(f"unknown hessian mode {mode!r}")
    B = np.asarray(B_prev, dtype=float)
    s = np.asarray(x_step, dtype=float)
    y = np.asarray(grad_change, dtype=float)
    if np.linalg.norm(s) < 1e-14:
        return B.copy()
    Bs = B @ s
    sBs = float(s @ Bs)
    sy = float(s @ y)
    if sy >= 0.2 * sBs:
        theta = 1.0
    else:
        theta = 0.8 * sBs / (sBs - sy)
    r = theta * y + (1.0 - theta) * Bs
    sr = float(s @ r)
    if sBs <= 0 or sr <= 0:
        return B.copy()
    B_new = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / sr
    B_new = 0.5 * (B_new + B_new.T)
    return B_new if _is_spd(B_new, lambda_floor) else B.copy()


def lagrangian_gradient(ev: Evaluation, rho, mu, lam):
    return rho * ev.grad_f - ev.jac_h @ mu - ev.jac_g @ lam


# ---------------------------------------------------------------------------
# Inner loop and steering

@dataclass
class InnerOutcome:
    ev: Evaluation
    qp: QpSolution
    iterations: int
    d_norm: float
    B: np.ndarray
    status: SolveStatus = SolveStatus.RUNNING

    @property
    def mu(self):
        return self.qp.mu

    @property
    def lam(self):
        return self.qp.lam


def _exact_hessian(problem, x, rho, sol: Optional[QpSolution], lambda_floor):
    if sol is None:
        u = v = 0.5 * np.ones(problem.m_eq)
        s = np.zeros(problem.m_ineq)
    else:
        u, v, s = sol.u, sol.v, sol.s
    return hessian_update("exact", np.eye(problem.n),
                          exact=lagrangian_hessian(problem, x, rho, u, v, s),
                          lambda_floor=lambda_floor)


def inner_loop(evaluator: Evaluator, ev: Evaluation, rho: float, B: np.ndarray,
               config: SolverConfig, qp: ActiveSetQP, *, k: int = 0,
               trace: Optional[Trace] = None) -> InnerOutcome:
    """Run SQP iterations on the penalty problem with fixed ``rho`` until ``r >= -eps``."""
    problem = evaluator.problem
    eps_in = config.effective_inner_eps

    def merit(x):
        f, h, g = evaluator.values(x)
        cache[0] = (x, f, h, g)
        return rho * f + violation(h, g)

    for ell in range(1, config.max_inner + 1):
        inst = QpInstance(rho * ev.grad_f, B, ev.h, ev.jac_h, ev.g, ev.jac_g)
        sol = qp.solve(inst)
        d_norm = float(np.max(np.abs(sol.d))) if sol.d.size else 0.0
        if sol.r >= -eps_in:
            return InnerOutcome(ev, sol, ell, d_norm, B)
        dd = directional_derivative(rho, ev.grad_f, sol.d, sol.r)
        p0 = rho * ev.f + violation(ev.h, ev.g)
        cache = [None]
        res = armijo_search(merit, ev.x, sol.d, dd, sigma=config.sigma, tau=config.tau,
                            max_backtracks=config.max_backtracks, merit_x=p0)
        x_new, f, h, g = cache[0]
        new = Evaluation(x=np.array(x_new), f=f, h=h, g=g)
        evaluator.complete(new)
        if trace is not None:
            slack = slack_lift(h, g)
            trace.inner_steps.append(InnerStep(
                k=k, x=ev.x.copy(), d=sol.d.copy(), alpha=res.alpha, rho=rho,
                merit_before=p0, merit_after=res.value, dir_deriv=dd,
                dBd=float(sol.d @ B @ sol.d), slack=slack))
            trace.iterates.append((new.x.copy(), slack))
        if config.hessian_mode == "exact":
            B = _exact_hessian(problem, new.x, rho, sol, config.lambda_floor)
        else:
            y = lagrangian_gradient(new, rho, sol.mu, sol.lam) - lagrangian_gradient(ev, rho, sol.mu, sol.lam)
            B = hessian_update(config.hessian_mode, B, new.x - ev.x, y,
                               lambda_floor=config.lambda_floor)
        ev = new
    return InnerOutcome(ev, sol, config.max_inner, d_norm, B, status=SolveStatus.MAX_ITERATIONS)


@dataclass
class SteeringOutcome:
    d: np.ndarray
    d_norm: float
    r: float
    ev: Optional[Evaluation]
    alpha: Optional[float]
    c_before: float
    c_after: Optional[float]

    @property
    def steered(self) -> bool:
        return self.ev is not None


def steering_step(evaluator: Evaluator, ev: Evaluation, B, config: SolverConfig,
                  qp: ActiveSetQP) -> SteeringOutcome:
    """Minimize ``0.5 d'Bd + c'(x; d)`` and, for a non-negligible ``d``, backtrack on ``c``."""
    inst = QpInstance(np.zeros(ev.x.size), B, ev.h, ev.jac_h, ev.g, ev.jac_g)
    sol = qp.solve(inst)
    d_norm = float(np.max(np.abs(sol.d))) if sol.d.size else 0.0
    c0 = violation(ev.h, ev.g)
    if d_norm <= config.eps:
        return SteeringOutcome(sol.d, d_norm, sol.r, None, None, c0, None)
    cache = [None]

    def cval(x):
        f, h, g = evaluator.values(x)
        cache[0] = (x, f, h, g)
        return violation(h, g)

    res = armijo_search(cval, ev.x, sol.d, sol.r, sigma=config.sigma, tau=config.tau,
                        max_backtracks=config.max_backtracks, merit_x=c0)
    x_new, f, h, g = cache[0]
    new = Evaluation(x=np.array(x_new), f=f, h=h, g=g)
    return SteeringOutcome(sol.d, d_norm, sol.r, new, res.alpha, c0, res.value)


# ---------------------------------------------------------------------------
# Outer loop

def _record(k, ev, m: StationarityMeasures, iter_sb, rho, numf, numg):
    return OuterRecord(k=k, f=float(ev.f), e_dual=m.e_dual, e_compl=m.e_compl, e_feas=m.e_feas,
                       iter_sb=iter_sb, rho=float(rho), numf=numf, numg=numg,
                       x=[float(v) for v in ev.x])


def solve(problem: NlpProblem, config: Optional[SolverConfig] = None, x0=None,
          *, record_trace: bool = True) -> SolveReport:
    """Run the algorithm from ``x0`` and return the per-outer-iteration report."""
    config = config or SolverConfig()
    if x0 is None:
        raise ValueError("a start point x0 is required")
    t_start = time.perf_counter()
    evaluator = Evaluator(problem)
    qp = ActiveSetQP(warm_start=True)
    trace = Trace() if record_trace else None
    n = problem.n

    rho = float(config.rho0)
    mu = np.ones(problem.m_eq)
    lam = np.ones(problem.m_ineq)
    status = SolveStatus.RUNNING
    message = ""
    records: List[OuterRecord] = []
    total_inner = 0

    try:
        ev = evaluator.evaluate(np.asarray(x0, dtype=float).reshape(n))
    except EvaluationError as exc:
        raise ValueError(f"start point is not evaluable: {exc}") from exc
    if trace is not None:
        trace.iterates.append((ev.x.copy(), slack_lift(ev.h, ev.g)))
    m = measures_from(ev.grad_f, ev.jac_h, ev.jac_g, ev.h, ev.g, mu, lam, INITIAL_DUAL_WEIGHT)
    records.append(_record(0, ev, m, None, rho, evaluator.numf, evaluator.numg))
    snap = (evaluator.numf, evaluator.numg)

    if config.hessian_mode == "exact":
        B = _exact_hessian(problem, ev.x, rho, None, config.lambda_floor)
    else:
        B = np.eye(n)
    final_ev, final_m = ev, m
    last_sol: Optional[QpSolution] = None

    for k in range(config.max_outer):
        try:
            inner = inner_loop(evaluator, ev, rho, B, config, qp, k=k + 1, trace=trace)
        except LineSearchFailure as exc:
            status, message = SolveStatus.LINE_SEARCH_FAILURE, str(exc)
            break
        except EvaluationError as exc:
            status, message = SolveStatus.EVALUATION_FAILURE, str(exc)
            break
        except (QpCyclingError, QpMatrixError) as exc:
            status, message = SolveStatus.LINE_SEARCH_FAILURE, f"QP failure: {exc}"
            break
        total_inner += inner.iterations
        ev, B, last_sol = inner.ev, inner.B, inner.qp
        mu, lam = inner.mu, inner.lam
        counts = (evaluator.numf - snap[0], evaluator.numg - snap[1])
        snap = (evaluator.numf, evaluator.numg)
        m = measures_from(ev.grad_f, ev.jac_h, ev.jac_g, ev.h, ev.g, mu, lam, rho)
        final_ev, final_m = ev, m
        if inner.status is SolveStatus.MAX_ITERATIONS:
            records.append(_record(k + 1, ev, m, inner.iterations, rho, *counts))
            status, message = SolveStatus.MAX_ITERATIONS, f"inner loop exceeded {config.max_inner} iterations"
            break

        try:
            steer = steering_step(evaluator, ev, B, config, qp)
        except LineSearchFailure as exc:
            records.append(_record(k + 1, ev, m, inner.iterations, rho, *counts))
            status, message = SolveStatus.LINE_SEARCH_FAILURE, f"steering: {exc}"
            break
        except EvaluationError as exc:
            records.append(_record(k + 1, ev, m, inner.iterations, rho, *counts))
            status, message = SolveStatus.EVALUATION_FAILURE, str(exc)
            break
        if trace is not None:
            trace.steering.append(SteeringRecord(k + 1, ev.x.copy(), steer.d.copy(), steer.r,
                                                 steer.alpha, steer.c_before, steer.c_after))

        if steer.steered:
            rho_formula, branch = update_penalty(
                rho, ev.f, steer.ev.f, steer.c_before, steer.c_after, True, inner.d_norm, config.eps)
        else:
            rho_formula, branch = update_penalty(
                rho, ev.f, ev.f, 0.0, 0.0, False, inner.d_norm, config.eps)
        converged = branch == "unchanged"
        rho_new = rho if converged else max(rho_formula, config.rho_floor)
        if trace is not None and not converged:
            trace.updates.append(PenaltyUpdate(k + 1, rho, rho_formula, rho_new, branch))
        records.append(_record(k + 1, ev, m, inner.iterations, rho_new, *counts))
        if converged:
            status = SolveStatus.CONVERGED
            break

        rho = rho_new
        if steer.steered:
            old = ev
            try:
                ev = evaluator.complete(steer.ev)
            except EvaluationError as exc:
                status, message = SolveStatus.EVALUATION_FAILURE, str(exc)
                break
            if trace is not None:
                trace.iterates.append((ev.x.copy(), slack_lift(ev.h, ev.g)))
            if config.hessian_mode != "exact" and config.hessian_after_update == "steer":
                y = lagrangian_gradient(ev, rho, mu, lam) - lagrangian_gradient(old, rho, mu, lam)
                B = hessian_update(config.hessian_mode, B, ev.x - old.x, y,
                                   lambda_floor=config.lambda_floor)
        if config.hessian_mode == "exact":
            B = _exact_hessian(problem, ev.x, rho, last_sol, config.lambda_floor)
        elif config.hessian_after_update == "reset":
            B = np.eye(n)
    else:
        status = SolveStatus.MAX_ITERATIONS
        message = f"no convergence within {config.max_outer} outer iterations"

    if status is SolveStatus.CONVERGED:
        history = [r.e_feas for r in records[1:]]
        classification = classify(final_m, rho, converged=True, rho0=config.rho0,
                                  e_feas_history=history, rho_min=config.rho_min,
                                  feas_tol=config.feas_tol, decay_decades=config.decay_decades)
    else:
        classification = None
    return SolveReport(
        problem=problem.name, records=records, status=status, classification=classification,
        total_inner=total_inner, final_x=final_ev.x.copy(),
        final_mu=np.asarray(mu, dtype=float).copy(), final_lam=np.asarray(lam, dtype=float).copy(),
        final_f=float(final_ev.f), final_measures=final_m, rho_final=float(rho),
        wall_time=time.perf_counter() - t_start, message=message, trace=trace,
    )
