"""Active-set solver for the piecewise-quadratic l1 QP subproblem.

The subproblem is

    min_d  linear.d + 1/2 d'Bd + ||h + Jh'd||_1 + ||max(0, -(g + Jg'd))||_1

which is equivalent to a smooth convex QP in ``(d, y+, z+)``.  The solver
works on ``d`` only and keeps the slacks implicit: every constraint is a
*piece* ``phi_p(e) = max(lo_p * e, hi_p * e)`` of its residual ``e``, with
``[lo, hi] = [-1, 1]`` for equalities and ``[-1, 0]`` for inequalities.
A piece held at a kink (``e = 0``) is in the working set and owns a free
multiplier ``pi_p``; every other piece sits on one side and contributes the
fixed slope ``lo`` or ``hi``.  Optimality is
``linear + B d + J pi = 0`` with ``pi_p`` in ``[lo_p, hi_p]``.

The smooth-reformulation multipliers follow from ``pi``:
``u = (1 + pi_E) / 2``, ``v = 1 - u``, ``s = -pi_I``, ``t = 1 - s``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import QpCyclingError, QpMatrixError
from .merit import violation


@dataclass
class QpInstance:
    linear: np.ndarray
    B: np.ndarray
    h: np.ndarray
    jac_h: np.ndarray
    g: np.ndarray
    jac_g: np.ndarray

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float).reshape(-1)
        n = self.linear.size
        self.B = np.asarray(self.B, dtype=float).reshape(n, n)
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        self.jac_h = np.asarray(self.jac_h, dtype=float).reshape(n, self.h.size)
        self.jac_g = np.asarray(self.jac_g, dtype=float).reshape(n, self.g.size)

    @property
    def n(self):
        return self.linear.size

    @property
    def m_eq(self):
        return self.h.size

    @property
    def m_ineq(self):
        return self.g.size

    def pieces(self):
        """Stacked ``(J, b, lo, hi)`` over equality then inequality pieces."""
        J = np.hstack([self.jac_h, self.jac_g])
        b = np.concatenate([self.h, self.g])
        lo = -np.ones(b.size)
        hi = np.concatenate([np.ones(self.m_eq), np.zeros(self.m_ineq)])
        return J, b, lo, hi


@dataclass
class QpSolution:
    d: np.ndarray
    y_plus: np.ndarray
    z_plus: np.ndarray
    u: np.ndarray
    v: np.ndarray
    s: np.ndarray
    t: np.ndarray
    r: float
    kkt_residual: float
    model_value: float = 0.0
    iterations: int = 0
    working_set: tuple = ()
    nonunique_multipliers: bool = False

    @property
    def mu(self):
        """Equality multiplier estimate ``v - u`` (penalty-scaled)."""
        return self.v - self.u

    @property
    def lam(self):
        return self.s.copy()


def model_value(inst: QpInstance, d) -> float:
    d = np.asarray(d, dtype=float)
    lin = violation(inst.h + inst.jac_h.T @ d, inst.g + inst.jac_g.T @ d)
    return float(inst.linear @ d + 0.5 * d @ inst.B @ d + lin)


def _assemble(inst: QpInstance, d, pi, iterations=0, working_set=(), nonunique=False):
    """Build a QpSolution from a direction and piece multipliers."""
    J, b, lo, hi = inst.pieces()
    pi = np.clip(pi, lo, hi)
    mE = inst.m_eq
    u = 0.5 * (1.0 + pi[:mE])
    v = 1.0 - u
    s = -pi[mE:] + 0.0
    t = 1.0 - s
    e_h = inst.h + inst.jac_h.T @ d
    e_g = inst.g + inst.jac_g.T @ d
    y_plus = np.abs(e_h)
    z_plus = np.maximum(0.0, -e_g) + 0.0
    r = float(np.sum(y_plus) + np.sum(z_plus) - np.sum(np.abs(inst.h)) - np.sum(np.maximum(0.0, -inst.g)))
    stat = inst.linear + inst.B @ d + inst.jac_h @ (u - v) - inst.jac_g @ s
    return QpSolution(
        d=d, y_plus=y_plus, z_plus=z_plus, u=u, v=v, s=s, t=t, r=r,
        kkt_residual=float(np.max(np.abs(stat))) if stat.size else 0.0,
        model_value=model_value(inst, d), iterations=iterations,
        working_set=tuple(int(i) for i in working_set), nonunique_multipliers=nonunique,
    )


class ActiveSetQP:
    """Primal active-set solver with optional warm start from the previous working set.

    A solver instance keeps the last working set as mutable workspace, so it
    must not be shared between threads.
    """

    def __init__(self, kkt_tol=1e-10, max_iter=None, warm_start=True):
        self.kkt_tol = kkt_tol
        self.max_iter = max_iter
        self.warm_start = warm_start
        self.last_working_set: tuple = ()

    # -- linear algebra -------------------------------------------------
    @staticmethod
    def _factor(B):
        B = 0.5 * (B + B.T)
        try:
            return scipy.linalg.cho_factor(B, lower=True)
        except np.linalg.LinAlgError as exc:
            raise QpMatrixError("B is not positive definite") from exc

    @staticmethod
    def _eqp(chol, gbar, J_W, b_W):
        """Minimize gbar.d + 1/2 d'Bd subject to b_W + J_W'd = 0.

        Returns ``(d, pi_W, dependent)``; ``dependent`` is set when the working
        gradients are numerically dependent and ``pi_W`` came from least squares.
        """
        Bg = scipy.linalg.cho_solve(chol, gbar)
        if J_W.shape[1] == 0:
            return -Bg, np.zeros(0), False
        BJ = scipy.linalg.cho_solve(chol, J_W)
        S = J_W.T @ BJ
        rhs = b_W - J_W.T @ Bg
        pi, _, rank, sv = np.linalg.lstsq(S, rhs, rcond=None)
        dependent = rank < S.shape[0] or (sv.size and sv[-1] <= 1e-13 * sv[0])
        d = -(Bg + BJ @ pi)
        return d, pi, bool(dependent)

    def _warm_point(self, chol, J, b, W):
        if not W:
            return None
        J_W = J[:, W]
        d, _, dependent = self._eqp(chol, np.zeros(J.shape[0]), J_W, b[W])
        if dependent or not np.all(np.isfinite(d)):
            return None
        return d

    # -- main loop -------------------------------------------------------
    def solve(self, inst: QpInstance, warm_start: Optional[Sequence[int]] = None) -> QpSolution:
        chol = self._factor(inst.B)
        J, b, lo, hi = inst.pieces()
        n, m = J.shape
        col_norm = np.linalg.norm(J, axis=0) if m else np.zeros(0)
        max_iter = self.max_iter or 50 * (n + m + 1)
        bland_after = 3 * (n + m)

        W: list[int] = []
        d = np.zeros(n)
        if warm_start is None and self.warm_start:
            warm_start = self.last_working_set
        if warm_start:
            W0 = sorted(set(int(i) for i in warm_start if 0 <= int(i) < m))
            d0 = self._warm_point(chol, J, b, W0)
            if d0 is not None:
                W, d = W0, d0

        e = b + J.T @ d
        side = np.where(e >= 0.0, hi, lo)  # fixed slope for pieces off the working set

        best_val = model_value(inst, d)
        best_d = d.copy()
        stall = 0
        nonunique = False
        pi_W = np.zeros(0)
        for it in range(1, max_iter + 1):
            inW = np.zeros(m, dtype=bool)
            inW[W] = True
            gbar = inst.linear + J[:, ~inW] @ side[~inW]
            d_eqp, pi_W, dependent = self._eqp(chol, gbar, J[:, W], b[W])
            nonunique = nonunique or dependent
            p = d_eqp - d
            if np.max(np.abs(p), initial=0.0) <= 1e-13 * (1.0 + np.max(np.abs(d), initial=0.0)):
                d = d_eqp
                excess = np.maximum(pi_W - hi[W], lo[W] - pi_W)
                tol = 1e-12 * (1.0 + np.max(np.abs(pi_W), initial=0.0))
                if not np.any(excess > tol):
                    break
                bad = np.nonzero(excess > tol)[0]
                if stall >= bland_after:
                    k = int(min(bad, key=lambda i: W[i]))
                else:
                    k = int(bad[np.argmax(excess[bad])])
                q = W.pop(k)
                side[q] = hi[q] if pi_W[k] > hi[q] else lo[q]
                stall += 1
                continue

            # ratio test along p for pieces off the working set
            rate = J.T @ p
            e = b + J.T @ d
            thr = 1e-12 * col_norm * np.linalg.norm(p)
            # Pieces whose gradient lies in the span of the working set keep a
            # zero rate along p; only roundoff could make them block, and
            # adding them would make the working set dependent.
            in_span = np.zeros(m, dtype=bool)
            if W:
                Qw, _ = np.linalg.qr(J[:, W])
                resid = np.linalg.norm(J - Qw @ (Qw.T @ J), axis=0)
                in_span = resid <= 1e-10 * np.maximum(col_norm, 1e-300)
            alpha, block = 1.0, -1
            for i in range(m):
                if inW[i] or in_span[i]:
                    continue
                if side[i] == hi[i] and rate[i] < -thr[i]:
                    a = max(0.0, e[i] / -rate[i])
                elif side[i] == lo[i] and rate[i] > thr[i]:
                    a = max(0.0, -e[i] / rate[i])
                else:
                    continue
                if a < alpha:  # strict: ties keep the lowest index
                    alpha, block = a, i
            if block >= 0:
                d = d + alpha * p
                W.append(block)
            else:
                d = d_eqp
            val = model_value(inst, d)
            if val < best_val - 1e-15 * (1.0 + abs(best_val)):
                best_val, best_d = val, d.copy()
                stall = 0
            else:
                stall += 1
        else:
            raise QpCyclingError(f"active-set loop exceeded {max_iter} iterations", best=best_d)

        pi = side.astype(float).copy()
        pi[W] = pi_W
        self.last_working_set = tuple(sorted(W))
        return _assemble(inst, d, pi, iterations=it, working_set=sorted(W), nonunique=nonunique)


def solve(instance: QpInstance, warm_start=None, kkt_tol=1e-10) -> QpSolution:
    return ActiveSetQP(kkt_tol=kkt_tol, warm_start=False).solve(instance, warm_start=warm_start)


def solve_steering(B, h, jac_h, g, jac_g, solver: Optional[ActiveSetQP] = None) -> QpSolution:
    """Regularized linear l1 minimization: the QP with a zero linear term."""
    inst = QpInstance(np.zeros(np.asarray(B).shape[0]), B, h, jac_h, g, jac_g)
    return (solver or ActiveSetQP(warm_start=False)).solve(inst)


# ---------------------------------------------------------------------------
# Brute-force reference used by the tests

@dataclass
class _Candidate:
    d: np.ndarray
    value: float
    pi: Optional[np.ndarray] = field(default=None)


def _pattern_candidates(inst: QpInstance, max_patterns):
    J, b, lo, hi = inst.pieces()
    n, m = J.shape
    if 3 ** m > max_patterns:
        raise ValueError(f"enumeration needs {3 ** m} patterns, budget is {max_patterns}")
    Binv = np.linalg.inv(inst.B)
    for pattern in itertools.product((0, 1, 2), repeat=m):
        pat = np.array(pattern, dtype=int)
        K = np.nonzero(pat == 2)[0]
        slope = np.where(pat == 1, hi, lo)
        free = pat != 2
        gbar = inst.linear + J[:, free] @ slope[free]
        if K.size:
            JK = J[:, K]
            S = JK.T @ Binv @ JK
            pi_K = np.linalg.lstsq(S, b[K] - JK.T @ Binv @ gbar, rcond=None)[0]
            d = -Binv @ (gbar + JK @ pi_K)
        else:
            pi_K = np.zeros(0)
            d = -Binv @ gbar
        pi = slope.astype(float)
        pi[K] = pi_K
        yield _Candidate(d=d, value=model_value(inst, d), pi=pi)


def _line_minimize(inst: QpInstance, d, direction):
    """Exact minimizer of the model along ``d + t * direction`` (convex, piecewise quadratic)."""
    J, b, lo, hi = inst.pieces()
    rates = J.T @ direction
    e = b + J.T @ d
    breaks = [-e[i] / rates[i] for i in range(e.size) if abs(rates[i]) > 1e-15]
    curv = float(direction @ inst.B @ direction)
    cands = [0.0] + breaks
    pts = sorted(set(breaks))
    # stationary point of each quadratic segment between consecutive breakpoints
    edges = [-np.inf] + pts + [np.inf]
    for a, c in zip(edges[:-1], edges[1:]):
        mid = 0.0 if not np.isfinite(a) and not np.isfinite(c) else (
            a - 1.0 if not np.isfinite(a) else (c + 1.0 if not np.isfinite(c) else 0.5 * (a + c)))
        ee = e + mid * rates
        slope_pi = np.where(ee >= 0, hi, lo)
        lin = float(inst.linear @ direction + direction @ inst.B @ d + slope_pi @ rates)
        if curv > 0:
            t = -lin / curv
            if a <= t <= c:
                cands.append(t)
    vals = [model_value(inst, d + t * direction) for t in cands]
    t = cands[int(np.argmin(vals))]
    return d + t * direction


def _multipliers_at(inst: QpInstance, d, tol=1e-9):
    J, b, lo, hi = inst.pieces()
    e = b + J.T @ d
    scale = 1.0 + np.abs(b) + np.linalg.norm(J, axis=0) * (1.0 + np.linalg.norm(d))
    K = np.nonzero(np.abs(e) <= tol * scale)[0]
    pi = np.where(e >= 0, hi, lo).astype(float)
    free = np.ones(e.size, dtype=bool)
    free[K] = False
    rhs = -(inst.linear + inst.B @ d + J[:, free] @ pi[free])
    if K.size:
        pi[K] = np.linalg.lstsq(J[:, K], rhs, rcond=None)[0]
    return pi


def oracle_solve(instance: QpInstance, resolution=21, max_patterns=3 ** 10) -> QpSolution:
    """Reference minimizer by pattern enumeration plus a refined grid search.

    Every combination of (lower side, upper side, kink) over the pieces is
    solved as an equality-constrained QP; the grid search with exact
    coordinate line minimization is an independent second route.  The
    candidate with the lowest model value wins.
    """
    inst = instance
    n = inst.n
    cands = list(_pattern_candidates(inst, max_patterns))
    best = min(cands, key=lambda c: c.value)

    # independent route: grid in a box that provably contains the minimizer
    J, _, _, _ = inst.pieces()
    lam_min = float(np.linalg.eigvalsh(0.5 * (inst.B + inst.B.T))[0])
    radius = (np.linalg.norm(inst.linear) + np.sum(np.linalg.norm(J, axis=0))) / lam_min
    if resolution and resolution > 1 and n <= 4:
        axes = [np.linspace(-radius, radius, resolution)] * n
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        e_h = inst.h[None, :] + grid @ inst.jac_h
        e_g = inst.g[None, :] + grid @ inst.jac_g
        vals = (grid @ inst.linear + 0.5 * np.einsum("ij,jk,ik->i", grid, inst.B, grid)
                + np.abs(e_h).sum(axis=1) + np.maximum(0.0, -e_g).sum(axis=1))
        d = grid[int(np.argmin(vals))]
        for _ in range(200):
            prev = model_value(inst, d)
            for j in range(n):
                d = _line_minimize(inst, d, np.eye(n)[j])
            if prev - model_value(inst, d) <= 1e-15 * (1.0 + abs(prev)):
                break
        grid_val = model_value(inst, d)
        if grid_val < best.value - 1e-12 * (1.0 + abs(best.value)):
            best = _Candidate(d=d, value=grid_val, pi=_multipliers_at(inst, d))
    return _assemble(inst, best.d, best.pi)


def random_instance(rng: np.random.Generator, n_max=4, m_eq_max=3, m_ineq_max=3, zero_linear=False):
    """Random instance with entries in [-2, 2] and ``B = L'L + 0.1 I``."""
    n = int(rng.integers(1, n_max + 1))
    m_eq = int(rng.integers(0, m_eq_max + 1))
    m_ineq = int(rng.integers(0, m_ineq_max + 1))
    L = rng.uniform(-2, 2, (n, n))
    B = L.T @ L + 0.1 * np.eye(n)
    linear = np.zeros(n) if zero_linear else rng.uniform(-2, 2, n)
    return QpInstance(
        linear=linear, B=B,
        h=rng.uniform(-2, 2, m_eq), jac_h=rng.uniform(-2, 2, (n, m_eq)),
        g=rng.uniform(-2, 2, m_ineq), jac_g=rng.uniform(-2, 2, (n, m_ineq)),
    )
