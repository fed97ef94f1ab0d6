"""Registry of the built-in test problems and illustrative examples.

Reference values (start points, limits, violation levels, iteration counts)
come from the published results for these problems; each entry notes where
its numbers originate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import UnknownProblemError
from .nlp_model import NlpProblem
from .stationarity import PointKind


@dataclass(frozen=True)
class ReferenceEntry:
    problem: NlpProblem
    x0: np.ndarray
    expected_class: PointKind
    rho0_override: Optional[float] = None
    x_star: Optional[np.ndarray] = None
    f_star: Optional[float] = None
    e_feas_star: Optional[float] = None
    reference_iterations: Optional[int] = None
    alt_x_star: tuple = ()
    notes: str = ""

    @property
    def name(self):
        return self.problem.name


def _diag(*vals):
    return np.diag(np.array(vals, dtype=float))


def _tp1():
    # min x1 + x2  s.t.  x2 - x1^2 - 1 >= 0,  0.3 (1 - exp(x2)) >= 0
    return NlpProblem(
        name="tp1", n=2, m_eq=0, m_ineq=2,
        f=lambda x: x[0] + x[1],
        grad_f=lambda x: np.array([1.0, 1.0]),
        g=lambda x: np.array([x[1] - x[0] ** 2 - 1.0, 0.3 * (1.0 - np.exp(x[1]))]),
        jac_g=lambda x: np.array([[-2.0 * x[0], 0.0], [1.0, -0.3 * np.exp(x[1])]]),
        hess_f=lambda x: np.zeros((2, 2)),
        hess_g=lambda x: np.stack([_diag(-2.0, 0.0), _diag(0.0, -0.3 * np.exp(x[1]))]),
        description="'unique': infeasible, strict minimizer of the violation near (0, 1)",
    )


def _tp2():
    def g(x):
        a, b = x
        return np.array([-a * a + b - 1.0, -a * a - b - 1.0, a - b * b - 1.0, -a - b * b - 1.0])

    def jac_g(x):
        a, b = x
        return np.array([[-2 * a, -2 * a, 1.0, -1.0], [1.0, -1.0, -2 * b, -2 * b]])

    hg = np.stack([_diag(-2, 0), _diag(-2, 0), _diag(0, -2), _diag(0, -2)])
    return NlpProblem(
        name="tp2", n=2, m_eq=0, m_ineq=4,
        f=lambda x: x[0] + x[1], grad_f=lambda x: np.array([1.0, 1.0]),
        g=g, jac_g=jac_g, hess_f=lambda x: np.zeros((2, 2)), hess_g=lambda x: hg,
        description="'isolated': infeasible, isolated violation minimizer at (0, 0)",
    )


def _tp3():
    def g(x):
        a, b = x
        return np.array([0.5 * (-a - b * b - 1.0), a - b * b, -a + b * b])

    def jac_g(x):
        b = x[1]
        return np.array([[-0.5, 1.0, -1.0], [-b, -2 * b, 2 * b]])

    hg = np.stack([_diag(0, -1), _diag(0, -2), _diag(0, 2)])
    return NlpProblem(
        name="tp3", n=2, m_eq=0, m_ineq=3,
        f=lambda x: x[0], grad_f=lambda x: np.array([1.0, 0.0]),
        g=g, jac_g=jac_g, hess_f=lambda x: np.zeros((2, 2)), hess_g=lambda x: hg,
        description="'nactive': infeasible, violation stationary point (0, 0) with residual 0.5",
    )


def _tp4():
    return NlpProblem(
        name="tp4", n=1, m_eq=0, m_ineq=2,
        f=lambda x: x[0], grad_f=lambda x: np.array([1.0]),
        g=lambda x: np.array([x[0] ** 2 - 1.0, x[0] - 2.0]),
        jac_g=lambda x: np.array([[2 * x[0], 1.0]]),
        hess_f=lambda x: np.zeros((1, 1)),
        hess_g=lambda x: np.array([[[2.0]], [[0.0]]]),
        description="feasible (minimizer 2) but standard start leads to the infeasible stationary point -1",
    )


def _tp5():
    def g(x):
        a, b = x
        return np.array([(1 - a) ** 3 - b, a, b])

    def jac_g(x):
        a = x[0]
        return np.array([[-3 * (1 - a) ** 2, 1.0, 0.0], [-1.0, 0.0, 1.0]])

    return NlpProblem(
        name="tp5", n=2, m_eq=0, m_ineq=3,
        f=lambda x: (x[0] - 2) ** 2 + x[1] ** 2,
        grad_f=lambda x: np.array([2 * (x[0] - 2), 2 * x[1]]),
        g=g, jac_g=jac_g,
        hess_f=lambda x: _diag(2, 2),
        hess_g=lambda x: np.stack([_diag(6 * (1 - x[0]), 0), np.zeros((2, 2)), np.zeros((2, 2))]),
        description="Hock-Schittkowski 13: feasible, solution (1, 0) is a singular stationary point",
    )


def _ex2_1():
    return NlpProblem(
        name="ex2_1", n=1, m_eq=1, m_ineq=0,
        f=lambda x: x[0] ** 2 + 4 * x[0], grad_f=lambda x: np.array([2 * x[0] + 4]),
        h=lambda x: np.array([x[0] - 1.0]), jac_h=lambda x: np.array([[1.0]]),
        hess_f=lambda x: np.array([[2.0]]), hess_h=lambda x: np.zeros((1, 1, 1)),
        description="feasible: min x^2 + 4x s.t. x - 1 = 0, KKT point 1 with multiplier 6",
    )


def _ex2_2():
    return NlpProblem(
        name="ex2_2", n=1, m_eq=2, m_ineq=0,
        f=lambda x: x[0] ** 2 + 4 * x[0], grad_f=lambda x: np.array([2 * x[0] + 4]),
        h=lambda x: np.array([x[0] - 1.0, x[0] + 1.0]), jac_h=lambda x: np.array([[1.0, 1.0]]),
        hess_f=lambda x: np.array([[2.0]]), hess_h=lambda x: np.zeros((2, 1, 1)),
        description="infeasible: two equality constraints x - 1 = 0 and x + 1 = 0",
    )


def _ex2_3():
    return NlpProblem(
        name="ex2_3", n=2, m_eq=0, m_ineq=2,
        f=lambda x: x[0] ** 2 + x[1] ** 2, grad_f=lambda x: 2.0 * np.asarray(x, dtype=float),
        g=lambda x: np.array([-x[0] - x[1] + 1.0, x[0] + x[1] - 2.0]),
        jac_g=lambda x: np.array([[-1.0, 1.0], [-1.0, 1.0]]),
        hess_f=lambda x: _diag(2, 2), hess_g=lambda x: np.zeros((2, 2, 2)),
        description="infeasible: inconsistent linear inequalities, least-violation optimum (0.5, 0.5)",
    )


def _build():
    a = np.array
    return {
        "tp1": ReferenceEntry(
            _tp1(), a([3.0, 2.0]), PointKind.DZ, x_star=a([0.0, 1.0]), f_star=1.0,
            e_feas_star=0.5155, reference_iterations=13,
            notes="reference run: E_feas settles at 0.5155, f at 1.0000, rho at 1e-9"),
        "tp2": ReferenceEntry(
            _tp2(), a([3.0, 2.0]), PointKind.DZ, x_star=a([0.0, 0.0]), f_star=0.0,
            e_feas_star=1.0, reference_iterations=15, notes="reference run: E_feas settles at 1, f at 0"),
        "tp3": ReferenceEntry(
            _tp3(), a([-20.0, 10.0]), PointKind.DL, x_star=a([0.0, 0.0]), f_star=0.0,
            e_feas_star=0.5, reference_iterations=12,
            notes="reference run: terminates with rho = 0.01"),
        "tp4": ReferenceEntry(
            _tp4(), a([-4.0]), PointKind.DL, x_star=a([-1.0]), f_star=-1.0,
            e_feas_star=3.0, reference_iterations=7, notes="reference run: stops at the infeasible point -1"),
        "tp5": ReferenceEntry(
            _tp5(), a([-2.0, -2.0]), PointKind.SINGULAR, rho0_override=1e3,
            x_star=a([1.0, 0.0]), f_star=1.0, e_feas_star=0.0, reference_iterations=51,
            notes="reference run: rho0 = 1e3, ends near (1.0000004967, 0)"),
        "ex2_1": ReferenceEntry(
            _ex2_1(), a([0.0]), PointKind.KKT, rho0_override=0.1, x_star=a([1.0]), f_star=5.0,
            e_feas_star=0.0, notes="multiplier 6, penalty threshold 1/6; start point is ours"),
        "ex2_2": ReferenceEntry(
            _ex2_2(), a([-3.0]), PointKind.DL, x_star=a([-1.0]), f_star=-3.0,
            e_feas_star=2.0, alt_x_star=(a([1.0]),),
            notes="both -1 and 1 are DL-stationary; -1 is the least-violation optimum"),
        "ex2_3": ReferenceEntry(
            _ex2_3(), a([0.0, 0.0]), PointKind.DL, x_star=a([0.5, 0.5]), f_star=0.5,
            e_feas_star=1.0, notes="l1 violation 1 at the optimum; start point is ours"),
    }


_REGISTRY = _build()


def names():
    return list(_REGISTRY)


def get(name: str) -> ReferenceEntry:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownProblemError(name, _REGISTRY) from None


def list_problems():
    """``(name, description)`` pairs in registry order."""
    return [(k, e.problem.description) for k, e in _REGISTRY.items()]


# JSON documents equivalent to the hand-coded callbacks above

def _t(c, *powers):
    return {"coeff": float(c), "powers": list(powers)}


_DOCUMENTS = {
    "tp1": {"n": 2, "objective": [_t(1, 1, 0), _t(1, 0, 1)], "equalities": [],
            "inequalities": [[_t(1, 0, 1), _t(-1, 2, 0), _t(-1, 0, 0)],
                             [_t(0.3, 0, 0), {"exp_of": 1, "scale": -0.3}]]},
    "tp2": {"n": 2, "objective": [_t(1, 1, 0), _t(1, 0, 1)], "equalities": [],
            "inequalities": [[_t(-1, 2, 0), _t(1, 0, 1), _t(-1, 0, 0)],
                             [_t(-1, 2, 0), _t(-1, 0, 1), _t(-1, 0, 0)],
                             [_t(1, 1, 0), _t(-1, 0, 2), _t(-1, 0, 0)],
                             [_t(-1, 1, 0), _t(-1, 0, 2), _t(-1, 0, 0)]]},
    "tp3": {"n": 2, "objective": [_t(1, 1, 0)], "equalities": [],
            "inequalities": [[_t(-0.5, 1, 0), _t(-0.5, 0, 2), _t(-0.5, 0, 0)],
                             [_t(1, 1, 0), _t(-1, 0, 2)],
                             [_t(-1, 1, 0), _t(1, 0, 2)]]},
    "tp4": {"n": 1, "objective": [_t(1, 1)], "equalities": [],
            "inequalities": [[_t(1, 2), _t(-1, 0)], [_t(1, 1), _t(-2, 0)]]},
    # (1 - a)^3 - b = 1 - 3a + 3a^2 - a^3 - b
    "tp5": {"n": 2, "objective": [_t(1, 2, 0), _t(-4, 1, 0), _t(4, 0, 0), _t(1, 0, 2)],
            "equalities": [],
            "inequalities": [[_t(1, 0, 0), _t(-3, 1, 0), _t(3, 2, 0), _t(-1, 3, 0), _t(-1, 0, 1)],
                             [_t(1, 1, 0)], [_t(1, 0, 1)]]},
    "ex2_1": {"n": 1, "objective": [_t(1, 2), _t(4, 1)], "equalities": [[_t(1, 1), _t(-1, 0)]],
              "inequalities": []},
    "ex2_2": {"n": 1, "objective": [_t(1, 2), _t(4, 1)],
              "equalities": [[_t(1, 1), _t(-1, 0)], [_t(1, 1), _t(1, 0)]], "inequalities": []},
    "ex2_3": {"n": 2, "objective": [_t(1, 2, 0), _t(1, 0, 2)], "equalities": [],
              "inequalities": [[_t(-1, 1, 0), _t(-1, 0, 1), _t(1, 0, 0)],
                               [_t(1, 1, 0), _t(1, 0, 1), _t(-2, 0, 0)]]},
}


def document(name: str) -> dict:
    """JSON problem document for a registry entry, including its start point."""
    entry = get(name)
    doc = {"name": name, **_DOCUMENTS[name], "x0": entry.x0.tolist(),
           "description": entry.problem.description}
    if entry.rho0_override is not None:
        doc["rho0"] = entry.rho0_override
    return doc
