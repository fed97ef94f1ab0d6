"""Nonlinear program definitions, counted evaluation and derivative checks.

Problems have the form ``min f(x)  s.t.  h(x) = 0,  g(x) >= 0``.  Jacobians
follow the column convention: ``jac_h(x)`` is ``n x mE`` and column ``i`` is
the gradient of ``h_i``.  Second derivatives are optional; when present,
``hess_h(x)`` / ``hess_g(x)`` return stacks of shape ``(m, n, n)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import jsonschema
import numpy as np

from .errors import CapabilityError, EvaluationError, ProblemParseError

Vector = np.ndarray
Matrix = np.ndarray


def _zeros_vec(m):
    return lambda x: np.zeros(m)


def _zeros_jac(n, m):
    return lambda x: np.zeros((n, m))


def _zeros_hess(n, m):
    return lambda x: np.zeros((m, n, n))


@dataclass(frozen=True)
class NlpProblem:
    """Callback-backed nonlinear program.

    Instances are immutable; evaluation counters live in :class:`Evaluator`,
    so one problem can be shared by concurrent solves.
    """

    name: str
    n: int
    m_eq: int
    m_ineq: int
    f: Callable[[Vector], float]
    grad_f: Callable[[Vector], Vector]
    h: Optional[Callable[[Vector], Vector]] = None
    jac_h: Optional[Callable[[Vector], Matrix]] = None
    g: Optional[Callable[[Vector], Vector]] = None
    jac_g: Optional[Callable[[Vector], Matrix]] = None
    hess_f: Optional[Callable[[Vector], Matrix]] = None
    hess_h: Optional[Callable[[Vector], np.ndarray]] = None
    hess_g: Optional[Callable[[Vector], np.ndarray]] = None
    description: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.m_eq < 0 or self.m_ineq < 0:
            raise ValueError("constraint counts must be non-negative")
        if max(self.m_eq, self.m_ineq) == 0:
            raise ValueError("a problem needs at least one constraint")
        n = self.n
        # Empty constraint blocks get zero-size callbacks so callers never branch.
        if self.m_eq == 0:
            object.__setattr__(self, "h", _zeros_vec(0))
            object.__setattr__(self, "jac_h", _zeros_jac(n, 0))
            if self.hess_f is not None and self.hess_h is None:
                object.__setattr__(self, "hess_h", _zeros_hess(n, 0))
        if self.m_ineq == 0:
            object.__setattr__(self, "g", _zeros_vec(0))
            object.__setattr__(self, "jac_g", _zeros_jac(n, 0))
            if self.hess_f is not None and self.hess_g is None:
                object.__setattr__(self, "hess_g", _zeros_hess(n, 0))
        if self.h is None or self.jac_h is None or self.g is None or self.jac_g is None:
            raise ValueError("constraint callbacks missing for a non-empty block")

    @property
    def has_hessians(self) -> bool:
        return self.hess_f is not None and self.hess_h is not None and self.hess_g is not None


@dataclass
class Evaluation:
    x: Vector
    f: float
    h: Vector
    g: Vector
    grad_f: Optional[Vector] = None
    jac_h: Optional[Matrix] = None
    jac_g: Optional[Matrix] = None
    numf: int = 0
    numg: int = 0

    @property
    def has_derivatives(self) -> bool:
        return self.grad_f is not None


def _finite(name, value, x):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(name, x)
    return arr


class Evaluator:
    """Evaluate a problem while counting value and derivative evaluations.

    One unit of ``numf`` is a full evaluation of ``(f, h, g)`` at a point and
    one unit of ``numg`` a full evaluation of ``(grad f, jac h, jac g)``.
    """

    def __init__(self, problem: NlpProblem):
        self.problem = problem
        self.numf = 0
        self.numg = 0

    def reset(self):
        self.numf = 0
        self.numg = 0

    def values(self, x):
        p = self.problem
        x = np.asarray(x, dtype=float)
        if x.shape != (p.n,):
            raise ValueError(f"x must have shape ({p.n},), got {x.shape}")
        self.numf += 1
        f = float(_finite("f", p.f(x), x))
        h = _finite("h", p.h(x), x).reshape(p.m_eq)
        g = _finite("g", p.g(x), x).reshape(p.m_ineq)
        return f, h, g

    def derivatives(self, x):
        p = self.problem
        x = np.asarray(x, dtype=float)
        self.numg += 1
        gf = _finite("grad_f", p.grad_f(x), x).reshape(p.n)
        jh = _finite("jac_h", p.jac_h(x), x).reshape(p.n, p.m_eq)
        jg = _finite("jac_g", p.jac_g(x), x).reshape(p.n, p.m_ineq)
        return gf, jh, jg

    def evaluate(self, x, want_derivatives=True) -> Evaluation:
        x = np.array(x, dtype=float)
        f, h, g = self.values(x)
        ev = Evaluation(x=x, f=f, h=h, g=g)
        if want_derivatives:
            ev.grad_f, ev.jac_h, ev.jac_g = self.derivatives(x)
        ev.numf, ev.numg = self.numf, self.numg
        return ev

    def complete(self, ev: Evaluation) -> Evaluation:
        """Add derivatives to a values-only evaluation."""
        if not ev.has_derivatives:
            ev.grad_f, ev.jac_h, ev.jac_g = self.derivatives(ev.x)
        ev.numf, ev.numg = self.numf, self.numg
        return ev


def evaluate(problem: NlpProblem, x, want_derivatives=True) -> Evaluation:
    return Evaluator(problem).evaluate(x, want_derivatives)


@dataclass
class DerivativeReport:
    step: float
    max_error: dict = field(default_factory=dict)
    flagged: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flagged


def _rel_err(a, b):
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def _central_jacobian(fun, x, step):
    """Rows index outputs, columns index x components."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        cols.append((np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * step))
    return np.stack(cols, axis=-1)


def check_derivatives(problem: NlpProblem, x, step=1e-6) -> DerivativeReport:
    """Compare analytic first (and, if present, second) derivatives to central differences.

    A component is flagged when its relative error exceeds ``100 * step``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    p = problem
    ev = evaluate(p, x)  # surfaces evaluation failures at x itself
    tol = 100.0 * step
    report = DerivativeReport(step=step)

    def compare(name, analytic, numeric):
        err = _rel_err(np.asarray(analytic, dtype=float), numeric)
        report.max_error[name] = float(err.max()) if err.size else 0.0
        for idx in zip(*np.nonzero(err > tol)):
            report.flagged.append((name, tuple(int(i) for i in idx), float(err[idx])))

    compare("grad_f", ev.grad_f, _central_jacobian(lambda z: p.f(z), x, step)[0])
    if p.m_eq:
        compare("jac_h", ev.jac_h, _central_jacobian(p.h, x, step).T)
    if p.m_ineq:
        compare("jac_g", ev.jac_g, _central_jacobian(p.g, x, step).T)
    if p.has_hessians:
        compare("hess_f", p.hess_f(x), _central_jacobian(p.grad_f, x, step))
        if p.m_eq:
            fd = _central_jacobian(p.jac_h, x, step)  # (n, mE, n)
            compare("hess_h", p.hess_h(x), np.transpose(fd, (1, 0, 2)))
        if p.m_ineq:
            fd = _central_jacobian(p.jac_g, x, step)
            compare("hess_g", p.hess_g(x), np.transpose(fd, (1, 0, 2)))
    return report


def lagrangian_hessian(problem: NlpProblem, x, rho, u, v, s) -> Matrix:
    """``rho * H_f + sum (u_i - v_i) H_{h_i} - sum s_i H_{g_i}``, symmetrized."""
    if not problem.has_hessians:
        raise CapabilityError(f"problem {problem.name!r} provides no second derivatives")
    x = np.asarray(x, dtype=float)
    u, v, s = (np.asarray(a, dtype=float).reshape(-1) for a in (u, v, s))
    if u.size != problem.m_eq or v.size != problem.m_eq or s.size != problem.m_ineq:
        raise ValueError("multiplier lengths do not match the constraint counts")
    H = rho * np.asarray(problem.hess_f(x), dtype=float).reshape(problem.n, problem.n)
    if problem.m_eq:
        H = H + np.einsum("i,ijk->jk", u - v, np.asarray(problem.hess_h(x), dtype=float))
    if problem.m_ineq:
        H = H - np.einsum("i,ijk->jk", s, np.asarray(problem.hess_g(x), dtype=float))
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# JSON polynomial problems

_TERM_SCHEMA = {
    "type": "object",
    "oneOf": [
        {
            "properties": {
                "coeff": {"type": "number"},
                "powers": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
            "required": ["coeff", "powers"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "exp_of": {"type": "integer", "minimum": 0},
                "scale": {"type": "number"},
            },
            "required": ["exp_of", "scale"],
            "additionalProperties": False,
        },
    ],
}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "objective": {"type": "array", "items": _TERM_SCHEMA},
        "equalities": {"type": "array", "items": {"type": "array", "items": _TERM_SCHEMA}},
        "inequalities": {"type": "array", "items": {"type": "array", "items": _TERM_SCHEMA}},
        "x0": {"type": "array", "items": {"type": "number"}},
        "rho0": {"type": "number", "exclusiveMinimum": 0},
        "description": {"type": "string"},
    },
    "required": ["name", "n", "objective", "equalities", "inequalities"],
    "additionalProperties": False,
}


class PolynomialExpression:
    """Sum of monomials ``c * prod x_i^p_i`` plus terms ``scale * exp(x_j)``."""

    def __init__(self, n, coeffs, powers, exp_index, exp_scale):
        self.n = n
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
        self.powers = np.asarray(powers, dtype=int).reshape(-1, n)
        self.exp_index = np.asarray(exp_index, dtype=int).reshape(-1)
        self.exp_scale = np.asarray(exp_scale, dtype=float).reshape(-1)

    @classmethod
    def from_terms(cls, n, terms):
        coeffs, powers, ei, es = [], [], [], []
        for t in terms:
            if "exp_of" in t:
                ei.append(t["exp_of"])
                es.append(t["scale"])
            else:
                coeffs.append(t["coeff"])
                powers.append(t["powers"])
        return cls(n, coeffs, np.array(powers, dtype=int).reshape(-1, n), ei, es)

    def _monomials(self, x, powers):
        # x**0 == 1 including 0**0
        return np.prod(np.power(x[None, :], powers), axis=1)

    def value(self, x):
        val = float(self.coeffs @ self._monomials(x, self.powers)) if self.coeffs.size else 0.0
        if self.exp_index.size:
            val += float(self.exp_scale @ np.exp(x[self.exp_index]))
        return val

    def gradient(self, x):
        grad = np.zeros(self.n)
        for j in range(self.n):
            pj = self.powers[:, j]
            mask = pj > 0
            if not np.any(mask):
                continue
            reduced = self.powers[mask].copy()
            reduced[:, j] -= 1
            grad[j] = float((self.coeffs[mask] * pj[mask]) @ self._monomials(x, reduced))
        for idx, sc in zip(self.exp_index, self.exp_scale):
            grad[idx] += sc * math.exp(x[idx])
        return grad

    def hessian(self, x):
        H = np.zeros((self.n, self.n))
        for j in range(self.n):
            for k in range(j, self.n):
                red = self.powers.copy()
                fac = self.coeffs * red[:, j]
                red[:, j] = np.maximum(red[:, j] - 1, 0)
                fac = fac * red[:, k]
                mask = fac != 0
                if not np.any(mask):
                    continue
                red = red[mask]
                red[:, k] -= 1
                H[j, k] = H[k, j] = float(fac[mask] @ self._monomials(x, red))
        for idx, sc in zip(self.exp_index, self.exp_scale):
            H[idx, idx] += sc * math.exp(x[idx])
        return H


def _check_terms(doc_terms, n, where):
    for i, t in enumerate(doc_terms):
        loc = f"{where}[{i}]"
        if "powers" in t and len(t["powers"]) != n:
            raise ProblemParseError(f"powers has length {len(t['powers'])}, expected n={n}", loc)
        if "exp_of" in t and not 0 <= t["exp_of"] < n:
            raise ProblemParseError(f"variable index {t['exp_of']} out of range for n={n}", loc)
        for key in ("coeff", "scale"):
            if key in t and not math.isfinite(t[key]):
                raise ProblemParseError(f"non-finite {key}", loc)


def _stack(exprs, n, what):
    def vec(x):
        return np.array([getattr(e, what)(x) for e in exprs]) if exprs else np.zeros(0)

    def jac(x):
        if not exprs:
            return np.zeros((n, 0))
        return np.column_stack([e.gradient(x) for e in exprs])

    def hess(x):
        if not exprs:
            return np.zeros((0, n, n))
        return np.stack([e.hessian(x) for e in exprs])

    return vec, jac, hess


def load_polynomial_problem(document) -> NlpProblem:
    """Build a problem from a JSON document (text, bytes or already-parsed dict).

    See ``docs/problem_format.md`` for the grammar.  The document may also carry
    ``x0`` and ``rho0``; those are returned via :func:`document_start`.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ProblemParseError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} col {exc.colno}") from exc
    else:
        doc = document
    try:
        jsonschema.validate(doc, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "$" + "".join(f"[{p!r}]" if isinstance(p, str) else f"[{p}]" for p in exc.absolute_path)
        raise ProblemParseError(exc.message, loc) from exc

    n = doc["n"]
    _check_terms(doc["objective"], n, "$.objective")
    for key in ("equalities", "inequalities"):
        for i, terms in enumerate(doc[key]):
            _check_terms(terms, n, f"$.{key}[{i}]")
    if "x0" in doc and len(doc["x0"]) != n:
        raise ProblemParseError(f"x0 has length {len(doc['x0'])}, expected n={n}", "$.x0")
    m_eq, m_ineq = len(doc["equalities"]), len(doc["inequalities"])
    if max(m_eq, m_ineq) == 0:
        raise ProblemParseError("a problem needs at least one constraint", "$")

    obj = PolynomialExpression.from_terms(n, doc["objective"])
    eqs = [PolynomialExpression.from_terms(n, t) for t in doc["equalities"]]
    ineqs = [PolynomialExpression.from_terms(n, t) for t in doc["inequalities"]]
    h, jh, hh = _stack(eqs, n, "value")
    g, jg, hg = _stack(ineqs, n, "value")
    return NlpProblem(
        name=doc["name"], n=n, m_eq=m_eq, m_ineq=m_ineq,
        f=obj.value, grad_f=obj.gradient, hess_f=obj.hessian,
        h=h, jac_h=jh, hess_h=hh, g=g, jac_g=jg, hess_g=hg,
        description=doc.get("description", ""),
    )


def document_start(document):
    """Return ``(x0, rho0)`` stored in a problem document, either may be None."""
    doc = json.loads(document) if isinstance(document, (str, bytes)) else document
    x0 = doc.get("x0")
    return (np.array(x0, dtype=float) if x0 is not None else None), doc.get("rho0")
