"""l1 violation measure, exact penalty merit and its linear model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MeritSnapshot:
    c: float
    P: float
    f: float
    rho: float


@dataclass(frozen=True)
class SlackPair:
    y: np.ndarray
    z: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.y) + np.sum(self.z))


def violation(h, g) -> float:
    """``||h||_1 + ||max(0, -g)||_1``."""
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    return float(np.sum(np.abs(h)) + np.sum(np.maximum(0.0, -g)))


def penalty_value(rho, f, c) -> float:
    return rho * f + c


def snapshot(rho, f, h, g) -> MeritSnapshot:
    c = violation(h, g)
    return MeritSnapshot(c=c, P=penalty_value(rho, f, c), f=f, rho=rho)


def linearized_violation(h, g, jac_h, jac_g, d) -> float:
    """Violation of the constraints linearized along ``d``."""
    d = np.asarray(d, dtype=float)
    lin_h = np.asarray(h, dtype=float) + np.asarray(jac_h).T @ d
    lin_g = np.asarray(g, dtype=float) + np.asarray(jac_g).T @ d
    return violation(lin_h, lin_g)


def slack_lift(h, g) -> SlackPair:
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    # max(0.0, -0.0) would keep a negative zero; add 0.0 to normalise it
    return SlackPair(y=np.abs(h), z=np.maximum(0.0, -g) + 0.0)


def directional_derivative(rho, grad_f, d, r) -> float:
    """Model directional derivative of the penalty function: ``rho * grad_f.d + r``."""
    return float(rho * np.dot(grad_f, d) + r)
