"""Data-driven adjustment term ``b_n`` and the normalising diagonals.

``b_n`` is of order ``h`` only for a correctly specified diffusion and of
order one otherwise, so ``sqrt(T / b_n)`` tracks the unknown convergence rate
of the scale estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, ParameterError
from .gqmle import GqmleFit, _scale_values, _vec
from .model import CoefficientModel, SamplingDesign
from .simulate import SamplePath

Q_FLOOR = 1e-300


@dataclass(frozen=True)
class RateScalings:
    b1: float
    b2: float
    b: float
    a_hat_diag: np.ndarray
    b_hat_diag: np.ndarray
    p_gamma: int
    T: float

    def __post_init__(self):
        if self.b1 < 0 or not (0 <= self.b2 <= math.exp(-2.0)) or not self.b > 0:
            raise ParameterError(f"invalid adjustment terms b1={self.b1}, b2={self.b2}, b={self.b}")

    def to_dict(self):
        return {"b1": self.b1, "b2": self.b2, "b": self.b,
                "a_hat_diag": self.a_hat_diag.tolist(),
                "b_hat_diag": self.b_hat_diag.tolist()}


def b1n(path: SamplePath) -> float:
    """Ratio of summed fourth to summed second powers of the increments."""
    d2 = path.dx ** 2
    qv = d2.sum()
    if qv == 0.0:
        raise DegenerateDataError("zero quadratic variation")
    return float((d2 ** 2).sum() / qv)


def moment_discrepancy(path: SamplePath, m: CoefficientModel, gamma_hat) -> float:
    """``Q_n = mean[dX^4 / (3h^2) - 2 dX^2 c^2 / h + c^4]`` at the fitted scale."""
    gamma_hat = _vec(gamma_hat, m.p_gamma, "gamma")
    c2 = _scale_values(path.left, m, gamma_hat) ** 2
    d2 = path.dx ** 2
    h = path.h
    return float(np.mean(d2 ** 2 / (3.0 * h * h) - 2.0 * d2 * c2 / h + c2 ** 2))


def b2_from_q(q: float) -> float:
    aq = max(abs(q), Q_FLOOR)
    return math.exp(-(aq + 1.0 / aq))


def b2n(path: SamplePath, m: CoefficientModel, gamma_hat) -> float:
    return b2_from_q(moment_discrepancy(path, m, gamma_hat))


def make_scalings(b1: float, b2: float, T: float, p_gamma: int, p_alpha: int) -> RateScalings:
    b = b1 + b2
    if not b > 0 or not math.isfinite(b):
        raise ParameterError(f"adjustment term b = {b} must be positive and finite")
    a_hat = np.concatenate([np.full(p_gamma, math.sqrt(T / b)), np.full(p_alpha, math.sqrt(T))])
    b_hat = np.concatenate([np.full(p_gamma, 1.0 / math.sqrt(T * b)),
                            np.full(p_alpha, 1.0 / math.sqrt(T))])
    return RateScalings(b1, b2, b, a_hat, b_hat, p_gamma, T)


def scalings(path: SamplePath, m: CoefficientModel, fit: GqmleFit,
             design: SamplingDesign | None = None) -> RateScalings:
    """Adjustment terms and the diagonals of the rate matrix and its score counterpart."""
    T = (design or path.design).T
    return make_scalings(b1n(path), b2n(path, m, fit.gamma_hat), T, m.p_gamma, m.p_alpha)
