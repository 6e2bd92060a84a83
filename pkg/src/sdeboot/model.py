"""Coefficient models, true dynamics and sampling designs.

Evaluators are vectorised over the state: ``x`` is a 1-d array of states and
parameters are 1-d arrays.  First derivatives come back with shape
``(len(x), p)`` and second derivatives with shape ``(len(x), p, p)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, ParameterError
from .noise import NoiseKind, Wiener

# the published designs have n h^2 up to 2.5
DESIGN_WARN_NH2 = 5.0

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]
StateFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ParamDomain:
    """Axis-aligned box ``[lower, upper]``; may be zero-dimensional."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise DimensionError(f"domain bounds have shapes {lo.shape} and {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ParameterError("domain bounds must be finite")
        if np.any(lo >= hi):
            raise ParameterError(f"empty domain: lower={lo}, upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def empty(cls) -> "ParamDomain":
        return cls(np.empty(0), np.empty(0))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, theta, atol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower - atol) and np.all(theta <= self.upper + atol))

    def corners_and_center(self, count: int) -> np.ndarray:
        """Deterministic start points: the centre, then points towards the corners."""
        centre = 0.5 * (self.lower + self.upper)
        half = 0.5 * (self.upper - self.lower)
        pts = [centre]
        signs = np.array([[1 if (i >> b) & 1 else -1 for b in range(self.dim)]
                          for i in range(2 ** self.dim)], dtype=float)
        for s in signs:
            if len(pts) >= count:
                break
            pts.append(centre + 0.5 * half * s)
        return np.array(pts[:count])


def clamp_to_domain(theta, domain: ParamDomain) -> np.ndarray:
    """Componentwise projection of ``theta`` onto ``domain``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != domain.lower.shape:
        raise DimensionError(
            f"parameter has length {theta.shape[0]}, domain has {domain.dim}")
    return np.clip(theta, domain.lower, domain.upper)


@dataclass(frozen=True)
class CoefficientModel:
    """Parametric drift ``a(x, alpha)`` and scale ``c(x, gamma)``.

    ``linear_scale`` (``c0``) and ``linear_drift`` (``a0``) are optional
    factorisations ``c = gamma * c0(x)`` and ``a = alpha * a0(x)`` for scalar
    parameters; when present the estimators use closed forms.
    """

    drift: Evaluator
    drift_d1: Evaluator
    drift_d2: Evaluator
    scale: Evaluator
    scale_d1: Evaluator
    scale_d2: Evaluator
    alpha_domain: ParamDomain
    gamma_domain: ParamDomain
    linear_scale: Optional[StateFunction] = None
    linear_drift: Optional[StateFunction] = None
    name: str = "custom"

    def __post_init__(self):
        if self.linear_scale is not None and self.gamma_domain.dim != 1:
            raise DimensionError("linear_scale requires a scalar scale parameter")
        if self.linear_drift is not None and self.alpha_domain.dim != 1:
            raise DimensionError("linear_drift requires a scalar drift parameter")

    @property
    def p_gamma(self) -> int:
        return self.gamma_domain.dim

    @property
    def p_alpha(self) -> int:
        return self.alpha_domain.dim

    @property
    def p(self) -> int:
        return self.p_gamma + self.p_alpha


@dataclass(frozen=True)
class TrueDynamics:
    """Data-generating SDE ``dX = A(X) dt + C(X-) dZ``."""

    true_drift: StateFunction
    true_scale: StateFunction
    noise: NoiseKind = field(default_factory=Wiener)
    x0: float = 0.0


@dataclass(frozen=True)
class SamplingDesign:
    n: int
    h: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError(f"sample size must be an integer >= 2, got {self.n}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ParameterError(f"step must be positive and finite, got {self.h}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "h", float(self.h))
        if self.n * self.h ** 2 > DESIGN_WARN_NH2:
            warnings.warn(
                f"n*h^2 = {self.n * self.h ** 2:.3g} is not small; the high-frequency "
                "asymptotics assume n*h^2 -> 0", stacklevel=2)

    @property
    def T(self) -> float:
        return self.n * self.h

    @classmethod
    def from_horizon(cls, n: int, T: float) -> "SamplingDesign":
        return cls(n, T / n)

    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.h


# --- model builders ---------------------------------------------------------

def _zeros_d1(p):
    return lambda x, th: np.zeros((np.shape(x)[0], p))


def _zeros_d2(p):
    return lambda x, th: np.zeros((np.shape(x)[0], p, p))


def fixed_drift(a: StateFunction):
    """Drift evaluators for a fully known drift (no free parameter)."""
    return (lambda x, th: a(x)), _zeros_d1(0), _zeros_d2(0)


def linear_in_parameter(base: StateFunction):
    """Evaluators for ``f(x, theta) = theta * base(x)`` with scalar theta."""
    def value(x, th):
        return th[0] * base(x)

    def d1(x, th):
        return base(x)[:, None]

    return value, d1, _zeros_d2(1)


def linear_model(c0: StateFunction, gamma_domain, a0: StateFunction | None = None,
                 alpha_domain=None, known_drift: StateFunction | None = None,
                 name: str = "custom") -> CoefficientModel:
    """Model with ``c = gamma c0(x)`` and either ``a = alpha a0(x)`` or a known drift."""
    scale, scale_d1, scale_d2 = linear_in_parameter(c0)
    if a0 is not None:
        drift, drift_d1, drift_d2 = linear_in_parameter(a0)
        alpha_domain = alpha_domain if isinstance(alpha_domain, ParamDomain) else ParamDomain(*alpha_domain)
    else:
        drift, drift_d1, drift_d2 = fixed_drift(known_drift if known_drift is not None
                                                else (lambda x: np.zeros_like(x)))
        alpha_domain = ParamDomain.empty()
    if not isinstance(gamma_domain, ParamDomain):
        gamma_domain = ParamDomain(*gamma_domain)
    return CoefficientModel(drift, drift_d1, drift_d2, scale, scale_d1, scale_d2,
                            alpha_domain, gamma_domain, linear_scale=c0,
                            linear_drift=a0, name=name)


# --- registry ---------------------------------------------------------------

def _half_mean_reversion(x):
    return -0.5 * x


def _unit(x):
    return np.ones_like(x)


def _inv_sqrt_one_plus_sq(x):
    return 1.0 / np.sqrt(1.0 + x * x)


def _identity(x):
    return np.asarray(x, dtype=float).copy()


GAMMA_DOMAIN = ParamDomain([0.1], [10.0])
ALPHA_DOMAIN = ParamDomain([-10.0], [10.0])


@dataclass(frozen=True)
class RegisteredModel:
    """A named (statistical model, true dynamics) pair with its optimal parameter."""

    name: str
    model: CoefficientModel
    true_drift: StateFunction
    true_scale: StateFunction
    theta_star: tuple
    x0: float = 0.0

    def dynamics(self, noise: NoiseKind | None = None) -> TrueDynamics:
        return TrueDynamics(self.true_drift, self.true_scale,
                            noise if noise is not None else Wiener(), self.x0)


def _build_registry():
    reg = {}
    reg["ou_sqrt_scale"] = RegisteredModel(
        "ou_sqrt_scale",
        linear_model(_inv_sqrt_one_plus_sq, GAMMA_DOMAIN,
                     known_drift=_half_mean_reversion, name="ou_sqrt_scale"),
        _half_mean_reversion, _unit, (math.sqrt(2.0),))
    reg["ou_const_scale"] = RegisteredModel(
        "ou_const_scale",
        linear_model(_unit, GAMMA_DOMAIN, known_drift=_half_mean_reversion,
                     name="ou_const_scale"),
        _half_mean_reversion, _unit, (1.0,))
    reg["ou_linear"] = RegisteredModel(
        "ou_linear",
        linear_model(_unit, GAMMA_DOMAIN, a0=_identity, alpha_domain=ALPHA_DOMAIN,
                     name="ou_linear"),
        _half_mean_reversion, _unit, (1.0, -0.5))
    return reg


REGISTRY = _build_registry()


def get_model(name: str) -> RegisteredModel:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ParameterError(
            f"unknown model {name!r}; known: {', '.join(sorted(REGISTRY))}") from None


def preset_experiment_model(noise: NoiseKind | None = None):
    """Misspecified OU setting: scale ``gamma / sqrt(1 + x^2)`` against ``dX = -X/2 dt + dZ``."""
    entry = REGISTRY["ou_sqrt_scale"]
    return entry.model, entry.dynamics(noise)
