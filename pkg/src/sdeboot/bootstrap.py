"""Weighted block bootstrap of the Gaussian quasi-score.

The observation indices ``1..n`` are cut into ``k`` consecutive blocks of
length ``n / k``.  Each block receives an i.i.d. nonnegative weight with unit
mean and unit centred variance, and the per-block score sums are reweighted.
Two statistics are available:

* ``SCORE_SHORTCUT``: the normalised reweighted score, cheap (O(k) per draw);
* ``FULL_ESTIMATOR``: ``A_hat Gamma_bar (theta_B - theta_hat)`` with the
  bootstrap estimator re-solved for each weight vector.

Both approximate the law of ``A_hat Gamma_hat (theta_hat - theta_star)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .adjustment import RateScalings
from .errors import (BootstrapDrawError, DimensionError, DistributionError,
                     DivisibilityError, ParameterError, SingularNormalizationError)
from .gqmle import (FitOptions, GqmleFit, _maximize, _scale_values, eta_all,
                    gql_drift, gql_drift_grad, gql_drift_hessian, gql_scale,
                    gql_scale_grad, gql_scale_hessian, zeta_all)
from .model import CoefficientModel
from .noise import as_generator
from .simulate import SamplePath


class Mode(str, Enum):
    SCORE_SHORTCUT = "score_shortcut"
    FULL_ESTIMATOR = "full_estimator"


def parse_mode(spec) -> Mode:
    try:
        return Mode(spec)
    except ValueError:
        raise ParameterError(f"unknown bootstrap mode {spec!r}; use score_shortcut or "
                             "full_estimator") from None


# --- blocks -----------------------------------------------------------------

@dataclass(frozen=True)
class BlockPartition:
    n: int
    k: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise DivisibilityError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.n % self.k:
            raise DivisibilityError(f"k={self.k} does not divide n={self.n}")

    @property
    def c(self) -> int:
        return self.n // self.k

    def block(self, i: int) -> range:
        """1-based observation indices of block ``i`` (1-based)."""
        if not 1 <= i <= self.k:
            raise IndexError(f"block {i} outside 1..{self.k}")
        return range((i - 1) * self.c + 1, i * self.c + 1)

    def block_of(self) -> np.ndarray:
        """0-based block label of each observation, length ``n``."""
        return np.repeat(np.arange(self.k), self.c)


def partition(n: int, k: int) -> BlockPartition:
    return BlockPartition(int(n), int(k))


def check_block_growth(k: int, T: float) -> float:
    """``log_T k``; warns when it falls outside (1/2, 1)."""
    if T <= 1.0 or k < 1:
        return float("nan")
    r = math.log(k) / math.log(T)
    if not 0.5 < r < 1.0:
        warnings.warn(f"log_T(k) = {r:.3f} lies outside (1/2, 1); block count may be "
                      "too small or too large for the horizon", stacklevel=2)
    return r


# --- weights ----------------------------------------------------------------

_SQ5 = math.sqrt(5.0)


@dataclass(frozen=True)
class ShiftedMammen:
    """``1 + V`` with Mammen's two-point ``V``; support ``(3 -+ sqrt 5) / 2``."""

    name = "mammen"
    low = (3.0 - _SQ5) / 2.0
    high = (3.0 + _SQ5) / 2.0
    p_low = (_SQ5 + 1.0) / (2.0 * _SQ5)

    def draw(self, gen, size):
        return np.where(gen.random(size) < self.p_low, self.low, self.high)


@dataclass(frozen=True)
class ScaledBeta:
    """``4 B`` with ``B ~ Beta(1/2, 3/2)``."""

    name = "beta"

    def draw(self, gen, size):
        return 4.0 * gen.beta(0.5, 1.5, size)


@dataclass(frozen=True)
class UnitWeights:
    name = "unit"

    def draw(self, gen, size):
        return np.ones(size)


WeightScheme = ShiftedMammen | ScaledBeta | UnitWeights

_SCHEMES = {"mammen": ShiftedMammen, "beta": ScaledBeta, "unit": UnitWeights}


def parse_scheme(spec) -> WeightScheme:
    if isinstance(spec, (ShiftedMammen, ScaledBeta, UnitWeights)):
        return spec
    key = str(spec).strip().lower()
    aliases = {"shifted_mammen": "mammen", "scaled_beta": "beta", "unit_weights": "unit"}
    key = aliases.get(key, key)
    if key not in _SCHEMES:
        raise ParameterError(f"unknown weight scheme {spec!r}; use mammen, beta or unit")
    return _SCHEMES[key]()


def draw_weights(scheme: WeightScheme, k: int, rng) -> np.ndarray:
    if k < 1:
        raise ParameterError(f"need at least one block weight, got k={k}")
    return scheme.draw(as_generator(rng), int(k))


# --- scores -----------------------------------------------------------------

def block_sums(path: SamplePath, m: CoefficientModel, fit: GqmleFit,
               part: BlockPartition) -> np.ndarray:
    """Per-block sums of ``(zeta_j(gamma_hat), eta_j(alpha_hat, gamma_hat))``, shape ``(k, p)``."""
    if part.n != path.n:
        raise DimensionError(f"partition is for n={part.n}, path has n={path.n}")
    per_obs = [zeta_all(path, m, fit.gamma_hat)]
    if m.p_alpha:
        per_obs.append(eta_all(path, m, fit.alpha_hat, fit.gamma_hat))
    terms = np.concatenate(per_obs, axis=1)
    return terms.reshape(part.k, part.c, -1).sum(axis=1)


def score_draw(sums: np.ndarray, w: np.ndarray, s: RateScalings) -> np.ndarray:
    """``B_hat sum_i (w_i - 1) sums[i]``; ``w`` may also be an ``(R, k)`` matrix."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != sums.shape[0] or sums.shape[1] != s.b_hat_diag.shape[0]:
        raise DimensionError(f"weights {w.shape}, sums {sums.shape}, scalings "
                             f"{s.b_hat_diag.shape} do not agree")
    return ((w - 1.0) @ sums) * s.b_hat_diag


def shortcut_signs(p_gamma: int, p_alpha: int) -> np.ndarray:
    """Orientation of the score shortcut relative to ``A_hat Gamma_bar (theta_B - theta_hat)``.

    The scale score is ``-h`` times the gradient of H1 while the drift score
    is the gradient of H2 itself, so the drift coordinates flip sign.
    """
    return np.concatenate([np.ones(p_gamma), -np.ones(p_alpha)])


def estimator_draw(path: SamplePath, m: CoefficientModel, fit: GqmleFit, w,
                   part: BlockPartition, closed_form: bool = True,
                   opts: FitOptions | None = None) -> np.ndarray:
    """Bootstrap estimator ``theta_B`` for block weights ``w``.

    The scale equation is solved first; the drift equation keeps the original
    ``gamma_hat`` in its denominator.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (part.k,):
        raise DimensionError(f"expected {part.k} weights, got {w.shape}")
    if not np.any(w > 0):
        raise BootstrapDrawError("all block weights are zero")
    opts = opts or FitOptions()
    omega = np.repeat(w, part.c)
    x, d, h = path.left, path.dx, path.h

    if closed_form and m.linear_scale is not None:
        c0 = np.asarray(m.linear_scale(x), dtype=float)
        per_block = (d ** 2 / c0 ** 2).reshape(part.k, part.c).sum(axis=1)
        gamma_b = np.array([math.sqrt(part.k * np.dot(w, per_block) / (path.T * w.sum()))])
    else:
        gamma_b, _, _ = _maximize(
            lambda g: gql_scale(path, m, g, omega),
            lambda g: gql_scale_grad(path, m, g, omega),
            lambda g: gql_scale_hessian(path, m, g, omega),
            m.gamma_domain, opts, "bootstrap scale equation")
    if not m.gamma_domain.contains(gamma_b):
        raise BootstrapDrawError(f"bootstrap scale estimate {gamma_b} outside the domain")

    if m.p_alpha == 0:
        alpha_b = np.empty(0)
    elif closed_form and m.linear_drift is not None:
        a0 = np.asarray(m.linear_drift(x), dtype=float)
        c2 = _scale_values(x, m, fit.gamma_hat) ** 2
        num = np.dot(omega, d * a0 / c2)
        den = h * np.dot(omega, a0 ** 2 / c2)
        if den == 0.0:
            raise BootstrapDrawError("weighted drift design is degenerate")
        alpha_b = np.array([num / den])
    else:
        alpha_b, _, _ = _maximize(
            lambda a: gql_drift(path, m, a, fit.gamma_hat, omega),
            lambda a: gql_drift_grad(path, m, a, fit.gamma_hat, omega),
            lambda a: gql_drift_hessian(path, m, a, fit.gamma_hat, omega),
            m.alpha_domain, opts, "bootstrap drift equation")
    if not m.alpha_domain.contains(alpha_b):
        raise BootstrapDrawError(f"bootstrap drift estimate {alpha_b} outside the domain")
    return np.concatenate([gamma_b, alpha_b])


# --- distribution and intervals -----------------------------------------------

@dataclass(frozen=True)
class BootstrapDistribution:
    draws: np.ndarray
    mode: Mode
    theta_hat: np.ndarray
    scalings: RateScalings
    gamma_bar: np.ndarray
    failures: int = 0

    def __post_init__(self):
        if self.draws.ndim != 2 or self.draws.shape[0] < 1:
            raise DistributionError("bootstrap distribution needs at least one draw")
        if not np.all(np.isfinite(self.draws)):
            raise DistributionError("bootstrap draws contain non-finite values")


def weight_matrix(scheme: WeightScheme, R: int, k: int, rng) -> np.ndarray:
    """``(R, k)`` weights; row ``r`` is replication ``r``."""
    return scheme.draw(as_generator(rng), (int(R), int(k)))


def distribution(path: SamplePath, m: CoefficientModel, fit: GqmleFit, s: RateScalings,
                 gamma_bar: np.ndarray, part: BlockPartition, scheme: WeightScheme,
                 R: int, mode: Mode = Mode.SCORE_SHORTCUT, rng=None,
                 max_failure_rate: float = 0.01, sums: np.ndarray | None = None,
                 weights: np.ndarray | None = None) -> BootstrapDistribution:
    """Replicate the bootstrap statistic ``R`` times.

    All replications share one weight matrix drawn from ``rng``, so a given
    stream yields the same draws in either mode.
    """
    if R < 1:
        raise ParameterError(f"need R >= 1, got {R}")
    mode = parse_mode(mode)
    if weights is None:
        weights = weight_matrix(scheme, R, part.k, rng)
    theta_hat = fit.theta_hat
    failures = 0
    if mode is Mode.SCORE_SHORTCUT:
        if sums is None:
            sums = block_sums(path, m, fit, part)
        draws = score_draw(sums, weights, s) * shortcut_signs(m.p_gamma, m.p_alpha)
    else:
        norm = s.a_hat_diag[:, None] * gamma_bar
        rows = []
        for w in weights:
            try:
                theta_b = estimator_draw(path, m, fit, w, part)
            except BootstrapDrawError:
                failures += 1
                continue
            rows.append(norm @ (theta_b - theta_hat))
        if failures > max_failure_rate * R:
            raise DistributionError(f"{failures} of {R} bootstrap estimator draws failed")
        draws = np.array(rows).reshape(-1, theta_hat.shape[0])
    return BootstrapDistribution(np.asarray(draws, dtype=float), mode, theta_hat, s,
                                 np.asarray(gamma_bar, dtype=float), failures)


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: np.ndarray
    upper: np.ndarray
    level: float
    q_lo: np.ndarray
    q_hi: np.ndarray

    def contains(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return (self.lower <= theta) & (theta <= self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def confidence_interval(dist: BootstrapDistribution, fit: GqmleFit | None = None,
                        gamma_bar: np.ndarray | None = None, s: RateScalings | None = None,
                        level: float = 0.99) -> ConfidenceInterval:
    """Percentile interval for ``theta_star`` from the bootstrap law.

    Each draw is mapped back to the parameter scale with
    ``(A_hat Gamma_bar)^{-1}``, then ``theta_hat`` minus the upper/lower
    quantiles gives the lower/upper end point.
    """
    if not 0.0 < level < 1.0:
        raise ParameterError(f"level must lie in (0, 1), got {level}")
    gamma_bar = dist.gamma_bar if gamma_bar is None else np.asarray(gamma_bar, dtype=float)
    s = dist.scalings if s is None else s
    theta_hat = dist.theta_hat if fit is None else fit.theta_hat
    norm = s.a_hat_diag[:, None] * gamma_bar
    if not np.all(np.isfinite(norm)) or np.linalg.matrix_rank(norm) < norm.shape[0]:
        raise SingularNormalizationError("A_hat Gamma_bar is singular")
    mapped = np.linalg.solve(norm, dist.draws.T).T
    tail = (1.0 - level) / 2.0
    lo_q = np.quantile(mapped, tail, axis=0)
    hi_q = np.quantile(mapped, 1.0 - tail, axis=0)
    return ConfidenceInterval(
        lower=theta_hat - hi_q,
        upper=theta_hat - lo_q,
        level=level,
        q_lo=np.quantile(dist.draws, tail, axis=0),
        q_hi=np.quantile(dist.draws, 1.0 - tail, axis=0),
    )
