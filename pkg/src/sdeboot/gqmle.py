"""Stepwise Gaussian quasi-likelihood estimation.

The scale parameter is fitted first from

    H1(gamma) = -1/(2h) sum_j { h log c_{j-1}^2(gamma) + (dX_j)^2 / c_{j-1}^2(gamma) },

then the drift parameter from

    H2(alpha, gamma_hat) = -1/(2h) sum_j (dX_j - h a_{j-1}(alpha))^2 / c_{j-1}^2(gamma_hat).

Per-observation score terms:

    zeta_j(gamma)      = d_gamma c / c^3 * (h c^2 - dX_j^2),   d_gamma H1 = -(1/h) sum zeta_j
    eta_j(alpha,gamma) = d_alpha a / c^2 * (dX_j - h a),       d_alpha H2 = sum eta_j
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DegenerateDataError, DimensionError, FitError, SingularScaleError
from .model import CoefficientModel, ParamDomain, clamp_to_domain
from .simulate import SamplePath

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _vec(theta, dim, what):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (dim,):
        raise DimensionError(f"{what} must have length {dim}, got {theta.shape}")
    return theta


def _scale_values(x, m: CoefficientModel, gamma):
    c = np.asarray(m.scale(x, gamma), dtype=float)
    if np.any(c == 0.0) or not np.all(np.isfinite(c)):
        bad = int(np.argmax((c == 0.0) | ~np.isfinite(c)))
        raise SingularScaleError(
            f"scale coefficient is {c[bad]} at x={x[bad]!r}, gamma={gamma}")
    return c


def _wsum(terms, weights):
    if weights is None:
        return terms.sum(axis=0)
    return np.tensordot(weights, terms, axes=(0, 0))


# --- quasi-likelihoods ------------------------------------------------------

def gql_scale(path: SamplePath, m: CoefficientModel, gamma, weights=None) -> float:
    """H1 at ``gamma``; ``weights`` optionally multiplies each summand."""
    gamma = _vec(gamma, m.p_gamma, "gamma")
    c2 = _scale_values(path.left, m, gamma) ** 2
    h = path.h
    terms = h * np.log(c2) + path.dx ** 2 / c2
    return float(-_wsum(terms, weights) / (2.0 * h))


def gql_drift(path: SamplePath, m: CoefficientModel, alpha, gamma, weights=None) -> float:
    alpha = _vec(alpha, m.p_alpha, "alpha")
    gamma = _vec(gamma, m.p_gamma, "gamma")
    x = path.left
    c2 = _scale_values(x, m, gamma) ** 2
    h = path.h
    resid = path.dx - h * m.drift(x, alpha)
    return float(-_wsum(resid ** 2 / c2, weights) / (2.0 * h))


# --- score summands ---------------------------------------------------------

def zeta_all(path: SamplePath, m: CoefficientModel, gamma) -> np.ndarray:
    """All ``zeta_j(gamma)``, shape ``(n, p_gamma)``."""
    gamma = _vec(gamma, m.p_gamma, "gamma")
    x = path.left
    c = _scale_values(x, m, gamma)
    cg = m.scale_d1(x, gamma)
    bracket = path.h * c ** 2 - path.dx ** 2
    return cg * (bracket / c ** 3)[:, None]


def eta_all(path: SamplePath, m: CoefficientModel, alpha, gamma) -> np.ndarray:
    """All ``eta_j(alpha, gamma)``, shape ``(n, p_alpha)``."""
    alpha = _vec(alpha, m.p_alpha, "alpha")
    gamma = _vec(gamma, m.p_gamma, "gamma")
    x = path.left
    c = _scale_values(x, m, gamma)
    ag = m.drift_d1(x, alpha)
    resid = path.dx - path.h * m.drift(x, alpha)
    return ag * (resid / c ** 2)[:, None]


def _check_index(path, j):
    if not 1 <= j <= path.n:
        raise IndexError(f"observation index {j} outside 1..{path.n}")


def zeta(path: SamplePath, m: CoefficientModel, gamma, j: int) -> np.ndarray:
    """``zeta_j(gamma)`` for a single 1-based index ``j``."""
    _check_index(path, j)
    gamma = _vec(gamma, m.p_gamma, "gamma")
    x = path.values[j - 1:j]
    d = path.values[j] - path.values[j - 1]
    c = _scale_values(x, m, gamma)
    cg = m.scale_d1(x, gamma)[0]
    return cg / c[0] ** 3 * (path.h * c[0] ** 2 - d ** 2)


def eta(path: SamplePath, m: CoefficientModel, alpha, gamma, j: int) -> np.ndarray:
    """``eta_j(alpha, gamma)`` for a single 1-based index ``j``."""
    _check_index(path, j)
    alpha = _vec(alpha, m.p_alpha, "alpha")
    gamma = _vec(gamma, m.p_gamma, "gamma")
    x = path.values[j - 1:j]
    d = path.values[j] - path.values[j - 1]
    c = _scale_values(x, m, gamma)
    ag = m.drift_d1(x, alpha)[0]
    return ag / c[0] ** 2 * (d - path.h * m.drift(x, alpha)[0])


# --- analytic derivatives ---------------------------------------------------

def gql_scale_grad(path: SamplePath, m: CoefficientModel, gamma, weights=None) -> np.ndarray:
    """Gradient of H1 differentiated term by term (independent of ``zeta_all``)."""
    gamma = _vec(gamma, m.p_gamma, "gamma")
    x, d, h = path.left, path.dx, path.h
    c = _scale_values(x, m, gamma)
    cg = m.scale_d1(x, gamma)
    # d/dgamma log c^2 = 2 cg / c ; d/dgamma c^-2 = -2 cg / c^3
    term = h * 2.0 * cg / c[:, None] - (2.0 * d ** 2 / c ** 3)[:, None] * cg
    return -_wsum(term, weights) / (2.0 * h)


def gql_drift_grad(path: SamplePath, m: CoefficientModel, alpha, gamma, weights=None) -> np.ndarray:
    """Gradient of H2 in alpha, differentiated term by term."""
    alpha = _vec(alpha, m.p_alpha, "alpha")
    gamma = _vec(gamma, m.p_gamma, "gamma")
    x, d, h = path.left, path.dx, path.h
    c2 = _scale_values(x, m, gamma) ** 2
    resid = d - h * m.drift(x, alpha)
    ag = m.drift_d1(x, alpha)
    # d/dalpha (dX - h a)^2 = -2 h (dX - h a) a_alpha
    return -_wsum((-2.0 * h * resid / c2)[:, None] * ag, weights) / (2.0 * h)


def gql_scale_hessian(path: SamplePath, m: CoefficientModel, gamma, weights=None) -> np.ndarray:
    gamma = _vec(gamma, m.p_gamma, "gamma")
    x, d, h = path.left, path.dx, path.h
    c = _scale_values(x, m, gamma)
    cg = m.scale_d1(x, gamma)
    cgg = m.scale_d2(x, gamma)
    outer = cg[:, :, None] * cg[:, None, :]
    dzeta = (h * (cgg / c[:, None, None] - outer / (c ** 2)[:, None, None])
             - (d ** 2)[:, None, None] * (cgg / (c ** 3)[:, None, None]
                                          - 3.0 * outer / (c ** 4)[:, None, None]))
    return -_wsum(dzeta, weights) / h


def gql_drift_hessian(path: SamplePath, m: CoefficientModel, alpha, gamma, weights=None) -> np.ndarray:
    alpha = _vec(alpha, m.p_alpha, "alpha")
    gamma = _vec(gamma, m.p_gamma, "gamma")
    x, d, h = path.left, path.dx, path.h
    c2 = _scale_values(x, m, gamma) ** 2
    resid = d - h * m.drift(x, alpha)
    ag = m.drift_d1(x, alpha)
    agg = m.drift_d2(x, alpha)
    outer = ag[:, :, None] * ag[:, None, :]
    terms = (agg * resid[:, None, None] - h * outer) / c2[:, None, None]
    return _wsum(terms, weights)


def gql_cross_hessian(path: SamplePath, m: CoefficientModel, alpha, gamma) -> np.ndarray:
    """Mixed derivative of H2, shape ``(p_alpha, p_gamma)``."""
    alpha = _vec(alpha, m.p_alpha, "alpha")
    gamma = _vec(gamma, m.p_gamma, "gamma")
    x, d, h = path.left, path.dx, path.h
    c = _scale_values(x, m, gamma)
    resid = d - h * m.drift(x, alpha)
    ag = m.drift_d1(x, alpha)
    cg = m.scale_d1(x, gamma)
    w = -2.0 * resid / c ** 3
    return np.einsum("j,ja,jg->ag", w, ag, cg)


# --- optimisation -----------------------------------------------------------

@dataclass(frozen=True)
class FitOptions:
    xtol: float = 1e-8
    maxiter: int = 500
    n_starts: int = 5
    use_closed_form: bool = True
    polish_steps: int = 5


@dataclass(frozen=True)
class GqmleFit:
    gamma_hat: np.ndarray
    alpha_hat: np.ndarray
    h1_at_opt: float
    h2_at_opt: float
    gamma_hessian: np.ndarray
    alpha_hessian: np.ndarray
    cross_block: np.ndarray
    interior_gamma: np.ndarray
    interior_alpha: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def theta_hat(self) -> np.ndarray:
        return np.concatenate([self.gamma_hat, self.alpha_hat])

    @property
    def interior(self) -> np.ndarray:
        return np.concatenate([self.interior_gamma, self.interior_alpha])

    @property
    def p_gamma(self) -> int:
        return self.gamma_hat.shape[0]

    @property
    def p_alpha(self) -> int:
        return self.alpha_hat.shape[0]


def golden_section_max(f, lo: float, hi: float, xtol: float = 1e-8, maxiter: int = 500):
    """Maximise a unimodal scalar function on ``[lo, hi]``.

    Returns ``(x, f(x), iterations)``; the end points are also compared so a
    monotone objective returns the right boundary.
    """
    a, b = float(lo), float(hi)
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    it = 0
    while b - a > xtol and it < maxiter:
        it += 1
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    if b - a > xtol:
        raise FitError("golden-section search did not converge",
                       {"bracket": [a, b], "iterations": it})
    best_x, best_f = (x1, f1) if f1 >= f2 else (x2, f2)
    for edge in (float(lo), float(hi)):
        fe = f(edge)
        if fe > best_f:
            best_x, best_f = edge, fe
    return best_x, best_f, it


def _maximize(f, grad, hess, domain: ParamDomain, opts: FitOptions, what: str):
    """Bounded maximisation followed by guarded Newton polishing."""
    if domain.dim == 1:
        x, fx, it = golden_section_max(lambda t: f(np.array([t])), domain.lower[0],
                                       domain.upper[0], opts.xtol, opts.maxiter)
        theta = np.array([x])
        diag = {"method": "golden", "iterations": it}
    else:
        best = None
        fails = []
        for start in domain.corners_and_center(opts.n_starts):
            res = optimize.minimize(lambda t: -f(t), start, method="Nelder-Mead",
                                    bounds=list(zip(domain.lower, domain.upper)),
                                    options={"xatol": opts.xtol, "fatol": 1e-12,
                                             "maxiter": opts.maxiter})
            if not res.success:
                fails.append(res.message)
                continue
            if best is None or -res.fun > best[1]:
                best = (res.x, -res.fun, res.nit)
        if best is None:
            raise FitError(f"{what}: no start converged", {"messages": fails})
        theta, fx = np.asarray(best[0], dtype=float), best[1]
        diag = {"method": "nelder-mead", "iterations": int(best[2]), "failed_starts": len(fails)}

    # Newton polishing; each step must stay in the domain and not decrease f
    for _ in range(opts.polish_steps):
        H = hess(theta)
        try:
            step = np.linalg.solve(H, grad(theta))
        except np.linalg.LinAlgError:
            break
        cand = theta - step
        if not domain.contains(cand) or not np.all(np.isfinite(cand)):
            break
        fc = f(cand)
        # near the optimum f is flat to rounding, so allow a few ulps of decrease
        if fc < fx - 64 * np.finfo(float).eps * max(1.0, abs(fx)):
            break
        theta, fx = cand, fc
        if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(theta))):
            break
    return theta, fx, diag


def _interior_flags(theta, domain: ParamDomain, tol: float) -> np.ndarray:
    scale = np.maximum(1.0, np.abs(theta))
    return (theta - domain.lower > tol * scale) & (domain.upper - theta > tol * scale)


def fit(path: SamplePath, m: CoefficientModel, opts: FitOptions | None = None) -> GqmleFit:
    """Stepwise GQMLE: scale parameter first, then drift with the fitted scale plugged in."""
    opts = opts or FitOptions()
    x, d, h, n = path.left, path.dx, path.h, path.n
    if not np.any(d != 0.0):
        raise DegenerateDataError("all increments are zero; the scale is not identifiable")

    if m.linear_scale is not None and opts.use_closed_form:
        c0 = np.asarray(m.linear_scale(x), dtype=float)
        if np.any(c0 == 0.0):
            raise SingularScaleError("c0(x) vanishes at an observation")
        raw = np.array([math.sqrt(np.sum(d ** 2 / c0 ** 2) / path.T)])
        gamma_hat = clamp_to_domain(raw, m.gamma_domain)
        gdiag = {"method": "closed_form", "clamped": bool(raw[0] != gamma_hat[0])}
    else:
        gamma_hat, _, gdiag = _maximize(
            lambda g: gql_scale(path, m, g),
            lambda g: gql_scale_grad(path, m, g),
            lambda g: gql_scale_hessian(path, m, g),
            m.gamma_domain, opts, "scale fit")

    if m.p_alpha == 0:
        alpha_hat = np.empty(0)
        adiag = {"method": "none"}
    elif m.linear_drift is not None and opts.use_closed_form:
        a0 = np.asarray(m.linear_drift(x), dtype=float)
        c2 = _scale_values(x, m, gamma_hat) ** 2
        den = h * np.sum(a0 ** 2 / c2)
        if den == 0.0:
            raise DegenerateDataError("drift regressor a0(x) vanishes on the whole path")
        raw = np.array([np.sum(d * a0 / c2) / den])
        alpha_hat = clamp_to_domain(raw, m.alpha_domain)
        adiag = {"method": "closed_form", "clamped": bool(raw[0] != alpha_hat[0])}
    else:
        alpha_hat, _, adiag = _maximize(
            lambda a: gql_drift(path, m, a, gamma_hat),
            lambda a: gql_drift_grad(path, m, a, gamma_hat),
            lambda a: gql_drift_hessian(path, m, a, gamma_hat),
            m.alpha_domain, opts, "drift fit")

    gamma_hat = np.asarray(gamma_hat, dtype=float)
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    T = path.T
    return GqmleFit(
        gamma_hat=gamma_hat,
        alpha_hat=alpha_hat,
        h1_at_opt=gql_scale(path, m, gamma_hat),
        h2_at_opt=gql_drift(path, m, alpha_hat, gamma_hat),
        gamma_hessian=gql_scale_hessian(path, m, gamma_hat) / n,
        alpha_hessian=gql_drift_hessian(path, m, alpha_hat, gamma_hat) / T,
        cross_block=gql_cross_hessian(path, m, alpha_hat, gamma_hat) / T,
        interior_gamma=_interior_flags(gamma_hat, m.gamma_domain, opts.xtol),
        interior_alpha=_interior_flags(alpha_hat, m.alpha_domain, opts.xtol),
        diagnostics={"gamma": gdiag, "alpha": adiag},
    )


def hessians(path: SamplePath, m: CoefficientModel, fit_: GqmleFit):
    """Return ``(Gamma_hat, Gamma_bar)``.

    ``Gamma_hat`` is lower block-triangular with the mixed block below the
    diagonal; ``Gamma_bar`` keeps only the diagonal blocks.
    """
    pg, pa = fit_.p_gamma, fit_.p_alpha
    p = pg + pa
    bar = np.zeros((p, p))
    bar[:pg, :pg] = fit_.gamma_hessian
    bar[pg:, pg:] = fit_.alpha_hessian
    full = bar.copy()
    full[pg:, :pg] = fit_.cross_block
    return full, bar
