import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdeboot import gqmle
from sdeboot.errors import DegenerateDataError, SingularScaleError
from sdeboot.gqmle import FitOptions, golden_section_max
from sdeboot.model import SamplingDesign, get_model, linear_model
from sdeboot.noise import RngStream, Wiener
from sdeboot.simulate import SamplePath, simulate_batch

from conftest import SQRT2, central_diff, nonlinear_model, path_from_increments, rel_err

CONST = get_model("ou_const_scale").model
LINEAR = get_model("ou_linear").model
PRESET = get_model("ou_sqrt_scale").model
UNIT_DRIFT = linear_model(lambda x: np.ones_like(x), ([0.1], [10.0]),
                          a0=lambda x: np.ones_like(x), alpha_domain=([-5.0], [5.0]))


# --- hand-evaluated values ----------------------------------------------------

def test_gql_scale_constant_path():
    p = path_from_increments(np.zeros(4))
    assert gqmle.gql_scale(p, CONST, [1.0]) == 0.0
    assert gqmle.gql_scale(p, CONST, [2.0]) == pytest.approx(-2.0 * math.log(4.0))


def test_gql_scale_hand_value():
    p = path_from_increments(np.array([1.0, 2.0]))
    assert gqmle.gql_scale(p, CONST, [1.0]) == -2.5


def test_gql_drift_hand_values():
    p = path_from_increments(np.array([2.0, 1.0]))
    assert gqmle.gql_drift(p, UNIT_DRIFT, [1.0], [1.0]) == -0.5
    perfect = path_from_increments(np.full(5, 0.5), h=0.5)
    assert gqmle.gql_drift(perfect, UNIT_DRIFT, [1.0], [1.0]) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30),
       st.floats(-3, 3), st.floats(0.2, 5))
def test_gql_drift_nonpositive(dx, alpha, gamma):
    p = path_from_increments(np.array(dx), h=0.1)
    assert gqmle.gql_drift(p, LINEAR, [alpha], [gamma]) <= 0.0


def test_zeta_hand_values():
    p = path_from_increments(np.array([2.0, 1.0]))
    assert gqmle.zeta(p, CONST, [1.0], 1)[0] == -3.0
    assert gqmle.zeta(p, CONST, [1.0], 2)[0] == 0.0


def test_eta_hand_values():
    p = SamplePath(np.array([2.0, 5.0, 5.0]), SamplingDesign(2, 1.0))
    assert gqmle.eta(p, LINEAR, [1.0], [1.0], 1)[0] == 2.0
    perfect = SamplePath(np.array([1.0, 1.5, 2.25]), SamplingDesign(2, 1.0))
    assert gqmle.eta(perfect, LINEAR, [0.5], [1.0], 1)[0] == 0.0


def test_single_index_matches_vectorised(preset_path_wiener):
    p = preset_path_wiener
    all_z = gqmle.zeta_all(p, PRESET, [1.3])
    for j in (1, 17, p.n):
        np.testing.assert_allclose(gqmle.zeta(p, PRESET, [1.3], j), all_z[j - 1], rtol=1e-14)
    with pytest.raises(IndexError):
        gqmle.zeta(p, PRESET, [1.3], 0)


# --- score identities ---------------------------------------------------------

@pytest.mark.parametrize("gamma", [[0.7], [1.41], [3.0]])
def test_scale_gradient_equals_minus_zeta_sum(preset_path_wiener, gamma):
    p = preset_path_wiener
    direct = gqmle.gql_scale_grad(p, PRESET, gamma)
    via_zeta = -gqmle.zeta_all(p, PRESET, gamma).sum(axis=0) / p.h
    assert rel_err(direct, via_zeta) < 1e-10
    fd = central_diff(lambda g: gqmle.gql_scale(p, PRESET, g), np.array(gamma), 1e-6)
    assert rel_err(direct, fd) < 1e-5


def test_drift_gradient_equals_eta_sum(ou_linear_path):
    p = ou_linear_path
    for alpha in ([-1.5], [-0.2], [0.3]):
        direct = gqmle.gql_drift_grad(p, LINEAR, alpha, [1.0])
        via_eta = gqmle.eta_all(p, LINEAR, alpha, [1.0]).sum(axis=0)
        assert rel_err(direct, via_eta) < 1e-10
        fd = central_diff(lambda a: gqmle.gql_drift(p, LINEAR, a, [1.0]), np.array(alpha), 1e-4)
        assert rel_err(direct, fd) < 1e-6
        # the score is not divided by h: doing so would be off by a factor of 200 here
        assert rel_err(direct / p.h, fd) > 100


def test_drift_gradient_symbolic():
    """Symbolic derivative of one summand of H2 carries no 1/h factor."""
    sp = pytest.importorskip("sympy")
    d, h, al, x, g = sp.symbols("d h alpha x gamma", positive=True)
    a = al * x
    c = g
    summand = -(d - h * a) ** 2 / (2 * h * c ** 2)
    eta_j = sp.diff(a, al) / c ** 2 * (d - h * a)
    assert sp.simplify(sp.diff(summand, al) - eta_j) == 0
    zsum = -(h * sp.log(c ** 2) + d ** 2 / c ** 2) / (2 * h)
    zeta_j = sp.diff(c, g) / c ** 3 * (h * c ** 2 - d ** 2)
    assert sp.simplify(sp.diff(zsum, g) + zeta_j / h) == 0


# --- fitting ----------------------------------------------------------------

def test_closed_form_scale_plug_in():
    rng = np.random.default_rng(3)
    values = np.cumsum(rng.normal(size=201)) * 0.1
    d, x = np.diff(values), values[:-1]
    S = np.sum(d ** 2 * (1 + x ** 2))
    n = 200
    p = SamplePath(values, SamplingDesign(n, S / (2 * n)))
    fit = gqmle.fit(p, PRESET)
    assert fit.gamma_hat[0] == pytest.approx(SQRT2, rel=1e-14)


def test_grid_oracle_optimality(preset_path_wiener):
    p = preset_path_wiener
    fit = gqmle.fit(p, PRESET)
    best = gqmle.gql_scale(p, PRESET, fit.gamma_hat)
    grid = np.linspace(0.1, 10.0, 1000)
    vals = np.array([gqmle.gql_scale(p, PRESET, [g]) for g in grid])
    assert best >= vals.max() - 1e-8
    vals200 = np.array([gqmle.gql_scale(p, PRESET, [g]) for g in np.linspace(0.1, 10, 200)])
    assert np.all(best >= vals200)


@pytest.mark.parametrize("model", [PRESET, CONST])
def test_golden_section_matches_closed_form(preset_path_wiener, model):
    p = preset_path_wiener
    closed = gqmle.fit(p, model)
    generic = gqmle.fit(p, model, FitOptions(use_closed_form=False))
    assert abs(generic.gamma_hat[0] - closed.gamma_hat[0]) < 1e-8
    assert generic.diagnostics["gamma"]["method"] == "golden"


def test_linear_drift_closed_form(ou_linear_path):
    p = ou_linear_path
    fit = gqmle.fit(p, LINEAR)
    x, d = p.left, p.dx
    c2 = fit.gamma_hat[0] ** 2
    ratio = np.sum(d * x / c2) / (p.h * np.sum(x * x / c2))
    assert fit.alpha_hat[0] == pytest.approx(ratio, rel=1e-14)
    generic = gqmle.fit(p, LINEAR, FitOptions(use_closed_form=False))
    assert abs(generic.alpha_hat[0] - fit.alpha_hat[0]) < 1e-8


def test_first_order_conditions(ou_linear_path):
    p = ou_linear_path
    fit = gqmle.fit(p, LINEAR)
    assert fit.interior.all()
    z = gqmle.zeta_all(p, LINEAR, fit.gamma_hat)
    e = gqmle.eta_all(p, LINEAR, fit.alpha_hat, fit.gamma_hat)
    assert abs(z.sum()) < 1e-9 * np.abs(z).sum()
    assert abs(e.sum()) < 1e-9 * np.abs(e).sum()


def test_correctly_specified_scale_band():
    design = SamplingDesign(100_000, 0.005)
    dyn = get_model("ou_const_scale").dynamics(Wiener())
    X = simulate_batch(dyn, design, 1, [RngStream.for_role(5, "band", i) for i in range(100)])
    hits = sum(abs(gqmle.fit(SamplePath(row, design), CONST).gamma_hat[0] - 1.0) <= 0.05 for row in X)
    assert hits >= 99


def test_nonlinear_fit(nonlinear_path):
    m = nonlinear_model()
    p = nonlinear_path
    fit = gqmle.fit(p, m)
    assert fit.interior.all(), fit
    # scores vanish at an interior optimum
    g = gqmle.gql_scale_grad(p, m, fit.gamma_hat) / p.n
    a = gqmle.gql_drift_grad(p, m, fit.alpha_hat, fit.gamma_hat) / p.T
    assert np.max(np.abs(g)) < 1e-8
    assert np.max(np.abs(a)) < 1e-7
    rng = np.random.default_rng(0)
    for _ in range(200):
        gg = rng.uniform(m.gamma_domain.lower, m.gamma_domain.upper)
        assert gqmle.gql_scale(p, m, gg) <= fit.h1_at_opt + 1e-8


# --- Hessians -----------------------------------------------------------------

def test_linear_scale_hessian_identity(preset_path_wiener):
    p = preset_path_wiener
    fit = gqmle.fit(p, PRESET)
    g = fit.gamma_hat[0]
    c0 = 1.0 / np.sqrt(1.0 + p.left ** 2)
    explicit = np.mean(1 / g ** 2 - 3 * p.dx ** 2 / (p.h * g ** 4 * c0 ** 2))
    assert fit.gamma_hessian[0, 0] == pytest.approx(explicit, rel=1e-12)
    assert fit.gamma_hessian[0, 0] == pytest.approx(-2 / g ** 2, rel=1e-12)


def test_preset_hessians_coincide(preset_path_bgamma):
    fit = gqmle.fit(preset_path_bgamma, PRESET)
    full, bar = gqmle.hessians(preset_path_bgamma, PRESET, fit)
    np.testing.assert_array_equal(full, bar)
    assert bar.shape == (1, 1) and bar[0, 0] < 0


def _fd_hessian(f, theta, eps):
    return np.array([central_diff(lambda t: f(t)[i] if np.ndim(f(t)) else f(t), theta, eps)
                     for i in range(np.size(f(theta)))])


@pytest.mark.parametrize("model_name", ["nonlinear", "ou_linear"])
def test_hessians_match_finite_differences(model_name, nonlinear_path, ou_linear_path):
    m = nonlinear_model() if model_name == "nonlinear" else LINEAR
    p = nonlinear_path if model_name == "nonlinear" else ou_linear_path
    fit = gqmle.fit(p, m)
    full, bar = gqmle.hessians(p, m, fit)
    pg = m.p_gamma
    eps = 1e-5
    h_gg = _fd_hessian(lambda g: gqmle.gql_scale_grad(p, m, g), fit.gamma_hat, eps) / p.n
    h_aa = _fd_hessian(lambda a: gqmle.gql_drift_grad(p, m, a, fit.gamma_hat), fit.alpha_hat, eps) / p.T
    h_ag = _fd_hessian(lambda g: gqmle.gql_drift_grad(p, m, fit.alpha_hat, g), fit.gamma_hat, eps) / p.T
    assert rel_err(full[:pg, :pg], h_gg) < 1e-5
    assert rel_err(full[pg:, pg:], h_aa) < 1e-5
    # the cross block can vanish at the optimum, so measure it against the drift block
    assert np.max(np.abs(full[pg:, :pg] - h_ag)) < 1e-5 * np.max(np.abs(h_aa))
    np.testing.assert_array_equal(bar[pg:, :pg], 0.0)
    np.testing.assert_array_equal(full[:pg, pg:], 0.0)
    # second-order differences of the likelihood itself
    f2 = lambda g: gqmle.gql_scale(p, m, g)
    e = 1e-4
    for i in range(pg):
        ei = np.zeros(pg)
        ei[i] = e
        fd = (f2(fit.gamma_hat + ei) - 2 * f2(fit.gamma_hat) + f2(fit.gamma_hat - ei)) / e ** 2 / p.n
        assert fd == pytest.approx(full[i, i], rel=1e-5)


@pytest.mark.parametrize("seed", range(5))
def test_scale_block_negative_definite(seed):
    design = SamplingDesign(20_000, 0.005)
    dyn = get_model("ou_sqrt_scale").dynamics(Wiener())
    row = simulate_batch(dyn, design, 1, [RngStream(seed, 99)])[0]
    fit = gqmle.fit(SamplePath(row, design), PRESET)
    assert np.all(np.linalg.eigvalsh(fit.gamma_hessian) < 0)


# --- failure modes ------------------------------------------------------------

def test_degenerate_path_rejected():
    with pytest.raises(DegenerateDataError):
        gqmle.fit(path_from_increments(np.zeros(10), h=0.1), PRESET)


def test_singular_scale_detected():
    m = linear_model(lambda x: x, ([0.1], [10.0]))
    p = SamplePath(np.array([0.0, 1.0, 2.0]), SamplingDesign(2, 1.0))
    with pytest.raises(SingularScaleError):
        gqmle.gql_scale(p, m, [1.0])
    with pytest.raises(SingularScaleError):
        gqmle.fit(p, m)


def test_boundary_flagged():
    p = path_from_increments(np.full(50, 1e-4) * (-1) ** np.arange(50), h=0.1)
    fit = gqmle.fit(p, CONST)
    assert fit.gamma_hat[0] == 0.1
    assert not fit.interior_gamma[0]


def test_golden_section_monotone_objective():
    x, fx, _ = golden_section_max(lambda t: t, 0.0, 1.0)
    assert x == 1.0
    x, _, _ = golden_section_max(lambda t: -(t - 0.3) ** 2, 0.0, 1.0, xtol=1e-10)
    assert x == pytest.approx(0.3, abs=1e-9)
