import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from interbank_mfg.equilibrium import (
    control_gain,
    cost_to_go_profile,
    deviation_profile,
    effective_rate,
    effective_rate_limit,
    expected_sq_deviation,
    value_function,
    value_time0,
    write_control_csv,
    write_value_csv,
)
from interbank_mfg.io import read_csv
from interbank_mfg.model import EquilibriumMode, ModelParams
from interbank_mfg.riccati import UnsupportedMode, control_factor, eta_closed_form
from interbank_mfg.simulate import PolicySpec, simulate_many

MODES = list(EquilibriumMode)
OL, CL, MFG = EquilibriumMode.OPEN_LOOP, EquilibriumMode.CLOSED_LOOP, EquilibriumMode.MEAN_FIELD_GAME
VALUE_PARAMS = ModelParams(n_banks=10, a=1, q=1, epsilon=10, rho=0.2, horizon=1, c=10)


def moment_oracle(d, p, mode, t_eval):
    """(E[dev^2], accumulated expected cost) from the moment ODE, DOP853."""
    F = control_factor(mode, p.n_banks)
    noise = F * p.sigma**2 * (1 - p.rho**2)

    def rhs(t, y):
        eta = eta_closed_form(t, p, mode)
        A = p.a + p.q + F * eta
        w = 0.5 * (p.epsilon - p.q**2 + (F * eta) ** 2)
        return [-2 * A * y[0] + noise, w * y[0]]

    sol = solve_ivp(rhs, (0, t_eval[-1]), [d * d, 0.0], method="DOP853", t_eval=t_eval, rtol=1e-12, atol=1e-14)
    return sol.y[0], sol.y[1]


def test_gain_examples(fig5):
    assert control_gain(1.0, fig5, CL) == pytest.approx(fig5.q, abs=1e-15)
    flat = ModelParams(a=0.5, q=2, epsilon=4, c=0)
    for mode in MODES:
        assert np.all(control_gain(np.linspace(0, 1, 5), flat, mode) == 2.0)
    assert control_gain(0.0, fig5, OL) > control_gain(0.0, fig5, CL)


def test_effective_rate_examples(fig5):
    flat = ModelParams(a=0, q=2, epsilon=4, c=0)
    assert np.all(effective_rate(np.linspace(0, 1, 5), flat, CL) == 2.0)
    p = fig5.replace(c=3.0)
    assert effective_rate(1.0, p, CL) == pytest.approx(p.a + p.q + 0.9 * 3.0, abs=1e-14)
    long = ModelParams(a=1, q=1, epsilon=10, c=0, horizon=100)
    assert effective_rate(0.0, long, MFG) == pytest.approx(math.sqrt(13), abs=1e-10)


def test_effective_rate_limits(fig5):
    assert effective_rate_limit(fig5, OL) == pytest.approx(math.sqrt(12.1), rel=1e-14)
    assert effective_rate_limit(fig5, CL) == pytest.approx(2 + 0.9 * 9 / (2 + math.sqrt(12.91)), rel=1e-14)
    assert effective_rate_limit(fig5, MFG) == pytest.approx(math.sqrt(13), rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 10_000), a=st.floats(0, 10), q=st.floats(0, 3), extra=st.floats(0.01, 50))
def test_limit_ordering_and_rate_identity(n, a, q, extra):
    p = ModelParams(n_banks=n, a=a, q=q, epsilon=q * q + extra)
    A_ol, A_cl, A_mfg = (effective_rate_limit(p, m) for m in MODES)
    # A = sqrt(R) whenever B equals the control factor
    assert A_ol == pytest.approx(math.sqrt((a + q) ** 2 + (1 - 1 / n) * extra), rel=1e-12)
    assert A_mfg == pytest.approx(math.sqrt((a + q) ** 2 + extra), rel=1e-12)
    assert A_ol >= A_cl * (1 - 1e-14)
    assert A_mfg >= A_ol * (1 - 1e-14)


def test_limits_increase_in_n(fig5):
    sizes = [2, 5, 10, 50, 200]
    for mode in (OL, CL):
        vals = [effective_rate_limit(fig5.replace(n_banks=n), mode) for n in sizes]
        assert np.all(np.diff(vals) > 0)


def test_value_function_terminal_and_degenerate(fig5):
    p = fig5.replace(c=4.0, rho=0.3)
    for d in (-1.0, 0.0, 0.7):
        assert value_function(1.0, d, p, CL) == pytest.approx(0.5 * 4.0 * d * d, abs=1e-15)
    assert value_function(0.2, 0.0, fig5.replace(rho=1.0), MFG) == 0.0
    with pytest.raises(UnsupportedMode):
        value_function(0.0, 1.0, fig5, OL)


@pytest.mark.parametrize("mode", [CL, MFG])
@pytest.mark.parametrize("d", [-1.0, 0.0, 0.5, 1.0])
def test_hjb_value_matches_time0_value(mode, d):
    assert value_function(0.0, d, VALUE_PARAMS, mode) == pytest.approx(value_time0(d, VALUE_PARAMS, mode), abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(
    d=st.floats(-3, 3),
    rho=st.floats(-1, 1),
    c=st.floats(0, 10),
    n=st.integers(2, 50),
    mode=st.sampled_from([CL, MFG]),
)
def test_hjb_value_matches_time0_value_property(d, rho, c, n, mode):
    p = ModelParams(n_banks=n, a=1, q=1, epsilon=10, rho=rho, c=c)
    assert value_function(0.0, d, p, mode) == pytest.approx(value_time0(d, p, mode, n_cells=4000), abs=1e-7)


@pytest.mark.parametrize("mode", MODES)
def test_value_time0_against_moment_ode(mode):
    for d in (0.0, 1.0):
        _, cost = moment_oracle(d, VALUE_PARAMS, mode, np.array([0.0, 1.0]))
        E, _ = moment_oracle(d, VALUE_PARAMS, mode, np.array([0.0, 1.0]))
        ref = cost[-1] + 0.5 * VALUE_PARAMS.c * E[-1]
        assert value_time0(d, VALUE_PARAMS, mode) == pytest.approx(ref, abs=1e-9)


def test_value_time0_degenerate(fig5):
    for mode in MODES:
        assert value_time0(2.0, ModelParams(a=1, q=2, epsilon=4, c=0), mode) == 0.0
        assert value_time0(0.0, fig5.replace(rho=1.0, c=3.0), mode) == 0.0


@pytest.mark.parametrize("mode", MODES)
def test_expected_sq_deviation_against_moment_ode(mode):
    p = VALUE_PARAMS
    t = np.linspace(0, 1, 11)
    E, _ = moment_oracle(0.8, p, mode, t)
    got = np.array([expected_sq_deviation(s, 0.8, p, mode) for s in t])
    assert np.max(np.abs(got - E)) <= 1e-10


def test_expected_sq_deviation_examples(fig5):
    for mode in MODES:
        assert expected_sq_deviation(0.0, 1.7, fig5, mode) == pytest.approx(1.7**2, abs=1e-15)
        grid, E = deviation_profile(0.0, fig5.replace(rho=1.0), mode)
        assert np.all(E == 0.0)
    with pytest.raises(ValueError):
        expected_sq_deviation(1.5, 0.0, fig5, CL)


@settings(max_examples=40, deadline=None)
@given(d=st.floats(-5, 5), T=st.floats(0.1, 50), mode=st.sampled_from(MODES))
def test_expected_sq_deviation_nonnegative_any_horizon(d, T, mode):
    p = ModelParams(a=2, q=1, epsilon=10, c=1, horizon=T)
    _, E = deviation_profile(d, p, mode, n_cells=2000)
    assert np.all(np.isfinite(E)) and np.all(E >= 0)


def test_expected_sq_deviation_monotone_regimes(fig5):
    # from rest the dispersion builds up; from far away it decays
    for mode in MODES:
        _, E = deviation_profile(0.0, fig5, mode)
        assert np.all(np.diff(E) >= 0)
        _, E = deviation_profile(5.0, ModelParams(a=1, q=2, epsilon=4, c=0), mode)
        assert np.all(np.diff(E) <= 0)


@pytest.mark.parametrize("mode", MODES)
def test_cost_to_go_profile(mode):
    grid, E, V = cost_to_go_profile(0.4, VALUE_PARAMS, mode)
    assert V[0] == pytest.approx(value_time0(0.4, VALUE_PARAMS, mode), abs=1e-10)
    assert V[-1] == pytest.approx(0.5 * VALUE_PARAMS.c * E[-1])
    assert np.all(np.diff(V - V[-1]) <= 1e-15)


def test_csv_writers(tmp_path, fig5):
    data = read_csv(write_control_csv(tmp_path / "g.csv", fig5, CL, n_steps=100))
    assert list(data) == ["t", "gain", "effective_rate"]
    assert np.allclose(data["effective_rate"] - data["gain"], fig5.a)
    data = read_csv(write_value_csv(tmp_path / "v.csv", 1.0, VALUE_PARAMS, CL))
    assert list(data) == ["t", "expected_sq_dev", "value"]
    assert data["expected_sq_dev"][0] == 1.0


@pytest.mark.slow
def test_terminal_dispersion_monte_carlo(fig5):
    """Cross-sectional E[(Xbar_T - X^i_T)^2] from simulated equilibrium ensembles."""
    run = simulate_many(fig5, PolicySpec.equilibrium(CL), 20_000, seed=11, dt=2.5e-4)
    x = run.terminal_dispersion
    est, se = x.mean(), x.std(ddof=1) / math.sqrt(len(x))
    ref = expected_sq_deviation(1.0, 0.0, fig5, CL)
    assert abs(est - ref) <= 3 * se
