"""Feedback controls, effective lending rates and equilibrium values.

In every equilibrium bank i plays alpha^i = kappa_t (Xbar - X^i) with gain
kappa_t = q + F eta_t, where F = 1 - 1/N for the finite games and 1 for the
mean field limit.  Value functions depend on the state only through the
deviation ``Xbar - X^i``, so the functions here take that scalar directly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from .io import write_csv
from .model import EquilibriumMode, ModelParams
from .riccati import (
    UnsupportedMode,
    control_factor,
    eta_closed_form,
    eta_limit,
    mu,
    time_grid,
)

DEFAULT_CELLS = 10_000


def control_gain(t, params: ModelParams, mode: EquilibriumMode):
    mode = EquilibriumMode.parse(mode)
    return params.q + control_factor(mode, params.n_banks) * eta_closed_form(t, params, mode)


def effective_rate(t, params: ModelParams, mode: EquilibriumMode):
    """A_t = a + q + F eta_t, the interbank rate the equilibrium is equivalent to."""
    return params.a + control_gain(t, params, mode)


def effective_rate_limit(params: ModelParams, mode: EquilibriumMode) -> float:
    mode = EquilibriumMode.parse(mode)
    return params.a + params.q + control_factor(mode, params.n_banks) * eta_limit(params, mode)


def value_function(t: float, mean_dev: float, params: ModelParams, mode: EquilibriumMode) -> float:
    mode = EquilibriumMode.parse(mode)
    if mode is EquilibriumMode.OPEN_LOOP:
        raise UnsupportedMode("the quadratic value ansatz is only available for closed loop and MFG")
    return 0.5 * eta_closed_form(t, params, mode) * mean_dev**2 + mu(t, params, mode)


def _deviation_noise(params: ModelParams, mode: EquilibriumMode) -> float:
    # variance rate of d(Xbar - X^i)
    return control_factor(mode, params.n_banks) * params.sigma**2 * (1.0 - params.rho**2)


def deviation_profile(
    initial_dev: float,
    params: ModelParams,
    mode: EquilibriumMode,
    t_end: float | None = None,
    n_cells: int = DEFAULT_CELLS,
) -> tuple[np.ndarray, np.ndarray]:
    """E[(Xbar_t - X^i_t)^2] on a uniform grid over [0, t_end].

    The cumulative integral Lambda of the effective rate is built on a fine
    grid (Simpson per cell with closed-form midpoints).  The stochastic part
    is then advanced over pairs of cells as
        I <- exp(-2 dLambda) I + int_cell-pair exp(-2 (Lambda(t) - Lambda(s))) ds,
    so exponents stay non-positive for any horizon.  The returned grid has
    ``n_cells // 2`` intervals.
    """
    mode = EquilibriumMode.parse(mode)
    t_end = params.horizon if t_end is None else float(t_end)
    n_cells = max(4, n_cells + (-n_cells) % 4)
    fine = np.linspace(0.0, t_end, n_cells + 1)
    if t_end == 0.0:
        coarse = fine[::2]
        return coarse, np.full(coarse.shape, float(initial_dev) ** 2)
    h = fine[1] - fine[0]
    rate = effective_rate(fine, params, mode)
    rate_mid = effective_rate(0.5 * (fine[:-1] + fine[1:]), params, mode)
    lam = np.concatenate([[0.0], np.cumsum(h / 6.0 * (rate[:-1] + 4.0 * rate_mid + rate[1:]))])

    lam_even = lam[0::2]
    lam_odd = lam[1::2]
    step_decay = np.exp(-2.0 * np.diff(lam_even))
    half_decay = np.exp(-2.0 * (lam_even[1:] - lam_odd))
    local = h / 3.0 * (step_decay + 4.0 * half_decay + 1.0)

    acc = np.empty(lam_even.shape)
    acc[0] = 0.0
    for m in range(1, len(acc)):
        acc[m] = step_decay[m - 1] * acc[m - 1] + local[m - 1]

    noise = _deviation_noise(params, mode)
    expected = float(initial_dev) ** 2 * np.exp(-2.0 * lam_even) + noise * acc
    return fine[0::2], expected


def expected_sq_deviation(
    t: float, initial_dev: float, params: ModelParams, mode: EquilibriumMode, n_cells: int = DEFAULT_CELLS
) -> float:
    if not 0.0 <= t <= params.horizon:
        raise ValueError("t must lie in [0, T]")
    _, values = deviation_profile(initial_dev, params, mode, t_end=t, n_cells=n_cells)
    return float(values[-1])


def _running_weight(grid, params: ModelParams, mode: EquilibriumMode):
    # 1/2 alpha^2 - q alpha dev + eps/2 dev^2 with alpha = kappa dev
    # equals 1/2 [eps - q^2 + (F eta)^2] dev^2
    f_eta = control_factor(mode, params.n_banks) * eta_closed_form(grid, params, mode)
    return 0.5 * (params.epsilon - params.q**2 + f_eta**2)


def value_time0(
    initial_dev: float, params: ModelParams, mode: EquilibriumMode, n_cells: int = DEFAULT_CELLS
) -> float:
    """Equilibrium cost of a bank starting ``initial_dev`` below the mean.

    Computed from the expected squared deviation rather than the HJB ansatz,
    so it covers the open loop as well.  For the MFG mode the finite-N
    factors are replaced by their N -> infinity limits.
    """
    mode = EquilibriumMode.parse(mode)
    grid, expected = deviation_profile(initial_dev, params, mode, n_cells=n_cells)
    running = simpson(_running_weight(grid, params, mode) * expected, x=grid)
    return float(running + 0.5 * params.c * expected[-1])


def cost_to_go_profile(
    initial_dev: float, params: ModelParams, mode: EquilibriumMode, n_cells: int = DEFAULT_CELLS
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grid, E[(Xbar_t - X^i_t)^2] and expected remaining cost from t to T."""
    mode = EquilibriumMode.parse(mode)
    grid, expected = deviation_profile(initial_dev, params, mode, n_cells=n_cells)
    integrand = _running_weight(grid, params, mode) * expected
    # Simpson over pairs of cells, trapezoid for the odd leftover cell near T
    h = grid[1] - grid[0]
    tail = np.zeros_like(grid)
    n = len(grid) - 1
    j = n
    while j >= 2:
        tail[j - 2] = tail[j] + h / 3.0 * (integrand[j - 2] + 4.0 * integrand[j - 1] + integrand[j])
        tail[j - 1] = tail[j] + 0.5 * h * (integrand[j - 1] + integrand[j])
        j -= 2
    if j == 1:
        tail[0] = tail[1] + 0.5 * h * (integrand[0] + integrand[1])
    return grid, expected, tail + 0.5 * params.c * expected[-1]


def write_control_csv(path: str | Path, params: ModelParams, mode: EquilibriumMode, n_steps: int = 1000) -> Path:
    grid = time_grid(params.horizon, n_steps)
    return write_csv(
        path,
        ["t", "gain", "effective_rate"],
        [grid, control_gain(grid, params, mode), effective_rate(grid, params, mode)],
    )


def write_value_csv(
    path: str | Path, initial_dev: float, params: ModelParams, mode: EquilibriumMode, n_cells: int = 2000
) -> Path:
    grid, expected, value = cost_to_go_profile(initial_dev, params, mode, n_cells=n_cells)
    return write_csv(path, ["t", "expected_sq_dev", "value"], [grid, expected, value])

