"""Scalar Riccati coefficients of the equilibria.

Every equilibrium of the game is parameterised by a deterministic function
solving the backward ODE

    d eta/dt = 2 (a + q) eta + B eta^2 - (epsilon - q^2),   eta_T = c,

where only the coefficient ``B`` of the square term depends on the notion of
equilibrium: ``1 - 1/N`` (open loop, usually written phi), ``1 - 1/N^2``
(closed loop) and ``1`` (mean field game limit).  The ODE has an explicit
solution which is the main evaluation path; :func:`integrate_riccati` is an
independent RK4 integrator kept as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from .io import write_csv
from .model import EquilibriumMode, ModelParams


class DegenerateRiccati(ArithmeticError):
    """R == 0: the explicit solution does not apply, integrate the ODE instead."""


class UnsupportedTerminalCost(ValueError):
    pass


class UnsupportedMode(ValueError):
    pass


def square_coefficient(mode: EquilibriumMode, n_banks: int) -> float:
    mode = EquilibriumMode.parse(mode)
    if mode is EquilibriumMode.CLOSED_LOOP:
        return 1.0 - 1.0 / n_banks**2
    if mode is EquilibriumMode.OPEN_LOOP:
        return 1.0 - 1.0 / n_banks
    return 1.0


def control_factor(mode: EquilibriumMode, n_banks: int) -> float:
    """Weight of the Riccati function in the feedback gain: 1 - 1/N, or 1 for MFG."""
    if EquilibriumMode.parse(mode) is EquilibriumMode.MEAN_FIELD_GAME:
        return 1.0
    return 1.0 - 1.0 / n_banks


@dataclass(frozen=True)
class RiccatiCoefficients:
    B: float
    R: float
    delta_plus: float
    delta_minus: float


def roots(params: ModelParams, mode: EquilibriumMode) -> RiccatiCoefficients:
    B = square_coefficient(mode, params.n_banks)
    drift = params.a + params.q
    R = drift**2 + B * (params.epsilon - params.q**2)
    if R <= 0.0:
        raise DegenerateRiccati(
            f"R = {R!r} (a + q = {drift!r}, B (epsilon - q^2) = {R - drift**2!r})"
        )
    sqrt_r = math.sqrt(R)
    return RiccatiCoefficients(B=B, R=R, delta_plus=-drift + sqrt_r, delta_minus=-drift - sqrt_r)


def riccati_rhs(eta, params: ModelParams, mode: EquilibriumMode):
    B = square_coefficient(mode, params.n_banks)
    return 2.0 * (params.a + params.q) * eta + B * eta * eta - (params.epsilon - params.q**2)


def eta_closed_form(t, params: ModelParams, mode: EquilibriumMode):
    """Explicit solution of the Riccati ODE at time(s) ``t`` in [0, T].

    Numerator and denominator are divided by exp(2 sqrt(R) (T - t)) so that
    long horizons do not overflow.  Returns a float for scalar ``t``.
    """
    co = roots(params, mode)
    k = params.epsilon - params.q**2
    c = params.c
    t_arr = np.asarray(t, dtype=float)
    tau = params.horizon - t_arr
    if np.any(tau < 0) or np.any(t_arr < 0):
        raise ValueError("t must lie in [0, T]")
    x = (co.delta_plus - co.delta_minus) * tau
    decay = np.exp(-x)
    one_minus = -np.expm1(-x)
    num = -k * one_minus - c * (co.delta_plus - co.delta_minus * decay)
    den = (co.delta_minus - co.delta_plus * decay) - c * co.B * one_minus
    if np.any(den >= 0.0):
        raise ArithmeticError("non-negative denominator in explicit Riccati solution")
    eta = np.where(tau == 0.0, c, num / den)
    if eta.ndim == 0:
        return float(eta)
    return eta


def eta_limit(params: ModelParams, mode: EquilibriumMode) -> float:
    """Long-horizon constant (epsilon - q^2) / (-delta_minus), defined for c == 0."""
    if params.c != 0.0:
        raise UnsupportedTerminalCost("the long-horizon limit is only provided for c = 0")
    co = roots(params, mode)
    return (params.epsilon - params.q**2) / (-co.delta_minus)


def time_grid(horizon: float, n_steps: int) -> np.ndarray:
    # inclusive of both ends, indexed forward in time
    return np.linspace(0.0, horizon, n_steps + 1)


@dataclass(frozen=True)
class RiccatiSolution:
    mode: EquilibriumMode
    coeffs: RiccatiCoefficients | None
    terminal_value: float
    grid: np.ndarray
    values: np.ndarray
    params: ModelParams
    source: str = "closed_form"
    mu: np.ndarray | None = field(default=None, repr=False)

    def __call__(self, t):
        return eta_closed_form(t, self.params, self.mode)

    def to_csv(self, path: str | Path, with_mu: bool = False) -> Path:
        if with_mu:
            mu_vals = self.mu if self.mu is not None else mu_on_grid(self.grid, self.params, self.mode)
            return write_csv(path, ["t", "eta", "mu"], [self.grid, self.values, mu_vals])
        return write_csv(path, ["t", "eta"], [self.grid, self.values])


def solve(params: ModelParams, mode: EquilibriumMode, n_steps: int = 1000, with_mu: bool = False) -> RiccatiSolution:
    """Closed-form solution sampled on a uniform grid of ``n_steps`` intervals."""
    mode = EquilibriumMode.parse(mode)
    grid = time_grid(params.horizon, n_steps)
    values = np.asarray(eta_closed_form(grid, params, mode))
    mu_vals = mu_on_grid(grid, params, mode) if with_mu else None
    return RiccatiSolution(
        mode=mode,
        coeffs=roots(params, mode),
        terminal_value=params.c,
        grid=grid,
        values=values,
        params=params,
        mu=mu_vals,
    )


def integrate_riccati(params: ModelParams, mode: EquilibriumMode, step: float | None = None) -> RiccatiSolution:
    """Classical RK4, backward from eta_T = c, on a fixed uniform grid.

    Works when R == 0 as well, which is the fallback the explicit formula
    cannot cover.  ``step`` defaults to 1e-4 T and is shrunk slightly if it
    does not divide T.
    """
    mode = EquilibriumMode.parse(mode)
    T = params.horizon
    if step is None:
        step = 1e-4 * T
    if step <= 0 or step > T / 10:
        raise ValueError(f"step must lie in (0, T/10], got {step!r}")
    n = int(math.ceil(T / step - 1e-9))
    h = T / n
    B = square_coefficient(mode, params.n_banks)
    b2 = 2.0 * (params.a + params.q)
    k = params.epsilon - params.q**2

    def g(y: float) -> float:
        # d eta / d(T - t)
        return -(b2 * y + B * y * y - k)

    out = np.empty(n + 1)
    y = float(params.c)
    out[n] = y
    for j in range(n - 1, -1, -1):
        k1 = g(y)
        k2 = g(y + 0.5 * h * k1)
        k3 = g(y + 0.5 * h * k2)
        k4 = g(y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[j] = y
    try:
        co = roots(params, mode)
    except DegenerateRiccati:
        co = None
    return RiccatiSolution(
        mode=mode,
        coeffs=co,
        terminal_value=params.c,
        grid=time_grid(T, n),
        values=out,
        params=params,
        source="rk4",
    )


def _mu_scale(params: ModelParams, mode: EquilibriumMode) -> float:
    mode = EquilibriumMode.parse(mode)
    if mode is EquilibriumMode.OPEN_LOOP:
        raise UnsupportedMode("mu is only defined for the closed-loop and MFG value functions")
    return 0.5 * params.sigma**2 * (1.0 - params.rho**2) * control_factor(mode, params.n_banks)


def mu(t: float, params: ModelParams, mode: EquilibriumMode, panels: int = 1000) -> float:
    """State-independent part of the value function,
    (1/2) sigma^2 (1 - rho^2) F int_t^T eta_s ds, by composite Simpson."""
    scale = _mu_scale(params, mode)
    T = params.horizon
    if not 0.0 <= t <= T:
        raise ValueError("t must lie in [0, T]")
    if t == T or scale == 0.0:
        return 0.0
    panels += panels % 2
    s = np.linspace(t, T, panels + 1)
    return scale * float(simpson(eta_closed_form(s, params, mode), x=s))


def mu_on_grid(grid: np.ndarray, params: ModelParams, mode: EquilibriumMode) -> np.ndarray:
    """mu at every point of a uniform grid ending at T (Simpson per cell, midpoint from the closed form)."""
    scale = _mu_scale(params, mode)
    grid = np.asarray(grid, dtype=float)
    h = np.diff(grid)
    mids = 0.5 * (grid[:-1] + grid[1:])
    eta = eta_closed_form(grid, params, mode)
    cell = h / 6.0 * (eta[:-1] + 4.0 * eta_closed_form(mids, params, mode) + eta[1:])
    tail = np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])
    return scale * tail
