"""Monte Carlo simulation of the coupled bank reserves.

Noise comes from :mod:`interbank_mfg._rng`: stream 0 is the common Brownian
motion W^0, streams 1..N the idiosyncratic ones, and every path of a Monte
Carlo run gets its own counter coordinate, so runs with different policies
but the same seed use common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numba
import numpy as np

from . import _rng
from .equilibrium import control_gain
from .io import write_csv
from .model import EquilibriumMode, ModelParams

# Extra streams for the exact OU sampler; far away from the bank stream ids.
AUX_STREAM_OFFSET = 1 << 40


class DimensionMismatch(ValueError):
    pass


class NonzeroInitial(ValueError):
    pass


class PolicyMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    mode: Optional[EquilibriumMode] = None

    KINDS = ("uncontrolled", "independent", "equilibrium")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if (self.kind == "equilibrium") != (self.mode is not None):
            raise ValueError("an equilibrium policy needs a mode, the others must not have one")

    @classmethod
    def uncontrolled(cls) -> "PolicySpec":
        return cls("uncontrolled")

    @classmethod
    def independent(cls) -> "PolicySpec":
        return cls("independent")

    @classmethod
    def equilibrium(cls, mode) -> "PolicySpec":
        return cls("equilibrium", EquilibriumMode.parse(mode))

    @classmethod
    def parse(cls, text: str) -> "PolicySpec":
        text = text.strip().lower()
        if text in ("uncontrolled", "independent"):
            return cls(text)
        if text.startswith("equilibrium-"):
            return cls.equilibrium(text[len("equilibrium-"):])
        raise ValueError(f"unknown policy {text!r}")

    @property
    def label(self) -> str:
        return self.kind if self.mode is None else f"equilibrium-{self.mode.value}"

    def coupling(self, params: ModelParams) -> float:
        return 0.0 if self.kind == "independent" else params.a

    def gains(self, params: ModelParams, grid: np.ndarray) -> np.ndarray:
        """Control gain kappa(t_k) at the left end of every Euler step."""
        if self.kind != "equilibrium":
            return np.zeros(len(grid) - 1)
        return np.asarray(control_gain(grid[:-1], params, self.mode), dtype=float)


@dataclass(frozen=True)
class NoiseBundle:
    seed: int
    n_steps: int
    n_banks: int
    dt: float
    common_increments: np.ndarray
    idio_increments: np.ndarray
    path: int = 0


def generate_noise(seed: int, n_banks: int, n_steps: int, dt: float, path: int = 0) -> NoiseBundle:
    """Brownian increments with variance ``dt``: common stream plus one per bank."""
    if n_steps < 1 or dt <= 0:
        raise ValueError("need n_steps >= 1 and dt > 0")
    z = _rng.standard_normals(seed, path, np.arange(n_banks + 1), n_steps)
    z *= math.sqrt(dt)
    return NoiseBundle(
        seed=int(seed),
        n_steps=int(n_steps),
        n_banks=int(n_banks),
        dt=float(dt),
        common_increments=z[0],
        idio_increments=z[1:],
        path=int(path),
    )


def n_steps_for(horizon: float, dt: float) -> int:
    n = int(round(horizon / dt))
    if n < 1 or not math.isclose(n * dt, horizon, rel_tol=1e-9):
        raise ValueError(f"dt = {dt!r} does not divide the horizon {horizon!r}")
    return n


@dataclass(frozen=True)
class PathEnsemble:
    time_grid: np.ndarray
    states: np.ndarray
    mean_path: np.ndarray
    common_path: np.ndarray
    policy: PolicySpec
    params: ModelParams
    noise_seed: int
    gains: np.ndarray = field(repr=False, default=None)

    @property
    def dt(self) -> float:
        return float(self.time_grid[1] - self.time_grid[0])

    def to_csv(self, path: str | Path) -> Path:
        n = self.states.shape[0]
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + ["mean"]
        return write_csv(path, header, [self.time_grid, *self.states, self.mean_path])


# -- kernels ---------------------------------------------------------------
# The update below is shared verbatim by the single-ensemble and the
# Monte Carlo kernels so both produce bit-identical paths.


@numba.njit(cache=True, inline="always")
def _mean(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i]
    return s / x.shape[0]


@numba.njit(cache=True, inline="always")
def _advance(x, xbar, a, kappa, dt, sig_idio, sig_common, dw0, dw, k, out):
    for i in range(x.shape[0]):
        dev = xbar - x[i]
        out[i] = x[i] + (a * dev + kappa * dev) * dt + (sig_idio * dw[i, k] + sig_common * dw0[k])


@numba.njit(cache=True)
def _euler_paths(x0, a, gains, dt, sig_idio, sig_common, dw0, dw):
    n_banks = x0.shape[0]
    n_steps = dw0.shape[0]
    states = np.empty((n_banks, n_steps + 1))
    means = np.empty(n_steps + 1)
    x = x0.copy()
    nxt = np.empty(n_banks)
    for i in range(n_banks):
        states[i, 0] = x[i]
    for k in range(n_steps):
        xbar = _mean(x)
        means[k] = xbar
        _advance(x, xbar, a, gains[k], dt, sig_idio, sig_common, dw0, dw, k, nxt)
        x, nxt = nxt, x
        for i in range(n_banks):
            states[i, k + 1] = x[i]
    means[n_steps] = _mean(x)
    return states, means


@numba.njit(cache=True)
def _mc_kernel(
    seed, path_start, n_paths, x0, a, gains, dt, sig_idio, sig_common, level, q, eps, c, out_i, out_f, out_cost
):
    """Simulate paths path_start .. path_start + n_paths - 1 on the fly.

    out_i[p] = number of banks whose running minimum reached ``level``.
    out_f[p] = (min of mean path, terminal mean, cross-sectional mean of
    (X^i_T - Xbar_T)^2).  out_cost[p, i] = left-endpoint realised cost of bank i.
    """
    n_banks = x0.shape[0]
    n_steps = gains.shape[0]
    sqdt = math.sqrt(dt)
    n_blocks = (n_steps + 3) // 4
    dw0 = np.empty(4)
    dw = np.empty((n_banks, 4))
    buf = np.empty(4)
    x = np.empty(n_banks)
    nxt = np.empty(n_banks)
    mins = np.empty(n_banks)
    cost = np.empty(n_banks)
    for p in range(n_paths):
        path = path_start + p
        for i in range(n_banks):
            x[i] = x0[i]
            mins[i] = x0[i]
            cost[i] = 0.0
        min_mean = _mean(x)
        for blk in range(n_blocks):
            _rng.normal_block(seed, 0, path, blk, buf)
            for r in range(4):
                dw0[r] = buf[r] * sqdt
            for i in range(n_banks):
                _rng.normal_block(seed, i + 1, path, blk, buf)
                for r in range(4):
                    dw[i, r] = buf[r] * sqdt
            for r in range(4):
                k = 4 * blk + r
                if k >= n_steps:
                    break
                xbar = _mean(x)
                if xbar < min_mean:
                    min_mean = xbar
                kappa = gains[k]
                for i in range(n_banks):
                    dev = xbar - x[i]
                    alpha = kappa * dev
                    cost[i] += (0.5 * alpha * alpha - q * alpha * dev + 0.5 * eps * dev * dev) * dt
                _advance(x, xbar, a, kappa, dt, sig_idio, sig_common, dw0, dw, r, nxt)
                for i in range(n_banks):
                    x[i] = nxt[i]
                    if x[i] < mins[i]:
                        mins[i] = x[i]
        xbar = _mean(x)
        if xbar < min_mean:
            min_mean = xbar
        n_def = 0
        disp = 0.0
        for i in range(n_banks):
            if mins[i] <= level:
                n_def += 1
            dev = xbar - x[i]
            disp += dev * dev
            out_cost[p, i] = cost[i] + 0.5 * c * dev * dev
        out_i[p] = n_def
        out_f[p, 0] = min_mean
        out_f[p, 1] = xbar
        out_f[p, 2] = disp / n_banks


def _noise_scales(params: ModelParams) -> tuple[float, float]:
    return params.sigma * math.sqrt(1.0 - params.rho**2), params.sigma * params.rho


def _initial(params: ModelParams, initial) -> np.ndarray:
    if initial is None:
        return np.zeros(params.n_banks)
    x0 = np.asarray(initial, dtype=float).copy()
    if x0.shape != (params.n_banks,):
        raise DimensionMismatch(f"initial values have shape {x0.shape}, expected ({params.n_banks},)")
    return x0


def euler_simulate(
    params: ModelParams, policy: PolicySpec, initial, noise: NoiseBundle
) -> PathEnsemble:
    """Explicit Euler scheme
        X^i_{k+1} = X^i_k + [a (Xbar_k - X^i_k) + alpha^i_k] dt
                    + sigma (sqrt(1 - rho^2) dW^i_k + rho dW^0_k)
    with alpha^i_k = kappa(t_k) (Xbar_k - X^i_k) under an equilibrium policy.
    The MFG policy also targets the empirical mean Xbar_k.
    """
    x0 = _initial(params, initial)
    if noise.n_banks != params.n_banks or noise.idio_increments.shape != (params.n_banks, noise.n_steps):
        raise DimensionMismatch("noise bundle does not match the number of banks")
    if not math.isclose(noise.n_steps * noise.dt, params.horizon, rel_tol=1e-9):
        raise DimensionMismatch("noise bundle does not cover [0, T]")
    grid = np.linspace(0.0, params.horizon, noise.n_steps + 1)
    gains = policy.gains(params, grid)
    sig_idio, sig_common = _noise_scales(params)
    states, means = _euler_paths(
        x0,
        float(policy.coupling(params)),
        gains,
        float(noise.dt),
        sig_idio,
        sig_common,
        np.ascontiguousarray(noise.common_increments),
        np.ascontiguousarray(noise.idio_increments),
    )
    common = np.concatenate([[0.0], np.cumsum(noise.common_increments)])
    return PathEnsemble(grid, states, means, common, policy, params, noise.seed, gains)


@dataclass(frozen=True)
class MonteCarloRun:
    """Per-path summaries of a Monte Carlo batch."""

    params: ModelParams
    policy: PolicySpec
    seed: int
    dt: float
    n_defaults: np.ndarray
    min_mean: np.ndarray
    terminal_mean: np.ndarray
    terminal_dispersion: np.ndarray
    costs: np.ndarray

    @property
    def n_paths(self) -> int:
        return len(self.n_defaults)

    def mean_hit(self, level: float | None = None) -> np.ndarray:
        level = self.params.default_level if level is None else level
        return self.min_mean <= level

    def to_csv(self, path: str | Path) -> Path:
        return write_csv(
            path,
            ["path_id", "n_defaults", "mean_hit", "min_mean"],
            [np.arange(self.n_paths), self.n_defaults, self.mean_hit(), self.min_mean],
        )


def simulate_many(
    params: ModelParams,
    policy: PolicySpec,
    n_paths: int,
    seed: int = 0,
    dt: float | None = None,
    initial=None,
    path_start: int = 0,
) -> MonteCarloRun:
    """Run ``n_paths`` independent ensembles; path p uses noise keyed by (seed, p).

    Identical to calling :func:`euler_simulate` on ``generate_noise(seed, N,
    n_steps, dt, path=p)`` for every p, without storing the trajectories.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    dt = 1e-4 * params.horizon if dt is None else float(dt)
    n_steps = n_steps_for(params.horizon, dt)
    x0 = _initial(params, initial)
    grid = np.linspace(0.0, params.horizon, n_steps + 1)
    gains = policy.gains(params, grid)
    sig_idio, sig_common = _noise_scales(params)
    out_i = np.empty(n_paths, dtype=np.int64)
    out_f = np.empty((n_paths, 3))
    out_cost = np.empty((n_paths, params.n_banks))
    _mc_kernel(
        np.uint64(seed),
        int(path_start),
        n_paths,
        x0,
        float(policy.coupling(params)),
        gains,
        dt,
        sig_idio,
        sig_common,
        float(params.default_level),
        float(params.q),
        float(params.epsilon),
        float(params.c),
        out_i,
        out_f,
        out_cost,
    )
    return MonteCarloRun(
        params=params,
        policy=policy,
        seed=int(seed),
        dt=dt,
        n_defaults=out_i,
        min_mean=out_f[:, 0].copy(),
        terminal_mean=out_f[:, 1].copy(),
        terminal_dispersion=out_f[:, 2].copy(),
        costs=out_cost,
    )


def first_passage(ensemble: PathEnsemble, default_level: float):
    """Grid-monitored defaults: (per-bank flags, number of defaults, mean hit).

    A bank defaults when its path touches ``default_level`` (inclusive) at
    some grid time.  Discrete monitoring misses excursions between grid
    points, so default frequencies are biased low.
    """
    flags = ensemble.states.min(axis=1) <= default_level
    mean_hit = bool(ensemble.mean_path.min() <= default_level)
    return flags, int(flags.sum()), mean_hit


def realized_cost(ensemble: PathEnsemble, bank: int, params: ModelParams | None = None) -> float:
    """Left-endpoint Riemann sum of the running cost of ``bank`` plus its terminal cost."""
    if ensemble.policy.kind != "equilibrium":
        raise PolicyMismatch("realised costs need the controls of an equilibrium policy")
    params = ensemble.params if params is None else params
    dev = ensemble.mean_path - ensemble.states[bank]
    alpha = ensemble.gains * dev[:-1]
    running = (0.5 * alpha**2 - params.q * alpha * dev[:-1] + 0.5 * params.epsilon * dev[:-1] ** 2) * ensemble.dt
    return float(running.sum() + 0.5 * params.c * dev[-1] ** 2)


def exact_ou_simulate(
    params: ModelParams, noise: NoiseBundle, initial=None, variant: str = "increments"
) -> PathEnsemble:
    """Uncontrolled paths from the explicit solution started at zero:

        X^i_t = sigma rho W^0_t + sigma sqrt(1 - rho^2) (Wbar_t + I^i_t - Ibar_t),
        I^i_t = int_0^t exp(a (s - t)) dW^i_s.

    ``variant="increments"`` advances I^i_{k+1} = exp(-a dt) I^i_k + dW^i_k with
    the bundle's increments (pathwise comparable to Euler).
    ``variant="exact"`` draws the one-step convolution jointly Gaussian with
    dW^i_k using auxiliary counter streams, so (W, I) has the exact law.
    """
    if initial is not None and np.any(np.asarray(initial, dtype=float) != 0.0):
        raise NonzeroInitial("the explicit solution is only implemented from X_0 = 0")
    if noise.n_banks != params.n_banks:
        raise DimensionMismatch("noise bundle does not match the number of banks")
    if variant not in ("increments", "exact"):
        raise ValueError(f"unknown variant {variant!r}")
    a, dt, n = params.a, noise.dt, noise.n_steps
    dw = noise.idio_increments
    decay = math.exp(-a * dt)
    if variant == "increments":
        xi = dw
    else:
        if a == 0.0:
            var, cov = dt, dt
        else:
            var = -math.expm1(-2.0 * a * dt) / (2.0 * a)
            cov = -math.expm1(-a * dt) / a
        resid = max(var - cov * cov / dt, 0.0)
        z = _rng.standard_normals(
            noise.seed, noise.path, AUX_STREAM_OFFSET + np.arange(1, params.n_banks + 1), n
        )
        xi = (cov / dt) * dw + math.sqrt(resid) * z

    conv = np.zeros((params.n_banks, n + 1))
    for k in range(n):
        conv[:, k + 1] = decay * conv[:, k] + xi[:, k]
    w = np.concatenate([np.zeros((params.n_banks, 1)), np.cumsum(dw, axis=1)], axis=1)
    w0 = np.concatenate([[0.0], np.cumsum(noise.common_increments)])
    sig_idio, sig_common = _noise_scales(params)
    states = sig_common * w0 + sig_idio * (w.mean(axis=0) + conv - conv.mean(axis=0))
    grid = np.linspace(0.0, params.horizon, n + 1)
    return PathEnsemble(
        grid, states, states.mean(axis=0), w0, PolicySpec.uncontrolled(), params, noise.seed, np.zeros(n)
    )
