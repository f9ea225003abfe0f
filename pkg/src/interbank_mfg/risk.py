"""Systemic-risk quantities: default probabilities and loss distributions.

The empirical mean of the reserves is a Brownian motion with volatility
sigma sqrt(rho^2 + (1 - rho^2)/N) whatever the coupling rate or the
equilibrium controls, so all first-passage probabilities of the mean
follow from the reflection principle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .io import write_csv
from .model import ModelParams
from .simulate import MonteCarloRun, PolicySpec, simulate_many

_SQRT_HALF = math.sqrt(0.5)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
TAIL_SWITCH = 8.0


class CorrelationUnsupported(ValueError):
    pass


def normal_cdf(x: float) -> float:
    """Standard normal CDF; the upper half is computed as 1 - Phi(-x)."""
    if x > 0.0:
        return 1.0 - normal_cdf(-x)
    return 0.5 * math.erfc(-x * _SQRT_HALF)


def log_normal_cdf(x: float) -> float:
    """log Phi(x), using the asymptotic Mills-ratio series below -8.

    log Phi(x) = -x^2/2 - log(-x) - log sqrt(2 pi)
                 + log(1 - 1/x^2 + 3/x^4 - 15/x^6 + ...)
    The series is summed until its terms stop decreasing.
    """
    if x >= -TAIL_SWITCH:
        return math.log(normal_cdf(x))
    inv = 1.0 / (x * x)
    total, term, k = 1.0, 1.0, 1
    while k < 60:
        nxt = -term * (2 * k - 1) * inv
        if abs(nxt) >= abs(term):
            break
        total += nxt
        term = nxt
        k += 1
    return -0.5 * x * x - math.log(-x) - _LOG_SQRT_2PI + math.log(total)


def _barrier_ratio(params: ModelParams) -> float:
    return params.default_level / (params.sigma * math.sqrt(params.horizon))


def single_default_prob(params: ModelParams) -> float:
    """P(min_{t<=T} sigma W_t <= D) = 2 Phi(D / (sigma sqrt T)): one bank, no coupling."""
    return 2.0 * normal_cdf(_barrier_ratio(params))


def _mean_scale(params: ModelParams) -> float:
    n, rho = params.n_banks, params.rho
    return math.sqrt(n / (n * rho**2 + (1.0 - rho**2)))


def systemic_prob(params: ModelParams) -> float:
    """Probability that the empirical mean reaches D before T."""
    return 2.0 * normal_cdf(_barrier_ratio(params) * _mean_scale(params))


def log_systemic_prob(params: ModelParams) -> float:
    return math.log(2.0) + log_normal_cdf(_barrier_ratio(params) * _mean_scale(params))


def systemic_prob_limit(params: ModelParams) -> float:
    """N -> infinity limit 2 Phi(D / (sigma |rho| sqrt T)); zero without common noise."""
    if params.rho == 0.0:
        return 0.0
    return 2.0 * normal_cdf(_barrier_ratio(params) / abs(params.rho))


def large_deviation_rate(params: ModelParams) -> float:
    """D^2 / (2 sigma^2 T), the exponential decay rate in N of the systemic probability."""
    if params.rho != 0.0:
        raise CorrelationUnsupported("the decay rate is only defined without common noise")
    return params.default_level**2 / (2.0 * params.sigma**2 * params.horizon)


def binomial_pmf(n: int, p: float) -> np.ndarray:
    """Binomial(n, p) pmf on 0..n, evaluated in log space."""
    k = np.arange(n + 1)
    log_fact = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, n + 1)))])
    log_choose = log_fact[n] - log_fact - log_fact[::-1]
    if p == 0.0 or p == 1.0:
        pmf = np.zeros(n + 1)
        pmf[0 if p == 0.0 else n] = 1.0
        return pmf
    return np.exp(log_choose + k * math.log(p) + (n - k) * math.log1p(-p))


def tail(pmf_or_freq: np.ndarray) -> np.ndarray:
    """P(K >= k) for k = 0..N."""
    return np.cumsum(np.asarray(pmf_or_freq, dtype=float)[::-1])[::-1]


@dataclass(frozen=True)
class LossHistogram:
    counts: np.ndarray
    n_paths: int
    params: ModelParams
    policy: PolicySpec
    seed: int
    reference: Optional[np.ndarray] = None
    systemic_hits: int = 0

    @property
    def frequency(self) -> np.ndarray:
        return self.counts / self.n_paths

    @property
    def tail_frequency(self) -> np.ndarray:
        return tail(self.frequency)

    @property
    def reference_tail(self) -> Optional[np.ndarray]:
        return None if self.reference is None else tail(self.reference)

    @property
    def default_frequency(self) -> float:
        """Fraction of (path, bank) pairs that defaulted."""
        k = np.arange(len(self.counts))
        return float((k * self.counts).sum() / (self.n_paths * (len(self.counts) - 1)))

    @property
    def systemic_frequency(self) -> float:
        return self.systemic_hits / self.n_paths

    def total_variation(self, other: np.ndarray | None = None) -> float:
        other = self.reference if other is None else other
        return 0.5 * float(np.abs(self.frequency - other).sum())

    def to_csv(self, path: str | Path) -> Path:
        nan = np.full(len(self.counts), np.nan)
        ref = self.reference if self.reference is not None else nan
        ref_tail = self.reference_tail if self.reference is not None else nan
        return write_csv(
            path,
            ["k", "count", "frequency", "reference_pmf", "tail_frequency", "reference_tail"],
            [np.arange(len(self.counts)), self.counts, self.frequency, ref, self.tail_frequency, ref_tail],
        )


def histogram_from_run(run: MonteCarloRun, reference: Optional[np.ndarray] = None) -> LossHistogram:
    n = run.params.n_banks
    counts = np.bincount(run.n_defaults, minlength=n + 1).astype(np.int64)
    return LossHistogram(
        counts=counts,
        n_paths=run.n_paths,
        params=run.params,
        policy=run.policy,
        seed=run.seed,
        reference=reference,
        systemic_hits=int(run.mean_hit().sum()),
    )


def loss_distribution_mc(
    params: ModelParams,
    policy: PolicySpec,
    n_paths: int,
    seed: int = 0,
    dt: float | None = None,
    initial=None,
    return_run: bool = False,
):
    """Histogram of the number of defaulted banks over ``n_paths`` simulated ensembles.

    The Binomial(N, 2 Phi(D / sigma sqrt T)) reference is attached for the
    independent policy, where it is the exact (continuously monitored) law.
    """
    run = simulate_many(params, policy, n_paths, seed=seed, dt=dt, initial=initial)
    reference = None
    independent = policy.kind == "independent" or (policy.kind == "uncontrolled" and params.a == 0.0)
    if independent and params.rho == 0.0:
        reference = binomial_pmf(params.n_banks, single_default_prob(params))
    hist = histogram_from_run(run, reference)
    return (hist, run) if return_run else hist


def scaling_table(params: ModelParams, sizes) -> dict[str, np.ndarray]:
    """Analytic systemic probability, its N -> infinity limit and -(1/N) log P over ``sizes``."""
    sizes = np.asarray(list(sizes), dtype=np.int64)
    analytic, limit, decay = [], [], []
    for n in sizes:
        p = params.replace(n_banks=int(n))
        analytic.append(systemic_prob(p))
        limit.append(systemic_prob_limit(p))
        decay.append(-log_systemic_prob(p) / n)
    ld = large_deviation_rate(params) if params.rho == 0.0 else float("nan")
    return {
        "N": sizes,
        "analytic": np.array(analytic),
        "limit": np.array(limit),
        "neg_log_prob_per_bank": np.array(decay),
        "ld_rate": np.full(len(sizes), ld),
    }


def write_scaling_csv(path: str | Path, table: dict[str, np.ndarray]) -> Path:
    return write_csv(path, ["N", "analytic", "limit", "ld_rate"], [table[k] for k in ("N", "analytic", "limit", "ld_rate")])
