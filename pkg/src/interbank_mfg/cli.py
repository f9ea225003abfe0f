"""Command line entry point: ``interbank-mfg run <experiment>`` / ``interbank-mfg query <name>``.

Every experiment writes CSV files plus ``run_manifest.json`` into
``--out-dir``.  Parameters are layered: experiment defaults, then the
``--config`` file, then explicit flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import equilibrium as eq
from . import riccati, risk
from .io import sha256_file, write_csv
from .model import PARAM_FIELDS, EquilibriumMode, ModelParams, ParameterError, load_config
from .simulate import PolicySpec, euler_simulate, generate_noise, n_steps_for, simulate_many

log = logging.getLogger("interbank_mfg")

# sigma = 1 and rho = 0 where the figure captions leave them unstated
FIG1 = dict(n_banks=10, a=10.0, sigma=1.0, rho=0.0, horizon=1.0, default_level=-0.7)
FIG5 = dict(n_banks=10, a=1.0, q=1.0, epsilon=10.0, horizon=1.0, c=0.0)
FIG6 = dict(a=1.0, q=1.0, epsilon=2.0, c=0.0, horizon=1.0)
FIG_VALUE = dict(n_banks=10, a=1.0, q=1.0, epsilon=10.0, rho=0.2, horizon=1.0, c=10.0)


class UnknownExperiment(ValueError):
    pass


class UnknownQuery(ValueError):
    pass


@dataclass
class ExperimentSpec:
    name: str
    params: ModelParams
    out_dir: Path
    seed: int = 0
    dt: float | None = None
    paths: int = 10_000
    mean_dev: float = 0.0
    overrides: dict[str, Any] = field(default_factory=dict)

    @property
    def step(self) -> float:
        return 1e-4 * self.params.horizon if self.dt is None else self.dt


def _trajectories(spec: ExperimentSpec) -> list[Path]:
    p = spec.params
    n = n_steps_for(p.horizon, spec.step)
    noise = generate_noise(spec.seed, p.n_banks, n, spec.step)
    out = spec.out_dir
    files = [
        euler_simulate(p, PolicySpec.uncontrolled(), None, noise).to_csv(out / "trajectories_coupled.csv"),
        euler_simulate(p, PolicySpec.independent(), None, noise).to_csv(out / "trajectories_independent.csv"),
    ]
    rho = p.rho if p.rho != 0.0 else 0.5
    correlated = euler_simulate(p.replace(rho=rho), PolicySpec.uncontrolled(), None, noise)
    files.append(correlated.to_csv(out / "trajectories_correlated.csv"))
    return files


def _loss_dist(spec: ExperimentSpec) -> list[Path]:
    files = []
    for a in (0.0, 10.0, 100.0):
        p = spec.params.replace(a=a)
        policy = PolicySpec.independent() if a == 0.0 else PolicySpec.uncontrolled()
        log.info("loss distribution a=%g, %d paths", a, spec.paths)
        hist, run = risk.loss_distribution_mc(p, policy, spec.paths, seed=spec.seed, dt=spec.step, return_run=True)
        if hist.reference is None:
            hist = risk.LossHistogram(
                hist.counts, hist.n_paths, p, policy, spec.seed,
                risk.binomial_pmf(p.n_banks, risk.single_default_prob(p)) if p.rho == 0.0 else None,
                hist.systemic_hits,
            )
        tag = f"a{a:g}"
        files.append(hist.to_csv(spec.out_dir / f"loss_{tag}.csv"))
        files.append(run.to_csv(spec.out_dir / f"paths_{tag}.csv"))
    return files


def _common_noise(spec: ExperimentSpec) -> list[Path]:
    files = []
    for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
        table = risk.scaling_table(spec.params.replace(rho=rho), [10, 100, 1000, 10_000])
        files.append(risk.write_scaling_csv(spec.out_dir / f"common_noise_rho{rho:g}.csv", table))
    return files


def _riccati_compare(spec: ExperimentSpec) -> list[Path]:
    files = []
    for c in (0.0, 1.0):
        p = spec.params.replace(c=c)
        grid = riccati.time_grid(p.horizon, 1000)
        phi = riccati.eta_closed_form(grid, p, EquilibriumMode.OPEN_LOOP)
        eta = riccati.eta_closed_form(grid, p, EquilibriumMode.CLOSED_LOOP)
        files.append(write_csv(spec.out_dir / f"riccati_compare_c{c:g}.csv", ["t", "phi", "eta"], [grid, phi, eta]))
        for mode in EquilibriumMode:
            files.append(eq.write_control_csv(spec.out_dir / f"control_{mode.value}_c{c:g}.csv", p, mode))
    return files


def _value_compare(spec: ExperimentSpec) -> list[Path]:
    sizes = np.arange(2, 101)
    cols = {m: [] for m in EquilibriumMode}
    for n in sizes:
        p = spec.params.replace(n_banks=int(n))
        for m in EquilibriumMode:
            cols[m].append(eq.value_time0(spec.mean_dev, p, m, n_cells=2000))
    files = [
        write_csv(
            spec.out_dir / "value_compare.csv",
            ["N", "open", "closed", "mfg"],
            [sizes] + [cols[m] for m in EquilibriumMode],
        )
    ]
    for m in EquilibriumMode:
        files.append(eq.write_value_csv(spec.out_dir / f"value_profile_{m.value}.csv", spec.mean_dev, spec.params, m))
    return files


def _eta_horizon(spec: ExperimentSpec) -> list[Path]:
    files = []
    mode = EquilibriumMode.MEAN_FIELD_GAME
    for T in (1.0, 100.0):
        p = spec.params.replace(horizon=T)
        sol = riccati.solve(p, mode, n_steps=1000)
        bar = riccati.eta_limit(p, mode) if p.c == 0.0 else float("nan")
        files.append(
            write_csv(
                spec.out_dir / f"eta_horizon_T{T:g}.csv",
                ["t", "eta", "eta_bar"],
                [sol.grid, sol.values, np.full(len(sol.grid), bar)],
            )
        )
    return files


def _effective_rate_scan(spec: ExperimentSpec) -> list[Path]:
    sizes = np.arange(2, 201)
    p0 = spec.params.replace(c=0.0)
    cols = [
        [eq.effective_rate_limit(p0.replace(n_banks=int(n)), m) for n in sizes]
        for m in EquilibriumMode
    ]
    return [write_csv(spec.out_dir / "effective_rate_scan.csv", ["N", "open", "closed", "mfg"], [sizes, *cols])]


EXPERIMENTS: dict[str, tuple[dict, Callable[[ExperimentSpec], list[Path]]]] = {
    "trajectories": (FIG1, _trajectories),
    "loss-dist": (FIG1, _loss_dist),
    "common-noise": (FIG1, _common_noise),
    "riccati-compare": (FIG5, _riccati_compare),
    "value-compare": (FIG_VALUE, _value_compare),
    "eta-horizon": (FIG6, _eta_horizon),
    "effective-rate-scan": (FIG5, _effective_rate_scan),
}


def experiment_params(name: str, config: dict | None = None, overrides: dict | None = None) -> ModelParams:
    if name not in EXPERIMENTS:
        raise UnknownExperiment(name)
    values = dict(EXPERIMENTS[name][0])
    values.update(config or {})
    values.update(overrides or {})
    return ModelParams.from_mapping(values)


def run(spec: ExperimentSpec) -> dict[str, Any]:
    """Run one experiment, write its CSVs and the manifest, return the manifest."""
    if spec.name not in EXPERIMENTS:
        raise UnknownExperiment(spec.name)
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    files = EXPERIMENTS[spec.name][1](spec)
    manifest = {
        "experiment": spec.name,
        "version": __version__,
        "params": spec.params.as_dict(),
        "overrides": spec.overrides,
        "seed": spec.seed,
        "dt": spec.step,
        "paths": spec.paths,
        "mean_dev": spec.mean_dev,
        "files": {f.name: sha256_file(f) for f in files},
    }
    (spec.out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


QUERIES = ("p", "systemic-prob", "systemic-limit", "ld-rate", "eta", "eta-bar", "mu", "gain", "A", "A-bar", "value")


def query(name: str, params: ModelParams, t: float | None = None, mode="closed", mean_dev: float = 0.0) -> float:
    mode = EquilibriumMode.parse(mode)
    t = params.horizon if t is None else t
    if name == "p":
        return risk.single_default_prob(params)
    if name == "systemic-prob":
        return risk.systemic_prob(params)
    if name == "systemic-limit":
        return risk.systemic_prob_limit(params)
    if name == "ld-rate":
        return risk.large_deviation_rate(params)
    if name == "eta":
        return riccati.eta_closed_form(t, params, mode)
    if name == "eta-bar":
        return riccati.eta_limit(params, mode)
    if name == "mu":
        return riccati.mu(t, params, mode)
    if name == "gain":
        return float(eq.control_gain(t, params, mode))
    if name == "A":
        return float(eq.effective_rate(t, params, mode))
    if name == "A-bar":
        return eq.effective_rate_limit(params, mode)
    if name == "value":
        if mode is EquilibriumMode.OPEN_LOOP:
            if t != 0.0:
                raise riccati.UnsupportedMode("open-loop values are only available at t = 0")
            return eq.value_time0(mean_dev, params, mode)
        return eq.value_function(t, mean_dev, params, mode)
    raise UnknownQuery(name)


def _add_param_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="YAML/JSON file with model parameters")
    for name in PARAM_FIELDS:
        flags = [f"--{name}"]
        if "_" in name:
            flags.append(f"--{name.replace('_', '-')}")
        parser.add_argument(*flags, dest=name, type=int if name == "n_banks" else float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="interbank-mfg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="reproduce one experiment as CSV files")
    p_run.add_argument("experiment")
    p_run.add_argument("--out-dir", type=Path, default=Path("out"))
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--dt", type=float, default=None)
    p_run.add_argument("--paths", type=int, default=10_000)
    p_run.add_argument("--mean-dev", type=float, default=0.0)
    _add_param_flags(p_run)

    p_query = sub.add_parser("query", help="print one analytic quantity")
    p_query.add_argument("name")
    p_query.add_argument("--t", type=float, default=None)
    p_query.add_argument("--mode", default="closed", choices=["open", "closed", "mfg"])
    p_query.add_argument("--mean-dev", type=float, default=0.0)
    _add_param_flags(p_query)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {k: getattr(args, k) for k in PARAM_FIELDS if getattr(args, k) is not None}
    try:
        config = load_config(args.config) if args.config else {}
        if args.command == "run":
            params = experiment_params(args.experiment, config, overrides)
            spec = ExperimentSpec(
                name=args.experiment,
                params=params,
                out_dir=args.out_dir,
                seed=args.seed,
                dt=args.dt,
                paths=args.paths,
                mean_dev=args.mean_dev,
                overrides=overrides,
            )
            manifest = run(spec)
            for name in manifest["files"]:
                print(args.out_dir / name)
        else:
            if args.name not in QUERIES:
                raise UnknownQuery(args.name)
            params = ModelParams.from_mapping({**config, **overrides})
            value = query(args.name, params, t=args.t, mode=args.mode, mean_dev=args.mean_dev)
            print(format(value, ".12g"))
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
