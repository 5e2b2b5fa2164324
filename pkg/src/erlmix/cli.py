"""Command-line front end.

Subcommands: simulate (write a synthetic dataset plus its true curves),
fit (run the one- or two-group chain and emit plot-ready posterior tables),
prior-sim (prior realization studies), summarize (re-summarize stored draws
on a new grid). Every command is a pure function of (config, seed); rerunning
with the same inputs reproduces the output tables byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

import erlmix
from erlmix import _mcmc, posterior
from erlmix.datasim import GeneratorSpec, concat_datasets, generate, load_csv, write_csv
from erlmix.ddp import DdpChainState, DdpHyperparams, DdpSampler
from erlmix.diagnostics import ess_imse
from erlmix.dp import DpChainState, DpHyperparams, DpSampler
from erlmix.errors import ConfigError, DataError, DomainError, NumericError
from erlmix.mixture import GROUP_C, GROUP_T, GROUP_NAMES, SurvivalDataset
from erlmix.special import LogNormalParams

DEFAULT_SCHEDULE = {"iterations": 20000, "burn_in_fraction": 0.25, "thin": 8}
PAPER_SCHEDULE = {"iterations": 100000, "burn_in_fraction": 0.25, "thin": 38}

PRESETS: dict[str, dict] = {
    "example1": {
        "model": "dp",
        "data": {"generator": {
            "n": 200,
            "components": [
                {"weight": 0.4, "mu": 1.0, "sigma2": 0.16},
                {"weight": 0.6, "mu": 2.0, "sigma2": 0.04},
            ],
        }},
        "priors": {"a_alpha": 2, "b_alpha": 1, "a_zeta": 3, "b_zeta": 4,
                   "a_theta": 1, "b_theta": 1, "M1": 13, "M2": 39},
    },
    "example2": {
        "model": "dp",
        "data": {"generator": {
            "n": 200,
            "components": [{"weight": 1.0, "mu": 5.0, "sigma2": 0.36}],
        }},
        "priors": {"a_alpha": 2, "b_alpha": 1, "a_zeta": 3, "b_zeta": 1000,
                   "a_theta": 2, "b_theta": 25, "M1": 1000, "M2": 3000},
    },
    "example3": {
        "model": "ddp",
        "data": {"generators": [
            {"n": 100, "group": "C",
             "components": [{"weight": 1.0, "mu": 5.0, "sigma2": 0.36}]},
            {"n": 100, "group": "T",
             "components": [
                 {"weight": 0.4, "mu": 5.0, "sigma2": 0.16},
                 {"weight": 0.6, "mu": 6.0, "sigma2": 0.04},
             ]},
        ]},
        "priors": {"a_alpha": 5, "b_alpha": 1,
                   "a_theta_C": 2, "b_theta_C": 50, "a_theta_T": 2, "b_theta_T": 50,
                   "M1_C": 1000, "M2_C": 4000, "M1_T": 1000, "M2_T": 4000,
                   "mu_bar": [5.0, 5.5],
                   "Sigma0": [[10.0, 0.0], [0.0, 10.0]],
                   "Sigma": [[3.0, 0.0], [0.0, 3.0]]},
    },
    "liver": {
        "model": "dp",
        "priors": {"a_alpha": 5, "b_alpha": 1, "a_zeta": 3, "b_zeta": 80,
                   "a_theta": 2, "b_theta": 2, "M1": 100, "M2": 300},
    },
    "lung": {
        "model": "ddp",
        "priors": {"a_alpha": 5, "b_alpha": 1,
                   "a_theta_C": 2, "b_theta_C": 50, "a_theta_T": 2, "b_theta_T": 50,
                   "M1_C": 2500, "M2_C": 10000, "M1_T": 2500, "M2_T": 10000,
                   "mu_bar": [6.7, 6.3],
                   "Sigma0": [[10.0, 0.0], [0.0, 10.0]],
                   "Sigma": [[3.0, 0.0], [0.0, 3.0]]},
        "contrast_times": [100, 300, 500, 700, 1000, 1500],
    },
    "fig1": {
        "settings": [
            {"alpha": a, "zeta": 5.0, "M": 50, "theta": 0.5, "count": 50}
            for a in (1.0, 10.0, 100.0)
        ],
    },
    "fig2": {
        "settings": [
            {"alpha": 10.0, "zeta": 5.0, "M": M, "theta": th, "count": 5}
            for M, th in ((10, 2.0), (40, 0.5), (10, 0.5))
        ],
    },
}

_GROUP_CODE = {"C": GROUP_C, "T": GROUP_T}


def _fmt(x) -> str:
    return repr(float(x))


def _write_table(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(args) -> dict:
    """preset < config file < command-line flags."""
    config: dict = {}
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r} (have: {', '.join(sorted(PRESETS))})")
        config = copy.deepcopy(PRESETS[args.preset])
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        config = _deep_merge(config, file_cfg)
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    schedule = dict(DEFAULT_SCHEDULE)
    schedule.update(config.get("schedule", {}))
    if getattr(args, "iterations", None) is not None:
        schedule["iterations"] = args.iterations
    if getattr(args, "burn_in", None) is not None:
        schedule["burn_in_fraction"] = args.burn_in
    if getattr(args, "thin", None) is not None:
        schedule["thin"] = args.thin
    config["schedule"] = schedule
    grid = dict({"points": 512, "max": None})
    grid.update(config.get("grid", {}))
    if getattr(args, "grid_max", None) is not None:
        grid["max"] = args.grid_max
    if getattr(args, "grid_points", None) is not None:
        grid["points"] = args.grid_points
    config["grid"] = grid
    if getattr(args, "chains", None) is not None:
        config["chains"] = args.chains
    config.setdefault("chains", 1)
    config.setdefault("seed", 1)
    if getattr(args, "censoring", None) is not None:
        gen = config.get("data", {}).get("generator")
        if gen is None:
            raise ConfigError("--censoring requires a single-generator data spec")
        gen["censoring_target"] = args.censoring
    if getattr(args, "out", None):
        config["out"] = args.out
    if "out" not in config:
        raise ConfigError("an output directory is required (--out)")
    return config


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _config_hash(config: dict) -> str:
    return hashlib.sha256(_canonical_json(config).encode()).hexdigest()


def _rng_for(seed: int, key: tuple[int, ...]):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def parse_generator(d: dict) -> GeneratorSpec:
    try:
        comps = tuple(
            (c["weight"], LogNormalParams(float(c["mu"]), float(c["sigma2"])))
            for c in d["components"]
        )
        group = d.get("group")
        if group is not None:
            if group not in _GROUP_CODE:
                raise ConfigError(f"generator group must be C or T, got {group!r}")
            group = _GROUP_CODE[group]
        return GeneratorSpec(
            components=comps,
            n=int(d["n"]),
            group=group,
            censoring_target=d.get("censoring_target"),
        )
    except KeyError as exc:
        raise ConfigError(f"generator spec missing key {exc}") from None


def _generator_specs(config: dict) -> list[GeneratorSpec]:
    data_cfg = config.get("data", {})
    if "generator" in data_cfg:
        return [parse_generator(data_cfg["generator"])]
    if "generators" in data_cfg:
        return [parse_generator(g) for g in data_cfg["generators"]]
    raise ConfigError("config has no generator data spec")


def load_dataset(config: dict) -> tuple[SurvivalDataset, bool]:
    """Returns (dataset, generated_flag)."""
    data_cfg = config.get("data")
    if not data_cfg:
        raise ConfigError("config must carry a data section (csv path or generator spec)")
    if "csv" in data_cfg:
        return load_csv(data_cfg["csv"]), False
    specs = _generator_specs(config)
    rng = _rng_for(int(config["seed"]), (0,))
    parts = [generate(spec, rng) for spec in specs]
    return concat_datasets(parts), True


def parse_dp_priors(priors: dict) -> DpHyperparams:
    try:
        return DpHyperparams(
            a_alpha=float(priors["a_alpha"]), b_alpha=float(priors["b_alpha"]),
            a_zeta=float(priors["a_zeta"]), b_zeta=float(priors["b_zeta"]),
            a_theta=float(priors["a_theta"]), b_theta=float(priors["b_theta"]),
            M1=float(priors["M1"]), M2=float(priors["M2"]),
        )
    except KeyError as exc:
        raise ConfigError(f"dp priors missing key {exc}") from None


def parse_ddp_priors(priors: dict) -> DdpHyperparams:
    try:
        return DdpHyperparams(
            a_theta_C=float(priors["a_theta_C"]), b_theta_C=float(priors["b_theta_C"]),
            a_theta_T=float(priors["a_theta_T"]), b_theta_T=float(priors["b_theta_T"]),
            M1_C=float(priors["M1_C"]), M2_C=float(priors["M2_C"]),
            M1_T=float(priors["M1_T"]), M2_T=float(priors["M2_T"]),
            mu_bar=np.asarray(priors["mu_bar"], dtype=float),
            Sigma0=np.asarray(priors["Sigma0"], dtype=float),
            Sigma=np.asarray(priors["Sigma"], dtype=float),
            a_alpha=float(priors["a_alpha"]), b_alpha=float(priors["b_alpha"]),
        )
    except KeyError as exc:
        raise ConfigError(f"ddp priors missing key {exc}") from None


def _schedule(config: dict) -> _mcmc.Schedule:
    s = config["schedule"]
    return _mcmc.Schedule(
        iterations=int(s["iterations"]),
        burn_in_fraction=float(s["burn_in_fraction"]),
        thin=int(s["thin"]),
    )


def write_manifest(out: Path, config: dict, extra: dict | None = None) -> None:
    stored = {k: v for k, v in config.items() if k != "out"}
    manifest = {
        "version": erlmix.__version__,
        "backend": erlmix.BACKEND,
        "seed": int(config["seed"]),
        "config": stored,
        "config_sha256": _config_hash(stored),
    }
    if extra:
        manifest.update(extra)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _truth_rows(config: dict, grid: np.ndarray):
    specs = _generator_specs(config)
    rows = []
    if len(specs) == 1 and specs[0].group is None:
        f, S, h = specs[0].true_curves(grid)
        for t, fi, Si, hi in zip(grid, f, S, h):
            rows.append([_fmt(t), _fmt(fi), _fmt(Si), _fmt(hi)])
        return ["t", "f", "S", "h"], rows
    for spec in specs:
        f, S, h = spec.true_curves(grid)
        name = GROUP_NAMES[spec.group]
        for t, fi, Si, hi in zip(grid, f, S, h):
            rows.append([name, _fmt(t), _fmt(fi), _fmt(Si), _fmt(hi)])
    return ["group", "t", "f", "S", "h"], rows


def cmd_simulate(config: dict) -> int:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    data, _ = load_dataset(config)
    write_csv(data, out / "dataset.csv")
    grid = posterior.default_grid(data.y, points=int(config["grid"]["points"]))
    if config["grid"].get("max"):
        grid = np.linspace(0.0, float(config["grid"]["max"]), int(config["grid"]["points"]) + 1)[1:]
    header, rows = _truth_rows(config, grid)
    _write_table(out / "truth.csv", header, rows)
    write_manifest(out, config, {"command": "simulate"})
    return 0


def _run_dp_chain(payload):
    data, hp, schedule, seed, chain_idx = payload
    sampler = DpSampler(data, hp, _rng_for(seed, (1, chain_idx)))
    states = list(sampler.run(schedule))
    return states, sampler.acceptance_rates()


def _run_ddp_chain(payload):
    data, hp, schedule, seed, chain_idx = payload
    sampler = DdpSampler(data, hp, _rng_for(seed, (1, chain_idx)))
    states = list(sampler.run(schedule))
    return states, sampler.acceptance_rates()


def _run_chains(worker, data, hp, schedule, seed: int, n_chains: int):
    payloads = [(data, hp, schedule, seed, c) for c in range(n_chains)]
    if n_chains == 1:
        return [worker(payloads[0])]
    with ProcessPoolExecutor(max_workers=n_chains) as pool:
        return list(pool.map(worker, payloads))


def _dp_scalar_row(chain: int, s: DpChainState):
    return [chain, s.iteration, _fmt(s.theta), s.M, _fmt(s.alpha), _fmt(s.zeta),
            _fmt(s.rw_step), _fmt(s.joint_step)]


def _ddp_scalar_row(chain: int, s: DdpChainState):
    return [chain, s.iteration, _fmt(s.theta_C), _fmt(s.theta_T), s.M_C, s.M_T,
            _fmt(s.alpha), _fmt(s.mu[0]), _fmt(s.mu[1])]


DP_TRACE_HEADER = ["chain", "iteration", "theta", "M", "alpha", "zeta", "rw_step", "joint_step"]
DDP_TRACE_HEADER = ["chain", "iteration", "theta_C", "theta_T", "M_C", "M_T", "alpha", "mu_1", "mu_2"]


def _functional_tables(out: Path, grid, summaries_by_group: dict[str | None, dict]) -> None:
    """summaries_by_group: {None: {kind: FunctionalSummary}} for one group or
    {"C": {...}, "T": {...}} for two."""
    grouped = None not in summaries_by_group
    for kind in ("density", "survival", "hazard"):
        rows = []
        if grouped:
            header = ["group", "t", "mean", "lower", "upper"]
            for gname, summaries in summaries_by_group.items():
                s = summaries[kind]
                for t, m, lo, hi in zip(s.grid, s.mean, s.lower, s.upper):
                    rows.append([gname, _fmt(t), _fmt(m), _fmt(lo), _fmt(hi)])
        else:
            header = ["t", "mean", "lower", "upper"]
            s = summaries_by_group[None][kind]
            for t, m, lo, hi in zip(s.grid, s.mean, s.lower, s.upper):
                rows.append([_fmt(t), _fmt(m), _fmt(lo), _fmt(hi)])
        _write_table(out / f"functional_{kind}.csv", header, rows)


def _resolve_grid(config: dict, y: np.ndarray) -> np.ndarray:
    points = int(config["grid"]["points"])
    gmax = config["grid"].get("max")
    if gmax:
        return np.linspace(0.0, float(gmax), points + 1)[1:]
    return posterior.default_grid(y, points=points)


def cmd_fit(config: dict) -> int:
    out = Path(config["out"])
    model = config.get("model")
    if model not in ("dp", "ddp"):
        raise ConfigError(f"model must be 'dp' or 'ddp', got {model!r}")
    out.mkdir(parents=True, exist_ok=True)
    data, generated = load_dataset(config)
    if generated:
        write_csv(data, out / "dataset.csv")
    schedule = _schedule(config)
    seed = int(config["seed"])
    n_chains = int(config["chains"])
    grid = _resolve_grid(config, data.y)
    t0 = time.perf_counter()
    if model == "dp":
        hp = parse_dp_priors(config.get("priors", {}))
        results = _run_chains(_run_dp_chain, data, hp, schedule, seed, n_chains)
        wall = time.perf_counter() - t0
        _emit_dp_outputs(out, config, data, results, grid, seed, wall)
    else:
        hp = parse_ddp_priors(config.get("priors", {}))
        results = _run_chains(_run_ddp_chain, data, hp, schedule, seed, n_chains)
        wall = time.perf_counter() - t0
        _emit_ddp_outputs(out, config, data, hp, results, grid, seed, wall)
    write_manifest(out, config, {
        "command": "fit", "model": model, "n_observations": data.n,
        "grid_max_used": float(grid[-1]), "grid_points": int(grid.size),
    })
    return 0


def _emit_dp_outputs(out, config, data, results, grid, seed, wall):
    all_states: list[DpChainState] = []
    trace_rows = []
    draw_rows = []
    ess = []
    for chain, (states, _rates) in enumerate(results):
        thetas = [s.theta for s in states]
        ess.append(ess_imse(thetas))
        for s in states:
            trace_rows.append(_dp_scalar_row(chain, s))
            draw_rows.append(_dp_scalar_row(chain, s) + [_fmt(v) for v in s.phi])
        all_states.extend(states)
    n = data.n
    _write_table(out / "traces.csv", DP_TRACE_HEADER, trace_rows)
    _write_table(out / "draws.csv", DP_TRACE_HEADER + [f"phi_{i+1}" for i in range(n)], draw_rows)
    rng = _rng_for(seed, (2,))
    weights = posterior.weight_draws_dp(all_states, rng)
    summaries = {
        kind: posterior.summarize_functional(all_states, kind, grid, weights=weights)
        for kind in ("density", "survival", "hazard")
    }
    _functional_tables(out, grid, {None: summaries})
    eff = float(np.mean([posterior.effective_components(w) for w in weights]))
    diagnostics = {
        "acceptance": {k: [r[1][k] for r in results] for k in results[0][1]},
        "ess_theta": ess,
        "mean_effective_components": eff,
        "retained_draws": len(all_states),
        "wall_clock_s": wall,
    }
    with open(out / "diagnostics.json", "w", encoding="utf-8") as fh:
        json.dump(diagnostics, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit_ddp_outputs(out, config, data, hp, results, grid, seed, wall):
    all_states: list[DdpChainState] = []
    trace_rows = []
    draw_rows = []
    ess_C, ess_T = [], []
    for chain, (states, _rates) in enumerate(results):
        ess_C.append(ess_imse([s.theta_C for s in states]))
        ess_T.append(ess_imse([s.theta_T for s in states]))
        for s in states:
            trace_rows.append(_ddp_scalar_row(chain, s))
            draw_rows.append(
                _ddp_scalar_row(chain, s)
                + [_fmt(v) for v in s.phi[:, 0]]
                + [_fmt(v) for v in s.phi[:, 1]]
            )
        all_states.extend(states)
    n = data.n
    _write_table(out / "traces.csv", DDP_TRACE_HEADER, trace_rows)
    _write_table(
        out / "draws.csv",
        DDP_TRACE_HEADER + [f"phiC_{i+1}" for i in range(n)] + [f"phiT_{i+1}" for i in range(n)],
        draw_rows,
    )
    rng = _rng_for(seed, (2,))
    pairs = posterior.weight_draws_ddp(all_states, hp.Sigma, rng)
    summaries_by_group = {}
    eff = {}
    for gname, side in (("C", [p.C for p in pairs]), ("T", [p.T for p in pairs])):
        summaries_by_group[gname] = {
            kind: posterior.summarize_curves(
                grid,
                np.vstack([posterior.curve_for_kind(w, grid, kind) for w in side]),
                kind,
            )
            for kind in ("density", "survival", "hazard")
        }
        eff[gname] = float(np.mean([posterior.effective_components(w) for w in side]))
    _functional_tables(out, grid, summaries_by_group)
    times = config.get("contrast_times") or []
    if times:
        s_con, h_con = posterior.contrast_at_times(pairs, np.asarray(times, dtype=float))
        rows = []
        for con in (s_con, h_con):
            for j, t in enumerate(con.time_points):
                col = con.draws[:, j]
                with np.errstate(invalid="ignore"):
                    mean = float(np.nanmean(col)) if np.any(np.isfinite(col)) else math.nan
                rows.append([con.kind, _fmt(t), _fmt(con.interval[j, 0]),
                             _fmt(con.interval[j, 1]), _fmt(mean)])
        _write_table(out / "contrasts.csv", ["kind", "time", "lower", "upper", "mean"], rows)
        drows = []
        for con in (s_con, h_con):
            for j, t in enumerate(con.time_points):
                for d, v in enumerate(con.draws[:, j]):
                    drows.append([con.kind, _fmt(t), d, _fmt(v)])
        _write_table(out / "contrast_draws.csv", ["kind", "time", "draw", "value"], drows)
    diagnostics = {
        "acceptance": {k: [r[1][k] for r in results] for k in results[0][1]},
        "ess_theta_C": ess_C,
        "ess_theta_T": ess_T,
        "mean_effective_components": eff,
        "retained_draws": len(all_states),
        "wall_clock_s": wall,
    }
    with open(out / "diagnostics.json", "w", encoding="utf-8") as fh:
        json.dump(diagnostics, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_prior_sim(config: dict) -> int:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    settings = config.get("settings")
    if not settings:
        raise ConfigError("prior-sim needs a 'settings' list (or --preset fig1/fig2)")
    rng = _rng_for(int(config["seed"]), (3,))
    wrows = []
    drows = []
    for si, s in enumerate(settings):
        alpha, zeta = float(s["alpha"]), float(s["zeta"])
        M, theta, count = int(s["M"]), float(s["theta"]), int(s["count"])
        grid = np.linspace(0.0, M * theta, 513)[1:]
        for r, (w, dens) in enumerate(posterior.prior_realizations(alpha, zeta, M, theta, count, rng, grid)):
            for m in range(M):
                wrows.append([si, _fmt(alpha), r, m + 1, _fmt(w.omega[m])])
            for t, f in zip(grid, dens):
                drows.append([si, _fmt(alpha), r, _fmt(t), _fmt(f)])
    _write_table(out / "weights.csv", ["setting", "alpha", "realization", "m", "omega"], wrows)
    _write_table(out / "densities.csv", ["setting", "alpha", "realization", "t", "f"], drows)
    write_manifest(out, config, {"command": "prior-sim"})
    return 0


def _states_from_draws(fit_dir: Path, model: str):
    rows = []
    with open(fit_dir / "draws.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if not rows:
        raise DataError(f"{fit_dir}/draws.csv has no draws")
    states = []
    if model == "dp":
        n = len(header) - len(DP_TRACE_HEADER)
        for row in rows:
            states.append(DpChainState(
                theta=float(row[2]), M=int(row[3]), alpha=float(row[4]), zeta=float(row[5]),
                phi=np.array([float(v) for v in row[8:8 + n]]),
                rw_step=float(row[6]), joint_step=float(row[7]), iteration=int(row[1]),
            ))
    else:
        n = (len(header) - len(DDP_TRACE_HEADER)) // 2
        base = len(DDP_TRACE_HEADER)
        for row in rows:
            phi = np.column_stack([
                [float(v) for v in row[base:base + n]],
                [float(v) for v in row[base + n:base + 2 * n]],
            ])
            states.append(DdpChainState(
                theta_C=float(row[2]), theta_T=float(row[3]), M_C=int(row[4]), M_T=int(row[5]),
                alpha=float(row[6]), mu=np.array([float(row[7]), float(row[8])]),
                phi=phi, iteration=int(row[1]),
            ))
    return states


def cmd_summarize(args) -> int:
    fit_dir = Path(args.from_dir)
    try:
        with open(fit_dir / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"no manifest.json under {fit_dir}") from None
    if manifest.get("command") != "fit":
        raise DataError(f"{fit_dir} does not hold fit outputs")
    config = manifest["config"]
    model = manifest["model"]
    seed = args.seed if args.seed is not None else int(manifest["seed"])
    points = args.grid_points if args.grid_points is not None else manifest["grid_points"]
    gmax = args.grid_max if args.grid_max is not None else manifest["grid_max_used"]
    grid = np.linspace(0.0, float(gmax), int(points) + 1)[1:]
    out = Path(args.out) if args.out else fit_dir
    out.mkdir(parents=True, exist_ok=True)
    states = _states_from_draws(fit_dir, model)
    rng = _rng_for(seed, (2,))
    if model == "dp":
        weights = posterior.weight_draws_dp(states, rng)
        summaries = {
            kind: posterior.summarize_functional(states, kind, grid, weights=weights)
            for kind in ("density", "survival", "hazard")
        }
        _functional_tables(out, grid, {None: summaries})
    else:
        hp = parse_ddp_priors(config.get("priors", {}))
        pairs = posterior.weight_draws_ddp(states, hp.Sigma, rng)
        summaries_by_group = {}
        for gname, side in (("C", [p.C for p in pairs]), ("T", [p.T for p in pairs])):
            summaries_by_group[gname] = {
                kind: posterior.summarize_curves(
                    grid,
                    np.vstack([posterior.curve_for_kind(w, grid, kind) for w in side]),
                    kind,
                )
                for kind in ("density", "survival", "hazard")
            }
        _functional_tables(out, grid, summaries_by_group)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erlmix",
        description="Bayesian nonparametric survival analysis with Erlang mixtures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="RNG seed (default 1)")
        p.add_argument("--preset", help="named preset (example1/example2/example3/liver/lung/fig1/fig2)")
        p.add_argument("--iterations", type=int, help="MCMC sweeps")
        p.add_argument("--burn-in", dest="burn_in", type=float, help="burn-in fraction")
        p.add_argument("--thin", type=int, help="keep every thin-th retained sweep")
        p.add_argument("--grid-max", dest="grid_max", type=float, help="upper end of the evaluation grid")
        p.add_argument("--grid-points", dest="grid_points", type=int, help="number of grid points")
        p.add_argument("--chains", type=int, help="independent seeded chains")
        p.add_argument("--out", help="output directory")

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset and its true curves")
    add_common(p_sim)
    p_sim.add_argument("--censoring", type=float, help="target censored fraction g")
    p_sim.set_defaults(func=lambda a: cmd_simulate(resolve_config(a)))

    p_fit = sub.add_parser("fit", help="run the sampler and emit posterior tables")
    add_common(p_fit)
    p_fit.add_argument("--censoring", type=float, help="target censored fraction g")
    p_fit.set_defaults(func=lambda a: cmd_fit(resolve_config(a)))

    p_prior = sub.add_parser("prior-sim", help="prior realization studies")
    add_common(p_prior)
    p_prior.set_defaults(func=lambda a: cmd_prior_sim(resolve_config(a)))

    p_sum = sub.add_parser("summarize", help="re-summarize stored draws on a new grid")
    p_sum.add_argument("--from", dest="from_dir", required=True, help="fit output directory")
    p_sum.add_argument("--seed", type=int, help="override the posterior-draw seed")
    p_sum.add_argument("--grid-max", dest="grid_max", type=float)
    p_sum.add_argument("--grid-points", dest="grid_points", type=int)
    p_sum.add_argument("--out", help="output directory (default: the fit directory)")
    p_sum.set_defaults(func=cmd_summarize)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
