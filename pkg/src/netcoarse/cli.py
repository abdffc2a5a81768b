"""Command-line front end.

Subcommands: simulate, cpi, fixpoint, rates, pca, oracle. Every run writes
a manifest.json with the effective configuration, master seed, package
version and wall time, plus subcommand-specific CSV/JSON artifacts, into
--out. Flags override config-file values; unknown config keys are
rejected. Exit codes: 0 success, 2 configuration error, 3 lifting
failure, 4 solver stagnation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, cpi, fixpoint, theory
from .liftrestrict import to_percentile_curve
from .evolution import ModelParams, run_ensemble
from .graphs import Graph, read_edge_list
from .liftrestrict import DegreeDistribution, LiftingError, lift_density

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_LIFTING = 3
EXIT_STAGNATION = 4


class ConfigError(ValueError):
    pass


COMMON_DEFAULTS = {
    "n": 100,
    "r": 0.9,
    "seed": 0,
    "copies": 100,
    "time_unit": "n",
    "out": "netcoarse-out",
}

DEFAULTS = {
    "simulate": {
        **COMMON_DEFAULTS,
        "t_end": 10.0,
        "observe_every": 2.0,
        "initial": "empty",
        "initial_file": "",
        "p0": 0.25,
    },
    "cpi": {
        **COMMON_DEFAULTS,
        "coarse_variable": "degree_distribution",
        "simulate_steps": 10.0,
        "observe_interval": 2.0,
        "history": 3,
        "project_steps": 10.0,
        "cycles": 3,
        "initial": "er",
        "p0": 0.25,
    },
    "fixpoint": {
        **COMMON_DEFAULTS,
        "copies": 2000,
        "horizon": 10.0,
        "fd_epsilon": 0.05,
        "gmres_dim": 15,
        "gmres_tol": 1e-3,
        "newton_tol": 1e-4,
        "max_iters": 10,
        "p0": 0.25,
    },
    "rates": {
        **COMMON_DEFAULTS,
        "copies": 200,
        "case": "all",
    },
    "pca": {
        **COMMON_DEFAULTS,
        "copies": 20000,
        "mean_offset": 0.27,
        "sd0": 3.0,
        "smooth_sd": 1.2,
    },
    "oracle": {
        "r": 0.9,
        "rho0": 0.0,
        "d0": 0.0,
        "t_end": 10.0,
        "steps": 200,
        "n": 100,
        "seed": 0,
        "out": "netcoarse-out",
    },
}

_FLOAT_KEYS = {
    "r", "t_end", "observe_every", "p0", "simulate_steps", "observe_interval",
    "project_steps", "horizon", "fd_epsilon", "gmres_tol", "newton_tol",
    "rho0", "d0", "mean_offset", "sd0", "smooth_sd",
}
_INT_KEYS = {"n", "seed", "copies", "history", "cycles", "gmres_dim", "max_iters", "steps"}


def parse_config(argv) -> dict:
    """Resolve the effective run configuration.

    Precedence: built-in defaults, then --config file values, then explicit
    command-line flags. Unknown keys anywhere are rejected.
    """
    parser = argparse.ArgumentParser(
        prog="netcoarse",
        description="equation-free coarse-graining of a network evolution chain",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, defaults in DEFAULTS.items():
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", type=str, help="flat key/value JSON file")
        for key, value in defaults.items():
            flag = "--" + key.replace("_", "-")
            if key == "out":
                p.add_argument("--out", type=str)
            elif key in _INT_KEYS:
                p.add_argument(flag, type=int)
            elif key in _FLOAT_KEYS:
                p.add_argument(flag, type=float)
            else:
                p.add_argument(flag, type=str)
    ns = parser.parse_args(argv)
    command = ns.command
    provided = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    cfg = dict(DEFAULTS[command])
    config_path = getattr(ns, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a flat JSON object")
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(file_cfg)
    cfg.update(provided)
    cfg["command"] = command
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    if "n" in cfg and cfg["n"] < 2:
        raise ConfigError(f"n must be >= 2, got {cfg['n']}")
    if not 0.0 <= cfg["r"] <= 1.0:
        raise ConfigError(f"r must be in [0, 1], got {cfg['r']}")
    if cfg.get("time_unit", "n") not in ("n", "pairs"):
        raise ConfigError("time_unit must be 'n' or 'pairs'")
    if cfg.get("copies", 1) < 1:
        raise ConfigError("copies must be >= 1")
    for key in ("t_end", "observe_every", "horizon"):
        if key in cfg and cfg[key] < 0:
            raise ConfigError(f"{key} must be non-negative")
    if "p0" in cfg and not 0.0 <= cfg["p0"] <= 1.0:
        raise ConfigError("p0 must be in [0, 1]")
    if cfg.get("initial", "empty") not in ("empty", "er", "file"):
        raise ConfigError("initial must be 'empty', 'er' or 'file'")
    if cfg.get("initial") == "file" and not cfg.get("initial_file"):
        raise ConfigError("initial=file needs --initial-file")
    if cfg.get("case", "all") not in ("all", "degree", "cherry", "triangle"):
        raise ConfigError("case must be all, degree, cherry or triangle")


# -- artifact helpers ---------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _write_manifest(out: Path, cfg: dict, t_start: float, extras: dict | None = None) -> None:
    manifest = {
        "config": {k: v for k, v in cfg.items() if k != "command"},
        "command": cfg["command"],
        "seed": cfg.get("seed"),
        "version": __version__,
        "wall_time_s": time.time() - t_start,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    if extras:
        manifest.update(extras)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def _factory(cfg, n):
    initial = cfg.get("initial", "empty")
    if initial == "er":
        p0 = cfg.get("p0", 0.25)
        return lambda rng: lift_density(p0, n, rng)
    if initial == "file":
        g0 = read_edge_list(cfg["initial_file"])
        if g0.n != n:
            raise ConfigError(
                f"edge-list graph has n={g0.n}, run configured with n={n}"
            )
        return lambda rng: g0.copy()
    return lambda rng: Graph(n)


# -- subcommand runners ----------------------------------------------------------


def _run_simulate(cfg: dict, out: Path) -> int:
    params = ModelParams(
        n=cfg["n"], r=cfg["r"], seed=cfg["seed"], time_unit=cfg["time_unit"]
    )
    res = run_ensemble(
        _factory(cfg, cfg["n"]),
        params,
        cfg["copies"],
        cfg["t_end"],
        cfg["observe_every"] if cfg["t_end"] > 0 else 1.0,
        observers=("degrees", "cherries_triangles"),
    )
    rows = []
    for c, traj in enumerate(res.trajectories):
        for snap in traj.snapshots:
            rows.append(
                (snap.time, c, snap.edge_density, snap.cherry_count, snap.triangle_count)
            )
    _write_csv(
        out / "trajectory.csv",
        ("time", "copy", "edge_density", "cherry_count", "triangle_count"),
        rows,
    )
    hist_rows = []
    probs = res.pooled_probs
    for k, t in enumerate(res.times):
        for d in range(params.n):
            hist_rows.append((t, d, probs[k, d]))
    _write_csv(
        out / "degree_histograms.csv", ("time", "degree", "probability"), hist_rows
    )
    return EXIT_OK


def _run_cpi(cfg: dict, out: Path) -> int:
    params = ModelParams(
        n=cfg["n"], r=cfg["r"], seed=cfg["seed"], time_unit=cfg["time_unit"]
    )
    config = cpi.CpiConfig(
        simulate_steps=cfg["simulate_steps"],
        observe_interval=cfg["observe_interval"],
        history=cfg["history"],
        project_steps=cfg["project_steps"],
        copies=cfg["copies"],
        coarse_variable=cfg["coarse_variable"],
    )
    result = cpi.cpi_run(_factory(cfg, cfg["n"]), params, config, cfg["cycles"])
    _write_csv(
        out / "coarse_trace.csv",
        ("time", "cycle", "edge_density"),
        [
            (t, c, v)
            for t, c, v in zip(result.times, result.cycle_of, result.density_trace())
        ],
    )
    if config.coarse_variable == "degree_distribution":
        rows = []
        for t, c, mu in zip(result.times, result.cycle_of, result.values):
            for d, p in enumerate(mu.probs):
                rows.append((t, c, d, p))
        _write_csv(
            out / "degree_histograms.csv",
            ("time", "cycle", "degree", "probability"),
            rows,
        )
    degree_mode = config.coarse_variable == "degree_distribution"
    cycles = []
    curve_rows = []
    for rec in result.records:
        entry = {
            "cycle": rec.cycle,
            "observed_times": rec.observed_times,
            "projected_time": rec.projected_time,
            "repair_magnitude": rec.repair_magnitude,
            "lift_retries": rec.lift_retries,
        }
        if degree_mode and rec.projected is not None:
            curve = to_percentile_curve(rec.projected)
            entry["observed_curves"] = [
                to_percentile_curve(mu).values for mu in rec.observed
            ]
            entry["projected_curve"] = curve.values
            for p, g in zip(curve.percentiles, curve.values):
                curve_rows.append((rec.cycle, p, g))
        elif rec.projected is not None:
            entry["observed_values"] = list(rec.observed)
            entry["projected_value"] = rec.projected
        cycles.append(entry)
    if curve_rows:
        _write_csv(
            out / "projected_percentile_curves.csv",
            ("cycle", "percentile", "degree_value"),
            curve_rows,
        )
    report = {
        "coverage": result.coverage,
        "inner_iterations": result.inner_iterations,
        "baseline_iterations": result.baseline_iterations,
        "cost_ratio": result.cost_ratio,
        "cycles": cycles,
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, default=_json_default)
        fh.write("\n")
    return EXIT_OK


def _run_fixpoint(cfg: dict, out: Path) -> int:
    params = ModelParams(
        n=cfg["n"], r=cfg["r"], seed=cfg["seed"], time_unit=cfg["time_unit"]
    )
    ncfg = fixpoint.NewtonConfig(
        timestepper_horizon=cfg["horizon"],
        fd_epsilon=cfg["fd_epsilon"],
        gmres_dim=cfg["gmres_dim"],
        gmres_tol=cfg["gmres_tol"],
        newton_tol=cfg["newton_tol"],
        max_newton_iters=cfg["max_iters"],
        copies=cfg["copies"],
    )
    from scipy.stats import binom

    pmf = binom.pmf(np.arange(cfg["n"]), cfg["n"] - 1, cfg["p0"])
    mu0 = DegreeDistribution(pmf / pmf.sum())
    report = fixpoint.newton_gmres(mu0, params, ncfg)
    _write_csv(
        out / "residuals.csv",
        ("iteration", "residual_norm", "damping", "gmres_rel_residual"),
        [
            (k, it.f_norm, it.damping, it.gmres_rel_residual)
            for k, it in enumerate(report.iterations)
        ],
    )
    _write_csv(
        out / "mu_star.csv",
        ("degree", "probability"),
        list(enumerate(report.mu.probs)),
    )
    payload = {
        "noise_floor": report.noise_floor,
        "converged": report.converged,
        "stagnated": report.stagnated,
        "residual_norms": report.residual_norms,
        "damping": [it.damping for it in report.iterations],
        "gmres_rel_residuals": [it.gmres_rel_residual for it in report.iterations],
        "gmres_iterations": [it.gmres_iterations for it in report.iterations],
        "mu_star_mean": report.mu.mean(),
        "mu_star_sd": report.mu.sd(),
        "mu_star": report.mu.probs,
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")
    return EXIT_STAGNATION if report.stagnated else EXIT_OK


def _run_rates(cfg: dict, out: Path) -> int:
    cases = (
        ("degree", "cherry", "triangle")
        if cfg["case"] == "all"
        else (cfg["case"],)
    )
    runners = {
        "degree": analysis.degree_rate_experiment,
        "cherry": analysis.cherry_rate_experiment,
        "triangle": analysis.triangle_rate_experiment,
    }
    fits = {}
    for case in cases:
        exp = runners[case](
            n=cfg["n"], r=cfg["r"], seed=cfg["seed"], copies=cfg["copies"]
        )
        _write_csv(
            out / f"rate_{case}.csv",
            ("time", "deviation", "log_deviation"),
            [
                (t, d, np.log(d) if d > 0 else float("nan"))
                for t, d in zip(exp.times, exp.deviation)
            ],
        )
        fits[case] = {
            "slope": exp.fit.slope,
            "intercept": exp.fit.intercept,
            "theory_rate": exp.theory_rate,
            "r_squared": exp.fit.r_squared,
            "window": [exp.fit.t_lo, exp.fit.t_hi],
            "n_points": exp.fit.n_points,
        }
    with open(out / "fits.json", "w", encoding="utf-8") as fh:
        json.dump(fits, fh, indent=2, default=_json_default)
        fh.write("\n")
    return EXIT_OK


def _run_pca(cfg: dict, out: Path) -> int:
    exp = analysis.pca_decay_experiment(
        n=cfg["n"],
        r=cfg["r"],
        seed=cfg["seed"],
        copies=cfg["copies"],
        mean_offset=cfg["mean_offset"],
        sd0=cfg["sd0"],
        smooth_sd=cfg["smooth_sd"],
    )
    _write_csv(
        out / "singular_values.csv",
        ("index", "singular_value"),
        list(enumerate(exp.result.singular_values)),
    )
    comps = exp.result.components
    _write_csv(
        out / "components.csv",
        ("degree", "component_1", "component_2"),
        [(d, comps[0, d], comps[1, d]) for d in range(comps.shape[1])],
    )
    payload = {
        "singular_ratio": exp.result.ratio(),
        "first_match": vars(exp.match_first),
        "second_match": vars(exp.match_second),
    }
    with open(out / "matches.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")
    return EXIT_OK


def _run_oracle(cfg: dict, out: Path) -> int:
    p = theory.TheoryParams(r=cfg["r"], rho0=cfg["rho0"], d0=cfg["d0"])
    t = np.linspace(0.0, cfg["t_end"], cfg["steps"] + 1)
    rho = theory.rho_closed_form(t, p)
    if p.rho0 > 0:
        deg = theory.degree_closed_form(t, p)
        w0 = theory.constant_graphon(p.rho0, 50)
        cherry = np.array(
            [theory.subgraph_densities(theory.graphon_evolve(w0, tk, p))[1] for tk in t]
        )
        triangle = np.array(
            [theory.subgraph_densities(theory.graphon_evolve(w0, tk, p))[2] for tk in t]
        )
    else:
        deg = np.full_like(t, np.nan)
        cherry = rho**2
        triangle = rho**3
    _write_csv(
        out / "theory.csv",
        ("time", "edge_density", "normed_degree", "cherry_density", "triangle_density"),
        zip(t, rho, deg, cherry, triangle),
    )
    law = theory.stationary_degree_law(p, cfg["n"])
    payload = {"rates": theory.convergence_rates(p), "stationary_law": law}
    with open(out / "theory_summary.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")
    return EXIT_OK


_RUNNERS = {
    "simulate": _run_simulate,
    "cpi": _run_cpi,
    "fixpoint": _run_fixpoint,
    "rates": _run_rates,
    "pca": _run_pca,
    "oracle": _run_oracle,
}


def dispatch(cfg: dict) -> int:
    """Run the selected pipeline and write artifacts plus a manifest."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.time()
    status = _RUNNERS[cfg["command"]](cfg, out)
    _write_manifest(out, cfg, t_start, extras={"exit_code": status})
    return status


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"netcoarse: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return dispatch(cfg)
    except LiftingError as exc:
        print(f"netcoarse: lifting failed: {exc}", file=sys.stderr)
        return EXIT_LIFTING
    except ValueError as exc:
        print(f"netcoarse: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
