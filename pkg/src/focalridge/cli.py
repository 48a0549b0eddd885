"""Command-line entry point.

Subcommands::

    focalridge fit       one fit (fixed or tuned penalty) -> fit.json
    focalridge sweep     shrinkage path over a penalty grid -> sweep.csv
    focalridge simulate  Monte Carlo paths and MSE decomposition -> paths.csv, mse.csv
    focalridge replay    re-run the command recorded in a manifest.json

Every command writes ``manifest.json`` next to its outputs with the fully
resolved configuration, input digests and library version. Column roles are
always given explicitly; nothing is inferred from column names.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .core import ColumnRoles, FocalSpec, validate_dataset
from .errors import DataValidationError, FocalRidgeError
from .outputs import (
    MANIFEST_NAME,
    build_manifest,
    read_csv_table,
    sha256_file,
    to_csv,
    to_json,
    write_outputs,
)
from .reconstruction import reconstruct
from .residualize import NuisanceSpec, residualize
from .ridge import fit_ridge
from .simulation import (
    REFERENCE_DGP,
    RNG_DESCRIPTION,
    SimulationConfig,
    decompose,
    population_grid,
    run_simulation,
    shrinkage_path,
    simulated_path_rows,
)
from .tuning import TuningConfig, default_grid, tune_lambda

logger = logging.getLogger("focalridge")

SWEEP_COLUMNS = ["lambda", "coefficient_name", "beta_hat", "tau_hat", "tau0_hat", "se"]
PATH_COLUMNS = ["lambda", "coefficient_name", "beta_hat", "tau_hat", "tau0_hat", "tau_true"]
MSE_COLUMNS = ["lambda", "treatment", "tau_true", "mean_tau_hat", "bias_sq", "variance", "mse", "reps"]

DATA_DEFAULTS: dict[str, Any] = {
    "input": None,
    "outcome": None,
    "treatments": None,
    "covariates": [],
    "focal": "max",
    "nuisance": "mean",
    "cross_fit": 1,
    "covariance": "homoscedastic",
    "standardize": False,
    "seed": 0,
    "out": None,
}
FIT_DEFAULTS = {**DATA_DEFAULTS, "lambda": None, "tune": False, "grid": "default", "holdout": 0.25, "tune_folds": 1}
SWEEP_DEFAULTS = {**DATA_DEFAULTS, "grid": "default"}
SIM_DEFAULTS: dict[str, Any] = {
    "paper_defaults": False,
    "prevalences": None,
    "beta0": None,
    "beta": None,
    "n": 2000,
    "noise_sd": 0.0,
    "focal": "max",
    "reps": 500,
    "seed": 0,
    "grid": "default",
    "lambda": None,
    "workers": 1,
    "out": None,
}


class UsageError(Exception):
    pass


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in _csv_list(text)]


def parse_grid(spec: str | list, fallback: Callable[[], np.ndarray]) -> np.ndarray:
    """Parse a penalty grid.

    ``default`` uses ``fallback()``; otherwise a comma list whose items are
    numbers or ``log:LO:HI:NUM`` blocks. The result is sorted and deduplicated.
    """
    if isinstance(spec, (list, tuple)):
        values = [float(v) for v in spec]
    elif spec.strip() == "default":
        return np.asarray(fallback(), dtype=float)
    else:
        values = []
        for item in _csv_list(spec):
            if item.startswith("log:"):
                try:
                    _, lo, hi, num = item.split(":")
                    values.extend(np.geomspace(float(lo), float(hi), int(num)).tolist())
                except ValueError:
                    raise UsageError(f"bad grid block {item!r}; expected log:LO:HI:NUM") from None
            else:
                try:
                    values.append(float(item))
                except ValueError:
                    raise UsageError(f"bad grid value {item!r}") from None
    grid = np.unique(np.asarray(values, dtype=float))
    if grid.size == 0 or np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise UsageError("grid must contain finite nonnegative penalties")
    return grid


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of option values; explicit flags override it")
    p.add_argument("--input", help="input CSV (UTF-8, header row)")
    p.add_argument("--outcome", help="outcome column")
    p.add_argument("--treatments", type=_csv_list, help="ordered, comma-separated sub-treatment columns")
    p.add_argument("--covariates", type=_csv_list, help="comma-separated covariate columns")
    p.add_argument("--focal", choices=["max", "sum"])
    p.add_argument("--nuisance", help="mean | linear | knn:K")
    p.add_argument("--cross-fit", dest="cross_fit", type=int, metavar="N")
    p.add_argument("--covariance", choices=["homoscedastic", "robust"])
    p.add_argument("--standardize", action="store_const", const=True, default=None,
                   help="penalize sub-treatments on a unit-variance scale")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="focalridge", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit at a fixed or tuned penalty")
    _add_data_args(fit)
    lam = fit.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lambda", type=float, help="fixed penalty (raw, not per observation)")
    lam.add_argument("--tune", action="store_const", const=True, default=None, help="tune the penalty on held-out rows")
    fit.add_argument("--grid", help="penalty grid for --tune: default | list with log:LO:HI:NUM blocks")
    fit.add_argument("--holdout", type=float, help="hold-out fraction (default 0.25)")
    fit.add_argument("--tune-folds", dest="tune_folds", type=int, help="k-fold averaging instead of one split")

    sweep = sub.add_parser("sweep", help="shrinkage path over a penalty grid")
    _add_data_args(sweep)
    sweep.add_argument("--grid", help="default | list with log:LO:HI:NUM blocks")

    sim = sub.add_parser("simulate", help="Monte Carlo shrinkage paths and MSE decomposition")
    sim.add_argument("--config", help="JSON file of option values; explicit flags override it")
    sim.add_argument("--paper-defaults", dest="paper_defaults", action="store_const", const=True, default=None,
                     help="prevalences [0.2,0.05,...], beta0=5, beta=[2,2,1,1,-1,-1]")
    sim.add_argument("--prevalences", type=_float_list)
    sim.add_argument("--beta0", type=float)
    sim.add_argument("--beta", type=_float_list)
    sim.add_argument("--n", type=int)
    sim.add_argument("--noise-sd", dest="noise_sd", type=float)
    sim.add_argument("--focal", choices=["max", "sum"])
    sim.add_argument("--reps", type=int)
    sim.add_argument("--seed", type=int)
    g = sim.add_mutually_exclusive_group()
    g.add_argument("--grid", help="default | list with log:LO:HI:NUM blocks")
    g.add_argument("--lambda", dest="lambda", type=float, help="single penalty")
    sim.add_argument("--workers", type=int, help="threads for replications (results do not depend on it)")
    sim.add_argument("--out", help="output directory")

    rep = sub.add_parser("replay", help="re-run a recorded manifest")
    rep.add_argument("manifest")
    rep.add_argument("--out", help="output directory (default: the recorded one)")
    return parser


def resolve(args: argparse.Namespace, defaults: dict[str, Any]) -> dict[str, Any]:
    """Merge explicit flags over a ``--config`` file over built-in defaults."""
    file_cfg: dict[str, Any] = {}
    if getattr(args, "config", None):
        file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if "config" in file_cfg and "command" in file_cfg:  # a manifest
            file_cfg = file_cfg["config"]
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    cfg = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        cfg[key] = flag if flag is not None else file_cfg.get(key, default)
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) in (None, [], "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _load_data(cfg):
    _require(cfg, "input", "outcome", "treatments", "out")
    focal = FocalSpec.parse(cfg["focal"])
    table = read_csv_table(cfg["input"])
    roles = ColumnRoles(cfg["outcome"], tuple(cfg["treatments"]), tuple(cfg["covariates"] or ()))
    try:
        data = validate_dataset(table, roles, focal)
    except DataValidationError as exc:
        hint = " (rows are 0-based data rows; CSV line = row + 2)" if " row " in str(exc) else ""
        raise type(exc)(f"{cfg['input']}: {exc}{hint}") from exc
    nuisance = NuisanceSpec.parse(cfg["nuisance"], int(cfg["cross_fit"]), int(cfg["seed"]))
    design = residualize(data, focal, nuisance)
    return data, design


def run_fit(cfg: dict) -> tuple[dict[str, str], dict]:
    if cfg["tune"] and cfg["lambda"] is not None:
        raise UsageError("--lambda and --tune are mutually exclusive")
    if not cfg["tune"] and cfg["lambda"] is None:
        raise UsageError("one of --lambda or --tune is required")
    data, design = _load_data(cfg)
    tuning = None
    if cfg["tune"]:
        grid = parse_grid(cfg["grid"], lambda: default_grid(design))
        tuning = tune_lambda(
            design, TuningConfig(tuple(grid), float(cfg["holdout"]), int(cfg["seed"]), int(cfg["tune_folds"]))
        )
        lam = tuning.best_lambda
    else:
        lam = float(cfg["lambda"])
    fit = fit_ridge(design, lam, cfg["covariance"], bool(cfg["standardize"]))
    eff = reconstruct(fit, design, data)
    se = fit.standard_errors
    names = ("focal", *data.treatment_names)
    report = {
        **data.summary(),
        "focal": FocalSpec.parse(cfg["focal"]).value,
        "provenance": design.provenance,
        "lambda": fit.lam,
        "lambda_source": "tuned" if tuning else "fixed",
        "standardized": fit.standardized,
        "beta0": fit.beta0,
        "coefficients": [
            {"name": nm, "beta": float(b), "se": float(se[i]) if se is not None else None}
            for i, (nm, b) in enumerate(zip(names, fit.coef))
        ],
        "sigma2_hat": fit.sigma2_hat,
        "covariance_kind": fit.covariance_kind,
        "covariance": fit.covariance,
        "tau0": eff.tau0,
        "tau": dict(zip(data.treatment_names, eff.tau)),
        "unconfounded_mode": eff.unconfounded_mode,
        "moment_ratios": dict(zip(data.treatment_names, eff.moment_ratios)),
        "notes": list(eff.notes),
        "tuning": tuning.table() if tuning else None,
    }
    extra = {"resolved_grid": tuning.grid if tuning else None}
    return {"fit.json": to_json(report)}, extra


def run_sweep(cfg: dict) -> tuple[dict[str, str], dict]:
    data, design = _load_data(cfg)
    grid = parse_grid(cfg["grid"], lambda: default_grid(design))
    rows = shrinkage_path(design, grid, data, cfg["covariance"], bool(cfg["standardize"]))
    return {"sweep.csv": to_csv(rows, SWEEP_COLUMNS)}, {"resolved_grid": grid}


def _sim_config(cfg: dict) -> SimulationConfig:
    params = {}
    for key in ("prevalences", "beta0", "beta"):
        value = cfg[key]
        if value is None:
            if not cfg["paper_defaults"]:
                raise UsageError(f"--{key} is required unless --paper-defaults is given")
            value = REFERENCE_DGP[key]
        params[key] = value
    base = SimulationConfig(
        n=int(cfg["n"]), noise_sd=float(cfg["noise_sd"]), focal=cfg["focal"],
        reps=int(cfg["reps"]), seed=int(cfg["seed"]), **params,
    )
    if cfg["lambda"] is not None:
        grid = np.array([float(cfg["lambda"])])
    else:
        grid = parse_grid(cfg["grid"], lambda: population_grid(base))
    return SimulationConfig(**{**base.to_dict(), "lambda_grid": tuple(grid)})


def run_simulate(cfg: dict) -> tuple[dict[str, str], dict]:
    _require(cfg, "out")
    config = _sim_config(cfg)
    if config.reps < 2:
        raise UsageError("MSE decomposition needs --reps >= 2")
    run = run_simulation(config, workers=int(cfg["workers"]))
    mse = decompose(run)
    files = {
        "paths.csv": to_csv(simulated_path_rows(run), PATH_COLUMNS),
        "mse.csv": to_csv(mse.rows(), MSE_COLUMNS),
    }
    extra = {
        "rng": RNG_DESCRIPTION,
        "simulation": config.to_dict(),
        "redraws": run.redraws,
        "tau0_true": mse.tau0_true,
    }
    return files, extra


COMMANDS = {
    "fit": (FIT_DEFAULTS, run_fit),
    "sweep": (SWEEP_DEFAULTS, run_sweep),
    "simulate": (SIM_DEFAULTS, run_simulate),
}


def execute(command: str, cfg: dict) -> Path:
    """Run a resolved configuration, write outputs and manifest, return the output directory."""
    _, runner = COMMANDS[command]
    files, extra = runner(cfg)
    inputs = [cfg["input"]] if cfg.get("input") else []
    manifest = build_manifest(command, cfg, inputs, cfg.get("seed"), extra)
    out = Path(cfg["out"])
    write_outputs(out, {**files, MANIFEST_NAME: to_json(manifest)})
    return out


def replay(manifest_path: str, out: str | None = None) -> Path:
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    command = manifest["command"]
    if command not in COMMANDS:
        raise UsageError(f"manifest records unknown command {command!r}")
    cfg = dict(manifest["config"])
    for path, digest in manifest.get("inputs", {}).items():
        if sha256_file(path) != digest:
            raise FocalRidgeError(f"input {path} changed since the manifest was written (sha256 mismatch)")
    if out is not None:
        cfg["out"] = out
    return execute(command, cfg)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            out = replay(args.manifest, args.out)
        else:
            defaults, _ = COMMANDS[args.command]
            out = execute(args.command, resolve(args, defaults))
    except UsageError as exc:
        parser.error(str(exc))  # exits 2
    except (FocalRidgeError, ValueError, OSError) as exc:
        print(f"focalridge: error: {exc}", file=sys.stderr)
        return 1
    print(str(out))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
