"""Command-line pipeline: simulate, fit, calibrate, sweep, compare.

Typical closed-loop run (one JSON config drives everything):

    emccd-cal simulate --config run.json --mode dark
    emccd-cal simulate --config run.json --mode counting
    emccd-cal simulate --config run.json --mode analog
    emccd-cal fit --dark out/dark.emf1 --light out/counting_beam1.emf1 --out out
    emccd-cal calibrate --config run.json --beam1 out/analog_beam1.emf1 \
        --beam2 out/analog_beam2.emf1 --params out/fitted_params.json --out out
    emccd-cal sweep --config run.json --beam1 out/counting_beam1.emf1 \
        --beam2 out/counting_beam2.emf1 --dark out/dark.emf1 \
        --params out/fitted_params.json --calibration out/calibration.json --out out
    emccd-cal compare out/curve.csv

Exit codes: 0 success, 2 usage or parse error, 3 I/O error, 4 operating
contract violation, 5 estimation failure, 6 measured/predicted
disagreement.  Log verbosity on stderr follows the EMCCD_CAL_LOG
environment variable (error, warn, info, debug); results go to files and
stdout only.  All outputs are deterministic for a given config and seed,
at any --threads setting.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import estim, frameio, simulate
from .config import RunConfig, load_config
from .exceptions import (
    ConfigError,
    ContractViolationError,
    DegenerateInputError,
    EmccdCalError,
    EmptyStackError,
    FitFailureError,
    FrameFormatError,
    InvalidParameterError,
    ParseError,
)
from .model import EmccdParams

logger = logging.getLogger("emccd_cal")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CONTRACT = 4
EXIT_ESTIMATION = 5
EXIT_DISAGREEMENT = 6

MAX_REDUCED_CHI2 = 2.0

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("EMCCD_CAL_LOG", "warn").lower(),
                            logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def _dump_json(obj, path: Path | None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    return text


def _config_with_overrides(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _out_dir(args, cfg: RunConfig | None) -> Path:
    out = getattr(args, "out", None)
    if out is None and cfg is not None:
        out = cfg.output_dir
    if out is None:
        out = "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _stack_meta(cfg: RunConfig, mode: str) -> dict:
    return {
        "mode": mode,
        "seed": cfg.seed,
        "detector": dataclasses.asdict(cfg.detector),
        "source": dataclasses.asdict(cfg.source),
    }


def _load_params(path: str, eta0: float | None = None) -> EmccdParams:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read parameter file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"parameter file {path} is not valid JSON: {exc}") from exc

    def value(key: str) -> float:
        try:
            entry = doc[key]
            return float(entry["value"] if isinstance(entry, dict) else entry)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"parameter file {path}: missing or bad {key!r}") from exc

    try:
        return EmccdParams(g=value("g"), g_sc=value("g_sc"), p_sc=value("p_sc"),
                           mu=value("mu"), sigma=value("sigma"),
                           eta0=eta0 if eta0 is not None else 1.0)
    except InvalidParameterError as exc:
        raise ParseError(f"parameter file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------
def cmd_simulate(args) -> int:
    cfg = _config_with_overrides(args)
    out = _out_dir(args, cfg)
    meta = _stack_meta(cfg, args.mode)

    if args.mode == "dark":
        stack = simulate.simulate_dark(cfg)
        path = out / "dark.emf1"
        frameio.write_stack(stack, path, meta)
        print(path)
        print("effective p_ph: 0")
        return EXIT_OK

    if args.mode == "counting":
        stack1, stack2 = simulate.simulate_counting(cfg)
        p_ph = cfg.source.p_ph
    else:
        stack1, stack2 = simulate.simulate_analog(cfg)
        p_ph = simulate.analog_source(cfg.source).p_ph
    path1 = out / f"{args.mode}_beam1.emf1"
    path2 = out / f"{args.mode}_beam2.emf1"
    frameio.write_stack(stack1, path1, meta)
    frameio.write_stack(stack2, path2, meta)
    print(path1)
    print(path2)
    print(f"effective p_ph: {p_ph!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------
def cmd_fit(args) -> int:
    dark = frameio.read_stack(args.dark)
    light = frameio.read_stack(args.light) if args.light else None
    result = estim.fit_detector(dark, light)
    out = Path(args.out) / "fitted_params.json" if args.out else None
    sys.stdout.write(_dump_json(result, out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------
def cmd_calibrate(args) -> int:
    cfg = _config_with_overrides(args)
    params = _load_params(args.params)
    stack1 = frameio.read_stack(args.beam1)
    stack2 = frameio.read_stack(args.beam2)
    fit = estim.estimate_eta_analog(
        stack1, stack2, cfg.region1, cfg.region2,
        cfg.source.geometric_factor, params, tile_size=args.tile)
    eta0 = fit.estimates["eta0"]
    eta0_c = fit.estimates["eta0_correlation"]
    se = fit.uncertainties["eta0"]
    se_c = fit.uncertainties["eta0_correlation"]
    combined = math.hypot(se, se_c)
    consistent = bool(abs(eta0 - eta0_c) <= 3.0 * combined) if combined > 0 else True
    report = {
        "eta0": {"value": eta0, "uncertainty": se},
        "eta0_correlation": {"value": eta0_c, "uncertainty": se_c},
        "alpha": fit.estimates["alpha"],
        "zeta": fit.estimates["zeta"],
        "n_samples": fit.notes["n_samples"],
        "consistent": consistent,
    }
    out = _out_dir(args, cfg) / "calibration.json" if (args.out or cfg) else None
    sys.stdout.write(_dump_json(report, out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------
def cmd_sweep(args) -> int:
    cfg = _config_with_overrides(args)
    if not cfg.threshold_grid:
        raise ConfigError("threshold_grid is empty")
    if args.eta0 is not None:
        eta0 = args.eta0
    elif args.calibration:
        try:
            doc = json.loads(Path(args.calibration).read_text())
            eta0 = float(doc["eta0"]["value"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"cannot read eta0 from {args.calibration}: {exc}") from exc
    else:
        raise ConfigError("sweep needs --eta0 or --calibration")
    if not 0.0 < eta0 <= 1.0:
        raise ConfigError(f"eta0 {eta0} outside (0, 1]")

    params = _load_params(args.params, eta0=eta0)
    stack1 = frameio.read_stack(args.beam1)
    stack2 = frameio.read_stack(args.beam2)
    dark = frameio.read_stack(args.dark)
    curve = estim.estimate_eta_counting(
        stack1, stack2, cfg.region1, cfg.region2, list(cfg.threshold_grid),
        cfg.source.geometric_factor, params, dark=dark, tile_size=args.tile)

    out = _out_dir(args, cfg)
    csv_path = out / "curve.csv"
    frameio.write_curve_csv(curve, csv_path, include_validity=True)
    eta_svg = out / "eta_vs_threshold.svg"
    noise_svg = out / "noise_vs_threshold.svg"
    frameio.render_svg(curve, eta_svg, which="eta",
                       title="detection efficiency vs threshold")
    frameio.render_svg(curve, noise_svg, which="noise", log_y=True,
                       title="noise click probability vs threshold")
    for path in (csv_path, eta_svg, noise_svg):
        print(path)
    if curve.below_validity.all():
        logger.warning("every grid point lies below the validity limit mu + 2*sigma")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------
def _reduced_chi2(meas: np.ndarray, err: np.ndarray, pred: np.ndarray,
                  label: str) -> tuple[float, np.ndarray]:
    usable = np.isfinite(meas) & np.isfinite(pred)
    if not usable.any():
        return math.nan, np.full(meas.shape, math.nan)
    bad = usable & (~np.isfinite(err) | (err <= 0))
    if bad.any():
        raise ParseError(f"{label}: zero or invalid uncertainty at "
                         f"{int(bad.sum())} point(s); refusing to divide")
    pulls = np.full(meas.shape, math.nan)
    pulls[usable] = (meas[usable] - pred[usable]) / err[usable]
    chi2 = float(np.mean(pulls[usable] ** 2))
    return chi2, pulls


def cmd_compare(args) -> int:
    curve = frameio.read_curve_csv(args.curve)
    valid = ~curve.below_validity
    if not valid.any():
        raise ParseError("no points above the validity limit to compare")
    idx = np.where(valid)[0]
    eta_chi2, eta_pulls = _reduced_chi2(
        curve.eta_measured[idx], curve.eta_uncert[idx], curve.eta_predicted[idx],
        "eta")
    noise_chi2, noise_pulls = _reduced_chi2(
        curve.noise_measured[idx], curve.noise_uncert[idx],
        curve.noise_predicted[idx], "noise")

    print("T,eta_pull,noise_pull")
    for k, i in enumerate(idx):
        print(f"{curve.thresholds[i]:g},{eta_pulls[k]:.3f},{noise_pulls[k]:.3f}")
    print(f"reduced_chi2_eta: {eta_chi2:.4f}")
    print(f"reduced_chi2_noise: {noise_chi2:.4f}")

    worst = max(c for c in (eta_chi2, noise_chi2) if math.isfinite(c))
    if worst > MAX_REDUCED_CHI2:
        print(f"DISAGREEMENT: reduced chi-square {worst:.4f} exceeds "
              f"{MAX_REDUCED_CHI2}")
        return EXIT_DISAGREEMENT
    print("AGREEMENT: measured and predicted curves are consistent")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------
def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emccd-cal",
        description="EMCCD absolute-calibration simulator and estimator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run config JSON")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=0,
                       help="worker threads, 0 = auto (outputs are identical "
                            "at any setting)")

    p = sub.add_parser("simulate", help="produce EMF1 stacks for one mode")
    common(p)
    p.add_argument("--mode", required=True, choices=("dark", "analog", "counting"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate detector parameters from stacks")
    p.add_argument("--dark", required=True, help="dark EMF1 stack")
    p.add_argument("--light", help="dim illuminated EMF1 stack (enables the gain fit)")
    p.add_argument("--out", help="directory for fitted_params.json")
    p.add_argument("--threads", type=int, default=0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="analog absolute efficiency from twin beams")
    common(p)
    p.add_argument("--beam1", required=True)
    p.add_argument("--beam2", required=True)
    p.add_argument("--params", required=True, help="fitted_params.json from fit")
    p.add_argument("--tile", type=int, default=estim.DEFAULT_TILE,
                   help="paired tile edge in pixels for correlation samples")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", help="counting-regime efficiency vs threshold")
    common(p)
    p.add_argument("--beam1", required=True)
    p.add_argument("--beam2", required=True)
    p.add_argument("--dark", required=True, help="dark stack for the noise curve")
    p.add_argument("--params", required=True)
    p.add_argument("--eta0", type=float, help="analog efficiency for predictions")
    p.add_argument("--calibration", help="calibration.json (alternative to --eta0)")
    p.add_argument("--tile", type=int, default=estim.DEFAULT_TILE)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="pulls and chi-square of a sweep CSV")
    p.add_argument("curve", help="curve.csv produced by sweep")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except ContractViolationError as exc:
        logger.error("%s", exc)
        return EXIT_CONTRACT
    except (FitFailureError, DegenerateInputError) as exc:
        logger.error("%s", exc)
        return EXIT_ESTIMATION
    except (FrameFormatError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except (InvalidParameterError, EmptyStackError, EmccdCalError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
