"""Command-line entry point: error maps, coefficient refits and one-shot applications."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .applications import (
    ABS_RHO_RATIO,
    BernoulliBatch,
    SkewNormalParams,
    bernoulli_logsum_matched_gaussian,
    expected_abs,
    expected_log_sum_bernoulli,
    skew_normal_cdf,
)
from .calibration import (
    fit_log_sigmoid_coeffs,
    fit_sigmoid_coeff,
    mc_oracle_data,
    synthetic_log_sigmoid_data,
    synthetic_sigmoid_data,
)
from .montecarlo import (
    REL_ERROR_FLOOR,
    EstimationError,
    MCConfig,
    SoftmaxErrorGrid,
    SoftmaxGridAxes,
    build_error_grid,
    evaluate_softmax_approx,
    relative_error,
    softmax_oracle_grid,
)
from .sigmoid import (
    DEFAULT_LOG_SIGMOID_COEFFS,
    Gaussian1D,
    LogSigmoidCoeffs,
    SigmoidCoeff,
    fixed_form_expected_log_sigmoid,
    fixed_form_expected_sigmoid,
    log_sigmoid,
    sigmoid,
    sigmoid_variance,
    taylor_expected_log_sigmoid,
    taylor_expected_sigmoid,
)
from .softmax import fixed_form_expected_softmax, taylor_expected_softmax

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ORACLE = 3
EXIT_NOT_CONVERGED = 4

GRID_COLUMNS = ("mu", "sigma", "approx", "oracle", "oracle_stderr", "rel_error")
SOFTMAX_COLUMNS = ("rho", "sigma", "mu2", "mu3", "approx", "oracle", "oracle_stderr", "rel_error")

EXIT_CODES_HELP = """exit codes:
  0  success
  2  invalid flags or parameters
  3  Monte-Carlo oracle failure (NaN in a grid cell)
  4  calibration did not converge
"""


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# targets


@dataclass(frozen=True)
class GridTarget:
    approx: Callable[[Gaussian1D, SigmoidCoeff], np.ndarray]
    oracle: Callable
    stat: str = "mean"
    log_domain: bool = False


GRID_TARGETS: dict[str, GridTarget] = {
    "sigmoid": GridTarget(lambda g, a: fixed_form_expected_sigmoid(g, a), sigmoid),
    "log-sigmoid": GridTarget(lambda g, a: fixed_form_expected_log_sigmoid(g), log_sigmoid, log_domain=True),
    "variance": GridTarget(lambda g, a: sigmoid_variance(g), sigmoid, stat="var"),
    "taylor1": GridTarget(lambda g, a: taylor_expected_log_sigmoid(g, 1), log_sigmoid, log_domain=True),
    "taylor2": GridTarget(lambda g, a: taylor_expected_log_sigmoid(g, 2), log_sigmoid, log_domain=True),
    "sigmoid-taylor1": GridTarget(lambda g, a: taylor_expected_sigmoid(g, 1), sigmoid),
    "sigmoid-taylor2": GridTarget(lambda g, a: taylor_expected_sigmoid(g, 2), sigmoid),
}

SOFTMAX_TARGETS: dict[str, Callable] = {
    "softmax": lambda g, a: fixed_form_expected_softmax(g, 0, a),
    "softmax-taylor1": lambda g, a: taylor_expected_softmax(g, 0, 1),
    "softmax-taylor2": lambda g, a: taylor_expected_softmax(g, 0, 2),
}


# ---------------------------------------------------------------------------
# manifest and writers


@dataclass(frozen=True)
class RunManifest:
    command: str
    parameters: dict
    seed: int | None
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    library_version: str = __version__

    def deterministic_fields(self) -> dict:
        """Everything except the timestamp; embedded in the data outputs."""
        d = asdict(self)
        del d["timestamp"]
        return d


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def dump_json(obj, path: Path | None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        path.write_text(text, encoding="utf-8")
    return text


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[float]]) -> None:
    # repr gives the shortest string that round-trips a float exactly
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def read_rows(path: Path) -> tuple[list[str], np.ndarray]:
    with path.open(encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(v) for v in row] for row in r], dtype=float)
    return header, data


def summarize(header: Sequence[str], data: np.ndarray, log_domain: bool = False) -> dict:
    """Summary statistics of an error table; a pure function of the CSV contents."""
    col = {name: i for i, name in enumerate(header)}
    rel = data[:, col["rel_error"]]
    approx = data[:, col["approx"]]
    oracle = data[:, col["oracle"]]
    i = int(np.argmax(rel))
    coords = header[: col["approx"]]
    out = {
        "n_cells": int(data.shape[0]),
        "max_rel_error": float(rel[i]),
        "mean_rel_error": math.fsum(rel.tolist()) / rel.size,
        "argmax_cell": {name: float(data[i, col[name]]) for name in coords},
        "max_abs_error": float(np.max(np.abs(approx - oracle))),
        "rel_error_floor": REL_ERROR_FLOOR,
    }
    if log_domain:
        # error after mapping back to the probability scale
        out["max_abs_error_exp"] = float(np.max(np.abs(np.exp(approx) - np.exp(oracle))))
    return out


def summarize_csv(path: Path, target: str) -> dict:
    header, data = read_rows(Path(path))
    return summarize(header, data, GRID_TARGETS[target].log_domain if target in GRID_TARGETS else False)


def _write_outputs(out: Path, payload: dict, manifest: RunManifest) -> None:
    payload["manifest"] = manifest.deterministic_fields()
    dump_json(payload, out)
    dump_json(asdict(manifest), manifest_path(out))


# ---------------------------------------------------------------------------
# commands


def _mc_config(args) -> MCConfig:
    try:
        return MCConfig(args.n, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _parameters(args) -> dict:
    skip = {"func", "out"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_error_map(args) -> int:
    cfg = _mc_config(args)
    if args.mu_steps < 1:
        raise UsageError("--mu-steps must be >= 1")
    if args.sigma_exp_min > args.sigma_exp_max:
        raise UsageError("--sigma-exp-min must not exceed --sigma-exp-max")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    try:
        coeff = SigmoidCoeff(args.a)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    summary_out = out.with_suffix(".summary.json")

    if args.target in SOFTMAX_TARGETS:
        axes = SoftmaxGridAxes.fine() if args.fine else SoftmaxGridAxes.coarse()
        oracle, stderr = softmax_oracle_grid(axes, cfg, workers=args.workers)
        approx = evaluate_softmax_approx(lambda g: SOFTMAX_TARGETS[args.target](g, coeff), axes)
        grid = SoftmaxErrorGrid(axes, approx, oracle, stderr)
        header, log_domain = SOFTMAX_COLUMNS, False
    else:
        target = GRID_TARGETS[args.target]
        mu_axis = np.linspace(args.mu_min, args.mu_max, args.mu_steps)
        sigma_axis = 2.0 ** np.arange(args.sigma_exp_min, args.sigma_exp_max + 1)
        grid = build_error_grid(lambda g: target.approx(g, coeff), target.oracle, mu_axis, sigma_axis, cfg,
                                stat=target.stat, workers=args.workers)
        header, log_domain = GRID_COLUMNS, target.log_domain

    rows = list(grid.rows())
    write_rows(out, header, rows)
    summary = summarize(header, np.array(rows, dtype=float), log_domain)
    manifest = RunManifest("error-map", _parameters(args), args.seed)
    _write_outputs(summary_out, {"schema_version": SCHEMA_VERSION, "target": args.target,
                                 "csv": out.name, "summary": summary}, manifest)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _parse_floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"not a comma-separated list of numbers: {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"expected {n} comma-separated values, got {len(vals)}")
    return vals


def cmd_calibrate(args) -> int:
    cfg = _mc_config(args)
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    try:
        if args.target == "sigmoid":
            true = SigmoidCoeff(args.a)
            data = synthetic_sigmoid_data(true) if args.synthetic else mc_oracle_data("sigmoid", cfg, workers=args.workers)
            fit = fit_sigmoid_coeff(data)
            approx = fixed_form_expected_sigmoid(data.gaussian(), fit.coeffs)
        else:
            true = LogSigmoidCoeffs(*_parse_floats(args.coeffs, 4)) if args.coeffs else DEFAULT_LOG_SIGMOID_COEFFS
            data = (synthetic_log_sigmoid_data(true) if args.synthetic
                    else mc_oracle_data("log-sigmoid", cfg, workers=args.workers))
            fit = fit_log_sigmoid_coeffs(data)
            approx = fixed_form_expected_log_sigmoid(data.gaussian(), fit.coeffs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    payload = {
        "schema_version": SCHEMA_VERSION,
        "target": args.target,
        "oracle": "synthetic" if args.synthetic else "monte-carlo",
        "fit": fit.to_dict(),
        "max_rel_error": float(relative_error(approx, data.values).max()),
    }
    out = Path(args.out)
    _write_outputs(out, payload, RunManifest("calibrate", _parameters(args), args.seed))
    print(json.dumps(payload["fit"], sort_keys=True))
    if not fit.converged:
        print("calibration did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _app_skew_cdf(args) -> dict:
    p = SkewNormalParams(args.t, args.rho, args.mu, args.var)
    sd = math.sqrt(p.sigma)
    z_min = args.z_min if args.z_min is not None else p.mu - 6.0 * sd
    z_max = args.z_max if args.z_max is not None else p.mu + 6.0 * sd
    if args.z_steps < 2 or not z_min < z_max:
        raise UsageError("z-scan needs --z-steps >= 2 and --z-min < --z-max")
    result = {"value": skew_normal_cdf(p, args.z, args.method)}
    if args.out is not None:
        scan = Path(args.out).with_suffix(".zscan.csv")
        zs = np.linspace(z_min, z_max, args.z_steps)
        write_rows(scan, ("z", "cdf"), ((z, skew_normal_cdf(p, z, args.method)) for z in zs))
        result["zscan_csv"] = scan.name
    return result


def _app_bernoulli(args) -> dict:
    b = BernoulliBatch(_parse_floats(args.lambdas))
    g = bernoulli_logsum_matched_gaussian(b)
    return {"value": expected_log_sum_bernoulli(b), "matched_mu": g.mu, "matched_var": g.var}


def _app_expected_abs(args) -> dict:
    return {"value": float(expected_abs(Gaussian1D(args.mu, args.var), args.rho))}


APPS = {"skew-cdf": _app_skew_cdf, "bernoulli-logsum": _app_bernoulli, "expected-abs": _app_expected_abs}


def cmd_app(args) -> int:
    try:
        result = APPS[args.app](args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    payload = {"schema_version": SCHEMA_VERSION, "app": args.app, "result": result}
    if args.out is not None:
        _write_outputs(Path(args.out), payload, RunManifest(f"app {args.app}", _parameters(args), None))
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_mc_flags(p: argparse.ArgumentParser, n_default: int) -> None:
    p.add_argument("--n", type=int, default=n_default, help="Monte-Carlo samples per cell (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="base seed (default %(default)s)")
    p.add_argument("--workers", type=int, default=1, help="worker processes; results do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="sigmoid-moments",
        description="Gaussian moments of sigmoid and softmax maps, checked against Monte Carlo.",
        epilog=EXIT_CODES_HELP, formatter_class=fmt,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    em = sub.add_parser(
        "error-map", epilog=EXIT_CODES_HELP, formatter_class=fmt,
        help="approximation vs Monte-Carlo error grid (CSV + summary JSON)",
        description="Writes OUT (CSV), <OUT stem>.summary.json and its .manifest.json sidecar. "
                    "taylor1/taylor2 are the log-sigmoid expansions; sigmoid-taylor1/2 the sigmoid ones.",
    )
    em.add_argument("target", choices=[*GRID_TARGETS, *SOFTMAX_TARGETS])
    em.add_argument("--mu-min", type=float, default=-10.0)
    em.add_argument("--mu-max", type=float, default=10.0)
    em.add_argument("--mu-steps", type=int, default=41)
    em.add_argument("--sigma-exp-min", type=int, default=-4, help="variance axis starts at 2**this")
    em.add_argument("--sigma-exp-max", type=int, default=8)
    em.add_argument("--fine", action="store_true", help="denser softmax grid")
    em.add_argument("--a", type=float, default=0.368, help="fixed-form variance scale (default %(default)s)")
    _add_mc_flags(em, 1_000_000)
    em.add_argument("-o", "--out", type=Path, required=True)
    em.set_defaults(func=cmd_error_map)

    cal = sub.add_parser(
        "calibrate", epilog=EXIT_CODES_HELP, formatter_class=fmt,
        help="refit fixed-form coefficients (FitResult JSON)",
    )
    cal.add_argument("target", choices=["sigmoid", "log-sigmoid"])
    cal.add_argument("--synthetic", action="store_true",
                     help="fit noise-free data generated by the fixed form itself")
    cal.add_argument("--a", type=float, default=0.368, help="generating a for --synthetic sigmoid")
    cal.add_argument("--coeffs", help="generating a,b,c,d for --synthetic log-sigmoid")
    _add_mc_flags(cal, 1_000_000)
    cal.add_argument("-o", "--out", type=Path, required=True)
    cal.set_defaults(func=cmd_calibrate)

    app = sub.add_parser("app", epilog=EXIT_CODES_HELP, formatter_class=fmt,
                         help="evaluate one application at given parameters")
    apps = app.add_subparsers(dest="app", required=True)
    sk = apps.add_parser("skew-cdf", help="CDF of the sigmoid-times-Gaussian density; -o adds a z-scan CSV")
    sk.add_argument("--t", type=float, required=True)
    sk.add_argument("--rho", type=float, required=True)
    sk.add_argument("--mu", type=float, required=True)
    sk.add_argument("--var", type=float, required=True)
    sk.add_argument("--z", type=float, required=True)
    sk.add_argument("--method", choices=["mixture", "matched", "by-parts-plus", "by-parts-minus"], default="mixture")
    sk.add_argument("--z-min", type=float)
    sk.add_argument("--z-max", type=float)
    sk.add_argument("--z-steps", type=int, default=121)
    bl = apps.add_parser("bernoulli-logsum", help="E[log(1 + sum of Bernoulli variables)]")
    bl.add_argument("--lambdas", required=True, help="comma-separated success probabilities")
    ea = apps.add_parser("expected-abs", help="E|x| for x ~ N(mu, var)")
    ea.add_argument("--mu", type=float, required=True)
    ea.add_argument("--var", type=float, required=True)
    ea.add_argument("--rho", type=float, default=None, help=f"smoothing width (default sqrt(var)/{ABS_RHO_RATIO})")
    for p in (sk, bl, ea):
        p.add_argument("-o", "--out", type=Path, default=None, help="JSON output path")
    app.set_defaults(func=cmd_app)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except EstimationError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    raise SystemExit(main())
