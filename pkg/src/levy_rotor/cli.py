"""Command-line front end.

Exit codes: 0 success, 1 a check failed, 2 configuration error, 3 I/O error,
4 numerical error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    bootstrap_slope,
    default_t_min,
    fit_power_law,
    predicted_variance,
    theoretical_exponent,
)
from .bessel import BesselEvalConfig, bessel_j, bessel_sequence
from .config import RunConfig, load_config
from .engine import (
    EnsembleSamples,
    MomentumDistribution,
    VarianceSeries,
    log_sample_times,
    propagate_master,
    schedule_variance,
    simulate_ensemble,
)
from .errors import CapabilityError, ConfigError, DomainError, LevyRotorError, NumericalError
from .levy import LevyParams, censored_moment, floored_censored_moment, sample_schedule, stream

log = logging.getLogger("levy_rotor")

SERIES_COLUMNS = ("t", "variance", "stderr", "n_trajectories")
BESSEL_CHECK_ARGS = (0.0, 0.5, 1.0, 5.0, 20.0, 50.0)
BESSEL_CHECK_TOL = 1e-9


# --------------------------------------------------------------------------
# writers


def _num(x: float) -> str:
    return repr(float(x))


def series_to_csv(series: VarianceSeries) -> str:
    buf = io.StringIO()
    buf.write(",".join(SERIES_COLUMNS) + "\n")
    for t, v, se in zip(series.times, series.variance, series.stderr):
        buf.write(f"{int(t)},{_num(v)},{_num(se)},{series.n_effective}\n")
    return buf.getvalue()


def series_to_json(series: VarianceSeries) -> str:
    rows = [
        {"t": int(t), "variance": float(v), "stderr": float(se), "n_trajectories": series.n_effective}
        for t, v, se in zip(series.times, series.variance, series.stderr)
    ]
    return json.dumps(rows, indent=1) + "\n"


def read_series(path: str | Path) -> VarianceSeries:
    """Read a series written by ``simulate`` (CSV or JSON, chosen by suffix)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    else:
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != SERIES_COLUMNS:
            raise ConfigError(f"{path}: expected columns {','.join(SERIES_COLUMNS)}")
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{path}: empty series")
    try:
        times = np.array([int(r["t"]) for r in rows])
        var = np.array([float(r["variance"]) for r in rows])
        se = np.array([float(r["stderr"]) for r in rows])
        n = int(rows[0]["n_trajectories"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed series row ({exc})") from exc
    return VarianceSeries(times, var, se, n)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def write_series(out_dir: Path, series: VarianceSeries, fmt: str, stem: str = "series") -> Path:
    if fmt == "json":
        return _write(out_dir / f"{stem}.json", series_to_json(series))
    return _write(out_dir / f"{stem}.csv", series_to_csv(series))


def _plot(path: Path, series: VarianceSeries, fit, title: str) -> Path:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib is not installed; skipping %s", path)
        return path
    matplotlib.rcParams["svg.hashsalt"] = "levy-rotor"
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(series.times, series.variance, "o", ms=3, label="ensemble")
    lo, hi = fit.fit_window
    t = np.geomspace(lo, hi, 50)
    ax.loglog(t, fit.prefactor * t ** fit.slope, "-", label=f"slope {fit.slope:.3f}")
    ax.set_xlabel("t")
    ax.set_ylabel("variance")
    ax.set_title(title)
    ax.legend()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


# --------------------------------------------------------------------------
# commands


def _fit_window(cfg: RunConfig) -> tuple[int, int]:
    t_min = cfg.fit_t_min or default_t_min(cfg.horizon)
    t_max = cfg.fit_t_max or cfg.horizon
    return t_min, t_max


def fit_report(cfg: RunConfig, samples: EnsembleSamples, series: VarianceSeries) -> dict:
    t_min, t_max = _fit_window(cfg)
    fit = fit_power_law(series, t_min, t_max)
    beta = cfg.beta if cfg.kernel_model == "synthetic_beta" else 2.0
    theory = theoretical_exponent(cfg.alpha, beta)
    report = {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "slope_stderr": fit.slope_stderr,
        "residual_max": fit.residual_max,
        "fit_window": list(fit.fit_window),
        "n_points": fit.n_points,
        "theoretical_2c": theory.slope,
        "regime": theory.regime.value,
        "tolerance": cfg.tolerance,
        "pass": bool(abs(fit.slope - theory.slope) <= cfg.tolerance),
    }
    if cfg.bootstrap:
        lo, hi, _ = bootstrap_slope(samples, t_min, t_max, cfg.bootstrap, cfg.master_seed)
        report["band"] = [lo, hi]
    horizon = int(series.times[-1])
    pred = predicted_variance(cfg.alpha, cfg.kappa, horizon,
                              beta if cfg.kernel_model == "synthetic_beta" else None)
    # informational only: the closed form ignores integer flooring
    report["prefactor_ratio"] = float(series.variance[-1] / pred) if pred > 0 else None
    return report


def cmd_simulate(cfg: RunConfig, threads: int | None = None, out_dir: Path | None = None) -> dict:
    ens = cfg.ensemble()
    out_dir = Path(out_dir or cfg.output_dir)
    start = time.perf_counter()
    samples = simulate_ensemble(ens, threads)
    series = samples.series()
    log.info("simulated %d trajectories in %.1f s", ens.n_trajectories, time.perf_counter() - start)
    report = fit_report(cfg, samples, series)
    paths = {
        "series": write_series(out_dir, series, cfg.format),
        "fit": _write(out_dir / "fit.json", _dump_json(report)),
        "manifest": _write(out_dir / "manifest.json", _dump_json(cfg.manifest())),
    }
    if cfg.plot:
        fit = fit_power_law(series, *_fit_window(cfg))
        paths["plot"] = _plot(out_dir / "variance.svg", series, fit, f"alpha={cfg.alpha}")
    return {"report": report, "paths": paths, "series": series}


def cmd_sweep(cfg: RunConfig, threads: int | None = None, out_dir: Path | None = None) -> dict:
    out_dir = Path(out_dir or cfg.output_dir)
    alphas = cfg.alpha_values or [cfg.alpha]
    kappas = cfg.kappa_values or [cfg.kappa]
    betas = cfg.beta_values
    rows = []
    for beta in (betas or [None]):
        for kappa in kappas:
            for alpha in alphas:
                update = {"alpha": alpha, "kappa": kappa,
                          "alpha_values": None, "kappa_values": None, "beta_values": None}
                if beta is not None:
                    update.update(kernel_model="synthetic_beta", beta=beta)
                point = RunConfig(**{**cfg.model_dump(), **update})
                tag = f"alpha{alpha:g}_kappa{kappa:g}" + ("" if beta is None else f"_beta{beta:g}")
                res = cmd_simulate(point, threads, out_dir / tag)
                rep = res["report"]
                band = rep.get("band", [math.nan, math.nan])
                rows.append({
                    "alpha": alpha,
                    "beta": 2.0 if beta is None else beta,
                    "kappa": kappa,
                    "fitted_2c": rep["slope"],
                    "band_low": band[0],
                    "band_high": band[1],
                    "theoretical_2c": rep["theoretical_2c"],
                    "pass": rep["pass"],
                })
    cols = ("alpha", "beta", "kappa", "fitted_2c", "band_low", "band_high", "theoretical_2c", "pass")
    if cfg.format == "json":
        path = _write(out_dir / "summary.json", _dump_json(rows))
    else:
        lines = [",".join(cols)]
        for r in rows:
            lines.append(",".join(
                str(r[c]).lower() if c == "pass" else _num(r[c]) for c in cols))
        path = _write(out_dir / "summary.csv", "\n".join(lines) + "\n")
    _write(out_dir / "manifest.json", _dump_json(cfg.manifest()))
    return {"rows": rows, "summary": path}


def cmd_master(cfg: RunConfig, out_dir: Path | None = None) -> dict:
    """Propagate the master equation along one sampled schedule."""
    out_dir = Path(out_dir or cfg.output_dir)
    if cfg.kernel_model == "bessel" and cfg.q != 1:
        raise ConfigError("the master equation uses the principal-resonance kernel (q = 1)")
    ens = cfg.ensemble()
    schedule = sample_schedule(LevyParams(cfg.alpha, cfg.floor_policy), cfg.horizon,
                               stream(cfg.master_seed, 0), cfg.max_intervals)
    times = [t for t in ens.sample_times if t <= schedule.realized_time]
    snaps = propagate_master(MomentumDistribution.delta(), schedule, cfg.kappa, times,
                             ens.kernel_model, cfg.tail_tol)
    epochs = schedule.epochs
    rows = []
    for t, P in zip(times, snaps):
        done = schedule.intervals[: int(np.searchsorted(epochs, t, side="right"))]
        sv = schedule_variance(type(schedule)(done, max(t, 1)), cfg.kappa, ens.kernel_model)
        var = P.variance()
        rows.append((t, var, sv, abs(var - sv) / sv if sv > 0 else abs(var)))
    cols = ("t", "variance", "schedule_variance", "rel_diff")
    if cfg.format == "json":
        body = _dump_json([dict(zip(cols, r)) for r in rows])
        path = _write(out_dir / "master.json", body)
    else:
        lines = [",".join(cols)] + [f"{r[0]},{_num(r[1])},{_num(r[2])},{_num(r[3])}" for r in rows]
        path = _write(out_dir / "master.csv", "\n".join(lines) + "\n")
    _write(out_dir / "schedule.csv", "T\n" + "".join(f"{int(T)}\n" for T in schedule.intervals))
    _write(out_dir / "manifest.json", _dump_json(cfg.manifest()))
    worst = max((r[3] for r in rows), default=0.0)
    return {"rows": rows, "path": path, "max_rel_diff": worst, "n_intervals": len(schedule)}


def cmd_theory(alpha: float, beta: float, t_min: float, t_max: float, points: int = 7,
               kappa: float = 1.0) -> dict:
    """Closed-form exponent plus the predicted variance over a log-spaced t range."""
    pred = theoretical_exponent(alpha, beta)
    params = LevyParams(alpha)
    ts = np.unique(np.rint(np.geomspace(t_min, t_max, points)).astype(np.int64))
    rows = []
    for t in ts:
        t = int(t)
        m1 = censored_moment(params, 1.0, t)
        mb = censored_moment(params, beta, t)
        rows.append({
            "t": t,
            "predicted_variance": predicted_variance(alpha, kappa, t, None if beta == 2.0 else beta),
            "mean_T": m1,
            "moment_T_beta": mb,
            # integer waiting times: quantifies the flooring bias of the closed form
            "floored_mean_T": floored_censored_moment(params, 1.0, t),
            "floored_moment_T_beta": floored_censored_moment(params, beta, t),
        })
    return {
        "alpha": alpha,
        "beta": beta,
        "c": pred.c,
        "two_c": pred.slope,
        "regime": pred.regime.value,
        "rows": rows,
    }


def cmd_fit(path: str | Path, t_min: float, t_max: float | None = None) -> dict:
    series = read_series(path)
    fit = fit_power_law(series, t_min, t_max)
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "slope_stderr": fit.slope_stderr,
        "residual_max": fit.residual_max,
        "fit_window": list(fit.fit_window),
        "n_points": fit.n_points,
    }


def cmd_bessel_check(max_order: int = 100_000) -> tuple[list[dict], bool]:
    """Sum rules ``sum J_n^2 = 1`` and ``sum n^2 J_n^2 = x^2/2`` on a few arguments."""
    config = BesselEvalConfig(max_order=max_order)
    rows = []
    ok = True
    for x in BESSEL_CHECK_ARGS:
        N = int(math.ceil(x)) + 40
        # goes through the order-limited public entry point first
        bessel_j(N, x, config)
        j = bessel_sequence(x, N)
        sq = j * j
        n = np.arange(N + 1, dtype=float)
        norm = sq[0] + 2.0 * sq[1:].sum()
        second = 2.0 * float(n[1:] ** 2 @ sq[1:])
        norm_dev = abs(norm - 1.0)
        if x == 0.0:
            second_dev = abs(second)
            high_orders = float(np.max(np.abs(j[1:])))
        else:
            second_dev = abs(second - x * x / 2) / (x * x / 2)
            high_orders = None
        passed = norm_dev < BESSEL_CHECK_TOL and second_dev < BESSEL_CHECK_TOL
        if high_orders is not None:
            passed = passed and high_orders == 0.0
        ok &= passed
        rows.append({"x": x, "orders": N, "norm_dev": norm_dev,
                     "second_moment_dev": second_dev, "pass": passed})
    return rows, ok


# --------------------------------------------------------------------------
# argument parsing


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--engine", choices=("kernel", "wavefunction"))
    parser.add_argument("--threads", type=int,
                        help="worker threads (default: $LEVY_ROTOR_THREADS or 1)")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levy-rotor", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one ensemble and fit its exponent")
    _common(p)
    p.add_argument("--plot", action="store_true", help="also write variance.svg")

    p = sub.add_parser("sweep", help="run ensembles over alpha/kappa/beta lists")
    _common(p)

    p = sub.add_parser("master", help="propagate the master equation on one schedule")
    _common(p)

    p = sub.add_parser("theory", help="closed-form exponent and predicted variance")
    _common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--kappa", type=float)
    p.add_argument("--t-min", type=float, default=1e3)
    p.add_argument("--t-max", type=float, default=1e6)
    p.add_argument("--points", type=int, default=7)

    p = sub.add_parser("fit", help="fit a power law to a series file")
    _common(p)
    p.add_argument("input", help="series CSV or JSON")
    p.add_argument("--t-min", type=float, required=True)
    p.add_argument("--t-max", type=float)

    p = sub.add_parser("bessel-check", help="verify Bessel sum rules")
    _common(p)
    p.add_argument("--max-order", type=int, default=100_000)
    return parser


def _load(args) -> RunConfig:
    overrides = {
        "master_seed": args.seed,
        "output_dir": args.out,
        "format": args.format,
        "engine": args.engine,
    }
    if getattr(args, "plot", False):
        overrides["plot"] = True
    return load_config(args.config, **overrides)


def _print_table(rows: list[dict], stream_=None) -> None:
    stream_ = stream_ or sys.stdout
    if not rows:
        return
    cols = list(rows[0])
    print(",".join(cols), file=stream_)
    for r in rows:
        print(",".join(_num(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols),
              file=stream_)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.command == "simulate":
            res = cmd_simulate(_load(args), args.threads)
            print(_dump_json(res["report"]), end="")
            return 0
        if args.command == "sweep":
            res = cmd_sweep(_load(args), args.threads)
            print(Path(res["summary"]).read_text(), end="")
            return 0
        if args.command == "master":
            res = cmd_master(_load(args))
            print(f"intervals={res['n_intervals']} max_rel_diff={res['max_rel_diff']:.3e}")
            return 0
        if args.command == "theory":
            cfg = _load(args)
            alpha = args.alpha if args.alpha is not None else cfg.alpha
            kappa = args.kappa if args.kappa is not None else cfg.kappa
            try:
                res = cmd_theory(alpha, args.beta, args.t_min, args.t_max, args.points, kappa)
            except DomainError as exc:
                raise ConfigError(str(exc)) from exc
            if (args.format or cfg.format) == "json":
                text = _dump_json(res)
            else:
                head = (f"# alpha={res['alpha']} beta={res['beta']} c={res['c']!r} "
                        f"2c={res['two_c']!r} regime={res['regime']}\n")
                buf = io.StringIO()
                _print_table(res["rows"], buf)
                text = head + buf.getvalue()
            if args.out:
                suffix = "json" if (args.format or cfg.format) == "json" else "csv"
                _write(Path(args.out) / f"theory.{suffix}", text)
            print(text, end="")
            return 0
        if args.command == "fit":
            res = cmd_fit(args.input, args.t_min, args.t_max)
            text = _dump_json(res)
            if args.out:
                _write(Path(args.out) / "fit.json", text)
            print(text, end="")
            return 0
        if args.command == "bessel-check":
            rows, ok = cmd_bessel_check(args.max_order)
            _print_table(rows)
            return 0 if ok else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, CapabilityError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except LevyRotorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 2


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
