"""Command-line interface.

Subcommands: predict (deterministic limits as JSON), simulate (replication
run, CSVs plus verification verdict), sweep (convergence table over
growing n), hdlss (fixed-n run compared against sampled random limits),
check (exact-identity residuals), kde (density curve from a replications
file), report (render figures from a run directory).

Exit codes: 0 success, 1 verification or identity-check failure, 2
malformed configuration (the message names the offending field). Worker
count defaults to the SPIKELAB_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import Mapping

from . import figures, montecarlo
from .limits import hdlss_limit_sample, predict as predict_limits
from .model import ConfigError, SpikeModel, classify_regime, model_from_config

_RUN_KEYS = {
    "reps",
    "seed",
    "monitored_noise",
    "draws",
    "n_values",
    "d_over_n",
    "threads",
    "out",
    "format",
}


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config {path!r} must be a JSON object")
    return payload


def _split_config(payload: Mapping[str, object]) -> tuple[dict, dict]:
    """Separate the model description from run-level fields.

    A config is either a bare model object or ``{"model": {...}}`` plus
    run fields (reps, seed, ...).
    """
    if "model" in payload:
        model_cfg = payload["model"]
        if not isinstance(model_cfg, dict):
            raise ConfigError("'model' must be a JSON object")
        run_cfg = {k: v for k, v in payload.items() if k != "model"}
        unknown = set(run_cfg) - _RUN_KEYS
        if unknown:
            raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
        return dict(model_cfg), run_cfg
    return dict(payload), {}


def _resolve(flag_value, run_cfg: Mapping[str, object], key: str, default, cast):
    """Flag beats config field beats default."""
    if flag_value is not None:
        return flag_value
    if key in run_cfg:
        try:
            return cast(run_cfg[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config field {key!r}: {exc}") from exc
    return default


def _load_model(args) -> tuple[SpikeModel, dict]:
    model_cfg, run_cfg = _split_config(_load_json(args.config))
    fmt = run_cfg.get("format", "csv")
    if fmt != "csv":
        raise ConfigError(f"format: only 'csv' is supported, got {fmt!r}")
    return model_from_config(model_cfg), run_cfg


def _emit_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _cmd_predict(args) -> int:
    model, _run_cfg = _load_model(args)
    regime = classify_regime(model)
    prediction = predict_limits(model, regime)
    payload = {
        "regime": regime.regime.value,
        "applicable_limits": list(regime.applicable_limits),
        **prediction.to_json_dict(),
    }
    _emit_json(payload, args.out)
    return 0


def _contract_metric(model: SpikeModel, index: int) -> str:
    tier = int(model.spike_tier_numbers()[index - 1])
    mult = model.tiers[tier - 1].multiplicity
    return "angle_vector_deg" if mult == 1 else "angle_subspace_deg"


def _print_verdict(report: montecarlo.VerificationReport) -> None:
    total = len(report.criteria)
    passed = sum(1 for c in report.criteria if c.passed)
    for c in report.criteria:
        if not c.passed:
            print(
                f"FAIL index={c.index} metric={c.metric} "
                f"observed={c.observed:.6g} predicted={c.predicted:.6g} "
                f"tolerance={c.tolerance:g} ({c.mode})"
            )
    print(f"verification: {'pass' if report.passed else 'fail'} ({passed}/{total} criteria)")


def _cmd_simulate(args) -> int:
    model, run_cfg = _load_model(args)
    reps = _resolve(args.reps, run_cfg, "reps", 100, int)
    seed = _resolve(args.seed, run_cfg, "seed", 42, int)
    monitored = _resolve(args.monitored_noise, run_cfg, "monitored_noise", 3, int)
    threads = _resolve(args.threads, run_cfg, "threads", None, int)
    out_dir = _resolve(args.out, run_cfg, "out", ".", str)
    os.makedirs(out_dir, exist_ok=True)

    summary = montecarlo.run_replications(
        model, reps, seed, monitored_noise=monitored, threads=threads
    )
    prediction = predict_limits(model)
    report = montecarlo.verify(summary, prediction)

    curves = {}
    for index in range(1, model.m + 1):
        metric = _contract_metric(model, index)
        samples = [
            getattr(row, metric) for row in summary.rows if row.index == index
        ]
        curves[index] = montecarlo.kde(samples)

    montecarlo.write_replications_csv(summary, os.path.join(out_dir, "replications.csv"))
    montecarlo.write_aggregates_csv(summary, os.path.join(out_dir, "aggregates.csv"), report)
    montecarlo.write_kde_csv(curves, os.path.join(out_dir, "kde.csv"))
    montecarlo.write_pairwise_csv(
        montecarlo.pairwise_stats(summary), os.path.join(out_dir, "pairwise.csv")
    )
    montecarlo.write_verification_json(report, os.path.join(out_dir, "verification.json"))
    if args.figures:
        for path in figures.render_directory(out_dir):
            print(f"wrote {path}")
    _print_verdict(report)
    return 0 if report.passed else 1


def _parse_n_values(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"--n must be a comma-separated integer list: {exc}") from exc
    if not values:
        raise ConfigError("--n must contain at least one sample size")
    return values


def _cmd_sweep(args) -> int:
    model, run_cfg = _load_model(args)
    if args.n is not None:
        n_values = _parse_n_values(args.n)
    elif "n_values" in run_cfg:
        raw = run_cfg["n_values"]
        if not isinstance(raw, list) or not all(isinstance(v, int) for v in raw):
            raise ConfigError("n_values must be a list of integers")
        n_values = raw
    else:
        raise ConfigError("sweep needs --n or the n_values config field")
    d_over_n = _resolve(args.d_over_n, run_cfg, "d_over_n", None, float)
    if d_over_n is None:
        raise ConfigError("sweep needs --d-over-n or the d_over_n config field")
    reps = _resolve(args.reps, run_cfg, "reps", 50, int)
    seed = _resolve(args.seed, run_cfg, "seed", 42, int)
    threads = _resolve(args.threads, run_cfg, "threads", None, int)
    out_dir = _resolve(args.out, run_cfg, "out", ".", str)
    os.makedirs(out_dir, exist_ok=True)

    table = montecarlo.sweep(model, n_values, d_over_n, reps, seed, threads=threads)
    path = os.path.join(out_dir, "convergence.csv")
    montecarlo.write_sweep_csv(table, path)
    print(f"wrote {path}")
    return 0


def _cmd_hdlss(args) -> int:
    model, run_cfg = _load_model(args)
    reps = _resolve(args.reps, run_cfg, "reps", 500, int)
    seed = _resolve(args.seed, run_cfg, "seed", 42, int)
    draws = _resolve(args.draws, run_cfg, "draws", 100_000, int)
    threads = _resolve(args.threads, run_cfg, "threads", None, int)
    out_dir = _resolve(args.out, run_cfg, "out", ".", str)
    os.makedirs(out_dir, exist_ok=True)

    summary = montecarlo.run_replications(
        model, reps, seed, monitored_noise=0, threads=threads, merge_spike_tiers=True
    )
    limit_draws = hdlss_limit_sample(model, draws, seed)
    report = montecarlo.verify(summary, limit_draws)

    montecarlo.write_replications_csv(summary, os.path.join(out_dir, "replications.csv"))
    montecarlo.write_hdlss_draws_csv(limit_draws, os.path.join(out_dir, "hdlss_draws.csv"))
    montecarlo.write_verification_json(report, os.path.join(out_dir, "verification.json"))
    _print_verdict(report)
    return 0 if report.passed else 1


def _cmd_check(args) -> int:
    model, run_cfg = _load_model(args)
    seed = _resolve(args.seed, run_cfg, "seed", 42, int)
    report = montecarlo.identity_check(model, seed, tolerance=args.tolerance)
    for name in sorted(report.residuals):
        print(f"{name}: {report.residuals[name]:.6e}")
    print(
        f"identity check at n={report.n}, d={report.d}, seed={report.seed}: "
        f"{'pass' if report.passed else 'fail'} (tolerance {report.tolerance:g})"
    )
    return 0 if report.passed else 1


def _cmd_kde(args) -> int:
    metric = args.metric
    valid = {"eigenvalue_ratio", "angle_vector_deg", "angle_subspace_deg"}
    if metric not in valid:
        raise ConfigError(f"--metric must be one of {sorted(valid)}, got {metric!r}")
    try:
        with open(args.input, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input!r}: {exc}") from exc
    if not rows or metric not in rows[0]:
        raise ConfigError(f"{args.input!r} has no {metric!r} column")

    samples: dict[int, list[float]] = {}
    for row in rows:
        samples.setdefault(int(row["index"]), []).append(float(row[metric]))
    if args.index is not None:
        if args.index not in samples:
            raise ConfigError(f"index {args.index} not present in {args.input!r}")
        samples = {args.index: samples[args.index]}

    curves = {
        index: montecarlo.kde(vals, bandwidth=args.bandwidth)
        for index, vals in samples.items()
    }
    montecarlo.write_kde_csv(curves, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_report(args) -> int:
    if not os.path.isdir(args.input):
        raise ConfigError(f"--input {args.input!r} is not a directory")
    written = figures.render_directory(args.input, args.out)
    if not written:
        raise ConfigError(f"no renderable CSVs found in {args.input!r}")
    for path in written:
        print(f"wrote {path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikelab",
        description="Simulation and verification toolkit for spiked-covariance eigenstructure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--config", required=True, help="model or run config JSON file")
        return p

    p = with_config(sub.add_parser("predict", help="deterministic limits as JSON"))
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_predict)

    p = with_config(sub.add_parser("simulate", help="replication run with verification"))
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--monitored-noise", dest="monitored_noise", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory (default: current)")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p.set_defaults(func=_cmd_simulate)

    p = with_config(sub.add_parser("sweep", help="convergence table over growing n"))
    p.add_argument("--n", help="comma-separated sample sizes, e.g. 50,200,1000")
    p.add_argument("--d-over-n", dest="d_over_n", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory (default: current)")
    p.set_defaults(func=_cmd_sweep)

    p = with_config(sub.add_parser("hdlss", help="fixed-n run against sampled random limits"))
    p.add_argument("--reps", type=int)
    p.add_argument("--draws", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory (default: current)")
    p.set_defaults(func=_cmd_hdlss)

    p = with_config(sub.add_parser("check", help="exact finite-sample identity residuals"))
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=float, default=1e-7)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("kde", help="density curve from a replications CSV")
    p.add_argument("--input", required=True, help="replications.csv path")
    p.add_argument("--metric", default="angle_vector_deg")
    p.add_argument("--index", type=int, help="restrict to one monitored index")
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--out", default="kde.csv")
    p.set_defaults(func=_cmd_kde)

    p = sub.add_parser("report", help="render figures from a run directory")
    p.add_argument("--input", required=True, help="directory holding run CSVs")
    p.add_argument("--out", help="directory for PNGs (default: alongside the CSVs)")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
