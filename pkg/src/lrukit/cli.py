"""Command-line surface: subcommands over the experiment library.

Every run resolves one configuration (defaults ← optional JSON file ←
flag overrides), executes a single subcommand, and writes two artifacts
into the configured output directory::

    <output_dir>/<subcommand>-<seed>.csv    tabular results
    <output_dir>/<subcommand>-<seed>.json   summary + resolved config

Exit codes: 0 success, 1 validation/usage error, 2 numerical failure
(divergence, NaN results, or a tolerance gate not met).  Unknown flags
of the form ``--section.key value`` are treated as dotted-path overrides
into the configuration document (e.g. ``--ring.r_max 0.99``); precedence
is flags > config file > built-in defaults.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .config import (
    ConfigError,
    RunConfig,
    build_config,
    load_config_file,
    parse_override_value,
)
from .experiments import (
    CONV_LR_GRID,
    PowersTaskConfig,
    bench_scan,
    conv_rnn_grid,
    gain_formula,
    gain_monte_carlo,
    impulse_report,
    leakage_demo,
    powers_comparison,
    powers_task_run,
    spectrum_report,
    zoh_report,
)
from .gradients import finite_difference_check
from .initializers import sample_ring
from .model import ModelParams, model_backward, model_forward, model_init
from .recurrence import affine_scan
from .reporting import ExperimentReport
from .seeding import make_generator, split
from .training import DivergenceError

__all__ = ["main"]

_SUBCOMMANDS = (
    "spectrum",
    "gain",
    "scan-check",
    "bench-scan",
    "leakage",
    "impulse",
    "train-conv",
    "train-powers",
    "grad-check",
    "zoh-compare",
)


class UsageError(Exception):
    """Bad invocation or invalid configuration → exit code 1."""


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit(2)."""

    def error(self, message: str) -> None:  # noqa: D401 - argparse hook
        raise UsageError(message)


def _float_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}")
    if not values:
        raise UsageError(f"expected a non-empty list, got {text!r}")
    return values


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}")
    if not values:
        raise UsageError(f"expected a non-empty list, got {text!r}")
    return values


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--output-dir", default=None, help="artifact directory")
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help="global thread cap (falls back to env LRU_THREADS, then 1)",
    )

    parser = _Parser(prog="lrukit", description=__doc__)
    subs = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    p = subs.add_parser("spectrum", parents=[common], help="eigenvalue spectrum report")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--ring", action="store_true", help="ring sampler (default)")
    group.add_argument("--dense", action="store_true", help="dense Gaussian matrix")
    p.add_argument("--n", type=int, default=None, help="sample count / matrix size")
    p.add_argument("--phase-bins", type=int, default=16)

    p = subs.add_parser("gain", parents=[common], help="forward-pass gain: MC vs closed form")
    p.add_argument("--r-min", type=float, default=None)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--n", type=int, default=500, help="state dimension")
    p.add_argument("--len", type=int, default=10_000, dest="length")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument(
        "--input-mode", choices=("white_noise", "constant"), default="white_noise"
    )

    p = subs.add_parser("scan-check", parents=[common], help="parallel vs sequential scan")
    p.add_argument("--len", type=int, default=257, dest="length")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--tol", type=float, default=1e-10)

    p = subs.add_parser("bench-scan", parents=[common], help="scan timing benchmark")
    p.add_argument("--lengths", type=_int_list, default=(1, 4096, 65_536))
    p.add_argument("--threads-list", type=_int_list, default=(1, 8))
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--batch", type=int, default=1)

    p = subs.add_parser("leakage", parents=[common], help="activation spectral leakage")
    p.add_argument("--freq", type=int, default=8)
    p.add_argument("--len", type=int, default=256, dest="length")
    p.add_argument("--activation", choices=("relu", "linear"), default="relu")

    p = subs.add_parser("impulse", parents=[common], help="impulse response of one layer")
    p.add_argument("--len", type=int, default=128, dest="length")
    p.add_argument("--state-dim", type=int, default=8)

    p = subs.add_parser("train-conv", parents=[common], help="linear vs tanh RNN grid")
    p.add_argument("--lrs", type=_float_list, default=CONV_LR_GRID)
    p.add_argument(
        "--seeds",
        type=_int_list,
        default=None,
        help="comma-separated; default auto-selects near-stable initializations",
    )
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--record-every", type=int, default=100)

    p = subs.add_parser("train-powers", parents=[common], help="eigenvalue-power task")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--nu-star", type=float, default=0.005)
    p.add_argument("--theta-star", type=float, default=0.45 * np.pi)
    p.add_argument(
        "--parameterization", choices=("standard", "exponential"), default="exponential"
    )
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--phase-offset", type=float, default=0.3)
    p.add_argument(
        "--compare",
        action="store_true",
        help="run the standard-vs-exponential comparison over target phases",
    )

    p = subs.add_parser("grad-check", parents=[common], help="finite-difference audit")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--len", type=int, default=8, dest="length")
    p.add_argument("--batch", type=int, default=2)

    p = subs.add_parser("zoh-compare", parents=[common], help="ZOH vs Euler discretization")
    p.add_argument("--a-re", type=float, default=-0.5)
    p.add_argument("--a-im", type=float, default=3.0)
    p.add_argument("--deltas", type=_float_list, default=(0.01, 0.03, 0.1, 0.3, 1.0, 3.0))

    return parser


def _collect_overrides(extras: list[str]) -> dict[str, Any]:
    """Turn leftover ``--section.key value`` tokens into override pairs."""
    overrides: dict[str, Any] = {}
    i = 0
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--"):
            raise UsageError(f"unexpected argument {token!r}")
        body = token[2:]
        if "=" in body:
            key, raw = body.split("=", 1)
            i += 1
        else:
            key = body
            if i + 1 >= len(extras):
                raise UsageError(f"override {token!r} is missing a value")
            raw = extras[i + 1]
            i += 2
        if "." not in key:
            raise UsageError(f"unknown option --{key}")
        overrides[key] = parse_override_value(raw)
    return overrides


def _resolve_threads(flag_value: int | None) -> int | None:
    """Thread cap: --threads flag, else LRU_THREADS env, else uncapped."""
    if flag_value is not None:
        if flag_value < 1:
            raise UsageError(f"--threads must be ≥ 1, got {flag_value}")
        return flag_value
    env = os.environ.get("LRU_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise UsageError(f"LRU_THREADS must be an integer, got {env!r}")
        if value < 1:
            raise UsageError(f"LRU_THREADS must be ≥ 1, got {value}")
        return value
    return None


def _all_finite(values: Any) -> bool:
    if isinstance(values, dict):
        return all(_all_finite(v) for v in values.values())
    if isinstance(values, (list, tuple)):
        return all(_all_finite(v) for v in values)
    if isinstance(values, (int, float, np.generic)):
        return bool(np.isfinite(values))
    return True


# ----------------------------------------------------------------------------
# Subcommand handlers.  Each returns (report, failure_message_or_None);
# artifacts are written either way, then the failure decides exit code 2.
# ----------------------------------------------------------------------------


def _cmd_spectrum(args, cfg: RunConfig, threads, seed: int):
    mode = "dense" if args.dense else "ring"
    n = args.n if args.n is not None else (256 if mode == "dense" else 4096)
    report = spectrum_report(
        mode, n, seed=seed, ring=cfg.ring, phase_bins=args.phase_bins
    )
    failure = None if _all_finite(report.metrics) else "non-finite spectrum metrics"
    return report, failure


def _cmd_gain(args, cfg: RunConfig, threads, seed: int):
    r_min = cfg.ring.r_min if args.r_min is None else args.r_min
    r_max = cfg.ring.r_max if args.r_max is None else args.r_max
    result = gain_monte_carlo(
        r_min,
        r_max,
        n=args.n,
        length=args.length,
        input_mode=args.input_mode,
        trials=args.trials,
        rng=make_generator(seed),
    )
    rows = [
        {"run": i, "gain_mc": g, "gain_formula": result.closed_form}
        for i, g in enumerate(result.gains)
    ]
    rel_gap = abs(result.monte_carlo - result.closed_form) / result.closed_form
    report = ExperimentReport(
        name="gain",
        metrics={
            "closed_form": result.closed_form,
            "monte_carlo_mean": result.monte_carlo,
            "mc_p5": result.mc_quantiles[0],
            "mc_p95": result.mc_quantiles[1],
            "relative_gap": rel_gap,
            "r_min": r_min,
            "r_max": r_max,
            "n": result.n,
            "length": result.length,
            "input_mode": result.input_mode,
            "trials": result.trials,
        },
        rows=rows,
        seed=seed,
        columns=["run", "gain_mc", "gain_formula"],
    )
    failure = None if _all_finite(report.metrics) else "non-finite gain estimate"
    return report, failure


def _cmd_scan_check(args, cfg: RunConfig, threads, seed: int):
    if args.length < 1:
        raise UsageError(f"--len must be ≥ 1, got {args.length}")
    if args.n < 1 or args.batch < 1:
        raise UsageError("--n and --batch must be ≥ 1")
    rng = make_generator(seed)
    lam_rng, drive_rng = split(rng, 2)
    nu, theta = sample_ring(cfg.ring, args.n, lam_rng)
    lam = np.exp(-nu + 1j * theta)
    shape = (args.batch, args.length, args.n)
    b_seq = drive_rng.standard_normal(shape) + 1j * drive_rng.standard_normal(shape)
    parallel = affine_scan(lam, b_seq, mode="parallel", threads=threads or 1)
    sequential = affine_scan(lam, b_seq, mode="sequential")
    scale = max(float(np.abs(sequential).max()), 1e-300)
    max_rel = float(np.abs(parallel - sequential).max()) / scale
    report = ExperimentReport(
        name="scan-check",
        metrics={
            "max_rel_difference": max_rel,
            "tolerance": args.tol,
            "length": args.length,
            "state_dim": args.n,
            "batch": args.batch,
            "within_tolerance": bool(max_rel <= args.tol),
        },
        rows=[
            {
                "length": args.length,
                "state_dim": args.n,
                "batch": args.batch,
                "max_rel_difference": max_rel,
            }
        ],
        seed=seed,
        columns=["length", "state_dim", "batch", "max_rel_difference"],
    )
    if not np.isfinite(max_rel):
        return report, "scan produced non-finite states"
    if max_rel > args.tol:
        return report, (
            f"parallel/sequential disagreement {max_rel:.3e} exceeds "
            f"tolerance {args.tol:.1e}"
        )
    return report, None


def _cmd_bench_scan(args, cfg: RunConfig, threads, seed: int):
    thread_counts = args.threads_list
    if threads is not None:
        thread_counts = tuple(
            dict.fromkeys(min(t, threads) for t in thread_counts)
        )
    report = bench_scan(
        args.lengths,
        thread_counts,
        n=args.n,
        batch=args.batch,
        reps=args.reps,
        seed=seed,
    )
    return report, None


def _cmd_leakage(args, cfg: RunConfig, threads, seed: int):
    before, after, ratio = leakage_demo(args.freq, args.length, args.activation)
    rows = [
        {
            "bin": j,
            "freq": float(before.freqs[j]),
            "power_before": float(before.power[j]),
            "power_after": float(after.power[j]),
        }
        for j in range(len(before.power))
    ]
    report = ExperimentReport(
        name="leakage",
        metrics={
            "off_band_ratio": ratio,
            "tone_freq": args.freq,
            "length": args.length,
            "activation": args.activation,
        },
        rows=rows,
        seed=seed,
        columns=["bin", "freq", "power_before", "power_after"],
    )
    failure = None if np.isfinite(ratio) else "non-finite leakage ratio"
    return report, failure


def _cmd_impulse(args, cfg: RunConfig, threads, seed: int):
    report = impulse_report(
        cfg.ring, state_dim=args.state_dim, length=args.length, seed=seed
    )
    failure = None if _all_finite(report.metrics) else "non-finite impulse metrics"
    return report, failure


def _cmd_train_conv(args, cfg: RunConfig, threads, seed: int):
    report = conv_rnn_grid(
        lrs=args.lrs,
        seeds=args.seeds,
        steps=args.steps,
        n_hidden=args.hidden,
        record_every=args.record_every,
    )
    report.seed = seed
    finals = report.metrics["final_loss_per_lr"]
    failure = None
    if not _all_finite(finals):
        failure = "at least one run diverged (non-finite final loss)"
    return report, failure


def _cmd_train_powers(args, cfg: RunConfig, threads, seed: int):
    task = PowersTaskConfig(
        k=args.k,
        nu_star=args.nu_star,
        theta_star=args.theta_star,
        parameterization=args.parameterization,
        iterations=args.iterations,
        lr=args.lr,
        phase_offset=args.phase_offset,
    )
    if args.compare:
        report = powers_comparison(base=task)
        report.seed = seed
        failure = None
        return report, failure
    report = powers_task_run(task, seed=seed)
    final = report.metrics["final_loss"]
    failure = None if np.isfinite(final) else "powers run diverged"
    return report, failure


def _cmd_grad_check(args, cfg: RunConfig, threads, seed: int):
    rng = make_generator(seed)
    init_rng, data_rng = split(rng, 2)
    params = model_init(cfg.model, init_rng)
    u = data_rng.standard_normal((args.batch, args.length, cfg.model.in_features))
    targets = data_rng.standard_normal((args.batch, cfg.model.out_features))

    def closure(flat: dict[str, np.ndarray]) -> tuple[float, dict[str, np.ndarray]]:
        p = ModelParams.from_dict(flat)
        out, cache = model_forward(
            cfg.model, p, u, mode="sequential", return_cache=True
        )
        diff = out - targets
        loss = float(np.mean(diff * diff))
        d_out = 2.0 * diff / diff.size
        grads = model_backward(cfg.model, p, cache, d_out)
        return loss, grads

    fd = finite_difference_check(closure, params.to_dict(), h=args.h)
    rows = [
        {"param": name, "rel_error": err}
        for name, err in sorted(fd.per_param.items())
    ]
    report = ExperimentReport(
        name="grad-check",
        metrics={
            "max_rel_error": fd.max_rel_error,
            "worst_param": fd.worst_param,
            "h": fd.h,
            "tolerance": args.tol,
            "passed": bool(fd.passed(args.tol)),
        },
        rows=rows,
        seed=seed,
        columns=["param", "rel_error"],
    )
    if not fd.passed(args.tol):
        return report, (
            f"gradient check failed: max relative error {fd.max_rel_error:.3e} "
            f"(worst: {fd.worst_param}) exceeds {args.tol:.1e}"
        )
    return report, None


def _cmd_zoh_compare(args, cfg: RunConfig, threads, seed: int):
    report = zoh_report(a_re=args.a_re, a_im=args.a_im, deltas=args.deltas, seed=seed)
    failure = None if _all_finite(report.metrics) else "non-finite discretization report"
    return report, failure


_HANDLERS: dict[str, Callable] = {
    "spectrum": _cmd_spectrum,
    "gain": _cmd_gain,
    "scan-check": _cmd_scan_check,
    "bench-scan": _cmd_bench_scan,
    "leakage": _cmd_leakage,
    "impulse": _cmd_impulse,
    "train-conv": _cmd_train_conv,
    "train-powers": _cmd_train_powers,
    "grad-check": _cmd_grad_check,
    "zoh-compare": _cmd_zoh_compare,
}


def _effective_args(args: argparse.Namespace) -> dict[str, Any]:
    skip = {"subcommand", "config", "seed", "output_dir", "threads"}
    return {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in skip
    }


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
        if args.subcommand is None:
            raise UsageError("a subcommand is required (see --help)")
        overrides = _collect_overrides(extras)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.output_dir is not None:
            overrides["output_dir"] = args.output_dir
        file_data = load_config_file(args.config) if args.config else None
        cfg = build_config(file_data, overrides)
        threads = _resolve_threads(args.threads)

        report, failure = _HANDLERS[args.subcommand](args, cfg, threads, cfg.seed)
        report.config = {
            "run": cfg.echo(),
            "subcommand": args.subcommand,
            "effective": _effective_args(args),
            "threads": threads,
        }
        out_dir = Path(cfg.output_dir)
        base = f"{args.subcommand}-{cfg.seed}"
        csv_path = report.write_csv(out_dir / f"{base}.csv")
        json_path = report.write_json(out_dir / f"{base}.json")
        print(csv_path)
        print(json_path)
        if failure is not None:
            print(f"numerical failure: {failure}", file=sys.stderr)
            return 2
        return 0
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
