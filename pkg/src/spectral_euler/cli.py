"""Command-line surface: sample, evolve, check, gibbs partition, lattice info.

Exit codes: 0 success, 1 I/O failure, 2 invalid flags or parameters,
3 a trajectory tripped the overflow guard, 4 check-suite failures (including
refusal to consume files whose manifest digest mismatches).

All data files are plain CSV with round-trip float formatting; rerunning a
command with identical configuration and seed reproduces them byte for byte
at any worker count.  The default output directory honours the
SPECTRAL_EULER_OUT environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DigestMismatchError, OverflowGuardError, SpectralEulerError
from .measures import (
    MeasureSpec,
    energy_enstrophy_batch,
    truncated_partition_function,
    white_noise_batch,
)
from .observables import VarianceSummary, renormalized_energy_rows, stationarity_test
from .rng import RandomSource
from .runner import (
    FieldDumpRecorder,
    RunConfig,
    default_out_dir,
    finalize_manifest,
    run_ensemble,
    start_manifest,
    verify_manifest,
    write_summary_csv,
    write_trajectories_csv,
)
from .spectral import cached_lattice, write_field_batch_csv
from .suites import SUITES

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_OVERFLOW = 3
EXIT_CHECK_FAILED = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectral-euler",
        description="Spectral Galerkin simulation of the stochastic 2D Euler equation",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sample = sub.add_parser("sample", help="draw measure samples to CSV")
    p_sample.add_argument("--measure", choices=("white", "gibbs"), required=True)
    p_sample.add_argument("--beta", type=float, default=0.0)
    p_sample.add_argument("--N", type=int, required=True, dest="n_max")
    p_sample.add_argument("--count", type=int, required=True)
    p_sample.add_argument("--seed", type=int, required=True)
    p_sample.add_argument("--stream", type=int, default=0)
    p_sample.add_argument("--out", type=str, default=None)

    p_evolve = sub.add_parser("evolve", help="run an ensemble of SDE trajectories")
    p_evolve.add_argument("--config", type=str, default=None, help="JSON config; flags win")
    p_evolve.add_argument("--N", type=int, default=None, dest="n_max")
    for flag, kind in (
        ("--alpha", float), ("--beta-init", float), ("--dt", float),
        ("--t-final", float), ("--save-every", float), ("--ensemble-size", int),
        ("--seed", int), ("--wick-cutoff", float), ("--workers", int),
        ("--save-samples", int),
    ):
        p_evolve.add_argument(flag, type=kind, default=None)
    p_evolve.add_argument("--scheme", choices=("explicit-rk4", "em", "ou-split"), default=None)
    p_evolve.add_argument("--density-init", type=str, default=None, help="JSON descriptor")
    p_evolve.add_argument("--out", type=str, default=None)

    p_check = sub.add_parser("check", help="run a named diagnostics suite")
    p_check.add_argument("--suite", choices=sorted(SUITES), required=True)
    p_check.add_argument("--N", type=int, default=None, dest="n_max")
    p_check.add_argument("--alpha", type=float, default=None)
    p_check.add_argument("--beta", type=float, default=None)
    p_check.add_argument("--T", type=float, default=None, dest="t_final")
    p_check.add_argument("--dt", type=float, default=None)
    p_check.add_argument("--trials", type=int, default=None)
    p_check.add_argument("--ensemble", type=int, default=None)
    p_check.add_argument("--samples", type=int, default=None)
    p_check.add_argument("--seed", type=int, default=None)
    p_check.add_argument("--scheme", type=str, default=None)
    p_check.add_argument("--run-dir", type=str, default=None,
                         help="stationarity only: consume an existing evolve run")
    p_check.add_argument("--out", type=str, default=None)

    p_gibbs = sub.add_parser("gibbs", help="Gibbs measure utilities")
    gibbs_sub = p_gibbs.add_subparsers(dest="gibbs_command", required=True)
    p_part = gibbs_sub.add_parser("partition", help="analytic vs Monte Carlo Z")
    p_part.add_argument("--beta", type=float, required=True)
    p_part.add_argument("--K", type=float, required=True, dest="cutoff")
    p_part.add_argument("--samples", type=int, default=200_000)
    p_part.add_argument("--seed", type=int, default=0)

    p_lattice = sub.add_parser("lattice", help="lattice utilities")
    lattice_sub = p_lattice.add_subparsers(dest="lattice_command", required=True)
    p_info = lattice_sub.add_parser("info", help="print lattice cardinalities")
    p_info.add_argument("--N", type=int, required=True, dest="n_max")

    return parser


def _out_dir(arg: str | None) -> Path:
    return Path(arg if arg is not None else default_out_dir())


def cmd_sample(args) -> int:
    try:
        lattice = cached_lattice(args.n_max)
        gen = RandomSource(args.seed, args.stream).generator()
        if args.count < 1:
            raise ValueError("count must be >= 1")
        if args.measure == "white":
            batch = white_noise_batch(lattice, gen, args.count)
            config = {"measure": "white", "beta": 0.0, "N": args.n_max}
        else:
            spec = MeasureSpec(beta=args.beta, n_max=args.n_max)
            batch = energy_enstrophy_batch(spec, lattice, gen, args.count)
            config = {"measure": "gibbs", "beta": args.beta, "N": args.n_max}
        config.update({"count": args.count, "seed": args.seed, "stream": args.stream})
    except (SpectralEulerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        out = _out_dir(args.out)
        manifest = start_manifest("sample", config, out)
        path = out / "samples.csv"
        with open(path, "w") as fh:
            write_field_batch_csv(lattice, batch, fh)
        finalize_manifest(manifest, out, [path])
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {args.count} samples to {path}")
    return EXIT_OK


_EVOLVE_DEFAULTS = {
    "n_max": 4, "alpha": 0.0, "beta_init": 0.0, "dt": 1e-3, "t_final": 1.0,
    "save_every": 0.5, "ensemble_size": 64, "scheme": "ou-split", "seed": 0,
    "wick_cutoff": 1.0, "workers": 1, "save_samples": 4,
}

_EVOLVE_KEYS = {
    "n_max": "n_max", "alpha": "alpha", "beta_init": "beta_init", "dt": "dt",
    "t_final": "t_final", "save_every": "save_every", "ensemble_size": "ensemble_size",
    "scheme": "scheme", "seed": "seed", "wick_cutoff": "wick_cutoff",
    "workers": "workers", "save_samples": "save_samples", "density_init": "density_init",
    "out_dir": "out_dir",
}


def _evolve_config(args) -> RunConfig:
    settings: dict = {}
    if args.config is not None:
        with open(args.config) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(_EVOLVE_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        settings.update(loaded)
    flag_values = {
        "n_max": args.n_max, "alpha": args.alpha, "beta_init": args.beta_init,
        "dt": args.dt, "t_final": args.t_final, "save_every": args.save_every,
        "ensemble_size": args.ensemble_size, "scheme": args.scheme, "seed": args.seed,
        "wick_cutoff": args.wick_cutoff, "workers": args.workers,
        "save_samples": args.save_samples,
        "density_init": json.loads(args.density_init) if args.density_init else None,
        "out_dir": args.out,
    }
    for key, value in flag_values.items():
        if value is not None:
            settings[key] = value
    for key, value in _EVOLVE_DEFAULTS.items():
        settings.setdefault(key, value)
    settings.setdefault("out_dir", default_out_dir())
    config = RunConfig(**settings)
    config.validate()
    return config


def cmd_evolve(args) -> int:
    try:
        config = _evolve_config(args)
    except (SpectralEulerError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(config.out_dir)
    try:
        manifest = start_manifest("evolve", config.to_json_dict(), out)
        recorders = {"fields": FieldDumpRecorder(config.save_samples)}
        result = run_ensemble(config, extra_recorders=recorders)
        lattice = cached_lattice(config.n_max)
        files = []
        summary_path = out / "summary.csv"
        write_summary_csv(summary_path, result)
        files.append(summary_path)
        traj_path = out / "trajectories.csv"
        write_trajectories_csv(traj_path, result, lattice)
        if traj_path.exists():
            files.append(traj_path)
        status = "overflow" if result.overflow else "complete"
        finalize_manifest(manifest, out, files, status=status)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    if result.overflow:
        print(f"overflow guard tripped: {result.overflow_message}", file=sys.stderr)
        print("partial outputs flagged in manifest", file=sys.stderr)
        return EXIT_OVERFLOW
    print(f"evolved {config.ensemble_size} trajectories to t={config.t_final}; "
          f"summary at {summary_path}")
    return EXIT_OK


def read_variance_summary(path: Path) -> VarianceSummary:
    """Rebuild the per-mode variance table from a summary.csv."""
    times: list[float] = []
    per_time: dict[float, dict[tuple[int, int], tuple[float, float]]] = {}
    count = 0
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t,observable,mean,stderr,count":
            raise SpectralEulerError(f"unexpected summary header {header!r}")
        for line in fh:
            t_s, name, mean_s, se_s, count_s = line.strip().split(",")
            if not name.startswith("mode_var:"):
                continue
            _, kx_s, ky_s = name.split(":")
            t = float(t_s)
            per_time.setdefault(t, {})[(int(kx_s), int(ky_s))] = (float(mean_s), float(se_s))
            count = int(count_s)
    if not per_time:
        raise SpectralEulerError("summary contains no mode variance rows")
    times = sorted(per_time)
    modes = tuple(sorted(per_time[times[0]]))
    mean_sq = np.array([[per_time[t][m][0] for m in modes] for t in times])
    stderr = np.array([[per_time[t][m][1] for m in modes] for t in times])
    return VarianceSummary(
        times=np.array(times), modes=modes, mean_sq=mean_sq, stderr=stderr, count=count
    )


def cmd_check(args) -> int:
    suite_name = args.suite
    out = _out_dir(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        if suite_name == "stationarity" and args.run_dir is not None:
            report = _stationarity_from_run_dir(args)
        else:
            kwargs = _suite_kwargs(args)
            report = SUITES[suite_name](**kwargs)
    except DigestMismatchError as exc:
        print(f"check refused: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (SpectralEulerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    path = out / f"check_{suite_name}.csv"
    try:
        report.write_csv(path)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    if report.passed:
        print(f"suite {suite_name}: PASS ({len(report.rows)} assertions); report at {path}")
        return EXIT_OK
    print(f"suite {suite_name}: FAIL; report at {path}", file=sys.stderr)
    for row in report.failures():
        print(f"  FAIL {row.estimator} t={row.t} value={row.value:.6g} "
              f"threshold={row.threshold:.6g}", file=sys.stderr)
    return EXIT_CHECK_FAILED


def _stationarity_from_run_dir(args):
    from .suites import ReportRow, SuiteReport

    run_dir = Path(args.run_dir)
    problems = verify_manifest(run_dir)
    if problems:
        raise DigestMismatchError(
            "refusing to consume run directory; digest problems: " + "; ".join(problems)
        )
    with open(run_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    beta = args.beta if args.beta is not None else manifest["config"].get("beta_init", 0.0)
    n_max = manifest["config"]["n_max"]
    summary = read_variance_summary(run_dir / "summary.csv")
    reference = MeasureSpec(beta=beta, n_max=n_max)
    report = stationarity_test(summary, reference)
    rows = [
        ReportRow(r.t, r.mode, "mode_variance_z", abs(r.z_score), report.threshold,
                  abs(r.z_score) < report.threshold)
        for r in report.rows
    ]
    return SuiteReport("stationarity", rows)


def _suite_kwargs(args) -> dict:
    """Translate generic check flags into per-suite keyword arguments."""
    table = {
        "drift": {"trials": "fields_per_n", "seed": "seed"},
        "conservation": {"n_max": "n_max", "t_final": "t_final", "dt": "dt", "seed": "seed"},
        "second-moment": {"alpha": "alpha", "n_max": "n_max", "ensemble": "ensemble",
                          "dt": "dt", "seed": "seed"},
        "stationarity": {"alpha": "alpha", "beta": "beta", "n_max": "n_max",
                         "t_final": "t_final", "dt": "dt", "ensemble": "ensemble",
                         "scheme": "scheme", "seed": "seed"},
        "entropy-decay": {"alpha": "alpha", "n_max": "n_max", "ensemble": "ensemble",
                          "dt": "dt", "seed": "seed"},
        "gibbs": {"samples": "samples", "n_max": "n_max", "seed": "seed"},
        "chaos": {"n_max": "n_max", "samples": "chaos_samples", "seed": "seed"},
        "invariance": {"n_max": "n_max", "samples": "samples", "seed": "seed"},
        "increments": {"n_max": "n_max", "alpha": "alpha", "ensemble": "ensemble",
                       "dt": "dt", "seed": "seed"},
    }
    mapping = table[args.suite]
    kwargs = {}
    for flag, kw in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            kwargs[kw] = value
    if args.suite == "drift" and args.n_max is not None:
        kwargs["n_values"] = (args.n_max,)
    if args.suite == "stationarity":
        kwargs.setdefault("alpha", 1.0)
        kwargs.setdefault("beta", 0.0)
    return kwargs


def cmd_gibbs_partition(args) -> int:
    try:
        z_exact = truncated_partition_function(args.beta, args.cutoff)
        n_max = max(1, int(np.floor(args.cutoff)))
        lattice = cached_lattice(n_max)
        gen = RandomSource(args.seed).generator()
        values = np.empty(args.samples)
        done = 0
        while done < args.samples:
            b = min(100_000, args.samples - done)
            rows = white_noise_batch(lattice, gen, b)
            values[done : done + b] = np.exp(
                -args.beta * renormalized_energy_rows(lattice, rows, args.cutoff)
            )
            done += b
        z_mc = float(np.mean(values))
        se = float(np.std(values, ddof=1) / np.sqrt(args.samples))
    except (SpectralEulerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"analytic Z(beta={args.beta:g}, K={args.cutoff:g}) = {z_exact!r}")
    print(f"monte carlo Z = {z_mc!r} +/- {1.96 * se!r} (95% CI, n={args.samples})")
    print(f"z-score = {abs(z_mc - z_exact) / se:.3f}")
    return EXIT_OK


def cmd_lattice_info(args) -> int:
    try:
        lattice = cached_lattice(args.n_max)
    except (SpectralEulerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"N = {lattice.n_max}")
    print(f"modes |Lambda_N| = {lattice.size}")
    print(f"half-lattice representatives = {len(lattice.half)}")
    print(f"real chart dimension = {lattice.dimension}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "sample":
            return cmd_sample(args)
        if args.command == "evolve":
            return cmd_evolve(args)
        if args.command == "check":
            return cmd_check(args)
        if args.command == "gibbs":
            return cmd_gibbs_partition(args)
        if args.command == "lattice":
            return cmd_lattice_info(args)
    except OverflowGuardError as exc:
        print(f"overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
