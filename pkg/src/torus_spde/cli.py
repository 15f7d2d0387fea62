"""Command line entry point.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import harness
from .analysis import l2_norm
from .noise import cached_ou_path, derive_seed
from .scheme import SchemeConfig, run

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SCHEME_KEYS = ("N", "n", "T", "sigma", "u0", "G", "drift_variant", "oversample")

# acceptance windows for the regularity checks
HOLDER_RANGE = (0.17, 0.33)
SMOOTHING_FLOOR = -0.35


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML config file")
    common.add_argument("--seed", type=_u64, default=None, help="master seed (u64)")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--samples", type=_positive, default=None, help="Monte Carlo sample count")
    common.add_argument("--quiet", action="store_true", help="only report failures")

    p = argparse.ArgumentParser(prog="torus-spde", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="run the scheme on one noise path")
    sim.add_argument("--stride", type=_positive, default=None, help="snapshot every STRIDE steps")
    sim.add_argument("--N", type=_positive, default=None)
    sim.add_argument("--n", type=_positive, default=None)
    sim.add_argument("--T", type=float, default=None)
    sim.add_argument("--sigma", type=float, default=None)
    sim.add_argument("--G", default=None, help='nonlinearity, e.g. "sine(1)"')
    sim.add_argument("--u0", default=None, help='initial profile, e.g. "smooth_bump"')
    sim.add_argument("--noise-cache", type=Path, default=None)

    conv = sub.add_parser("convergence", parents=[common], help="coupled-noise convergence study")
    conv.add_argument("--workers", type=_positive, default=1)

    sub.add_parser("noise-check", parents=[common], help="OU variance against the closed form")

    reg = sub.add_parser("regularity", parents=[common],
                         help="noise time-Holder exponent and semigroup smoothing slope")
    reg.add_argument("--time-unit", choices=("torus", "natural"), default="torus",
                     help="'natural' rescales lags and times by 1/(16 pi^4)")

    sub.add_parser("linear-exact", parents=[common], help="G = 0 scheme against its closed form")
    return p


def _report(args, ok: bool, msg: str) -> None:
    if not args.quiet or not ok:
        print(("PASS " if ok else "FAIL ") + msg)


def cmd_simulate(args) -> int:
    d = harness.load_toml(args.config) if args.config else {}
    unknown = set(d) - set(SCHEME_KEYS) - {"stride", "seed"}
    if unknown:
        raise harness.ConfigError(f"unknown config keys: {sorted(unknown)}")
    params = {k: d[k] for k in SCHEME_KEYS if k in d}
    for k in ("N", "n", "T", "sigma", "G", "u0"):
        v = getattr(args, k)
        if v is not None:
            params[k] = v
    params.setdefault("N", 16)
    params.setdefault("n", 64)
    params.setdefault("T", 1e-3)
    params.setdefault("G", "sine(1)")
    params.setdefault("u0", "smooth_bump")
    try:
        cfg = SchemeConfig(**params)
    except (TypeError, ValueError) as exc:
        raise harness.ConfigError(str(exc)) from exc
    seed = args.seed if args.seed is not None else int(d.get("seed", 0))
    stride = args.stride or int(d.get("stride", cfg.n))
    path = cached_ou_path(derive_seed(seed, 0), cfg.lattice, cfg.n, cfg.T, cfg.sigma, args.noise_cache)
    traj = run(cfg, path)
    out = args.out or Path("out")
    written = traj.write_snapshots(out / "snapshots", stride)
    if not args.quiet:
        final = traj.field(cfg.n)
        print(f"N={cfg.N} n={cfg.n} T={cfg.T!r} G={cfg.G} seed={seed}")
        print(f"final L2 norm {l2_norm(final)!r}; {len(written)} snapshot(s) in {out / 'snapshots'}")
    return EXIT_OK


def cmd_convergence(args) -> int:
    if args.config is not None:
        cfg = harness.load_study_config(args.config, seed=args.seed, samples=args.samples,
                                        out=str(args.out) if args.out else None)
    else:
        cfg = harness.study_config_from_dict({}, seed=args.seed, samples=args.samples,
                                             out=str(args.out) if args.out else None)
    report = harness.run_convergence_study(cfg, workers=args.workers)
    errors_csv, summary_csv = harness.write_report(report, cfg.out)
    if not args.quiet:
        sys.stdout.write(report.summary_csv())
        print(f"wrote {errors_csv} and {summary_csv} (sup over coarse grid times)")
    return EXIT_OK


def cmd_noise_check(args) -> int:
    seed = 7 if args.seed is None else args.seed
    samples = args.samples or 2000
    chk = harness.noise_variance_check(seed, samples=samples)
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "noise_check.csv").write_text(chk.csv())
    ok = chk.passed()
    _report(args, ok, f"E||U^N(T)||^2 = {chk.total_mean:.6e} +- {chk.total_stderr:.2e}, "
                      f"closed form {chk.total_analytic:.6e} (z = {chk.total_z:+.2f}); "
                      f"max |mode z| = {max(abs(chk.z)):.2f}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_regularity(args) -> int:
    seed = 11 if args.seed is None else args.seed
    scale = harness.NATURAL_TIME if args.time_unit == "natural" else 1.0
    hf = harness.noise_holder_exponent(seed, samples=args.samples or 200, base_lag=2.0**-10 * scale)
    ok1 = HOLDER_RANGE[0] <= hf.exponent <= HOLDER_RANGE[1]
    _report(args, ok1, f"noise time-Holder exponent in C^-0.05: {hf.exponent:.4f} "
                       f"(window {HOLDER_RANGE}, lags {hf.lags[0]:.3e}..{hf.lags[-1]:.3e})")
    slopes = harness.smoothing_exponent(seed, t_min=1e-6 * scale, t_max=1e-2 * scale)
    ok2 = min(slopes) >= SMOOTHING_FLOOR
    _report(args, ok2, f"smoothing slope of ||P_t f||_C^1: min {min(slopes):.4f} "
                       f"(floor {SMOOTHING_FLOOR})")
    return EXIT_OK if ok1 and ok2 else EXIT_FAIL


def cmd_linear_exact(args) -> int:
    seed = 1 if args.seed is None else args.seed
    dev = harness.linear_exactness(seed)
    ok = dev <= 1e-12
    _report(args, ok, f"max relative deviation from P_t u0 + U^N(t): {dev:.3e}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "simulate": cmd_simulate,
    "convergence": cmd_convergence,
    "noise-check": cmd_noise_check,
    "regularity": cmd_regularity,
    "linear-exact": cmd_linear_exact,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
