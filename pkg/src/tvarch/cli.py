"""
Batch command-line front end.

Exit codes: 0 success, 1 domain failure (assumption violated, boundary
anchor in strict mode, experiment aborted, stencil out of range), 2 bad
arguments or configuration, 3 I/O error.  Every command that writes a file
also writes ``<output>.manifest.json`` (or ``manifest.json`` inside
``--out-dir``) recording the argument vector, the config echo and digest,
seeds, package version and timestamps; rerunning the recorded ``argv``
reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
import json
import logging
from pathlib import Path
import sys

import numpy as np

from tvarch import __version__
from tvarch.config import config_digest, load_config, parse_experiment, parse_kernel, parse_model, parse_omega
from tvarch.exceptions import AssumptionViolation, ConfigError, TvArchError
from tvarch.kernel import KERNEL_FAMILIES, KernelSpec
from tvarch.model import OmegaSpace, assumption_report, validate_moment_conditions

__all__ = ["RunManifest", "main", "read_series"]

logger = logging.getLogger("tvarch")

EXIT_OK, EXIT_DOMAIN, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config_digest: str
    config: dict | None
    seeds: dict
    version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list[str] = field(default_factory=list)

    def write(self, path) -> None:
        self.finished = _now()
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def read_series(path) -> np.ndarray:
    """
    Read squared observations from CSV.

    A header is required; lines starting with ``#`` are skipped.  The
    ``x2`` column is used when present, otherwise ``x`` is squared.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(line for line in fh if line.strip() and not line.lstrip().startswith("#"))
        try:
            header = [h.strip() for h in next(rows)]
        except StopIteration:
            raise ConfigError(f"{path}: empty data file") from None
        if "x2" in header:
            col, square = header.index("x2"), False
        elif "x" in header:
            col, square = header.index("x"), True
        else:
            raise ConfigError(f"{path}: header needs an 'x2' or 'x' column")
        try:
            vals = np.array([float(r[col]) for r in rows])
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{path}: bad numeric value ({exc})") from exc
    if vals.size == 0:
        raise ConfigError(f"{path}: no data rows")
    x2 = vals * vals if square else vals
    if np.any(~np.isfinite(x2)) or np.any(x2 < 0):
        raise ConfigError(f"{path}: x2 must be finite and non-negative")
    return x2


def _write_text(path, text: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def _seed(args, cfg: dict | None) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int((cfg or {}).get("seed", 0))


def _spec_checked(cfg: dict):
    spec = parse_model(cfg)
    for check in assumption_report(spec):
        if not check.passed:
            raise AssumptionViolation(check.name, check.u, check.lhs, check.rhs)
    return spec


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    spec = parse_model(cfg)
    checks = assumption_report(spec)
    omega = parse_omega(cfg, spec.p)
    if omega is not None:
        checks.append(omega.interior_report(spec))
    checks += validate_moment_conditions(spec, "clt")
    for c in checks:
        print(c.describe())
    ok = all(c.passed for c in checks)
    print("all checks passed" if ok else "some checks failed")
    return EXIT_OK if ok else EXIT_DOMAIN


def cmd_simulate(args) -> int:
    from tvarch.simulate import path_to_csv, simulate_tvarch

    started = _now()
    cfg = load_config(args.config)
    spec = _spec_checked(cfg)
    sim = cfg.get("simulate") or {}
    N = int(args.n if args.n is not None else sim.get("N", 1000))
    mode = args.mode or sim.get("mode", "stationary-start")
    seed = _seed(args, cfg)
    path = simulate_tvarch(spec, N, seed, mode)
    text = path_to_csv(path)
    if args.out is None:
        sys.stdout.write(text)
        return EXIT_OK
    _write_text(args.out, text)
    RunManifest("simulate", args.argv, config_digest(cfg), cfg, {"seed": seed}, started=started, outputs=[str(args.out)]).write(
        f"{args.out}.manifest.json"
    )
    return EXIT_OK


def _parse_grid(text: str) -> list[int]:
    """``"a:b:step"`` (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, s = (int(v) for v in text.split(":"))
            if s <= 0:
                raise ValueError("step must be positive")
            return list(range(a, b + 1, s))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --grid {text!r}: {exc}") from exc


def cmd_fit(args) -> int:
    from tvarch.estimate import fit_path, fits_to_csv
    from tvarch.simulate import simulate_tvarch

    started = _now()
    cfg = load_config(args.config) if args.config else {}
    seeds: dict = {}
    if args.data:
        x2 = read_series(args.data)
        p = args.p if args.p is not None else (parse_model(cfg).p if cfg else 0)
    elif cfg:
        spec = _spec_checked(cfg)
        N = int(args.n if args.n is not None else (cfg.get("simulate") or {}).get("N", 1000))
        seed = _seed(args, cfg)
        seeds["seed"] = seed
        x2 = simulate_tvarch(spec, N, seed, (cfg.get("simulate") or {}).get("mode", "stationary-start")).x2
        p = spec.p
    else:
        raise ConfigError("fit needs --data or --config")
    kernel = parse_kernel(cfg) if cfg else KernelSpec()
    try:
        kernel = KernelSpec(args.kernel or kernel.family, args.b if args.b is not None else kernel.bandwidth)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.omega:
        try:
            rho1, rho2 = (float(v) for v in args.omega.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --omega {args.omega!r}; expected 'rho1,rho2'") from exc
        omega = OmegaSpace(p, rho1, rho2)
    else:
        omega = parse_omega(cfg, p) if cfg else None
        if omega is None:
            omega = OmegaSpace(p, 1e-3, max(100.0, 100.0 * float(np.max(x2))))
    if args.t0 is not None:
        grid = [args.t0]
    elif args.grid:
        grid = _parse_grid(args.grid)
    else:
        grid = [len(x2) // 2]
    policy = "strict" if args.strict_boundary else "renormalize"
    fits = fit_path(x2, grid, kernel, omega, policy=policy)
    text = fits_to_csv(fits)
    if args.out is None:
        sys.stdout.write(text)
    else:
        _write_text(args.out, text)
        echo = {"fit_args": {k: v for k, v in vars(args).items() if k not in ("func", "argv")}, "config": cfg}
        RunManifest("fit", args.argv, config_digest(echo), echo, seeds, started=started, outputs=[str(args.out)]).write(
            f"{args.out}.manifest.json"
        )
    failed = [f for f in fits if f.error]
    for f in failed:
        print(f"t0={f.t0}: {f.error}", file=sys.stderr)
    if failed and args.strict_boundary:
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_experiment(args) -> int:
    from tvarch.montecarlo import run_experiment

    started = _now()
    cfg = load_config(args.config)
    spec = _spec_checked(cfg)
    seed = _seed(args, cfg)
    if args.reps is not None:
        cfg = dict(cfg, experiment=dict(cfg.get("experiment") or {}, reps=args.reps))
    exp = parse_experiment(cfg, spec, seed)
    if not args.strict_boundary:
        exp = replace(exp, policy="renormalize")
    summary = run_experiment(exp, threads=args.threads)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "summary.csv"
    _write_text(csv_path, summary.to_csv())
    manifest = RunManifest(
        "experiment",
        args.argv,
        config_digest(cfg),
        cfg,
        {"base_seed": exp.base_seed, "reps": exp.reps, "derived": exp.seeds()},
        started=started,
        outputs=[str(csv_path)],
    )
    # runtime lives in the manifest, never in the summary
    data = asdict(manifest)
    data["runtime_seconds"] = summary.runtime
    data["finished"] = _now()
    (out_dir / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    print(f"wrote {csv_path} ({len(summary.cells)} cells, {summary.runtime:.1f}s)")
    return EXIT_OK


def cmd_asymptotics(args) -> int:
    from tvarch.asymptotics import MCSettings, asymptotics_report

    started = _now()
    cfg = load_config(args.config)
    spec = _spec_checked(cfg)
    block = cfg.get("asymptotics") or {}
    u0 = float(args.u0 if args.u0 is not None else block.get("u0", 0.5))
    N = int(args.n if args.n is not None else block.get("N", (cfg.get("simulate") or {}).get("N", 4000)))
    mc_block = block.get("mc") or {}
    seed = _seed(args, cfg)
    try:
        mc = MCSettings(int(mc_block.get("N", 20000)), int(mc_block.get("reps", 20)), seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    kernel = parse_kernel(cfg)
    report = asymptotics_report(spec, u0, N, kernel, mc, float(block.get("du", 0.02)))
    text = report.to_text()
    if report.bandwidth.zero_bias:
        print("zero bias: no interior optimal bandwidth (b_opt clipped to 0.5)", file=sys.stderr)
    if args.out is None:
        sys.stdout.write(text)
        return EXIT_OK
    out = Path(args.out)
    _write_text(out, report.to_csv() if out.suffix == ".csv" else text)
    RunManifest("asymptotics", args.argv, config_digest(cfg), cfg, {"seed": seed}, started=started, outputs=[str(out)]).write(
        f"{out}.manifest.json"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base seed (overrides the config's seed)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker cap; results do not depend on it")
    common.add_argument(
        "--strict-boundary",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="refuse anchors whose kernel support leaves the sample (default on)",
    )
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tvarch", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"tvarch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check model assumptions")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", parents=[common], help="simulate one path to CSV")
    p.add_argument("config")
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--mode", choices=("paper-exact", "stationary-start"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="local quasi-likelihood fits")
    p.add_argument("--data", help="CSV with an x2 (or x) column")
    p.add_argument("--config")
    p.add_argument("--p", type=int, help="ARCH order when fitting data")
    p.add_argument("--n", type=_positive_int, help="sample size when simulating from --config")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--t0", type=int)
    g.add_argument("--grid", help="'start:stop:step' or comma list of anchors")
    p.add_argument("--b", type=float)
    p.add_argument("--kernel", choices=KERNEL_FAMILIES)
    p.add_argument("--omega", help="'rho1,rho2'")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("experiment", parents=[common], help="run a Monte Carlo experiment")
    p.add_argument("config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--reps", type=_positive_int, help="override experiment.reps")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("asymptotics", parents=[common], help="Sigma, mu and the optimal bandwidth")
    p.add_argument("config")
    p.add_argument("--u0", type=float)
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_asymptotics)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TvArchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
