"""Command-line front end.

Commands: ``dof``, ``verify``, ``optimize-c``, ``ber``, ``rate``.
Configuration precedence is defaults < config file (``--config``) < flags.
Experiment commands write one CSV per run plus a JSON manifest capturing
the exact inputs; re-running with the same flags and seed (or from the
manifest alone) reproduces the CSV byte for byte, whatever ``--workers``
is. Exit codes: 0 success, 1 usage error, 2 invariant failure,
3 numerical failure.
"""

import argparse
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, analysis, sim
from .beamforming import default_slot_plan
from .errors import InvalidConfig, NumericalError
from .network import DEFAULT_A, DEFAULT_B, DEFAULT_C, NetworkConfig

DEFAULT_SEED = 1234
_CONFIG_KEYS = ("K", "N", "a", "b", "c", "noise_var", "seed", "trials", "workers")
_INT_KEYS = {"K", "N", "seed", "trials", "workers"}


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors on exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    pass


def _build_parser():
    common = _Parser(add_help=False)
    g = common.add_argument_group("network")
    g.add_argument("--K", type=int, help="macrocell user / femtocell count")
    g.add_argument("--N", type=int, help="antennas (macro tx, macro users, femto tx)")
    g.add_argument("--a", type=float, help="macro beamforming amplitude")
    g.add_argument("--b", type=float, help="femto beamforming amplitude")
    g.add_argument("--c", type=float, help="macro direction constant in (0,1)")
    g.add_argument("--noise-var", type=float, dest="noise_var",
                   help="receiver noise variance")
    r = common.add_argument_group("run")
    r.add_argument("--seed", type=int, help="master seed")
    r.add_argument("--trials", type=int, help="Monte Carlo trials")
    r.add_argument("--workers", type=int, help="worker threads (default: auto)")
    r.add_argument("--config", type=Path, help="key = value config file")
    r.add_argument("--out", type=Path, default=Path("results"),
                   help="output directory (default: results)")
    r.add_argument("--print-config", action="store_true",
                   help="dump the resolved configuration before running")

    parser = _Parser(prog="hetbia", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dof", parents=[common],
                       help="degrees-of-freedom table vs TDMA (exact fractions)")
    p.add_argument("--grid", help="tabulate ranges, e.g. 2..6,2..4 (K range, N range)")

    p = sub.add_parser("verify", parents=[common],
                       help="check interference nulling and power invariants")
    p.add_argument("--break-w", action="store_true",
                   help="negative control: use unorthogonalized projector rows")

    p = sub.add_parser("optimize-c", parents=[common],
                       help="find the direction constant maximizing |det D|")
    p.add_argument("--tol", type=float, default=1e-6, help="search tolerance on c")
    p.add_argument("--from-manifest", type=Path, help="re-run a recorded experiment")

    for name, help_ in (("ber", "bit-error-rate sweep"), ("rate", "ergodic rate sweep")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--sweep",
                       help="var=start:stop:steps or var=v1,v2,... "
                            f"(var in {', '.join(sim.SWEEPABLE)})")
        p.add_argument("--from-manifest", type=Path, help="re-run a recorded experiment")
    return parser


def parse_config_file(path):
    """Plain-text ``key = value`` config file (# starts a comment)."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = int(val) if key in _INT_KEYS else float(val)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    return values


def _resolve(args, default_trials):
    """defaults < config file < CLI flags."""
    resolved = {
        "K": 3, "N": 2, "a": DEFAULT_A, "b": DEFAULT_B, "c": DEFAULT_C,
        "noise_var": 1.0, "seed": DEFAULT_SEED, "trials": default_trials,
        "workers": None,
    }
    if args.config is not None:
        resolved.update(parse_config_file(args.config))
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
    config = NetworkConfig(
        K=int(resolved["K"]), N=int(resolved["N"]), a=float(resolved["a"]),
        b=float(resolved["b"]), c=float(resolved["c"]),
        noise_var=float(resolved["noise_var"]),
    )
    return config, int(resolved["seed"]), int(resolved["trials"]), resolved["workers"]


def parse_sweep(text):
    """``var=start:stop:steps`` (inclusive linspace) or ``var=v1,v2,...``."""
    if text is None or "=" not in text:
        raise UsageError("--sweep must look like var=start:stop:steps or var=v1,v2,...")
    var, _, rest = text.partition("=")
    var = var.strip()
    if var not in sim.SWEEPABLE:
        raise UsageError(f"sweep variable must be one of {sim.SWEEPABLE}, got {var!r}")
    try:
        if ":" in rest:
            start, stop, steps = rest.split(":")
            values = np.linspace(float(start), float(stop), int(steps))
        else:
            values = np.array([float(v) for v in rest.split(",")])
    except ValueError as exc:
        raise UsageError(f"bad sweep specification {text!r}") from exc
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise UsageError("sweep values must be finite and non-empty")
    return var, tuple(float(v) for v in values)


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _inputs_digest(payload):
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _config_dict(config):
    return {
        "K": config.K, "N": config.N, "a": config.a, "b": config.b,
        "c": config.c, "noise_var": config.noise_var,
    }


def _write_outputs(out_dir, command, schema, columns, rows, config, seed,
                   trials, sweep, started, extra=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = command.replace("-", "_")
    csv_path = out_dir / f"{stem}.csv"
    manifest_path = out_dir / f"{stem}_manifest.json"

    inputs = {
        "command": command,
        "version": __version__,
        "config": _config_dict(config),
        "seed": seed,
        "trials": trials,
        "sweep": sweep,
    }
    digest = _inputs_digest(inputs)

    lines = [f"# schema=hetbia.{stem}.v1", f"# manifest_sha256={digest}"]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    csv_path.write_text("\n".join(lines) + "\n")

    manifest = dict(inputs)
    manifest["input_sha256"] = digest
    manifest["outputs"] = [csv_path.name]
    manifest["started_at"] = datetime.fromtimestamp(started, timezone.utc).isoformat()
    manifest["duration_s"] = round(time.time() - started, 3)
    if extra:
        manifest.update(extra)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return csv_path, manifest_path


def _load_manifest(path, expect_command):
    data = json.loads(Path(path).read_text())
    if data.get("command") != expect_command:
        raise UsageError(
            f"manifest records command {data.get('command')!r}, not {expect_command!r}"
        )
    cfg = data["config"]
    config = NetworkConfig(K=int(cfg["K"]), N=int(cfg["N"]), a=float(cfg["a"]),
                           b=float(cfg["b"]), c=float(cfg["c"]),
                           noise_var=float(cfg["noise_var"]))
    sweep = data.get("sweep")
    if sweep is not None:
        sweep = (sweep["var"], tuple(float(v) for v in sweep["values"]))
    return config, int(data["seed"]), int(data["trials"]), sweep


def _print_config(config, seed, trials, workers):
    for key, val in _config_dict(config).items():
        print(f"{key} = {_fmt(val)}")
    print(f"seed = {seed}")
    print(f"trials = {trials}")
    print(f"workers = {'auto' if workers is None else workers}")


def _parse_grid(text):
    try:
        k_part, n_part = text.split(",")
        k_lo, k_hi = (int(x) for x in k_part.split(".."))
        n_lo, n_hi = (int(x) for x in n_part.split(".."))
    except ValueError as exc:
        raise UsageError(f"bad --grid {text!r}, expected K1..K2,N1..N2") from exc
    return range(k_lo, k_hi + 1), range(n_lo, n_hi + 1)


def cmd_dof(args):
    config, seed, trials, workers = _resolve(args, default_trials=0)
    if args.print_config:
        _print_config(config, seed, trials, workers)
    if args.grid:
        k_range, n_range = _parse_grid(args.grid)
        pairs = [(k, n) for k in k_range for n in n_range]
    else:
        pairs = [(config.K, config.N)]
    header = (f"{'K':>3} {'N':>3} {'macro_bia':>12} {'femto_bia':>12} "
              f"{'total_bia':>12} {'macro_tdma':>11} {'femto_tdma':>11} "
              f"{'total_tdma':>11} {'gain':>10}")
    print(header)
    for k, n in pairs:
        rep = analysis.dof(NetworkConfig(K=k, N=n))
        cells = [rep.macro_bia, rep.femto_bia_total, rep.total_bia,
                 rep.macro_tdma, rep.femto_tdma_total, rep.total_tdma, rep.gain]
        text = " ".join(f"{str(c):>11}" for c in cells)
        print(f"{k:>3} {n:>3}  {text}")
        decs = " ".join(f"{float(c):>11.6f}" for c in cells)
        print(f"{'':>3} {'':>3}  {decs}")
    return 0


def cmd_verify(args):
    config, seed, trials, workers = _resolve(args, default_trials=1000)
    if args.print_config:
        _print_config(config, seed, trials, workers)
    plan = default_slot_plan(config.K)
    report = sim.verify_invariants(config, plan, trials=trials, seed=seed,
                                   break_w=args.break_w)
    for name, check in report.checks.items():
        status = "PASS" if check.passed else "FAIL"
        print(f"{status}  {name:<26} value={check.value:.6e}  "
              f"threshold={check.threshold:.0e}")
    print(f"worst leakage: {report.worst_leakage:.6e} over {trials} draws")
    if report.passed:
        print("PASS: all invariants hold")
        return 0
    failing = [n for n, c in report.checks.items() if not c.passed]
    print(f"FAIL: {', '.join(failing)}")
    return 2


def cmd_optimize_c(args):
    started = time.time()
    if args.from_manifest:
        config, seed, trials, _ = _load_manifest(args.from_manifest, "optimize-c")
    else:
        config, seed, trials, workers = _resolve(args, default_trials=0)
        if args.print_config:
            _print_config(config, seed, trials, workers)
    plan = default_slot_plan(config.K)
    tol = getattr(args, "tol", 1e-6) or 1e-6
    c_star = analysis.optimize_c(config, plan, tol=tol)
    grid = np.linspace(0.01, 0.99, 99)
    profile = [
        min(analysis.det_d_profile(config, plan, k, c)
            for k in range(1, config.K + 1))
        for c in grid
    ]
    rows = [(c, p) for c, p in zip(grid, profile)]
    csv_path, manifest = _write_outputs(
        args.out, "optimize-c", "optimize_c", ("c", "min_abs_det_profile"),
        rows, config, seed, trials, None, started,
        extra={"c_star": c_star, "tol": tol},
    )
    print(f"c* = {_fmt(c_star)}")
    print(f"objective at c*: {_fmt(min(analysis.det_d_profile(config, plan, k, c_star) for k in range(1, config.K + 1)))}")
    print(f"wrote {csv_path} and {manifest}")
    return 0


def _run_sweep_command(args, command):
    started = time.time()
    workers = None
    if args.from_manifest:
        config, seed, trials, sweep = _load_manifest(args.from_manifest, command)
        if sweep is None:
            raise UsageError("manifest has no sweep specification")
        workers = args.workers
    else:
        config, seed, trials, workers = _resolve(
            args, default_trials=10000)
        if args.sweep is None:
            raise UsageError(f"{command} needs --sweep (or --from-manifest)")
        sweep = parse_sweep(args.sweep)
        if args.print_config:
            _print_config(config, seed, trials, workers)
    var, values = sweep
    spec = sim.ExperimentSpec(config=config, var=var, values=values,
                              trials=trials, seed=seed)
    if command == "ber":
        records = sim.run_ber_sweep(spec, workers=workers)
        columns = ("sweep_value", "macro_ber", "femto_ber", "macro_bits",
                   "femto_bits", "resamples")
        rows = [
            (r.sweep_value, r.macro_ber, r.femto_ber, r.macro_bits,
             r.femto_bits, r.resamples)
            for r in records
        ]
    else:
        records = sim.run_rate_sweep(spec, workers=workers)
        columns = ("sweep_value", "macro_rate_mean", "macro_rate_stderr",
                   "femto_rate_mean", "femto_rate_stderr", "trials")
        rows = [
            (r.sweep_value, r.macro.mean, r.macro.std_err, r.femto.mean,
             r.femto.std_err, r.macro.trials)
            for r in records
        ]
    csv_path, manifest = _write_outputs(
        args.out, command, command, columns, rows, config, seed, trials,
        {"var": var, "values": list(values)}, started,
    )
    print(f"wrote {csv_path} and {manifest}")
    return 0


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "dof":
            return cmd_dof(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "optimize-c":
            return cmd_optimize_c(args)
        if args.command in ("ber", "rate"):
            return _run_sweep_command(args, args.command)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, InvalidConfig) as exc:
        print(f"hetbia: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"hetbia: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
