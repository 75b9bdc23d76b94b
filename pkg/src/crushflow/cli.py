"""Command line: build fields, evaluate, integrate, crush, and run the verification suites.

Address strings give one group of ``+``/``-`` characters per generation, one
character per coordinate, groups separated by commas: ``"+-,-+"`` is a
depth-2 address in two dimensions.

Settings are resolved as: command-line flags, then a ``key=value`` config
file (``--config`` or the CRUSHFLOW_CONFIG environment variable), then the
built-in defaults of :class:`crushflow.field.Params`.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, cantor, flowmap, suite
from .cantor import Address
from .field import FIELD_NAMES, Params, make_field, tau

PARAM_KEYS = ("d", "nu", "beta", "T", "depth", "p", "alpha", "theta_scale")
RUN_DEFAULTS = {"grid": 32, "tol": 1e-10, "seed": 0, "threads": 1, "out": "-", "format": "csv"}
CASTS = {"d": int, "depth": int, "grid": int, "seed": int, "threads": int,
         "nu": float, "beta": float, "T": float, "p": float, "alpha": float, "tol": float,
         "theta_scale": float, "out": str, "format": str}

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ----------------------------------------------------------------------------
# configuration


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CASTS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = CASTS[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def resolve(args: argparse.Namespace) -> tuple[Params, dict]:
    cfg_path = getattr(args, "config", None) or os.environ.get("CRUSHFLOW_CONFIG")
    merged = dict(RUN_DEFAULTS)
    if cfg_path:
        merged.update(read_config(cfg_path))
    for key in CASTS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    try:
        params = Params(**{k: merged[k] for k in PARAM_KEYS if k in merged})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    run = {k: v for k, v in merged.items() if k not in PARAM_KEYS}
    if run["format"] not in ("csv", "json"):
        raise UsageError("--format must be csv or json")
    return params, run


# ----------------------------------------------------------------------------
# output helpers


def fmt(v) -> str:
    return flowmap.format_float(v)


def _open_out(path: str):
    if path == "-":
        return _Stdout()
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def write_text(path: str, text: str):
    with _open_out(path) as fh:
        fh.write(text)


def write_rows(path: str, header: list[str], rows: np.ndarray):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    write_text(path, buf.getvalue())


def chunked(fn, x: np.ndarray, threads: int, size: int = 4096) -> np.ndarray:
    """Apply fn to row chunks of x, optionally on a thread pool; order is preserved."""
    chunks = [x[k:k + size] for k in range(0, len(x), size)] or [x]
    if threads <= 1 or len(chunks) == 1:
        return np.concatenate([fn(c) for c in chunks])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.concatenate(list(pool.map(fn, chunks)))


def lattice(M: int, d: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    k = np.stack(np.meshgrid(*([np.arange(M)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return lo + (hi - lo) * k / M


def parse_point(text: str, d: int) -> np.ndarray:
    try:
        x = np.array([float(s) for s in text.split(",")])
    except ValueError:
        raise UsageError(f"malformed point {text!r}") from None
    if x.size != d:
        raise UsageError(f"point {text!r} has {x.size} coordinates, expected {d}")
    return x


def parse_address(text: str, d: int) -> Address:
    try:
        a = Address.parse(text)
    except ValueError as exc:
        raise UsageError(f"malformed address: {exc}") from None
    if a.d != d:
        raise UsageError(f"address {text!r} is {a.d}-dimensional but --d is {d}")
    return a


# ----------------------------------------------------------------------------
# subcommands


def cmd_eval(args, params: Params, run: dict) -> int:
    """Sample a field on an M^d lattice at one time: columns t, x1..xd, u1..ud."""
    try:
        fld = make_field(args.field, params, stage=args.stage, eps=args.eps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    M = run["grid"]
    x = lattice(M, fld.d, -1.0, 1.0) if args.field == "w" else lattice(M, fld.d)
    t = args.t

    def values(chunk):
        return fld._evaluate(np.full(len(chunk), t), chunk, ("value",))["value"]

    try:
        vals = chunked(values, x, run["threads"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    d = fld.d
    if run["format"] == "json":
        write_text(run["out"], analysis.dumps({"field": args.field, "t": t, "points": x, "values": vals}) + "\n")
    else:
        header = ["t"] + [f"x{k + 1}" for k in range(d)] + [f"u{k + 1}" for k in range(d)]
        write_rows(run["out"], header, np.column_stack([np.full(len(x), t), x, vals]))
    return EXIT_OK


def _analytic_traj(params: Params, a: Address, t1: float, per_stage: int = 50) -> flowmap.Trajectory:
    n = min(a.n, params.depth)
    times = np.unique(np.concatenate(
        [np.linspace(tau(params, i), tau(params, i + 1), per_stage + 1) for i in range(n)]))
    times = times[times <= t1]
    if times[-1] < t1:
        times = np.append(times, t1)
    pts = flowmap.analytic_cantor_trajectory(params, a, times)
    return flowmap.Trajectory(times, pts, np.zeros(len(times)), "analytic", "v")


def cmd_traj(args, params: Params, run: dict) -> int:
    """Trajectories from an address (analytic and/or numeric along v) or from a point."""
    if (args.address is None) == (args.point is None):
        raise UsageError("give exactly one of --address or --point")
    trajs = {}
    if args.address is not None:
        a = parse_address(args.address, params.d)
        x0 = cantor.limit_point(cantor.phi(params.nu), a)
        t1 = tau(params, min(a.n, params.depth)) if args.t1 is None else args.t1
        field_name = args.field or "v"
        if args.mode in ("analytic", "both"):
            if field_name != "v":
                raise UsageError("analytic trajectories exist for --field v only")
            trajs["analytic"] = _analytic_traj(params, a, t1)
        if args.mode in ("numeric", "both"):
            fld = make_field(field_name, params)
            trajs["numeric"] = flowmap.integrate(fld, x0, args.t0, t1, run["tol"])
    else:
        if args.mode != "numeric":
            raise UsageError("point starts only support --mode numeric")
        field_name = args.field or "u"
        fld = make_field(field_name, params, stage=args.stage, eps=args.eps)
        x0 = parse_point(args.point, fld.d)
        default_end = {"u": params.T, "v": params.tau_inf}.get(field_name, 1.0)
        t1 = default_end if args.t1 is None else args.t1
        trajs["numeric"] = flowmap.integrate(fld, x0, args.t0, t1, run["tol"])

    out = run["out"]
    if len(trajs) == 1:
        write_text(out, next(iter(trajs.values())).to_csv())
        return EXIT_OK
    if out == "-":
        for name, tr in trajs.items():
            sys.stdout.write(f"# {name}\n")
            sys.stdout.write(tr.to_csv())
        return EXIT_OK
    stem = Path(out)
    for name, tr in trajs.items():
        write_text(str(stem.with_name(f"{stem.stem}_{name}{stem.suffix or '.csv'}")), tr.to_csv())
    return EXIT_OK


def cmd_crush(args, params: Params, run: dict) -> int:
    """Collapse report for the generation-n crushing map; optional (x, image) dump."""
    n = args.gen
    if not 0 <= n <= params.depth:
        raise UsageError(f"--gen must lie in 0..{params.depth}")
    rep = analysis.collapse_report(params, run["grid"], n, seed=run["seed"], tol=max(run["tol"], 1e-9),
                                   keep_points=args.dump is not None)
    body = analysis.report_dict(rep)
    body["collapse_report"]["translated_cell_fraction"] = analysis.translated_cell_fraction(
        params, analysis.jittered_grid(run["grid"], params.d, run["seed"]), n)
    write_text(run["out"], analysis.dumps(body) + "\n")
    if args.dump is not None:
        d = params.d
        header = [f"x{k + 1}" for k in range(d)] + [f"y{k + 1}" for k in range(d)]
        write_rows(args.dump, header, np.column_stack([rep.starts, rep.images]))
    return EXIT_OK


def cmd_verify(args, params: Params, run: dict) -> int:
    """Run the named checks; exit status 0 only if every selected check passes."""
    only = [s for chunk in (args.only or []) for s in chunk.split(",")]
    try:
        results = suite.run_checks(params, only or None)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    body = {"params": dataclasses.asdict(params),
            "checks": {k: r.to_dict() for k, r in results.items()},
            "passed": all(r.passed for r in results.values())}
    if not args.timings:
        for entry in body["checks"].values():
            entry.pop("seconds")
    write_text(run["out"], analysis.dumps(body) + "\n")
    return EXIT_OK if body["passed"] else EXIT_FAILED


def _parse_stages(text: str) -> list[int]:
    try:
        if "-" in text:
            lo, hi = (int(s) for s in text.split("-", 1))
            return list(range(lo, hi + 1))
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise UsageError(f"malformed stage list {text!r}") from None


def cmd_norms(args, params: Params, run: dict) -> int:
    """Per-stage norm reports and their exponent fits at the configured p."""
    if params.p >= params.p_threshold:
        print(f"crushflow: warning: p = {params.p} is not below the threshold "
              f"{params.p_threshold:.6g}; the W^(1,p) norms are not expected to stay bounded",
              file=sys.stderr)
    stages = _parse_stages(args.stages)
    if any(not 0 <= i < params.depth for i in stages):
        raise UsageError(f"stages must lie in 0..{params.depth - 1}")
    reports = [analysis.stage_norms(params, i, params.p) for i in stages]
    body = {"norm_reports": [r.to_dict()["norm_report"] for r in reports]}
    if len(stages) >= 3:
        fits = analysis.fit_exponents(params, stages, params.p, reports=reports)
        body["exponent_fits"] = [f.to_dict()["exponent_fit"] for f in fits]
    write_text(run["out"], analysis.dumps(body) + "\n")
    return EXIT_OK


def cmd_dim(args, params: Params, run: dict) -> int:
    """Box-counting dimension of the generation-n Cantor union."""
    rows = []
    for n in range(1, args.gen + 1):
        row = {"n": n, "box_dimension": cantor.box_dimension(params.nu, params.d, n),
               "volume": cantor.cantor_volume(params.nu, params.d, n)}
        if n * params.d <= 12:
            row["counted"] = analysis.counted_box_dimension(params.nu, params.d, n)
        rows.append(row)
    write_text(run["out"], analysis.dumps({"dimension": rows, "target": params.d / (1 + params.nu)}) + "\n")
    return EXIT_OK


def cmd_holder(args, params: Params, run: dict) -> int:
    """Hoelder quotients of v over the separation sweep 2^-3 .. 2^-10."""
    alpha = params.alpha
    q, slope = suite.holder_sweep(params, alpha, args.samples, seed=run["seed"])
    body = {"holder_sweep": {"alpha": alpha, "alpha_bound": params.alpha_bound, "slope": slope,
                             "quotients": {fmt(r): v for r, v in q.items()}}}
    write_text(run["out"], analysis.dumps(body) + "\n")
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS, allow_abbrev=False)
    g = p.add_argument_group("construction")
    g.add_argument("--nu", type=float, help="Cantor exponent in (0, 1) (default 0.75)")
    g.add_argument("--beta", type=float, help="time exponent (default 1 - nu^2)")
    g.add_argument("--d", type=int, help="dimension (default 2)")
    g.add_argument("--depth", type=int, help="number of stages kept (default 8)")
    g.add_argument("--T", type=float, help="final time of the reversed field (default 1)")
    g.add_argument("--p", type=float, help="Sobolev exponent for norm reports (default 1)")
    g.add_argument("--alpha", type=float, help="Hoelder exponent (default half the admissible bound)")
    g.add_argument("--theta-scale", dest="theta_scale", type=float,
                   help="multiply the blob offset (harness corruption tests only)")
    r = p.add_argument_group("run")
    r.add_argument("--grid", type=int, help=f"lattice points per axis (default {RUN_DEFAULTS['grid']})")
    r.add_argument("--tol", type=float, help=f"integrator tolerance (default {RUN_DEFAULTS['tol']:g})")
    r.add_argument("--seed", type=int, help="RNG seed (default 0)")
    r.add_argument("--threads", type=int, help="worker threads for sampling (default 1)")
    r.add_argument("--out", help="output path, '-' for stdout (default)")
    r.add_argument("--format", help="csv or json (default csv)")
    r.add_argument("--config", help="key=value config file (default $CRUSHFLOW_CONFIG)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="crushflow", description=__doc__.split("\n\n")[0], allow_abbrev=False,
        epilog="Addresses: '+-,-+' means generation 1 signs (+,-) then generation 2 signs (-,+).",
        parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, parents=[common], help=help_text, description=fn.__doc__,
                            allow_abbrev=False)
        sp.set_defaults(func=fn)
        return sp

    sp = add("eval", cmd_eval, "sample a field on a lattice")
    sp.add_argument("--field", required=True, choices=FIELD_NAMES)
    sp.add_argument("--t", type=float, default=0.0, help="time of the slice")
    sp.add_argument("--stage", type=int, default=2, help="stage index for --field vi")
    sp.add_argument("--eps", type=float, default=0.5, help="slab width for --field usteady")

    sp = add("traj", cmd_traj, "integrate or evaluate trajectories")
    sp.add_argument("--address", help="Cantor address such as '+-,-+'")
    sp.add_argument("--point", help="start point such as 0.3,0.7")
    sp.add_argument("--field", choices=FIELD_NAMES)
    sp.add_argument("--mode", choices=("analytic", "numeric", "both"), default="numeric")
    sp.add_argument("--t0", type=float, default=0.0)
    sp.add_argument("--t1", type=float)
    sp.add_argument("--stage", type=int, default=2)
    sp.add_argument("--eps", type=float, default=0.5)

    sp = add("crush", cmd_crush, "collapse report of the crushing map")
    sp.add_argument("--gen", type=int, required=True, help="generation n")
    sp.add_argument("--dump", help="CSV path for (x, image) pairs")

    sp = add("verify", cmd_verify, "run the verification checks")
    sp.add_argument("--only", action="append", help="check or group name prefixes (comma separated)")
    sp.add_argument("--timings", action="store_true", help="include run times (breaks byte-identity)")

    sp = add("norms", cmd_norms, "stage norm reports and exponent fits")
    sp.add_argument("--stages", default="1-6", help="range like 1-6 or list like 1,2,3")

    sp = add("dim", cmd_dim, "box-counting dimension")
    sp.add_argument("--gen", type=int, default=10)

    sp = add("holder", cmd_holder, "Hoelder quotient sweep")
    sp.add_argument("--samples", type=int, default=suite.HOLDER_SAMPLES)
    return parser


def _glue_addresses(argv: list[str]) -> list[str]:
    """Addresses such as '--,-+' look like flags to argparse; bind them with '='."""
    out, k = [], 0
    while k < len(argv):
        if argv[k] == "--address" and k + 1 < len(argv):
            out.append(f"--address={argv[k + 1]}")
            k += 2
        else:
            out.append(argv[k])
            k += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_glue_addresses(sys.argv[1:] if argv is None else list(argv)))
    try:
        params, run = resolve(args)
        return args.func(args, params, run)
    except UsageError as exc:
        print(f"crushflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except flowmap.IntegrationError as exc:
        print(f"crushflow: integration failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
