"""``narrownet`` command line: approximate, interpolate, compile, eval, verify, analyze, report.

Exit status: 0 success, 1 verification failure, 2 usage error, 3 internal or
geometry error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .affine import dumps_string, eval_string, loads_string
from .analyzer import certify_lower_bound
from .builder import build, grid_error
from .compiler import compile_string, verify_compilation
from .domain import Ball, Box, enclosing_ball
from .errors import (
    DegenerateConfigurationError,
    DimensionError,
    NarrowNetError,
    OutOfScopeNetError,
    SchemaError,
    TargetEvaluationError,
    UnusableModulusError,
)
from .expr import ExprEvalError, ExprSyntaxError, parse
from .interpolate import LabeledPointSet, interpolate
from .modulus import Hoelder, Lipschitz, estimate_modulus, inverse_modulus, modulus
from .net import ReluNet, dumps_net, forward, loads_net

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3
DEFAULT_GRID = {1: 10_000, 2: 200, 3: 40}

USAGE_ERRORS = (
    DimensionError, SchemaError, OutOfScopeNetError, UnusableModulusError,
    DegenerateConfigurationError, TargetEvaluationError, ExprSyntaxError, ExprEvalError,
)


class UsageError(Exception):
    pass


# -- parsing helpers -------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def parse_domain(text: str, d_in: int | None = None):
    """``box:lo..hi`` (scalars broadcast over dimensions, or comma vectors) or ``ball:c1,c2,...:r``."""
    kind, _, rest = text.partition(":")
    if kind == "box":
        lo_s, sep, hi_s = rest.partition("..")
        if not sep:
            raise UsageError(f"box domain must look like box:lo..hi, got {text!r}")
        lo, hi = _floats(lo_s), _floats(hi_s)
        n = d_in or max(len(lo), len(hi))
        if len(lo) == 1:
            lo = lo * n
        if len(hi) == 1:
            hi = hi * n
        if len(lo) != n or len(hi) != n:
            raise UsageError(f"box bounds do not match input dimension {n}")
        return Box(lo, hi)
    if kind == "ball":
        c_s, sep, r_s = rest.rpartition(":")
        if not sep:
            raise UsageError(f"ball domain must look like ball:c1,...:r, got {text!r}")
        c = _floats(c_s)
        if d_in is not None and len(c) == 1 and d_in > 1:
            c = c * d_in
        if d_in is not None and len(c) != d_in:
            raise UsageError(f"ball center has {len(c)} coordinates, expected {d_in}")
        try:
            return Ball(c, float(r_s))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    raise UsageError(f"unknown domain kind {kind!r}; use box:lo..hi or ball:c:r")


def parse_target(source: str, d_in: int, d_out: int | None = None):
    f = parse(source, d_in)
    if d_out is not None and f.d_out != d_out:
        raise UsageError(f"--fn has {f.d_out} component(s) but --dout is {d_out}")
    return f


def modulus_from_args(args, f, domain):
    if args.lipschitz is not None:
        return Lipschitz(args.lipschitz)
    if args.hoelder is not None:
        c, _, a = args.hoelder.partition(":")
        try:
            return Hoelder(float(c), float(a) if a else 1.0)
        except ValueError as exc:
            raise UsageError(f"bad --hoelder value {args.hoelder!r}: {exc}") from None
    return estimate_modulus(f, enclosing_ball(domain), rng=args.seed)


def verification_grid(domain, n: int | None = None):
    """Regular grid over ``domain`` and its spacing ``h``; ball domains keep points inside."""
    d = domain.dim
    n = n or DEFAULT_GRID.get(d, 10)
    if isinstance(domain, Box):
        return domain.grid(n)
    box = Box(domain.center - domain.radius, domain.center + domain.radius)
    pts, h = box.grid(n)
    return pts[domain.contains(pts)], h


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _config(args) -> dict:
    skip = {"func", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _with_meta(net: ReluNet, extra: dict) -> ReluNet:
    return ReluNet(net.layers, {**net.meta, **extra})


def _compile_checked(g, ball, args, out_path):
    net = compile_string(g, ball)
    report = verify_compilation(net, g, ball, rng=args.seed)
    if not report.passed:
        print(f"compiled net failed verification: {json.dumps(report.as_dict())}", file=sys.stderr)
        return EXIT_VERIFY
    net = _with_meta(net, {"config": _config(args), "verification": report.as_dict()})
    atomic_write(out_path, dumps_net(net))
    print(f"wrote net to {out_path}: depth {net.depth}, widths {sorted(set(net.hidden_widths))}")
    return EXIT_OK


# -- commands ----------------------------------------------------------------------

def cmd_approximate(args) -> int:
    domain = parse_domain(args.domain, args.din)
    if domain.dim != args.din:
        raise UsageError(f"domain dimension {domain.dim} differs from --din {args.din}")
    f = parse_target(args.fn, args.din, args.dout)
    spec = modulus_from_args(args, f, domain)
    g, trace = build(f, spec, domain, args.eps, increment=args.increment)
    ball = enclosing_ball(domain)

    pts, h = verification_grid(domain, args.grid)
    errors = grid_error(f, g, pts)
    slack = modulus(spec, h)
    max_err = float(errors.max())
    ok = max_err <= args.eps + slack

    atomic_write(args.out, dumps_string(g))
    if args.trace:
        atomic_write(args.trace, _csv_text(trace.csv_rows()))
    print(f"string length {g.length} over {len(trace.annuli)} annulus increments "
          f"(w={trace.w:.6g}, R={ball.radius:.6g})")
    print(f"grid max error {max_err:.6g} (eps {args.eps:g} + slack {slack:.3g}); "
          f"modulus {'heuristic' if trace.heuristic else 'analytic'}")
    if not ok:
        print(f"verification failed: max error {max_err:.6g} > {args.eps + slack:.6g}", file=sys.stderr)
        return EXIT_VERIFY
    if args.compile:
        return _compile_checked(g, ball, args, args.compile)
    return EXIT_OK


def _read_points(path: str, d_in: int):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise UsageError(f"non-numeric entry in {path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] <= d_in:
        raise UsageError(f"{path}: each row needs {d_in} coordinates followed by at least one value")
    return LabeledPointSet(data[:, :d_in], data[:, d_in:])


def cmd_interpolate(args) -> int:
    data = _read_points(args.points, args.din)
    g = interpolate(data, rng=args.seed)
    got = eval_string(g, data.points)
    dev = float(np.max(np.abs(got - data.values)))
    tol = 1e-8 * (1.0 + float(np.max(np.abs(data.values))))
    atomic_write(args.out, dumps_string(g))
    print(f"string length {g.length} through {len(data)} points; max deviation {dev:.3g}")
    if dev > tol:
        print(f"interpolation check failed: {dev:.3g} > {tol:.3g}", file=sys.stderr)
        return EXIT_VERIFY
    if args.compile:
        ball = enclosing_ball(parse_domain(args.domain, args.din) if args.domain else data.points)
        return _compile_checked(g, ball, args, args.compile)
    return EXIT_OK


def cmd_compile(args) -> int:
    with open(args.string) as fh:
        g = loads_string(fh.read())
    ball = enclosing_ball(parse_domain(args.domain, g.d_in))
    return _compile_checked(g, ball, args, args.out)


def cmd_eval(args) -> int:
    if (args.net is None) == (args.string is None):
        raise UsageError("give exactly one of --net or --string")
    x = np.array(_floats(args.input))
    if args.net:
        with open(args.net) as fh:
            y = forward(loads_net(fh.read()), x)
    else:
        with open(args.string) as fh:
            y = eval_string(loads_string(fh.read()), x)
    print(",".join(repr(float(v)) for v in y))
    return EXIT_OK


def cmd_verify(args) -> int:
    with open(args.net) as fh:
        net = loads_net(fh.read())
    f = parse_target(args.fn, net.d_in)
    if f.d_out != net.d_out:
        raise UsageError(f"--fn has {f.d_out} component(s), net has {net.d_out} output(s)")
    domain = parse_domain(args.domain, net.d_in)
    pts, h = verification_grid(domain, args.grid)
    diff = np.abs(f(pts) - forward(net, pts))
    err = diff.max(axis=1)
    slack = args.lipschitz * h if args.lipschitz is not None else 0.0
    print(f"points {len(pts)}  max error {err.max():.6g}  mean error {err.mean():.6g}  "
          f"grid spacing {h:.4g}  slack {slack:.4g}")
    if args.csv:
        rows = [[f"x{i + 1}" for i in range(net.d_in)] + ["error"]]
        rows += [[repr(float(v)) for v in p] + [repr(float(e))] for p, e in zip(pts, err)]
        atomic_write(args.csv, _csv_text(rows))
    if args.eps is not None and err.max() > args.eps + slack:
        print(f"verification failed: {err.max():.6g} > {args.eps + slack:.6g}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_analyze(args) -> int:
    with open(args.net) as fh:
        net = loads_net(fh.read())
    if args.din is not None and net.d_in != args.din:
        raise OutOfScopeNetError(f"net has input dimension {net.d_in}, expected {args.din}")
    cert = certify_lower_bound(net, tol=args.tol)
    bound = "n/a" if cert.bound is None else f"{cert.bound:.9g}"
    print(f"case {cert.case}  bound {bound}  threshold {cert.threshold:g}  "
          f"halfspaces {cert.halfspace_count}")
    if cert.witness is not None:
        print("witness " + ",".join(f"{v:.9g}" for v in cert.witness))
    print(cert.diagnosis)
    if args.out:
        atomic_write(args.out, json.dumps(cert.as_dict(), indent=2) + "\n")
    return EXIT_OK


def fit_slope(xs, ys):
    """Least-squares slope of ``log ys`` against ``log xs``, or ``None`` when undefined."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    if len(lx) < 2 or np.ptp(lx) == 0 or np.ptp(ly) == 0:
        return None
    return float(np.polyfit(lx, ly, 1)[0])


def depth_report(f, spec, domain, eps_values, increment=10.0):
    """Rows ``(eps, w, R, length, predicted)`` and the fitted log-log slope of length vs ``1/w``."""
    ball = enclosing_ball(domain)
    d = ball.dim
    rows = []
    for eps in eps_values:
        g, _ = build(f, spec, domain, eps, increment=increment)
        w = inverse_modulus(spec, eps)
        rows.append((eps, w, ball.radius, g.length, (ball.radius / w) ** (d + 1)))
    slope = fit_slope([1.0 / r[1] for r in rows], [r[3] for r in rows])
    return rows, slope


def cmd_report(args) -> int:
    eps_values = _floats(args.sweep)
    if len(eps_values) < 2:
        raise UsageError("--sweep needs at least two eps values")
    domain = parse_domain(args.domain, args.din)
    f = parse_target(args.fn, args.din)
    spec = modulus_from_args(args, f, domain)
    rows, slope = depth_report(f, spec, domain, eps_values, args.increment)
    lines = [("eps", "w", "R", "length", "predicted")]
    lines += [(repr(e), repr(w), repr(R), n, repr(p)) for e, w, R, n, p in rows]
    text = _csv_text(lines) + f"# slope,{'n/a' if slope is None else repr(slope)}\n"
    atomic_write(args.out, text)
    for e, w, R, n, p in rows:
        print(f"eps {e:<8g} w {w:<10.6g} length {n:<10d} predicted {p:.6g}")
    print("slope n/a" if slope is None else f"slope {slope:.4f}")
    return EXIT_OK


# -- argument parser -------------------------------------------------------------

def _add_modulus(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--lipschitz", type=float, help="Lipschitz constant L")
    g.add_argument("--hoelder", help="Hoelder modulus C:alpha")
    g.add_argument("--estimate-modulus", action="store_true", help="estimate the modulus by sampling (heuristic)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="narrownet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("approximate", help="build an eps-approximating max-min string")
    a.add_argument("--fn", required=True)
    a.add_argument("--din", type=int, required=True, choices=(1, 2, 3))
    a.add_argument("--dout", type=int)
    a.add_argument("--eps", type=float, required=True)
    _add_modulus(a)
    a.add_argument("--domain", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--compile", metavar="NET_JSON")
    a.add_argument("--trace", metavar="CSV")
    a.add_argument("--grid", type=int, help="verification grid points per axis")
    a.add_argument("--increment", type=float, default=10.0, help="annulus increment constant")
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_approximate)

    i = sub.add_parser("interpolate", help="exact string through labelled points")
    i.add_argument("--points", required=True, help="CSV rows x1..xd,f1..fk")
    i.add_argument("--din", type=int, required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--compile", metavar="NET_JSON")
    i.add_argument("--domain", help="compilation domain (default: ball around the points)")
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(func=cmd_interpolate)

    c = sub.add_parser("compile", help="lower a string to a ReLU net")
    c.add_argument("--string", required=True)
    c.add_argument("--domain", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_compile)

    e = sub.add_parser("eval", help="evaluate a net or string at one point")
    e.add_argument("--net")
    e.add_argument("--string")
    e.add_argument("--input", required=True)
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="grid error of a net against a target")
    v.add_argument("--net", required=True)
    v.add_argument("--fn", required=True)
    v.add_argument("--domain", required=True)
    v.add_argument("--grid", type=int)
    v.add_argument("--eps", type=float)
    v.add_argument("--lipschitz", type=float, help="target Lipschitz constant for the grid slack")
    v.add_argument("--csv", help="per-point error CSV")
    v.set_defaults(func=cmd_verify)

    z = sub.add_parser("analyze", help="lower-bound certificate for a width-d_in net")
    z.add_argument("--net", required=True)
    z.add_argument("--din", type=int)
    z.add_argument("--tol", type=float, default=1e-9)
    z.add_argument("--out", help="certificate JSON")
    z.set_defaults(func=cmd_analyze)

    r = sub.add_parser("report", help="string length over an eps sweep")
    r.add_argument("--sweep", required=True, help='comma-separated eps values, e.g. "0.2,0.1,0.05"')
    r.add_argument("--fn", required=True)
    r.add_argument("--din", type=int, required=True, choices=(1, 2, 3))
    _add_modulus(r)
    r.add_argument("--domain", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--increment", type=float, default=10.0)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, OSError, *USAGE_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NarrowNetError, ArithmeticError) as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        # bad flag values surface as ValueError from constructors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
