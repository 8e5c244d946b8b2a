"""Command-line interface.

Exit codes: 0 on success, 1 for invalid input (bad flags, configs or
models), 2 when the numerics fail on valid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .bounds import cancellation_times
from .errors import InputError, NumericalError, ValidationError
from .models import load_model
from .pathsum import JumpPath, one_jump_phasors, path_product_check
from .propagator import evolve_adaptive, evolve_rk
from .sweep import OUTPUTS, emit, parse_config, phasors_to_csv, run_sweep


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text: str):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers separated by commas, got {text!r}")


def _int_list(text: str):
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers separated by commas, got {text!r}")


def _add_model_flags(p, default_model: Optional[str] = "search"):
    g = p.add_argument_group("model")
    g.add_argument("--config", metavar="PATH", help="JSON sweep config; its 'model' entry is used")
    g.add_argument("--model", default=None,
                   help=f"builtin model: search, marzlin_sanders, toy (default {default_model})")
    g.add_argument("--N", type=int, default=4, help="search dimension (default 4)")
    g.add_argument("--omega0", type=float, default=1.0, help="Marzlin-Sanders frequency (default 1)")
    g.add_argument("--softening", type=float, default=1.0,
                   help="Marzlin-Sanders softening exponent in [0, 1] (default 1)")
    p.set_defaults(_default_model=default_model)


def _read_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text)
    return cfg.to_dict()


def _model_dict(args) -> dict:
    if args.config:
        return _read_config_file(args.config)["model"]
    name = args.model or args._default_model
    if name == "search":
        return {"model": "search", "N": args.N}
    if name == "marzlin_sanders":
        return {"model": "marzlin_sanders", "omega0": args.omega0, "softening": args.softening}
    return {"model": name}


def _write(text: str, out: Optional[str]):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_sweep(args):
    if args.config:
        data = _read_config_file(args.config)
    else:
        data = {"model": _model_dict(args)}
    if args.T is not None:
        data["T"] = args.T
    elif args.t_min is not None or args.t_max is not None or args.points is not None:
        data["T"] = {"t_min": args.t_min, "t_max": args.t_max, "points": args.points}
    for key, val in (("schedule", args.schedule), ("rel_tol", args.rel_tol),
                     ("quad_tol", args.quad_tol), ("format", args.format),
                     ("out", args.out), ("jobs", args.jobs)):
        if val is not None:
            data[key] = val
    if args.outputs is not None:
        data["outputs"] = args.outputs.split(",")
    if "T" not in data:
        raise ValidationError("no T values given (use --T or --t-min/--t-max/--points)")
    if "schedule" not in data and data["model"].get("model") != "search":
        data["schedule"] = "uniform"
    cfg = parse_config(data)
    records = run_sweep(cfg)
    text = emit(records, cfg.format, cfg.out)
    if not cfg.out:
        sys.stdout.write(text)
    return 0


def _cmd_bounds(args):
    data = {"model": _model_dict(args), "T": args.T,
            "outputs": ["bounds", "jrs"] + (["c1", "c2"] if args.jumps else []),
            "format": args.format}
    if data["model"].get("model") != "search":
        data["schedule"] = "uniform"
    cfg = parse_config(data)
    _write(emit(run_sweep(cfg), cfg.format), args.out)
    return 0


def _cmd_simulate(args):
    model = load_model(_model_dict(args))
    schedule = args.schedule or ("phi" if model.name == "search" else "uniform")
    rows = []
    for T in args.T:
        if args.method == "rk":
            res = evolve_rk(model, T, args.tol)
        else:
            res = evolve_adaptive(model, T, args.rel_tol, schedule)
        rows.append({"T": T, "method": res.method, "L_used": res.L_used, "error": res.error,
                     "norm_drift": res.diagnostics.get("norm_drift")})
    if args.format == "json":
        text = json.dumps(rows, indent=1) + "\n"
    else:
        cols = ["T", "method", "L_used", "error", "norm_drift"]
        lines = [",".join(cols)]
        for r in rows:
            lines.append(",".join("%.17g" % r[c] if isinstance(r[c], float) else str(r[c])
                                  for c in cols))
        text = "\n".join(lines) + "\n"
    _write(text, args.out)
    return 0


def _cmd_phases(args):
    model = load_model(_model_dict(args))
    ph = one_jump_phasors(model, args.T, args.count)
    _write(phasors_to_csv(ph), args.out)
    sys.stderr.write(f"count={args.count} |sum|={abs(ph.sum()):.6f} |mean|={abs(ph.mean()):.6f}\n")
    return 0


def _cmd_projector_check(args):
    model = load_model(_model_dict(args))
    if len(args.labels) != len(args.times):
        raise ValidationError("--labels and --times need the same number of entries")
    path = JumpPath(tuple(args.labels), tuple(args.times))
    buf = []
    buf.append("L,q,residual,scaled_residual,snapped")
    for L in args.L:
        chk = path_product_check(path, L, model, snap=args.snap)
        buf.append(f"{L},{chk.q},{chk.residual:.17g},{chk.scaled_residual:.17g},{int(chk.snapped)}")
    _write("\n".join(buf) + "\n", args.out)
    return 0


def _cmd_cancel(args):
    model = load_model(_model_dict(args))
    times = cancellation_times(model, args.n)
    lines = ["n,T"] + [f"{i},{t:.17g}" for i, t in enumerate(times, start=1)]
    _write("\n".join(lines) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adiabound",
                description="Adiabatic-evolution error simulation and rigorous error bounds.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sweep", help="exact error, bounds and jump terms over a range of T")
    _add_model_flags(s)
    s.add_argument("--T", type=_float_list, help="comma-separated total times")
    s.add_argument("--t-min", type=float, help="log-range start")
    s.add_argument("--t-max", type=float, help="log-range end")
    s.add_argument("--points", type=int, help="log-range point count")
    s.add_argument("--schedule", choices=("uniform", "phi"),
                   help="step grid (default phi for search, else uniform)")
    s.add_argument("--rel-tol", type=float, help="step-doubling tolerance (default 0.01)")
    s.add_argument("--quad-tol", type=float, help="jump quadrature tolerance (default 1e-8)")
    s.add_argument("--outputs", help=f"comma-separated subset of {','.join(OUTPUTS)}")
    s.add_argument("--format", choices=("csv", "json"))
    s.add_argument("--out", metavar="PATH", help="output file (default stdout)")
    s.add_argument("--jobs", type=int, help="worker processes (default 1)")
    s.set_defaults(func=_cmd_sweep)

    b = sub.add_parser("bounds", help="bound report without simulating")
    _add_model_flags(b)
    b.add_argument("--T", type=_float_list, required=True, help="comma-separated total times")
    b.add_argument("--jumps", action="store_true", help="also compute one- and two-jump terms")
    b.add_argument("--format", choices=("csv", "json"), default="csv")
    b.add_argument("--out", metavar="PATH")
    b.set_defaults(func=_cmd_bounds)

    m = sub.add_parser("simulate", help="evolve and report the exact adiabatic error")
    _add_model_flags(m)
    m.add_argument("--T", type=_float_list, required=True, help="comma-separated total times")
    m.add_argument("--method", choices=("adaptive", "rk"), default="adaptive")
    m.add_argument("--schedule", choices=("uniform", "phi"))
    m.add_argument("--rel-tol", type=float, default=0.01)
    m.add_argument("--tol", type=float, default=1e-10, help="Runge-Kutta local tolerance")
    m.add_argument("--format", choices=("csv", "json"), default="csv")
    m.add_argument("--out", metavar="PATH")
    m.set_defaults(func=_cmd_simulate)

    ph = sub.add_parser("phases", help="one-jump phasors at uniformly spaced jump times")
    _add_model_flags(ph, default_model="toy")
    ph.add_argument("--T", type=float, required=True)
    ph.add_argument("--count", type=int, default=21)
    ph.add_argument("--out", metavar="PATH")
    ph.set_defaults(func=_cmd_phases)

    pc = sub.add_parser("projector-check", help="projector-product vs amplitude-product residuals")
    _add_model_flags(pc)
    pc.add_argument("--labels", type=_int_list, default=[0, 1], help="level labels, starting at 0")
    pc.add_argument("--times", type=_float_list, default=[0.0, 0.5], help="times, starting at 0")
    pc.add_argument("--L", type=_int_list, default=[512, 1024, 2048], help="step counts")
    pc.add_argument("--snap", action="store_true", help="round times to the nearest grid point")
    pc.add_argument("--out", metavar="PATH")
    pc.set_defaults(func=_cmd_projector_check)

    c = sub.add_parser("cancel", help="total times at which the leading error term vanishes")
    _add_model_flags(c)
    c.add_argument("--n", type=int, default=3, help="number of times to list")
    c.add_argument("--out", metavar="PATH")
    c.set_defaults(func=_cmd_cancel)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
