"""Sweep configuration, per-``T`` records and CSV/JSON export.

Config schema (JSON object)::

    {
      "model":    {"model": "search", "N": 4},          # see load_model
      "T":        [20, 40, 80]  or  {"t_min": 10, "t_max": 1000, "points": 3},
      "schedule": "phi" | "uniform",      # default: phi for search, else uniform
      "rel_tol":  0.01,                   # adaptive step-doubling tolerance
      "quad_tol": 1e-8,                   # jump-contribution quadrature tolerance
      "outputs":  ["error", "bounds", "first_order", "jrs", "c1", "c2"],
      "format":   "csv" | "json",
      "out":      "results.csv",          # optional; stdout when absent
      "jobs":     1
    }
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .bounds import error_bounds
from .errors import AdiabaticError, InputError, ParseError, ValidationError
from .linalg import derivative_norms
from .models import load_model
from .pathsum import first_order_term, jump_contribution
from .propagator import evolve_adaptive

OUTPUTS = ("error", "bounds", "first_order", "jrs", "c1", "c2")
DEFAULT_OUTPUTS = ("error", "bounds", "first_order", "jrs")
FORMATS = ("csv", "json")
SCHEDULES = ("uniform", "phi")


@dataclass(frozen=True)
class SweepConfig:
    model: dict
    T: tuple
    schedule: str
    rel_tol: float = 0.01
    quad_tol: float = 1e-8
    outputs: tuple = DEFAULT_OUTPUTS
    format: str = "csv"
    out: Optional[str] = None
    jobs: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["T"] = list(self.T)
        d["outputs"] = list(self.outputs)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _log_range(spec, problems):
    try:
        t_min, t_max, points = float(spec["t_min"]), float(spec["t_max"]), spec["points"]
    except (KeyError, TypeError, ValueError):
        problems.append("T range needs numeric t_min, t_max and integer points")
        return []
    if not isinstance(points, int) or isinstance(points, bool) or points < 1:
        problems.append(f"points must be an integer >= 1, got {points!r}")
        return []
    if not (t_min > 0 and t_max > 0):
        problems.append("t_min and t_max must be positive")
        return []
    if t_max < t_min:
        problems.append("t_max must not be below t_min")
        return []
    if points == 1:
        return [t_min]
    return [float(v) for v in np.geomspace(t_min, t_max, points)]


def parse_config(text) -> SweepConfig:
    """Validate a sweep config given as JSON text or a decoded dict.

    Raises :class:`ParseError` for malformed JSON and
    :class:`ValidationError` listing every problem found otherwise.
    """
    if isinstance(text, (str, bytes)):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    else:
        data = text
    if not isinstance(data, dict):
        raise ParseError("config must be a JSON object")
    problems = []
    known = {f.name for f in fields(SweepConfig)}
    for key in data:
        if key not in known:
            problems.append(f"unknown field {key!r}")

    model = data.get("model")
    if not isinstance(model, dict):
        problems.append("field 'model' must be an object such as {\"model\": \"search\", \"N\": 4}")
        model = {}
    else:
        try:
            load_model(model)
        except InputError as exc:
            problems.append(f"model: {exc}")

    Ts = data.get("T")
    if isinstance(Ts, dict):
        Ts = _log_range(Ts, problems)
    elif isinstance(Ts, (list, tuple)):
        bad = [v for v in Ts if isinstance(v, bool) or not isinstance(v, (int, float))
               or not math.isfinite(v) or v <= 0]
        if bad or not Ts:
            problems.append(f"T values must be positive finite numbers, got {Ts!r}")
            Ts = []
        Ts = sorted(float(v) for v in Ts)
    elif isinstance(Ts, (int, float)) and not isinstance(Ts, bool) and Ts > 0:
        Ts = [float(Ts)]
    else:
        problems.append("field 'T' must be a positive number, a list, or {t_min, t_max, points}")
        Ts = []

    default_schedule = "phi" if model.get("model") == "search" else "uniform"
    schedule = data.get("schedule", default_schedule)
    if schedule not in SCHEDULES:
        problems.append(f"schedule must be one of {SCHEDULES}, got {schedule!r}")
    elif schedule == "phi" and model.get("model") != "search":
        problems.append("the phi schedule is only available for the search model")

    rel_tol = data.get("rel_tol", 0.01)
    if isinstance(rel_tol, bool) or not isinstance(rel_tol, (int, float)) or not 0 < rel_tol <= 0.5:
        problems.append(f"rel_tol must lie in (0, 0.5], got {rel_tol!r}")
    quad_tol = data.get("quad_tol", 1e-8)
    if isinstance(quad_tol, bool) or not isinstance(quad_tol, (int, float)) or not 0 < quad_tol <= 1e-2:
        problems.append(f"quad_tol must lie in (0, 1e-2], got {quad_tol!r}")
    outputs = data.get("outputs", list(DEFAULT_OUTPUTS))
    if not isinstance(outputs, list) or any(o not in OUTPUTS for o in outputs):
        problems.append(f"outputs must be a list drawn from {OUTPUTS}, got {outputs!r}")
        outputs = []
    fmt = data.get("format", "csv")
    if fmt not in FORMATS:
        problems.append(f"format must be one of {FORMATS}, got {fmt!r}")
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        problems.append("out must be a path string")
    jobs = data.get("jobs", 1)
    if isinstance(jobs, bool) or not isinstance(jobs, int) or jobs < 1:
        problems.append(f"jobs must be an integer >= 1, got {jobs!r}")
    if problems:
        raise ValidationError(problems)
    ordered = tuple(o for o in OUTPUTS if o in outputs)
    return SweepConfig(model, tuple(Ts), schedule, float(rel_tol), float(quad_tol),
                       ordered, fmt, out, jobs)


@dataclass
class SweepRecord:
    """One row of a sweep; fields not requested or not computable are None."""

    T: float
    L_used: Optional[int] = None
    error_exact: Optional[float] = None
    first_order_norm: Optional[float] = None
    upper: Optional[float] = None
    lower: Optional[float] = None
    two_level_upper: Optional[float] = None
    jrs: Optional[float] = None
    delta0: Optional[float] = None
    delta1: Optional[float] = None
    Gamma: Optional[float] = None
    R: Optional[float] = None
    c1_norm: Optional[float] = None
    c2_norm: Optional[float] = None
    tail: Optional[float] = None
    status: str = "ok"


COLUMNS = tuple(f.name for f in fields(SweepRecord))
_INT_COLUMNS = {"L_used"}
_STR_COLUMNS = {"status"}


def run_record(config: SweepConfig, T: float, norms=None) -> SweepRecord:
    """Evaluate one ``T``; numerical or input failures are recorded in ``status``."""
    rec = SweepRecord(T=float(T))
    try:
        model = load_model(config.model).at_time(T)
        want = set(config.outputs)
        if "error" in want:
            res = evolve_adaptive(model, T, config.rel_tol, config.schedule)
            rec.L_used = int(res.L_used)
            rec.error_exact = float(res.error)
        if want & {"bounds", "jrs"}:
            b = error_bounds(model, T, norms=norms)
            rec.first_order_norm = b.leading_norm
            if "bounds" in want:
                rec.upper, rec.lower = b.upper, b.lower
                rec.two_level_upper = b.two_level_upper
                rec.delta0, rec.delta1 = b.delta0, b.delta1
                rec.Gamma, rec.R, rec.tail = b.Gamma, b.R, b.tail
            if "jrs" in want:
                rec.jrs = b.jrs
        elif "first_order" in want:
            rec.first_order_norm = first_order_term(model, T).norm
        if "c1" in want:
            rec.c1_norm = jump_contribution(model, T, 1, config.quad_tol).norm
        if "c2" in want:
            rec.c2_norm = jump_contribution(model, T, 2, config.quad_tol).norm
    except (AdiabaticError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        rec.status = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    return rec


def _worker(args):
    cfg_dict, T = args
    return run_record(parse_config(cfg_dict), T)


def run_sweep(config: SweepConfig, jobs: Optional[int] = None) -> list:
    """One record per ``T`` in ascending order, computed serially or in a process pool."""
    jobs = config.jobs if jobs is None else jobs
    if jobs > 1 and len(config.T) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            recs = list(pool.map(_worker, [(config.to_dict(), T) for T in config.T]))
    else:
        norms = None
        model = load_model(config.model)
        if not model.t_dependent and set(config.outputs) & {"bounds", "jrs"}:
            try:
                norms = derivative_norms(model)
            except AdiabaticError:
                norms = None  # each record reports the failure itself
        recs = [run_record(config, T, norms) for T in config.T]
    return sorted(recs, key=lambda r: r.T)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return "%.17g" % value


def _parse_cell(name, text):
    if text == "" and name not in _STR_COLUMNS:
        return None
    if name in _STR_COLUMNS:
        return text
    if name in _INT_COLUMNS:
        return int(text)
    return float(text)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def records_to_json(records) -> str:
    rows = []
    for r in records:
        row = {}
        for c in COLUMNS:
            v = getattr(r, c)
            if isinstance(v, float) and not math.isfinite(v):
                v = _fmt(v)  # JSON has no literal for inf or nan
            elif isinstance(v, float):
                v = float("%.17g" % v)
            row[c] = v
        rows.append(row)
    return json.dumps(rows, indent=1)


def emit(records, fmt: str = "csv", path: Optional[str] = None) -> str:
    """Serialise records; writes to ``path`` when given and returns the text."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    text = records_to_csv(records) if fmt == "csv" else records_to_json(records)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def parse_records(text: str, fmt: str = "csv") -> list:
    if fmt == "csv":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != COLUMNS:
            raise ParseError("CSV header does not match the record columns")
        return [SweepRecord(**{c: _parse_cell(c, v) for c, v in zip(COLUMNS, row)})
                for row in rows[1:]]
    data = json.loads(text)
    out = []
    for row in data:
        vals = {}
        for c in COLUMNS:
            v = row.get(c)
            if isinstance(v, str) and c not in _STR_COLUMNS:
                v = float(v)
            vals[c] = v
        out.append(SweepRecord(**vals))
    return out


def read_records(path: str, fmt: Optional[str] = None) -> list:
    fmt = fmt or ("json" if path.endswith(".json") else "csv")
    with open(path, encoding="utf-8") as fh:
        return parse_records(fh.read(), fmt)


def phasors_to_csv(values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("index", "re", "im"))
    for i, z in enumerate(np.asarray(values).ravel()):
        w.writerow((i, "%.17g" % z.real, "%.17g" % z.imag))
    return buf.getvalue()
