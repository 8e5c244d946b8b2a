import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adiabound import sweep as sweep_mod
from adiabound.cli import main
from adiabound.errors import BudgetExceeded, ParseError, ValidationError
from adiabound.sweep import (COLUMNS, SweepRecord, emit, parse_config, parse_records, phasors_to_csv,
                             read_records, run_sweep)


def test_minimal_config_defaults():
    cfg = parse_config('{"model": {"model": "search", "N": 4}, "T": [40, 20]}')
    assert cfg.T == (20.0, 40.0)
    assert cfg.schedule == "phi" and cfg.rel_tol == 0.01 and cfg.quad_tol == 1e-8
    assert cfg.format == "csv" and cfg.jobs == 1


def test_log_range():
    cfg = parse_config({"model": {"model": "toy"}, "T": {"t_min": 10, "t_max": 1000, "points": 3}})
    assert [round(t, 9) for t in cfg.T] == [10.0, 100.0, 1000.0]
    assert cfg.schedule == "uniform"


def test_validation_lists_every_problem():
    with pytest.raises(ValidationError) as info:
        parse_config({"model": {"model": "toy"}, "T": [-1], "rel_tol": 3, "format": "xml", "extra": 1})
    msg = str(info.value)
    for word in ("T values", "rel_tol", "format", "extra"):
        assert word in msg
    assert len(info.value.violations) == 4


def test_phi_schedule_needs_search():
    with pytest.raises(ValidationError):
        parse_config({"model": {"model": "toy"}, "T": 1, "schedule": "phi"})


def test_bad_json_reports_position():
    with pytest.raises(ParseError) as info:
        parse_config('{"model": {"model": "toy"},\n "T": [1,, 2]}')
    assert "line 2" in str(info.value)


@given(st.lists(st.floats(0.01, 1e5), min_size=1, max_size=5), st.sampled_from(["csv", "json"]),
       st.floats(1e-4, 0.5), st.integers(1, 4))
def test_config_round_trip(Ts, fmt, tol, jobs):
    cfg = parse_config({"model": {"model": "search", "N": 4}, "T": Ts, "format": fmt,
                        "rel_tol": tol, "jobs": jobs, "outputs": ["c1", "error"]})
    assert parse_config(cfg.to_json()) == cfg


def test_constant_model_sweep():
    cfg = parse_config({"model": {"model": "constant", "H": [[0, 0], [0, 1]]}, "T": [1, 10, 100]})
    recs = run_sweep(cfg)
    assert [r.T for r in recs] == [1.0, 10.0, 100.0]
    assert all(r.status == "ok" and r.error_exact == 0.0 and r.upper == 0.0 for r in recs)


def test_search_sweep_fields():
    cfg = parse_config({"model": {"model": "search", "N": 4}, "T": [20, 40],
                        "outputs": ["error", "bounds", "jrs", "c1", "c2"]})
    recs = run_sweep(cfg)
    for r in recs:
        assert r.status == "ok"
        assert r.lower <= r.error_exact <= r.upper
        assert r.two_level_upper is not None and r.c2_norm <= 1e-10
        assert abs(r.Gamma - (18 * math.sqrt(3) + 6)) <= 1e-9


def test_failure_is_isolated(monkeypatch):
    real = sweep_mod.evolve_adaptive

    def flaky(model, T, *a, **k):
        if T == 40.0:
            raise BudgetExceeded("synthetic")
        return real(model, T, *a, **k)

    monkeypatch.setattr(sweep_mod, "evolve_adaptive", flaky)
    cfg = parse_config({"model": {"model": "search", "N": 2}, "T": [20, 40, 80], "outputs": ["error"]})
    recs = run_sweep(cfg)
    assert [r.status == "ok" for r in recs] == [True, False, True]
    assert "BudgetExceeded" in recs[1].status and recs[1].error_exact is None


def test_parallel_matches_serial():
    cfg = parse_config({"model": {"model": "search", "N": 4}, "T": [5, 10, 20], "outputs": ["error", "bounds"]})
    assert emit(run_sweep(cfg, jobs=1)) == emit(run_sweep(cfg, jobs=2))


def test_emit_empty_and_counts():
    assert emit([]) == ",".join(COLUMNS) + "\n"
    recs = [SweepRecord(T=float(i + 1)) for i in range(7)]
    assert len(emit(recs).splitlines()) == 8
    with pytest.raises(ValueError):
        emit(recs, "xml")


finite = st.floats(allow_nan=False, allow_infinity=True)


@given(st.lists(st.builds(SweepRecord, T=st.floats(0.01, 1e6), L_used=st.none() | st.integers(1, 2 ** 40),
                          error_exact=st.none() | finite, upper=st.none() | finite,
                          status=st.sampled_from(["ok", "error: x"])), max_size=5),
       st.sampled_from(["csv", "json"]))
def test_records_round_trip_bit_identical(recs, fmt):
    assert parse_records(emit(recs, fmt), fmt) == recs


def test_read_records_from_file(tmp_path):
    recs = [SweepRecord(T=2.0, error_exact=0.1)]
    path = tmp_path / "r.json"
    emit(recs, "json", str(path))
    assert read_records(str(path)) == recs


def test_phasor_csv():
    text = phasors_to_csv([1, 1j])
    assert text.splitlines() == ["index,re,im", "0,1,0", "1,0,1"]


# command line

def test_cli_cancel(capsys):
    assert main(["cancel", "--model", "search", "--N", "4", "--n", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "n,T"
    assert abs(float(lines[1].split(",")[1]) - 9.1049242603639797) <= 1e-9


def test_cli_sweep_to_file_is_deterministic(tmp_path):
    outs = []
    for i in range(2):
        p = tmp_path / f"o{i}.csv"
        assert main(["sweep", "--model", "search", "--N", "4", "--T", "10,20", "--out", str(p)]) == 0
        outs.append(p.read_text())
    assert outs[0] == outs[1]
    assert len(read_records(str(tmp_path / "o0.csv"))) == 2


def test_cli_sweep_from_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": {"model": "toy"}, "T": [1, 2], "format": "json"}))
    assert main(["sweep", "--config", str(cfg)]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["T"] for r in rows] == [1.0, 2.0]


def test_cli_other_commands(capsys):
    assert main(["bounds", "--model", "search", "--T", "100"]) == 0
    assert main(["simulate", "--model", "search", "--T", "5", "--method", "rk"]) == 0
    assert main(["phases", "--T", "4", "--count", "5"]) == 0
    assert main(["projector-check", "--L", "512,1024"]) == 0
    out = capsys.readouterr().out
    assert "scaled_residual" in out and "index,re,im" in out


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"model": "toy"}, "T": [-5]}')
    assert main(["sweep", "--config", str(bad)]) == 1
    assert main(["sweep", "--model", "search", "--T", "-3"]) == 1
    assert main(["cancel", "--model", "toy"]) == 1
    assert main(["simulate", "--model", "search", "--T", "1", "--method", "rk", "--tol", "1e-300"]) == 2
    with pytest.raises(SystemExit) as info:
        main(["sweep", "--bogus"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
