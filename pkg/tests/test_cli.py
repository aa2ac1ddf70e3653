"""
Tests for the INI configuration loader and the command-line pipeline.
"""

import json

import pytest

from pipeline.cli import run_command
from pipeline.config_file import OUTPUT_ENV, load_run_config, parse_modes
from wkam.errors import ErrorCode, WkamError
from wkam.fixtures import fold_curve
from wkam.selector import write_curve_csv
from wkam.systems import Family, FourierMode


def write_config(directory, out="out", n=32, family="free", builtin="zero_section", extra=""):
    path = directory / "run.ini"
    path.write_text(
        f"[hamiltonian]\nfamily = {family}\n\n"
        f"[grid]\nn = {n}\n\n"
        "[kernel]\nt = 0.5\n\n"
        f"[curve]\nbuiltin = {builtin}\n\n"
        f"[output]\ndirectory = {out}\n"
        f"{extra}"
    )
    return path


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def test_parse_modes():
    assert parse_modes("1:0.0:0.05; 2:0.01:0", 1) == (
        FourierMode((1,), 0.0, 0.05),
        FourierMode((2,), 0.01, 0.0),
    )
    assert parse_modes("1,0:0:0.03", 2) == (FourierMode((1, 0), 0.0, 0.03),)
    assert parse_modes("", 1) == ()


@pytest.mark.parametrize("text,dim", [("1:0.5", 1), ("1,1:0:1", 1)])
def test_parse_modes_rejects_bad_terms(text, dim):
    with pytest.raises(WkamError) as excinfo:
        parse_modes(text, dim)
    assert excinfo.value.code == ErrorCode.CONFIG


def test_load_run_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        "[hamiltonian]\nfamily = mechanical\nmodes = 1:1.0:0.0\n\n"
        "[grid]\nn = 64\n\n"
        "[kernel]\nt = 1.0\nW = 1\ncache = k.bin\n\n"
        "[tolerances]\nsampled_nodes = 8\naubry_tol = 0.01\nomega_T = 20\n\n"
        "[curve]\npath = curve.csv\n\n"
        "[output]\ndirectory = results\nplot = yes\n"
    )
    config = load_run_config(path)
    assert config.spec.family == Family.MECHANICAL
    assert config.n == 64
    assert config.kernel.substeps == 10
    assert config.kernel.winding == 1
    assert config.kernel_cache == tmp_path / "k.bin"
    assert config.curve.path == tmp_path / "curve.csv"
    assert config.barrier.aubry_tolerance(64) == 0.01
    assert config.plot

    verifier = config.verifier_config()
    assert verifier.sampled_nodes == 8
    assert verifier.omega_T == 20.0
    assert verifier.n == 64


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env_out"))
    config = load_run_config(write_config(tmp_path))
    assert config.output_dir == tmp_path / "env_out"


@pytest.mark.parametrize("extra", [
    "[tolerances]\nwindow = many\n",
    "[tolerances]\nsolver_tol = -1\n",
])
def test_invalid_settings(tmp_path, extra):
    with pytest.raises((WkamError, ValueError)):
        load_run_config(write_config(tmp_path, extra=extra))


def test_unknown_family(tmp_path):
    with pytest.raises(WkamError) as excinfo:
        load_run_config(write_config(tmp_path, family="rigid_body"))
    assert excinfo.value.code == ErrorCode.CONFIG


def test_dimension_must_match_hamiltonian(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[hamiltonian]\nfamily = pendulum\n\n[grid]\nd = 2\nn = 16\n")
    with pytest.raises(WkamError) as excinfo:
        load_run_config(path)
    assert excinfo.value.code == ErrorCode.CONFIG


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def test_critical_value_command(tmp_path, capsys):
    config = write_config(tmp_path, out=tmp_path / "out")
    assert run_command(["critical-value", "--config", str(config)]) == 0
    assert "c=0.000000" in capsys.readouterr().out
    assert (tmp_path / "out" / "critical_value.csv").exists()


def test_verify_zero_section(tmp_path, capsys):
    config = write_config(tmp_path, out=tmp_path / "out")
    assert run_command(["verify", "--config", str(config)]) == 0
    assert "Verdict: GRAPH" in capsys.readouterr().out

    lines = (tmp_path / "out" / "report.jsonl").read_text().splitlines()
    assert json.loads(lines[-1])["verdict"] == "GRAPH"
    assert (tmp_path / "out" / "report.txt").exists()


def test_verify_circle_exit_code(tmp_path):
    config = write_config(tmp_path, out=tmp_path / "out", builtin="circle")
    assert run_command(["verify", "--config", str(config)]) == 2


def test_verify_curve_from_csv(tmp_path, capsys):
    config = write_config(tmp_path, out=tmp_path / "out", family="pendulum")
    curve = tmp_path / "fold.csv"
    write_curve_csv(curve, fold_curve())
    assert run_command(["verify", "--config", str(config), "--curve", str(curve)]) == 2
    assert "NOT_INVARIANT" in capsys.readouterr().out


def test_verify_without_curve_needs_adapted_system(tmp_path, capsys):
    path = tmp_path / "run.ini"
    path.write_text(f"[hamiltonian]\nfamily = free\n\n[grid]\nn = 32\n\n[output]\ndirectory = {tmp_path / 'out'}\n")
    assert run_command(["verify", "--config", str(path)]) == 1
    assert "❌" in capsys.readouterr().out


def test_cached_kernel_gives_same_barrier(tmp_path):
    config = write_config(tmp_path, out=tmp_path / "out")
    cache = tmp_path / "kernel.bin"
    assert run_command(["kernel", "--config", str(config), "--kernel-cache", str(cache)]) == 0
    assert cache.exists()

    assert run_command(["barrier", "--config", str(config), "--kernel-cache", str(cache),
                        "--out", str(tmp_path / "cached")]) == 0
    assert run_command(["barrier", "--config", str(config), "--out", str(tmp_path / "fresh")]) == 0
    cached = (tmp_path / "cached" / "barrier.csv").read_bytes()
    assert cached == (tmp_path / "fresh" / "barrier.csv").read_bytes()

    events = [json.loads(line) for line in (tmp_path / "cached" / "run_events.jsonl").read_text().splitlines()]
    assert any(e.get("diagnostic") == "kernel_cache_hit" for e in events)


def test_cache_from_another_system_is_not_reused(tmp_path):
    cache = tmp_path / "kernel.bin"
    (tmp_path / "pendulum").mkdir()
    (tmp_path / "free").mkdir()
    pendulum_config = write_config(tmp_path / "pendulum", family="pendulum")
    free_config = write_config(tmp_path / "free")
    assert run_command(["kernel", "--config", str(pendulum_config), "--kernel-cache", str(cache),
                        "--out", str(tmp_path / "pendulum_out")]) == 0

    out = tmp_path / "free_out"
    assert run_command(["barrier", "--config", str(free_config), "--kernel-cache", str(cache),
                        "--out", str(out)]) == 0
    events = [json.loads(line) for line in (out / "run_events.jsonl").read_text().splitlines()]
    assert not any(e.get("diagnostic") == "kernel_cache_hit" for e in events)

    fresh = tmp_path / "fresh_out"
    assert run_command(["barrier", "--config", str(free_config), "--out", str(fresh)]) == 0
    assert (out / "barrier.csv").read_bytes() == (fresh / "barrier.csv").read_bytes()


def test_threads_do_not_change_outputs(tmp_path):
    config = write_config(tmp_path)
    for threads, name in ((1, "one"), (4, "four")):
        assert run_command(["weak-kam", "--config", str(config), "--threads", str(threads),
                            "--out", str(tmp_path / name)]) == 0
    for artifact in ("weak_kam.csv", "run_events.jsonl"):
        assert (tmp_path / "one" / artifact).read_bytes() == (tmp_path / "four" / artifact).read_bytes()


def test_repeated_runs_are_identical(tmp_path):
    config = write_config(tmp_path)
    for name in ("first", "second"):
        assert run_command(["aubry", "--config", str(config), "--out", str(tmp_path / name)]) == 0
    for artifact in ("aubry.csv", "run_events.jsonl"):
        assert (tmp_path / "first" / artifact).read_bytes() == (tmp_path / "second" / artifact).read_bytes()


def test_run_events_lifecycle(tmp_path):
    config = write_config(tmp_path, out=tmp_path / "out")
    run_command(["critical-value", "--config", str(config)])
    events = [json.loads(line) for line in (tmp_path / "out" / "run_events.jsonl").read_text().splitlines()]
    assert events[0]["event_type"] == "run_start"
    assert events[0]["config"] == "run.ini"
    assert events[-1] == {"event_id": len(events) - 1, "event_type": "run_end", "command": "critical-value",
                          "exit_code": 0, "summary": {"c": 0.0}}
    assert [e["event_id"] for e in events] == list(range(len(events)))


def test_out_flag_beats_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env_out"))
    config = write_config(tmp_path)
    assert run_command(["critical-value", "--config", str(config), "--out", str(tmp_path / "flag_out")]) == 0
    assert (tmp_path / "flag_out" / "critical_value.csv").exists()
    assert not (tmp_path / "env_out").exists()


def test_environment_sets_output(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env_out"))
    config = write_config(tmp_path)
    assert run_command(["critical-value", "--config", str(config)]) == 0
    assert (tmp_path / "env_out" / "critical_value.csv").exists()


def test_selector_and_plots(tmp_path):
    config = write_config(tmp_path, out=tmp_path / "out", builtin="fold")
    assert run_command(["selector", "--config", str(config), "--plot"]) == 0
    assert (tmp_path / "out" / "phi.csv").exists()
    assert (tmp_path / "out" / "selector.svg").exists()

    assert run_command(["weak-kam", "--config", str(config), "--plot"]) == 0
    assert (tmp_path / "out" / "weak_kam.svg").exists()


def test_legendre_and_flow_commands(tmp_path, capsys):
    config = write_config(tmp_path, out=tmp_path / "out", family="pendulum")
    assert run_command(["legendre", "--config", str(config), "--points", "5"]) == 0
    assert (tmp_path / "out" / "legendre.csv").exists()

    assert run_command(["flow", "--config", str(config), "--q", "0.0", "--p", "1.5", "--T", "2.0"]) == 0
    assert (tmp_path / "out" / "trajectory.csv").exists()
    assert "energy drift" in capsys.readouterr().out

    assert run_command(["flow", "--config", str(config), "--q", "0.0", "0.1", "--p", "1.5"]) == 1


def test_missing_config_file(tmp_path, capsys):
    assert run_command(["critical-value", "--config", str(tmp_path / "absent.ini")]) == 1
    assert "❌" in capsys.readouterr().out


def test_grid_size_must_be_power_of_two(tmp_path, capsys):
    config = write_config(tmp_path, out=tmp_path / "out", n=12)
    assert run_command(["kernel", "--config", str(config)]) == 1
    assert "❌" in capsys.readouterr().out
