"""
Tests for the graph verifier, its individual checks and the report formats.
"""

import numpy as np
import pytest

from pipeline.report_generator import ReportGenerator
from pipeline.report_io import read_report_jsonl, report_to_records, write_report_jsonl
from wkam import verifier
from wkam.config import BarrierConfig, VerifierConfig
from wkam.errors import ErrorCode, WkamError
from wkam.events import EventLog, EventType
from wkam.fixtures import (
    adapted_fixture,
    circle,
    fold_curve,
    graph_curve,
    graph_field,
    pendulum_level_curve,
    zero_section,
)
from wkam.systems import flow_integrate, free, pendulum
from wkam.torus import GridField, PhasePoint, TorusGrid
from wkam.verifier import (
    StageRecord,
    Verdict,
    VerifierReport,
    action_identity_check,
    barrier_inequality_check,
    invariance_check,
    k_equals_c_check,
    level_set_check,
    nonwandering_aubry_check,
    omega_limit_points,
    verify_birkhoff,
    verify_graph_field,
)


@pytest.fixture(scope="module")
def zero_section_report():
    log = EventLog()
    report = verify_birkhoff(free(), zero_section(), VerifierConfig(n=32), log)
    return report, log


# ---------------------------------------------------------------------------
# Whole runs
# ---------------------------------------------------------------------------

def test_zero_section_is_a_graph(zero_section_report):
    report, log = zero_section_report
    assert report.verdict == Verdict.GRAPH
    assert report.exit_code == 0
    assert report.failed_stage is None
    assert report.c_value == 0.0
    assert report.k_level == 0.0
    assert report.hausdorff_graph_vs_curve == pytest.approx(0.0, abs=1e-12)
    assert log.of_type(EventType.VERDICT)[0].details["verdict"] == "GRAPH"


def test_stage_order(zero_section_report):
    report, _ = zero_section_report
    assert [s.name for s in report.stages] == [
        "exactness",
        "level_set",
        "invariance",
        "selector",
        "kernel_critical_value",
        "domination",
        "k_equals_c",
        "barrier_aubry",
        "aubry_extremality",
        "barrier_inequalities",
        "nonwandering_aubry",
        "action_identity",
        "refinement_c11",
        "hausdorff",
        "projection_injectivity",
    ]
    assert not report.stage("action_identity").mandatory


def test_adapted_graph_is_a_graph():
    spec = adapted_fixture()
    report = verify_birkhoff(spec, graph_curve(spec.series))
    assert report.verdict == Verdict.GRAPH
    assert report.c_value == pytest.approx(0.0, abs=1e-3)
    assert report.hausdorff_graph_vs_curve <= 2.0 / 128


def test_circle_is_not_exact():
    report = verify_birkhoff(free(), circle(0.3), VerifierConfig(n=32))
    assert report.verdict == Verdict.NOT_EXACT
    assert report.exit_code == 2
    assert report.failed_stage == "exactness"
    assert len(report.stages) == 1


def test_pendulum_level_curve_is_not_exact():
    report = verify_birkhoff(pendulum(), pendulum_level_curve(2.0), VerifierConfig(n=32))
    assert report.verdict == Verdict.NOT_EXACT


def test_fold_curve_is_not_on_a_pendulum_level():
    report = verify_birkhoff(pendulum(), fold_curve(), VerifierConfig(n=32))
    assert report.verdict == Verdict.NOT_INVARIANT
    assert report.failed_stage == "level_set"
    assert report.exit_code == 2


def test_unsettled_barrier_is_inconclusive():
    config = VerifierConfig(n=32, barrier=BarrierConfig(window=16, max_powers=16))
    report = verify_birkhoff(free(), zero_section(), config)
    assert report.verdict == Verdict.INCONCLUSIVE
    assert report.exit_code == 3
    assert report.failed_stage == "barrier_aubry"
    assert report.stage("barrier_aubry").details["error"] == "NO_STABILIZE"
    assert report.notes[0].startswith("barrier_aubry:")
    assert report.stage("aubry_extremality") is None


@pytest.mark.parametrize("n", [128, 256])
def test_verdicts_are_stable_under_refinement(n):
    config = VerifierConfig(n=n)
    spec = adapted_fixture()
    adapted = verify_birkhoff(spec, graph_curve(spec.series), config)
    assert adapted.verdict == Verdict.GRAPH
    assert adapted.hausdorff_graph_vs_curve <= 2.0 / n
    assert verify_birkhoff(free(), zero_section(), config).verdict == Verdict.GRAPH
    assert verify_birkhoff(free(), circle(0.3), config).verdict == Verdict.NOT_EXACT
    assert verify_birkhoff(pendulum(), fold_curve(), config).verdict == Verdict.NOT_INVARIANT


def test_curve_input_needs_one_dimensional_hamiltonian():
    with pytest.raises(WkamError) as excinfo:
        verify_birkhoff(adapted_fixture(2), zero_section(), VerifierConfig(n=32))
    assert excinfo.value.code == ErrorCode.UNSUPPORTED_DIMENSION


def test_injectivity_disagreeing_with_analytic_chain_is_inconclusive(monkeypatch):
    """A non-injective projection over a fully passing analytic chain cannot be NOT_GRAPH."""
    monkeypatch.setattr(verifier, "fold_points", lambda curve: [1])
    report = verify_birkhoff(free(), zero_section(), VerifierConfig(n=32))
    assert report.verdict == Verdict.INCONCLUSIVE
    assert report.exit_code == 3
    assert report.failed_stage == "projection_injectivity"
    assert report.notes[0].startswith("routes disagree")
    assert [s.name for s in report.stages if s.mandatory and not s.passed] == ["projection_injectivity"]


def test_injectivity_failure_with_analytic_failure_is_not_a_graph(monkeypatch):
    monkeypatch.setattr(verifier, "fold_points", lambda curve: [1])
    config = VerifierConfig(n=32, barrier=BarrierConfig(window=16, max_powers=16))
    report = verify_birkhoff(free(), zero_section(), config)
    assert report.verdict == Verdict.NOT_GRAPH
    assert report.exit_code == 2
    assert report.failed_stage == "projection_injectivity"


def test_graph_field_route_in_two_dimensions():
    spec = adapted_fixture(2)
    u, du = graph_field(spec, TorusGrid(2, 16))
    report = verify_graph_field(spec, u, VerifierConfig(n=16), du=du)
    assert report.verdict == Verdict.GRAPH
    assert report.stage("exactness") is None
    assert report.hausdorff_graph_vs_curve is None


# ---------------------------------------------------------------------------
# Individual checks
# ---------------------------------------------------------------------------

def test_level_set_of_pendulum_curve():
    k, deviation = level_set_check(pendulum(), pendulum_level_curve(2.0))
    assert k == pytest.approx(2.0, abs=1e-12)
    assert deviation <= 1e-12


def test_invariance_of_circle_under_free_flow():
    report = invariance_check(free(), circle(0.3))
    assert report.passed
    assert report.max_distance <= 1e-9


def test_k_below_c_is_explained():
    report = k_equals_c_check(0.5, 1.0)
    assert not report.passed
    assert report.k_below_c
    assert report.note.startswith("k<c")
    assert k_equals_c_check(1.0, 1.0005).passed


def test_action_identity_on_free_orbit():
    """p.qdot = 1/4 and L + c = 1/8 + 1/8 along p = 1/2."""
    trajectory = flow_integrate(free(), PhasePoint([0.0], [0.5]), 2.0)
    report = action_identity_check(free(), trajectory, 0.125)
    assert report.lhs == pytest.approx(0.5, abs=1e-9)
    assert report.rhs == pytest.approx(0.5, abs=1e-9)
    assert report.passed


def test_action_identity_on_pendulum_rotation():
    trajectory = flow_integrate(pendulum(), PhasePoint([0.0], [np.sqrt(2.0)]), 2.0)
    report = action_identity_check(pendulum(), trajectory, 2.0)
    assert report.passed


def test_omega_limits_of_rest_points():
    points = omega_limit_points(free(), PhasePoint([0.3], [0.0]))
    assert points[0].distance(PhasePoint([0.3], [0.0])) <= 1e-12

    spec = adapted_fixture()
    q = np.array([0.8])
    start = PhasePoint(q, spec.series.gradient(q[None, :])[0])
    assert omega_limit_points(spec, start, T=20.0)[0].distance(start) <= 1e-9


def test_barrier_inequality_at_rest(slow_free_barrier, grid):
    phi = GridField(grid, np.zeros(grid.size))
    report = barrier_inequality_check(phi, slow_free_barrier, 5, 5, 5)
    assert report.passed
    assert report.nodes == (5, 5, 5)


def test_rotational_curve_misses_the_aubry_set(pendulum_barrier, pendulum_solution):
    report = nonwandering_aubry_check(pendulum(), pendulum_level_curve(2.0), pendulum_barrier,
                                      pendulum_solution.u_minus, samples=16)
    assert not report.passed
    assert report.recurrent
    assert report.worst_distance > 0.5


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def test_report_jsonl_round_trip(zero_section_report, tmp_path):
    report, _ = zero_section_report
    path = write_report_jsonl(tmp_path / "report.jsonl", report)
    lines = path.read_text().splitlines()
    assert len(lines) == len(report.stages) + 1

    loaded = read_report_jsonl(path)
    assert loaded.verdict == report.verdict
    assert loaded.n == 32
    assert [s.name for s in loaded.stages] == [s.name for s in report.stages]
    assert [s.passed for s in loaded.stages] == [s.passed for s in report.stages]
    assert report_to_records(loaded) == report_to_records(report)


def test_report_with_infinite_margin_round_trips(tmp_path):
    stages = [StageRecord("exactness", True, 0.0, {}), StageRecord("level_set", False, -np.inf, {"deviation": np.inf})]
    report = VerifierReport(Verdict.NOT_INVARIANT, stages, np.inf, None, None, 32, "level_set")
    first = write_report_jsonl(tmp_path / "first.jsonl", report)
    loaded = read_report_jsonl(first)
    assert loaded.stages[1].margin == -np.inf
    assert loaded.stages[1].details["deviation"] == np.inf
    assert loaded.k_level == np.inf

    second = write_report_jsonl(tmp_path / "second.jsonl", loaded)
    assert first.read_bytes() == second.read_bytes()


def test_report_without_verdict_line(tmp_path):
    path = tmp_path / "partial.jsonl"
    path.write_text('{"stage": "exactness", "passed": true, "margin": 0.0, "mandatory": true, "details": {}}\n')
    with pytest.raises(ValueError):
        read_report_jsonl(path)


def test_text_report(zero_section_report):
    report, _ = zero_section_report
    text = ReportGenerator(report).generate_full_report()
    assert "GRAPH VERIFIER - SUMMARY" in text
    assert "Verdict: GRAPH (exit 0)" in text
    for stage in report.stages:
        assert stage.name in text
    assert "(informational)" in text
