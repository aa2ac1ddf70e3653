"""
Tests for critical values, weak KAM solutions, domination and Peierls barriers.
"""

import numpy as np
import pytest

from wkam.errors import ErrorCode, WkamError
from wkam.events import EventLog, EventType
from wkam.fixtures import adapted_fixture, graph_curve
from wkam.minplus import assemble_kernel
from wkam.selector import branch_decompose, selector
from wkam.torus import GridField, GridMask, TorusGrid, wrap_displacement
from wkam.weakkam import (
    BarrierResult,
    aubry_lift,
    aubry_set,
    barrier_bound_check,
    conjugate_pair,
    critical_value,
    domination_check,
    equality_set,
    fixed_point_defect,
    peierls_barrier,
    solve_weak_kam,
    weak_kam_solve,
)


def _pendulum_u(q: np.ndarray) -> np.ndarray:
    """Closed-form negative solution for V = cos(2 pi q), vanishing at q = 0."""
    dist = np.abs(wrap_displacement(q))
    return (2 / np.pi) * (1 - np.cos(np.pi * dist))


# ---------------------------------------------------------------------------
# Critical value
# ---------------------------------------------------------------------------

def test_free_critical_value(free_spec, grid):
    K = assemble_kernel(free_spec, grid, 0.5)
    log = EventLog()
    c, diagnostics = critical_value(K, free_spec, event_log=log)
    assert c == 0.0
    assert diagnostics.c_upper == pytest.approx(0.0, abs=1e-12)
    assert log.of_type(EventType.CRITICAL_VALUE)[0].details["c"] == 0.0


def test_pendulum_critical_value_is_max_potential(pendulum_c):
    assert pendulum_c == pytest.approx(1.0, abs=0.02)


def test_adapted_critical_value_is_zero(adapted_c):
    assert adapted_c == pytest.approx(0.0, abs=1e-3)


def test_critical_values_at_fine_resolution(free_spec, pendulum_spec, pendulum_c):
    """At n=256 the free value vanishes and the pendulum value moves by less than 0.02 from n=128."""
    fine = TorusGrid(1, 256)
    free_c, _ = critical_value(assemble_kernel(free_spec, fine, 0.5, m=8))
    assert abs(free_c) <= 1e-3

    fine_c, _ = critical_value(assemble_kernel(pendulum_spec, fine, 0.5, m=8))
    assert fine_c == pytest.approx(1.0, abs=0.02)
    assert abs(fine_c - pendulum_c) <= 0.02


def test_inf_max_bound_stays_above_cycle_value(pendulum_kernel, pendulum_spec):
    """For mechanical systems no trigonometric u gets max H below max V."""
    c, diagnostics = critical_value(pendulum_kernel, pendulum_spec)
    assert diagnostics.c_upper >= c - 1e-9
    assert diagnostics.cycle_mean == pytest.approx(-c * pendulum_kernel.t)


# ---------------------------------------------------------------------------
# Weak KAM solutions
# ---------------------------------------------------------------------------

def test_free_solution_is_constant(free_spec, grid):
    K = assemble_kernel(free_spec, grid, 0.5)
    result = solve_weak_kam(K, 0.0)
    assert np.all(result.u_minus.values == 0.0)
    assert np.all(result.u_plus.values == 0.0)
    assert result.residual_minus == 0.0


def test_pendulum_negative_solution_matches_closed_form(pendulum_solution, grid):
    u = pendulum_solution.u_minus
    assert u.values[0] == 0.0
    expected = _pendulum_u(grid.nodes()[:, 0])
    assert np.max(np.abs(u.values - expected)) <= 0.02


def test_pendulum_solution_is_a_fixed_point(pendulum_solution, pendulum_kernel, pendulum_c):
    assert fixed_point_defect(pendulum_solution.u_minus, pendulum_kernel, pendulum_c, "-") <= 1e-6
    assert pendulum_solution.residual_plus <= 1e-5


def test_adapted_solution_recovers_generating_function(adapted_solution, adapted_spec, grid):
    u = adapted_spec.series.value(grid.nodes())
    assert np.max(np.abs(adapted_solution.u_minus.values - (u - u[0]))) <= 0.01


def test_adapted_solution_is_a_fixed_point(adapted_solution, adapted_kernel, adapted_c):
    assert fixed_point_defect(adapted_solution.u_minus, adapted_kernel, adapted_c, "-") <= 1e-6
    assert adapted_solution.residual_minus <= 1e-6


def test_conjugate_solution_lies_below(pendulum_solution):
    assert np.all(pendulum_solution.gap() >= -1e-6)


def test_adapted_conjugate_pair_agrees_everywhere(adapted_solution):
    assert equality_set(adapted_solution).is_full()


def test_pendulum_equality_set_sits_at_the_top(pendulum_solution, grid):
    mask = equality_set(pendulum_solution)
    assert 0 in mask.indices()
    q = grid.nodes()[mask.indices(), 0]
    assert np.all(np.abs(wrap_displacement(q)) <= 0.05)


def test_value_iteration_reports_max_iter(pendulum_kernel, pendulum_c):
    with pytest.raises(WkamError) as excinfo:
        weak_kam_solve(pendulum_kernel, pendulum_c, max_iter=1)
    error = excinfo.value
    assert error.code == ErrorCode.MAX_ITER
    assert error.details["residual"] > 1e-6
    assert error.details["iterate"].shape == (pendulum_kernel.size,)


def test_conjugate_iteration_rejects_wrong_constant(pendulum_solution, pendulum_kernel, pendulum_c):
    """Below the critical value the positive iteration increases at the Aubry node."""
    with pytest.raises(WkamError) as excinfo:
        conjugate_pair(pendulum_solution.u_minus, pendulum_kernel, pendulum_c - 0.5)
    assert excinfo.value.code == ErrorCode.MONOTONICITY_FAIL


def test_solver_events(free_spec):
    K = assemble_kernel(free_spec, TorusGrid(1, 16), 0.5)
    log = EventLog()
    solve_weak_kam(K, 0.0, event_log=log)
    assert log.of_type(EventType.SOLVER_CONVERGED)[0].details["sign"] == "-"
    assert len(log.of_type(EventType.CONJUGATE_CONVERGED)) == 1


def test_solution_sign_must_be_known(free_spec):
    K = assemble_kernel(free_spec, TorusGrid(1, 8), 0.5)
    with pytest.raises(ValueError):
        weak_kam_solve(K, 0.0, sign="x")


# ---------------------------------------------------------------------------
# Domination
# ---------------------------------------------------------------------------

def test_zero_is_dominated_for_free_system(free_spec):
    grid = TorusGrid(1, 32)
    report = domination_check(GridField(grid, np.zeros(grid.size)), 0.0, free_spec)
    assert report.passed
    assert report.worst_margin == 0.0


def test_zero_is_dominated_for_pendulum_at_one(pendulum_spec):
    grid = TorusGrid(1, 32)
    report = domination_check(GridField(grid, np.zeros(grid.size)), 1.0, pendulum_spec)
    assert report.passed
    assert report.minus_form_passed and report.plus_form_passed


def test_steep_field_is_not_dominated(free_spec):
    """u = 0.5 sin(2 pi q) / (2 pi) has H(q, u') = cos^2/8 > 0 where |u'| is largest."""
    grid = TorusGrid(1, 32)
    q = grid.nodes()[:, 0]
    u = GridField(grid, 0.5 * np.sin(2 * np.pi * q) / (2 * np.pi))
    report = domination_check(u, 0.0, free_spec)
    assert not report.passed
    assert report.witness["test"] == "derivative"
    assert report.witness["node"] in (0, 16)
    assert report.derivative_margin == pytest.approx(-0.125, abs=2e-3)


def test_semigroup_forms_agree_with_curve_test(free_spec):
    """The discrete-curve test and both semigroup inequalities give the same verdict."""
    grid = TorusGrid(1, 32)
    q = grid.nodes()[:, 0]
    for amplitude in (0.0, 0.5):
        u = GridField(grid, amplitude * np.sin(2 * np.pi * q) / (2 * np.pi))
        report = domination_check(u, 0.0, free_spec)
        assert report.curve_passed == report.minus_form_passed == report.plus_form_passed


def test_weak_kam_solution_is_dominated(pendulum_solution, pendulum_spec, pendulum_c, pendulum_kernel):
    report = domination_check(pendulum_solution.u_minus, pendulum_c, pendulum_spec, kernels=[pendulum_kernel])
    assert report.curve_passed


# ---------------------------------------------------------------------------
# Peierls barrier and Aubry set
# ---------------------------------------------------------------------------

def test_free_barrier_vanishes(slow_free_barrier):
    assert np.max(np.abs(slow_free_barrier.h)) <= 5e-3
    assert slow_free_barrier.aubry_mask.is_full()


def test_adapted_barrier_is_the_difference_of_u(slow_adapted_barrier, adapted_spec, grid):
    u = adapted_spec.series.value(grid.nodes())
    expected = u[None, :] - u[:, None]
    assert np.max(np.abs(slow_adapted_barrier.h - expected)) <= 1e-2
    assert slow_adapted_barrier.aubry_mask.is_full()


def test_barrier_diagonal_is_nonnegative(pendulum_barrier):
    assert pendulum_barrier.diag_min >= -pendulum_barrier.tol
    assert pendulum_barrier.diagonal()[0] == pytest.approx(0.0, abs=1e-9)


def test_pendulum_aubry_set_is_the_top(pendulum_barrier, grid):
    """A small tolerance keeps only argmax V; the default keeps a neighbourhood of it."""
    assert aubry_set(pendulum_barrier, 1e-5).indices() == [0]

    default = pendulum_barrier.aubry_mask
    assert 0 in default.indices()
    assert not default.widened
    q = grid.nodes()[default.indices(), 0]
    assert np.all(np.abs(wrap_displacement(q)) <= 0.15)


def test_empty_aubry_set_is_widened():
    """With no diagonal entry under the tolerance the threshold moves up to diag_min + tol."""
    grid = TorusGrid(1, 8)
    h = np.full((8, 8), 1.0)
    np.fill_diagonal(h, [0.5, 0.3, 0.2, 0.6, 0.4, 0.205, 0.9, 0.7])
    B = BarrierResult(c=0.0, h=h, aubry_mask=GridMask(grid, np.zeros(8)), diag_min=0.2,
                      power_window=(1, 16), grid=grid, t=1.0, tol=1e-6, aubry_tol=0.01)
    log = EventLog()
    mask = aubry_set(B, event_log=log)
    assert mask.widened
    assert mask.indices() == [2, 5]
    assert len(log.of_type(EventType.AUBRY_WIDENED)) == 1


def test_barrier_requires_critical_constant(pendulum_kernel, pendulum_c):
    with pytest.raises(ValueError):
        peierls_barrier(pendulum_kernel, pendulum_c + 0.1)


def test_barrier_without_room_to_settle(pendulum_kernel, pendulum_c):
    with pytest.raises(WkamError) as excinfo:
        peierls_barrier(pendulum_kernel, pendulum_c, window=16, max_powers=16)
    assert excinfo.value.code == ErrorCode.NO_STABILIZE


def test_barrier_bounds_differences_of_dominated_functions(pendulum_barrier, pendulum_solution, grid):
    constant = barrier_bound_check(GridField(grid, np.full(grid.size, 3.0)), pendulum_barrier)
    assert constant.passed

    report = barrier_bound_check(pendulum_solution.u_minus, pendulum_barrier, tol=2e-3)
    assert report.passed

    doubled = GridField(grid, 2 * pendulum_solution.u_minus.values)
    failed = barrier_bound_check(doubled, pendulum_barrier)
    assert not failed.passed
    assert failed.worst_margin < -0.1


def test_barrier_bounds_conjugate_solution_and_selector(pendulum_barrier, pendulum_solution,
                                                        slow_adapted_barrier):
    assert barrier_bound_check(pendulum_solution.u_plus, pendulum_barrier, tol=2e-3).passed

    curve = graph_curve(adapted_fixture().series)
    phi = selector(branch_decompose(curve, slow_adapted_barrier.grid))
    assert barrier_bound_check(phi, slow_adapted_barrier, tol=1.1e-2).passed


def test_barrier_triangle_inequality(pendulum_barrier):
    """h(q1, q2) <= h(q1, q3) + h(q3, q2) over every node triple."""
    h = pendulum_barrier.h
    through = np.min(h[:, :, None] + h[None, :, :], axis=1)
    assert np.max(h - through) <= 3 * pendulum_barrier.tol


def test_barrier_exports_as_kernel(pendulum_barrier):
    K = pendulum_barrier.as_kernel()
    assert np.array_equal(K.entries, pendulum_barrier.h)
    assert K.grid == pendulum_barrier.grid


def test_aubry_lift_of_adapted_system(adapted_solution, slow_adapted_barrier, adapted_spec):
    """The lifted Aubry set of an adapted system is the graph of du."""
    lift = aubry_lift(slow_adapted_barrier.aubry_mask, adapted_solution.u_minus)
    assert len(lift) == slow_adapted_barrier.grid.size
    for point in lift[::16]:
        exact = adapted_spec.series.gradient(point.q[None, :])[0]
        assert point.p[0] == pytest.approx(exact[0], abs=0.03)
