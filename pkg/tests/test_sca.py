import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conicsca.conic import ConeBlock, QuadraticForm
from conicsca.sca import (
    ConeConstraint, FeasibilityNotReached, InfeasibleStart, QuadConstraint, ScaConfig,
    ScaProblem, ScaTrace, IterRecord, find_feasible, run_sca, run_sca_proximal,
    stationarity_gap,
)
from conicsca.surrogates import App4


def _outside_disc(a, start=(1.0, 0.0)):
    """min ||x - a||^2  s.t.  ||x||^2 >= 1 ; the answer is a / |a| when |a| < 1."""
    a = np.asarray(a, dtype=float)
    obj = QuadraticForm.from_residual(np.eye(2), -a)
    sur = App4(point=np.asarray(start, dtype=float),
               h1=QuadraticForm(np.eye(2), np.zeros(2)),
               h2=QuadraticForm.constant_form(2, 1.0), l=1.0)
    return ScaProblem(2, obj, surrogates=[sur], name="outside-disc")


def test_converges_to_projection_monotonically():
    a = np.array([0.2, 0.1])
    prob = _outside_disc(a)
    v, trace = run_sca(prob, [1.0, 0.0], ScaConfig(tol=1e-10, max_iter=200))
    np.testing.assert_allclose(v, a / np.linalg.norm(a), atol=1e-4)
    assert np.all(np.diff(trace.objectives) <= 1e-9)
    assert np.all(trace.violations <= 1e-7)
    assert trace.nonmonotone == []
    assert trace.records[0].status == "initial"


@given(st.floats(0.05, 0.8), st.floats(0.0, 2 * np.pi), st.floats(0.0, 2 * np.pi))
@settings(max_examples=25, deadline=None)
def test_iterates_stay_feasible_and_descend(r, phi, theta):
    a = r * np.array([np.cos(phi), np.sin(phi)])
    start = 1.5 * np.array([np.cos(theta), np.sin(theta)])
    v, trace = run_sca(_outside_disc(a, start), start, ScaConfig(tol=1e-8, max_iter=60))
    assert np.all(np.diff(trace.objectives) <= 1e-8)
    assert np.all(trace.violations <= 1e-7)


def test_infeasible_start_rejected():
    with pytest.raises(InfeasibleStart):
        run_sca(_outside_disc([0.2, 0.1]), [0.1, 0.1])


def test_phase_one_reaches_feasibility_with_nonincreasing_slack():
    prob = _outside_disc([0.2, 0.1])
    v, trace = find_feasible(prob, [0.3, 0.2])
    assert prob.max_violation(v) <= 1e-6
    q = trace.slacks
    assert np.all(np.diff(q) <= 1e-9)
    assert trace.stop_reason == "feasible"
    # the feasible point seeds a normal run
    run_sca(prob, v, ScaConfig(max_iter=5))


def test_phase_one_is_a_no_op_from_a_feasible_point():
    v, trace = find_feasible(_outside_disc([0.2, 0.1]), [2.0, 0.0])
    assert trace.stop_reason == "feasible start"
    np.testing.assert_allclose(v, [2.0, 0.0])


def test_phase_one_reports_failure_on_infeasible_problem():
    # ||x||^2 >= 1 together with the box |x_i| <= 0.5 has no solution
    prob = _outside_disc([0.2, 0.1], start=(0.3, 0.2))
    box = ConeBlock(np.vstack([-np.eye(2), np.eye(2)]), np.full(4, 0.5), "nonneg")
    prob.constraints.append(ConeConstraint((box,), "box"))
    with pytest.raises(FeasibilityNotReached) as err:
        find_feasible(prob, [0.3, 0.2], ScaConfig(feas_max_iter=15))
    assert err.value.q > 0.4


def test_proximal_variant_reaches_the_same_point():
    a = np.array([-0.3, 0.4])
    prob = _outside_disc(a)
    alpha = 10.0
    v, trace = run_sca_proximal(prob, [1.0, 0.0], ScaConfig(tol=1e-12, proximal_weight=alpha,
                                                                   max_iter=2000))
    np.testing.assert_allclose(v, a / np.linalg.norm(a), atol=1e-4)
    assert any(r.proximal for r in trace.records[1:])
    # sufficient decrease: f_prev - f_new >= alpha ||dx||^2 on proximal steps
    for prev, cur in zip(trace.records, trace.records[1:]):
        if cur.proximal:
            step = np.sum((cur.point - prev.point) ** 2)
            assert prev.objective - cur.objective >= alpha * step - 1e-7


def test_stationarity_gap_small_only_at_limit():
    a = np.array([0.2, 0.1])
    prob = _outside_disc(a)
    assert stationarity_gap(prob, a / np.linalg.norm(a)) <= 1e-6
    assert stationarity_gap(prob, np.array([1.0, 0.0])) > 1e-2


def test_window_stop_rule():
    prob = _outside_disc([0.2, 0.1])
    _, trace = run_sca(prob, [1.0, 0.0], ScaConfig(tol=1e-3, window=5))
    assert trace.stop_reason == "window"
    objs = trace.objectives
    assert abs(objs[-1] - objs[-6]) < 1e-3
    _, capped = run_sca(prob, [1.0, 0.0], ScaConfig(tol=1e-12, max_iter=3))
    assert capped.stop_reason == "iteration cap" and capped.iterations == 3


def test_convex_constraint_respected():
    # a half-plane cut x0 >= 0.95 moves the answer off the projection
    prob = _outside_disc([0.2, 0.1])
    prob.constraints.append(QuadConstraint(QuadraticForm.affine([-1.0, 0.0], 0.95)))
    v, _ = run_sca(prob, [1.0, 0.0], ScaConfig(tol=1e-10))
    assert v[0] >= 0.95 - 1e-7
    assert v @ v >= 1 - 1e-7


def test_config_validation():
    with pytest.raises(ValueError):
        ScaConfig(window=0)
    with pytest.raises(ValueError):
        ScaConfig(tol=0.0)
    with pytest.raises(ValueError):
        ScaConfig(lam_growth=0.5)
    with pytest.raises(ValueError):
        ScaProblem(3, QuadraticForm.affine([1.0, 1.0]))


def test_trace_extend_keeps_iterations_contiguous():
    def rec(i):
        return IterRecord(i, float(-i), 0.0, None, "optimal", 0.0, np.zeros(1))
    a, b = ScaTrace([rec(0), rec(1)]), ScaTrace([rec(0), rec(1), rec(2)])
    a.extend(b)
    assert [r.iteration for r in a] == [0, 1, 2, 3]
