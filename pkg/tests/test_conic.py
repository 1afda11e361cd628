import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conicsca.conic import (
    ConeBlock, ConicProgram, QuadraticForm, SolverSettings, Status, cone_violation,
    embed_complex, quad_epigraph, quad_over_lin, solve, stack_complex,
)
from conicsca.conic.ipm import solve_ipm

from oracles import cvxpy_socp

BACKENDS = ["ipm", "clarabel", "auto"]


# ---------------------------------------------------------------------------
# quadratic forms
# ---------------------------------------------------------------------------
def test_form_evaluates_norm_linear_constant():
    q = QuadraticForm(np.array([[1.0, 2.0]]), np.array([0.5, -1.0]), 3.0)
    x = np.array([1.0, 1.0])
    assert q(x) == pytest.approx(9.0 + 2 * (0.5 - 1.0) + 3.0)


def test_affine_form_and_coefficients():
    q = QuadraticForm.affine([1.0, -2.0], 4.0)
    assert q.is_affine
    np.testing.assert_allclose(q.coef, [1.0, -2.0])
    assert q([1.0, 1.0]) == pytest.approx(3.0)


def test_from_residual_matches_direct_norm():
    rng = np.random.default_rng(0)
    F, d = rng.standard_normal((3, 4)), rng.standard_normal(3)
    q = QuadraticForm.from_residual(F, d, 0.7)
    x = rng.standard_normal(4)
    assert q(x) == pytest.approx(np.sum((F @ x + d) ** 2) + 0.7)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_gradient_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    q = QuadraticForm(rng.standard_normal((2, 3)), rng.standard_normal(3), rng.standard_normal())
    x = rng.standard_normal(3)
    h = 1e-6
    fd = np.array([(q(x + h * e) - q(x - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(q.gradient(x), fd, atol=1e-6)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_complex_embedding_preserves_values(seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    b = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    q = QuadraticForm(F, b, 1.5, complex_domain=True)
    x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    direct = np.vdot(F @ x, F @ x).real + 2 * np.vdot(b, x).real + 1.5
    assert embed_complex(q)(stack_complex(x)) == pytest.approx(direct, rel=1e-12)


def test_linearize_is_tangent():
    q = QuadraticForm(np.array([[1.0, 0.0], [0.0, 2.0]]), np.zeros(2))
    y = np.array([1.0, -1.0])
    lin = q.linearize(y)
    assert lin(y) == pytest.approx(q(y))
    x = np.array([0.3, 0.4])
    assert lin(x) <= q(x) + 1e-12


def test_negative_multiple_of_quadratic_rejected():
    with pytest.raises(ValueError):
        QuadraticForm(np.eye(2), np.zeros(2)) * -1.0


def test_lift_places_variables():
    q = QuadraticForm.affine([1.0, 2.0]).lift(4, [1, 3])
    assert q(np.array([9.0, 1.0, 9.0, 1.0])) == pytest.approx(3.0)


# ---------------------------------------------------------------------------
# lowering
# ---------------------------------------------------------------------------
@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_epigraph_block_feasible_iff_quadratic_below_bound(seed):
    rng = np.random.default_rng(seed)
    q = QuadraticForm(rng.standard_normal((2, 3)), rng.standard_normal(3), rng.standard_normal())
    bound = QuadraticForm.affine(rng.standard_normal(3), rng.standard_normal() + 2.0)
    (blk,) = quad_epigraph(q, bound)
    x = rng.standard_normal(3)
    inside = q(x) <= bound(x)
    viol = blk.violation(x)
    if abs(q(x) - bound(x)) > 1e-9:
        assert (viol <= 1e-12) == inside


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_quad_over_lin_block(seed):
    rng = np.random.default_rng(seed)
    F, d = rng.standard_normal((2, 3)), rng.standard_normal(2)
    q = QuadraticForm.from_residual(F, d, 0.3)
    den = QuadraticForm.affine(np.abs(rng.standard_normal(3)), 1.0)
    t = QuadraticForm.affine(rng.standard_normal(3), 5.0)
    (blk,) = quad_over_lin(q, den, t)
    x = np.abs(rng.standard_normal(3))
    gap = q(x) / den(x) - t(x)
    if abs(gap) > 1e-9:
        assert (blk.violation(x) <= 1e-12) == (gap < 0)


def test_rotated_cone_violation_sign():
    assert cone_violation(np.array([1.0, 1.0, 1.0]), "rsoc") <= 0      # 2 >= 1
    assert cone_violation(np.array([0.1, 0.1, 1.0]), "rsoc") > 0
    assert cone_violation(np.array([1.0, 0.6, 0.8]), "soc") == pytest.approx(0.0)


def test_block_validation():
    with pytest.raises(ValueError):
        ConeBlock(np.eye(2), [0.0, 0.0], "psd")
    with pytest.raises(ValueError):
        ConeBlock(np.eye(2), [0.0, 0.0], "rsoc")
    with pytest.raises(ValueError):
        ConicProgram(2, [1.0], ())


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------
def _lp():
    # min -x - y  s.t.  x + 2y <= 4, 3x + y <= 6, x, y >= 0 ; optimum at (8/5, 6/5)
    G = np.array([[-1.0, -2.0], [-3.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    h = np.array([4.0, 6.0, 0.0, 0.0])
    return ConicProgram(2, [-1.0, -1.0], [ConeBlock(G, h, "nonneg")])


@pytest.mark.parametrize("backend", BACKENDS)
def test_lp_vertex(backend):
    res = solve(_lp(), SolverSettings(backend=backend))
    assert res.status == Status.OPTIMAL
    np.testing.assert_allclose(res.x, [1.6, 1.2], atol=1e-7)
    assert res.objective == pytest.approx(-2.8, abs=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_socp_ball(backend):
    # min c x over the unit ball: x* = -c / |c|
    c = np.array([3.0, -4.0])
    blk = ConeBlock(np.vstack([np.zeros(2), np.eye(2)]), [1.0, 0.0, 0.0], "soc")
    res = solve(ConicProgram(2, c, [blk]), SolverSettings(backend=backend))
    np.testing.assert_allclose(res.x, -c / 5.0, atol=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_rsoc_hyperbola(backend):
    # min x + y  s.t.  x y >= 1 : optimum 2 at (1, 1); (x, y, sqrt 2) in rsoc
    blk = ConeBlock(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), [0.0, 0.0, np.sqrt(2.0)],
                    "rsoc")
    res = solve(ConicProgram(2, [1.0, 1.0], [blk]), SolverSettings(backend=backend))
    assert res.objective == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("backend", ["ipm", "clarabel"])
def test_equality_constraint_and_duals(backend):
    # min x0 + 2 x1 s.t. x0 + x1 = 1, x >= 0 : dual of the equality is 1
    eq = ConeBlock(np.array([[1.0, 1.0]]), [-1.0], "zero")
    nn = ConeBlock(np.eye(2), [0.0, 0.0], "nonneg")
    prog = ConicProgram(2, [1.0, 2.0], [eq, nn])
    res = solve(prog, SolverSettings(backend=backend))
    np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-7)
    # strong duality through the package's dual convention
    assert prog.dual_objective(res.dual) == pytest.approx(res.objective, abs=1e-6)


@pytest.mark.parametrize("backend", ["ipm", "clarabel"])
def test_infeasible_detected(backend):
    blk = ConeBlock(np.array([[1.0], [-1.0]]), [-2.0, 1.0], "nonneg")    # x >= 2, x <= 1
    res = solve(ConicProgram(1, [1.0], [blk]), SolverSettings(backend=backend))
    assert res.status == Status.PRIMAL_INFEASIBLE


@pytest.mark.parametrize("backend", ["ipm", "clarabel"])
def test_unbounded_detected(backend):
    blk = ConeBlock(np.array([[1.0]]), [0.0], "nonneg")
    res = solve(ConicProgram(1, [-1.0], [blk]), SolverSettings(backend=backend))
    assert res.status == Status.DUAL_INFEASIBLE


def test_unknown_backend():
    with pytest.raises(ValueError):
        solve(_lp(), SolverSettings(backend="nope"))


def _random_socp(rng, n=4):
    """Bounded feasible program: a box, a ball, a rotated cone, an equality."""
    blocks = [ConeBlock(np.vstack([np.eye(n), -np.eye(n)]), np.full(2 * n, 3.0), "nonneg")]
    A = rng.standard_normal((n, n))
    blocks.append(ConeBlock(np.vstack([np.zeros(n), A]), np.concatenate([[4.0], np.zeros(n)]),
                            "soc"))
    a, b = np.abs(rng.standard_normal(n)), np.abs(rng.standard_normal(n))
    blocks.append(ConeBlock(np.vstack([a, b, rng.standard_normal(n)]), [2.0, 2.0, 0.1], "rsoc"))
    blocks.append(ConeBlock(rng.standard_normal((1, n)) * 0.1, [0.0], "zero"))
    return ConicProgram(n, rng.standard_normal(n), blocks)


@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_ipm_agrees_with_independent_model(seed):
    rng = np.random.default_rng(seed)
    prog = _random_socp(rng)
    res = solve_ipm(prog)
    status, value, _ = cvxpy_socp(prog.objective, prog.blocks)
    assert status == "optimal"
    assert res.status == Status.OPTIMAL
    assert res.objective == pytest.approx(value, abs=1e-5 * (1 + abs(value)))
    assert prog.max_violation(res.x) <= 1e-7


@given(st.integers(0, 100_000))
@settings(max_examples=25, deadline=None)
def test_ipm_duals_certify_optimality(seed):
    rng = np.random.default_rng(seed)
    prog = _random_socp(rng)
    res = solve_ipm(prog)
    assert res.status == Status.OPTIMAL
    # dual feasibility: c + sum_k rows_k^T z_k = 0 with z_k in the dual cone
    grad = prog.objective - sum(b.rows.T @ z for b, z in zip(prog.blocks, res.dual))
    assert np.max(np.abs(grad)) <= 1e-6
    for b, z in zip(prog.blocks, res.dual):
        if b.cone != "zero":
            assert cone_violation(z, b.cone) <= 1e-7
    assert prog.dual_objective(res.dual) == pytest.approx(res.objective, abs=1e-6)


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_balanced_rsoc_describes_the_same_set(seed):
    rng = np.random.default_rng(seed)
    blk = ConeBlock(rng.standard_normal((4, 3)), [50.0, 0.5, 0.0, 0.0], "rsoc")
    at = rng.standard_normal(3) * 0.1
    bal = blk.balanced(at)
    a, b = bal.value(at)[:2]
    assert a == pytest.approx(b)
    for _ in range(20):
        x = at + rng.standard_normal(3)
        if abs(blk.violation(x)) > 1e-9:
            assert (blk.violation(x) <= 0) == (bal.violation(x) <= 0)
    assert ConeBlock(np.eye(2), [0.0, 0.0], "nonneg").balanced(at[:2]).cone == "nonneg"
