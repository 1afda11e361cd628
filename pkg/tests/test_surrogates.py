import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conicsca.conic import QuadraticForm
from conicsca.surrogates import (
    KINDS, App1, App2, App3, App4, App5, App6, finite_gradient, random_surrogate,
    verify_conditions,
)


def _var(n, i):
    return QuadraticForm.variable(n, i)


@pytest.mark.parametrize("kind", KINDS)
def test_conditions_hold_on_random_instances(kind):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        rep = verify_conditions(random_surrogate(kind, rng), samples=100, rng=rng)
        assert rep.passes(), (kind, seed, rep)


@pytest.mark.parametrize("kind", KINDS)
@given(seed=st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_blocks_encode_value(kind, seed):
    # conic route and functional route agree on feasibility of F(v) <= 0
    rng = np.random.default_rng(seed)
    sur = random_surrogate(kind, rng)
    v = sur.point * (1.0 + 0.5 * rng.standard_normal(sur.n))
    if not sur.in_domain(v):
        return
    if kind == "app3":
        v[sur.z] = sur.tight_slack(v)
    F = sur.value(v)
    if abs(F) < 1e-8:
        return
    inside = all(b.violation(v) <= 1e-10 for b in sur.blocks())
    assert inside == (F < 0)


@pytest.mark.parametrize("kind", KINDS)
def test_reanchor_is_tight_at_new_point(kind):
    rng = np.random.default_rng(3)
    sur = random_surrogate(kind, rng)
    v = sur.point * 1.1
    if kind == "app3":
        v[sur.z] = sur.tight_slack(v)
    new = sur.reanchor(v)
    assert new.value(v) == pytest.approx(new.original(v), abs=1e-10)
    assert sur.point is not new.point


def test_app1_hand_values():
    # l h2 <= h1 with h1 = 3, h2 = 1, l = 2: anchor ratio y = h2 / l = 1/2
    n = 3
    s = App1(point=np.array([3.0, 1.0, 2.0]), h1=_var(n, 0), h2=_var(n, 1), l=2)
    assert s.y == pytest.approx(0.5)
    assert s.value(s.point) == pytest.approx(-1.0)
    assert s.original(s.point) == pytest.approx(-1.0)
    # AM-GM bound away from the anchor
    v = np.array([3.0, 2.0, 1.0])
    assert s.value(v) >= s.original(v)


def test_app2_matches_app1_at_anchor():
    n = 3
    p = np.array([2.0, 0.5, 1.5])
    a = App1(point=p, h1=_var(n, 0), h2=_var(n, 1), l=2)
    b = App2(point=p, h1=_var(n, 0), h2=_var(n, 1), l=2)
    assert a.value(p) == pytest.approx(b.value(p))
    np.testing.assert_allclose(finite_gradient(a.value, p), finite_gradient(b.value, p),
                               atol=1e-6)


def test_app3_slack_coupling():
    # h1 / h2 <= u with h1 = 2, h2 = 4, u = 1
    n = 4
    p = np.array([2.0, 4.0, 1.0, 0.25])
    s = App3(point=p, h1=_var(n, 0), h2=_var(n, 1), u=2, z=3)
    assert s.y == pytest.approx(1.0 / 8.0)
    assert s.value(p) == pytest.approx(s.original(p))
    main, coupling = s.blocks()
    assert coupling.violation(p) <= 1e-12           # h2 z = 1
    assert coupling.violation(np.array([2.0, 4.0, 1.0, 0.2])) > 0


def test_app4_linearisation_is_lower_bound_of_ratio():
    rng = np.random.default_rng(0)
    n = 3
    h1 = QuadraticForm(rng.standard_normal((2, n)), np.zeros(n)).lift(n + 1, np.arange(n))
    h2 = QuadraticForm(rng.standard_normal((1, n)), np.zeros(n)).lift(n + 1, np.arange(n))
    p = np.concatenate([rng.standard_normal(n), [2.0]])
    s = App4(point=p, h1=h1, h2=h2, l=n)
    for _ in range(50):
        v = p + 0.5 * rng.standard_normal(n + 1)
        if v[n] > 0:
            assert s.value(v) >= s.original(v) - 1e-12


def test_app5_and_app6_tight():
    n = 3
    q = QuadraticForm(np.array([[1.0, 0.0, 0.0]]), np.zeros(n))
    p = np.array([1.5, 2.0, 0.5])
    s5 = App5(point=p, h1=q, l=1, z=2)
    assert s5.value(p) == pytest.approx(s5.original(p))
    s6 = App6(point=p, h1=q, h2=QuadraticForm(np.array([[0.0, 0.0, 1.0]]), np.zeros(n)), u=1)
    assert s6.value(p) == pytest.approx(s6.original(p))


def test_domain_errors():
    n = 3
    with pytest.raises(ValueError):
        App1(point=np.array([1.0, 1.0, -1.0]), h1=_var(n, 0), h2=_var(n, 1), l=2)
    with pytest.raises(ValueError):
        App3(point=np.array([1.0, -1.0, 1.0]), h1=_var(n, 0), h2=_var(n, 1), u=2, z=2)
    with pytest.raises(ValueError):
        App4(point=np.zeros(n), h1=_var(n, 0), h2=_var(n, 1), l=2)
    with pytest.raises(ValueError):
        App6(point=np.zeros(n), h1=QuadraticForm(np.eye(n), np.zeros(n)), h2=_var(n, 1), u=2)
    with pytest.raises(ValueError):
        random_surrogate("app7")


def test_stale_anchor_breaks_gradient_condition():
    # evaluating tightness away from the anchor must be detected
    sur = random_surrogate("app4", np.random.default_rng(1))
    rep = verify_conditions(sur, at=sur.point * 1.3, rng=0)
    assert not rep.passes()
