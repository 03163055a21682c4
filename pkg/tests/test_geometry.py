import numpy as np
import pytest

from nuhlab.geometry import (
    D2, R2, T2, ChartMismatchError, ChartPoint, ConvergenceError, SingularityError, SmoothMap,
    compose, identity_map, invert_newton, linear_map, numeric_jacobian, rotation, wrap_torus,
)
from nuhlab.katok import make_katok
from nuhlab.pasting import BumpProfile, blend

A = np.array([[5.0, 8.0], [8.0, 13.0]])


def smooth_test_map():
    def ev(X):
        return np.column_stack([X[:, 0] + 0.3 * np.sin(X[:, 1]), X[:, 1] + 0.2 * np.cos(X[:, 0]) ** 2])

    def jac(X):
        J = np.zeros((len(X), 2, 2))
        J[:, 0, 0] = 1.0
        J[:, 0, 1] = 0.3 * np.cos(X[:, 1])
        J[:, 1, 0] = -0.4 * np.cos(X[:, 0]) * np.sin(X[:, 0])
        J[:, 1, 1] = 1.0
        return J

    return SmoothMap(evaluate=ev, jacobian=jac, name="test")


def test_wrap_torus_examples():
    assert np.array_equal(wrap_torus((1.25, -0.5)).coords, [0.25, 0.5])
    assert np.array_equal(wrap_torus((0.0, 0.0)).coords, [0.0, 0.0])
    assert np.array_equal(wrap_torus((2.0, 3.0)).coords, [0.0, 0.0])
    assert np.all(wrap_torus((-1e-18, 0.7)).coords < 1.0)


def test_chart_point_validation():
    with pytest.raises(ValueError):
        ChartPoint(np.array([1.0, 0.2]), T2)
    with pytest.raises(ValueError):
        ChartPoint(np.array([0.9, 0.9]), D2)
    with pytest.raises(ValueError):
        ChartPoint(np.array([0.1, 0.2, 0.3]), T2)


def test_compose_identity_and_inverse_rotations():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 2))
    g = smooth_test_map()
    assert np.max(np.abs(compose([identity_map(), g])(X) - g(X))) <= 1e-14
    h = compose([rotation(0.7), rotation(-0.7)])
    assert np.max(np.abs(h(X) - X)) <= 1e-14


def test_compose_order_and_chain_rule():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 2))
    f, g = smooth_test_map(), linear_map(np.array([[2.0, 1.0], [1.0, 1.0]]))
    fg = compose([f, g])
    assert np.allclose(fg(X), f(g(X)), atol=0, rtol=0)
    lhs = np.linalg.det(fg.jac(X))
    rhs = np.linalg.det(f.jac(g(X))) * np.linalg.det(g.jac(X))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_compose_rejects_chart_mismatch():
    with pytest.raises(ChartMismatchError):
        compose([identity_map(T2), identity_map(R2)])


def test_compose_of_flow_pieces_matches_time_one():
    from nuhlab.katok import make_slowdown, slowdown_flow
    prof = make_slowdown(0.5, 1e-5)
    alpha = 9 + 4 * np.sqrt(5)

    def piece(t):
        def step(S):
            r = slowdown_flow(prof, alpha, S, t, atol=1e-13, rtol=1e-13)
            return r.points, r.jacobians
        return SmoothMap(evaluate=lambda S: step(S)[0], step=step)

    rng = np.random.default_rng(3)
    S = rng.uniform(-0.01, 0.01, size=(40, 2))
    f16 = compose([piece(1 / 16)] * 16)
    assert np.max(np.abs(f16(S) - piece(1.0)(S))) <= 1e-8


def test_numeric_jacobian_linear_and_rotation():
    f = linear_map(A)
    for x, h in (([0.0, 0.0], 1e-5), ([0.25, -0.5], 2.0 ** -16)):
        rec = numeric_jacobian(f, ChartPoint(np.array(x), R2), h=h)
        assert np.max(np.abs(rec.matrix - A)) <= 1e-12
        assert abs(rec.det - np.linalg.det(rec.matrix)) <= 1e-12
    # elsewhere the error is rounding-limited: about eps |A x| / h
    x = np.array([0.3, -0.2])
    rec = numeric_jacobian(f, ChartPoint(x, R2))
    assert np.max(np.abs(rec.matrix - A)) <= 4 * np.finfo(float).eps * np.abs(A @ x).max() / 1e-5
    th = 1.1
    rec = numeric_jacobian(rotation(th), ChartPoint(np.array([2.0, 5.0]), R2))
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert np.max(np.abs(rec.matrix - R)) <= 1e-9


def test_numeric_jacobian_katok_outside_slow_disks():
    g1 = make_katok().maps["g1"]
    rec = numeric_jacobian(g1, ChartPoint(np.array([0.27, 0.61]), T2))
    assert np.max(np.abs(rec.matrix - A)) <= 1e-8


def test_numeric_jacobian_refuses_singular_points():
    g1 = make_katok().maps["g1"]
    with pytest.raises(SingularityError):
        numeric_jacobian(g1, ChartPoint(np.array([0.5, 0.5004]), T2))


def test_finite_difference_order():
    f = smooth_test_map()
    x = ChartPoint(np.array([0.4, 1.3]), R2)
    exact = f.jac(x.coords)
    e1 = np.max(np.abs(numeric_jacobian(f, x, h=1e-2).matrix - exact))
    e2 = np.max(np.abs(numeric_jacobian(f, x, h=5e-3).matrix - exact))
    assert e1 / e2 >= 3.5
    er = np.max(np.abs(numeric_jacobian(f, x, h=1e-2, richardson=True).matrix - exact))
    assert er < e2


def test_invert_newton_identity_and_rotation():
    y = ChartPoint(np.array([0.2, -0.4]), R2)
    assert np.allclose(invert_newton(identity_map(), y, y).coords, y.coords, atol=1e-15)
    th = 0.9
    x = invert_newton(rotation(th), y, ChartPoint(np.zeros(2), R2))
    assert np.max(np.abs(x.coords - rotation(-th)(y.coords))) <= 1e-12


def test_invert_newton_blend_forward_residual():
    h = blend(identity_map(), rotation(0.3), BumpProfile(0.1, 0.2), (0.0, 0.0))
    rng = np.random.default_rng(4)
    r = rng.uniform(0.1, 0.2, 30)
    t = rng.uniform(0, 2 * np.pi, 30)
    Y = np.column_stack([r * np.cos(t), r * np.sin(t)])
    X = invert_newton(h, Y, Y, tol=1e-12)
    assert np.max(np.abs(h(X) - Y)) <= 1e-10


def test_invert_newton_reports_failure():
    square = SmoothMap(evaluate=lambda X: X ** 2 + 1.0, jacobian=lambda X: np.stack(
        [np.diag(2 * x) for x in X]))
    with pytest.raises(ConvergenceError):
        invert_newton(square, np.array([0.0, 0.0]), np.array([0.5, 0.5]), max_iter=20)


def test_round_trip_katok_inverse():
    g2 = make_katok().maps["g2"]
    rng = np.random.default_rng(5)
    X = rng.random((1000, 2))
    X = X[~g2.near_singular(X)]
    back = g2.inverse(g2(X))
    d = (back - X + 0.5) % 1.0 - 0.5
    assert np.max(np.abs(d)) <= 1e-10
