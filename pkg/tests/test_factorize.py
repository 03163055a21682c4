import numpy as np
import pytest

from nuhlab._smooth import smoothstep
from nuhlab.factorize import (
    BoundaryIdentityPiece, Flow, RotationPiece, c1_to_identity, det_errors, disk_samples,
    factor_composite, factor_flow_map, factor_near_boundary_identity, factor_rotation, make_flow,
    read_manifest, rebuild, reconstruction_error, slowdown_flow_piece, twist_flow,
)
from nuhlab.geometry import SmoothMap, compose, fd_jacobian, identity_map, rotation


def bump_twist(eps, rs=0.8):
    """Rotation by eps * S((rs - |x|) / (rs / 2)): identity for |x| >= rs, area-preserving."""
    def step(X):
        rho = np.linalg.norm(X, axis=1)
        safe = np.where(rho > 0, rho, 1.0)
        S, dS = smoothstep((rs - rho) / (rs / 2))
        a = eps * S
        da = -eps * dS / (rs / 2)
        ca, sa = np.cos(a), np.sin(a)
        x, y = X[:, 0], X[:, 1]
        Y = np.stack([ca * x - sa * y, sa * x + ca * y], -1)
        J = np.empty((len(X), 2, 2))
        J[:, 0, 0], J[:, 0, 1], J[:, 1, 0], J[:, 1, 1] = ca, -sa, sa, ca
        grad = (da / safe)[:, None] * X
        J += np.stack([-sa * x - ca * y, ca * x - sa * y], -1)[:, :, None] * grad[:, None, :]
        return Y, J

    return SmoothMap(evaluate=lambda X: step(X)[0], step=step, name=f"bump-twist({eps})")


@pytest.fixture(scope="module")
def slowdown():
    return slowdown_flow_piece()


def test_flow_factor_count_and_identity_case(slowdown):
    X = disk_samples((0, 0), 0.1, 16)
    f1 = factor_flow_map(slowdown, 1, n_samples=16)
    assert f1.N == 1
    assert np.array_equal(f1(X), slowdown.time_map(1.0)(X))


def test_flow_factors_match_time_one(slowdown):
    X = disk_samples((0, 0), 0.1, 32)
    f16 = factor_flow_map(slowdown, 16, n_samples=32)
    assert reconstruction_error(f16, slowdown.time_map(1.0), X) <= 1e-8
    assert np.max(det_errors(f16, X)) <= 1e-8


def test_flow_delta_scales_like_one_over_N(slowdown):
    d10 = factor_flow_map(slowdown, 10).delta_achieved
    d100 = factor_flow_map(slowdown, 100).delta_achieved
    assert 8.0 <= d10 / d100 <= 12.0
    d20 = factor_flow_map(slowdown, 20).delta_achieved
    assert d10 > d20 > d100


def test_rotation_factors():
    full = factor_rotation(2 * np.pi, 4)
    X = disk_samples(n=32)
    assert full.N == 4
    assert np.max(np.abs(full(X) - X)) <= 1e-14
    th, N = 1.3, 7
    fr = factor_rotation(th, N)
    assert np.max(np.abs(fr(X) - rotation(th)(X))) <= 1e-14
    for f in fr.factors:
        assert np.max(np.linalg.norm(f(X) - X, axis=1)) <= th / N
    assert factor_rotation(0.5, 10).delta_achieved > factor_rotation(0.5, 20).delta_achieved


def test_twist_flow_properties():
    tw = twist_flow(3.0, (0.2, -0.1), 0.5)
    f = tw.time_map(0.4)
    rng = np.random.default_rng(0)
    X = np.array([0.2, -0.1]) + rng.uniform(-0.6, 0.6, (400, 2))
    assert np.max(np.abs(np.linalg.det(f.jac(X)) - 1.0)) <= 1e-12
    inside = np.linalg.norm(X - [0.2, -0.1], axis=1) < 0.45
    assert np.max(np.abs(fd_jacobian(f, X[inside], 1e-7) - f.jac(X[inside]))) <= 1e-6
    t = np.linspace(0, 2 * np.pi, 50)
    rim = np.array([0.2, -0.1]) + 0.5 * np.column_stack([np.cos(t), np.sin(t)])
    assert np.max(np.abs(f(rim) - rim)) <= 1e-15
    assert np.max(np.abs(f.inverse(f(X)) - X)) <= 1e-14
    with pytest.raises(ValueError):
        make_flow("spiral")


def test_near_boundary_identity_trivial_input():
    fact = factor_near_boundary_identity(identity_map(), 5, grid=(32, 32))
    assert fact.N == 5 and fact.delta_achieved == 0.0
    X = disk_samples(n=16)
    assert np.array_equal(fact(X), X)


def test_near_boundary_identity_straight_line():
    g = bump_twist(0.05)
    fact = factor_near_boundary_identity(g, 4, grid=(128, 128))
    assert fact.diagnostics["path"] == "line"
    X = disk_samples(n=64)
    assert reconstruction_error(fact, g, X) <= 1e-6
    assert np.max(det_errors(fact, X)) <= 5e-3
    assert fact.delta_achieved < c1_to_identity(g, X)


def test_near_boundary_identity_moser_residual_at_256():
    g = bump_twist(0.05)
    fact = factor_near_boundary_identity(g, 2, grid=(256, 256))
    X = disk_samples(n=64)
    assert np.max(det_errors(fact, X)) <= 5e-3
    assert max(fact.diagnostics["moser_residuals"]) <= 5e-3


def test_near_boundary_identity_alexander_path():
    g = bump_twist(0.2)
    fact = factor_near_boundary_identity(g, 6, grid=(64, 64))
    assert fact.diagnostics["path"] == "alexander"
    X = disk_samples(n=64)
    assert reconstruction_error(fact, g, X) <= 1e-2
    assert np.max(det_errors(fact, X)) <= 5e-3


def test_near_boundary_identity_input_checks():
    with pytest.raises(ValueError):
        factor_near_boundary_identity(rotation(0.1), 3, grid=(32, 32))
    shift = SmoothMap(evaluate=lambda X: X + [0.5, 0.0], jacobian=lambda X: np.broadcast_to(
        np.eye(2), (len(X), 2, 2)).copy())
    with pytest.raises(ValueError):
        factor_near_boundary_identity(shift, 3, grid=(32, 32))
    with pytest.raises(ValueError):
        factor_near_boundary_identity(bump_twist(0.05), 0)


def test_composite_examples(slowdown):
    X = disk_samples(n=32)
    half_turns = factor_composite([RotationPiece(np.pi), RotationPiece(np.pi)], 2)
    assert half_turns.N == 4
    assert np.max(np.abs(half_turns(X) - X)) <= 1e-14
    empty = factor_composite([], 3)
    assert empty.N == 0 and np.array_equal(empty(X), X)
    with pytest.raises(TypeError):
        factor_composite(["not a piece"], 2)


def test_composite_slowdown_then_rotation(slowdown):
    fact = factor_composite([slowdown, RotationPiece(np.pi / 3, radius=0.1)], 10)
    X = disk_samples((0, 0), 0.1, 64)
    target = compose([rotation(np.pi / 3), slowdown.time_map(1.0)])
    assert reconstruction_error(fact, target, X) <= 1e-6
    assert np.max(det_errors(fact, X)) <= 1e-8
    composite = fact.as_map()
    assert np.max(np.abs(composite(X) - fact(X))) <= 1e-15


def test_composite_with_boundary_identity_piece():
    g = bump_twist(0.05)
    fact = factor_composite([RotationPiece(0.4), BoundaryIdentityPiece(g, grid=(64, 64))], [3, 2])
    X = disk_samples(n=32)
    target = compose([g, rotation(0.4)])
    assert fact.N == 5
    assert reconstruction_error(fact, target, X) <= 1e-6


def test_manifest_round_trip(slowdown):
    fact = factor_composite([slowdown, RotationPiece(0.7, radius=0.1), twist_flow(2.0, (0, 0), 0.1)],
                            [4, 3, 5], n_samples=16)
    text = fact.manifest()
    man = read_manifest(text)
    assert man["N"] == 12 and [p["n"] for p in man["pieces"]] == [4, 3, 5]
    again = rebuild(text, n_samples=16)
    X = disk_samples((0, 0), 0.1, 16)
    assert np.array_equal(again(X), fact(X))
    assert again.manifest() == text
    with pytest.raises(ValueError):
        read_manifest("bogus line\n")


def test_flow_is_a_dataclass_with_time_maps(slowdown):
    assert isinstance(slowdown, Flow) and slowdown.kind == "slowdown"
    f = slowdown.time_map(0.5)
    S = disk_samples((0, 0), 0.1, 8)
    assert np.max(np.abs(f.inverse(f(S)) - S)) <= 1e-10
