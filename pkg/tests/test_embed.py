import numpy as np
import pytest

from nuhlab.embed import (
    DisjointnessError, demo_host, embed_demo, insert_rotation, install_factors, linearize_elliptic,
    linked_twist, return_map, rotation_normal_form, verify_embedding, write_report,
)
from nuhlab.factorize import factor_rotation, twist_flow
from nuhlab.geometry import T2, SmoothMap, rotation
from nuhlab.lyapunov import spectra

P0 = (0.5, 0.5)


def twist_host(K=2 * np.pi / 5):
    """Twist of T^2 about (1/2, 1/2): derivative R(K) at the center, nonlinear away from it."""
    f = twist_flow(K, P0, 0.4).time_map(1.0)

    def step(X):
        Y, J = f.eval_jac(X)
        return np.mod(Y, 1.0), J

    return SmoothMap(evaluate=lambda X: step(X)[0], step=step, chart_in=T2, name="twist-host")


@pytest.fixture(scope="module")
def demo_site():
    host = demo_host(grid=(64, 64))
    g1, site = linearize_elliptic(host, P0, 1, 0.1, grid=(64, 64))
    return host, g1, site


@pytest.fixture(scope="module")
def tower(demo_site):
    _, g1, site = demo_site
    return insert_rotation(site, g1, 4)


def test_rotation_normal_form():
    V, w = rotation_normal_form(rotation(0.7).jac(np.zeros((1, 2)))[0])
    assert np.array_equal(V, np.eye(2)) and abs(w - 0.7) <= 1e-15
    S = np.array([[2.0, 1.0], [1.0, 1.0]])
    M = S @ rotation(1.1).jac(np.zeros((1, 2)))[0] @ np.linalg.inv(S)
    V, w = rotation_normal_form(M)
    assert abs(np.linalg.det(V) - 1.0) <= 1e-12 and abs(w - 1.1) <= 1e-12
    with pytest.raises(ValueError):
        rotation_normal_form(np.diag([2.0, 0.5]))


def test_linear_rotation_host():
    host = rotation(2 * np.pi / 3, P0, T2)
    g1, site = linearize_elliptic(host, P0, 1, 0.1, grid=(64, 64))
    assert site.k1 == 3 and site.perturbation <= 1e-12
    assert site.checks["power_identity"] <= 1e-12
    assert site.checks["host_outside"]


def test_demo_host_site(demo_site):
    host, g1, site = demo_site
    assert site.k1 == 4
    assert site.checks["linear_on_D1"] <= 1e-12
    assert site.checks["power_identity"] <= 1e-9
    assert site.checks["host_outside"] and site.checks["det_error"] <= 1e-12
    X = np.random.default_rng(0).random((500, 2))
    assert np.max(np.abs(np.linalg.det(host.jac(X)) - 1.0)) <= 1e-12


def test_linearization_distance_shrinks_with_radius():
    host = twist_host()
    eps = []
    for r in (0.1, 0.05):
        _, site = linearize_elliptic(host, P0, 1, r, grid=(64, 64))
        assert site.k1 == 5 and site.perturbation <= 1e-12
        assert site.checks["power_identity"] <= 1e-9
        eps.append(site.checks["c1_host_g1"])
    # quadratic deviation from the linear part
    assert 3.5 <= eps[0] / eps[1] <= 4.5


def test_linearize_errors():
    with pytest.raises(ValueError):
        linearize_elliptic(rotation(0.3, P0, T2), (0.3, 0.5))
    cat = SmoothMap(evaluate=lambda X: np.mod(X @ np.array([[2.0, 1.0], [1.0, 1.0]]).T, 1.0),
                    jacobian=lambda X: np.broadcast_to([[2.0, 1.0], [1.0, 1.0]], (len(X), 2, 2)).copy(),
                    chart_in=T2)
    with pytest.raises(ValueError):
        linearize_elliptic(cat, (0.0, 0.0))
    with pytest.raises(NotImplementedError):
        linearize_elliptic(rotation(0.3, P0, T2), P0, P=2)


def test_insert_rotation_k1_tower(demo_site):
    _, g1, site = demo_site
    tw = insert_rotation(site, g1, 1, require_disjoint=False)
    assert tw.N == site.k1
    assert tw.checks["period_error"] <= 1e-9
    with pytest.raises(DisjointnessError) as err:
        insert_rotation(site, g1, 1)
    assert err.value.pair is not None
    with pytest.raises(ValueError):
        insert_rotation(site, g1, 0)


def test_insert_rotation_tower(tower, demo_site):
    _, g1, site = demo_site
    assert tower.N == 16
    assert tower.checks["period_error"] <= 1e-9
    assert tower.checks["disjoint"] and tower.checks["cloud_separation"] > 2 * tower.checks["cloud_diameter"]
    assert tower.checks["c0_g1_g2"] <= tower.checks["c0_bound"]
    assert tower.checks["c1_g1_g2"] > 0
    X = np.random.default_rng(1).random((2000, 2))
    far = np.linalg.norm(((X - P0 + 0.5) % 1.0) - 0.5, axis=1) > site.D1_radius
    assert np.array_equal(tower.g2(X[far]), g1(X[far]))
    assert np.isclose(tower.angle, 2 * np.pi / 16)


def test_identity_factors_leave_g2(tower):
    res = install_factors(tower, factor_rotation(0.0, 1))
    assert res.padded == tower.N - 1
    X = np.vstack([tower.chart(np.random.default_rng(2).uniform(-0.7, 0.7, (50, 2)), j)
                   for j in range(tower.N)])
    assert np.array_equal(res.g3(X), res.g2(X))


def test_rotation_factors_return_map(tower):
    res = install_factors(tower, factor_rotation(0.9, tower.N))
    ch = verify_embedding(res, target=rotation(0.9))
    assert ch["target_error"] <= 1e-10 and ch["return_error"] <= 1e-10
    assert ch["bookkeeping"] <= 1e-8
    assert ch["local"] and ch["det_error"] <= 1e-12
    U = np.random.default_rng(3).uniform(-0.6, 0.6, (30, 2))
    assert np.max(np.abs(return_map(res)(U) - rotation(0.9)(U))) <= 1e-10


def test_too_many_factors(tower):
    with pytest.raises(ValueError):
        install_factors(tower, factor_rotation(0.9, tower.N + 1))
    with pytest.raises(ValueError):
        install_factors(tower, factor_rotation(0.9, 3), pad=False)


def test_linked_twist_embedding(tmp_path):
    res = embed_demo(grid=(64, 64))
    target, _ = linked_twist()
    ch = verify_embedding(res, target=target, exponents_T=2000, n_points=10, epsilon=0.01)
    assert ch["target_error"] <= 1e-6 and ch["bookkeeping"] <= 1e-8
    assert ch["local"] and ch["det_error"] <= 1e-6
    assert np.isfinite(ch["c1_g2_g3"]) and ch["delta"] > 0
    assert ch["nonzero_count"] >= 9
    assert np.max(np.abs(ch["exponents"].sum(1))) <= 1e-6
    path = tmp_path / "embed.txt"
    write_report(res, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# nuhlab embedding" and "k1 4" in lines and "N 16" in lines


def test_linked_twist_is_hyperbolic_on_its_own():
    target, _ = linked_twist()
    U = np.random.default_rng(4).uniform(-0.4, 0.4, (5, 2))
    spec, _, _ = spectra(target, U, 2000, check_singular=False)
    assert np.all(spec[:, 0] > 0.01) and np.max(np.abs(spec.sum(1))) <= 1e-6
