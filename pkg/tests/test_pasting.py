import numpy as np
import pytest

from nuhlab.geometry import T2, ConvergenceError, fd_jacobian, identity_map, linear_map, rotation
from nuhlab.pasting import (
    AnnulusGrid, BumpProfile, blend, density_deficit, make_bump, make_problem, moser_solve, paste,
    write_moser_csv,
)

C = np.array([0.5, 0.5])


def cos_density(Y):
    return 1.0 + 0.05 * np.cos(np.arctan2(Y[:, 1], Y[:, 0]))


def annulus_points(n, ri, ro, seed):
    rng = np.random.default_rng(seed)
    r = rng.uniform(ri, ro, n)
    t = rng.uniform(0, 2 * np.pi, n)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def test_bump_profile():
    b = make_bump(0.2)
    assert (b.inner_radius, b.outer_radius) == (0.1, 0.2)
    assert b.value(0.05) == 1.0 and b.value(0.1) == 1.0 and b.value(0.25) == 0.0
    d = np.linspace(0.1, 0.2, 2001)
    v = b.value(d)
    assert np.all(np.diff(v) <= 0)
    assert np.max(np.abs(np.gradient(v, d))) <= b.C / b.outer_radius * (1 + 1e-3)
    assert b.C == pytest.approx(4.0)


def test_bump_gradient_matches_finite_differences():
    b = BumpProfile(0.1, 0.2)
    Y = annulus_points(100, 0.1, 0.2, 0)
    _, g = b.value_grad(Y)
    h = 1e-7
    fd = np.column_stack([(b.value_grad(Y + [h, 0])[0] - b.value_grad(Y - [h, 0])[0]) / (2 * h),
                          (b.value_grad(Y + [0, h])[0] - b.value_grad(Y - [0, h])[0]) / (2 * h)])
    assert np.max(np.abs(fd - g)) <= 1e-5


def test_blend_endpoints_are_verbatim():
    f, g = identity_map(T2), rotation(0.3, C, T2)
    h = blend(f, g, BumpProfile(0.1, 0.2), C)
    inner = np.mod(C + annulus_points(50, 0.0, 0.1, 1), 1.0)
    outer = np.mod(C + annulus_points(50, 0.2, 0.45, 2), 1.0)
    assert np.array_equal(h(inner), g(inner))
    assert np.array_equal(h(outer), f(outer))
    same = blend(g, g, BumpProfile(0.1, 0.2), C)
    mid = np.mod(C + annulus_points(50, 0.1, 0.2, 3), 1.0)
    assert np.array_equal(same(mid), g(mid))


def test_blend_jacobian_matches_finite_differences():
    for chart in ("cartesian", "polar"):
        h = blend(identity_map(T2), rotation(0.3, C, T2), BumpProfile(0.1, 0.2), C, chart)
        X = np.mod(C + annulus_points(40, 0.11, 0.19, 4), 1.0)
        assert np.max(np.abs(fd_jacobian(h, X, 1e-6) - h.jac(X))) <= 1e-6


def test_polar_blend_of_rotations_is_area_preserving():
    h = blend(identity_map(T2), rotation(1.2, C, T2), BumpProfile(0.1, 0.2), C, "polar")
    X = np.mod(C + annulus_points(500, 0.1, 0.2, 5), 1.0)
    assert np.max(np.abs(np.linalg.det(h.jac(X)) - 1.0)) <= 1e-12


def test_blend_rejects_unknown_chart():
    with pytest.raises(ValueError):
        blend(identity_map(), identity_map(), BumpProfile(0.1, 0.2), (0, 0), "spherical")


def test_density_deficit_examples():
    dom = AnnulusGrid(0.1, 0.2, 32, 32)
    p = density_deficit(rotation(0.4), (0.0, 0.0), dom)
    assert np.max(np.abs(p.density - 1.0)) <= 1e-14 and abs(p.lam - 1.0) <= 1e-14
    c = 1.1
    p = density_deficit(linear_map(c * np.eye(2)), (0.0, 0.0), dom)
    assert np.max(np.abs(p.density - c ** -2)) <= 1e-14
    p = density_deficit(linear_map(c * np.eye(2)), (0.0, 0.0), dom, form="pull")
    assert np.max(np.abs(p.density - c ** 2)) <= 1e-14
    with pytest.raises(ValueError):
        density_deficit(rotation(0.4), (0.0, 0.0), dom, form="other")


def test_deficit_scales_with_c1_distance():
    deficits = []
    for th in (0.05, 0.1, 0.2):
        _, rep = paste(identity_map(T2), rotation(th, C, T2), C, 0.1, 0.2, (64, 64), threshold=None)
        assert rep.deficit_sup <= rep.constant * rep.c1_distance * (1 + 1e-12)
        assert rep.constant <= 0.5
        deficits.append(rep.deficit_sup)
    assert deficits[0] < deficits[1] < deficits[2]


def test_moser_trivial_density():
    dom = AnnulusGrid(0.1, 0.2, 32, 32)
    for method in ("neumann", "flux"):
        sol = moser_solve(make_problem(dom, lambda Y: np.ones(len(Y))), method)
        assert sol.trivial and sol.residual_sup == 0.0
        assert not sol.displacement.any()


@pytest.mark.parametrize("method", ["neumann", "flux"])
def test_moser_residual_and_order(method):
    res = []
    for n in (64, 128):
        dom = AnnulusGrid(0.1, 0.2, n, n)
        sol = moser_solve(make_problem(dom, cos_density), method)
        res.append(sol.residual_sup)
        assert sol.boundary_violation <= dom.dr
        assert sol.mass_error <= 1e-6
    assert res[1] <= 1e-2
    assert np.log2(res[0] / res[1]) >= 1.8


def test_flux_method_fixes_boundary_pointwise():
    def dens(Y):
        r = np.linalg.norm(Y, axis=1)
        return 1.0 + 0.05 * np.cos(np.arctan2(Y[:, 1], Y[:, 0])) * np.sin(np.pi * (r - 0.1) / 0.1) ** 2

    dom = AnnulusGrid(0.1, 0.2, 64, 64)
    sol = moser_solve(make_problem(dom, dens), "flux")
    assert sol.boundary_slip <= 1e-12


def test_moser_inverse_round_trip():
    dom = AnnulusGrid(0.1, 0.2, 64, 64)
    sol = moser_solve(make_problem(dom, cos_density), "flux")
    Y = annulus_points(50, 0.1, 0.2, 6)
    assert np.max(np.abs(sol.inverse(sol.evaluate(Y)) - Y)) <= 1e-8
    m = sol.smooth_map()
    Z = 0.15 * Y / np.linalg.norm(Y, axis=1)[:, None]  # interior circle, away from the rims
    assert np.max(np.abs(fd_jacobian(m, Z, 1e-6) - m.jac(Z))) <= 1e-5


def test_moser_input_validation():
    with pytest.raises(ValueError):
        moser_solve(make_problem(AnnulusGrid(0.1, 0.2, 16, 16), cos_density))
    with pytest.raises(ValueError):
        moser_solve(make_problem(AnnulusGrid(0.0, 0.2, 32, 32), cos_density), "neumann")
    with pytest.raises(ValueError):
        make_problem(AnnulusGrid(0.1, 0.2, 32, 32), lambda Y: np.zeros(len(Y)))
    with pytest.raises(ValueError):
        moser_solve(make_problem(AnnulusGrid(0.1, 0.2, 32, 32), cos_density), "spectral")
    with pytest.raises(ConvergenceError):
        moser_solve(make_problem(AnnulusGrid(0.1, 0.2, 32, 32), cos_density), "flux", threshold=1e-12)


def test_paste_equal_maps_is_verbatim():
    g = rotation(0.3, C, T2)
    G, rep = paste(g, g, C, 0.1, 0.2, (32, 32))
    X = np.random.default_rng(7).random((300, 2))
    assert np.array_equal(G(X), g(X))
    assert rep.det_error <= 1e-12


def test_paste_rotation_into_identity():
    f, g = identity_map(T2), rotation(0.3, C, T2)
    G, rep = paste(f, g, C, 0.1, 0.2, (128, 128))
    assert rep.det_error <= 5e-3
    inner = np.mod(C + annulus_points(100, 0.0, 0.1, 8), 1.0)
    outer = np.mod(C + annulus_points(100, 0.2, 0.5, 9), 1.0)
    assert np.array_equal(G(inner), g(inner))
    assert np.array_equal(G(outer), f(outer))
    mid = np.mod(C + annulus_points(400, 0.1, 0.2, 10), 1.0)
    assert np.max(np.abs(np.linalg.det(G.jac(mid)) - 1.0)) <= 5e-3


def test_paste_validates_radii():
    with pytest.raises(ValueError):
        paste(identity_map(T2), identity_map(T2), C, 0.2, 0.1)


def test_write_moser_csv(tmp_path):
    dom = AnnulusGrid(0.1, 0.2, 32, 32)
    sol = moser_solve(make_problem(dom, cos_density), "flux")
    path = tmp_path / "moser.csv"
    write_moser_csv(sol, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "r,theta,theta_hat,det_dxi,residual"
    assert len(lines) == 1 + 32 * 32
