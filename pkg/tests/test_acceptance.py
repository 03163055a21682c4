"""Acceptance suite: one test per criterion, each printing a single pass/fail line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""
import sys
import time

import numpy as np
import pytest

from nuhlab.brin import flow_direction_exponent, make_space, random_states, suspension_time_map, brin_map
from nuhlab.cli import main as cli_main
from nuhlab.embed import embed_demo, verify_embedding
from nuhlab.factorize import RotationPiece, disk_samples, factor_composite, reconstruction_error, slowdown_flow_piece
from nuhlab.geometry import T2, identity_map, rotation
from nuhlab.katok import make_automorphism, make_katok
from nuhlab.lyapunov import nuh_fraction, spectra, torus_grid
from nuhlab.pasting import AnnulusGrid, make_problem, moser_solve, paste
from nuhlab.symplectic import symplectic_embed, verify_symplectic

LOG_ALPHA = 2.8872709503576206  # log(9 + 4 sqrt 5)
LOG_CAT = 0.9624236501192069  # log((3 + sqrt 5) / 2)


@pytest.fixture
def report(request):
    """Print one line per criterion straight to the terminal."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(n, ok, detail, seconds):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({seconds:.1f} s) {detail}"
        if capman is not None:
            with capman.global_and_fixture_disabled():
                print("\n" + line)
        else:
            print(line)
    return emit


def test_criterion_1_automorphism_exponents(report):
    cat = make_automorphism().smooth_map()
    X = np.random.default_rng(1).random((100, 2))
    t = time.perf_counter()
    spec, _, _ = spectra(cat, X, 2000)
    dt = time.perf_counter() - t
    err = float(np.max(np.abs(spec - [LOG_ALPHA, -LOG_ALPHA])))
    ok = err <= 1e-3 and dt < 5.0
    report(1, ok, f"max |lambda -/+ 2.88727| = {err:.3e}", dt)
    assert ok


def test_criterion_2_volume_preservation(report):
    t = time.perf_counter()
    g = make_katok().maps["g2"]
    X = np.random.default_rng(2).random((10000, 2))
    X = X[~g.near_singular(X)]
    err = float(np.max(np.abs(np.linalg.det(g.jac(X)) - 1.0)))
    dt = time.perf_counter() - t
    ok = err <= 1e-6 and dt < 60.0
    report(2, ok, f"max |det - 1| = {err:.3e} on {len(X)} samples", dt)
    assert ok


def test_criterion_3_nuh_fraction(report):
    t = time.perf_counter()
    g = make_katok().maps["g2"]
    res = nuh_fraction(g, torus_grid(100), 10000, 0.01)
    dt = time.perf_counter() - t
    ok = res.fraction >= 0.99 and dt < 600.0
    report(3, ok, f"NUH fraction {res.fraction:.4f} on 100x100, T = 1e4", dt)
    assert ok


def test_criterion_4_factorization(report):
    t = time.perf_counter()
    flow = slowdown_flow_piece()
    pres = [flow, RotationPiece(np.pi / 3, radius=flow.radius)]
    target_pieces = [flow.time_map(1.0), rotation(np.pi / 3)]
    f10 = factor_composite(pres, 10)
    f100 = factor_composite(pres, 100)
    X = disk_samples(flow.center, flow.radius, 64)

    def target(Y):
        for m in target_pieces:
            Y = m(Y)
        return Y

    err = max(reconstruction_error(f, target, X) for f in (f10, f100))
    ratio = f10.delta_achieved / f100.delta_achieved
    dt = time.perf_counter() - t
    ok = err <= 1e-6 and 8.0 <= ratio <= 12.0 and dt < 120.0
    report(4, ok, f"recompose {err:.3e}, delta(10)/delta(100) = {ratio:.3f}", dt)
    assert ok


def test_criterion_5_moser_and_pasting(report):
    t = time.perf_counter()

    def dens(Y):
        return 1.0 + 0.1 * np.cos(np.arctan2(Y[:, 1], Y[:, 0]))

    lines, ok = [], True
    for method in ("neumann", "flux"):
        res = [moser_solve(make_problem(AnnulusGrid(0.1, 0.2, n, n), dens), method).residual_sup
               for n in (128, 256)]
        order = float(np.log2(res[0] / res[1]))
        ok &= res[1] <= 1e-2 and order >= 1.8
        lines.append(f"{method} residual {res[1]:.2e} order {order:.2f}")
    c = np.array([0.5, 0.5])
    f, g = identity_map(T2), rotation(0.3, c, T2)
    G, rep = paste(f, g, c, 0.1, 0.2, (256, 256))
    rng = np.random.default_rng(5)
    r = np.sqrt(rng.random(2000))
    th = 2 * np.pi * rng.random(2000)
    D = np.column_stack([r * np.cos(th), r * np.sin(th)])
    inner = np.mod(c + 0.1 * D, 1.0)
    outer = rng.random((4000, 2))
    outer = outer[np.linalg.norm(outer - c, axis=1) > 0.2]
    mid = np.mod(c + (0.1 + 0.1 * r[:, None]) * D / np.maximum(r, 1e-12)[:, None], 1.0)
    det = max(rep.det_error, float(np.max(np.abs(np.linalg.det(G.jac(mid)) - 1.0))))
    bitwise = np.array_equal(G(inner), g(inner)) and np.array_equal(G(outer), f(outer))
    ok &= bitwise and det <= 5e-3
    dt = time.perf_counter() - t
    ok &= dt < 120.0
    report(5, ok, f"{'; '.join(lines)}; paste bitwise {bitwise} det {det:.2e}", dt)
    assert ok


def test_criterion_6_embedding(report):
    t = time.perf_counter()
    res = embed_demo()
    tw = res.tower
    ch = verify_embedding(res, target=res.factors.as_map(), exponents_T=10000, n_points=100, epsilon=0.01)
    dt = time.perf_counter() - t
    ok = (tw.checks["period_error"] <= 1e-9 and tw.checks["disjoint"] and ch["target_error"] <= 1e-6
          and ch["nonzero_count"] >= 95 and dt < 600.0)
    report(6, ok, f"period {tw.checks['period_error']:.1e}, disjoint {tw.checks['disjoint']}, "
                  f"return {ch['target_error']:.1e}, nonzero {ch['nonzero_count']}/100", dt)
    assert ok


def test_criterion_7_symplectic(report):
    t = time.perf_counter()
    base = embed_demo()
    res = symplectic_embed(base.tower, base.factors, 2)
    ch = verify_symplectic(res, 2, exponents_T=10000, n_points=20)
    dt = time.perf_counter() - t
    ok = ch["defect"] <= 1e-6 and ch["pairing_error"] <= 2e-2 and dt < 600.0
    report(7, ok, f"defect {ch['defect']:.1e}, pairing {ch['pairing_error']:.1e}, "
                  f"nonzero {ch['nonzero_count']}/20", dt)
    assert ok


def test_criterion_8_brin(report):
    t = time.perf_counter()
    sp = make_space()
    R = brin_map(sp, make_katok().maps["g2"])
    z = random_states(sp, 3, np.random.default_rng(4))
    lam = float(np.max(np.abs(flow_direction_exponent(R, z, 10000))))
    const = make_space(5, H0=2.0, eps=0.0)
    Y = random_states(const, 5, np.random.default_rng(5))[:, 2:]
    spec, _, _ = spectra(suspension_time_map(const, 2.0), Y, 10000, check_singular=False)
    base_err = float(np.max(np.abs(spec[:, [0, 2]] - [LOG_CAT, -LOG_CAT])))
    dt = time.perf_counter() - t
    ok = lam <= 1e-2 and base_err <= 1e-2 and dt < 300.0
    report(8, ok, f"flow exponent {lam:.1e}, base block error {base_err:.1e}", dt)
    assert ok


def test_criterion_9_reproducibility(report, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    t = time.perf_counter()
    runs = {"exponents": ["--map", "katok-t2", "--grid", "20x20", "--iters", "1000"],
            "nuh": ["--map", "katok-disk", "--grid", "10x10", "--iters", "500"],
            "robustness": ["--map", "katok-t2", "--grid", "10x10", "--iters", "200", "--trials", "2"]}
    ok = True
    for cmd, args in runs.items():
        outs = []
        for threads in (1, 2, 4):
            path = f"{cmd}-{threads}.csv"
            cli_main([cmd, *args, "--seed", "11", "--threads", str(threads), "--out", path])
            outs.append((tmp_path / path).read_bytes())
        ok &= len(outs[0]) > 0 and outs[0] == outs[1] == outs[2]
    capsys.readouterr()
    dt = time.perf_counter() - t
    report(9, ok, "bitwise identical CSV for threads 1, 2, 4", dt)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", *sys.argv[1:]]))
