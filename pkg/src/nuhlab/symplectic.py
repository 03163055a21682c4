"""Products of area-preserving surface maps and their symplectic checks.

Coordinates of a d-fold product are ``(x_1, y_1, ..., x_d, y_d)``; the standard
form is block-diagonal with 2 x 2 blocks [[0, 1], [-1, 0]].
"""
from __future__ import annotations

import csv

import numpy as np

from .embed import EmbeddingResult, Tower, _tower_edit, install_factors
from .export import coord_columns, exponent_columns
from .factorize import Factorization
from .geometry import SmoothMap, compose, identity_map, product_chart, rotation_matrix
from .lyapunov import spectra

BLOCK_FORM = np.array([[0.0, 1.0], [-1.0, 0.0]])


def standard_form(d: int) -> np.ndarray:
    return np.kron(np.eye(d), BLOCK_FORM)


def _blockwise(fmaps, X):
    """Apply fmaps[i] to block i of every row; returns image and block-diagonal Jacobian."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = len(X), len(fmaps)
    Y = np.empty_like(X)
    J = np.zeros((n, 2 * d, 2 * d))
    for i, f in enumerate(fmaps):
        s = slice(2 * i, 2 * i + 2)
        Y[:, s], J[:, s, s] = f.eval_jac(X[:, s])
    return Y, J


def product_map(factor: SmoothMap, d: int) -> SmoothMap:
    """factor x ... x factor (d times); d = 1 returns the factor itself."""
    if d < 1:
        raise ValueError("d must be positive")
    if d == 1:
        return factor
    if factor.dim != 2:
        raise ValueError("product factors must be surface maps")
    fs = [factor] * d

    def step(X):
        return _blockwise(fs, X)

    def excluded(X):
        X = np.atleast_2d(X)
        return np.any([factor.near_singular(X[:, 2 * i:2 * i + 2]) for i in range(d)], axis=0)

    chart = product_chart(d)
    m = SmoothMap(evaluate=lambda X: step(X)[0], step=step, chart_in=chart,
                  name=f"{factor.name}^x{d}", params={"d": d, "factor": factor.name},
                  excluded=excluded)
    if factor.inverse is not None:
        inv = [factor.inverse] * d
        m.inverse = SmoothMap(evaluate=lambda X: _blockwise(inv, X)[0],
                              step=lambda X: _blockwise(inv, X), chart_in=chart,
                              name=f"{factor.name}^-1^x{d}", inverse=m)
    return m


def symplectic_defect(fmap: SmoothMap, x) -> np.ndarray:
    """Operator norm of Df^T J Df - J at each point (scalar for one point)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Df = np.atleast_3d(fmap.jac(np.atleast_2d(x)))
    n = Df.shape[-1]
    if n % 2:
        raise ValueError("symplectic defect needs an even dimension")
    Jf = standard_form(n // 2)
    D = np.swapaxes(Df, 1, 2) @ Jf @ Df - Jf
    out = np.linalg.norm(D, ord=2, axis=(1, 2))
    return float(out[0]) if single else out


def block_dets(fmap: SmoothMap, x) -> np.ndarray:
    """Determinants of the diagonal 2 x 2 blocks, shape (n, d)."""
    Df = fmap.jac(np.atleast_2d(np.asarray(x, dtype=float)))
    d = Df.shape[-1] // 2
    return np.stack([np.linalg.det(Df[:, 2 * i:2 * i + 2, 2 * i:2 * i + 2]) for i in range(d)], -1)


# ---------------------------------------------------------------- product tower

def _tower_index(tw: Tower, X):
    """Index j of the tower disk containing each point, -1 off the tower."""
    W = tw.to_lin(X)
    idx = np.full(len(W), -1)
    for j in range(tw.N):
        c = rotation_matrix(j * tw.beta) @ tw.D2_center
        idx[((W - c) ** 2).sum(-1) < tw.D2_radius ** 2] = j
    return idx


def symplectic_embed(tw: Tower, factors: Factorization, d: int) -> EmbeddingResult:
    """Install (h_i, ..., h_i) on the diagonal tower sets g2^i(D2) x ... x g2^i(D2).

    Each edit acts per 2D block through the same conjugacy as in the surface
    tower, so it is area-preserving per block and symplectic for the product form.
    d = 1 gives the surface result.
    """
    if d == 1:
        return install_factors(tw, factors)
    N = tw.N
    fs = list(factors.factors)
    if len(fs) > N:
        raise ValueError(f"{len(fs)} factors but the tower has only N = {N} disks")
    padded = N - len(fs)
    fs += [identity_map()] * padded
    E = _tower_edit(tw, fs)
    chart = product_chart(d)

    def edit(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = X.copy()
        J = np.broadcast_to(np.eye(2 * d), (len(X), 2 * d, 2 * d)).copy()
        idx = [_tower_index(tw, X[:, 2 * i:2 * i + 2]) for i in range(d)]
        same = (idx[0] >= 0) & np.all([ix == idx[0] for ix in idx], axis=0)
        if same.any():
            out[same], J[same] = _blockwise([E] * d, X[same])
        return out, J

    Ed = SmoothMap(evaluate=lambda X: edit(X)[0], step=edit, chart_in=chart, name="product-tower-edit")
    g2d = product_map(tw.g2, d)
    g3 = compose([g2d, Ed])
    g3.name = f"g3^x{d}"
    return EmbeddingResult(g2d, g3, tw.D2_radius, tw.k, tw.clouds, tw, factors, padded,
                           checks={"d": d})


def product_chart_map(tw: Tower, d: int):
    """Unit-polydisk coordinates of D2 x ... x D2 to the product chart, and back."""
    def to(U):
        U = np.atleast_2d(U)
        return np.hstack([tw.chart(U[:, 2 * i:2 * i + 2]) for i in range(d)])

    def back(X):
        return np.hstack([tw.chart_inverse(X[:, 2 * i:2 * i + 2]) for i in range(d)])

    return to, back


def product_return_map(res: EmbeddingResult, d: int) -> SmoothMap:
    """g3^N on D2^d in unit coordinates."""
    tw = res.tower
    to, back = product_chart_map(tw, d)
    A = np.kron(np.eye(d), tw.site.V * tw.D2_radius)

    def step(U):
        X = to(U)
        J = np.broadcast_to(np.eye(2 * d), (len(X), 2 * d, 2 * d)).copy()
        for _ in range(tw.N):
            X, Jg = res.g3.eval_jac(X)
            J = Jg @ J
        return back(X), np.linalg.solve(A, J @ A)

    return SmoothMap(evaluate=lambda U: step(U)[0], step=step, chart_in=f"R{2 * d}", name="product-return")


def polydisk_samples(d, n, rng):
    """n random points of the unit polydisk (uniform in each disk)."""
    r = np.sqrt(rng.random((n, d)))
    th = 2 * np.pi * rng.random((n, d))
    return np.stack([r * np.cos(th), r * np.sin(th)], -1).reshape(n, 2 * d)


def verify_symplectic(res: EmbeddingResult, d: int, n_samples=200, exponents_T=0, n_points=20,
                      seed=0, epsilon=0.01, threads=None) -> dict:
    tw = res.tower
    rng = np.random.default_rng(seed)
    to, _ = product_chart_map(tw, d)
    U = polydisk_samples(d, n_samples, rng)
    # samples on every diagonal tower set
    Xs = []
    for j in range(tw.N):
        Xs.append(np.hstack([tw.chart(U[:, 2 * i:2 * i + 2], j) for i in range(d)]))
    X = np.vstack(Xs)
    ch = {"defect": float(np.max(symplectic_defect(res.g3, X))),
          "block_det_error": float(np.max(np.abs(block_dets(res.g3, X) - 1.0)))}
    R = product_return_map(res, d)
    target = product_map(res.factors.as_map(), d) if res.padded == 0 else None
    if target is not None:
        ch["return_error"] = float(np.max(np.abs(R(U) - target(U))))
    if exponents_T:
        U0 = polydisk_samples(d, n_points, rng)
        spec, _, _ = spectra(R, U0, exponents_T, check_singular=False, threads=threads)
        ch["exponents"] = spec
        ch["pairing_error"] = float(np.max(np.abs(spec + spec[:, ::-1])))
        ch["nonzero_count"] = int((np.min(np.abs(spec), axis=1) > epsilon).sum())
    res.checks.update(ch)
    return ch


def write_defect_csv(fmap: SmoothMap, X, path, spectra_rows=None):
    """Columns: point coordinates, defect, and exponents when given."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    D = symplectic_defect(fmap, X)
    n = X.shape[1]
    head = coord_columns(n) + ["defect"]
    if spectra_rows is not None:
        head += exponent_columns(np.shape(spectra_rows)[1])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for i, (x, dv) in enumerate(zip(X, np.atleast_1d(D))):
            row = list(x) + [dv]
            if spectra_rows is not None:
                row += list(spectra_rows[i])
            w.writerow([format(v, ".17g") for v in row])

