"""Installing a factorized disk map on a small periodic disk near an elliptic point.

Three steps:
1. ``linearize_elliptic``: paste the linear model of the return map at an elliptic
   fixed point p, with a rational rotation number q/k1.
2. ``insert_rotation``: compose with an extra rotation by 2 pi / (k k1) near p
   (a twist collar returns to the old map), pick a disk D2 whose k k1 images are
   disjoint and on which g2^(k k1) = Id.
3. ``install_factors``: on the j-th image of D2 replace g2 by
   C_{j+1} o f_{j+1} o C_j^-1 with C_j = g2^j on D2, so the return map to D2 is
   f_N o ... o f_1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .factorize import Factorization, factor_composite, twist_flow
from .geometry import (T2, ChartPoint, SmoothMap, _mod1, compose, identity_map, rotation,
                       rotation_matrix, wrap_centered)
from .lyapunov import spectra
from .pasting import BumpProfile, blend, c1_distance, paste

TWO_PI = 2.0 * np.pi


class DisjointnessError(ValueError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


# ---------------------------------------------------------------- demo host and target

def demo_host(theta=np.pi / 2, center=(0.5, 0.5), U_radius=0.15, V_radius=0.25, grid=(128, 128)):
    """Rotation by theta about ``center`` on a disk, pasted into the identity of T^2."""
    c = np.asarray(center, dtype=float)
    G, rep = paste(identity_map(T2), rotation(theta, c, T2), c, U_radius, V_radius, grid,
                   blend_chart="polar")
    G.name = f"demo-host({theta:.6g})"
    G.params.update({"theta": theta, "det_error": rep.det_error})
    return G


def linked_twist(K=10.0, offset=0.3):
    """T_b o T_a on the unit disk: twist about 0 then about (offset, 0) with radius 1 - offset.

    Returns the map and its presentation (two flows, application order).
    """
    a = twist_flow(K, (0.0, 0.0), 1.0)
    b = twist_flow(K, (offset, 0.0), 1.0 - offset)
    target = compose([b.time_map(1.0), a.time_map(1.0)])
    target.name = f"linked-twist(K={K:g}, offset={offset:g})"
    return target, [a, b]


# ---------------------------------------------------------------- step 1

@dataclass
class EllipticSite:
    host: SmoothMap
    p: ChartPoint
    P: int
    k1: int
    D1_radius: float
    collar_radius: float = 0.0
    M: np.ndarray = None  # D host^P (p)
    V: np.ndarray = None  # det-1 basis with V^-1 M V a rotation
    omega: float = 0.0  # measured rotation angle
    omega_rational: float = 0.0  # 2 pi q / k1 actually used
    perturbation: float = 0.0
    checks: dict = field(default_factory=dict)


def _local_linear(p, A, name):
    """x -> p + A (x - p) on T^2, with the offset taken in (-1/2, 1/2]^2."""
    A = np.asarray(A, dtype=float)

    def step(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _mod1(p + wrap_centered(X - p) @ A.T), np.broadcast_to(A, (len(X), 2, 2)).copy()

    return SmoothMap(evaluate=lambda X: step(X)[0], step=step, chart_in=T2, name=name,
                     params={"matrix": A.tolist(), "center": p.tolist()})


def rotation_normal_form(M):
    """(V, omega) with det V = 1 and V^-1 M V = R(omega); V = I when M is orthogonal."""
    M = np.asarray(M, dtype=float)
    if abs(np.linalg.det(M) - 1.0) > 1e-8 or abs(np.trace(M)) >= 2.0:
        raise ValueError(f"derivative is not elliptic (trace {np.trace(M):.6g}, det {np.linalg.det(M):.6g})")
    if np.allclose(M.T @ M, np.eye(2), atol=1e-12):
        V = np.eye(2)
    else:
        w, vecs = np.linalg.eig(M)
        v = vecs[:, np.argmax(w.imag)]
        V = np.column_stack([v.real, v.imag])
        if np.linalg.det(V) < 0:
            V[:, 1] *= -1
        V /= np.sqrt(np.linalg.det(V))
    Rm = np.linalg.solve(V, M @ V)
    return V, float(np.mod(np.arctan2(Rm[1, 0], Rm[0, 0]), TWO_PI))


def _disk_points(center, radius, n, V=None):
    """Cell-centred n x n samples of a disk given in linearizing coordinates."""
    ax = (np.arange(n) + 0.5) / n * 2 - 1
    P = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    P = P[(P ** 2).sum(-1) <= 1] * radius
    return P if V is None else P @ V.T


def _iterate(f, X, n):
    for _ in range(n):
        X = f(X)
    return X


def linearize_elliptic(host: SmoothMap, p, P=1, radius=0.1, collar=1.5, max_denominator=64,
                       grid=(256, 256)):
    """Paste the linear model of host^P at p on the disk D1 of ``radius``.

    Returns ``(g1, site)``. The rotation number is snapped to the nearest
    fraction with denominator <= ``max_denominator``; the snap size is reported.
    """
    if P != 1:
        raise NotImplementedError("only fixed points (P = 1) are supported")
    pc = np.asarray(p.coords if isinstance(p, ChartPoint) else p, dtype=float)
    if np.linalg.norm(wrap_centered(host(pc[None])[0] - pc)) > 1e-10:
        raise ValueError("p is not a fixed point of the host")
    M = host.jac(pc[None])[0]
    V, omega = rotation_normal_form(M)
    frac = Fraction(omega / TWO_PI).limit_denominator(max_denominator)
    k1 = frac.denominator
    omega_q = TWO_PI * frac.numerator / k1
    A = V @ rotation_matrix(omega_q) @ np.linalg.inv(V)
    L = _local_linear(pc, A, f"linear({omega_q:.6g})")
    orthogonal = np.allclose(V, np.eye(2))
    g1, rep = paste(host, L, pc, radius, collar * radius, grid,
                    blend_chart="polar" if orthogonal else "cartesian")
    g1.name = "g1"
    site = EllipticSite(host, ChartPoint(pc, T2), P, k1, float(radius), float(collar * radius),
                        M, V, omega, omega_q, abs(omega - omega_q))
    X = _mod1(pc + _disk_points(np.zeros(2), radius, 48))
    Xout = np.random.default_rng(0).random((2000, 2))
    Xout = Xout[np.linalg.norm(wrap_centered(Xout - pc), axis=1) > collar * radius]
    site.checks = {
        "linear_on_D1": float(np.max(np.abs(wrap_centered(g1(X) - L(X))))),
        "power_identity": float(np.max(np.abs(wrap_centered(_iterate(g1, X, k1 * P) - X)))),
        "host_outside": bool(np.array_equal(g1(Xout), host(Xout))),
        "c1_host_g1": c1_distance(host, g1, pc, collar * radius),
        "det_error": rep.det_error,
    }
    return g1, site


# ---------------------------------------------------------------- step 2

@dataclass
class Tower:
    site: EllipticSite
    g1: SmoothMap
    g2: SmoothMap
    k: int
    angle: float  # extra rotation 2 pi / (k k1)
    beta: float  # rotation of g2 on the inner disk
    D2_center: np.ndarray  # in linearizing coordinates about p
    D2_radius: float
    clouds: list = field(default_factory=list, repr=False)
    checks: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.k * self.site.k1 * self.site.P

    def to_lin(self, X):
        return wrap_centered(np.asarray(X, dtype=float) - self.site.p.coords) @ np.linalg.inv(self.site.V).T

    def from_lin(self, W):
        return _mod1(self.site.p.coords + np.asarray(W, dtype=float) @ self.site.V.T)

    def chart(self, U, j=0):
        """Unit-disk coordinates of the j-th tower disk to T^2."""
        return self.from_lin((self.D2_center + self.D2_radius * np.asarray(U)) @ rotation_matrix(j * self.beta).T)

    def chart_inverse(self, X, j=0):
        W = self.to_lin(X) @ rotation_matrix(-j * self.beta).T
        return (W - self.D2_center) / self.D2_radius

    def D2_samples(self, n=32):
        return self.chart(_disk_points(np.zeros(2), 1.0, n))


def _local_edit(p, V, radius, B, name):
    """Conjugate a map B of the linearizing plane (fixing |w| >= radius) onto T^2 near p."""
    Vi = np.linalg.inv(V)

    def step(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = X.copy()
        J = np.broadcast_to(np.eye(2), (len(X), 2, 2)).copy()
        W = wrap_centered(X - p) @ Vi.T
        on = (W ** 2).sum(-1) < radius * radius
        if on.any():
            Wn, JB = B.eval_jac(W[on])
            out[on] = _mod1(p + Wn @ V.T)
            J[on] = V @ JB @ Vi
        return out, J

    return SmoothMap(evaluate=lambda X: step(X)[0], step=step, chart_in=T2, name=name)


def _clouds(g2, boundary, n_iter):
    clouds = [boundary]
    for _ in range(n_iter - 1):
        clouds.append(g2(clouds[-1]))
    return clouds


def insert_rotation(site: EllipticSite, g1: SmoothMap, k: int, inner=0.5, D2_distance=None,
                    D2_radius=None, n_cloud=1000, require_disjoint=True) -> Tower:
    """g2 = g1 o E, E a rotation by 2 pi/(k k1) near p that untwists to Id on D1's edge."""
    if k < 1:
        raise ValueError("k must be positive")
    p, V = site.p.coords, site.V
    b = site.D1_radius / np.linalg.norm(V, 2)
    a_in = inner * b
    angle = TWO_PI / (k * site.k1)
    B = blend(identity_map(), rotation(angle), BumpProfile(a_in, b), np.zeros(2), chart="polar")
    E = _local_edit(p, V, b, B, f"R({angle:.6g})-collar")
    g2 = compose([g1, E])
    g2.name = "g2"
    d = 0.6 * a_in if D2_distance is None else float(D2_distance)
    rho = 0.06 * d if D2_radius is None else float(D2_radius)
    if d + rho >= a_in:
        raise ValueError("D2 must lie inside the region where g2 is a rotation")
    tw = Tower(site, g1, g2, k, angle, site.omega_rational + angle, np.array([d, 0.0]), rho)
    N = tw.N
    X = tw.D2_samples(24)
    tw.checks["period_error"] = float(np.max(np.abs(wrap_centered(_iterate(g2, X, N) - X))))
    th = TWO_PI * np.arange(n_cloud) / n_cloud
    tw.clouds = _clouds(g2, tw.chart(np.stack([np.cos(th), np.sin(th)], -1)), N)
    local = [wrap_centered(c - p) for c in tw.clouds]
    diam = max(float(pdist(c).max()) for c in local)
    sep, pair = np.inf, None
    for i in range(N):
        for j in range(i + 1, N):
            s = float(cdist(local[i], local[j]).min())
            if s < sep:
                sep, pair = s, (i, j)
    tw.checks.update({"cloud_diameter": diam, "cloud_separation": sep, "closest_pair": pair,
                      "disjoint": bool(sep >= 2.0 * diam)})
    Xs = _mod1(p + _disk_points(np.zeros(2), site.D1_radius, 48))
    disp = np.linalg.norm(wrap_centered(g2(Xs) - g1(Xs)), axis=1).max()
    lip = float(np.linalg.norm(g1.jac(Xs), 2, axis=(1, 2)).max())
    tw.checks.update({"c0_g1_g2": float(disp), "c0_bound": angle * site.D1_radius * lip,
                      "c1_g1_g2": c1_distance(g1, g2, p, site.D1_radius)})
    if require_disjoint and not tw.checks["disjoint"]:
        raise DisjointnessError(f"tower disks {pair} are {sep:.3e} apart; need >= {2 * diam:.3e} "
                                f"(k = {k} too small?)", pair)
    return tw


# ---------------------------------------------------------------- step 3

@dataclass
class EmbeddingResult:
    g2: SmoothMap
    g3: SmoothMap
    D2_radius: float
    k: int
    disk_images: list
    tower: Tower = None
    factors: Factorization = None
    padded: int = 0
    checks: dict = field(default_factory=dict)


def _tower_edit(tw: Tower, factors):
    """E = C_j o f_{j+1} o C_j^-1 on the j-th tower disk, identity elsewhere."""
    p, V = tw.site.p.coords, tw.site.V
    Vi = np.linalg.inv(V)
    N, c, rho = tw.N, tw.D2_center, tw.D2_radius
    rots = [rotation_matrix(j * tw.beta) for j in range(N)]
    centers = np.array([Rj @ c for Rj in rots])

    def step(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = X.copy()
        J = np.broadcast_to(np.eye(2), (len(X), 2, 2)).copy()
        W = wrap_centered(X - p) @ Vi.T
        for j in range(N):
            on = ((W - centers[j]) ** 2).sum(-1) < rho * rho
            if not on.any():
                continue
            U = ((W[on] @ rots[j]) - c) / rho
            Un, Jf = factors[j].eval_jac(U)
            out[on] = _mod1(p + ((c + rho * Un) @ rots[j].T) @ V.T)
            A = V @ rots[j]
            J[on] = A @ Jf @ np.linalg.inv(A)
        return out, J

    return SmoothMap(evaluate=lambda X: step(X)[0], step=step, chart_in=T2, name="tower-edit")


def install_factors(tw: Tower, factors: Factorization, pad=True) -> EmbeddingResult:
    """g3 = g2 o E with E the conjugated factor on each tower disk."""
    N = tw.N
    fs = list(factors.factors)
    if len(fs) > N:
        raise ValueError(f"{len(fs)} factors but the tower has only N = k k1 P = {N} disks")
    padded = N - len(fs)
    if padded and not pad:
        raise ValueError(f"{len(fs)} factors for {N} tower disks")
    fs += [identity_map()] * padded
    g3 = compose([tw.g2, _tower_edit(tw, fs)])
    g3.name = "g3"
    return EmbeddingResult(tw.g2, g3, tw.D2_radius, tw.k, tw.clouds, tw, factors, padded)


def return_map(res: EmbeddingResult) -> SmoothMap:
    """g3^N on D2, in the unit-disk coordinates of D2."""
    tw = res.tower
    A = tw.site.V * tw.D2_radius

    def step(U):
        X = tw.chart(U)
        J = np.broadcast_to(np.eye(2), (len(X), 2, 2)).copy()
        for _ in range(tw.N):
            X, Jg = res.g3.eval_jac(X)
            J = Jg @ J
        return tw.chart_inverse(X), np.linalg.solve(A, J @ A)

    return SmoothMap(evaluate=lambda U: step(U)[0], step=step, name="return-map")


def verify_embedding(res: EmbeddingResult, target=None, n=24, exponents_T=0, n_points=100, seed=0,
                     epsilon=0.01, threads=None) -> dict:
    """Numerical checks of the installed tower; results also stored in ``res.checks``."""
    tw = res.tower
    N = tw.N
    fs = list(res.factors.factors) + [identity_map()] * res.padded
    U = _disk_points(np.zeros(2), 1.0, n)
    X = tw.chart(U)
    ch = {}
    # g3^i on D2 equals C_i o f_i o ... o f_1, and C_N = Id
    Y, V = X, U
    book = 0.0
    for i in range(1, N + 1):
        Y = res.g3(Y)
        V = fs[i - 1](V)
        if i < N:
            book = max(book, float(np.max(np.abs(wrap_centered(Y - tw.chart(V, i))))))
    ch["bookkeeping"] = book
    ch["return_error"] = float(np.max(np.abs(wrap_centered(Y - tw.chart(V)))))
    if target is not None:
        ch["target_error"] = float(np.max(np.abs(wrap_centered(Y - tw.chart(target(U))))))
    rng = np.random.default_rng(seed)
    Z = rng.random((5000, 2))
    off = np.ones(len(Z), dtype=bool)
    W = tw.to_lin(Z)
    for j in range(N):
        off &= np.linalg.norm(W - rotation_matrix(j * tw.beta) @ tw.D2_center, axis=1) >= tw.D2_radius
    ch["local"] = bool(np.array_equal(res.g3(Z[off]), res.g2(Z[off])))
    tower_pts = np.vstack([tw.chart(U, j) for j in range(N)])
    ch["det_error"] = float(np.max(np.abs(np.linalg.det(res.g3.jac(tower_pts)) - 1.0)))
    ch["c1_g2_g3"] = float(c1_distance(res.g2, res.g3, tw.site.p.coords, tw.site.D1_radius, n=96))
    ch["delta"] = res.factors.delta_achieved
    if exponents_T:
        r = np.sqrt(rng.random(n_points))
        th = TWO_PI * rng.random(n_points)
        U0 = np.stack([r * np.cos(th), r * np.sin(th)], -1)
        spec, _, _ = spectra(return_map(res), U0, exponents_T, check_singular=False, threads=threads)
        ch["exponents"] = spec
        ch["nonzero_count"] = int((np.min(np.abs(spec), axis=1) > epsilon).sum())
    res.checks.update(ch)
    return ch


def embed_demo(k=4, K=10.0, offset=0.3, theta=np.pi / 2, radius=0.1, grid=(128, 128), factors=None):
    """Demo host -> g1 -> g2 -> g3 carrying the linked twist map on D2."""
    host = demo_host(theta, grid=grid)
    g1, site = linearize_elliptic(host, (0.5, 0.5), 1, radius, grid=grid)
    tw = insert_rotation(site, g1, k)
    if factors is None:
        _, pres = linked_twist(K, offset)
        N = tw.N
        factors = factor_composite(pres, [N // 2, N - N // 2])
    return install_factors(tw, factors)


def write_report(res: EmbeddingResult, path):
    """Structured plain-text report: one ``key value`` line per item."""
    tw = res.tower
    s = tw.site
    lines = ["# nuhlab embedding",
             f"p {s.p.coords[0]!r} {s.p.coords[1]!r}", f"P {s.P}", f"k1 {s.k1}", f"k {tw.k}",
             f"N {tw.N}", f"D1_radius {s.D1_radius!r}", f"omega {s.omega!r}",
             f"perturbation {s.perturbation!r}", f"D2_radius {tw.D2_radius!r}",
             f"D2_distance {tw.D2_center[0]!r}", f"padded {res.padded}"]
    for pc in res.factors.pieces:
        lines.append(f"piece {pc['kind']} {pc['n']}")
    for name, d in (("site", s.checks), ("tower", tw.checks), ("embed", res.checks)):
        for key, v in d.items():
            if isinstance(v, np.ndarray):
                continue
            lines.append(f"{name}.{key} {v!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
