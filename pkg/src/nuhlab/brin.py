"""Skew product of the slowed-down disk map with a suspension flow over a toral automorphism.

State layout for base dimension m = n - 3: ``(x1, x2, b_1..b_m, h)`` where x lives
on the torus cover of the disk factor, b on T^m and 0 <= h < H(b) is the height.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._smooth import smoothstep
from .geometry import ChartPoint, SmoothMap, _mod1, chart_dim, susp_chart, wrap_centered
from .katok import HALF_POINTS

CAT_BLOCK = np.array([[2, 1], [1, 1]])
THREE_BLOCK = np.array([[2, 1, 1], [1, 1, 1], [0, 1, 2]])


def block_matrix(n: int) -> np.ndarray:
    """Block-diagonal base matrix on T^{n-3}: 2x2 cat blocks, last block 3x3 when n is even."""
    if n < 5:
        raise ValueError("n must be at least 5")
    k = (n - 3) // 2
    blocks = [CAT_BLOCK] * k if n % 2 == 1 else [CAT_BLOCK] * (k - 1) + [THREE_BLOCK]
    m = n - 3
    M = np.zeros((m, m), dtype=np.int64)
    i = 0
    for B in blocks:
        s = B.shape[0]
        M[i:i + s, i:i + s] = B
        i += s
    return M


@dataclass(frozen=True)
class SuspensionSpace:
    """Roof H(b) = H0 + eps * cos(2 pi b_1) over the automorphism ``base_matrix``."""

    base_matrix: np.ndarray
    H0: float = 2.0
    eps: float = 0.1

    def __post_init__(self):
        M = np.asarray(self.base_matrix)
        if abs(round(np.linalg.det(M))) != 1:
            raise ValueError("base matrix must be unimodular")
        if not self.H0 > 1.0 + abs(self.eps):
            raise ValueError("need H0 > 1 + |eps|")

    @property
    def m(self):
        return np.asarray(self.base_matrix).shape[0]

    def roof(self, b):
        b = np.asarray(b, dtype=float)
        return self.H0 + self.eps * np.cos(2 * np.pi * b[..., 0])

    def roof_grad(self, b):
        b = np.asarray(b, dtype=float)
        g = np.zeros(b.shape)
        g[..., 0] = -2 * np.pi * self.eps * np.sin(2 * np.pi * b[..., 0])
        return g


def make_space(n=5, H0=2.0, eps=0.1) -> SuspensionSpace:
    return SuspensionSpace(block_matrix(n), float(H0), float(eps))


@dataclass(frozen=True)
class SuspensionPoint:
    base: ChartPoint
    height: float


def flow_batch(space: SuspensionSpace, B, h, t, db=None, dh=None):
    """Flow (b, h) for times t (scalar or per row), tracking tangent vectors if given.

    ``db`` has shape (n, m, k), ``dh`` shape (n, k): k tangent vectors per point.
    """
    A = np.asarray(space.base_matrix, dtype=float)
    Ai = np.linalg.inv(A)
    B = np.array(B, dtype=float)
    h = np.array(h, dtype=float) + t
    track = db is not None
    if track:
        db = np.array(db, dtype=float)
        dh = np.array(dh, dtype=float)
    while True:
        up = h >= space.roof(B)
        if not up.any():
            break
        if track:
            g = space.roof_grad(B[up])
            dh[up] -= np.einsum("nm,nmk->nk", g, db[up])
            db[up] = np.einsum("ij,njk->nik", A, db[up])
        h[up] -= space.roof(B[up])
        B[up] = _mod1(B[up] @ A.T)
    while True:
        down = h < 0
        if not down.any():
            break
        B[down] = _mod1(B[down] @ Ai.T)
        h[down] += space.roof(B[down])
        if track:
            db[down] = np.einsum("ij,njk->nik", Ai, db[down])
            g = space.roof_grad(B[down])
            dh[down] += np.einsum("nm,nmk->nk", g, db[down])
    if track:
        return B, h, db, dh
    return B, h


def suspension_flow(space: SuspensionSpace, y: SuspensionPoint, t: float) -> SuspensionPoint:
    B, h = flow_batch(space, y.base.coords[None, :], np.array([y.height]), t)
    return SuspensionPoint(ChartPoint(B[0], f"R{space.m}" if space.m != 2 else "T2"), float(h[0]))


def suspension_time_map(space: SuspensionSpace, t: float) -> SmoothMap:
    """Time-t map of the suspension flow on (b, h), with Jacobian."""
    m = space.m

    def step(X):
        X = np.asarray(X, dtype=float)
        n = len(X)
        db = np.broadcast_to(np.eye(m + 1)[:m], (n, m, m + 1)).copy()
        dh = np.broadcast_to(np.eye(m + 1)[m], (n, m + 1)).copy()
        B, h, db, dh = flow_batch(space, X[:, :m], X[:, m], t, db, dh)
        J = np.concatenate([db, dh[:, None, :]], axis=1)
        return np.column_stack([B, h]), J

    return SmoothMap(evaluate=lambda X: step(X)[0], step=step, chart_in=f"R{m + 1}",
                     name=f"suspension-time-{t}", params={"t": t, "H0": space.H0, "eps": space.eps})


@dataclass(frozen=True)
class AlphaFn:
    """alpha(x) = c * d(x)^2 * cutoff(d), d = torus distance to the four half-period points."""

    c: float = 1.0
    d_in: float = 0.01
    d_out: float = 0.02
    centers: np.ndarray = field(default_factory=lambda: HALF_POINTS.copy())

    def _nearest(self, X):
        diff = wrap_centered(np.asarray(X, dtype=float)[:, None, :] - self.centers[None, :, :])
        dist = np.linalg.norm(diff, axis=-1)
        k = np.argmin(dist, axis=1)
        idx = np.arange(len(X))
        return dist[idx, k], diff[idx, k]

    def value_grad(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        d, v = self._nearest(X)
        S, dS = smoothstep((d - self.d_in) / (self.d_out - self.d_in))
        dS = dS / (self.d_out - self.d_in)
        val = self.c * d * d * S
        # d/dx of d^2 S(d) = (2 d S + d^2 S') * v / d = (2 S + d S') v
        grad = self.c * (2.0 * S + d * dS)[:, None] * v
        return val, grad

    def __call__(self, X):
        return self.value_grad(X)[0]


def brin_map(space: SuspensionSpace, disk_map: SmoothMap, alpha_fn: Callable = None) -> SmoothMap:
    """R(x, y) = (g(x), T^{alpha(x)} y) on the state (x on T^2 cover, b, h)."""
    alpha_fn = AlphaFn() if alpha_fn is None else alpha_fn
    m = space.m
    n = 2 + m + 1
    chart = susp_chart(n)
    assert chart_dim(chart) == n

    def step(Z):
        Z = np.asarray(Z, dtype=float)
        N = len(Z)
        X, B, h = Z[:, :2], Z[:, 2:2 + m], Z[:, 2 + m]
        Xn, Jg = disk_map.eval_jac(X)
        a, ga = alpha_fn.value_grad(X)
        # tangent vectors e_1..e_n as columns
        db = np.zeros((N, m, n))
        db[:, :, 2:2 + m] = np.eye(m)
        dh = np.zeros((N, n))
        dh[:, 2 + m] = 1.0
        dh[:, :2] += ga
        Bn, hn, db, dh = flow_batch(space, B, h, a, db, dh)
        J = np.zeros((N, n, n))
        J[:, :2, :2] = Jg
        J[:, 2:2 + m, :] = db
        J[:, 2 + m, :] = dh
        return np.column_stack([Xn, Bn, hn]), J

    def near(Z):
        return np.asarray(disk_map.near_singular(np.atleast_2d(Z)[:, :2]), dtype=bool)

    return SmoothMap(evaluate=lambda Z: step(Z)[0], step=step, chart_in=chart, name="brin",
                     smoothness_note="inherits the disk factor's singular set",
                     excluded=near,
                     params={"n": n, "H0": space.H0, "eps": space.eps,
                             "alpha_scale": getattr(alpha_fn, "c", None)})


def flow_direction_exponent(R: SmoothMap, z, T: int) -> float:
    """Growth rate of the vertical (flow-direction) tangent vector along the orbit of z."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n = z.shape[1]
    v = np.zeros((len(z), n))
    v[:, -1] = 1.0
    total = np.zeros(len(z))
    for _ in range(T):
        z, J = R.eval_jac(z)
        v = np.einsum("nij,nj->ni", J, v)
        nv = np.linalg.norm(v, axis=1)
        total += np.log(nv)
        v /= nv[:, None]
    out = total / T
    return float(out[0]) if len(out) == 1 else out


def random_states(space: SuspensionSpace, count, rng):
    X = rng.random((count, 2))
    B = rng.random((count, space.m))
    h = rng.random(count) * space.roof(B)
    return np.column_stack([X, B, h])
