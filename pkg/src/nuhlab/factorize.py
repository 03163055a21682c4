"""Splitting maps into many near-identity area-preserving factors.

Supported presentations: time-1 maps of flows (N equal time steps), rigid
rotations (N equal angles) and disk maps that are the identity near the
boundary (an explicit isotopy followed by a Moser volume correction per step).
Factors are listed in application order: ``factors[0]`` acts first.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._parallel import map_chunks
from .geometry import ConvergenceError, SmoothMap, compose, identity_map, invert_newton, rotation
from .katok import KATOK_MATRIX, make_automorphism, make_slowdown, slowdown_flow
from .pasting import AnnulusGrid, density_deficit, moser_solve

DET_TOLERANCE = 5e-3
STRAIGHT_LINE_MAX = 0.5  # C1 distance below which the straight-line path is used


# ---------------------------------------------------------------- flows

@dataclass
class Flow:
    """A flow given by its time-t maps on a disk (center, radius) of R^2."""

    kind: str
    params: dict
    time_map: Callable[[float], SmoothMap]
    center: tuple = (0.0, 0.0)
    radius: float = 1.0


def slowdown_flow_piece(gamma=0.5, r=1e-5, blend_width=None, matrix=KATOK_MATRIX,
                        radius=0.1, field="hamiltonian", atol=1e-12, rtol=1e-12) -> Flow:
    """Slow-down flow of the Katok construction in eigen coordinates about one centre."""
    profile = make_slowdown(gamma, r, blend_width)
    alpha = make_automorphism(matrix).alpha

    def time_map(t):
        def step(S):
            res = slowdown_flow(profile, alpha, S, t, field, atol, rtol)
            if res.saturated.any():
                raise ConvergenceError(f"slow-down flow saturated at {S[np.argmax(res.saturated)].tolist()}")
            return res.points, res.jacobians

        m = SmoothMap(evaluate=lambda S: step(S)[0], step=step, name=f"slowdown-flow({t:.6g})",
                      smoothness_note="C-infinity away from the centre", params={"t": t})
        m.inverse = SmoothMap(evaluate=lambda S: time_map(-t).step(S)[0],
                              step=lambda S: time_map(-t).step(S), name=f"slowdown-flow({-t:.6g})",
                              inverse=m)
        return m

    params = {"gamma": gamma, "r": r, "blend_width": profile.blend_width,
              "matrix": np.asarray(matrix).tolist(), "radius": radius, "field": field,
              "atol": atol, "rtol": rtol}
    return Flow("slowdown", params, time_map, (0.0, 0.0), radius)


def _twist_step(X, K, c, R):
    d = np.asarray(X, dtype=float) - c
    rho2 = (d ** 2).sum(-1) / (R * R)
    inside = rho2 < 1.0
    a = np.where(inside, K * (1.0 - rho2), 0.0)
    ca, sa = np.cos(a), np.sin(a)
    x, y = d[:, 0], d[:, 1]
    Y = np.stack([ca * x - sa * y, sa * x + ca * y], -1) + c
    J = np.empty((len(d), 2, 2))
    J[:, 0, 0], J[:, 0, 1], J[:, 1, 0], J[:, 1, 1] = ca, -sa, sa, ca
    # D(Rot(a) d) = Rot(a) + (Rot'(a) d) grad(a)^T, grad a = -2 K d / R^2
    grad = np.where(inside[:, None], -2.0 * K * d / (R * R), 0.0)
    dRd = np.stack([-sa * x - ca * y, ca * x - sa * y], -1)
    J += dRd[:, :, None] * grad[:, None, :]
    return Y, J


def twist_flow(K=10.0, center=(0.0, 0.0), radius=1.0) -> Flow:
    """Radial twist flow: angular speed K (1 - |x - c|^2 / R^2) inside the disk, zero outside.

    Each time-t map is area-preserving and fixes the boundary circle pointwise.
    """
    c = np.asarray(center, dtype=float)

    def time_map(t):
        m = SmoothMap(evaluate=lambda X: _twist_step(X, t * K, c, radius)[0],
                      step=lambda X: _twist_step(X, t * K, c, radius),
                      name=f"twist({t * K:.6g})", smoothness_note="C0 across the rim circle",
                      params={"K": t * K, "center": c.tolist(), "radius": radius})
        m.inverse = SmoothMap(evaluate=lambda X: _twist_step(X, -t * K, c, radius)[0],
                              step=lambda X: _twist_step(X, -t * K, c, radius),
                              name=f"twist({-t * K:.6g})", inverse=m)
        return m

    return Flow("twist", {"K": K, "center": c.tolist(), "radius": radius}, time_map,
                tuple(c.tolist()), radius)


FLOW_KINDS = {"slowdown": slowdown_flow_piece, "twist": twist_flow}


def make_flow(kind, **params) -> Flow:
    if kind not in FLOW_KINDS:
        raise ValueError(f"unknown flow kind {kind!r}; known: {sorted(FLOW_KINDS)}")
    return FLOW_KINDS[kind](**params)


# ---------------------------------------------------------------- pieces

@dataclass(frozen=True)
class RotationPiece:
    theta: float
    center: tuple = (0.0, 0.0)
    radius: float = 1.0


@dataclass
class BoundaryIdentityPiece:
    """A disk map equal to the identity near the boundary circle."""

    fmap: SmoothMap
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    grid: tuple = (128, 128)
    path: str = "auto"


# ---------------------------------------------------------------- results

@dataclass
class Factorization:
    factors: list
    delta_achieved: float
    N: int
    pieces: list = field(default_factory=list)  # manifest entries: dicts with kind, n, params
    diagnostics: dict = field(default_factory=dict)

    def as_map(self) -> SmoothMap:
        if not self.factors:
            return identity_map()
        return compose(self.factors[::-1])

    def __call__(self, X):
        Y = np.atleast_2d(np.asarray(X, dtype=float))
        for f in self.factors:
            Y = f(Y)
        return Y

    def manifest(self) -> str:
        return write_manifest(self)


def disk_samples(center=(0.0, 0.0), radius=1.0, n=64):
    """Cell-centred n x n grid on the bounding square, restricted to the closed disk."""
    c = np.asarray(center, dtype=float)
    ax = -radius + (np.arange(n) + 0.5) * 2.0 * radius / n
    P = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    return c + P[(P ** 2).sum(-1) <= radius * radius]


def c1_to_identity(f: SmoothMap, X, threads=None) -> float:
    """sup |f(x) - x| + sup ||Df(x) - I|| (operator norm) over the samples."""
    def part(B):
        Y, J = f.eval_jac(B)
        c0 = np.linalg.norm(Y - B, axis=1)
        c1 = np.linalg.norm(J - np.eye(2), ord=2, axis=(1, 2))
        return c0, c1

    c0, c1 = map_chunks(part, np.asarray(X, dtype=float), threads, chunk=512)
    return float(c0.max() + c1.max()) if len(c0) else 0.0


def reconstruction_error(fact: Factorization, target: SmoothMap, X) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return float(np.max(np.linalg.norm(fact(X) - target(X), axis=1)))


def det_errors(fact: Factorization, X, threads=None) -> np.ndarray:
    """max |det Df_k - 1| over the samples, per factor."""
    X = np.asarray(X, dtype=float)
    out = []
    for f in fact.factors:
        J = map_chunks(lambda B: f.eval_jac(B)[1], X, threads, chunk=512)
        out.append(float(np.max(np.abs(np.linalg.det(J) - 1.0))))
    return np.array(out)


# ---------------------------------------------------------------- operations

def factor_flow_map(flow: Flow, N: int, n_samples=64, threads=None) -> Factorization:
    """N copies of the time-1/N map."""
    if N < 1:
        raise ValueError("N must be positive")
    f = flow.time_map(1.0 / N)
    delta = c1_to_identity(f, disk_samples(flow.center, flow.radius, n_samples), threads)
    entry = {"kind": "flow", "flow": flow.kind, "n": N, "params": flow.params}
    return Factorization([f] * N, delta, N, [entry])


def factor_rotation(theta: float, N: int, center=(0.0, 0.0), radius=1.0, n_samples=64) -> Factorization:
    """N rotations by theta / N about ``center``."""
    if N < 1:
        raise ValueError("N must be positive")
    f = rotation(theta / N, center)
    delta = c1_to_identity(f, disk_samples(center, radius, n_samples), threads=1)
    entry = {"kind": "rotation", "n": N,
             "params": {"theta": theta, "center": list(map(float, center)), "radius": radius}}
    return Factorization([f] * N, delta, N, [entry])


def _localized(fn, c, R):
    """Wrap a (X -> Y, J) map so it acts only on the open disk."""
    def step(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = X.copy()
        J = np.broadcast_to(np.eye(2), (len(X), 2, 2)).copy()
        inside = ((X - c) ** 2).sum(-1) < R * R
        if inside.any():
            Y[inside], J[inside] = fn(X[inside])
        return Y, J
    return step


def _straight_path(g, t, c, R):
    def step(X):
        Y, J = g.eval_jac(X)
        return X + t * (Y - X), np.eye(2) + t * (J - np.eye(2))
    m = SmoothMap(evaluate=lambda X: _localized(step, c, R)(X)[0], step=_localized(step, c, R),
                  name=f"line({t:.4g})")
    return m


def _alexander_path(g, ginv, t, c, R):
    """G_t(x) = c + t (g(c + (x - c)/t) - c) on |x - c| < t R, identity elsewhere."""
    def make(h):
        def step(X):
            Y, J = h.eval_jac(c + (X - c) / t)
            return c + t * (Y - c), J
        return _localized(step, c, t * R)

    fwd, bwd = make(g), make(ginv)
    m = SmoothMap(evaluate=lambda X: fwd(X)[0], step=fwd, name=f"alexander({t:.4g})")
    m.inverse = SmoothMap(evaluate=lambda X: bwd(X)[0], step=bwd, name=f"alexander({t:.4g})^-1",
                          inverse=m)
    return m


def _newton_inverse(G: SmoothMap) -> SmoothMap:
    def step(Y):
        X = invert_newton(G, Y, Y, tol=1e-13)
        _, J = G.eval_jac(X)
        return X, np.linalg.inv(J)
    return SmoothMap(evaluate=lambda Y: step(Y)[0], step=step, name=f"{G.name}^-1", inverse=G)


def _corrected(G: SmoothMap, c, R, grid, threshold):
    """G o xi with xi the disk Moser map making det = lam; returns (map, inverse, solution)."""
    dom = AnnulusGrid(0.0, R, grid[0], grid[1])
    problem = density_deficit(G, c, dom, form="pull")
    sol = moser_solve(problem, method="flux", threshold=threshold)
    xi = sol.smooth_map()
    Ginv = G.inverse if G.inverse is not None else _newton_inverse(G)

    def fwd(X):
        Z, Jx = xi.eval_jac(X - c)
        Y, Jg = G.eval_jac(Z + c)
        return Y, Jg @ Jx

    def bwd(Y):
        Z, Jg = Ginv.eval_jac(Y)
        X, Jx = xi.inverse.eval_jac(Z - c)
        return X + c, Jx @ Jg

    m = SmoothMap(evaluate=lambda X: fwd(X)[0], step=fwd, name=f"{G.name}+moser")
    m.inverse = SmoothMap(evaluate=lambda Y: bwd(Y)[0], step=bwd, name=f"{G.name}+moser^-1", inverse=m)
    return m, sol


def _quotient(Gk: SmoothMap, Gprev: Optional[SmoothMap], name) -> SmoothMap:
    """Gk o Gprev^-1 (Gprev None means the identity)."""
    if Gprev is None:
        return Gk

    def step(Y):
        X, Ji = Gprev.inverse.eval_jac(Y)
        Z, J = Gk.eval_jac(X)
        return Z, J @ Ji

    return SmoothMap(evaluate=lambda Y: step(Y)[0], step=step, name=name)


def factor_near_boundary_identity(g: SmoothMap, N: int, grid=(256, 256), center=(0.0, 0.0),
                                  radius=1.0, path="auto", t0=0.1, collar=0.05, n_samples=64,
                                  threshold=1e-2, threads=None) -> Factorization:
    """Factors of a disk map that is the identity on the collar next to the boundary.

    ``path="line"``: G_t = Id + t (g - Id), each G_{t_k} followed by a disk Moser
    correction so det = const; ``path="alexander"``: G_t(x) = t g(x / t) on
    t in [t0, 1], which is already area-preserving; ``"auto"`` picks the line
    when the C1 distance of g to Id is at most 0.5.
    """
    if N < 1:
        raise ValueError("N must be positive")
    c = np.asarray(center, dtype=float)
    R = float(radius)
    X = disk_samples(c, R, n_samples)
    Y = g(X)
    if np.any(np.linalg.norm(Y - c, axis=1) > R * (1 + 1e-9)):
        raise ValueError("isotopy leaves the disk: g maps samples outside it")
    rho = np.linalg.norm(X - c, axis=1)
    ring = rho >= R * (1 - collar)
    if ring.any() and np.max(np.linalg.norm(Y[ring] - X[ring], axis=1)) > 1e-9:
        raise ValueError(f"g is not the identity on the boundary collar of width {collar}")
    dist = c1_to_identity(g, X, threads)
    entry = {"kind": "boundary-identity", "n": N,
             "params": {"map": g.name, "center": c.tolist(), "radius": R, "grid": list(grid)}}
    if dist == 0.0:
        entry["params"]["path"] = "identity"
        return Factorization([identity_map()] * N, 0.0, N, [entry])
    if path == "auto":
        path = "line" if dist <= STRAIGHT_LINE_MAX else "alexander"
    entry["params"]["path"] = path
    Gs, residuals = [], []
    if path == "line":
        ts = np.arange(1, N + 1) / N
        for t in ts[:-1]:
            Gt, sol = _corrected(_straight_path(g, t, c, R), c, R, grid, threshold)
            Gs.append(Gt)
            residuals.append(sol.residual_sup)
        Gs.append(g)
        residuals.append(0.0)
    elif path == "alexander":
        ginv = g.inverse if g.inverse is not None else _newton_inverse(g)
        entry["params"]["t0"] = t0
        ts = t0 + (1 - t0) * np.arange(N) / (N - 1) if N > 1 else [1.0]
        for t in ts:
            Gs.append(_alexander_path(g, ginv, float(t), c, R))
            residuals.append(0.0)
    else:
        raise ValueError(f"unknown path {path!r}")
    factors = [_quotient(Gs[0], None, "factor-1")]
    factors += [_quotient(Gs[k], Gs[k - 1], f"factor-{k + 1}") for k in range(1, N)]
    delta = max(c1_to_identity(f, X, threads) for f in factors)
    diag = {"path": path, "c1_target": dist, "moser_residuals": residuals}
    return Factorization(factors, delta, N, [entry], diag)


def factor_composite(presentation, N_each, n_samples=64, threads=None) -> Factorization:
    """Concatenate factorizations of pieces given in application order."""
    presentation = list(presentation)
    if np.isscalar(N_each):
        N_each = [int(N_each)] * len(presentation)
    if len(N_each) != len(presentation):
        raise ValueError("N_each must match the presentation length")
    factors, pieces, delta, diag = [], [], 0.0, {}
    for i, (piece, n) in enumerate(zip(presentation, N_each)):
        if isinstance(piece, Flow):
            part = factor_flow_map(piece, n, n_samples, threads)
        elif isinstance(piece, RotationPiece):
            part = factor_rotation(piece.theta, n, piece.center, piece.radius, n_samples)
        elif isinstance(piece, BoundaryIdentityPiece):
            part = factor_near_boundary_identity(piece.fmap, n, piece.grid, piece.center,
                                                 piece.radius, piece.path, n_samples=n_samples,
                                                 threads=threads)
        else:
            raise TypeError(f"unsupported piece kind {type(piece).__name__}")
        factors += part.factors
        pieces += part.pieces
        delta = max(delta, part.delta_achieved)
        if part.diagnostics:
            diag[f"piece-{i}"] = part.diagnostics
    return Factorization(factors, delta, len(factors), pieces, diag)


# ---------------------------------------------------------------- manifest

def write_manifest(fact: Factorization) -> str:
    """Plain text: header lines, then one ``piece`` line per piece in application order."""
    lines = ["# nuhlab factorization", f"N {fact.N}", f"delta {fact.delta_achieved!r}"]
    for p in fact.pieces:
        kind = p["kind"] if p["kind"] != "flow" else f"flow:{p['flow']}"
        lines.append(f"piece {kind} {p['n']} {json.dumps(p['params'], sort_keys=True)}")
    return "\n".join(lines) + "\n"


def read_manifest(text: str) -> dict:
    out = {"pieces": []}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "N":
            out["N"] = int(rest)
        elif key == "delta":
            out["delta"] = float(rest)
        elif key == "piece":
            kind, n, params = rest.split(" ", 2)
            out["pieces"].append({"kind": kind, "n": int(n), "params": json.loads(params)})
        else:
            raise ValueError(f"unknown manifest line {line!r}")
    return out


def rebuild(text: str, n_samples=64) -> Factorization:
    """Rebuild a factorization of flow and rotation pieces from its manifest."""
    man = read_manifest(text)
    pres, ns = [], []
    for p in man["pieces"]:
        kind, params = p["kind"], dict(p["params"])
        if kind.startswith("flow:"):
            pres.append(make_flow(kind[5:], **params))
        elif kind == "rotation":
            pres.append(RotationPiece(params["theta"], tuple(params["center"]), params["radius"]))
        else:
            raise ValueError(f"piece kind {kind!r} cannot be rebuilt from a manifest")
        ns.append(p["n"])
    return factor_composite(pres, ns, n_samples)
