"""Finite-time Lyapunov spectra, NUH fractions and robustness probes.

Exponents come from QR re-orthonormalization of the Jacobian cocycle at every
step, batched over many initial points at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import map_chunks
from .geometry import T2, ChartPoint, SmoothMap, _mod1

CONVERGENCE_THRESHOLD = 1e-2


@dataclass
class ExponentReport:
    point: ChartPoint
    T: int
    spectrum: np.ndarray
    sum: float
    converged: bool
    excluded: bool


@dataclass(frozen=True)
class GridSpec:
    lo: tuple
    hi: tuple
    shape: tuple

    def points(self):
        """Cell-centred grid points in row-major order (first axis slowest)."""
        axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n
                for lo, hi, n in zip(self.lo, self.hi, self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def torus_grid(n, m=None) -> GridSpec:
    return GridSpec((0.0, 0.0), (1.0, 1.0), (n, n if m is None else m))


@dataclass
class NuhField:
    grid: object
    reports: list
    epsilon: float
    fraction: float

    @property
    def spectra(self):
        return np.array([r.spectrum for r in self.reports])

    @property
    def excluded(self):
        return np.array([r.excluded for r in self.reports], dtype=bool)


def _qr(M):
    """Batched QR with non-negative diagonal of R; closed form in 2D."""
    d = M.shape[-1]
    if d == 2:
        a, c = M[:, 0, 0], M[:, 1, 0]
        r11 = np.hypot(a, c)
        safe = np.where(r11 > 0, r11, 1.0)
        q1 = np.stack([a / safe, c / safe], axis=-1)
        q2 = np.stack([-q1[:, 1], q1[:, 0]], axis=-1)
        r22 = (q2 * M[:, :, 1]).sum(-1)
        Q = np.stack([q1, q2], axis=-1)
        sign = np.where(r22 < 0, -1.0, 1.0)
        Q[:, :, 1] *= sign[:, None]
        return Q, np.stack([r11, np.abs(r22)], axis=-1)
    Q, R = np.linalg.qr(M)
    diag = np.diagonal(R, axis1=1, axis2=2)
    sign = np.where(diag < 0, -1.0, 1.0)
    return Q * sign[:, None, :], np.abs(diag)


def spectra_batch(fmap: SmoothMap, X, T: int, check_singular=True):
    """Run the QR cocycle for a batch of points.

    Returns ``(spectrum(T), spectrum(T//2), excluded)``; spectra are sorted
    descending and are NaN for excluded rows.
    """
    X = np.array(X, dtype=float)
    n, d = X.shape
    sums = np.zeros((n, d))
    half = np.full((n, d), np.nan)
    excluded = np.zeros(n, dtype=bool)
    if check_singular:
        excluded |= np.asarray(fmap.near_singular(X), dtype=bool)
    Q = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    active = np.nonzero(~excluded)[0]
    Xa = X[active]
    Qa = Q[active]
    Ta = max(1, T // 2)
    for t in range(1, T + 1):
        if len(active) == 0:
            break
        Y, J = fmap.eval_jac(Xa)
        Qa, diag = _qr(J @ Qa)
        sums[active] += np.log(diag)
        if t == Ta:
            half[active] = sums[active] / Ta
        Xa = Y
        if check_singular:
            bad = np.asarray(fmap.near_singular(Xa), dtype=bool)
            if bad.any():
                excluded[active[bad]] = True
                keep = ~bad
                active, Xa, Qa = active[keep], Xa[keep], Qa[keep]
    spec = -np.sort(-sums / T, axis=1)
    half = -np.sort(-half, axis=1)
    spec[excluded] = np.nan
    half[excluded] = np.nan
    return spec, half, excluded


def spectra(fmap: SmoothMap, X, T: int, check_singular=True, threads=None):
    """Thread-chunked :func:`spectra_batch`; independent of the thread count."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return map_chunks(lambda B: spectra_batch(fmap, B, T, check_singular), X, threads)


def _reports(fmap, X, T, spec, half, excl):
    out = []
    for x, s, h, e in zip(X, spec, half, excl):
        conv = bool(not e and np.max(np.abs(s - h)) < CONVERGENCE_THRESHOLD)
        total = float(np.sum(s)) if not e else float("nan")
        out.append(ExponentReport(ChartPoint(x, fmap.chart_in), T, s, total, conv, bool(e)))
    return out


def finite_time_spectrum(fmap: SmoothMap, x, T: int, check_singular=True) -> ExponentReport:
    if isinstance(x, ChartPoint):
        x = x.coords
    x = np.asarray(x, dtype=float)[None, :]
    spec, half, excl = spectra_batch(fmap, x, T, check_singular)
    return _reports(fmap, x, T, spec, half, excl)[0]


def nuh_fraction(fmap: SmoothMap, grid, T: int, epsilon=0.01, threads=None,
                 check_singular=True) -> NuhField:
    """Fraction of non-excluded grid points whose exponents all exceed ``epsilon`` in modulus."""
    X = grid.points() if isinstance(grid, GridSpec) else np.asarray(grid, dtype=float)
    spec, half, excl = spectra(fmap, X, T, check_singular, threads)
    reports = _reports(fmap, X, T, spec, half, excl)
    frac = fraction_from(spec, excl, epsilon)
    return NuhField(grid, reports, float(epsilon), frac)


def fraction_from(spec, excl, epsilon):
    keep = ~np.asarray(excl, dtype=bool)
    if not keep.any():
        return float("nan")
    good = np.min(np.abs(spec[keep]), axis=1) > epsilon
    return float(good.mean())


def birkhoff_average(fmap: SmoothMap, observable, x, T: int, check_singular=False):
    """Time average of ``observable`` over the first T orbit points (x included)."""
    x = np.atleast_2d(np.asarray(x.coords if isinstance(x, ChartPoint) else x, dtype=float))
    total = np.zeros(len(x))
    for _ in range(T):
        if check_singular and np.any(fmap.near_singular(x)):
            raise ValueError("orbit entered an excluded neighbourhood")
        total += observable(x)
        x = fmap(x)
    out = total / T
    return float(out[0]) if len(out) == 1 else out


# ---------------------------------------------------------------- robustness

def random_shear_perturbation(scale, rng, n_shears=2) -> SmoothMap:
    """Composition of trigonometric shears of amplitude ``scale``; exactly area-preserving on T^2."""
    params = [(rng.uniform(-1, 1), rng.uniform(0, 1), rng.uniform(-1, 1), rng.uniform(0, 1))
              for _ in range(n_shears)]
    tp = 2.0 * np.pi

    def step(X):
        X = np.array(X, dtype=float)
        J = np.broadcast_to(np.eye(2), (len(X), 2, 2)).copy()
        for a, ph, b, ps in params:
            c1 = scale * a * tp * np.cos(tp * (X[:, 1] + ph))
            S1 = np.zeros_like(J)
            S1[:, 0, 0] = 1.0
            S1[:, 0, 1] = c1
            S1[:, 1, 1] = 1.0
            X[:, 0] += scale * a * np.sin(tp * (X[:, 1] + ph))
            c2 = scale * b * tp * np.cos(tp * (X[:, 0] + ps))
            S2 = np.zeros_like(J)
            S2[:, 0, 0] = 1.0
            S2[:, 1, 0] = c2
            S2[:, 1, 1] = 1.0
            X[:, 1] += scale * b * np.sin(tp * (X[:, 0] + ps))
            J = S2 @ S1 @ J
        return _mod1(X), J

    return SmoothMap(evaluate=lambda X: step(X)[0], step=step, chart_in=T2,
                     name="shear-perturbation", params={"scale": scale, "shears": params})


def perturbed(fmap: SmoothMap, P: SmoothMap) -> SmoothMap:
    """P after fmap, keeping fmap's singular set."""
    def step(X):
        Y, J = fmap.eval_jac(X)
        Z, K = P.eval_jac(Y)
        return Z, K @ J

    return SmoothMap(evaluate=lambda X: step(X)[0], step=step, chart_in=fmap.chart_in,
                     name=f"perturbed-{fmap.name}", singular_points=fmap.singular_points,
                     exclusion_radius=fmap.exclusion_radius, excluded=fmap.excluded)


@dataclass
class RobustnessTable:
    base_fraction: float
    trial_fractions: list
    scale: float
    seed: int

    @property
    def worst_drop(self):
        if not self.trial_fractions:
            return 0.0
        return float(max(0.0, self.base_fraction - min(self.trial_fractions)))

    def rows(self):
        yield ("base", self.base_fraction, 0.0)
        for i, f in enumerate(self.trial_fractions):
            yield (f"trial-{i}", f, self.base_fraction - f)


def robustness_probe(fmap: SmoothMap, perturbation_scale, trials, grid, T, epsilon=0.01,
                     seed=0, threads=None) -> RobustnessTable:
    """NUH fraction under ``trials`` random area-preserving shear perturbations."""
    if fmap.chart_in != T2:
        raise ValueError("robustness probes perturb torus maps only")
    base = nuh_fraction(fmap, grid, T, epsilon, threads).fraction
    rng = np.random.default_rng(seed)
    fracs = []
    for _ in range(trials):
        P = random_shear_perturbation(perturbation_scale, rng)
        if perturbation_scale == 0:
            fracs.append(base)
            continue
        fracs.append(nuh_fraction(perturbed(fmap, P), grid, T, epsilon, threads).fraction)
    return RobustnessTable(base, fracs, float(perturbation_scale), int(seed))
