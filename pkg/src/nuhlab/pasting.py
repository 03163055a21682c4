"""Blend two area-preserving maps across an annulus and repair the Jacobian with Moser's flow.

Local coordinates are centred at the blend centre (wrapped on the torus). The
annulus ``ri <= |y| <= ro`` carries a polar node grid; ``moser_solve`` builds a
divergence field F with ``div F = lam - theta`` and flows grid points along
``F / rho_t``, ``rho_t = (1 - t) lam + t theta``. The time-1 map xi satisfies
``det Dxi(x) * theta(xi(x)) = lam``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded

from . import _advect
from ._smooth import smoothstep
from .geometry import (
    T2,
    ConvergenceError,
    SmoothMap,
    _mod1,
    invert_newton,
    wrap_centered,
)

TWO_PI = 2.0 * np.pi
EXACT_DET = 1e-12  # deficits below this are treated as exactly zero


# ---------------------------------------------------------------- bump and blend

@dataclass(frozen=True)
class BumpProfile:
    """rho = 1 for |y| <= inner_radius, 0 for |y| >= outer_radius, C-infinity in between."""

    inner_radius: float
    outer_radius: float

    @property
    def width(self):
        return self.outer_radius - self.inner_radius

    @property
    def gradient_bound(self):
        # the smoothstep slope peaks at x = 1/2 with value 2
        return 2.0 / self.width

    @property
    def C(self):
        """Constant in |grad rho| <= C / outer_radius."""
        return self.gradient_bound * self.outer_radius

    def value(self, d):
        S, _ = smoothstep((np.asarray(d, dtype=float) - self.inner_radius) / self.width)
        return 1.0 - S

    def value_grad(self, Y):
        """rho and its gradient at local offsets Y (n, 2)."""
        d = np.linalg.norm(Y, axis=1)
        S, dS = smoothstep((d - self.inner_radius) / self.width)
        with np.errstate(invalid="ignore", divide="ignore"):
            e = np.where(d[:, None] > 0, Y / d[:, None], 0.0)
        return 1.0 - S, -(dS / self.width)[:, None] * e


def make_bump(r0) -> BumpProfile:
    return BumpProfile(0.5 * r0, float(r0))


def _local(chart, X, center):
    D = np.asarray(X, dtype=float) - center
    return wrap_centered(D) if chart == T2 else D


def _to_chart(chart, Y):
    return _mod1(Y) if chart == T2 else Y


def blend(f: SmoothMap, g: SmoothMap, bump: BumpProfile, center, chart="cartesian") -> SmoothMap:
    """h = rho g + (1 - rho) f about ``center``.

    ``chart="polar"`` takes the convex combination of radius and angle about
    ``center`` instead, so two rotations about the centre blend into a twist.
    Inside the inner radius the result is ``g`` verbatim, outside the outer
    radius ``f`` verbatim.
    """
    if chart not in ("cartesian", "polar"):
        raise ValueError("chart must be 'cartesian' or 'polar'")
    space = f.chart_in
    c = np.asarray(center, dtype=float)

    def step(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = _local(space, X, c)
        d = np.linalg.norm(Y, axis=1)
        inner = d <= bump.inner_radius
        outer = d >= bump.outer_radius
        mid = ~(inner | outer)
        out = np.empty_like(X)
        J = np.empty((len(X), 2, 2))
        if inner.any():
            out[inner], J[inner] = g.eval_jac(X[inner])
        if outer.any():
            out[outer], J[outer] = f.eval_jac(X[outer])
        if mid.any():
            Xm = X[mid]
            fx, Jf = f.eval_jac(Xm)
            gx, Jg = g.eval_jac(Xm)
            rho, grho = bump.value_grad(Y[mid])
            if chart == "cartesian":
                delta = _local(space, gx, fx) if space == T2 else gx - fx
                out[mid] = _to_chart(space, fx + rho[:, None] * delta)
                J[mid] = Jf + rho[:, None, None] * (Jg - Jf) + delta[:, :, None] * grho[:, None, :]
            else:
                out[mid], J[mid] = _polar_mix(space, c, fx, Jf, gx, Jg, rho, grho)
        return out, J

    return SmoothMap(evaluate=lambda X: step(X)[0], step=step, chart_in=space, name="blend",
                     singular_points=np.vstack([f.singular_points, g.singular_points]),
                     params={"center": c.tolist(), "inner": bump.inner_radius,
                             "outer": bump.outer_radius, "chart": chart})


def _polar_mix(space, c, fx, Jf, gx, Jg, rho, grho):
    uf = _local(space, fx, c)
    ug = _local(space, gx, c)
    rf = np.linalg.norm(uf, axis=1)
    rg = np.linalg.norm(ug, axis=1)
    tf = np.arctan2(uf[:, 1], uf[:, 0])
    tg = np.arctan2(ug[:, 1], ug[:, 0])
    dth = np.mod(tg - tf + np.pi, TWO_PI) - np.pi
    R = rho * rg + (1 - rho) * rf
    Th = tf + rho * dth
    ef = uf / rf[:, None]
    eg = ug / rg[:, None]
    pf = np.stack([-ef[:, 1], ef[:, 0]], -1)
    pg = np.stack([-eg[:, 1], eg[:, 0]], -1)
    drf = np.einsum("ni,nij->nj", ef, Jf)
    drg = np.einsum("ni,nij->nj", eg, Jg)
    dtf = np.einsum("ni,nij->nj", pf, Jf) / rf[:, None]
    dtg = np.einsum("ni,nij->nj", pg, Jg) / rg[:, None]
    dR = rho[:, None] * drg + (1 - rho)[:, None] * drf + (rg - rf)[:, None] * grho
    dT = dtf + rho[:, None] * (dtg - dtf) + dth[:, None] * grho
    e = np.stack([np.cos(Th), np.sin(Th)], -1)
    p = np.stack([-e[:, 1], e[:, 0]], -1)
    out = _to_chart(space, c + R[:, None] * e)
    J = e[:, :, None] * dR[:, None, :] + (R[:, None] * p)[:, :, None] * dT[:, None, :]
    return out, J


# ---------------------------------------------------------------- Moser problem

@dataclass(frozen=True)
class AnnulusGrid:
    r_in: float
    r_out: float
    n_r: int
    n_theta: int

    @property
    def r(self):
        return np.linspace(self.r_in, self.r_out, self.n_r)

    @property
    def theta(self):
        return np.arange(self.n_theta) * TWO_PI / self.n_theta

    @property
    def dr(self):
        return (self.r_out - self.r_in) / (self.n_r - 1)

    @property
    def weights(self):
        """Trapezoid area weights per node, shape (n_r, n_theta)."""
        w = self.r * self.dr
        w[0] *= 0.5
        w[-1] *= 0.5
        return np.repeat(w[:, None], self.n_theta, axis=1) * (TWO_PI / self.n_theta)

    def nodes(self):
        R, TH = np.meshgrid(self.r, self.theta, indexing="ij")
        return np.stack([R * np.cos(TH), R * np.sin(TH)], axis=-1)


@dataclass
class MoserProblem:
    domain: AnnulusGrid
    density: np.ndarray
    lam: float
    density_fn: Optional[Callable] = None  # exact density at local offsets, if known

    def __post_init__(self):
        if np.any(self.density <= 0):
            raise ValueError("density must be strictly positive")


def make_problem(domain: AnnulusGrid, density_fn: Callable) -> MoserProblem:
    """Sample a density given as a function of local offsets (n, 2)."""
    P = domain.nodes().reshape(-1, 2)
    dens = np.asarray(density_fn(P), dtype=float).reshape(domain.n_r, domain.n_theta)
    lam = float((dens * domain.weights).sum() / domain.weights.sum())
    return MoserProblem(domain, dens, lam, density_fn)


def density_deficit(h: SmoothMap, center, domain: AnnulusGrid, form="push", guess=None) -> MoserProblem:
    """Density for the Moser step of a blended map ``h``.

    ``form="push"`` gives theta_hat(y) = 1 / det Dh(h^-1(y)), using Newton
    inversion started from ``guess`` (a map, default the identity).
    ``form="pull"`` gives theta(x) = det Dh(x); its Moser solution xi makes
    h o xi area-preserving and needs no inversion.
    """
    c = np.asarray(center, dtype=float)
    space = h.chart_in

    def dens(Y):
        X = _to_chart(space, c + Y)
        if form == "pull":
            d = np.linalg.det(h.jac(X))
        else:
            start = X if guess is None else guess(X)
            Z = invert_newton(h, X, start)
            d = 1.0 / np.linalg.det(h.jac(Z))
        if np.any(d <= 0):
            raise ValueError("non-positive Jacobian determinant in the blend")
        return d

    if form not in ("push", "pull"):
        raise ValueError("form must be 'push' or 'pull'")
    return make_problem(domain, dens)


# ---------------------------------------------------------------- divergence solvers

def _neumann_field(problem: MoserProblem):
    """F = grad psi with Laplace psi = lam - theta and zero normal derivative.

    Second-order differences in radius with ghost-node Neumann rows, Fourier
    modes in angle.
    """
    dom = problem.domain
    r, dr, nr, nt = dom.r, dom.dr, dom.n_r, dom.n_theta
    d = problem.lam - problem.density
    dk = np.fft.rfft(d, axis=1)
    rp = r + 0.5 * dr
    rm = r - 0.5 * dr
    # left null vector of the k = 0 operator; makes the discrete problem solvable
    w = r * dr
    w[0] = rp[0] * dr / 2
    w[-1] = rm[-1] * dr / 2
    dk[:, 0] -= (w * dk[:, 0]).sum() / w.sum()
    up = rp[:-1] / (r[:-1] * dr * dr)
    lo = rm[1:] / (r[1:] * dr * dr)
    up[0] = 2.0 / dr ** 2
    lo[-1] = 2.0 / dr ** 2
    base = -(rp + rm) / (r * dr * dr)
    base[0] = base[-1] = -2.0 / dr ** 2
    k = np.arange(dk.shape[1])
    psik = np.zeros_like(dk)
    for j, kk in enumerate(k):
        ab = np.zeros((3, nr), dtype=complex)
        ab[0, 1:] = up
        ab[1] = base - kk * kk / r ** 2
        ab[2, :-1] = lo
        rhs = dk[:, j].copy()
        if kk == 0:
            ab[1, 0] = 1.0
            ab[0, 1] = 0.0
            rhs[0] = 0.0
        psik[:, j] = solve_banded((1, 1), ab, rhs)
    psi = np.fft.irfft(psik, n=nt, axis=1)
    Fr = np.gradient(psi, dr, axis=0, edge_order=2)
    Fr[0] = 0.0
    Fr[-1] = 0.0
    ik = 1j * k
    if nt % 2 == 0:
        ik[-1] = 0.0
    Ft = np.fft.irfft(ik[None, :] * psik, n=nt, axis=1) / r[:, None]
    return Fr, Ft


def _flux_field(problem: MoserProblem):
    """Explicit flux: radial part from the angular mean, angular part from the remainder.

    Both parts vanish wherever the deficit vanishes for all angles at that radius,
    so the flow fixes every such circle pointwise.
    """
    dom = problem.domain
    r, nt = dom.r, dom.n_theta
    d = problem.lam - problem.density
    dbar = d.mean(axis=1)
    dt = d - dbar[:, None]
    G = cumulative_trapezoid(r * dbar, r, initial=0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        Fr = np.repeat(np.where(r > 0, G / r, 0.0)[:, None], nt, axis=1)
    dth = TWO_PI / nt
    cum = np.concatenate([np.zeros((len(r), 1)),
                          np.cumsum(0.5 * (dt[:, :-1] + dt[:, 1:]) * dth, axis=1)], axis=1)
    Ft = r[:, None] * cum
    return Fr, Ft


@dataclass
class MoserSolution:
    problem: MoserProblem
    method: str
    displacement: np.ndarray  # (n_r, n_theta, 2): xi(node) - node
    residual_sup: float
    boundary_violation: float
    boundary_slip: float
    mass_error: float
    substeps: int = 50
    trivial: bool = False
    fields: tuple = field(default=(), repr=False)  # (F_r, F_theta) on the nodes
    node_jacobian: Optional[np.ndarray] = field(default=None, repr=False)

    def _advect(self, R, TH, backward=False):
        dom = self.problem.domain
        Fr, Ft = self.fields
        t0, t1 = (1.0, 0.0) if backward else (0.0, 1.0)
        return _advect.advect(Fr, Ft, self.problem.density, dom.r_in, dom.dr,
                              TWO_PI / dom.n_theta, self.problem.lam,
                              np.ascontiguousarray(R, dtype=float),
                              np.ascontiguousarray(TH, dtype=float), t0, t1, self.substeps)

    def _apply(self, Y, backward=False):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = Y.copy()
        J = np.broadcast_to(np.eye(2), (len(Y), 2, 2)).copy()
        if self.trivial:
            return out, J
        dom = self.problem.domain
        R0 = np.linalg.norm(Y, axis=1)
        tol = 1e-12 * dom.r_out
        inside = (R0 >= dom.r_in - tol) & (R0 <= dom.r_out + tol) & (R0 > 0)
        if not inside.any():
            return out, J
        R0i = R0[inside]
        T0 = np.arctan2(Y[inside, 1], Y[inside, 0])
        R1, T1, M = self._advect(R0i, T0, backward)
        out[inside] = np.stack([R1 * np.cos(T1), R1 * np.sin(T1)], -1)
        # polar Jacobian to Cartesian: P(xi) M P(x)^-1 with P = [e_r, r e_theta]
        J[inside] = _polar_frame(R1, T1) @ M @ np.linalg.inv(_polar_frame(R0i, T0))
        return out, J

    def evaluate(self, Y):
        return self._apply(Y)[0]

    def eval_jac(self, Y):
        return self._apply(Y)

    def inverse(self, Y):
        return self._apply(Y, backward=True)[0]

    def smooth_map(self) -> SmoothMap:
        m = SmoothMap(evaluate=self.evaluate, step=self.eval_jac, name=f"moser-{self.method}")
        m.inverse = SmoothMap(evaluate=self.inverse, step=lambda Y: self._apply(Y, True),
                              name="moser-inverse", inverse=m)
        return m

    def density_at(self, X):
        """Density at local offsets: exact when known, else interpolated."""
        if self.problem.density_fn is not None:
            return np.asarray(self.problem.density_fn(X), dtype=float)
        dom = self.problem.domain
        R = np.linalg.norm(X, axis=1)
        TH = np.mod(np.arctan2(X[:, 1], X[:, 0]), TWO_PI)
        return _advect.sample_field(self.problem.density, R, TH, dom.r_in, dom.dr,
                                    TWO_PI / dom.n_theta)

    def det_field(self):
        """det Dxi at every node."""
        dom = self.problem.domain
        if self.trivial:
            return np.ones((dom.n_r, dom.n_theta))
        return np.linalg.det(self.node_jacobian).reshape(dom.n_r, dom.n_theta)

    def residual_field(self):
        dom = self.problem.domain
        if self.trivial:
            return np.zeros((dom.n_r, dom.n_theta))
        X = (dom.nodes() + self.displacement).reshape(-1, 2)
        res = self.det_field().ravel() * self.density_at(X) - self.problem.lam
        res[np.linalg.norm(X, axis=1) == 0] = 0.0
        return res.reshape(dom.n_r, dom.n_theta)


def _polar_frame(R, TH):
    c, s = np.cos(TH), np.sin(TH)
    P = np.empty(R.shape + (2, 2))
    P[..., 0, 0] = c
    P[..., 1, 0] = s
    P[..., 0, 1] = -R * s
    P[..., 1, 1] = R * c
    return P


def moser_solve(problem: MoserProblem, method="neumann", substeps=50, threshold=1e-2) -> MoserSolution:
    """Solve det Dxi * theta(xi) = lam on the annulus with xi = Id on the boundary.

    ``method="neumann"``: F = grad psi from a Poisson solve with zero normal
    derivative (Fourier in angle, second-order differences in radius).
    ``method="flux"``: explicit flux that vanishes wherever the deficit does.
    Raises ConvergenceError if the residual exceeds ``threshold`` (None disables).
    """
    dom = problem.domain
    if dom.n_r < 32 or dom.n_theta < 32:
        raise ValueError("grid resolution must be at least 32 x 32")
    if method == "neumann":
        if dom.r_in <= 0:
            raise ValueError("the Neumann solver needs an annulus (r_in > 0); use method='flux' on disks")
        Fr, Ft = _neumann_field(problem)
    elif method == "flux":
        Fr, Ft = _flux_field(problem)
    else:
        raise ValueError(f"unknown method {method!r}")
    sol = MoserSolution(problem, method, np.zeros((dom.n_r, dom.n_theta, 2)), 0.0, 0.0, 0.0, 0.0,
                        substeps)
    if np.all(problem.density == problem.lam) and problem.lam == 1.0:
        sol.trivial = True
        return sol
    sol.fields = (np.ascontiguousarray(Fr), np.ascontiguousarray(Ft))
    Y = dom.nodes().reshape(-1, 2)
    X, J = sol.eval_jac(Y)
    sol.node_jacobian = J
    sol.displacement = (X - Y).reshape(dom.n_r, dom.n_theta, 2)
    detJ = np.linalg.det(J)
    res = detJ * sol.density_at(X) - problem.lam
    # on a disk the centre nodes are the fixed point of the flow; skip them
    sol.residual_sup = float(np.max(np.abs(res[np.linalg.norm(Y, axis=1) > 0])))
    R0 = np.linalg.norm(Y, axis=1)
    R1 = np.linalg.norm(X, axis=1)
    edge = np.zeros((dom.n_r, dom.n_theta), dtype=bool)
    edge[0] = edge[-1] = True
    edge = edge.ravel()
    sol.boundary_violation = float(np.max(np.abs(R1[edge] - R0[edge])))
    sol.boundary_slip = float(np.max(np.linalg.norm(X[edge] - Y[edge], axis=1)))
    w = dom.weights.ravel()
    sol.mass_error = float(abs((detJ * w).sum() - w.sum()))
    if threshold is not None and sol.residual_sup > threshold:
        raise ConvergenceError(f"Moser residual {sol.residual_sup:.3e} above {threshold:.1e}")
    return sol


def write_moser_csv(sol: MoserSolution, path):
    dom = sol.problem.domain
    R, TH = np.meshgrid(dom.r, dom.theta, indexing="ij")
    det = sol.det_field()
    res = sol.residual_field()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "theta", "theta_hat", "det_dxi", "residual"])
        for row in zip(R.ravel(), TH.ravel(), sol.problem.density.ravel(), det.ravel(), res.ravel()):
            w.writerow([format(v, ".17g") for v in row])


# ---------------------------------------------------------------- paste

@dataclass
class PasteReport:
    c1_distance: float  # between f and g on the outer ball
    deficit_sup: float  # max |theta - 1|
    constant: float  # deficit_sup / c1_distance
    det_error: float  # max |det DG - 1| on the annulus grid
    solution: Optional[MoserSolution] = None


def c1_distance(f: SmoothMap, g: SmoothMap, center, radius, n=64):
    """Grid estimate of sup |f - g| + sup ||Df - Dg|| on a ball."""
    c = np.asarray(center, dtype=float)
    s = (np.arange(n) + 0.5) / n * 2 - 1
    P = np.stack(np.meshgrid(s, s, indexing="ij"), -1).reshape(-1, 2)
    P = P[np.linalg.norm(P, axis=1) <= 1] * radius
    X = _to_chart(f.chart_in, c + P)
    fx, Jf = f.eval_jac(X)
    gx, Jg = g.eval_jac(X)
    dv = _local(f.chart_in, gx, fx) if f.chart_in == T2 else gx - fx
    return float(np.max(np.linalg.norm(dv, axis=1)) + np.max(np.linalg.norm(Jf - Jg, ord=2, axis=(1, 2))))


def paste(f: SmoothMap, g: SmoothMap, center, U_radius, V_radius, grid=(256, 256),
          blend_chart="cartesian", method="flux", threshold=1e-2):
    """Map equal to g on the ball U, f outside V, area-preserving in between.

    G = h o xi on the annulus, h the blend and xi the Moser correction of det Dh.
    Returns ``(G, report)``.
    """
    if not 0 < U_radius < V_radius:
        raise ValueError("need 0 < U_radius < V_radius")
    bump = BumpProfile(float(U_radius), float(V_radius))
    c = np.asarray(center, dtype=float)
    h = blend(f, g, bump, c, blend_chart)
    dom = AnnulusGrid(float(U_radius), float(V_radius), grid[0], grid[1])
    problem = density_deficit(h, c, dom, form="pull")
    dsup = float(np.max(np.abs(problem.density - 1.0)))
    if dsup <= EXACT_DET:
        # the blend is already area-preserving (e.g. polar blend of two rotations)
        problem = MoserProblem(dom, np.ones_like(problem.density), 1.0)
    sol = moser_solve(problem, method=method, threshold=threshold)
    space = f.chart_in

    def step(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = _local(space, X, c)
        d = np.linalg.norm(Y, axis=1)
        inner = d <= U_radius
        outer = d >= V_radius
        mid = ~(inner | outer)
        out = np.empty_like(X)
        J = np.empty((len(X), 2, 2))
        if inner.any():
            out[inner], J[inner] = g.eval_jac(X[inner])
        if outer.any():
            out[outer], J[outer] = f.eval_jac(X[outer])
        if mid.any():
            Z, Jx = sol.eval_jac(Y[mid])
            hz, Jh = h.eval_jac(_to_chart(space, c + Z))
            out[mid] = hz
            J[mid] = Jh @ Jx
        return out, J

    G = SmoothMap(evaluate=lambda X: step(X)[0], step=step, chart_in=space, name="pasted",
                  singular_points=np.vstack([f.singular_points, g.singular_points]),
                  params={"center": c.tolist(), "U": U_radius, "V": V_radius,
                          "blend": blend_chart, "method": method})
    # det DG on the annulus nodes, reusing the node Jacobians of xi
    Xn = (dom.nodes() + sol.displacement).reshape(-1, 2)
    det_h = np.linalg.det(h.jac(_to_chart(space, c + Xn)))
    det_err = float(np.max(np.abs(det_h * sol.det_field().ravel() - 1.0)))
    dist = c1_distance(f, g, c, V_radius)
    rep = PasteReport(dist, dsup, dsup / dist if dist > 0 else 0.0, det_err, sol)
    return G, rep
