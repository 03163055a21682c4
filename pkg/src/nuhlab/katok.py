"""Non-uniformly hyperbolic area-preserving map of T^2 and its disk avatar.

A hyperbolic toral automorphism is slowed down near its four half-period
fixed points by the time-1 map of a vector field that vanishes at each
point. The default field is Hamiltonian (``K = L s1 s2 phi(|s|^2)``), so it is
exactly area-preserving. ``field="time-change"`` gives the field
``(L s1 phi, -L s2 phi)``, which preserves the density ``1/phi`` instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from . import _ode
from .geometry import (
    D2,
    T2,
    ConvergenceError,
    SingularityError,
    SmoothMap,
    _mod1,
    wrap_centered,
)

KATOK_MATRIX = ((5, 8), (8, 13))
HALF_POINTS = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]])
FIELDS = {"hamiltonian": _ode.HAMILTONIAN, "time-change": _ode.TIME_CHANGE}


# ---------------------------------------------------------------- automorphism

@dataclass(frozen=True)
class ToralAutomorphism:
    matrix: np.ndarray
    alpha: float
    eigbasis: np.ndarray  # columns: unstable, stable; det = +1
    fixed_half_points: tuple

    @property
    def log_alpha(self):
        return float(np.log(self.alpha))

    def apply(self, x):
        return _mod1(np.asarray(x, dtype=float) @ self.matrix.T)

    def smooth_map(self) -> SmoothMap:
        A = self.matrix.astype(float)
        Ai = np.linalg.inv(A)
        fwd = SmoothMap(
            evaluate=lambda x: _mod1(x @ A.T),
            jacobian=lambda x: np.broadcast_to(A, (len(x), 2, 2)).copy(),
            chart_in=T2, name="automorphism", smoothness_note="linear",
            params={"matrix": A.tolist()},
        )
        fwd.inverse = SmoothMap(
            evaluate=lambda x: _mod1(x @ Ai.T),
            jacobian=lambda x: np.broadcast_to(Ai, (len(x), 2, 2)).copy(),
            chart_in=T2, name="automorphism^-1", inverse=fwd,
        )
        return fwd


def make_automorphism(matrix=KATOK_MATRIX, require_half_fixed=True) -> ToralAutomorphism:
    """Validate a hyperbolic integer matrix and compute its eigen-data.

    The eigenbasis is scaled to determinant +1 so the change to eigen-coordinates
    preserves area.
    """
    M = np.asarray(matrix)
    if M.shape != (2, 2) or not np.all(np.equal(np.mod(M, 1), 0)):
        raise ValueError("matrix must be a 2x2 integer matrix")
    M = M.astype(np.int64)
    det = int(round(np.linalg.det(M)))
    if abs(det) != 1:
        raise ValueError(f"|det| must be 1, got {det}")
    tr = int(np.trace(M))
    if abs(tr) <= 2:
        raise ValueError(f"matrix is not hyperbolic (trace {tr})")
    w, V = np.linalg.eig(M.astype(float))
    order = np.argsort(-np.abs(w))
    w, V = w[order].real, V[:, order].real
    V = V / np.linalg.norm(V, axis=0)
    if V[0, 0] < 0:
        V[:, 0] *= -1
    d = np.linalg.det(V)
    if d < 0:
        V[:, 1] *= -1
        d = -d
    E = V / np.sqrt(d)
    fixed = []
    for p in HALF_POINTS:
        q = _mod1(M @ p)
        if np.allclose(q, p):
            fixed.append(tuple(p))
    if require_half_fixed and len(fixed) != 4:
        raise ValueError("the four half-period points are not all fixed by this matrix")
    return ToralAutomorphism(M, float(abs(w[0])), E, tuple(fixed))


# ---------------------------------------------------------------- slow-down

@dataclass(frozen=True)
class SlowdownProfile:
    """phi(u) = (u/r)^gamma, blended to 1 on [r - blend_width, r] by a C-infinity step."""

    gamma: float
    r: float
    blend_width: float
    integral_value: float = dc_field(default=np.nan)
    _prim_a: float = dc_field(default=0.0, repr=False)
    _prim_r: float = dc_field(default=0.0, repr=False)

    def derivs(self, u):
        u = np.asarray(u, dtype=float)
        flat = u.ravel()
        out = np.empty((3, flat.size))
        for k, v in enumerate(flat):
            out[:, k] = _ode.phi_derivs(v, self.gamma, self.r, self.blend_width)
        return out.reshape((3,) + u.shape)

    def phi(self, u):
        return self.derivs(u)[0]

    def dphi(self, u):
        return self.derivs(u)[1]

    def _inv_phi(self, v):
        return 1.0 / _ode.phi_derivs(v, self.gamma, self.r, self.blend_width)[0]

    def _closed(self, u):
        g = self.gamma
        return self.r ** g * u ** (1.0 - g) / (1.0 - g)

    def primitive(self, u):
        """I(u) = integral of 1/phi from 0 to u."""
        u = np.asarray(u, dtype=float)
        ua = self.r - self.blend_width
        out = np.empty(u.shape)
        for idx, v in np.ndenumerate(u):
            if v <= ua:
                out[idx] = self._closed(max(v, 0.0))
            elif v <= self.r:
                out[idx] = self._prim_a + quad(self._inv_phi, ua, v, epsabs=1e-15, epsrel=1e-13)[0]
            else:
                out[idx] = self._prim_r + (v - self.r)
        return out if out.ndim else float(out)

    def primitive_inverse(self, v):
        """Solve I(u) = v for u >= 0."""
        v = float(v)
        if v <= 0.0:
            return 0.0
        g = self.gamma
        if v <= self._prim_a:
            return (v * (1.0 - g) / self.r ** g) ** (1.0 / (1.0 - g))
        if v >= self._prim_r:
            return self.r + (v - self._prim_r)
        ua = self.r - self.blend_width
        return brentq(lambda u: self.primitive(u) - v, ua, self.r, xtol=1e-16, rtol=1e-15)


def make_slowdown(gamma=0.5, r=1e-5, blend_width=None) -> SlowdownProfile:
    """Build the slow-down profile; ``blend_width=None`` means 0.2 r, 0 means no blend."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if not 0.0 < r < 1.0:
        raise ValueError("r must lie in (0, 1)")
    w = 0.2 * r if blend_width is None else float(blend_width)
    if not 0.0 <= w < r:
        raise ValueError("blend_width must lie in [0, r)")
    p = SlowdownProfile(float(gamma), float(r), w)
    ua = r - w
    prim_a = p._closed(ua)
    object.__setattr__(p, "_prim_a", prim_a)
    if w > 0:
        mid = quad(p._inv_phi, ua, r, epsabs=1e-15, epsrel=1e-13)[0]
    else:
        mid = 0.0
    object.__setattr__(p, "_prim_r", prim_a + mid)
    object.__setattr__(p, "integral_value", float(p.primitive(1.0)))
    # monotonicity check on a dense sample
    us = np.linspace(0.0, 1.2 * r, 2001)
    if np.any(p.dphi(us) < -1e-12):
        raise ValueError("profile is not monotone for these parameters")
    return p


@dataclass
class FlowResult:
    points: np.ndarray
    jacobians: np.ndarray
    steps: np.ndarray
    saturated: np.ndarray


def slowdown_flow(profile: SlowdownProfile, alpha, S, t=1.0, field="hamiltonian",
                  atol=1e-10, rtol=1e-10, max_steps=10 ** 6) -> FlowResult:
    """Time-t map of the slow-down field for a batch of eigen-coordinate points."""
    S = np.ascontiguousarray(np.atleast_2d(np.asarray(S, dtype=float)))
    out, J, steps, sat = _ode.integrate_batch(
        S, float(t), float(np.log(alpha)), profile.gamma, profile.r, profile.blend_width,
        FIELDS[field], float(atol), float(rtol), int(max_steps))
    return FlowResult(out, J, steps, sat)


def slowdown_time_one(profile: SlowdownProfile, alpha, s, field="hamiltonian",
                      atol=1e-10, rtol=1e-10, max_steps=10 ** 6):
    """Time-1 map and its Jacobian at one or several points.

    Raises ConvergenceError naming the first point where the step budget ran out.
    """
    s = np.asarray(s, dtype=float)
    res = slowdown_flow(profile, alpha, s, 1.0, field, atol, rtol, max_steps)
    if res.saturated.any():
        bad = np.atleast_2d(s)[np.argmax(res.saturated)]
        raise ConvergenceError(f"integrator saturated at s = {bad.tolist()}")
    if s.ndim == 1:
        return res.points[0], res.jacobians[0]
    return res.points, res.jacobians


def min_linear_u(S, log_alpha, direction=1.0):
    """Minimum of |s(t)|^2 along the linear hyperbolic flow for t in [0, 1]."""
    a = S[:, 0] ** 2
    b = S[:, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ts = np.log(b / a) / (4.0 * log_alpha)
    ts = direction * np.nan_to_num(ts, nan=0.0, posinf=1.0, neginf=0.0)
    ts = np.clip(ts, 0.0, 1.0)
    e = np.exp(2.0 * direction * log_alpha * ts)
    return a * e + b / e


# ---------------------------------------------------------------- radial and branch charts

def _radial_jacobian(S, ratio, dR):
    """Jacobian of s -> s * ratio(|s|) given R/rho and dR/drho per point."""
    rho = np.linalg.norm(S, axis=-1)
    n = len(S)
    J = np.broadcast_to(np.eye(2), (n, 2, 2)) * ratio[:, None, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(rho[:, None] > 0, S / rho[:, None], 0.0)
    return J + (dR - ratio)[:, None, None] * e[:, :, None] * e[:, None, :]


def phi2(S):
    """Angle doubling that keeps the modulus: even in s, a double branched cover."""
    S = np.asarray(S, dtype=float)
    s1, s2 = S[..., 0], S[..., 1]
    rho = np.hypot(s1, s2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(rho > 0, (s1 * s1 - s2 * s2) / rho, 0.0)
        t2 = np.where(rho > 0, 2.0 * s1 * s2 / rho, 0.0)
    return np.stack([t1, t2], axis=-1)


def phi2_jacobian(S):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    s1, s2 = S[:, 0], S[:, 1]
    rho = np.hypot(s1, s2)
    th = np.arctan2(s2, s1)
    c, s = np.cos(th), np.sin(th)
    c2, s2_ = np.cos(2 * th), np.sin(2 * th)
    # d/drho -> (cos 2th, sin 2th); (1/rho) d/dth -> 2(-sin 2th, cos 2th)
    Jp = np.stack([np.stack([c2, -2 * s2_], -1), np.stack([s2_, 2 * c2], -1)], -2)
    Pinv = np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], -2)
    return Jp @ Pinv


def phi2_inverse(T):
    """Half-angle branch with first coordinate >= 0 (angle in (-pi/2, pi/2])."""
    T = np.asarray(T, dtype=float)
    rho = np.hypot(T[..., 0], T[..., 1])
    th = np.arctan2(T[..., 1], T[..., 0]) / 2.0
    th = np.where(th <= -np.pi / 2, th + np.pi, th)
    return np.stack([rho * np.cos(th), rho * np.sin(th)], axis=-1)


def phi3(T):
    """Radius rho -> sqrt(1 - rho^2), direction kept; sends the origin to the boundary circle."""
    T = np.asarray(T, dtype=float)
    rho = np.hypot(T[..., 0], T[..., 1])
    if np.any(rho == 0) or np.any(rho >= 1):
        raise SingularityError("phi3 needs 0 < |tau| < 1", T)
    f = np.sqrt(1.0 - rho * rho) / rho
    return T * f[..., None]


phi3_inverse = phi3  # the radial profile is an involution


def phi3_jacobian(T):
    T = np.atleast_2d(np.asarray(T, dtype=float))
    rho = np.linalg.norm(T, axis=1)
    R = np.sqrt(1.0 - rho * rho)
    return _radial_jacobian(T, R / rho, -rho / R)


# ---------------------------------------------------------------- assembly

@dataclass(frozen=True)
class KatokAssembly:
    g0: ToralAutomorphism
    profile: SlowdownProfile
    r0: float = 0.1
    k0: float = 1.0
    field: str = "hamiltonian"
    atol: float = 1e-10
    rtol: float = 1e-10
    max_steps: int = 10 ** 6
    maps: dict = dc_field(default_factory=dict, compare=False, repr=False)

    # -- eigen coordinates
    @property
    def centers(self):
        return HALF_POINTS

    @property
    def slow_radius(self):
        return float(np.sqrt(self.profile.r))

    @property
    def boundary_continuous(self):
        """True when no trajectory starting on the disk boundary reaches the slow zone."""
        return np.sqrt(2.0 * self.profile.r) * self.g0.alpha < self.r0

    def to_eigen(self, X, i):
        d = wrap_centered(np.asarray(X, dtype=float) - HALF_POINTS[i])
        return d @ np.linalg.inv(self.g0.eigbasis).T

    def from_eigen(self, S, i):
        return _mod1(HALF_POINTS[i] + np.asarray(S, dtype=float) @ self.g0.eigbasis.T)

    def _flow(self, S, t):
        res = slowdown_flow(self.profile, self.g0.alpha, S, t, self.field,
                            self.atol, self.rtol, self.max_steps)
        if res.saturated.any():
            bad = S[np.argmax(res.saturated)]
            raise ConvergenceError(f"integrator saturated at eigen point {bad.tolist()}")
        return res.points, res.jacobians

    # -- g1
    def g1_step(self, X, inverse=False):
        """Image and Jacobian of g1 (or g1^-1) for a batch of torus points."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        A = self.g0.matrix.astype(float)
        if inverse:
            A = np.linalg.inv(A)
        Y = _mod1(X @ A.T)
        J = np.broadcast_to(A, (len(X), 2, 2)).copy()
        E = self.g0.eigbasis
        Ei = np.linalg.inv(E)
        L = self.g0.log_alpha
        direction = -1.0 if inverse else 1.0
        for i in range(4):
            S = self.to_eigen(X, i)
            near = np.abs(S).max(axis=1) < self.r0 * self.g0.alpha
            if not near.any():
                continue
            idx = np.nonzero(near)[0]
            Sn = S[idx]
            hit = min_linear_u(Sn, L, direction) < self.profile.r
            if not inverse:
                hit &= np.linalg.norm(Sn, axis=1) < self.r0
            if not hit.any():
                continue
            idx, Sn = idx[hit], Sn[hit]
            Sout, Jf = self._flow(Sn, direction)
            if inverse:
                ok = np.linalg.norm(Sout, axis=1) < self.r0
                idx, Sout, Jf = idx[ok], Sout[ok], Jf[ok]
            Y[idx] = self.from_eigen(Sout, i)
            J[idx] = E @ Jf @ Ei
        return Y, J

    # -- phi1 (radial, in eigen coordinates)
    def _radius_map(self, rho):
        return np.sqrt(self.profile.primitive(rho * rho) / self.k0)

    def phi1(self, S):
        """Radial rescaling with |phi1(s)|^2 = I(|s|^2)/k0; identity outside the disk."""
        S = np.asarray(S, dtype=float)
        flat = np.atleast_2d(S)
        rho = np.linalg.norm(flat, axis=1)
        out = flat.copy()
        m = (rho > 0) & (rho < self.r0)
        if m.any():
            R = np.array([self._radius_map(p) for p in rho[m]])
            out[m] = flat[m] * (R / rho[m])[:, None]
        return out[0] if S.ndim == 1 else out

    def phi1_inverse(self, S):
        S = np.asarray(S, dtype=float)
        flat = np.atleast_2d(S)
        R = np.linalg.norm(flat, axis=1)
        out = flat.copy()
        m = (R > 0) & (R < self.r0)
        for k in np.nonzero(m)[0]:
            rho = np.sqrt(self.profile.primitive_inverse(self.k0 * R[k] ** 2))
            out[k] = flat[k] * rho / R[k]
        return out[0] if S.ndim == 1 else out

    def phi1_jacobian(self, S):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        rho = np.linalg.norm(S, axis=1)
        ratio = np.ones(len(S))
        dR = np.ones(len(S))
        m = (rho > 0) & (rho < self.r0)
        for k in np.nonzero(m)[0]:
            R = self._radius_map(rho[k])
            ratio[k] = R / rho[k]
            dR[k] = rho[k] / (self.k0 * self.profile.phi(rho[k] ** 2) * R)
        return _radial_jacobian(S, ratio, dR)

    def _phi1_torus(self, X, inverse=False):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = X.copy()
        J = np.broadcast_to(np.eye(2), (len(X), 2, 2)).copy()
        E = self.g0.eigbasis
        Ei = np.linalg.inv(E)
        for i in range(4):
            S = self.to_eigen(X, i)
            m = np.linalg.norm(S, axis=1) < self.r0
            if not m.any():
                continue
            Sm = S[m]
            Sout = self.phi1_inverse(Sm) if inverse else self.phi1(Sm)
            Y[m] = self.from_eigen(Sout, i)
            if inverse:
                J[m] = E @ np.linalg.inv(self.phi1_jacobian(Sout)) @ Ei
            else:
                J[m] = E @ self.phi1_jacobian(Sm) @ Ei
        return Y, J

    # -- g2
    def g2_step(self, X, inverse=False):
        if self.field == "hamiltonian":
            return self.g1_step(X, inverse)
        Z, Ja = self._phi1_torus(X, inverse=True)
        W, Jb = self.g1_step(Z, inverse)
        Y, Jc = self._phi1_torus(W)
        return Y, Jc @ Jb @ Ja

    # -- disk chart
    def chart(self, X):
        """Torus point -> disk: offset from x4, angle doubling, radius flip."""
        c = wrap_centered(np.asarray(X, dtype=float) - HALF_POINTS[3])
        return phi3(phi2(c))

    def chart_jacobian(self, X):
        c = wrap_centered(np.atleast_2d(np.asarray(X, dtype=float)) - HALF_POINTS[3])
        return phi3_jacobian(phi2(c)) @ phi2_jacobian(c)

    def chart_inverse(self, W):
        """Disk -> torus representative with offset first coordinate >= 0."""
        c = phi2_inverse(phi3_inverse(W))
        if np.any(np.abs(c) > 0.5 + 1e-12):
            raise SingularityError("disk point lies outside the image of the torus chart", W)
        return _mod1(HALF_POINTS[3] + c)

    def disk_step(self, W, inverse=False):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        X = self.chart_inverse(W)
        Y, J = self.g2_step(X, inverse)
        Jc_in = self.chart_jacobian(X)
        Jc_out = self.chart_jacobian(Y)
        return self.chart(Y), Jc_out @ J @ np.linalg.inv(Jc_in)

    def disk_singular_points(self):
        """Images of x1, x2, x3 under the chart (every representative on the square boundary)."""
        reps = np.array([[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5],
                         [-0.5, 0.0], [0.5, 0.0], [0.0, -0.5], [0.0, 0.5]])
        return phi3(phi2(reps))


def g1_eval(assembly: KatokAssembly, x):
    x = np.asarray(x, dtype=float)
    Y, _ = assembly.g1_step(x)
    return Y[0] if x.ndim == 1 else Y


def disk_map_eval(assembly: KatokAssembly, w):
    w = np.asarray(w, dtype=float)
    near = assembly.maps["disk_map"].near_singular(np.atleast_2d(w))
    if np.any(near):
        raise SingularityError("point lies in an excluded neighbourhood", w)
    Y, _ = assembly.disk_step(w)
    return Y[0] if w.ndim == 1 else Y


def _pair(step, chart, name, singular, note, params, excluded=None):
    fwd = SmoothMap(
        evaluate=lambda x: step(x)[0], step=step, chart_in=chart, name=name,
        smoothness_note=note, singular_points=singular, params=params, excluded=excluded,
    )
    inv_step = lambda x: step(x, inverse=True)  # noqa: E731
    fwd.inverse = SmoothMap(
        evaluate=lambda x: inv_step(x)[0], step=inv_step, chart_in=chart, name=name + "^-1",
        smoothness_note=note, singular_points=singular, inverse=fwd, excluded=excluded,
    )
    return fwd


def make_katok(matrix=KATOK_MATRIX, gamma=0.5, r=1e-5, r0=0.1, blend_width=None,
               field="hamiltonian", atol=1e-10, rtol=1e-10, max_steps=10 ** 6) -> KatokAssembly:
    if field not in FIELDS:
        raise ValueError(f"field must be one of {sorted(FIELDS)}")
    g0 = make_automorphism(matrix)
    if g0.matrix.trace() < 0:
        raise ValueError("the slow-down needs positive eigenvalues (trace > 2)")
    prof = make_slowdown(gamma, r, blend_width)
    if not r < r0 * r0:
        raise ValueError("the slow zone must fit inside the disks (need r < r0^2)")
    # disks must stay disjoint on the torus
    if 2 * r0 >= 0.5:
        raise ValueError("r0 too large: disks around the fixed points overlap")
    k0 = prof.primitive(r0 * r0) / (r0 * r0)
    a = KatokAssembly(g0, prof, float(r0), float(k0), field, float(atol), float(rtol), int(max_steps))
    params = assembly_params(a)
    note = "C-infinity away from the fixed points x_i"
    a.maps["g1"] = _pair(a.g1_step, T2, "katok-g1", HALF_POINTS, note, params)
    a.maps["g2"] = _pair(a.g2_step, T2, "katok-t2", HALF_POINTS, note, params)
    a.maps["phi1"] = SmoothMap(
        evaluate=lambda x: a._phi1_torus(x)[0], step=lambda x: a._phi1_torus(x),
        chart_in=T2, name="phi1", singular_points=HALF_POINTS)
    a.maps["phi1"].inverse = SmoothMap(
        evaluate=lambda x: a._phi1_torus(x, True)[0], step=lambda x: a._phi1_torus(x, True),
        chart_in=T2, name="phi1^-1", singular_points=HALF_POINTS, inverse=a.maps["phi1"])
    a.maps["phi2"] = SmoothMap(evaluate=phi2, jacobian=phi2_jacobian, name="phi2",
                               smoothness_note="branched at 0")
    a.maps["phi3"] = SmoothMap(evaluate=phi3, jacobian=phi3_jacobian, name="phi3",
                               smoothness_note="singular at 0")
    a.maps["phi3"].inverse = a.maps["phi3"]
    # the boundary circle is the image of x4; exclude the image of its EXCL-ball on the torus
    boundary = lambda w: (np.atleast_2d(w) ** 2).sum(1) > 1.0 - EXCL * EXCL  # noqa: E731
    a.maps["disk_map"] = _pair(a.disk_step, D2, "katok-disk", a.disk_singular_points(),
                               "C-infinity away from q1, q2, q3, the boundary circle and the chart seam",
                               params, excluded=boundary)
    return a


EXCL = 1e-3


# ---------------------------------------------------------------- config

def assembly_params(a: KatokAssembly) -> dict:
    M = a.g0.matrix
    return {
        "gamma": a.profile.gamma, "r": a.profile.r, "r0": a.r0,
        "blend_width": a.profile.blend_width,
        "a11": int(M[0, 0]), "a12": int(M[0, 1]), "a21": int(M[1, 0]), "a22": int(M[1, 1]),
        "field": a.field, "atol": a.atol, "rtol": a.rtol, "max_steps": a.max_steps,
    }


def to_config(a: KatokAssembly) -> str:
    return "".join(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n"
                   for k, v in assembly_params(a).items())


_CONFIG_TYPES = {"gamma": float, "r": float, "r0": float, "blend_width": float,
                 "a11": int, "a12": int, "a21": int, "a22": int, "field": str,
                 "atol": float, "rtol": float, "max_steps": int}


def parse_config(text: str) -> dict:
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line {raw!r}")
        k, v = (t.strip() for t in line.split("=", 1))
        if k not in _CONFIG_TYPES:
            raise ValueError(f"unknown config key {k!r}")
        out[k] = _CONFIG_TYPES[k](v)
    return out


def from_config(text: str) -> KatokAssembly:
    p = parse_config(text)
    kw = {k: p[k] for k in ("gamma", "r", "r0", "blend_width", "field", "atol", "rtol", "max_steps") if k in p}
    if any(k in p for k in ("a11", "a12", "a21", "a22")):
        M = np.array(KATOK_MATRIX)
        for k, (i, j) in {"a11": (0, 0), "a12": (0, 1), "a21": (1, 0), "a22": (1, 1)}.items():
            if k in p:
                M[i, j] = p[k]
        kw["matrix"] = M
    return make_katok(**kw)


__all__ = [
    "ToralAutomorphism", "make_automorphism", "SlowdownProfile", "make_slowdown",
    "slowdown_flow", "slowdown_time_one", "min_linear_u", "phi2", "phi2_inverse",
    "phi3", "phi3_inverse", "KatokAssembly", "make_katok", "g1_eval", "disk_map_eval",
    "to_config", "from_config", "parse_config",
]
