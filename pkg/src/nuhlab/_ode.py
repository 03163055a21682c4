"""Dormand-Prince 5(4) integration of the slow-down fields with variational equations.

State layout: ``(s1, s2, J11, J12, J21, J22)``; ``J`` starts at the identity
and follows ``dJ/dt = Dv(s) J``. Two fields are supported:

* ``HAMILTONIAN`` - generated by ``K = L s1 s2 phi(|s|^2)``; divergence-free.
* ``TIME_CHANGE`` - ``(L s1 phi, -L s2 phi)``; preserves the density ``1/phi``.
"""
import numpy as np
from numba import njit

HAMILTONIAN = 0
TIME_CHANGE = 1

_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1 = 35 / 384 - 5179 / 57600
_E3 = 500 / 1113 - 7571 / 16695
_E4 = 125 / 192 - 393 / 640
_E5 = -2187 / 6784 + 92097 / 339200
_E6 = 11 / 84 - 187 / 2100
_E7 = -1 / 40


@njit(cache=True)
def _smoothstep(x):
    """C-infinity step 0 -> 1 on [0, 1] with first two derivatives."""
    if x <= 0.0:
        return 0.0, 0.0, 0.0
    if x >= 1.0:
        return 1.0, 0.0, 0.0
    a = np.exp(-1.0 / x)
    b = np.exp(-1.0 / (1.0 - x))
    S = a / (a + b)
    q = 1.0 / (x * x) + 1.0 / ((1.0 - x) * (1.0 - x))
    dq = -2.0 / (x * x * x) + 2.0 / ((1.0 - x) ** 3)
    S1 = S * (1.0 - S) * q
    S2 = S1 * (1.0 - 2.0 * S) * q + S * (1.0 - S) * dq
    return S, S1, S2


@njit(cache=True)
def phi_derivs(u, gamma, r, w):
    """phi(u), phi'(u), phi''(u) for the blended power profile."""
    if u >= r:
        return 1.0, 0.0, 0.0
    if u <= 0.0:
        return 0.0, 0.0, 0.0
    p = (u / r) ** gamma
    p1 = gamma * p / u
    p2 = gamma * (gamma - 1.0) * p / (u * u)
    if w <= 0.0 or u <= r - w:
        return p, p1, p2
    S, S1, S2 = _smoothstep((u - (r - w)) / w)
    S1 /= w
    S2 /= w * w
    f = p * (1.0 - S) + S
    f1 = p1 * (1.0 - S) + (1.0 - p) * S1
    f2 = p2 * (1.0 - S) - 2.0 * p1 * S1 + (1.0 - p) * S2
    return f, f1, f2


@njit(cache=True)
def _rhs(y, out, L, gamma, r, w, kind):
    s1 = y[0]
    s2 = y[1]
    u = s1 * s1 + s2 * s2
    f, f1, f2 = phi_derivs(u, gamma, r, w)
    if kind == HAMILTONIAN:
        # second-derivative terms are bounded near 0 because phi ~ u^gamma
        out[0] = L * s1 * (f + 2.0 * s2 * s2 * f1)
        out[1] = -L * s2 * (f + 2.0 * s1 * s1 * f1)
        d = L * (f + 2.0 * u * f1 + 4.0 * s1 * s1 * s2 * s2 * f2)
        a11 = d
        a12 = L * s1 * s2 * (6.0 * f1 + 4.0 * s2 * s2 * f2)
        a21 = -L * s1 * s2 * (6.0 * f1 + 4.0 * s1 * s1 * f2)
        a22 = -d
    else:
        out[0] = L * s1 * f
        out[1] = -L * s2 * f
        a11 = L * (f + 2.0 * s1 * s1 * f1)
        a12 = L * 2.0 * s1 * s2 * f1
        a21 = -L * 2.0 * s1 * s2 * f1
        a22 = -L * (f + 2.0 * s2 * s2 * f1)
    out[2] = a11 * y[2] + a12 * y[4]
    out[3] = a11 * y[3] + a12 * y[5]
    out[4] = a21 * y[2] + a22 * y[4]
    out[5] = a21 * y[3] + a22 * y[5]


@njit(cache=True)
def integrate_one(s1, s2, t_final, L, gamma, r, w, kind, atol, rtol, max_steps):
    """Integrate from t=0 to ``t_final`` (may be negative). Returns (state, steps, saturated)."""
    n = 6
    y = np.zeros(n)
    y[0] = s1
    y[1] = s2
    y[2] = 1.0
    y[5] = 1.0
    if t_final == 0.0:
        return y, 0, False
    direction = 1.0 if t_final > 0 else -1.0
    T = abs(t_final)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    tmp = np.empty(n)
    ynew = np.empty(n)
    t = 0.0
    h = min(0.05, T)
    steps = 0
    _rhs(y, k1, L, gamma, r, w, kind)
    for i in range(n):
        k1[i] *= direction
    while t < T:
        if steps >= max_steps:
            return y, steps, True
        if t + h > T:
            h = T - t
        for i in range(n):
            tmp[i] = y[i] + h * _A21 * k1[i]
        _rhs(tmp, k2, L, gamma, r, w, kind)
        for i in range(n):
            k2[i] *= direction
            tmp[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
        _rhs(tmp, k3, L, gamma, r, w, kind)
        for i in range(n):
            k3[i] *= direction
            tmp[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _rhs(tmp, k4, L, gamma, r, w, kind)
        for i in range(n):
            k4[i] *= direction
            tmp[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        _rhs(tmp, k5, L, gamma, r, w, kind)
        for i in range(n):
            k5[i] *= direction
            tmp[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i])
        _rhs(tmp, k6, L, gamma, r, w, kind)
        for i in range(n):
            k6[i] *= direction
            ynew[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i])
        _rhs(ynew, k7, L, gamma, r, w, kind)
        err = 0.0
        for i in range(n):
            k7[i] *= direction
            e = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err += (e / sc) ** 2
        err = np.sqrt(err / n)
        steps += 1
        if err <= 1.0:
            t += h
            for i in range(n):
                y[i] = ynew[i]
                k1[i] = k7[i]
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        h *= fac
        if h < 1e-14 * T:
            return y, steps, True
    return y, steps, False


@njit(cache=True, nogil=True)
def integrate_batch(S, t_final, L, gamma, r, w, kind, atol, rtol, max_steps):
    m = S.shape[0]
    out = np.empty((m, 2))
    J = np.empty((m, 2, 2))
    steps = np.empty(m, dtype=np.int64)
    sat = np.empty(m, dtype=np.bool_)
    for j in range(m):
        y, k, s = integrate_one(S[j, 0], S[j, 1], t_final, L, gamma, r, w, kind, atol, rtol, max_steps)
        out[j, 0] = y[0]
        out[j, 1] = y[1]
        J[j, 0, 0] = y[2]
        J[j, 0, 1] = y[3]
        J[j, 1, 0] = y[4]
        J[j, 1, 1] = y[5]
        steps[j] = k
        sat[j] = s
    return out, J, steps, sat
