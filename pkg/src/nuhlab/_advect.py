"""RK4 advection through gridded polar fields, with variational equations.

Fields live on nodes ``r_i = r0 + i dr`` (i < nr) and ``theta_j = j dth``
(periodic). Values between nodes come from bicubic Catmull-Rom interpolation;
ghost rows beyond the radial ends are quadratic extrapolations, which keeps
the end-cell derivatives second-order.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _weights(t, w, dw):
    t2 = t * t
    t3 = t2 * t
    w[0] = 0.5 * (-t3 + 2 * t2 - t)
    w[1] = 0.5 * (3 * t3 - 5 * t2 + 2)
    w[2] = 0.5 * (-3 * t3 + 4 * t2 + t)
    w[3] = 0.5 * (t3 - t2)
    dw[0] = 0.5 * (-3 * t2 + 4 * t - 1)
    dw[1] = 0.5 * (9 * t2 - 10 * t)
    dw[2] = 0.5 * (-9 * t2 + 8 * t + 1)
    dw[3] = 0.5 * (3 * t2 - 2 * t)


@njit(cache=True, nogil=True)
def _row(F, i, j, nr, nt):
    jj = j % nt
    if i < 0:
        return 3.0 * F[0, jj] - 3.0 * F[1, jj] + F[2, jj]
    if i >= nr:
        return 3.0 * F[nr - 1, jj] - 3.0 * F[nr - 2, jj] + F[nr - 3, jj]
    return F[i, jj]


@njit(cache=True, nogil=True)
def sample3(F0, F1, F2, x, y, out, wx, dwx, wy, dwy):
    """Values and index-space derivatives of three fields at fractional index (x, y).

    ``out`` rows: field; columns: value, d/dx, d/dy.
    """
    nr, nt = F0.shape
    if x < 0.0:
        x = 0.0
    if x > nr - 1:
        x = nr - 1.0
    i = int(np.floor(x))
    if i > nr - 2:
        i = nr - 2
    tx = x - i
    j = int(np.floor(y))
    ty = y - j
    _weights(tx, wx, dwx)
    _weights(ty, wy, dwy)
    for f in range(3):
        for c in range(3):
            out[f, c] = 0.0
    for a in range(4):
        for b in range(4):
            ii = i - 1 + a
            jj = j - 1 + b
            v0 = _row(F0, ii, jj, nr, nt)
            v1 = _row(F1, ii, jj, nr, nt)
            v2 = _row(F2, ii, jj, nr, nt)
            k = wx[a] * wy[b]
            kx = dwx[a] * wy[b]
            ky = wx[a] * dwy[b]
            out[0, 0] += k * v0
            out[0, 1] += kx * v0
            out[0, 2] += ky * v0
            out[1, 0] += k * v1
            out[1, 1] += kx * v1
            out[1, 2] += ky * v1
            out[2, 0] += k * v2
            out[2, 1] += kx * v2
            out[2, 2] += ky * v2


@njit(cache=True, nogil=True)
def _velocity(Fr, Ft, Q, r0, dr, dth, lam, R, TH, t, buf, wx, dwx, wy, dwy, D):
    sample3(Fr, Ft, Q, (R - r0) / dr, TH / dth, buf, wx, dwx, wy, dwy)
    fr, fr_r, fr_t = buf[0, 0], buf[0, 1] / dr, buf[0, 2] / dth
    ft, ft_r, ft_t = buf[1, 0], buf[1, 1] / dr, buf[1, 2] / dth
    q, q_r, q_t = buf[2, 0], buf[2, 1] / dr, buf[2, 2] / dth
    rho = (1.0 - t) * lam + t * q
    rr = R * rho
    D[0, 0] = fr_r / rho - fr * t * q_r / (rho * rho)
    D[0, 1] = fr_t / rho - fr * t * q_t / (rho * rho)
    D[1, 0] = ft_r / rr - ft / (R * rr) - ft * t * q_r / (rr * rho)
    D[1, 1] = ft_t / rr - ft * t * q_t / (rr * rho)
    return fr / rho, ft / rr


@njit(cache=True, nogil=True)
def advect(Fr, Ft, Q, r0, dr, dth, lam, R, TH, t0, t1, nsteps):
    """Flow points from t0 to t1; returns final (R, TH) and polar Jacobians (n, 2, 2)."""
    n = R.shape[0]
    Rout = np.empty(n)
    Tout = np.empty(n)
    M = np.zeros((n, 2, 2))
    buf = np.empty((3, 3))
    wx = np.empty(4)
    dwx = np.empty(4)
    wy = np.empty(4)
    dwy = np.empty(4)
    D1 = np.empty((2, 2))
    D2 = np.empty((2, 2))
    D3 = np.empty((2, 2))
    D4 = np.empty((2, 2))
    h = (t1 - t0) / nsteps
    for p in range(n):
        r = R[p]
        th = TH[p]
        m00, m01, m10, m11 = 1.0, 0.0, 0.0, 1.0
        t = t0
        for _ in range(nsteps):
            a1, b1 = _velocity(Fr, Ft, Q, r0, dr, dth, lam, r, th, t, buf, wx, dwx, wy, dwy, D1)
            a2, b2 = _velocity(Fr, Ft, Q, r0, dr, dth, lam, r + 0.5 * h * a1, th + 0.5 * h * b1,
                               t + 0.5 * h, buf, wx, dwx, wy, dwy, D2)
            a3, b3 = _velocity(Fr, Ft, Q, r0, dr, dth, lam, r + 0.5 * h * a2, th + 0.5 * h * b2,
                               t + 0.5 * h, buf, wx, dwx, wy, dwy, D3)
            a4, b4 = _velocity(Fr, Ft, Q, r0, dr, dth, lam, r + h * a3, th + h * b3,
                               t + h, buf, wx, dwx, wy, dwy, D4)
            # variational RK4 on M
            k100 = D1[0, 0] * m00 + D1[0, 1] * m10
            k101 = D1[0, 0] * m01 + D1[0, 1] * m11
            k110 = D1[1, 0] * m00 + D1[1, 1] * m10
            k111 = D1[1, 0] * m01 + D1[1, 1] * m11
            n00, n01 = m00 + 0.5 * h * k100, m01 + 0.5 * h * k101
            n10, n11 = m10 + 0.5 * h * k110, m11 + 0.5 * h * k111
            k200 = D2[0, 0] * n00 + D2[0, 1] * n10
            k201 = D2[0, 0] * n01 + D2[0, 1] * n11
            k210 = D2[1, 0] * n00 + D2[1, 1] * n10
            k211 = D2[1, 0] * n01 + D2[1, 1] * n11
            n00, n01 = m00 + 0.5 * h * k200, m01 + 0.5 * h * k201
            n10, n11 = m10 + 0.5 * h * k210, m11 + 0.5 * h * k211
            k300 = D3[0, 0] * n00 + D3[0, 1] * n10
            k301 = D3[0, 0] * n01 + D3[0, 1] * n11
            k310 = D3[1, 0] * n00 + D3[1, 1] * n10
            k311 = D3[1, 0] * n01 + D3[1, 1] * n11
            n00, n01 = m00 + h * k300, m01 + h * k301
            n10, n11 = m10 + h * k310, m11 + h * k311
            k400 = D4[0, 0] * n00 + D4[0, 1] * n10
            k401 = D4[0, 0] * n01 + D4[0, 1] * n11
            k410 = D4[1, 0] * n00 + D4[1, 1] * n10
            k411 = D4[1, 0] * n01 + D4[1, 1] * n11
            m00 += h / 6 * (k100 + 2 * k200 + 2 * k300 + k400)
            m01 += h / 6 * (k101 + 2 * k201 + 2 * k301 + k401)
            m10 += h / 6 * (k110 + 2 * k210 + 2 * k310 + k410)
            m11 += h / 6 * (k111 + 2 * k211 + 2 * k311 + k411)
            r += h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
            th += h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
            t += h
        Rout[p] = r
        Tout[p] = th
        M[p, 0, 0] = m00
        M[p, 0, 1] = m01
        M[p, 1, 0] = m10
        M[p, 1, 1] = m11
    return Rout, Tout, M


@njit(cache=True, nogil=True)
def sample_field(F, R, TH, r0, dr, dth):
    """Interpolated values of one field at polar points."""
    n = R.shape[0]
    out = np.empty(n)
    buf = np.empty((3, 3))
    wx = np.empty(4)
    dwx = np.empty(4)
    wy = np.empty(4)
    dwy = np.empty(4)
    for p in range(n):
        sample3(F, F, F, (R[p] - r0) / dr, TH[p] / dth, buf, wx, dwx, wy, dwy)
        out[p] = buf[0, 0]
    return out
