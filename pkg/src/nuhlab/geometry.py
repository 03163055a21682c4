"""Charts, points, map algebra and numerical calculus.

Every map in the package is a :class:`SmoothMap` acting on batches of chart
coordinates: ``evaluate`` takes an ``(n, d)`` array (or a single ``(d,)``
point) and returns the same shape; ``jacobian`` returns ``(n, d, d)``.
Torus charts are handled by wrapping coordinate differences into ``[-1/2, 1/2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

T2 = "T2"
D2 = "D2"
S2Q = "S2Q"
R2 = "R2"

FD_STEP = 1e-5
EXCLUSION_RADIUS = 1e-3


class ChartMismatchError(ValueError):
    pass


class SingularityError(ValueError):
    """Raised when a point falls inside an excluded neighbourhood."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ConvergenceError(RuntimeError):
    pass


def susp_chart(n: int) -> str:
    return f"SUSP({n})"


def product_chart(d: int) -> str:
    return f"PRODUCT({d})"


def chart_dim(chart: str) -> int:
    if chart in (T2, D2, S2Q, R2):
        return 2
    if chart.startswith("SUSP("):
        # disk factor (2) + suspension over T^{n-3} (n-3) + height (1)
        return int(chart[5:-1])
    if chart.startswith("PRODUCT("):
        return 2 * int(chart[8:-1])
    if chart.startswith("R"):
        return int(chart[1:])
    raise ValueError(f"unknown chart {chart!r}")


def periodic_mask(chart: str) -> np.ndarray:
    """Boolean mask of coordinates that live on a circle of length 1."""
    d = chart_dim(chart)
    if chart in (T2, S2Q):
        return np.ones(d, dtype=bool)
    if chart.startswith("SUSP("):
        n = int(chart[5:-1])
        m = np.zeros(d, dtype=bool)
        m[: 2] = True  # disk factor computed on its torus cover
        m[2: n - 1] = True
        return m
    return np.zeros(d, dtype=bool)


def wrap_torus(v) -> "ChartPoint":
    """Reduce a real pair modulo 1 into ``[0, 1)^2``."""
    v = np.asarray(v, dtype=float)
    return ChartPoint(_mod1(v), T2)


def _mod1(v):
    w = np.mod(v, 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(w >= 1.0, 0.0, w)


def wrap_centered(v):
    """Reduce into ``[-1/2, 1/2)`` componentwise."""
    return np.mod(np.asarray(v, dtype=float) + 0.5, 1.0) - 0.5


def chart_difference(chart: str, a, b):
    """``a - b`` taken along the shortest path in the chart."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    mask = periodic_mask(chart)
    if mask.any():
        diff = diff.copy()
        diff[..., mask] = wrap_centered(diff[..., mask])
    return diff


def normalize(chart: str, x):
    mask = periodic_mask(chart)
    if not mask.any():
        return np.asarray(x, dtype=float)
    x = np.array(x, dtype=float)
    x[..., mask] = _mod1(x[..., mask])
    return x


@dataclass(frozen=True)
class ChartPoint:
    coords: np.ndarray
    chart: str

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        object.__setattr__(self, "coords", c)
        if c.shape != (chart_dim(self.chart),):
            raise ValueError(f"{self.chart} point needs {chart_dim(self.chart)} coordinates, got {c.shape}")
        if self.chart in (T2, S2Q) and not np.all((c >= 0.0) & (c < 1.0)):
            raise ValueError(f"torus coordinates must lie in [0,1): {c}")
        if self.chart == D2 and np.linalg.norm(c) > 1.0 + 1e-12:
            raise ValueError(f"disk coordinates must satisfy |w| <= 1: {c}")


@dataclass(frozen=True)
class JacobianRecord:
    matrix: np.ndarray
    det: float
    point: ChartPoint


def _batched(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


@dataclass
class SmoothMap:
    """Evaluatable map with Jacobian, optional inverse and a singular set.

    ``evaluate`` and ``jacobian`` operate on ``(n, d)`` batches. ``step``,
    when given, returns image and Jacobian from one computation (used by
    maps whose Jacobian comes out of a variational integration).
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inverse: Optional["SmoothMap"] = None
    chart_in: str = R2
    chart_out: Optional[str] = None
    name: str = "map"
    smoothness_note: str = ""
    singular_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    exclusion_radius: float = EXCLUSION_RADIUS
    step: Optional[Callable[[np.ndarray], tuple]] = None
    params: dict = field(default_factory=dict)
    excluded: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.chart_out is None:
            self.chart_out = self.chart_in
        self.singular_points = np.asarray(self.singular_points, dtype=float).reshape(-1, self.dim)

    @property
    def dim(self) -> int:
        return chart_dim(self.chart_in)

    def __call__(self, x):
        if isinstance(x, ChartPoint):
            self._check_chart(x)
            y = self.evaluate(x.coords[None, :])[0]
            return ChartPoint(y, self.chart_out)
        xb, single = _batched(x)
        y = self.evaluate(xb)
        return y[0] if single else y

    def jac(self, x):
        if isinstance(x, ChartPoint):
            x = x.coords
        xb, single = _batched(x)
        if self.jacobian is not None:
            J = self.jacobian(xb)
        elif self.step is not None:
            J = self.step(xb)[1]
        else:
            J = fd_jacobian(self, xb)
        return J[0] if single else J

    def eval_jac(self, x):
        xb, single = _batched(x)
        if self.step is not None:
            y, J = self.step(xb)
        else:
            y, J = self.evaluate(xb), self.jac(xb)
        return (y[0], J[0]) if single else (y, J)

    def singular_distance(self, x):
        """Distance from each point to the nearest registered singular point."""
        xb, single = _batched(x)
        if len(self.singular_points) == 0:
            out = np.full(len(xb), np.inf)
        else:
            diff = chart_difference(self.chart_in, xb[:, None, :], self.singular_points[None, :, :])
            out = np.sqrt((diff ** 2).sum(-1)).min(axis=1)
        return out[0] if single else out

    def near_singular(self, x, radius=None):
        r = self.exclusion_radius if radius is None else radius
        out = self.singular_distance(x) < r
        if self.excluded is not None:
            out = out | self.excluded(x)
        return out

    def _check_chart(self, p: ChartPoint):
        if p.chart != self.chart_in and not (self.chart_in == R2 and p.chart in (D2,)):
            raise ChartMismatchError(f"{self.name} expects {self.chart_in}, got {p.chart}")


def identity_map(chart: str = R2) -> SmoothMap:
    d = chart_dim(chart)
    m = SmoothMap(
        evaluate=lambda x: np.array(x, dtype=float),
        jacobian=lambda x: np.broadcast_to(np.eye(d), (len(x), d, d)).copy(),
        chart_in=chart,
        name="id",
        smoothness_note="C-infinity",
    )
    m.inverse = m
    return m


def linear_map(A, chart: str = R2, name: str = "linear") -> SmoothMap:
    """``x -> A x`` (reduced mod 1 on torus charts)."""
    A = np.asarray(A, dtype=float)
    d = A.shape[0]

    def ev(x):
        return normalize(chart, x @ A.T)

    def jac(x):
        return np.broadcast_to(A, (len(x), d, d)).copy()

    m = SmoothMap(evaluate=ev, jacobian=jac, chart_in=chart, name=name, smoothness_note="linear")
    if chart not in (T2,) or abs(round(np.linalg.det(A))) == 1:
        Ai = np.linalg.inv(A)
        m.inverse = SmoothMap(
            evaluate=lambda x: normalize(chart, x @ Ai.T),
            jacobian=lambda x: np.broadcast_to(Ai, (len(x), d, d)).copy(),
            chart_in=chart,
            name=f"{name}^-1",
            inverse=m,
        )
    return m


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotation(theta: float, center=(0.0, 0.0), chart: str = R2) -> SmoothMap:
    """Rigid rotation by ``theta`` about ``center``."""
    center = np.asarray(center, dtype=float)
    R = rotation_matrix(theta)

    def build(mat, label):
        def ev(x):
            d = chart_difference(chart, x, center)
            return normalize(chart, center + d @ mat.T)

        return SmoothMap(
            evaluate=ev,
            jacobian=lambda x: np.broadcast_to(mat, (len(x), 2, 2)).copy(),
            chart_in=chart,
            name=label,
            smoothness_note="isometry",
            params={"theta": theta, "center": center.tolist()},
        )

    fwd = build(R, f"R({theta:.6g})")
    inv = build(R.T, f"R({-theta:.6g})")
    fwd.inverse, inv.inverse = inv, fwd
    return fwd


def compose(maps: Sequence[SmoothMap], with_inverse: bool = True) -> SmoothMap:
    """Composition ``maps[0] ∘ maps[1] ∘ ... ∘ maps[-1]`` (right to left)."""
    maps = list(maps)
    if not maps:
        return identity_map()
    for outer, inner in zip(maps[:-1], maps[1:]):
        if outer.chart_in != inner.chart_out:
            raise ChartMismatchError(f"cannot compose {outer.name} ({outer.chart_in}) after {inner.name} ({inner.chart_out})")
    if len(maps) == 1:
        return maps[0]
    seq = maps[::-1]  # application order

    def step(x):
        y = np.asarray(x, dtype=float)
        J = None
        for m in seq:
            y, Jm = m.eval_jac(y)
            J = Jm if J is None else Jm @ J
        return y, J

    def ev(x):
        y = np.asarray(x, dtype=float)
        for m in seq:
            y = m(y)
        return y

    # singular sets of later maps are pulled back through the earlier ones
    sing = [seq[0].singular_points]
    for i, m in enumerate(seq[1:], start=1):
        pts = m.singular_points
        invs = [s.inverse for s in seq[:i]]
        if len(pts) and all(v is not None for v in invs):
            for v in invs[::-1]:
                pts = v(pts)
            sing.append(pts)
    singular = np.concatenate([s.reshape(-1, seq[0].dim) for s in sing])

    out = SmoothMap(
        evaluate=ev,
        step=step,
        chart_in=seq[0].chart_in,
        chart_out=seq[-1].chart_out,
        name=" ∘ ".join(m.name for m in maps),
        smoothness_note="composition",
        singular_points=singular,
        exclusion_radius=max(m.exclusion_radius for m in maps),
    )
    if with_inverse and all(m.inverse is not None for m in maps):
        out.inverse = compose([m.inverse for m in maps[::-1]], with_inverse=False)
        out.inverse.inverse = out
    return out


def fd_jacobian(f: SmoothMap, x, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian for a batch of points."""
    xb, single = _batched(x)
    n, d = xb.shape
    J = np.empty((n, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        J[:, :, k] = chart_difference(f.chart_out, f(xb + e), f(xb - e)) / (2 * h)
    return J[0] if single else J


def numeric_jacobian(f: SmoothMap, x: ChartPoint, h: float = FD_STEP, richardson: bool = False) -> JacobianRecord:
    """Central-difference Jacobian at ``x``; Richardson extrapolation is optional."""
    if f.near_singular(x.coords):
        raise SingularityError(f"{f.name}: point within exclusion radius of the singular set", x)
    J = fd_jacobian(f, x.coords, h)
    if richardson:
        J2 = fd_jacobian(f, x.coords, h / 2)
        J = (4 * J2 - J) / 3
    return JacobianRecord(matrix=J, det=float(np.linalg.det(J)), point=x)


def invert_newton(f: SmoothMap, y, guess, tol: float = 1e-12, max_iter: int = 60):
    """Solve ``f(x) = y`` by Newton's method from ``guess``.

    Accepts ChartPoints or coordinate arrays (batched). Raises
    :class:`ConvergenceError` if any point fails to reach ``tol``.
    """
    as_point = isinstance(y, ChartPoint)
    yc = y.coords if as_point else y
    gc = guess.coords if isinstance(guess, ChartPoint) else guess
    yb, single = _batched(yc)
    x = np.array(_batched(gc)[0], dtype=float)
    if len(x) == 1 and len(yb) > 1:
        x = np.repeat(x, len(yb), axis=0)
    for _ in range(max_iter):
        fx, J = f.eval_jac(x)
        r = chart_difference(f.chart_out, fx, yb)
        err = np.sqrt((r ** 2).sum(-1))
        if np.all(err <= tol):
            break
        dets = np.linalg.det(J)
        if np.any(np.abs(dets) < 1e-300):
            raise ConvergenceError(f"{f.name}: singular Jacobian during Newton inversion")
        dx = np.linalg.solve(J, r[..., None])[..., 0]
        active = err > tol
        x[active] -= dx[active]
        x = normalize(f.chart_in, x)
    else:
        fx = f(x)
        err = np.sqrt((chart_difference(f.chart_out, fx, yb) ** 2).sum(-1))
        if np.any(err > tol):
            raise ConvergenceError(f"{f.name}: Newton inversion stalled at residual {err.max():.3e}")
    out = x[0] if single else x
    return ChartPoint(out, f.chart_in) if as_point else out
