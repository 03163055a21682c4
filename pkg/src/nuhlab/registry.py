"""Named map constructions with parameter defaults and sampling domains."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .brin import AlphaFn, brin_map, make_space, random_states
from .embed import demo_host, embed_demo
from .katok import make_automorphism, make_katok
from .lyapunov import torus_grid
from .symplectic import polydisk_samples, product_chart_map, symplectic_embed

KATOK_DEFAULTS = {"matrix": "5,8,8,13", "gamma": 0.5, "r": 1e-5, "r0": 0.1, "field": "hamiltonian"}
EMBED_DEFAULTS = {"k": 4, "K": 10.0, "offset": 0.3, "theta": float(np.pi / 2), "radius": 0.1}


@dataclass
class MapEntry:
    kind: str
    defaults: dict
    build: Callable  # params -> (SmoothMap, sampler)
    description: str


def _matrix(s):
    vals = [int(v) for v in str(s).split(",")]
    if len(vals) != 4:
        raise ValueError("matrix needs four comma-separated integers")
    return np.array(vals).reshape(2, 2)


def _torus_sampler():
    def sample(n=None, grid=None, rng=None):
        if grid is not None:
            return torus_grid(*grid).points()
        return rng.random((n, 2))
    return sample


def _katok(p):
    return make_katok(_matrix(p["matrix"]), p["gamma"], p["r"], p["r0"], field=p["field"])


def _build_automorphism(p):
    f = make_automorphism(_matrix(p["matrix"])).smooth_map()
    return f, _torus_sampler()


def _build_katok_t2(p):
    f = _katok(p).maps["g2"]
    return f, _torus_sampler()


def _build_katok_disk(p):
    a = _katok(p)
    f = a.maps["disk_map"]

    def sample(n=None, grid=None, rng=None):
        X = torus_grid(*grid).points() if grid is not None else rng.random((n, 2))
        return a.chart(X)
    return f, sample


def _build_brin(p):
    a = _katok(p)
    space = make_space(int(p["n"]), p["H0"], p["eps"])
    f = brin_map(space, a.maps["g2"], AlphaFn(p["alpha_scale"]))

    def sample(n=None, grid=None, rng=None):
        if grid is not None:
            X = torus_grid(*grid).points()
            Z = random_states(space, len(X), rng)
            Z[:, :2] = X
            return Z
        return random_states(space, n, rng)
    return f, sample


def _build_demo_host(p):
    f = demo_host(p["theta"], (0.5, 0.5), p["U"], p["V"])
    return f, _torus_sampler()


def _embed(p):
    return embed_demo(int(p["k"]), p["K"], p["offset"], p["theta"], p["radius"])


def _build_g3(p):
    res = _embed(p)
    return res.g3, _torus_sampler()


def _build_product(p):
    res = _embed(p)
    d = int(p["d"])
    pr = symplectic_embed(res.tower, res.factors, d)
    to, _ = product_chart_map(res.tower, d)

    def sample(n=None, grid=None, rng=None):
        if grid is not None:
            raise ValueError("product maps are sampled with --samples, not --grid")
        return to(polydisk_samples(d, n, rng))
    return pr.g3, sample


MAPS = {
    "automorphism": MapEntry("automorphism", {"matrix": "5,8,8,13"}, _build_automorphism,
                             "linear toral automorphism on T2"),
    "katok-t2": MapEntry("katok-t2", dict(KATOK_DEFAULTS), _build_katok_t2,
                         "slowed-down automorphism on T2"),
    "katok-disk": MapEntry("katok-disk", dict(KATOK_DEFAULTS), _build_katok_disk,
                           "the T2 map carried to the unit disk"),
    "brin": MapEntry("brin", {**KATOK_DEFAULTS, "n": 5, "H0": 2.0, "eps": 0.1, "alpha_scale": 1.0},
                     _build_brin, "skew product with a suspension flow (dimension n)"),
    "demo-host": MapEntry("demo-host", {"theta": float(np.pi / 2), "U": 0.15, "V": 0.25},
                          _build_demo_host, "rotation pasted into the identity of T2"),
    "embedded-g3": MapEntry("embedded-g3", dict(EMBED_DEFAULTS), _build_g3,
                            "demo host with the linked twist installed on a periodic disk"),
    "product-d2": MapEntry("product-d2", {**EMBED_DEFAULTS, "d": 2}, _build_product,
                           "product tower construction in dimension 2d"),
}


def resolve_params(kind, overrides=None) -> dict:
    """Defaults of ``kind`` updated by string or typed overrides; unknown keys rejected."""
    if kind not in MAPS:
        raise KeyError(f"unknown map {kind!r}; see list-maps")
    p = dict(MAPS[kind].defaults)
    for k, v in (overrides or {}).items():
        if k not in p:
            raise KeyError(f"map {kind!r} has no parameter {k!r}")
        base = p[k]
        if isinstance(base, bool) or not isinstance(v, str):
            p[k] = v
        elif isinstance(base, int):
            p[k] = int(v)
        elif isinstance(base, float):
            p[k] = float(v)
        else:
            p[k] = v
    return p


def build(kind, overrides=None):
    """(map, sampler, resolved params); sampler(n=, grid=, rng=) returns chart points."""
    p = resolve_params(kind, overrides)
    fmap, sampler = MAPS[kind].build(p)
    return fmap, sampler, p


def catalog() -> str:
    lines = []
    for kind in sorted(MAPS):
        e = MAPS[kind]
        params = " ".join(f"{k}={v}" for k, v in e.defaults.items())
        lines.append(f"{kind}: {e.description}\n    {params}")
    return "\n".join(lines) + "\n"

