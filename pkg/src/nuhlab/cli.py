"""Command-line front end: one experiment per invocation.

Every run writes its outputs plus ``manifest.json`` echoing the resolved
configuration. Exit codes: 0 success, 1 a verification check failed, 2 usage error.
"""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .export import coord_columns, exponent_columns, parse_flat_config, write_csv, write_manifest

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _grid(s):
    try:
        a, b = str(s).lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise UsageError(f"grid must look like 100x100, got {s!r}") from None


def _floats(s):
    return np.array([float(v) for v in str(s).split(",")])


# name -> (type, default, help); default None means optional, REQUIRED must be set
REQUIRED = object()
COMMON = {
    "seed": (int, 0, "random seed"),
    "threads": (int, None, "worker threads (default: NUHLAB_THREADS or all cores)"),
    "out": (str, None, "main output file"),
    "manifest": (str, None, "manifest path (default: manifest.json next to --out)"),
    "report": (str, None, "text report path"),
}
MAP = {"map": (str, REQUIRED, "map kind (see list-maps)")}
COMMANDS = {
    "orbit": ({**MAP, "x0": (str, None, "start point, comma separated (default: random)"),
               "iters": (int, 1000, "number of steps")}, "write an orbit as CSV"),
    "exponents": ({**MAP, "grid": (str, None, "grid NxM on the sampling domain"),
                   "samples": (int, 100, "random samples when no grid is given"),
                   "iters": (int, 1000, "orbit length T"), "eps": (float, 0.01, "NUH threshold"),
                   "sum_tol": (float, 1e-6, "allowed |sum of exponents|")},
                  "finite-time Lyapunov spectra at sample points"),
    "nuh": ({**MAP, "grid": (str, "100x100", "grid NxM"), "iters": (int, 10000, "orbit length T"),
             "eps": (float, 0.01, "NUH threshold"),
             "min_fraction": (float, 0.0, "fail if the NUH fraction is below this")},
            "fraction of grid points with all exponents away from zero"),
    "verify-volume": ({**MAP, "samples": (int, 10000, "random samples"),
                       "tol": (float, 1e-6, "allowed max |det - 1|")},
                      "check |det Df - 1| at random points outside the singular balls"),
    "factorize": ({"pieces": (str, "slowdown,rotation", "comma list of slowdown, rotation, twist"),
                   "N": (int, 10, "factors per piece"), "theta": (float, float(np.pi / 3), "rotation angle"),
                   "K": (float, 10.0, "twist strength"), "n_samples": (int, 64, "verification grid side"),
                   "tol": (float, 1e-6, "allowed recomposition error")},
                  "split a presented map into near-identity factors"),
    "paste": ({"theta": (float, 0.3, "angle of the inner rotation g (f = Id)"),
               "U": (float, 0.1, "inner radius"), "V": (float, 0.2, "outer radius"),
               "grid": (str, "256x256", "Moser grid"), "blend": (str, "cartesian", "cartesian or polar"),
               "method": (str, "flux", "flux or neumann"), "tol": (float, 5e-3, "allowed |det - 1|")},
              "paste a rotation into the identity on T2 and repair the Jacobian"),
    "embed": ({"k": (int, 4, "rotation splitting"), "K": (float, 10.0, "twist strength"),
               "offset": (float, 0.3, "second twist centre"), "iters": (int, 10000, "return-map orbit length"),
               "points": (int, 100, "sampled D2 points"), "eps": (float, 0.01, "exponent threshold")},
              "install the linked twist map on a periodic disk of the demo host"),
    "symplectic-check": ({"d": (int, 2, "number of factors"), "k": (int, 4, "rotation splitting"),
                          "K": (float, 10.0, "twist strength"), "offset": (float, 0.3, "second twist centre"),
                          "iters": (int, 10000, "return-map orbit length"), "points": (int, 20, "sampled points"),
                          "eps": (float, 0.01, "exponent threshold"),
                          "defect_tol": (float, 1e-6, "allowed symplectic defect"),
                          "pair_tol": (float, 2e-2, "allowed |lambda_i + lambda_{2d+1-i}|")},
                         "product tower embedding and symplectic checks"),
    "robustness": ({"map": (str, "katok-t2", "torus map kind"), "scale": (float, 1e-3, "perturbation size"),
                    "trials": (int, 3, "perturbations"), "grid": (str, "20x20", "grid NxM"),
                    "iters": (int, 1000, "orbit length T"), "eps": (float, 0.01, "NUH threshold")},
                   "NUH fraction under small area-preserving perturbations"),
    "list-maps": ({}, "print the registered map kinds with defaults"),
}
MAP_COMMANDS = {"orbit", "exponents", "nuh", "verify-volume", "robustness"}


def build_parser():
    ap = argparse.ArgumentParser(prog="nuhlab", description="Numerical laboratory for volume-preserving maps.")
    ap.add_argument("--version", action="version", version=f"nuhlab {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="command")
    for name, (opts, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext, description=helptext)
        if name == "list-maps":
            continue
        for key, (typ, default, h) in {**opts, **COMMON}.items():
            extra = " (required)" if default is REQUIRED else ("" if default is None else f" (default {default})")
            sp.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=argparse.SUPPRESS,
                            help=h + extra)
        sp.add_argument("--config", default=None, help="flat key=value file; flags override it")
        if name in MAP_COMMANDS:
            sp.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                            help="map parameter override (repeatable)")
    return ap


def resolve(command, ns) -> dict:
    """Defaults, then config file, then explicit flags; unknown config keys rejected."""
    opts = {**COMMANDS[command][0], **COMMON}
    cfg = {}
    params = {}
    if getattr(ns, "config", None):
        try:
            with open(ns.config) as fh:
                raw = parse_flat_config(fh.read())
        except OSError as e:
            raise UsageError(f"cannot read config: {e}") from None
        except ValueError as e:
            raise UsageError(str(e)) from None
        for k, v in raw.items():
            if k.startswith("param.") and command in MAP_COMMANDS:
                params[k[6:]] = v
                continue
            key = k.replace("-", "_")
            if key not in opts:
                raise UsageError(f"unknown config key {k!r} for {command}")
            try:
                cfg[key] = opts[key][0](v)
            except ValueError:
                raise UsageError(f"bad value for {k}: {v!r}") from None
    out = {k: d for k, (_, d, _) in opts.items()}
    out.update(cfg)
    out.update({k: v for k, v in vars(ns).items() if k in opts})
    for item in getattr(ns, "param", []) or []:
        if "=" not in item:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        params[k.strip()] = v.strip()
    missing = [k for k, v in out.items() if v is REQUIRED]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m for m in missing)}")
    if command in MAP_COMMANDS:
        out["params"] = params
    return out


def _manifest_path(cfg):
    if cfg["manifest"]:
        return cfg["manifest"]
    base = os.path.dirname(os.path.abspath(cfg["out"])) if cfg["out"] else os.getcwd()
    return os.path.join(base, "manifest.json")


def _report(cfg, lines):
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if cfg["report"]:
        with open(cfg["report"], "w") as fh:
            fh.write(text)


def _build(cfg):
    from .registry import build
    try:
        fmap, sampler, params = build(cfg["map"], cfg["params"])
    except KeyError as e:
        raise UsageError(e.args[0]) from None
    except ValueError as e:
        raise UsageError(f"bad parameters for {cfg['map']}: {e}") from None
    cfg["map_params"] = params
    return fmap, sampler


def _points(cfg, sampler, rng):
    if cfg.get("grid"):
        return sampler(grid=_grid(cfg["grid"]), rng=rng)
    return sampler(n=cfg["samples"], rng=rng)


# ---------------------------------------------------------------- commands

def cmd_orbit(cfg):
    fmap, sampler = _build(cfg)
    rng = np.random.default_rng(cfg["seed"])
    x = _floats(cfg["x0"])[None, :] if cfg["x0"] else sampler(n=1, rng=rng)
    if x.shape[1] != fmap.dim:
        raise UsageError(f"--x0 needs {fmap.dim} coordinates")
    rows = [[0, *x[0]]]
    for t in range(1, cfg["iters"] + 1):
        x = fmap(x)
        rows.append([t, *x[0]])
    if cfg["out"]:
        write_csv(cfg["out"], ["step"] + coord_columns(fmap.dim), rows)
    _report(cfg, [f"orbit {cfg['map']} steps {cfg['iters']}", f"final {' '.join(map(repr, x[0].tolist()))}"])
    return EXIT_OK, {"final": x[0]}


def _spectra_rows(X, spec, half, excl):
    from .lyapunov import CONVERGENCE_THRESHOLD
    rows = []
    for x, s, h, e in zip(X, spec, half, excl):
        conv = (not e) and np.max(np.abs(s - h)) < CONVERGENCE_THRESHOLD
        total = np.nan if e else float(np.sum(s))
        rows.append([*x, *s, total, bool(conv), bool(e)])
    return rows


def cmd_exponents(cfg):
    from .lyapunov import fraction_from, spectra
    fmap, sampler = _build(cfg)
    rng = np.random.default_rng(cfg["seed"])
    X = _points(cfg, sampler, rng)
    spec, half, excl = spectra(fmap, X, cfg["iters"], threads=cfg["threads"])
    d = X.shape[1]
    if cfg["out"]:
        write_csv(cfg["out"], coord_columns(d) + exponent_columns(d)
                  + ["sum", "converged", "excluded"], _spectra_rows(X, spec, half, excl))
    keep = ~excl
    max_sum = float(np.max(np.abs(spec[keep].sum(1)))) if keep.any() else 0.0
    frac = fraction_from(spec, excl, cfg["eps"])
    ok = max_sum <= cfg["sum_tol"]
    _report(cfg, [f"exponents {cfg['map']} points {len(X)} T {cfg['iters']}",
                  f"excluded {int(excl.sum())}", f"max_abs_sum {max_sum!r}", f"nuh_fraction {frac!r}",
                  f"status {'pass' if ok else 'FAIL'}"])
    return (EXIT_OK if ok else EXIT_FAIL), {"max_abs_sum": max_sum, "fraction": frac,
                                            "excluded": int(excl.sum())}


def cmd_nuh(cfg):
    from .lyapunov import fraction_from, spectra
    fmap, sampler = _build(cfg)
    rng = np.random.default_rng(cfg["seed"])
    X = sampler(grid=_grid(cfg["grid"]), rng=rng)
    spec, half, excl = spectra(fmap, X, cfg["iters"], threads=cfg["threads"])
    frac = fraction_from(spec, excl, cfg["eps"])
    d = X.shape[1]
    if cfg["out"]:
        write_csv(cfg["out"], coord_columns(d) + exponent_columns(d)
                  + ["sum", "converged", "excluded"], _spectra_rows(X, spec, half, excl))
    ok = frac >= cfg["min_fraction"]
    _report(cfg, [f"nuh {cfg['map']} grid {cfg['grid']} T {cfg['iters']} eps {cfg['eps']}",
                  f"excluded {int(excl.sum())}", f"fraction {frac!r}", f"status {'pass' if ok else 'FAIL'}"])
    return (EXIT_OK if ok else EXIT_FAIL), {"fraction": frac, "excluded": int(excl.sum())}


def cmd_verify_volume(cfg):
    from ._parallel import map_chunks
    fmap, sampler = _build(cfg)
    rng = np.random.default_rng(cfg["seed"])
    X = sampler(n=cfg["samples"], rng=rng)
    X = X[~np.asarray(fmap.near_singular(X), dtype=bool)]
    J = map_chunks(lambda B: fmap.eval_jac(B)[1], X, cfg["threads"], chunk=512)
    err = np.abs(np.linalg.det(J) - 1.0)
    if cfg["out"]:
        write_csv(cfg["out"], coord_columns(X.shape[1]) + ["det_error"],
                  [[*x, e] for x, e in zip(X, err)])
    worst = float(err.max()) if len(err) else 0.0
    ok = worst <= cfg["tol"]
    _report(cfg, [f"verify-volume {cfg['map']} samples {len(X)}", f"max_det_error {worst!r}",
                  f"status {'pass' if ok else 'FAIL'}"])
    return (EXIT_OK if ok else EXIT_FAIL), {"max_det_error": worst, "samples": len(X)}


def cmd_factorize(cfg):
    from .factorize import (RotationPiece, det_errors, disk_samples, factor_composite,
                            reconstruction_error, slowdown_flow_piece, twist_flow)
    from .geometry import compose, rotation
    pres = []
    for name in cfg["pieces"].split(","):
        name = name.strip()
        if name == "slowdown":
            pres.append(slowdown_flow_piece())
        elif name == "rotation":
            pres.append(RotationPiece(cfg["theta"], radius=0.1))
        elif name == "twist":
            pres.append(twist_flow(cfg["K"], (0.0, 0.0), 0.1))
        else:
            raise UsageError(f"unknown piece {name!r}")
    fact = factor_composite(pres, cfg["N"], cfg["n_samples"], cfg["threads"])
    direct = []
    for p in pres:
        direct.append(p.time_map(1.0) if hasattr(p, "time_map") else rotation(p.theta, p.center))
    target = compose(direct[::-1])
    X = disk_samples((0.0, 0.0), 0.1, cfg["n_samples"])
    err = reconstruction_error(fact, target, X)
    dets = det_errors(fact, X, cfg["threads"])
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(fact.manifest())
    ok = err <= cfg["tol"]
    _report(cfg, [f"factorize {cfg['pieces']} N_each {cfg['N']} factors {fact.N}",
                  f"delta {fact.delta_achieved!r}", f"recompose_error {err!r}",
                  f"max_det_error {float(dets.max())!r}", f"status {'pass' if ok else 'FAIL'}"])
    return (EXIT_OK if ok else EXIT_FAIL), {"delta": fact.delta_achieved, "recompose_error": err,
                                            "max_det_error": float(dets.max())}


def cmd_paste(cfg):
    from .geometry import T2, identity_map, rotation
    from .pasting import paste, write_moser_csv
    c = np.array([0.5, 0.5])
    if cfg["blend"] not in ("cartesian", "polar") or cfg["method"] not in ("flux", "neumann"):
        raise UsageError("--blend must be cartesian|polar and --method flux|neumann")
    G, rep = paste(identity_map(T2), rotation(cfg["theta"], c, T2), c, cfg["U"], cfg["V"],
                   _grid(cfg["grid"]), cfg["blend"], cfg["method"], threshold=None)
    if cfg["out"]:
        write_moser_csv(rep.solution, cfg["out"])
    sol = rep.solution
    ok = rep.det_error <= cfg["tol"]
    _report(cfg, [f"paste theta {cfg['theta']} U {cfg['U']} V {cfg['V']} grid {cfg['grid']}",
                  f"c1_distance {rep.c1_distance!r}", f"deficit_sup {rep.deficit_sup!r}",
                  f"constant {rep.constant!r}", f"moser_residual {sol.residual_sup!r}",
                  f"det_error {rep.det_error!r}", f"status {'pass' if ok else 'FAIL'}"])
    return (EXIT_OK if ok else EXIT_FAIL), {"det_error": rep.det_error, "residual": sol.residual_sup,
                                            "c1_distance": rep.c1_distance, "constant": rep.constant}


def _embed_checks(cfg, res):
    tw = res.tower
    ok = (tw.checks["period_error"] <= 1e-9 and tw.checks["disjoint"]
          and res.checks["return_error"] <= 1e-6)
    return ok


def cmd_embed(cfg):
    from .embed import embed_demo, linked_twist, verify_embedding, write_report
    res = embed_demo(cfg["k"], cfg["K"], cfg["offset"])
    target, _ = linked_twist(cfg["K"], cfg["offset"])
    ch = verify_embedding(res, target, exponents_T=cfg["iters"], n_points=cfg["points"],
                          seed=cfg["seed"], epsilon=cfg["eps"], threads=cfg["threads"])
    spec = ch["exponents"]
    if cfg["out"]:
        write_csv(cfg["out"], ["point"] + exponent_columns(2), [[i, *s] for i, s in enumerate(spec)])
    need = int(np.ceil(0.95 * cfg["points"]))
    ok = _embed_checks(cfg, res) and ch["nonzero_count"] >= need
    if cfg["report"]:
        write_report(res, cfg["report"])
    tw = res.tower
    sys.stdout.write("\n".join([
        f"embed k {cfg['k']} k1 {tw.site.k1} N {tw.N} D2_radius {float(tw.D2_radius)!r}",
        f"period_error {tw.checks['period_error']!r}", f"disjoint {tw.checks['disjoint']}",
        f"return_error {ch['return_error']!r}", f"target_error {ch['target_error']!r}",
        f"nonzero {ch['nonzero_count']}/{cfg['points']}", f"status {'pass' if ok else 'FAIL'}"]) + "\n")
    return (EXIT_OK if ok else EXIT_FAIL), {k: v for k, v in {**tw.checks, **ch}.items() if k != "exponents"}


def cmd_symplectic_check(cfg):
    from .embed import embed_demo
    from .symplectic import symplectic_embed, verify_symplectic
    base = embed_demo(cfg["k"], cfg["K"], cfg["offset"])
    res = symplectic_embed(base.tower, base.factors, cfg["d"])
    ch = verify_symplectic(res, cfg["d"], exponents_T=cfg["iters"], n_points=cfg["points"],
                           seed=cfg["seed"], epsilon=cfg["eps"], threads=cfg["threads"])
    spec = ch["exponents"]
    if cfg["out"]:
        write_csv(cfg["out"], ["point"] + exponent_columns(spec.shape[1]),
                  [[i, *s] for i, s in enumerate(spec)])
    ok = ch["defect"] <= cfg["defect_tol"] and ch["pairing_error"] <= cfg["pair_tol"]
    _report(cfg, [f"symplectic-check d {cfg['d']} N {res.tower.N}", f"defect {ch['defect']!r}",
                  f"block_det_error {ch['block_det_error']!r}",
                  f"return_error {ch.get('return_error', float('nan'))!r}",
                  f"pairing_error {ch['pairing_error']!r}", f"nonzero {ch['nonzero_count']}/{cfg['points']}",
                  f"status {'pass' if ok else 'FAIL'}"])
    return (EXIT_OK if ok else EXIT_FAIL), {k: v for k, v in ch.items() if k != "exponents"}


def cmd_robustness(cfg):
    from .lyapunov import robustness_probe, torus_grid
    fmap, _ = _build(cfg)
    try:
        tab = robustness_probe(fmap, cfg["scale"], cfg["trials"], torus_grid(*_grid(cfg["grid"])),
                               cfg["iters"], cfg["eps"], cfg["seed"], cfg["threads"])
    except ValueError as e:
        raise UsageError(str(e)) from None
    rows = list(tab.rows())
    if cfg["out"]:
        # row 0 is the unperturbed map
        write_csv(cfg["out"], ["row", "fraction", "drop"], [[i, f, d] for i, (_, f, d) in enumerate(rows)])
    _report(cfg, [f"robustness {cfg['map']} scale {cfg['scale']} trials {cfg['trials']}"]
            + [f"{name} {f!r} {d!r}" for name, f, d in rows] + [f"worst_drop {tab.worst_drop!r}"])
    return EXIT_OK, {"base": tab.base_fraction, "trials": tab.trial_fractions, "worst_drop": tab.worst_drop}


HANDLERS = {"orbit": cmd_orbit, "exponents": cmd_exponents, "nuh": cmd_nuh,
            "verify-volume": cmd_verify_volume, "factorize": cmd_factorize, "paste": cmd_paste,
            "embed": cmd_embed, "symplectic-check": cmd_symplectic_check, "robustness": cmd_robustness}


def list_maps() -> str:
    from .registry import catalog
    return catalog()


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    if ns.command is None:
        ap.print_usage(sys.stderr)
        return EXIT_USAGE
    if ns.command == "list-maps":
        sys.stdout.write(list_maps())
        return EXIT_OK
    try:
        cfg = resolve(ns.command, ns)
        start = time.perf_counter()
        code, results = HANDLERS[ns.command](cfg)
        wall = time.perf_counter() - start
    except UsageError as e:
        ap.print_usage(sys.stderr)
        sys.stderr.write(f"nuhlab {ns.command}: error: {e}\n")
        return EXIT_USAGE
    outputs = [p for p in (cfg["out"], cfg["report"]) if p]
    manifest = {"command": ns.command, "version": __version__,
                "config": {k: v for k, v in cfg.items() if k not in ("params", "map_params")},
                "outputs": outputs, "results": results, "exit_code": code, "wall_time_s": wall}
    if "map" in cfg:
        manifest["map"] = {"kind": cfg["map"], "params": cfg.get("map_params", {})}
    write_manifest(_manifest_path(cfg), manifest)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
