"""Command line front end: ``hermobs <subcommand> ...``.

Exit status 0 on success, 1 on a domain error (resonance, void certificate,
failed search, bad grid), 2 on a usage or configuration error. Errors are
reported as one JSON object on stderr and, when an output directory is known,
as ``error.json`` there.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from copy import deepcopy
from pathlib import Path

import numpy as np
import yaml

from . import io
from .numgrid import GridError, make_uniform_grid, rasterize_set, shape_from_dict
from .params import PropagatorParams, ResonanceError

MODES = ("frft", "hermite-flow", "hermite-observe", "special-flow", "observe", "set-translate", "calibrate", "sweep")


class ConfigError(Exception):
    """Malformed or incomplete configuration (usage error)."""


# --------------------------------------------------------------------------
# config helpers


def load_config(path) -> dict:
    try:
        cfg = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    return cfg


def _need(cfg: dict, key: str, where: str = "config"):
    if key not in cfg:
        raise ConfigError(f"{where} misses required key {key!r}")
    return cfg[key]


def parse_grid(cfg: dict):
    g = _need(cfg, "grid")
    try:
        return make_uniform_grid(int(_need(g, "dim", "grid")), float(_need(g, "half_extent", "grid")),
                                 int(_need(g, "points_per_axis", "grid")))
    except GridError as exc:
        raise ConfigError(str(exc)) from None


def parse_params(cfg: dict, d: int) -> PropagatorParams:
    p = _need(cfg, "params")
    try:
        return PropagatorParams(float(_need(p, "lambda", "params")), float(_need(p, "t", "params")), int(p.get("d", d)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_set(spec, grid, base: Path):
    if isinstance(spec, dict) and "file" in spec:
        s = io.read_mask(base / spec["file"])
        if s.grid != grid:
            raise ConfigError(f"mask file {spec['file']} is on a different grid")
        return s
    try:
        return rasterize_set(shape_from_dict(spec), grid)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad set description {spec!r}: {exc}") from None


def parse_sets(cfg: dict, names, grid, base: Path) -> dict:
    sets = _need(cfg, "sets")
    return {n: parse_set(_need(sets, n, "sets"), grid, base) for n in names}


def sample_spec(cfg: dict, seed_override) -> dict:
    s = dict(cfg.get("samples", {}))
    s.setdefault("count", 100)
    if seed_override is not None:
        s["seed"] = seed_override
    if "seed" not in s:
        raise ConfigError("samples.seed is required (no implicit randomness)")
    return s


def make_samples(grid, spec: dict):
    from .observability import gaussian_mixture_samples

    kw = {}
    if "components" in spec:
        kw["components"] = tuple(int(v) for v in spec["components"])
    if "centre_range" in spec:
        kw["centre_range"] = float(spec["centre_range"])
    if "width_range" in spec:
        kw["width_range"] = tuple(float(v) for v in spec["width_range"])
    return gaussian_mixture_samples(grid, int(spec["count"]), int(spec["seed"]), **kw)


# --------------------------------------------------------------------------
# modes


def _ratio_rows(report):
    return [(i, r) for i, r in enumerate(report.ratios)]


def run_observe(cfg: dict, out: Path, seed, base: Path) -> dict:
    from .observability import special_observability_experiment

    grid = parse_grid(cfg)
    if grid.dim % 2:
        raise ConfigError("observe needs an even-dimensional grid (C^d as R^2d)")
    p = parse_params(cfg, grid.dim // 2)
    if not p.special_valid:
        raise ResonanceError(f"lambda*t = {p.lam * p.t} lies in pi*Z; the kernel does not exist")
    sets = parse_sets(cfg, ("E", "Omega"), grid, base)
    spec = sample_spec(cfg, seed)
    samples, params = make_samples(grid, spec)
    tol = float(cfg.get("tolerances", {}).get("power", 1e-10))
    rep = special_observability_experiment(samples, p, sets["E"], sets["Omega"], mode=cfg.get("matrix_mode", "auto"), tol=tol)
    report = rep.as_dict()
    report["samples"] = {"spec": spec, "components": params}
    report["mode"] = "observe"
    io.dump_json(out / "report.json", report)
    io.write_csv(out / "ratios.csv", ["sample", "ratio"], _ratio_rows(rep))
    return report


def run_hermite_observe(cfg: dict, out: Path, seed, base: Path) -> dict:
    from .hermite_flow import hermite_observability_experiment

    grid = parse_grid(cfg)
    p = parse_params(cfg, grid.dim)
    if not p.hermite_valid:
        raise ResonanceError(f"2|lambda|t = {2 * abs(p.lam) * p.t} lies in pi*Z")
    sets = parse_sets(cfg, ("A", "B"), grid, base)
    spec = sample_spec(cfg, seed)
    samples, params = make_samples(grid, spec)
    tol = float(cfg.get("tolerances", {}).get("power", 1e-10))
    cutoff = cfg.get("cutoff")
    rep = hermite_observability_experiment(samples, p, sets["A"], sets["B"], cutoff=cutoff, tol=tol)
    report = rep.as_dict()
    report["samples"] = {"spec": spec, "components": params}
    report["mode"] = "hermite-observe"
    io.dump_json(out / "report.json", report)
    io.write_csv(out / "ratios.csv", ["sample", "ratio"], _ratio_rows(rep))
    return report


def run_set_translate(cfg: dict, out: Path, seed, base: Path) -> dict:
    from .setgeom import find_translation, iterate_construction, verify_translation

    grid = parse_grid(cfg)
    report: dict = {"mode": "set-translate"}
    sets_cfg = cfg.get("sets", {})
    max_radius = cfg.get("max_radius")
    if "A" in sets_cfg:
        s = parse_sets(cfg, ("A", "A0", "B", "B0"), grid, base)
        eps = float(_need(cfg, "eps"))
        res = find_translation(s["A"], s["A0"], s["B"], s["B0"], eps, max_radius)
        report["search"] = res.as_dict()
        report["search"]["direct_check"] = verify_translation(s["A"], s["A0"], s["B"], s["B0"], res)
        io.write_mask(out / "A_union.csv", s["A"].union(s["A0"].shifted(res.shift)))
        io.write_mask(out / "B_union.csv", s["B"].union(s["B0"].shifted(res.shift)))
    if "construction" in cfg:
        c = cfg["construction"]
        s = parse_sets(cfg, ("E0", "Omega0"), grid, base)
        trace = iterate_construction(s["E0"], s["Omega0"], int(_need(c, "N", "construction")),
                                     int(_need(c, "J", "construction")), float(c.get("unit", 1.0)),
                                     max_radius=max_radius)
        report["construction"] = trace.as_dict()
        io.write_mask(out / "E_final.csv", trace.E[-1])
        io.write_mask(out / "Omega_final.csv", trace.Omega[-1])
    if len(report) == 1:
        raise ConfigError("set-translate needs sets A, A0, B, B0 with eps, or a construction block")
    io.dump_json(out / "report.json", report)
    return report


def run_calibrate(cfg: dict, out: Path, seed, base: Path) -> dict:
    from .frft import calibrate_conventions
    from .twisted import calibrate_cd

    cal = calibrate_conventions()
    pc = cfg.get("params", {"lambda": 1.0, "t": 1.0})
    p = PropagatorParams(float(pc.get("lambda", 1.0)), float(pc.get("t", 1.0)), int(pc.get("d", 1)))
    probe_c = [float(v) for v in cfg.get("probe_centre", [0.5] * (2 * p.d))]

    def probe(*xs):
        return np.exp(-sum((x - c) ** 2 for x, c in zip(xs, probe_c)) / 2)

    cd = calibrate_cd(probe, p, half_extent=float(cfg.get("half_extent", 8.0)),
                      sizes=tuple(cfg.get("sizes", (96, 128, 160))))
    report = {"mode": "calibrate", "frft": cal.as_dict(), "cd": cd.as_dict(), "params": p.as_dict()}
    io.dump_json(out / "report.json", report)
    rows = [(str(k), v) for k, v in sorted(cal.residuals.items(), key=lambda kv: str(kv[0]))]
    io.write_csv(out / "frft_residuals.csv", ["probe", "residual"], rows)
    io.write_csv(out / "cd_calibration.csv", ["points_per_axis", "cd_modulus"],
                 list(zip(cd.points_per_axis, cd.calibrated)))
    return report


SWEEP_RUNNERS = {"observe": "run_observe", "hermite-observe": "run_hermite_observe"}


def _sweep_point(template: dict, key: str, value, seed, base: Path):
    cfg = deepcopy(template)
    cfg.setdefault("params", {})[key] = value
    mode = cfg.get("mode")
    grid = parse_grid(cfg)
    try:
        if mode == "hermite-observe":
            from .hermite_flow import hermite_observability_experiment

            p = parse_params(cfg, grid.dim)
            p.require_hermite_valid()
            sets = parse_sets(cfg, ("A", "B"), grid, base)
            samples, _ = make_samples(grid, sample_spec(cfg, seed))
            rep = hermite_observability_experiment(samples, p, sets["A"], sets["B"], cutoff=cfg.get("cutoff"))
            s = abs(math.sin(2 * abs(p.lam) * p.t))
        elif mode == "observe":
            from .observability import special_observability_experiment

            p = parse_params(cfg, grid.dim // 2)
            p.require_special_valid()
            sets = parse_sets(cfg, ("E", "Omega"), grid, base)
            samples, _ = make_samples(grid, sample_spec(cfg, seed))
            rep = special_observability_experiment(samples, p, sets["E"], sets["Omega"])
            s = abs(math.sin(p.lam * p.t))
        else:
            raise ConfigError(f"sweep template mode must be one of {sorted(SWEEP_RUNNERS)}")
        return [value, s, rep.sigma_max, rep.certified_constant, rep.hs_norm, max(rep.ratios, default=None), ""]
    except ConfigError:
        raise
    except Exception as exc:  # one failing point must not stop the sweep
        return [value, None, None, None, None, None, f"{type(exc).__name__}: {exc}"]


def run_sweep(cfg: dict, out: Path, seed, base: Path, threads: int = 1) -> dict:
    template = _need(cfg, "template")
    sw = _need(cfg, "sweep")
    key = sw.get("parameter", "t")
    if key not in ("t", "lambda"):
        raise ConfigError("sweep.parameter must be 't' or 'lambda'")
    values = list(sw.get("values", []))
    if "sin_values" in sw:
        # |sin(2|lam| t)| = s for hermite-observe, |sin(lam t)| = s for observe
        lam = abs(float(template.get("params", {}).get("lambda", 1.0)))
        fac = 2 * lam if template.get("mode") == "hermite-observe" else lam
        values += [math.asin(float(s)) / fac for s in sw["sin_values"]]
    header = ["index", key, "abs_sin", "sigma_max", "certified_constant", "hs_norm", "max_ratio", "error"]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        futures = [ex.submit(_sweep_point, template, key, v, seed, base) for v in values]
        rows = [[i] + f.result() for i, f in enumerate(futures)]
    io.write_csv(out / "sweep.csv", header, rows)
    report = {"mode": "sweep", "parameter": key, "rows": [dict(zip(header, r)) for r in rows]}
    io.dump_json(out / "report.json", report)
    return report


def run_frft(args) -> dict:
    from .frft import frft_chirp, frft_grid

    f = io.read_grid_function(args.input)
    g = frft_chirp(f, args.alpha) if args.method == "chirp" else frft_grid(f, args.alpha)
    io.write_grid_function(args.output, g)
    return {"mode": "frft", "alpha": args.alpha, "method": args.method, "norm_in": f.norm(), "norm_out": g.norm()}


def run_hermite_flow(args) -> dict:
    from .hermite_flow import propagate_hermite_frft

    f = io.read_grid_function(args.input)
    p = PropagatorParams(args.lam, args.t, f.grid.dim)
    g = propagate_hermite_frft(f, p, method=args.method)
    io.write_grid_function(args.output, g)
    return {"mode": "hermite-flow", "params": p.as_dict(), "norm_in": f.norm(), "norm_out": g.norm()}


def run_special_flow(args) -> dict:
    from .twisted import propagate_special_hermite

    f = io.read_grid_function(args.input)
    if f.grid.dim % 2:
        raise GridError("special-flow needs an even-dimensional grid")
    p = PropagatorParams(args.lam, args.t, f.grid.dim // 2)
    g = propagate_special_hermite(f, p)
    io.write_grid_function(args.output, g)
    return {"mode": "special-flow", "params": p.as_dict(), "norm_in": f.norm(), "norm_out": g.norm()}


# --------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message, None)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hermobs", description="Hermite and special Hermite flows, observability certificates.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="override samples.seed")
        sp.add_argument("--threads", type=int, default=1)

    for name in ("frft", "hermite-flow", "special-flow"):
        sp = sub.add_parser(name)
        if name == "frft":
            sp.add_argument("--alpha", type=float, required=True)
        else:
            sp.add_argument("--lambda", dest="lam", type=float, required=True)
            sp.add_argument("--t", type=float, required=True)
        if name != "special-flow":
            sp.add_argument("--method", choices=("spectral", "chirp"), default="spectral")
        sp.add_argument("--in", dest="input", required=True)
        sp.add_argument("--out", dest="output", required=True, help="output grid file")
        common(sp)
    for name in ("hermite-observe", "observe", "set-translate", "calibrate", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name != "calibrate")
        sp.add_argument("--out", default=".", help="output directory")
        common(sp)
    return ap


def _emit_error(kind: str, message: str, out: Path | None) -> None:
    err = {"error": kind, "message": message}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            io.dump_json(out / "error.json", err)
        except OSError:
            pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cmd = args.command
    out = Path(args.out) if hasattr(args, "out") else None
    try:
        if cmd in ("frft", "hermite-flow", "special-flow"):
            summary = {"frft": run_frft, "hermite-flow": run_hermite_flow, "special-flow": run_special_flow}[cmd](args)
        else:
            cfg = load_config(args.config) if args.config else {}
            base = Path(args.config).parent if args.config else Path(".")
            if "mode" in cfg and cfg["mode"] != cmd and cmd != "sweep":
                raise ConfigError(f"config mode {cfg['mode']!r} does not match subcommand {cmd!r}")
            out.mkdir(parents=True, exist_ok=True)
            if cmd == "sweep":
                summary = run_sweep(cfg, out, args.seed, base, args.threads)
            else:
                runner = {"observe": run_observe, "hermite-observe": run_hermite_observe,
                          "set-translate": run_set_translate, "calibrate": run_calibrate}[cmd]
                summary = runner(cfg, out, args.seed, base)
    except ConfigError as exc:
        _emit_error("config", str(exc), out)
        return 2
    except FileNotFoundError as exc:
        _emit_error("usage", str(exc), out)
        return 2
    except Exception as exc:
        _emit_error(type(exc).__name__, str(exc), out)
        return 1
    if cmd in ("frft", "hermite-flow", "special-flow"):
        sys.stdout.write(json.dumps(io._jsonable(summary), sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
