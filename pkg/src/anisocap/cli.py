"""Command-line front end.

Every subcommand writes a JSON report (sorted keys, no timestamps) and a
``manifest.json`` into ``--out``.  Options come from flags or from a JSON
config file (``schema_version: 1``, unknown keys rejected); flags win.

Exit codes: 0 success, 1 infeasible or degenerate input, 2 internal failure,
64 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, energy, optimize, potential, tension
from .errors import AnisocapError, ConfigError, GeometryError, InfeasibleError, PlateauError
from .geom2d import Polygon, PolygonSet, to_svg

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2, 64
SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# option tables: name -> (type, default, required)

_SEED = {"seed": (int, 0, False)}
_COMMON = {"tension": (str, "isotropic:1", False)}

OPTIONS = {
    "wulff": {"tension": (str, "isotropic:1", False), "dirs": (int, 256, False)},
    "energy": {**_COMMON, "shape": (str, None, True), "potential": (str, "zero", False),
               "quad_order": (int, 6, False)},
    "minimize": {**_COMMON, **_SEED, "mass": (float, None, True), "potential": (str, "zero", False),
                 "vertices_per_part": (int, 64, False), "max_parts": (int, 3, False),
                 "restarts": (int, 8, False), "max_iters": (int, 600, False),
                 "step": (float, None, False), "energy_rel": (float, 1e-8, False),
                 "grad_norm": (float, 1e-6, False), "search_radius": (float, 4.0, False),
                 "center": (list, [0.0, 0.0], False), "smoothing": (float, 0.02, False),
                 "quad_order": (int, 6, False), "snapshot_every": (int, 0, False)},
    "truncate": {"shape": (str, None, True), "potential": (str, None, True),
                 "mass": (float, None, True), "resolution": (int, 400, False),
                 "on_plateau": (str, "sweep", False)},
    "deficit": {**_COMMON, "shape": (str, None, True), "wulff_resolution": (int, 256, False)},
    "audit-hessian": {"potential": (str, "counterexample", False),
                      "grid": (str, "-2:2:0.25", False), "step": (float, 1e-3, False)},
    "nonexistence": {**_COMMON, **_SEED, "potential": (str, "counterexample", False),
                     "mass": (float, None, True), "budget": (int, 3, False),
                     "r0": (float, 4.0, False), "restarts": (int, 2, False)},
    "scan": {**_COMMON, **_SEED, "potential": (str, None, True), "masses": (str, None, True),
             "restarts": (int, 6, False), "max_parts": (int, 2, False),
             "threshold": (float, 0.05, False), "defect_threshold": (float, 1e-2, False),
             "epsilon": (float, 0.1, False), "ratio_form": (str, "general", False),
             "search_radius": (float, 4.0, False)},
    "modulus": {**_COMMON, **_SEED, "potential": (str, "zero", False),
                "mass": (float, None, True), "epsilon": (float, None, True),
                "samples": (int, 240, False), "c": (float, None, False)},
    "container": {**_COMMON, **_SEED, "container": (str, None, True),
                  "mass": (float, None, True), "restarts": (int, 4, False)},
}

HELP = {
    "wulff": "Wulff shape of a tension (polygon + SVG)",
    "energy": "free energy of a shape",
    "minimize": "mass-constrained free-energy minimization",
    "truncate": "sub-level truncation of a shape to a given mass",
    "deficit": "isoperimetric deficit and asymmetry index",
    "audit-hessian": "finite-difference audit of potential derivatives",
    "nonexistence": "minimize in growing balls and look for escape",
    "scan": "critical-mass scan over a mass grid",
    "modulus": "sampled modulus of the free energy",
    "container": "minimization inside a polygonal container",
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="anisocap", description="Anisotropic capillarity laboratory")
    p.add_argument("--version", action="version", version=f"anisocap {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, opts in OPTIONS.items():
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", metavar="PATH", help="JSON config (schema_version 1)")
        sp.add_argument("--out", metavar="DIR", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=None, metavar="N")
        sp.add_argument("--json", action="store_true", help="print the report to stdout")
        if "seed" not in opts:
            sp.add_argument("--seed", type=int, default=None, metavar="N")
        for key, (typ, _, _) in opts.items():
            flag = "--" + key.replace("_", "-")
            if typ is list:
                sp.add_argument(flag, type=float, nargs="+", default=None, dest=key)
            else:
                sp.add_argument(flag, type=typ, default=None, dest=key)
    return p


def _load_config(path: str | None, command: str) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise UsageError(f"config needs \"schema_version\": {SCHEMA_VERSION}")
    allowed = set(OPTIONS[command]) | {"schema_version", "seed", "threads"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    out = dict(data)
    out.pop("schema_version")
    return out


def resolve_options(args, command: str) -> dict:
    """Merge defaults, config file and flags; check required keys."""
    cfg = _load_config(args.config, command)
    table = OPTIONS[command]
    opts = {}
    for key, (typ, default, _) in table.items():
        val = getattr(args, key, None)
        if val is None:
            val = cfg.get(key, default)
        opts[key] = val
    if "seed" not in table:
        opts["seed"] = args.seed if args.seed is not None else cfg.get("seed", 0)
    opts["threads"] = args.threads if args.threads is not None else cfg.get("threads", 1)
    missing = [k for k, (_, _, req) in table.items() if req and opts.get(k) is None]
    if missing:
        raise UsageError(f"missing required key(s): {', '.join(missing)}")
    return opts


def config_hash(command: str, opts: dict) -> str:
    """SHA-256 of the canonical (sorted-key) JSON of the effective options."""
    text = json.dumps({"command": command, "options": opts}, sort_keys=True, separators=(",", ":"),
                      default=_json_default)
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# input parsing


def _read_json_arg(text: str):
    path = Path(text)
    if path.suffix == ".json" or (len(text) < 4096 and path.is_file()):
        return json.loads(path.read_text())
    return json.loads(text)


def parse_shape(text: str) -> PolygonSet:
    data = _read_json_arg(text)
    if isinstance(data, dict):
        data = data.get("shape", data.get("polygon"))
    arr = data
    if arr and isinstance(arr[0][0], (int, float)):
        return PolygonSet([Polygon(arr)])
    return PolygonSet([Polygon(p) for p in arr])


def parse_polygon(text: str) -> Polygon:
    if ";" in text and not text.strip().startswith("["):
        return Polygon([tuple(map(float, q.split(","))) for q in text.split(";") if q.strip()])
    return parse_shape(text).parts[0]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else None
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def dumps(report) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, default=_json_default) + "\n"


# ---------------------------------------------------------------------------
# commands: each returns (report dict, {filename: text})


def cmd_wulff(o):
    f = tension.parse(o["tension"])
    K = tension.wulff_shape(f, o["dirs"])
    rep = {"tension": f.descriptor(), "dirs": o["dirs"], "polygon": K.to_list(),
           "area": K.area, "vertices": len(K)}
    return rep, {"wulff.svg": to_svg([K])}


def cmd_energy(o):
    f = tension.parse(o["tension"])
    g = potential.parse(o["potential"])
    E = parse_shape(o["shape"])
    rep = energy.free_energy(E, f, g, o["quad_order"]).to_dict()
    rep.update(tension=f.descriptor(), potential=g.descriptor())
    return rep, {}


def _minimize_config(o) -> optimize.MinimizeConfig:
    return optimize.MinimizeConfig(
        mass=o["mass"], tension=tension.parse(o["tension"]), potential=potential.parse(o["potential"]),
        vertices_per_part=o["vertices_per_part"], max_parts=o["max_parts"], restarts=o["restarts"],
        max_iters=o["max_iters"], step=o["step"], energy_rel=o["energy_rel"],
        grad_norm=o["grad_norm"], seed=o["seed"], search_radius=o["search_radius"],
        center=tuple(o["center"]), smoothing=o["smoothing"], quad_order=o["quad_order"],
        threads=o["threads"], snapshot_every=o["snapshot_every"])


def cmd_minimize(o):
    cfg = _minimize_config(o)
    res = optimize.minimize(cfg)
    rep = res.to_dict()
    rep.update(tension=cfg.tension.descriptor(), potential=cfg.potential.descriptor(),
               mass=cfg.mass)
    files = {"shape.svg": to_svg(list(res.shape.parts))}
    if res.snapshots:
        # frames of the winning run; the numbers behind them go in frames.json
        frames = []
        for it, rings in res.snapshots:
            files[f"frames/frame_{it:05d}.svg"] = to_svg([Polygon(r, validate=False) for r in rings])
            frames.append({"iteration": it, "shape": [np.asarray(r).tolist() for r in rings]})
        files["frames/frames.json"] = dumps(frames)
    return rep, files


def cmd_truncate(o):
    E = parse_shape(o["shape"])
    g = potential.parse(o["potential"])
    r = energy.truncate_to_mass(E, g, o["mass"], o["resolution"], on_plateau=o["on_plateau"])
    rep = {"shape": r.shape.to_list(), "level": r.level, "mass": r.mass, "target_mass": o["mass"],
           "plateau": r.plateau, "note": r.note, "potential": g.descriptor()}
    return rep, {"truncated.svg": to_svg(list(E.parts) + list(r.shape.parts))}


def cmd_deficit(o):
    f = tension.parse(o["tension"])
    E = parse_shape(o["shape"])
    rep = energy.deficit(E, f, o["wulff_resolution"]).to_dict()
    rep["tension"] = f.descriptor()
    return rep, {}


def cmd_audit(o):
    g = potential.parse(o["potential"])
    rep = potential.hessian_audit(g, o["grid"], o["step"]).to_dict()
    rep.update(potential=g.descriptor(), grid=o["grid"])
    return rep, {}


def cmd_nonexistence(o):
    f = tension.parse(o["tension"])
    g = potential.parse(o["potential"])
    r = optimize.nonexistence_probe(g, f, o["mass"], budget=o["budget"], R0=o["r0"],
                                    restarts=o["restarts"], seed=o["seed"])
    rep = r.to_dict()
    rep.update(tension=f.descriptor(), potential=g.descriptor(), mass=o["mass"])
    return rep, {}


def cmd_scan(o):
    f = tension.parse(o["tension"])
    g = potential.parse(o["potential"])
    masses = o["masses"]
    masses = [float(x) for x in (masses.split(",") if isinstance(masses, str) else masses)]
    cfg = analysis.ScanConfig(restarts=o["restarts"], max_parts=o["max_parts"], seed=o["seed"],
                              threshold=o["threshold"], defect_threshold=o["defect_threshold"],
                              epsilon=o["epsilon"], ratio_form=o["ratio_form"],
                              search_radius=o["search_radius"])
    r = analysis.critical_mass_scan(f, g, masses, cfg)
    rep = r.to_dict()
    rep.update(tension=f.descriptor(), potential=g.descriptor())
    return rep, {"scan.csv": r.to_csv()}


def cmd_modulus(o):
    f = tension.parse(o["tension"])
    g = potential.parse(o["potential"])
    r = analysis.modulus_estimate(o["mass"], f, g, o["epsilon"], o["samples"], o["seed"], c=o["c"])
    rep = r.to_dict()
    rep.update(tension=f.descriptor(), potential=g.descriptor())
    return rep, {}


def cmd_container(o):
    f = tension.parse(o["tension"])
    A = parse_polygon(o["container"])
    res = optimize.container_minimize(A, f, o["mass"], restarts=o["restarts"], seed=o["seed"],
                                      threads=o["threads"])
    rep = res.to_dict()
    rep.update(container=A.to_list(), tension=f.descriptor(), mass=o["mass"])
    return rep, {"container.svg": to_svg([A] + list(res.shape.parts))}


COMMANDS = {
    "wulff": cmd_wulff, "energy": cmd_energy, "minimize": cmd_minimize, "truncate": cmd_truncate,
    "deficit": cmd_deficit, "audit-hessian": cmd_audit, "nonexistence": cmd_nonexistence,
    "scan": cmd_scan, "modulus": cmd_modulus, "container": cmd_container,
}


def _write(out: Path, name: str, text: str) -> str:
    path = out / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return str(path)


def _glue_negative_values(argv):
    """Turn ``--flag -2:2`` into ``--flag=-2:2`` so argparse takes it as a value."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else ""
        if tok.startswith("--") and "=" not in tok and re.match(r"^-[\d.]", nxt):
            out.append(f"{tok}={nxt}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def run(argv=None) -> int:
    parser = build_parser()
    argv = _glue_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    cmd = args.command
    t0 = time.perf_counter()
    try:
        opts = resolve_options(args, cmd)
        report, files = COMMANDS[cmd](opts)
    except (UsageError, ConfigError) as exc:
        print(f"anisocap {cmd}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GeometryError, InfeasibleError, PlateauError, ValueError, json.JSONDecodeError) as exc:
        print(f"anisocap {cmd}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AnisocapError as exc:
        print(f"anisocap {cmd}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - report and signal internal failure
        print(f"anisocap {cmd}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    text = dumps(report)
    out = Path(args.out or f"anisocap-{cmd}")
    out.mkdir(parents=True, exist_ok=True)
    stem = cmd.replace("-", "_")
    written = [_write(out, f"{stem}.json", text)]
    for name, body in sorted(files.items()):
        written.append(_write(out, name, body))
    manifest = {"command": cmd, "config_hash": config_hash(cmd, opts), "seed": opts.get("seed", 0),
                "tool_version": __version__, "outputs": [os.path.relpath(w, out) for w in written],
                "wall_time": time.perf_counter() - t0}
    (out / "manifest.json").write_text(dumps(manifest))
    if args.json:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
