"""Command-line front end: check, reach, and verify subcommands.

``reach`` runs the configured pipeline and writes machine-readable results
(JSON, CSV area curve, plain vertex files for plotting). ``verify`` samples
trajectories against the freshly computed over-approximation and exits 2 on
any soundness violation, distinguishing that from crashes (exit 1).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ProblemConfig, load_config, preset_names
from .decomp import make_decomposition
from .embed import ReachSpec, backward_reach_box, forward_reach_box
from .errors import ConfigError, MmreachError
from .geometry import (
    Box,
    Parallelotope,
    UnionInitialSet,
    convex_hull_2d,
    ptope_polygon,
    ptope_vertices,
)
from .multiorder import TransformPlan, reach_intersection, reach_parallelotope, reach_union
from .oracle import (
    RegionIntersection,
    audit_containment,
    backward_witnesses,
    sample_endpoints,
)
from .sysdef import reverse_time


@dataclasses.dataclass
class ReachOutcome:
    """Everything a pipeline run produced, ready for serialization."""

    kind: str  # box | parallelotope | intersection | union
    boxes: list = dataclasses.field(default_factory=list)
    parallelotopes: list = dataclasses.field(default_factory=list)
    intersection: object = None
    areas: list = dataclasses.field(default_factory=list)

    def audit_region(self):
        if self.kind == "box":
            return self.boxes[0][1]
        if self.kind == "parallelotope":
            return self.parallelotopes[0]
        if self.kind == "intersection":
            return RegionIntersection(tuple(self.parallelotopes))
        return list(self.parallelotopes)


def _initial_vertices(cfg: ProblemConfig):
    init = cfg.initial_set
    if isinstance(init, Box):
        return init.corners()
    if isinstance(init, Parallelotope):
        return ptope_vertices(init)
    if isinstance(init, list):
        return init
    raise ConfigError("transform plans need box, parallelotope, or vertex input",
                      "initial_set")


def run_reach(cfg: ProblemConfig):
    """Dispatch the configured pipeline and collect its outputs."""
    system = cfg.system
    spec = cfg.spec
    if cfg.transforms is not None:
        plan = TransformPlan(tuple(cfg.transforms), spec,
                             (cfg.method,) * len(cfg.transforms))
        result = reach_intersection(system, plan, _initial_vertices(cfg),
                                    **cfg.method_options)
        return ReachOutcome(
            kind="intersection",
            parallelotopes=result.parallelotopes,
            intersection=result.intersection,
            areas=result.areas,
        )
    init = cfg.initial_set
    if isinstance(init, Box):
        if spec.direction == "backward":
            d = make_decomposition(reverse_time(system), cfg.method,
                                   **cfg.method_options)
            box = backward_reach_box(system, d, init, spec)
        else:
            d = make_decomposition(system, cfg.method, **cfg.method_options)
            box = forward_reach_box(system, d, init, spec)
        return ReachOutcome(kind="box", boxes=[(spec.horizon, box)])
    if isinstance(init, Parallelotope):
        ptope = reach_parallelotope(system, init.shape, init, spec, cfg.method,
                                    **cfg.method_options)
        return ReachOutcome(kind="parallelotope", parallelotopes=[ptope])
    if isinstance(init, UnionInitialSet):
        ptopes = reach_union(system, init, spec, cfg.method, **cfg.method_options)
        return ReachOutcome(kind="union", parallelotopes=ptopes)
    # bare vertex polytope without transforms: bound it by its own hull box
    verts = np.array([np.asarray(v) for v in init])
    box0 = Box(verts.min(axis=0), verts.max(axis=0))
    if spec.direction == "backward":
        d = make_decomposition(reverse_time(system), cfg.method, **cfg.method_options)
        box = backward_reach_box(system, d, box0, spec)
    else:
        d = make_decomposition(system, cfg.method, **cfg.method_options)
        box = forward_reach_box(system, d, box0, spec)
    return ReachOutcome(kind="box", boxes=[(spec.horizon, box)])


def _initial_set_jsonable(cfg: ProblemConfig):
    init = cfg.initial_set
    if isinstance(init, list):
        return {"type": "vertices", "points": [list(map(float, v)) for v in init]}
    out = init.to_jsonable()
    out["type"] = cfg.initial_kind
    return out


def _method_options_jsonable(options):
    out = {}
    for key, value in options.items():
        if isinstance(value, Box):
            out[key] = value.to_jsonable()
        else:
            out[key] = value
    return out


_RESULT_SCHEMA = {
    "meta": dict,
    "system": dict,
    "initial_set": dict,
    "method": dict,
    "boxes": list,
    "parallelotopes": list,
}


def validate_result_document(doc):
    """Check a reach result document against the published schema.

    Raises ConfigError on missing keys or wrong shapes; returns the document.
    """
    for key, kind in _RESULT_SCHEMA.items():
        if key not in doc:
            raise ConfigError(f"missing required key {key!r}", "result")
        if not isinstance(doc[key], kind):
            raise ConfigError(f"expected {kind.__name__}", f"result.{key}")
    for key in ("tool", "version", "timestamp", "seed", "dt", "horizon",
                "direction"):
        if key not in doc["meta"]:
            raise ConfigError(f"missing key {key!r}", "result.meta")
    for i, box in enumerate(doc["boxes"]):
        if not all(k in box for k in ("t", "lo", "hi")):
            raise ConfigError("box needs t/lo/hi", f"result.boxes[{i}]")
        if len(box["lo"]) != len(box["hi"]):
            raise ConfigError("lo/hi lengths differ", f"result.boxes[{i}]")
    for i, ptope in enumerate(doc["parallelotopes"]):
        if not all(k in ptope for k in ("shape", "lo", "hi")):
            raise ConfigError("parallelotope needs shape/lo/hi",
                              f"result.parallelotopes[{i}]")
    if "area_curve" in doc:
        for i, pair in enumerate(doc["area_curve"]):
            if len(pair) != 2:
                raise ConfigError("expected (k, area) pairs",
                                  f"result.area_curve[{i}]")
    return doc


def result_json(cfg: ProblemConfig, outcome: ReachOutcome, seed, timestamp=None):
    doc = {
        "meta": {
            "tool": "mmreach",
            "version": __version__,
            "timestamp": timestamp if timestamp is not None else time.time(),
            "seed": seed,
            "dt": cfg.spec.dt,
            "horizon": cfg.spec.horizon,
            "direction": cfg.spec.direction,
        },
        "system": {
            "name": cfg.system.name,
            "n": cfg.system.n,
            "m": cfg.system.m,
            "field": cfg.system.field_sources(),
            "w_lo": [float(v) for v in cfg.system.dist.lo],
            "w_hi": [float(v) for v in cfg.system.dist.hi],
        },
        "initial_set": _initial_set_jsonable(cfg),
        "method": {
            "decomposition": cfg.method,
            "kind": outcome.kind,
            "options": _method_options_jsonable(cfg.method_options),
        },
        "boxes": [
            {"t": t, "lo": [float(v) for v in box.lo], "hi": [float(v) for v in box.hi]}
            for t, box in outcome.boxes
        ],
        "parallelotopes": [p.to_jsonable() for p in outcome.parallelotopes],
    }
    if outcome.intersection is not None:
        doc["intersection_polygon"] = outcome.intersection.to_jsonable()
    if outcome.areas:
        doc["area_curve"] = [[k + 1, a] for k, a in enumerate(outcome.areas)]
    return doc


def _write_outputs(cfg: ProblemConfig, outcome: ReachOutcome, doc, out_dir, quiet):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result_path = out / "result.json"
    result_path.write_text(json.dumps(doc, indent=2) + "\n")
    written = [result_path]
    for idx, ptope in enumerate(outcome.parallelotopes, start=1):
        if ptope.dim == 2:
            path = out / f"parallelotope_{idx:02d}.txt"
            poly = ptope_polygon(ptope)
            np.savetxt(path, poly.vertices, fmt="%.17g")
            written.append(path)
    if outcome.intersection is not None:
        path = out / "intersection.txt"
        np.savetxt(path, outcome.intersection.vertices, fmt="%.17g")
        written.append(path)
    if outcome.areas:
        path = out / "area_curve.csv"
        with path.open("w") as fh:
            fh.write("k,area\n")
            for k, a in enumerate(outcome.areas, start=1):
                fh.write(f"{k},{a:.17g}\n")
        written.append(path)
    if not quiet:
        for path in written:
            print(f"wrote {path}")
    return written


def _print_summary(outcome: ReachOutcome, quiet):
    if quiet:
        return
    for t, box in outcome.boxes:
        print(f"box at t={t:.17g}: lo={[float(v) for v in box.lo]} hi={[float(v) for v in box.hi]}")
    for idx, p in enumerate(outcome.parallelotopes, start=1):
        area = ptope_polygon(p).area() if p.dim == 2 else float("nan")
        print(f"parallelotope {idx}: lo={[float(v) for v in p.coords.lo]} "
              f"hi={[float(v) for v in p.coords.hi]} area={area:.6g}")
    if outcome.areas:
        print(f"intersection area: {outcome.areas[-1]:.6g}")


def _scaled_region(region, scale):
    """Shrink an audit region about its center (debug aid for verify)."""
    if scale == 1.0:
        return region
    def shrink(obj):
        if isinstance(obj, Box):
            c = obj.center
            return Box(c - scale * (c - obj.lo), c + scale * (obj.hi - c))
        if isinstance(obj, Parallelotope):
            return Parallelotope(obj.shape, shrink(obj.coords))
        raise ConfigError(f"cannot scale region of type {type(obj).__name__}")
    if isinstance(region, RegionIntersection):
        return RegionIntersection(tuple(shrink(p) for p in region.members))
    if isinstance(region, list):
        return [shrink(p) for p in region]
    return shrink(region)


def cmd_check(args):
    cfg = load_config(args.config)
    if not args.quiet:
        print(f"configuration OK: system n={cfg.system.n} m={cfg.system.m}, "
              f"initial set {cfg.initial_kind}, horizon {cfg.spec.horizon}, "
              f"direction {cfg.spec.direction}")
    return 0


def _apply_overrides(cfg: ProblemConfig, args):
    if args.dt is not None:
        cfg = dataclasses.replace(
            cfg, spec=ReachSpec(cfg.spec.horizon, args.dt, cfg.spec.direction)
        )
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, sampling=dataclasses.replace(cfg.sampling, seed=args.seed)
        )
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    return cfg


def cmd_reach(args):
    cfg = _apply_overrides(load_config(args.config), args)
    outcome = run_reach(cfg)
    doc = result_json(cfg, outcome, cfg.sampling.seed)
    _write_outputs(cfg, outcome, doc, cfg.output_dir, args.quiet)
    _print_summary(outcome, args.quiet)
    return 0


def cmd_verify(args):
    cfg = _apply_overrides(load_config(args.config), args)
    outcome = run_reach(cfg)
    region = _scaled_region(outcome.audit_region(), args.debug_scale)
    if cfg.spec.direction == "backward":
        if cfg.search_box is None:
            raise ConfigError("backward verify needs sampling.search_lo/search_hi")
        forward_spec = ReachSpec(cfg.spec.horizon, cfg.spec.dt, "forward")
        points = backward_witnesses(cfg.system, cfg.initial_set, forward_spec,
                                    cfg.sampling, cfg.search_box)
        divergent = 0
    else:
        init = cfg.initial_set
        if isinstance(init, list):
            # the bound covers the polytope spanned by the vertices, so the
            # audit must sample exactly that hull
            verts = np.array([np.asarray(v) for v in init])
            if len(verts) == 1:
                init = Box(verts[0], verts[0])
            elif cfg.system.n == 2:
                init = convex_hull_2d(verts)
            else:
                raise ConfigError(
                    "verify supports vertex initial sets only for planar systems"
                )
        result = sample_endpoints(cfg.system, init, cfg.spec, cfg.sampling)
        points, divergent = result.points, result.divergent
    report = audit_containment(points, region)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_jsonable()
    doc["divergent"] = divergent
    doc["debug_scale"] = args.debug_scale
    (out / "verify_report.json").write_text(json.dumps(doc, indent=2) + "\n")
    if args.save_endpoints:
        header = ",".join(f"x{i + 1}" for i in range(cfg.system.n))
        np.savetxt(out / "endpoints.csv", points, delimiter=",", header=header,
                   comments="", fmt="%.17g")
    if not args.quiet:
        print(f"audited {report.total} points: {report.violations} violations, "
              f"worst margin {report.worst_margin:.3e}")
    return 0 if report.violations == 0 else 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmreach",
        description="Reachable-set over-approximation via monotone embeddings",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, extra in (
        ("check", cmd_check, False),
        ("reach", cmd_reach, True),
        ("verify", cmd_verify, True),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help=f"config file path or preset name {preset_names()}")
        p.add_argument("--quiet", action="store_true")
        if extra:
            p.add_argument("--seed", type=int, default=None,
                           help="override sampling seed")
            p.add_argument("--dt", type=float, default=None,
                           help="override integration step")
            p.add_argument("--out", default=None, help="output directory")
        if name == "verify":
            p.add_argument("--debug-scale", type=float, default=1.0,
                           help="shrink the audited region (plant a failure)")
            p.add_argument("--save-endpoints", action="store_true",
                           help="write the sampled endpoints to endpoints.csv")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except MmreachError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
