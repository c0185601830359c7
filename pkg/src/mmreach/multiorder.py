"""Parallelotope reachability under linear state transformations.

A decomposition for the transformed dynamics bounds reachable sets of the
original system by parallelotopes; several transformations intersect to a
tighter polytope, and polytopic initial sets split into parallelotope unions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .decomp import make_decomposition
from .embed import ReachSpec, backward_reach_box, forward_reach_box
from .errors import DimensionMismatchError, EmptyIntersectionError
from .geometry import (
    Parallelotope,
    Polygon2D,
    UnionInitialSet,
    bounding_coords,
    clip_intersection_2d,
    ptope_polygon,
)
from .sysdef import reverse_time, transform

__all__ = [
    "TransformPlan",
    "UnionInitialSet",
    "IntersectionResult",
    "reach_parallelotope",
    "reach_intersection",
    "reach_union",
    "default_transform_family",
]


@dataclass(frozen=True)
class TransformPlan:
    """Shape matrices to apply, each with a decomposition method tag."""

    transforms: tuple
    spec: ReachSpec
    methods: tuple = ()

    def __post_init__(self):
        transforms = tuple(np.array(t, dtype=float) for t in self.transforms)
        if not transforms:
            raise DimensionMismatchError("transform plan is empty")
        methods = tuple(self.methods) if self.methods else ("tight",) * len(transforms)
        if len(methods) != len(transforms):
            raise DimensionMismatchError(
                f"{len(methods)} method tags for {len(transforms)} transforms"
            )
        for t in transforms:
            t.flags.writeable = False
        object.__setattr__(self, "transforms", transforms)
        object.__setattr__(self, "methods", methods)


def reach_parallelotope(system, shape, x0: Parallelotope, spec: ReachSpec,
                        method="tight", **method_options):
    """Parallelotope over-approximation of the reachable set from ``x0``.

    Builds the transformed dynamics for ``shape``, constructs the requested
    decomposition (tight by default), and integrates its embedding in
    transformed coordinates. ``spec.direction`` selects forward or backward
    reachability; ``x0.shape`` must equal ``shape``.
    """
    shape = np.asarray(shape, dtype=float)
    if not np.allclose(x0.shape, shape, rtol=0.0, atol=1e-12):
        raise DimensionMismatchError(
            "initial parallelotope shape differs from the requested transform"
        )
    trans = transform(system, shape)
    if spec.direction == "backward":
        d_neg = make_decomposition(reverse_time(trans), method, **method_options)
        box = backward_reach_box(trans, d_neg, x0.coords, spec)
    else:
        d = make_decomposition(trans, method, **method_options)
        box = forward_reach_box(trans, d, x0.coords, spec)
    return Parallelotope(shape, box)


@dataclass
class IntersectionResult:
    """Per-transform parallelotopes plus their running intersection."""

    parallelotopes: list
    polygons: list
    intersection: Polygon2D | None
    areas: list
    volume: float | None = None
    volume_ci: float | None = None
    initial_sets: list = field(default_factory=list)

    def to_jsonable(self):
        out = {
            "parallelotopes": [p.to_jsonable() for p in self.parallelotopes],
            "area_curve": [[k + 1, a] for k, a in enumerate(self.areas)],
        }
        if self.intersection is not None:
            out["intersection_polygon"] = self.intersection.to_jsonable()
        if self.volume is not None:
            out["volume"] = self.volume
            out["volume_ci95"] = self.volume_ci
        return out


def reach_intersection(system, plan: TransformPlan, x0_vertices,
                       volume_samples=10**6, seed=0, **method_options):
    """Reach under every transform of the plan and intersect the results.

    The initial set is the polytope spanned by ``x0_vertices``; each
    transform gets the smallest parallelotope of its own shape containing
    those vertices. For planar systems the running intersection and its
    area curve are exact (half-plane clipping); higher dimensions report a
    Monte-Carlo volume of the intersection instead.
    """
    vertices = [np.asarray(v, dtype=float) for v in x0_vertices]
    ptopes = []
    initial_sets = []
    polygons = []
    areas = []
    running = None
    planar = system.n == 2
    for shape, method in zip(plan.transforms, plan.methods):
        coords = bounding_coords(vertices, shape)
        x0 = Parallelotope(shape, coords)
        initial_sets.append(x0)
        ptope = reach_parallelotope(system, shape, x0, plan.spec, method,
                                    **method_options)
        ptopes.append(ptope)
        if planar:
            poly = ptope_polygon(ptope)
            polygons.append(poly)
            running = poly if running is None else clip_intersection_2d([running, poly])
            if running is None:
                raise EmptyIntersectionError(
                    "intersection of over-approximations is empty; every member "
                    "must contain the reachable set, so an upstream step is wrong"
                )
            areas.append(running.area())
    result = IntersectionResult(
        parallelotopes=ptopes,
        polygons=polygons,
        intersection=running,
        areas=areas,
        initial_sets=initial_sets,
    )
    if not planar:
        volume, ci = oracle.intersection_volume_mc(ptopes, volume_samples, seed)
        result.volume = volume
        result.volume_ci = ci
    return result


def reach_union(system, union: UnionInitialSet, spec: ReachSpec,
                method="tight", **method_options):
    """Per-member parallelotope reach; the result list over-approximates the
    reachable set of the union (reach commutes with unions)."""
    return [
        reach_parallelotope(system, member.shape, member, spec, method,
                            **method_options)
        for member in union.members
    ]


def default_transform_family(count):
    """``count`` planar rotations at angles pi*j/(2*count), j = 0..count-1.

    Evenly covers the quarter turn of distinct box orientations; the first
    member is the identity.
    """
    if count < 1:
        raise DimensionMismatchError(f"count must be >= 1, got {count}")
    out = []
    for j in range(count):
        theta = np.pi * j / (2.0 * count)
        c, s = np.cos(theta), np.sin(theta)
        out.append(np.array([[c, -s], [s, c]]))
    return out
