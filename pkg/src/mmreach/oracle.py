"""Monte-Carlo trajectory sampling, containment audits, and occupancy areas.

Ground truth for the over-approximation pipeline: endpoints of randomly
disturbed trajectories must land inside computed regions, and grid occupancy
over endpoint clouds estimates the area of the true reachable set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .embed import ReachSpec, Trajectory
from .errors import DimensionMismatchError
from .geometry import Box, Parallelotope, Polygon2D, UnionInitialSet, ptope_vertices

log = logging.getLogger(__name__)

CONTAINMENT_TOL = 1e-9
DEFAULT_CELL = 0.02

_CHUNK = 250_000
_CORNER_LEVEL_PROB = 0.2  # per-segment chance of an extreme disturbance level


@dataclass(frozen=True)
class SampleConfig:
    """How to draw trajectory samples.

    ``switch_count`` piecewise-constant disturbance switches are placed
    uniformly over the horizon (snapped to the integration grid, which keeps
    the signals admissible). ``init_mode`` is "uniform" or
    "corners_plus_uniform"; the latter spends the first samples on corner
    initial states paired with the two extreme constant disturbance signals.
    """

    count: int
    seed: int = 0
    switch_count: int = 4
    init_mode: str = "uniform"

    def __post_init__(self):
        if self.count < 1:
            raise DimensionMismatchError(f"count must be >= 1, got {self.count}")
        if self.switch_count < 0:
            raise DimensionMismatchError(
                f"switch_count must be >= 0, got {self.switch_count}"
            )
        if self.init_mode not in ("uniform", "corners_plus_uniform"):
            raise DimensionMismatchError(
                f"init_mode must be 'uniform' or 'corners_plus_uniform', "
                f"got {self.init_mode!r}"
            )


@dataclass
class SampleResult:
    """Endpoint cloud with the number of excluded divergent trajectories."""

    points: np.ndarray
    divergent: int
    requested: int

    def __len__(self):
        return len(self.points)

    def to_csv(self, path):
        header = ",".join(f"x{i + 1}" for i in range(self.points.shape[1]))
        np.savetxt(path, self.points, delimiter=",", header=header,
                   comments="", fmt="%.17g")


@dataclass(frozen=True)
class RegionIntersection:
    """Audit region meaning membership in every member (lists mean unions)."""

    members: tuple


@dataclass
class ContainmentReport:
    """Outcome of a membership audit of sampled points against a region."""

    total: int
    violations: int
    worst_margin: float
    witnesses: list = field(default_factory=list)

    @property
    def ok(self):
        return self.violations == 0

    def to_jsonable(self):
        return {
            "total": self.total,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "witnesses": [list(map(float, w)) for w in self.witnesses],
        }


def _step_sizes(horizon, dt):
    n_full = int(np.floor(horizon / dt + 1e-12))
    remainder = horizon - n_full * dt
    if remainder < 1e-12 * max(1.0, horizon):
        remainder = 0.0
    sizes = [dt] * n_full
    if remainder > 0.0:
        sizes.append(remainder)
    return np.array(sizes)


def _region_corners(region):
    if isinstance(region, Box):
        return region.corners()
    if isinstance(region, Parallelotope):
        return ptope_vertices(region)
    if isinstance(region, UnionInitialSet):
        return [v for m in region.members for v in ptope_vertices(m)]
    if isinstance(region, Polygon2D):
        return list(region.vertices)
    raise DimensionMismatchError(f"cannot enumerate corners of {type(region).__name__}")


def _sample_initial(region, count, rng):
    """Uniform initial states: direct coordinate sampling for boxes and
    parallelotopes, rejection sampling from the bounding box for unions."""
    if isinstance(region, Box):
        return rng.uniform(region.lo, region.hi, size=(count, region.dim))
    if isinstance(region, Parallelotope):
        coords = rng.uniform(
            region.coords.lo, region.coords.hi, size=(count, region.dim)
        )
        return coords @ region.shape.T
    if isinstance(region, UnionInitialSet):
        bbox = region.bounding_box()

        def inside_union(batch):
            inside = np.zeros(len(batch), dtype=bool)
            for member in region.members:
                coords = batch @ member.shape_inv.T
                inside |= np.all(
                    (coords >= member.coords.lo) & (coords <= member.coords.hi),
                    axis=1,
                )
            return inside

        return _rejection_sample(rng, bbox, count, inside_union)
    if isinstance(region, Polygon2D):
        verts = region.vertices
        if len(verts) == 1:
            return np.tile(verts[0], (count, 1))
        if len(verts) == 2:  # degenerate hull: sample along the segment
            t = rng.uniform(0.0, 1.0, size=(count, 1))
            return verts[0] + t * (verts[1] - verts[0])
        bbox = Box(verts.min(axis=0), verts.max(axis=0))
        edges = [(verts[i], verts[(i + 1) % len(verts)])
                 for i in range(len(verts))]

        def inside_poly(batch):
            ok = np.ones(len(batch), dtype=bool)
            for a, b in edges:
                e = b - a
                ok &= (e[0] * (batch[:, 1] - a[1])
                       - e[1] * (batch[:, 0] - a[0])) >= -1e-12
            return ok

        return _rejection_sample(rng, bbox, count, inside_poly)
    raise DimensionMismatchError(f"cannot sample from {type(region).__name__}")


def _rejection_sample(rng, bbox, count, accept):
    out = np.empty((count, bbox.dim))
    have = 0
    while have < count:
        batch = rng.uniform(bbox.lo, bbox.hi, size=(max(count, 1024), bbox.dim))
        accepted = batch[accept(batch)]
        take = min(count - have, len(accepted))
        out[have : have + take] = accepted[:take]
        have += take
    return out


def _integrate_batch(system, X, levels, switch_steps, sizes):
    """Vectorized fixed-step 4th-order integration with piecewise-constant
    disturbances. Returns (endpoints, alive mask)."""
    N = X.shape[0]
    alive = np.ones(N, dtype=bool)
    rows = np.arange(N)
    with np.errstate(all="ignore"):
        for s, h in enumerate(sizes):
            seg = (switch_steps <= s).sum(axis=1)
            W = levels[rows, seg, :]
            k1 = system.eval_field_batch(X, W)
            k2 = system.eval_field_batch(X + 0.5 * h * k1, W)
            k3 = system.eval_field_batch(X + 0.5 * h * k2, W)
            k4 = system.eval_field_batch(X + h * k3, W)
            X_new = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            good = np.all(np.isfinite(X_new), axis=1)
            X = np.where(good[:, None], X_new, X)
            alive &= good
    return X, alive


def _draw_signals(rng, count, segments, m, w_lo, w_hi):
    levels = rng.uniform(w_lo, w_hi, size=(count, segments, m))
    pick = rng.uniform(size=(count, segments))
    levels[pick < 0.5 * _CORNER_LEVEL_PROB] = w_lo
    levels[(pick >= 0.5 * _CORNER_LEVEL_PROB) & (pick < _CORNER_LEVEL_PROB)] = w_hi
    return levels


def sample_endpoints(system, x0, spec: ReachSpec, cfg: SampleConfig):
    """Endpoints of ``cfg.count`` disturbed trajectories from ``x0``.

    Deterministic under a fixed seed. Divergent trajectories are excluded
    and counted in the result.
    """
    sizes = _step_sizes(spec.horizon, spec.dt)
    n, m = system.n, system.m
    w_lo, w_hi = system.dist.lo, system.dist.hi
    segments = cfg.switch_count + 1
    rng = np.random.default_rng(cfg.seed)

    starts_blocks = []
    levels_blocks = []
    switches_blocks = []
    remaining = cfg.count

    if cfg.init_mode == "corners_plus_uniform":
        corners = _region_corners(x0)
        block = []
        block_levels = []
        for corner in corners:
            for level in (w_lo, w_hi):
                if len(block) >= remaining:
                    break
                block.append(np.asarray(corner, dtype=float))
                block_levels.append(np.tile(level, (segments, 1)))
        if block:
            starts_blocks.append(np.array(block))
            levels_blocks.append(np.array(block_levels))
            switches_blocks.append(
                np.zeros((len(block), cfg.switch_count), dtype=int)
            )
            remaining -= len(block)

    if remaining > 0:
        starts_blocks.append(_sample_initial(x0, remaining, rng))
        levels_blocks.append(_draw_signals(rng, remaining, segments, m, w_lo, w_hi))
        if cfg.switch_count > 0:
            raw = rng.uniform(0.0, spec.horizon, size=(remaining, cfg.switch_count))
            switches_blocks.append(
                np.clip(np.round(raw / spec.dt).astype(int), 0, len(sizes))
            )
        else:
            switches_blocks.append(np.zeros((remaining, 0), dtype=int))

    starts = np.concatenate(starts_blocks)
    levels = np.concatenate(levels_blocks)
    switches = np.concatenate(switches_blocks)

    endpoints = []
    divergent = 0
    if len(sizes) == 0:  # zero horizon
        return SampleResult(points=starts, divergent=0, requested=cfg.count)
    for start in range(0, cfg.count, _CHUNK):
        stop = min(start + _CHUNK, cfg.count)
        X, alive = _integrate_batch(
            system, starts[start:stop].copy(), levels[start:stop],
            switches[start:stop], sizes,
        )
        divergent += int((~alive).sum())
        endpoints.append(X[alive])
    points = np.concatenate(endpoints) if endpoints else np.empty((0, n))
    if divergent:
        log.warning("excluded %d divergent trajectories of %d", divergent, cfg.count)
    return SampleResult(points=points, divergent=divergent, requested=cfg.count)


def _margins_batch(region, pts):
    if isinstance(region, Box):
        return np.minimum(pts - region.lo, region.hi - pts).min(axis=1)
    if isinstance(region, Parallelotope):
        coords = pts @ region.shape_inv.T
        return np.minimum(
            coords - region.coords.lo, region.coords.hi - coords
        ).min(axis=1)
    if isinstance(region, UnionInitialSet):
        stacked = np.stack([_margins_batch(m, pts) for m in region.members])
        return stacked.max(axis=0)
    if isinstance(region, (list, tuple)):
        stacked = np.stack([_margins_batch(m, pts) for m in region])
        return stacked.max(axis=0)
    if isinstance(region, RegionIntersection):
        stacked = np.stack([_margins_batch(m, pts) for m in region.members])
        return stacked.min(axis=0)
    if isinstance(region, Polygon2D):
        verts = region.vertices
        k = len(verts)
        best = np.full(len(pts), np.inf)
        for i in range(k):
            a, b = verts[i], verts[(i + 1) % k]
            e = b - a
            nrm = float(np.hypot(e[0], e[1]))
            if nrm <= 1e-12:
                continue
            d = (e[0] * (pts[:, 1] - a[1]) - e[1] * (pts[:, 0] - a[0])) / nrm
            best = np.minimum(best, d)
        return best
    raise DimensionMismatchError(f"unsupported region type {type(region).__name__}")


def audit_containment(points, region, tol=CONTAINMENT_TOL):
    """Membership of every point in the region, with signed margins.

    Margins are measured in the region's native (transformed) coordinates.
    Lists and unions take the best member; wrap members in
    RegionIntersection to require membership in all of them. Points with
    margin < -tol count as violations; up to 10 worst witnesses are recorded.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        pts = pts.reshape(-1, pts.shape[-1] if pts.ndim else 1)
    if len(pts) == 0:
        return ContainmentReport(total=0, violations=0, worst_margin=np.inf)
    margins = _margins_batch(region, pts)
    bad = margins < -tol
    violations = int(bad.sum())
    worst = float(margins.min())
    witnesses = []
    if violations:
        order = np.argsort(margins)
        for idx in order[: min(10, violations)]:
            witnesses.append(list(pts[idx]) + [float(margins[idx])])
    return ContainmentReport(
        total=len(pts), violations=violations, worst_margin=worst,
        witnesses=witnesses,
    )


def occupancy_area(points, cell=DEFAULT_CELL):
    """Occupied-cell area of a 2-D endpoint cloud: cells holding at least one
    point, times cell^2."""
    if cell <= 0:
        raise DimensionMismatchError(f"cell must be positive, got {cell}")
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return 0.0
    if pts.shape[1] != 2:
        raise DimensionMismatchError("occupancy area requires 2-D points")
    cells = np.floor(pts / cell).astype(np.int64)
    occupied = np.unique(cells, axis=0)
    return float(len(occupied)) * cell * cell


def backward_witnesses(system, x0: Parallelotope, spec: ReachSpec,
                       cfg: SampleConfig, search_box: Box):
    """Start states in ``search_box`` whose forward endpoint lands in ``x0``.

    Every returned point belongs to the true backward reachable set by
    construction, so it must lie inside any sound backward over-approximation.
    Returns an (k, n) array; logs a warning when no witnesses were found.
    """
    sizes = _step_sizes(spec.horizon, spec.dt)
    m = system.m
    w_lo, w_hi = system.dist.lo, system.dist.hi
    segments = cfg.switch_count + 1
    rng = np.random.default_rng(cfg.seed)

    found = []
    for start in range(0, cfg.count, _CHUNK):
        count = min(_CHUNK, cfg.count - start)
        starts = rng.uniform(search_box.lo, search_box.hi, size=(count, system.n))
        levels = _draw_signals(rng, count, segments, m, w_lo, w_hi)
        if cfg.switch_count > 0:
            raw = rng.uniform(0.0, spec.horizon, size=(count, cfg.switch_count))
            switches = np.clip(np.round(raw / spec.dt).astype(int), 0, len(sizes))
        else:
            switches = np.zeros((count, 0), dtype=int)
        X, alive = _integrate_batch(system, starts.copy(), levels, switches, sizes)
        coords = X @ x0.shape_inv.T
        inside = np.all(
            (coords >= x0.coords.lo - CONTAINMENT_TOL)
            & (coords <= x0.coords.hi + CONTAINMENT_TOL),
            axis=1,
        )
        found.append(starts[inside & alive])
    witnesses = np.concatenate(found) if found else np.empty((0, system.n))
    if len(witnesses) == 0:
        log.warning(
            "no backward witnesses found in %d samples; the target may be "
            "unreachable from the search box", cfg.count,
        )
    return witnesses


def simulate(system, x0, w, spec: ReachSpec):
    """Single trajectory under a constant or callable disturbance signal.

    ``w`` is either a constant vector or a callable t -> vector (evaluated at
    the stage times of each step).
    """
    sizes = _step_sizes(spec.horizon, spec.dt)
    w_of = w if callable(w) else (lambda _t, _w=[float(v) for v in w]: _w)
    x = [float(v) for v in x0]
    times = [0.0]
    states = [list(x)]
    t = 0.0
    for h in sizes:
        k1 = system.field_values(x, w_of(t))
        x2 = [x[i] + 0.5 * h * k1[i] for i in range(len(x))]
        k2 = system.field_values(x2, w_of(t + 0.5 * h))
        x3 = [x[i] + 0.5 * h * k2[i] for i in range(len(x))]
        k3 = system.field_values(x3, w_of(t + 0.5 * h))
        x4 = [x[i] + h * k3[i] for i in range(len(x))]
        k4 = system.field_values(x4, w_of(t + h))
        x = [
            x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(len(x))
        ]
        t += h
        times.append(t)
        states.append(list(x))
    if len(times) > 1:
        times[-1] = spec.horizon
    return Trajectory(np.array(times), np.array(states))


def intersection_volume_mc(ptopes, samples=10**6, seed=0):
    """Monte-Carlo volume of an intersection of parallelotopes.

    Samples uniformly in the intersection of the members' bounding boxes.
    Returns (volume, ci95).
    """
    if not ptopes:
        raise DimensionMismatchError("no parallelotopes given")
    los, his = [], []
    for p in ptopes:
        verts = np.array(ptope_vertices(p))
        los.append(verts.min(axis=0))
        his.append(verts.max(axis=0))
    lo = np.max(los, axis=0)
    hi = np.min(his, axis=0)
    if np.any(lo >= hi):
        return 0.0, 0.0
    box_vol = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(samples, len(lo)))
    inside = np.ones(samples, dtype=bool)
    for p in ptopes:
        coords = pts @ p.shape_inv.T
        inside &= np.all(
            (coords >= p.coords.lo) & (coords <= p.coords.hi), axis=1
        )
    frac = inside.mean()
    ci = 1.96 * float(np.sqrt(max(frac * (1.0 - frac), 0.0) / samples)) * box_vol
    return frac * box_vol, ci
