"""Embedding systems and fixed-step integration for box reachability.

One simulation of the 2n-dimensional embedding system bounds every disturbed
trajectory of the underlying system (forward in time); integrating the
embedding of the time-reversed field bounds backward reachable sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomp import Decomposition
from .errors import (
    DimensionMismatchError,
    DivergenceError,
    EvalError,
    StepOrderError,
)
from .geometry import Box, EmbeddingState

ORDER_CLIP_TOL = 1e-9
MAX_STEPS = 10**8
DEFAULT_DT = 1e-3


@dataclass(frozen=True)
class ReachSpec:
    """Horizon, step size, and direction of a reachability run."""

    horizon: float
    dt: float = DEFAULT_DT
    direction: str = "forward"

    def __post_init__(self):
        if self.horizon < 0:
            raise DimensionMismatchError(f"horizon must be >= 0, got {self.horizon}")
        if self.dt <= 0:
            raise DimensionMismatchError(f"dt must be positive, got {self.dt}")
        if self.horizon > 0 and self.dt > self.horizon:
            raise DimensionMismatchError(
                f"dt={self.dt} exceeds horizon={self.horizon}"
            )
        if self.horizon / self.dt > MAX_STEPS:
            raise DimensionMismatchError(
                f"horizon/dt = {self.horizon / self.dt:.3e} exceeds {MAX_STEPS:.0e} steps"
            )
        if self.direction not in ("forward", "backward"):
            raise DimensionMismatchError(
                f"direction must be 'forward' or 'backward', got {self.direction!r}"
            )


@dataclass(frozen=True)
class Trajectory:
    """Sampled trajectory: strictly increasing times, one state row per time."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        states = np.array(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] != times.shape[0]:
            raise DimensionMismatchError(
                f"expected one state row per time: {states.shape} vs {times.shape}"
            )
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise DimensionMismatchError("times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(states))):
            raise DimensionMismatchError("trajectory contains non-finite entries")
        times.flags.writeable = False
        states.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def final_time(self):
        return float(self.times[-1])

    def to_csv(self, path):
        dim = self.states.shape[1]
        header = "time," + ",".join(f"s{i + 1}" for i in range(dim))
        rows = np.column_stack([self.times, self.states])
        np.savetxt(path, rows, delimiter=",", header=header, comments="",
                   fmt="%.17g")


class EmbeddingFunction:
    """Disturbance-free 2n-dimensional field built from a decomposition.

    Evaluation at stacked (lower, upper) returns
    (d(lower, w_lo, upper, w_hi), d(upper, w_hi, lower, w_lo)).
    """

    def __init__(self, decomposition: Decomposition):
        self.decomposition = decomposition
        self.n = decomposition.n
        self.w_lo = [float(v) for v in decomposition.system.dist.lo]
        self.w_hi = [float(v) for v in decomposition.system.dist.hi]

    def __call__(self, lower, upper):
        d = self.decomposition
        lower = list(lower)
        upper = list(upper)
        out = np.empty(2 * self.n)
        for i in range(self.n):
            out[i] = d.evaluate_component(i, lower, self.w_lo, upper, self.w_hi)
            out[self.n + i] = d.evaluate_component(i, upper, self.w_hi, lower, self.w_lo)
        return out


def embedding_function(d: Decomposition):
    """Embedding field with the disturbance bounds of d's system baked in."""
    return EmbeddingFunction(d)


def _split_ordered(a, n, context):
    """Split a stacked embedding state, clipping rounding-scale order noise.

    Violations within 1e-9 are snapped to exact order (both endpoints move to
    the midpoint); anything larger aborts, since a real violation signals a
    bad decomposition or step size.
    """
    lower = a[:n].copy()
    upper = a[n:].copy()
    diff = lower - upper
    worst = float(diff.max())
    if worst > ORDER_CLIP_TOL:
        raise StepOrderError(
            f"order violation {worst:.3e} {context}; retry with a smaller dt"
        )
    if worst > 0.0:
        mid = 0.5 * (lower + upper)
        mask = diff > 0.0
        lower[mask] = mid[mask]
        upper[mask] = mid[mask]
    return lower, upper


def integrate(E: EmbeddingFunction, a0: EmbeddingState, spec: ReachSpec):
    """Classical fixed-step 4th-order integration of the embedding system.

    Every stored state keeps lower <= upper exactly; the final time equals
    the horizon (a shorter last step absorbs any remainder). Non-finite
    states raise DivergenceError with the last valid time.
    """
    n = E.n
    if a0.dim != n:
        raise DimensionMismatchError(
            f"initial state has dimension {a0.dim}, embedding expects {n}"
        )

    def rhs(a, t):
        lower, upper = _split_ordered(a, n, f"inside a step near t={t:.6g}")
        return E(lower, upper)

    a = a0.concat()
    times = [0.0]
    states = [a.copy()]
    if spec.horizon == 0.0:
        return Trajectory(np.array(times), np.array(states))

    n_full = int(np.floor(spec.horizon / spec.dt + 1e-12))
    remainder = spec.horizon - n_full * spec.dt
    if remainder < 1e-12 * max(1.0, spec.horizon):
        remainder = 0.0
    steps = [spec.dt] * n_full + ([remainder] if remainder > 0.0 else [])

    t = 0.0
    for h in steps:
        try:
            k1 = rhs(a, t)
            k2 = rhs(a + 0.5 * h * k1, t + 0.5 * h)
            k3 = rhs(a + 0.5 * h * k2, t + 0.5 * h)
            k4 = rhs(a + h * k3, t + h)
        except EvalError as exc:
            raise DivergenceError(
                f"embedding field diverged near t={t:.6g}: {exc}",
                last_time=times[-1],
            ) from exc
        a = a + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        if not np.all(np.isfinite(a)):
            raise DivergenceError(
                f"embedding state diverged near t={t:.6g}", last_time=times[-1]
            )
        lower, upper = _split_ordered(a, n, f"after the step to t={t:.6g}")
        a = np.concatenate([lower, upper])
        times.append(t)
        states.append(a.copy())
    # the step list sums to the horizon up to rounding; pin the final time
    times[-1] = spec.horizon
    return Trajectory(np.array(times), np.array(states))


def trajectory_boxes(traj: Trajectory):
    """Per-time boxes of an embedding trajectory."""
    n = traj.states.shape[1] // 2
    return [Box(row[:n], row[n:]) for row in traj.states]


def forward_reach_box(system, d: Decomposition, x0: Box, spec: ReachSpec):
    """Hyperrectangular over-approximation of the forward reachable set."""
    if spec.direction != "forward":
        raise DimensionMismatchError("forward_reach_box requires a forward spec")
    if d.system is not system:
        raise DimensionMismatchError(
            "decomposition was built for a different system"
        )
    traj = integrate(embedding_function(d), EmbeddingState(x0.lo, x0.hi), spec)
    final = traj.final_state
    return Box(final[: system.n], final[system.n:])


def backward_reach_box(system, d_neg: Decomposition, x0: Box, spec: ReachSpec):
    """Hyperrectangular over-approximation of the backward reachable set.

    ``d_neg`` must decompose the time-reversed field; its diagonal is
    spot-checked against -F before integrating.
    """
    if spec.direction != "backward":
        raise DimensionMismatchError("backward_reach_box requires a backward spec")
    probes = [x0.center, x0.lo, x0.hi]
    wc = list(system.dist.center)
    for p in probes:
        neg = d_neg.evaluate(list(p), wc, list(p), wc)
        ref = -system.eval_field(list(p), wc)
        if float(np.max(np.abs(neg - ref))) > 1e-6:
            raise EvalError(
                "d_neg does not match the time-reversed field on the diagonal",
                f"at x={list(p)}",
            )
    traj = integrate(embedding_function(d_neg), EmbeddingState(x0.lo, x0.hi), spec)
    final = traj.final_state
    return Box(final[: system.n], final[system.n:])
