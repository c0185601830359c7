"""Decomposition functions: tight (optimization-based), Jacobian-sign,
monotone pass-through, user closed forms, and piecewise combination.

A decomposition d(x, w, xh, wh) agrees with the field on the diagonal, is
nondecreasing in (x, w) and nonincreasing in (xh, wh) off-diagonal. The
embedding machinery in :mod:`mmreach.embed` consumes these evaluators.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import exprlang
from .errors import (
    DimensionMismatchError,
    EvalError,
    NotMonotoneError,
    OrderError,
    SignIndefiniteError,
    SizeLimitError,
)
from .geometry import Box

OPTIMIZER_TOL = 1e-8
SIGN_FD_STEP = 1e-6
CHECK_SLACK = 1e-7

_GRID_COARSE = 3  # monotonicity probe lattice, per free coordinate
_GRID_DENSE = 9  # fallback search lattice, per free coordinate
_MAX_FREE_DIMS = 6
_DESCENT_MAX_ROUNDS = 500


def pair_order(x, w, xh, wh):
    """+1 when (x, w) <= (xh, wh), -1 for the reverse, OrderError otherwise."""
    fwd = all(a <= b for a, b in zip(x, xh)) and all(a <= b for a, b in zip(w, wh))
    if fwd:
        return 1
    rev = all(b <= a for a, b in zip(x, xh)) and all(b <= a for a, b in zip(w, wh))
    if rev:
        return -1
    raise OrderError(
        f"arguments are unordered: x={list(x)}, w={list(w)}, "
        f"xh={list(xh)}, wh={list(wh)}"
    )


def _sign_tol(f_plus, f_minus):
    return 1e-9 * max(1.0, abs(f_plus), abs(f_minus))


def _numeric_partial(system, i, is_state, j, x, w, h=SIGN_FD_STEP):
    """Central difference of F_i in one coordinate; returns (fd, zero_tol)."""
    target = list(x) if is_state else list(w)
    step = h * max(1.0, abs(target[j]))
    target[j] += step
    f_plus = (
        system.field_component(i, target, w)
        if is_state
        else system.field_component(i, x, target)
    )
    target[j] -= 2.0 * step
    f_minus = (
        system.field_component(i, target, w)
        if is_state
        else system.field_component(i, x, target)
    )
    return (f_plus - f_minus) / (2.0 * step), _sign_tol(f_plus, f_minus)


class Decomposition:
    """Evaluator d(x, w, xh, wh) with construction metadata.

    ``domain`` records the state box over which sign conditions were
    certified, when the construction is domain-dependent.
    """

    def __init__(self, system, method, component_fn, domain=None, meta=None):
        self.system = system
        self.method = method
        self.n = system.n
        self.m = system.m
        self.domain = domain
        self.meta = dict(meta or {})
        self._component_fn = component_fn

    def __repr__(self):
        return f"Decomposition(method={self.method!r}, n={self.n}, m={self.m})"

    def evaluate_component(self, i, x, w, xh, wh):
        value = self._component_fn(i, x, w, xh, wh)
        if not math.isfinite(value):
            raise EvalError(
                f"decomposition component {i + 1} is non-finite",
                f"at x={list(x)}, w={list(w)}, xh={list(xh)}, wh={list(wh)}",
            )
        return value

    def evaluate(self, x, w, xh, wh):
        x = [float(v) for v in x]
        w = [float(v) for v in w]
        xh = [float(v) for v in xh]
        wh = [float(v) for v in wh]
        if len(x) != self.n or len(xh) != self.n or len(w) != self.m or len(wh) != self.m:
            raise DimensionMismatchError("argument dimensions do not match system")
        return np.array(
            [self.evaluate_component(i, x, w, xh, wh) for i in range(self.n)]
        )

    def to_jsonable(self):
        out = {"method": self.method}
        if self.domain is not None:
            out["domain"] = self.domain.to_jsonable()
        out.update(
            {k: v for k, v in self.meta.items() if isinstance(v, (int, float, str, list))}
        )
        return out


# --- tight construction -------------------------------------------------------


def _tight_component(system, i, x, w, xh, wh):
    sign = pair_order(x, w, xh, wh)
    minimize = sign > 0
    y = list(x)
    z = list(w)
    free = []  # (target list, index, lo, hi)
    for j in range(system.n):
        if j == i:
            continue
        a, b = (x[j], xh[j]) if minimize else (xh[j], x[j])
        if b > a:
            free.append((y, j, a, b))
    for k in range(system.m):
        a, b = (w[k], wh[k]) if minimize else (wh[k], w[k])
        if b > a:
            free.append((z, k, a, b))

    fi = system.component_fn(i)
    if not free:
        return fi(y, z)

    corner = _probe_signs(y, z, free, fi, minimize)
    if corner is not None:
        for (target, idx, _, _), value in zip(free, corner):
            target[idx] = value
        return fi(y, z)
    return _grid_descent(system, i, y, z, free, fi, minimize)


def _probe_signs(y, z, free, fi, minimize):
    """Finite-difference signs on the 3^k probe lattice.

    Returns the induced corner when every free coordinate is sign-stable,
    else None.
    """
    k = len(free)
    levels = [(lo, 0.5 * (lo + hi), hi) for _, _, lo, hi in free]
    has_pos = [False] * k
    has_neg = [False] * k
    for assignment in itertools.product(range(_GRID_COARSE), repeat=k):
        for c in range(k):
            free[c][0][free[c][1]] = levels[c][assignment[c]]
        for c in range(k):
            target, idx = free[c][0], free[c][1]
            base = levels[c][assignment[c]]
            step = SIGN_FD_STEP * max(1.0, abs(base))
            target[idx] = base + step
            f_plus = fi(y, z)
            target[idx] = base - step
            f_minus = fi(y, z)
            target[idx] = base
            fd = f_plus - f_minus
            tol = _sign_tol(f_plus, f_minus) * 2.0 * step
            if fd > tol:
                has_pos[c] = True
            elif fd < -tol:
                has_neg[c] = True
            if has_pos[c] and has_neg[c]:
                return None
    corner = []
    for c, (_, _, lo, hi) in enumerate(free):
        nondecreasing = has_pos[c] or not has_neg[c]
        if minimize:
            corner.append(lo if nondecreasing else hi)
        else:
            corner.append(hi if nondecreasing else lo)
    return corner


def _grid_descent(system, i, y, z, free, fi, minimize):
    """Dense-grid search (vectorized over the lattice) plus coordinate
    descent refined to the optimizer tolerance."""
    k = len(free)
    if k > _MAX_FREE_DIMS:
        raise SizeLimitError(
            f"tight subproblem has {k} free coordinates; dense search refuses > {_MAX_FREE_DIMS}"
        )
    flip = 1.0 if minimize else -1.0
    axes = [np.linspace(lo, hi, _GRID_DENSE) for _, _, lo, hi in free]
    grids = np.meshgrid(*axes, indexing="ij")
    count = grids[0].size
    X = np.tile(np.array(y), (count, 1))
    W = np.tile(np.array(z), (count, 1))
    for c, (target, idx, _, _) in enumerate(free):
        col = grids[c].reshape(-1)
        if target is y:
            X[:, idx] = col
        else:
            W[:, idx] = col
    values = flip * system.component_batch_fn(i)(X, W)
    best = int(np.argmin(values))
    best_g = float(values[best])
    point = [float(grids[c].reshape(-1)[best]) for c in range(k)]

    for (target, idx, _, _), value in zip(free, point):
        target[idx] = value
    bounds = [(lo, hi) for _, _, lo, hi in free]
    steps = [(hi - lo) / (_GRID_DENSE - 1.0) for lo, hi in bounds]
    for _ in range(_DESCENT_MAX_ROUNDS):
        if max(steps) < OPTIMIZER_TOL:
            break
        improved = False
        for c in range(k):
            target, idx = free[c][0], free[c][1]
            lo, hi = bounds[c]
            for delta in (steps[c], -steps[c]):
                cand = min(hi, max(lo, point[c] + delta))
                if cand == point[c]:
                    continue
                target[idx] = cand
                g = flip * fi(y, z)
                if g < best_g:
                    best_g = g
                    point[c] = cand
                    improved = True
            target[idx] = point[c]
        if not improved:
            steps = [0.5 * s for s in steps]
    return flip * best_g


def tight_decomposition(system):
    """Optimization-defined decomposition: componentwise extremum of the
    field over the argument box with the own coordinate pinned.

    Coordinate-monotone subproblems (detected by finite-difference signs on a
    3^k probe lattice) resolve exactly at the induced corner; the rest fall
    back to a 9-per-axis grid search refined by coordinate descent to 1e-8.
    Evaluation at unordered argument pairs raises OrderError.
    """

    def component(i, x, w, xh, wh):
        return _tight_component(system, i, x, w, xh, wh)

    return Decomposition(system, "tight", component, meta={"optimizer_tol": OPTIMIZER_TOL})


# --- Jacobian-sign and monotone constructions ---------------------------------


def _sample_points(system, domain, samples, seed):
    if domain.dim != system.n:
        raise DimensionMismatchError(
            f"domain has dimension {domain.dim}, state dimension is {system.n}"
        )
    if samples < 1:
        raise DimensionMismatchError("need at least one sample point")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(domain.lo, domain.hi, size=(samples, system.n))
    ws = rng.uniform(system.dist.lo, system.dist.hi, size=(samples, system.m))
    return xs, ws


def jacobian_sign_decomposition(system, domain, samples=200, seed=0):
    """Corner-selection decomposition for fields whose off-diagonal Jacobian
    signs are uniform over ``domain``.

    The sign of every off-diagonal state partial and every disturbance
    partial is estimated at ``samples`` random points; a sign-indefinite
    entry raises SignIndefiniteError naming the entry and two witnesses.
    """
    xs, ws = _sample_points(system, domain, samples, seed)
    n, m = system.n, system.m
    sign_x = [[0] * n for _ in range(n)]
    sign_w = [[0] * m for _ in range(n)]
    seen = {}  # (i, kind, j, sign) -> witness point

    def classify(i, is_state, j, store):
        has_pos = has_neg = False
        for x, w in zip(xs, ws):
            fd, tol = _numeric_partial(system, i, is_state, j, list(x), list(w))
            if fd > tol:
                has_pos = True
                seen[(i, is_state, j, 1)] = (list(x), list(w), fd)
            elif fd < -tol:
                has_neg = True
                seen[(i, is_state, j, -1)] = (list(x), list(w), fd)
            if has_pos and has_neg:
                kind = "x" if is_state else "w"
                raise SignIndefiniteError(
                    f"dF{i + 1}/d{kind}{j + 1} changes sign over the sampled domain",
                    entry=(i + 1, j + 1),
                    witnesses=[
                        seen[(i, is_state, j, 1)],
                        seen[(i, is_state, j, -1)],
                    ],
                )
        store[i][j] = 1 if has_pos else (-1 if has_neg else 0)

    for i in range(n):
        for j in range(n):
            if j != i:
                classify(i, True, j, sign_x)
        for k in range(m):
            classify(i, False, k, sign_w)

    def component(i, x, w, xh, wh):
        xi = [x[j] if (j == i or sign_x[i][j] >= 0) else xh[j] for j in range(n)]
        zeta = [w[k] if sign_w[i][k] >= 0 else wh[k] for k in range(m)]
        return system.field_component(i, xi, zeta)

    meta = {
        "samples": samples,
        "seed": seed,
        "sign_x": [row[:] for row in sign_x],
        "sign_w": [row[:] for row in sign_w],
    }
    return Decomposition(system, "jacobian_sign", component, domain=domain, meta=meta)


def monotone_decomposition(system, domain, samples=200, seed=0):
    """Pass-through decomposition d = F for monotone systems.

    All off-diagonal state partials and all disturbance partials must be
    nonnegative at every sampled point; a violation raises NotMonotoneError
    with the witness.
    """
    xs, ws = _sample_points(system, domain, samples, seed)
    n, m = system.n, system.m
    for i in range(n):
        targets = [(True, j) for j in range(n) if j != i]
        targets += [(False, k) for k in range(m)]
        for is_state, j in targets:
            for x, w in zip(xs, ws):
                fd, tol = _numeric_partial(system, i, is_state, j, list(x), list(w))
                if fd < -tol:
                    kind = "x" if is_state else "w"
                    raise NotMonotoneError(
                        f"dF{i + 1}/d{kind}{j + 1} = {fd:.3e} < 0 at a sampled point",
                        witness=(list(x), list(w), fd),
                    )

    def component(i, x, w, xh, wh):
        return system.field_component(i, x, w)

    meta = {"samples": samples, "seed": seed}
    return Decomposition(system, "monotone", component, domain=domain, meta=meta)


# --- combination and closed forms ---------------------------------------------


def combine(d1: Decomposition, d2: Decomposition):
    """Piecewise combination: componentwise max of the two evaluators on the
    ordered side, min on the reversed side."""
    if d1.system is not d2.system:
        raise DimensionMismatchError(
            "decompositions reference different source systems"
        )

    def component(i, x, w, xh, wh):
        sign = pair_order(x, w, xh, wh)
        a = d1.evaluate_component(i, x, w, xh, wh)
        b = d2.evaluate_component(i, x, w, xh, wh)
        return max(a, b) if sign > 0 else min(a, b)

    domain = d1.domain if d1.domain is not None else d2.domain
    meta = {"parts": [d1.method, d2.method]}
    return Decomposition(d1.system, "combined", component, domain=domain, meta=meta)


def parse_closed_form(system, sources):
    """Parse closed-form component sources over (x, xh) and (w, wh).

    Convention: x1..xn are the first arguments, x(n+1)..x(2n) stand for
    xh1..xhn; likewise w(m+1)..w(2m) stand for wh1..whm.
    """
    return [exprlang.parse(src, 2 * system.n, 2 * system.m) for src in sources]


def closed_form_decomposition(system, exprs):
    """Decomposition from user expressions over 2n + 2m variables.

    Construction does not validate the order conditions; run
    :func:`check_decomposition` separately.
    """
    n, m = system.n, system.m
    if len(exprs) != n:
        raise DimensionMismatchError(
            f"expected {n} component expressions, got {len(exprs)}"
        )
    for i, expr in enumerate(exprs):
        if expr.n > 2 * n or expr.m > 2 * m:
            raise DimensionMismatchError(
                f"component {i + 1} references variables beyond 2n + 2m"
            )
    fns = [e.scalar_fn() for e in exprs]

    def component(i, x, w, xh, wh):
        return fns[i](list(x) + list(xh), list(w) + list(wh))

    meta = {"sources": [e.source for e in exprs]}
    return Decomposition(system, "closed_form", component, meta=meta)


# --- validation ----------------------------------------------------------------


@dataclass
class CheckReport:
    """Outcome of the order/consistency audit of a decomposition."""

    probes: int
    seed: int
    consistency_residual: float
    violations_cond2: int
    violations_cond3: int
    violations_cond4: int
    witnesses: list = field(default_factory=list)

    @property
    def violations(self):
        return self.violations_cond2 + self.violations_cond3 + self.violations_cond4

    def ok(self, consistency_tol=1e-6):
        return self.violations == 0 and self.consistency_residual <= consistency_tol

    def to_jsonable(self):
        return {
            "probes": self.probes,
            "seed": self.seed,
            "consistency_residual": self.consistency_residual,
            "violations": {
                "cond2": self.violations_cond2,
                "cond3": self.violations_cond3,
                "cond4": self.violations_cond4,
            },
            "witnesses": [list(map(str, wit)) for wit in self.witnesses],
        }


def _ordered_pair(rng, lo, hi, gap_min):
    width = hi - lo
    gmin = np.minimum(gap_min, 0.25 * width)
    a = rng.uniform(lo, np.maximum(lo, hi - gmin))
    gap = rng.uniform(gmin, np.maximum(gmin, hi - a))
    return a, np.minimum(a + gap, hi)


def check_decomposition(d: Decomposition, probes=1000, seed=0, domain=None,
                        h=SIGN_FD_STEP, slack=CHECK_SLACK):
    """Audit diagonal consistency and the off-diagonal order conditions.

    Probes finite-difference signs of d at ``probes`` random ordered pairs
    (both orientations) drawn in ``domain`` (default: the decomposition's own
    domain, else the unit box). Violations beyond ``slack`` are counted and
    up to 10 witnesses recorded.
    """
    system = d.system
    n, m = d.n, d.m
    if domain is None:
        domain = d.domain if d.domain is not None else Box([-1.0] * n, [1.0] * n)
    rng = np.random.default_rng(seed)
    wbox = system.dist

    residual = 0.0
    for _ in range(probes):
        x = rng.uniform(domain.lo, domain.hi)
        w = rng.uniform(wbox.lo, wbox.hi)
        dv = d.evaluate(x, w, x, w)
        fv = system.eval_field(list(x), list(w))
        residual = max(residual, float(np.max(np.abs(dv - fv))))

    counts = {2: 0, 3: 0, 4: 0}
    witnesses = []
    gap_min = 1e-3
    w_active = [k for k in range(m) if wbox.hi[k] - wbox.lo[k] > 4.0 * gap_min]

    def record(cond, i, j, side, fd):
        counts[cond] += 1
        if len(witnesses) < 10:
            witnesses.append((cond, i + 1, j + 1, side, fd))

    def fd_of(i, group, j, args, step):
        # group: 0 = x, 1 = w, 2 = xh, 3 = wh
        args = [list(a) for a in args]
        args[group][j] += step
        hi_v = d.evaluate_component(i, *args)
        args[group][j] -= 2.0 * step
        lo_v = d.evaluate_component(i, *args)
        return (hi_v - lo_v) / (2.0 * step)

    for p in range(probes):
        x_lo, x_hi = _ordered_pair(rng, domain.lo, domain.hi, gap_min)
        w_lo, w_hi = _ordered_pair(rng, wbox.lo, wbox.hi, gap_min)
        if p % 2 == 0:
            side = 1
            args = (list(x_lo), list(w_lo), list(x_hi), list(w_hi))
        else:
            side = -1
            args = (list(x_hi), list(w_hi), list(x_lo), list(w_lo))
        for i in range(n):
            for j in range(n):
                step = h * max(1.0, abs(args[0][j]))
                if j != i:
                    fd = fd_of(i, 0, j, args, step)
                    if fd < -slack:
                        record(2, i, j, side, fd)
                fd = fd_of(i, 2, j, args, h * max(1.0, abs(args[2][j])))
                if fd > slack:
                    record(3, i, j, side, fd)
            for k in w_active:
                fd = fd_of(i, 1, k, args, h * max(1.0, abs(args[1][k])))
                if fd < -slack:
                    record(4, i, k, side, fd)
                fd = fd_of(i, 3, k, args, h * max(1.0, abs(args[3][k])))
                if fd > slack:
                    record(4, i, k, side, fd)

    return CheckReport(
        probes=probes,
        seed=seed,
        consistency_residual=residual,
        violations_cond2=counts[2],
        violations_cond3=counts[3],
        violations_cond4=counts[4],
        witnesses=witnesses,
    )


def make_decomposition(system, method="tight", *, domain=None, samples=200,
                       seed=0, sources=None):
    """Factory used by the pipeline layers and the CLI."""
    if method == "tight":
        return tight_decomposition(system)
    if method == "jacobian_sign":
        if domain is None:
            raise DimensionMismatchError("jacobian_sign requires a domain box")
        return jacobian_sign_decomposition(system, domain, samples=samples, seed=seed)
    if method == "monotone":
        if domain is None:
            domain = Box([-2.0] * system.n, [2.0] * system.n)
        return monotone_decomposition(system, domain, samples=samples, seed=seed)
    if method == "closed_form":
        if not sources:
            raise DimensionMismatchError("closed_form requires component sources")
        return closed_form_decomposition(system, parse_closed_form(system, sources))
    raise DimensionMismatchError(f"unknown decomposition method {method!r}")
