"""Disturbed ODE definitions, linear state transformations, and time reversal."""

from __future__ import annotations

import math

import numpy as np

from . import exprlang
from .errors import DimensionMismatchError, GeometryError
from .geometry import Box, invert_shape


class SystemDef:
    """System x' = F(x, w) with w ranging over a box.

    ``field`` is one expression per state component. Instances are immutable
    after construction and safe to share across threads.
    """

    def __init__(self, n, m, field, dist: Box, name="", statespace_note=""):
        if len(field) != n:
            raise DimensionMismatchError(
                f"expected {n} field expressions, got {len(field)}"
            )
        if dist.dim != m:
            raise DimensionMismatchError(
                f"disturbance box has dimension {dist.dim}, declared m={m}"
            )
        for i, expr in enumerate(field):
            if expr.n > n or expr.m > m:
                raise DimensionMismatchError(
                    f"field component {i + 1} references undeclared variables"
                )
        self.n = n
        self.m = m
        self.field = tuple(field)
        self.dist = dist
        self.name = name
        self.statespace_note = statespace_note
        self._scalar_fns = tuple(e.scalar_fn() for e in self.field)
        self._batch_fns = tuple(e.batch_fn() for e in self.field)

    @classmethod
    def from_strings(cls, n, m, sources, w_lo, w_hi, name="", statespace_note=""):
        field = [exprlang.parse(src, n, m) for src in sources]
        return cls(n, m, field, Box(w_lo, w_hi), name, statespace_note)

    def __repr__(self):
        srcs = ", ".join(e.source for e in self.field)
        return f"SystemDef(n={self.n}, m={self.m}, field=[{srcs}])"

    def field_sources(self):
        return [e.source for e in self.field]

    def field_values(self, x, w):
        """Raw componentwise evaluation; no finiteness checks (hot path)."""
        return [fn(x, w) for fn in self._scalar_fns]

    def field_component(self, i, x, w):
        return self._scalar_fns[i](x, w)

    def component_fn(self, i):
        """Raw compiled scalar callable for component i (hot loops)."""
        return self._scalar_fns[i]

    def component_batch_fn(self, i):
        """Vectorized callable for component i over (N, n), (N, m) arrays."""
        return self._batch_fns[i]

    def eval_field(self, x, w):
        """F(x, w) as an array; non-finite components raise EvalError."""
        x = [float(v) for v in x]
        w = [float(v) for v in w]
        if len(x) != self.n or len(w) != self.m:
            raise DimensionMismatchError(
                f"expected |x|={self.n}, |w|={self.m}; got {len(x)}, {len(w)}"
            )
        values = self.field_values(x, w)
        for i, v in enumerate(values):
            if not math.isfinite(v):
                # re-evaluate through the checking path for a precise report
                exprlang.evaluate(self.field[i], x, w)
        return np.array(values)

    def eval_field_batch(self, X, W):
        """Vectorized field over rows of X (N, n) and W (N, m)."""
        X = np.asarray(X, dtype=float)
        W = np.asarray(W, dtype=float)
        return np.column_stack([fn(X, W) for fn in self._batch_fns])


class TransformedSystem(SystemDef):
    """Dynamics of y = shape^-1 x: y' = shape^-1 F(shape y, w).

    The field is composed symbolically (the linear map substituted into the
    base expressions), so evaluation costs the same as a plain system; the
    inverse is computed once and cached. With the identity shape the composed
    expressions reduce to the base ones exactly.
    """

    def __init__(self, base: SystemDef, shape):
        inv, _ = invert_shape(shape)
        mat = np.array(shape, dtype=float)
        if mat.shape[0] != base.n:
            raise DimensionMismatchError(
                f"shape is {mat.shape[0]}x{mat.shape[1]}, state dimension is {base.n}"
            )
        substituted_x = [
            exprlang.linear_combination(
                [(mat[k, l], exprlang.Var("x", l)) for l in range(base.n)]
            )
            for k in range(base.n)
        ]
        inner = [
            exprlang.substitute_state(e.root, substituted_x) for e in base.field
        ]
        field = [
            exprlang.ExprAst(
                exprlang.linear_combination(
                    [(inv[i, j], inner[j]) for j in range(base.n)]
                ),
                base.n,
                base.m,
            )
            for i in range(base.n)
        ]
        name = f"{base.name}@T" if base.name else ""
        super().__init__(base.n, base.m, field, base.dist, name,
                         base.statespace_note)
        mat.flags.writeable = False
        inv.flags.writeable = False
        self.base = base
        self.shape = mat
        self.shape_inv = inv

    def __repr__(self):
        return f"TransformedSystem({self.base!r}, shape={self.shape.tolist()})"


def transform(system, shape):
    """Linear state transformation; composes when applied repeatedly."""
    if isinstance(system, TransformedSystem):
        return TransformedSystem(system.base, system.shape @ np.asarray(shape, float))
    return TransformedSystem(system, shape)


def reverse_time(system):
    """System with field -F (expression-level negation); disturbance unchanged."""
    if isinstance(system, TransformedSystem):
        return transform(reverse_time(system.base), system.shape)
    field = [e.negated() for e in system.field]
    name = f"-{system.name}" if system.name else ""
    return SystemDef(system.n, system.m, field, system.dist, name,
                     system.statespace_note)


_PRESETS = {
    "bilinear": dict(
        n=2, m=1,
        sources=("x1*x2 + w1", "x1 + 1"),
        w_lo=(0.0,), w_hi=(0.25,),
    ),
    "cubic": dict(
        n=2, m=1,
        sources=("x1 - x2 + x2^3 + w1", "x1 - x2"),
        w_lo=(-1.0,), w_hi=(1.0,),
    ),
    "trig": dict(
        n=2, m=1,
        sources=("x2 + sin(x2) + w1", "x1 + cos(x1) + 1"),
        w_lo=(0.0,), w_hi=(0.5,),
    ),
}


def preset_system(name):
    """Named systems used by the shipped run configurations."""
    if name not in _PRESETS:
        raise GeometryError(
            f"unknown system preset {name!r}; available: {sorted(_PRESETS)}"
        )
    cfg = _PRESETS[name]
    return SystemDef.from_strings(
        cfg["n"], cfg["m"], cfg["sources"], cfg["w_lo"], cfg["w_hi"], name=name
    )
