"""Closed-form scalar fields f(x, y) evaluated at quadrature points.

Sources are given as expression strings in ``x`` and ``y`` (sympy syntax)
or picked by name from :data:`BUILTINS`. Gradients are derived
symbolically, so the same object serves as a source term and as an exact
reference solution in error norms.
"""
from __future__ import annotations

import numpy as np
import sympy as sp

from .errors import ConfigError

_X, _Y = sp.symbols("x y", real=True)

BUILTINS = {
    "zero": "0",
    "one": "1",
    "linear_y": "1 + y",
    "sweep": "1 + y + sin(2*x)",
    "x": "x",
    "sin3x_cosy": "sin(3*x)*cos(y)",
    "sinpi_tensor": "sin(pi*x)*sin(pi*y)",
}


class ExprField:
    """Vectorised f(x, y) with its exact gradient."""

    def __init__(self, expr: str | float | sp.Expr):
        if isinstance(expr, str):
            try:
                self.expr = sp.sympify(BUILTINS.get(expr, expr), locals={"x": _X, "y": _Y})
            except (sp.SympifyError, SyntaxError, TypeError) as exc:
                raise ConfigError(f"cannot parse source expression {expr!r}") from exc
        else:
            self.expr = sp.sympify(expr)
        extra = self.expr.free_symbols - {_X, _Y}
        if extra:
            raise ConfigError(f"unknown symbols in expression: {sorted(map(str, extra))}")
        self._f = sp.lambdify((_X, _Y), self.expr, "numpy")
        self._gx = sp.lambdify((_X, _Y), sp.diff(self.expr, _X), "numpy")
        self._gy = sp.lambdify((_X, _Y), sp.diff(self.expr, _Y), "numpy")

    @staticmethod
    def _eval(fn, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.broadcast_to(np.asarray(fn(x, y), dtype=float), x.shape).copy()

    def __call__(self, x, y):
        return self._eval(self._f, x, y)

    def grad(self, x, y):
        return self._eval(self._gx, x, y), self._eval(self._gy, x, y)

    @property
    def is_constant(self):
        return not self.expr.free_symbols

    def __repr__(self):
        return f"ExprField({self.expr})"


class CallableField:
    """Wraps a plain callable; ``grad`` is optional."""

    def __init__(self, fn, grad=None):
        self._fn = fn
        self._grad = grad

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.broadcast_to(np.asarray(self._fn(x, y), dtype=float), x.shape).copy()

    def grad(self, x, y):
        if self._grad is None:
            raise TypeError("field has no gradient")
        return self._grad(x, y)


def as_field(obj):
    """Coerce a number, expression string, callable or field to a field."""
    if isinstance(obj, (ExprField, CallableField)):
        return obj
    if isinstance(obj, (int, float, str, sp.Expr)):
        return ExprField(obj)
    if callable(obj):
        return CallableField(obj, getattr(obj, "grad", None))
    raise ConfigError(f"cannot use {obj!r} as a field")
