"""Restricted arithmetic expressions in x, y for initial data (e.g. "1 + 0.5*cos(pi*x)")."""
from __future__ import annotations

import ast

import numpy as np

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs,
    "tanh": np.tanh, "log": np.log, "minimum": np.minimum, "maximum": np.maximum,
}
_NAMES = {"pi": np.pi, "e": np.e}
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
            ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


class Expression:
    """Compiled expression; calling it with arrays x, y broadcasts the result."""

    def __init__(self, source):
        self.source = str(source)
        tree = ast.parse(self.source, mode="eval")
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED):
                raise ValueError(f"unsupported syntax {type(node).__name__} in {self.source!r}")
            if isinstance(node, ast.Name) and node.id not in _FUNCS | _NAMES | {"x": 0, "y": 0}:
                raise ValueError(f"unknown name {node.id!r} in {self.source!r}")
            if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
                raise ValueError(f"unsupported call in {self.source!r}")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ValueError(f"non-numeric constant in {self.source!r}")
        self._code = compile(tree, "<expr>", "eval")

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ns = {"__builtins__": {}, "x": x, "y": y, **_FUNCS, **_NAMES}
        out = eval(self._code, ns)  # noqa: S307 - AST is whitelisted above
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x, y).shape).copy()

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and other.source == self.source

    def __hash__(self):
        return hash(self.source)


def as_function(spec):
    """Accept a number, an expression string, or a callable f(x, y)."""
    if isinstance(spec, Expression) or callable(spec):
        return spec
    if isinstance(spec, (int, float)):
        return Expression(repr(float(spec)))
    return Expression(spec)
