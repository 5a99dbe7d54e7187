"""A tiny, safe expression language for declarative problem data.

Expressions are arithmetic over the names ``z``, ``x1``, ``x2``, ``x3``
(components of the direction), ``pi`` and numeric literals, with the
functions ``exp``, ``log`` and ``pow``. They are parsed with :mod:`ast` and
compiled into closures over numpy; nothing is ever passed to ``eval``.
"""
from __future__ import annotations

import ast
import operator

import numpy as np

_BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: np.power,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCTIONS = {"exp": (np.exp, 1), "log": (np.log, 1), "pow": (np.power, 2)}
_CONSTANTS = {"pi": np.pi}
VARIABLES = ("z", "x1", "x2", "x3")


class ExpressionError(ValueError):
    pass


def _compile(node):
    if isinstance(node, ast.Expression):
        return _compile(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        name = node.id
        if name in _CONSTANTS:
            value = _CONSTANTS[name]
            return lambda env: value
        if name in VARIABLES:
            return lambda env: env[name]
        raise ExpressionError(f"unknown name {name!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        op, left, right = _BINARY[type(node.op)], _compile(node.left), _compile(node.right)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op, operand = _UNARY[type(node.op)], _compile(node.operand)
        return lambda env: op(operand(env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        if node.func.id not in _FUNCTIONS:
            raise ExpressionError(f"unknown function {node.func.id!r}")
        func, arity = _FUNCTIONS[node.func.id]
        if len(node.args) != arity:
            raise ExpressionError(f"{node.func.id} takes {arity} argument(s)")
        args = [_compile(a) for a in node.args]
        return lambda env: func(*(a(env) for a in args))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def _names(tree):
    return {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)} - set(_FUNCTIONS)


class Expression:
    """Compiled expression; call with ``z`` and/or an array of directions."""

    def __init__(self, source: str):
        if not isinstance(source, str):
            raise ExpressionError("expression must be a string")
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self.source = source
        self._code = _compile(tree)
        names = _names(tree)
        self.uses_z = "z" in names
        self.uses_direction = bool(names & {"x1", "x2", "x3"})

    def __call__(self, z=None, directions=None):
        env = {}
        if self.uses_z:
            if z is None:
                raise ExpressionError(f"{self.source!r} needs a value for z")
            env["z"] = np.asarray(z, dtype=float)
        if self.uses_direction:
            if directions is None:
                raise ExpressionError(f"{self.source!r} needs directions")
            d = np.asarray(directions, dtype=float)
            for i in range(3):
                env[f"x{i + 1}"] = d[..., i] if i < d.shape[-1] else np.zeros(d.shape[:-1])
        with np.errstate(all="ignore"):
            return self._code(env)

    def __repr__(self):
        return f"Expression({self.source!r})"


class DirectionFunction:
    """A positive datum on the sphere: constant, expression, callable or nodal values.

    Evaluate with ``func(directions)`` for an (M, n+1) array. ``constant`` is
    the value for constant data and ``None`` otherwise; nodal data can only be
    evaluated on its own grid nodes (``at_nodes``).
    """

    def __init__(self, source, grid=None):
        self.constant = None
        self.nodal = None
        self.grid = grid
        self.source = source
        if isinstance(source, DirectionFunction):
            self.__dict__.update(source.__dict__)
            return
        if isinstance(source, (int, float, np.floating, np.integer)) and not isinstance(source, bool):
            self.constant = float(source)
            self._func = None
        elif isinstance(source, str):
            expr = Expression(source)
            if expr.uses_z:
                raise ExpressionError("direction data may not depend on z")
            if not expr.uses_direction:
                self.constant = float(expr())
                self._func = None
            else:
                self._func = lambda d, e=expr: np.asarray(e(directions=d), dtype=float)
        elif callable(source):
            self._func = source
        else:
            values = np.asarray(getattr(source, "values", source), dtype=float)
            self.grid = getattr(source, "grid", grid)
            if self.grid is None:
                raise ValueError("nodal data needs its grid")
            self.nodal = self.grid.check(values)
            self._func = None

    def __call__(self, directions):
        directions = np.asarray(directions, dtype=float)
        shape = directions.shape[:-1]
        if self.constant is not None:
            return np.full(shape, self.constant)
        if self.nodal is not None:
            return self.grid.interpolant(self.nodal)(directions)
        return np.broadcast_to(np.asarray(self._func(directions), dtype=float), shape).copy()

    def at_nodes(self, grid):
        if self.nodal is not None:
            if grid is not self.grid:
                return self(grid.nodes)
            return self.nodal.copy()
        return self(grid.nodes)

    def __repr__(self):
        if self.constant is not None:
            return f"DirectionFunction({self.constant})"
        return f"DirectionFunction({self.source!r})"
