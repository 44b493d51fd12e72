"""A small, sandboxed arithmetic expression language for nonlinearities.

Expressions are parsed with :mod:`ast` and only a whitelist of node types is
accepted, so a problem file can never execute arbitrary code::

    >>> f = compile_expr("(2 + y/10)*exp(4 - sqrt(x + 1)) + t/2", ("t", "x", "y"))
    >>> round(float(f(0.0, 0.0, 0.0)), 6)
    40.171074

Supported: numbers, the declared variables, ``+ - * / **``, unary minus,
comparisons (only as the condition of ``piecewise``), and the functions
``exp, sqrt, log, sin, cos, abs, pow, min, max, piecewise(cond, a, b)``.
"""

from __future__ import annotations

import ast
import operator
from dataclasses import dataclass, field

import numpy as np


class ExpressionError(ValueError):
    """Syntax or whitelist violation in a nonlinearity expression."""


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: np.power,
}

_CMPOPS = {
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
}

_FUNCS = {
    "exp": (np.exp, 1),
    "sqrt": (np.sqrt, 1),
    "log": (np.log, 1),
    "sin": (np.sin, 1),
    "cos": (np.cos, 1),
    "abs": (np.abs, 1),
    "pow": (np.power, 2),
    "min": (np.minimum, 2),
    "max": (np.maximum, 2),
}


def _check(node: ast.AST, variables: tuple[str, ...], source: str) -> None:
    def fail(msg: str, n: ast.AST) -> None:
        col = getattr(n, "col_offset", 0) + 1
        raise ExpressionError(f"{msg} at column {col} in {source!r}")

    if isinstance(node, ast.Expression):
        _check(node.body, variables, source)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            fail("only numeric literals are allowed", node)
    elif isinstance(node, ast.Name):
        if node.id not in variables:
            fail(f"unknown variable {node.id!r} (allowed: {', '.join(variables)})", node)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            fail(f"operator {type(node.op).__name__} not allowed", node)
        _check(node.left, variables, source)
        _check(node.right, variables, source)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            fail("only unary +/- are allowed", node)
        _check(node.operand, variables, source)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.keywords:
            fail("only plain calls of built-in functions are allowed", node)
        name = node.func.id
        if name == "piecewise":
            if len(node.args) != 3:
                fail("piecewise(cond, then, otherwise) takes 3 arguments", node)
            cond = node.args[0]
            if not (isinstance(cond, ast.Compare) and len(cond.ops) == 1
                    and type(cond.ops[0]) in _CMPOPS):
                fail("piecewise condition must be a single comparison", cond)
            _check(cond.left, variables, source)
            _check(cond.comparators[0], variables, source)
            _check(node.args[1], variables, source)
            _check(node.args[2], variables, source)
        elif name in _FUNCS:
            arity = _FUNCS[name][1]
            if len(node.args) != arity:
                fail(f"{name} takes {arity} argument(s)", node)
            for a in node.args:
                _check(a, variables, source)
        else:
            fail(f"unknown function {name!r}", node)
    else:
        fail(f"{type(node).__name__} is not allowed", node)


def _eval(node: ast.AST, env: dict):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Call):
        name = node.func.id
        if name == "piecewise":
            cond = node.args[0]
            mask = _CMPOPS[type(cond.ops[0])](_eval(cond.left, env), _eval(cond.comparators[0], env))
            return np.where(mask, _eval(node.args[1], env), _eval(node.args[2], env))
        fn = _FUNCS[name][0]
        return fn(*[_eval(a, env) for a in node.args])
    raise ExpressionError(f"cannot evaluate {type(node).__name__}")  # unreachable after _check


@dataclass(frozen=True)
class Expression:
    """A compiled expression; calling it broadcasts over numpy arrays."""

    source: str
    variables: tuple[str, ...]
    _tree: ast.Expression = field(repr=False, compare=False)

    def __call__(self, *args):
        if len(args) != len(self.variables):
            raise TypeError(f"expected {len(self.variables)} arguments, got {len(args)}")
        env = {name: np.asarray(a, dtype=float) for name, a in zip(self.variables, args)}
        shape = np.broadcast_shapes(*(v.shape for v in env.values()))
        with np.errstate(all="ignore"):
            out = _eval(self._tree.body, env)
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else float(out)


def compile_expr(source: str, variables: tuple[str, ...]) -> Expression:
    if not isinstance(source, str) or not source.strip():
        raise ExpressionError("empty expression")
    try:
        tree = ast.parse(source.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"syntax error at column {exc.offset} in {source!r}: {exc.msg}") from None
    _check(tree, variables, source)
    return Expression(source, tuple(variables), tree)
