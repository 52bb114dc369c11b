"""Tiny arithmetic expression language for user-supplied nonlinearities.

Expressions are written in the single variable ``u`` and may use
``+ - * / ^`` (``**`` is accepted too), numeric literals, ``exp``, ``ln``
(alias ``log``) and ``piecewise(cond, a, b)`` which evaluates to ``a`` where
``cond`` holds and ``b`` elsewhere.  Conditions are comparisons such as
``u < 0``.

>>> f = compile_expression("piecewise(u < 0, 1/(u-1)^2, 1 + 2*u + 3*u^2)")
>>> float(f(-1.0))
0.25
"""

from __future__ import annotations

import ast
import operator
from collections.abc import Callable

import numpy as np

from .errors import ExpressionError

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_CMPOPS = {
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
}
_FUNCS = {"exp": np.exp, "ln": np.log, "log": np.log}


def _build(node: ast.AST) -> Callable:
    if isinstance(node, ast.Expression):
        return _build(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        value = float(node.value)
        return lambda u: value
    if isinstance(node, ast.Name):
        if node.id != "u":
            raise ExpressionError(f"unknown variable {node.id!r}; only 'u' is allowed")
        return lambda u: u
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _build(node.operand)
        if isinstance(node.op, ast.USub):
            return lambda u: -inner(u)
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, right = _build(node.left), _build(node.right)
        return lambda u: op(left(u), right(u))
    if isinstance(node, ast.Compare):
        if len(node.ops) != 1 or type(node.ops[0]) not in _CMPOPS:
            raise ExpressionError("conditions must be a single <, <=, > or >= comparison")
        op = _CMPOPS[type(node.ops[0])]
        left, right = _build(node.left), _build(node.comparators[0])
        return lambda u: op(left(u), right(u))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        name = node.func.id
        args = [_build(a) for a in node.args]
        if name in _FUNCS:
            if len(args) != 1:
                raise ExpressionError(f"{name} takes one argument")
            fn, arg = _FUNCS[name], args[0]
            return lambda u: fn(arg(u))
        if name == "piecewise":
            if len(args) != 3:
                raise ExpressionError("piecewise takes (condition, then, else)")
            cond, then, other = args
            return _piecewise(cond, then, other)
        raise ExpressionError(f"unknown function {name!r}")
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def _piecewise(cond: Callable, then: Callable, other: Callable) -> Callable:
    def evaluate(u):
        mask = cond(u)
        if np.ndim(mask) == 0:
            return then(u) if mask else other(u)
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        out[mask] = np.asarray(then(u[mask]), dtype=float)
        out[~mask] = np.asarray(other(u[~mask]), dtype=float)
        return out

    return evaluate


def compile_expression(text: str) -> Callable:
    """Parse ``text`` and return a numpy-aware callable of ``u``."""
    source = text.replace("^", "**").replace("×", "*").replace("÷", "/").replace("−", "-")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    fn = _build(tree)

    def wrapped(u):
        with np.errstate(over="ignore"):
            return fn(u)

    return wrapped
