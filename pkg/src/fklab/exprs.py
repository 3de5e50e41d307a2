"""Safe arithmetic expressions for config files.

Configs may give u, the potential density, the jump coefficient, or F as a
formula over the state position. Expressions are parsed with `ast` and only
arithmetic, comparisons, a fixed set of numpy functions, and the names below
are allowed; anything else (attributes, calls by value, comprehensions,
walrus) is rejected up front. Evaluation is vectorized over numpy arrays.
"""

from __future__ import annotations

import ast

import numpy as np

_FUNCS = {
    "abs": np.abs,
    "exp": np.exp,
    "expm1": np.expm1,
    "log": np.log,
    "log1p": np.log1p,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "where": np.where,
}

_CONSTS = {"pi": np.pi, "e": np.e}

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Compare, ast.IfExp,
    ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod, ast.FloorDiv,
    ast.USub, ast.UAdd,
    ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq,
)


class ExpressionError(ValueError):
    """Raised when a config expression fails validation or evaluation."""


def _validate(tree, variables):
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ExpressionError(
                f"disallowed syntax: {type(node).__name__}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError("only whitelisted function calls are allowed")
            if node.keywords:
                raise ExpressionError("keyword arguments are not allowed")
        if isinstance(node, ast.Name):
            ok = node.id in variables or node.id in _CONSTS or node.id in _FUNCS
            if not ok:
                raise ExpressionError(f"unknown name {node.id!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ExpressionError("only numeric literals are allowed")


def compile_expr(text, variables=("x",)):
    """Compile an expression into a vectorized callable of `variables`.

    >>> f = compile_expr("exp(-x**2)")
    >>> f(x=np.array([0.0]))[0]
    1.0
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("expression must be a non-empty string")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"syntax error in expression: {exc}") from exc
    _validate(tree, set(variables))
    code = compile(tree, "<config-expr>", "eval")
    names = dict(_FUNCS, **_CONSTS)

    def evaluate(**kwargs):
        missing = set(variables) - set(kwargs)
        if missing:
            raise ExpressionError(f"missing variables: {sorted(missing)}")
        scope = dict(names)
        scope.update({k: np.asarray(v, dtype=float) for k, v in kwargs.items()})
        out = eval(code, {"__builtins__": {}}, scope)
        return np.asarray(out, dtype=float)

    evaluate.source = text
    return evaluate


def eval_on_positions(text, positions):
    """Evaluate a single-variable expression on state positions (1-d)."""
    f = compile_expr(text, variables=("x",))
    x = np.asarray(positions, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ExpressionError("expressions support 1-d positions only")
        x = x[:, 0]
    vals = f(x=x)
    return np.broadcast_to(vals, x.shape).astype(float).copy()


def eval_on_pairs(text, positions):
    """Evaluate a two-variable expression F(x, y) on all position pairs."""
    f = compile_expr(text, variables=("x", "y"))
    x = np.asarray(positions, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ExpressionError("expressions support 1-d positions only")
        x = x[:, 0]
    X, Y = np.meshgrid(x, x, indexing="ij")
    vals = np.broadcast_to(f(x=X, y=Y), X.shape).astype(float).copy()
    np.fill_diagonal(vals, 0.0)
    return vals
