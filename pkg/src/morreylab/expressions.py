"""Tiny arithmetic expression grammar for config files.

Grammar: +, -, *, /, **, parentheses, numeric literals, the constants
pi and e, the names listed in ALLOWED_FUNCTIONS, and caller-supplied
variables. Parsed with the ast module against a whitelist; nothing else
evaluates.
"""

from __future__ import annotations

import ast
import math

import numpy as np

__all__ = ["compile_expression", "ExpressionError"]

ALLOWED_FUNCTIONS = {
    "log": np.log,
    "exp": np.exp,
    "pow": np.power,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
}

_CONSTANTS = {"pi": math.pi, "e": math.e}

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


class ExpressionError(ValueError):
    """Raised for syntax errors or names outside the grammar."""


def compile_expression(text: str, variables: tuple):
    """Compile `text` into f(**variables) -> array, validating the grammar.

    variables: names the produced function accepts as keyword arrays.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"bad expression {text!r}: {exc.msg} (col {exc.offset})") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ExpressionError(
                f"bad expression {text!r}: {type(node).__name__} is outside the grammar"
            )
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in ALLOWED_FUNCTIONS:
                raise ExpressionError(f"bad expression {text!r}: unknown function call")
            if node.keywords:
                raise ExpressionError(f"bad expression {text!r}: keyword arguments not allowed")
        if isinstance(node, ast.Name):
            if node.id not in ALLOWED_FUNCTIONS and node.id not in _CONSTANTS \
                    and node.id not in variables:
                raise ExpressionError(
                    f"bad expression {text!r}: unknown name {node.id!r} "
                    f"(variables: {', '.join(variables)})"
                )
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ExpressionError(f"bad expression {text!r}: non-numeric literal")
    code = compile(tree, "<expression>", "eval")
    env = dict(ALLOWED_FUNCTIONS)
    env.update(_CONSTANTS)

    def evaluate(**kwargs):
        scope = dict(env)
        scope.update(kwargs)
        return eval(code, {"__builtins__": {}}, scope)

    evaluate.source = text
    return evaluate
