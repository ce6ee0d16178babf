"""Guard and action expressions over integer/boolean variables."""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Callable, Mapping, Union

INTEGER = "integer"
BOOLEAN = "boolean"
SCALAR_TYPES = (INTEGER, BOOLEAN)


@dataclass(frozen=True)
class Const:
    value: Union[int, bool]


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "not"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Ref, Unary, Binary]

ARITH_OPS = ("+", "-")
ORDER_OPS = ("<", "<=", ">", ">=")
EQ_OPS = ("==", "!=")
LOGIC_OPS = ("and", "or")

# Binding strength, loosest first. Used by the printer to decide on parentheses.
PRECEDENCE = {"or": 1, "and": 2, "not": 3, "==": 4, "!=": 4, "<": 4, "<=": 4,
              ">": 4, ">=": 4, "+": 5, "-": 5, "neg": 6}

_PY_OPS = {
    "+": operator.add, "-": operator.sub,
    "<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge,
    "==": operator.eq, "!=": operator.ne,
}


class ExprTypeError(Exception):
    pass


def type_of(expr: Expr, env: Mapping[str, str]) -> str:
    """Infer the type of ``expr`` given name -> type bindings.

    Raises ExprTypeError for unresolved names or ill-typed operators.
    """
    if isinstance(expr, Const):
        return BOOLEAN if isinstance(expr.value, bool) else INTEGER
    if isinstance(expr, Ref):
        if expr.name not in env:
            raise ExprTypeError(f"unresolved name '{expr.name}'")
        return env[expr.name]
    if isinstance(expr, Unary):
        t = type_of(expr.operand, env)
        want = INTEGER if expr.op == "-" else BOOLEAN
        if t != want:
            raise ExprTypeError(f"operator '{expr.op}' expects {want}, got {t}")
        return want
    lt, rt = type_of(expr.left, env), type_of(expr.right, env)
    if expr.op in ARITH_OPS or expr.op in ORDER_OPS:
        if lt != INTEGER or rt != INTEGER:
            raise ExprTypeError(f"operator '{expr.op}' expects integer operands")
        return INTEGER if expr.op in ARITH_OPS else BOOLEAN
    if expr.op in EQ_OPS:
        if lt != rt:
            raise ExprTypeError(f"cannot compare {lt} with {rt}")
        return BOOLEAN
    if lt != BOOLEAN or rt != BOOLEAN:
        raise ExprTypeError(f"operator '{expr.op}' expects boolean operands")
    return BOOLEAN


def names_in(expr: Expr) -> set[str]:
    if isinstance(expr, Ref):
        return {expr.name}
    if isinstance(expr, Unary):
        return names_in(expr.operand)
    if isinstance(expr, Binary):
        return names_in(expr.left) | names_in(expr.right)
    return set()


def compile_expr(expr: Expr) -> Callable[[Mapping[str, object]], object]:
    """Turn an expression tree into a closure over a name -> value mapping."""
    if isinstance(expr, Const):
        value = expr.value
        return lambda env: value
    if isinstance(expr, Ref):
        name = expr.name
        return lambda env: env[name]
    if isinstance(expr, Unary):
        inner = compile_expr(expr.operand)
        if expr.op == "-":
            return lambda env: -inner(env)
        return lambda env: not inner(env)
    left, right = compile_expr(expr.left), compile_expr(expr.right)
    if expr.op == "and":
        return lambda env: bool(left(env)) and bool(right(env))
    if expr.op == "or":
        return lambda env: bool(left(env)) or bool(right(env))
    fn = _PY_OPS[expr.op]
    return lambda env: fn(left(env), right(env))


def format_expr(expr: Expr, parent: int = 0, right_side: bool = False) -> str:
    """Render with the minimum parentheses needed to re-parse to the same tree."""
    if isinstance(expr, Const):
        if isinstance(expr.value, bool):
            return "true" if expr.value else "false"
        return str(expr.value)
    if isinstance(expr, Ref):
        return expr.name
    if isinstance(expr, Unary):
        prec = PRECEDENCE["neg" if expr.op == "-" else "not"]
        inner = format_expr(expr.operand, prec)
        if expr.op == "-" and isinstance(expr.operand, Const):
            inner = f"({inner})"  # keep "-(3)" distinct from the literal -3
        text = f"-{inner}" if expr.op == "-" else f"not {inner}"
    else:
        prec = PRECEDENCE[expr.op]
        lhs = format_expr(expr.left, prec)
        rhs = format_expr(expr.right, prec, right_side=True)
        text = f"{lhs} {expr.op} {rhs}"
    # comparisons do not chain, so an equal-precedence child always gets parens
    if prec < parent or (prec == parent and (right_side or prec == PRECEDENCE["=="])):
        return f"({text})"
    return text
