"""Parse text such as ``exp(x1)*x2 + x3**2`` into a :class:`StructuredFunction`.

The expression is expanded into a sum of products in which every factor depends
on a single variable ``x1 .. xk``. Anything that cannot be written that way
(for example ``exp(x1*x2)``) is rejected.
"""

from __future__ import annotations

import ast
import re

import numpy as np

from ._validation import DomainError
from .hoeffding import Factor, StructuredFunction

__all__ = ["parse_structured"]

_FUNCTIONS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "log1p": np.log1p,
    "expm1": np.expm1,
}
_CONSTANTS = {"pi": np.pi, "e": np.e}
# integer powers of coupled sums are expanded up to this exponent
MAX_POWER = 8
_VAR = re.compile(r"^x([1-9]\d*)$")
_ALLOWED = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def _variables(node):
    out = set()
    for sub in ast.walk(node):
        if isinstance(sub, ast.Name):
            m = _VAR.match(sub.id)
            if m:
                out.add(int(m.group(1)) - 1)
    return out


def _compile_factor(node, var):
    """A vectorized one-argument function evaluating ``node`` with ``x{var+1}`` bound to its argument."""
    code = compile(ast.fix_missing_locations(ast.Expression(node)), "<factor>", "eval")
    env = {"__builtins__": {}, **_FUNCTIONS, **_CONSTANTS}
    name = f"x{var + 1}"

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(eval(code, env, {name: x}), dtype=float), x.shape)

    return fn


def _const(node):
    code = compile(ast.fix_missing_locations(ast.Expression(node)), "<const>", "eval")
    return float(eval(code, {"__builtins__": {}, **_FUNCTIONS, **_CONSTANTS}, {}))


# A term is (coefficient, {var: [ast nodes multiplied together]}).


def _mul_terms(a, b):
    out = []
    for ca, fa in a:
        for cb, fb in b:
            merged = {v: list(ns) for v, ns in fa.items()}
            for v, ns in fb.items():
                merged.setdefault(v, []).extend(ns)
            out.append((ca * cb, merged))
    return out


def _expand(node):
    vars_ = _variables(node)
    if not vars_:
        return [(_const(node), {})]
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Add):
            return _expand(node.left) + _expand(node.right)
        if isinstance(node.op, ast.Sub):
            return _expand(node.left) + [(-c, f) for c, f in _expand(node.right)]
        if isinstance(node.op, ast.Mult):
            return _mul_terms(_expand(node.left), _expand(node.right))
        if isinstance(node.op, ast.Div) and not _variables(node.right):
            return [(c / _const(node.right), f) for c, f in _expand(node.left)]
        if isinstance(node.op, ast.Pow) and len(_variables(node.left)) > 1 and not _variables(node.right):
            p = _const(node.right)
            if p == int(p) and 1 <= p <= MAX_POWER:
                base = _expand(node.left)
                out = base
                for _ in range(int(p) - 1):
                    out = _mul_terms(out, base)
                return out
    if isinstance(node, ast.UnaryOp):
        inner = _expand(node.operand)
        return [(-c, f) for c, f in inner] if isinstance(node.op, ast.USub) else inner
    if len(vars_) == 1:
        return [(1.0, {next(iter(vars_)): [node]})]
    raise DomainError(f"sub-expression {ast.unparse(node)!r} couples several inputs; not a sum of products")


def _factor(var, nodes):
    node = nodes[0]
    for other in nodes[1:]:
        node = ast.BinOp(left=node, op=ast.Mult(), right=other)
    return Factor(_compile_factor(node, var), ast.unparse(node))


def parse_structured(text, k=None):
    """Parse ``text`` into a structured function over ``k`` inputs (default: highest index used)."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise DomainError(f"cannot parse {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise DomainError(f"unsupported syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS):
            raise DomainError(f"unknown function in {text!r}")
        if isinstance(node, ast.Name) and not (_VAR.match(node.id) or node.id in _FUNCTIONS or node.id in _CONSTANTS):
            raise DomainError(f"unknown name {node.id!r}; inputs are x1, x2, ...")
    used = _variables(tree.body)
    k = k if k is not None else (max(used) + 1 if used else 0)
    if used and max(used) >= k:
        raise DomainError(f"expression uses x{max(used) + 1} but only {k} inputs were given")
    constant = 0.0
    terms = []
    for coef, factors in _expand(tree.body):
        if not factors:
            constant += coef
            continue
        term = {v: _factor(v, ns) for v, ns in sorted(factors.items())}
        if coef != 1.0:
            v0 = min(term)
            g = term[v0]
            term[v0] = Factor(lambda x, g=g, c=coef: c * g(x), f"{coef:g}*{g.name}")
        terms.append(term)
    if all(len(t) == 1 for t in terms) and len({next(iter(t)) for t in terms}) == len(terms):
        factors = [None] * k
        for t in terms:
            (v, g), = t.items()
            factors[v] = g
        return StructuredFunction.additive(factors, constant)
    if len(terms) == 1:
        factors = [terms[0].get(j) for j in range(k)]
        return StructuredFunction.product(factors, constant)
    return StructuredFunction.sum_of_products(terms, k, constant)
