"""Canonical algebraic AST for competition answers.

Scalar nodes form an exact algebra over rationals, radicals, pi and e,
plus free symbols. Compound nodes (tuples, lists, sets, intervals,
relations) wrap scalars. `canon` brings any tree into a normal form:
rationals reduced, sums/products flattened and sorted under a fixed term
ordering, numeric subtrees constant-folded exactly, radicals of positive
rationals written as coefficient * prod(prime^(r/b)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import mpmath

PRECISION_DPS = 50
_FOLD_EXP_LIMIT = 64
_FACTOR_LIMIT = 10**7  # trial-division bound; larger primes stay unsimplified


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Rat(Node):
    value: Fraction

    def __post_init__(self):
        if self.value.denominator == 0:  # Fraction raises earlier, belt and braces
            raise ZeroDivisionError


@dataclass(frozen=True)
class Sym(Node):
    name: str


@dataclass(frozen=True)
class Const(Node):
    name: str  # "pi" | "e"


@dataclass(frozen=True)
class Add(Node):
    terms: tuple[Node, ...]


@dataclass(frozen=True)
class Mul(Node):
    factors: tuple[Node, ...]


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exp: Node


@dataclass(frozen=True)
class Deg(Node):
    """Degree-annotated quantity: 45 degrees != unitless 45."""

    value: Node


@dataclass(frozen=True)
class Tup(Node):
    items: tuple[Node, ...]


@dataclass(frozen=True)
class Lst(Node):
    items: tuple[Node, ...]


@dataclass(frozen=True)
class SetN(Node):
    items: tuple[Node, ...]


@dataclass(frozen=True)
class Interval(Node):
    lo: Node
    hi: Node
    closed_lo: bool
    closed_hi: bool


@dataclass(frozen=True)
class Rel(Node):
    op: str  # "=", "<", "<=", ">", ">="
    lhs: Node
    rhs: Node


@dataclass(frozen=True)
class Text(Node):
    """Fallback for answers outside the grammar."""

    raw: str


def rat(n: int | Fraction, d: int = 1) -> Rat:
    return Rat(Fraction(n, d))


ZERO = rat(0)
ONE = rat(1)


# --- term ordering -------------------------------------------------------

_RANKS = {
    Rat: 0,
    Const: 1,
    Sym: 2,
    Pow: 3,
    Mul: 4,
    Add: 5,
    Deg: 6,
    Tup: 7,
    Lst: 8,
    SetN: 9,
    Interval: 10,
    Rel: 11,
    Text: 12,
}


def sort_key(node: Node):
    """Total order on canonical nodes, used for sorting sums/products."""
    if isinstance(node, Rat):
        return (0, node.value)
    if isinstance(node, Const):
        return (1, node.name)
    if isinstance(node, Sym):
        return (2, node.name)
    if isinstance(node, Pow):
        return (3, sort_key(node.base), sort_key(node.exp))
    if isinstance(node, Mul):
        return (4, tuple(sort_key(f) for f in node.factors))
    if isinstance(node, Add):
        return (5, tuple(sort_key(t) for t in node.terms))
    if isinstance(node, Deg):
        return (6, sort_key(node.value))
    if isinstance(node, Tup):
        return (7, tuple(sort_key(i) for i in node.items))
    if isinstance(node, Lst):
        return (8, tuple(sort_key(i) for i in node.items))
    if isinstance(node, SetN):
        return (9, tuple(sort_key(i) for i in node.items))
    if isinstance(node, Interval):
        return (10, sort_key(node.lo), sort_key(node.hi), node.closed_lo, node.closed_hi)
    if isinstance(node, Rel):
        return (11, node.op, sort_key(node.lhs), sort_key(node.rhs))
    if isinstance(node, Text):
        return (12, node.raw)
    raise TypeError(f"unknown node {node!r}")


def free_symbols(node: Node) -> frozenset[str]:
    if isinstance(node, Sym):
        return frozenset((node.name,))
    out: set[str] = set()
    for child in _children(node):
        out |= free_symbols(child)
    return frozenset(out)


def _children(node: Node) -> Iterator[Node]:
    if isinstance(node, (Rat, Sym, Const, Text)):
        return
    if isinstance(node, Add):
        yield from node.terms
    elif isinstance(node, Mul):
        yield from node.factors
    elif isinstance(node, Pow):
        yield node.base
        yield node.exp
    elif isinstance(node, Deg):
        yield node.value
    elif isinstance(node, (Tup, Lst, SetN)):
        yield from node.items
    elif isinstance(node, Interval):
        yield node.lo
        yield node.hi
    elif isinstance(node, Rel):
        yield node.lhs
        yield node.rhs


# --- canonicalization ----------------------------------------------------


def _factorize(n: int) -> dict[int, int] | None:
    """Prime factorization by trial division; None if a factor exceeds the bound."""
    if n <= 0:
        return None
    out: dict[int, int] = {}
    m = n
    p = 2
    while p * p <= m:
        while m % p == 0:
            out[p] = out.get(p, 0) + 1
            m //= p
        p += 1 if p == 2 else 2
        if p > _FACTOR_LIMIT:
            return None
    if m > 1:
        if m > _FACTOR_LIMIT * _FACTOR_LIMIT:
            return None
        out[m] = out.get(m, 0) + 1
    return out


def _radical_split(base: Fraction, exp: Fraction) -> tuple[Fraction, list[tuple[int, Fraction]]] | None:
    """Split base**exp (base > 0, exp non-integer) into (rational, radical primes).

    Returns (coefficient, [(prime, residual_exponent), ...]) with each residual
    exponent in (0, 1); None when factorization is out of reach.
    """
    num_f = _factorize(base.numerator)
    den_f = _factorize(base.denominator)
    if num_f is None or den_f is None:
        return None
    powers: dict[int, Fraction] = {}
    for p, k in num_f.items():
        powers[p] = powers.get(p, Fraction(0)) + k * exp
    for p, k in den_f.items():
        powers[p] = powers.get(p, Fraction(0)) - k * exp
    coeff = Fraction(1)
    residual: list[tuple[int, Fraction]] = []
    for p in sorted(powers):
        total = powers[p]
        whole = math.floor(total)
        frac_part = total - whole
        if whole:
            coeff *= Fraction(p) ** whole
        if frac_part:
            residual.append((p, frac_part))
    return coeff, residual


def _canon_pow(base: Node, exp: Node) -> Node:
    if isinstance(exp, Rat):
        if exp.value == 0:
            return ONE
        if exp.value == 1:
            return base
    if isinstance(base, Pow) and isinstance(base.exp, Rat) and isinstance(exp, Rat):
        return _canon_pow(base.base, Rat(base.exp.value * exp.value))
    if isinstance(base, Mul) and isinstance(exp, Rat) and exp.value.denominator == 1:
        return canon(Mul(tuple(Pow(f, exp) for f in base.factors)))
    if isinstance(base, Rat) and isinstance(exp, Rat):
        e = exp.value
        if e.denominator == 1 and abs(e.numerator) <= _FOLD_EXP_LIMIT and base.value != 0:
            return Rat(base.value**e.numerator)
        if e.denominator == 1 and base.value == 0 and e.numerator > 0:
            return ZERO
        if e.denominator > 1 and base.value > 0:
            split = _radical_split(base.value, e)
            if split is not None:
                coeff, residual = split
                factors: list[Node] = []
                if coeff != 1 or not residual:
                    factors.append(Rat(coeff))
                for p, r in residual:
                    factors.append(Pow(rat(p), Rat(r)))
                if len(factors) == 1:
                    return factors[0]
                return _canon_mul(factors)
    return Pow(base, exp)


def _canon_mul(factors: list[Node]) -> Node:
    flat: list[Node] = []
    stack = list(factors)
    while stack:
        f = stack.pop()
        if isinstance(f, Mul):
            stack.extend(f.factors)
        else:
            flat.append(f)

    coeff = Fraction(1)
    # base sort-key -> [base, accumulated rational exp, non-rational exps]
    by_base: dict[tuple, list] = {}
    order: list[tuple] = []
    for f in flat:
        if isinstance(f, Rat):
            coeff *= f.value
            continue
        if isinstance(f, Pow):
            base, exp = f.base, f.exp
        else:
            base, exp = f, ONE
        key = sort_key(base)
        if key not in by_base:
            by_base[key] = [base, Fraction(0), []]
            order.append(key)
        if isinstance(exp, Rat):
            by_base[key][1] += exp.value
        else:
            by_base[key][2].append(exp)

    if coeff == 0:
        return ZERO

    rebuilt: list[Node] = []
    for key in order:
        base, rexp, other = by_base[key]
        if rexp:
            node = _canon_pow(base, Rat(rexp))
            if isinstance(node, Rat):
                coeff *= node.value
            elif isinstance(node, Mul):
                for sub in node.factors:
                    if isinstance(sub, Rat):
                        coeff *= sub.value
                    else:
                        rebuilt.append(sub)
            else:
                rebuilt.append(node)
        for e in other:
            rebuilt.append(Pow(base, e))

    # radical splits may reintroduce same-base powers; settle with another pass
    keys = [sort_key(f) for f in rebuilt]
    if len(set(keys)) != len(keys):
        return _canon_mul([Rat(coeff)] + rebuilt)
    rebuilt.sort(key=sort_key)

    if not rebuilt:
        return Rat(coeff)
    if coeff == 1 and len(rebuilt) == 1:
        return rebuilt[0]
    out: list[Node] = []
    if coeff != 1:
        out.append(Rat(coeff))
    out.extend(rebuilt)
    if len(out) == 1:
        return out[0]
    return Mul(tuple(out))


def _coeff_rest(term: Node) -> tuple[Fraction, Node | None]:
    """Split a canonical term into (rational coefficient, symbolic rest)."""
    if isinstance(term, Rat):
        return term.value, None
    if isinstance(term, Mul):
        factors = list(term.factors)
        if factors and isinstance(factors[0], Rat):
            coeff = factors[0].value
            rest = factors[1:]
            if len(rest) == 1:
                return coeff, rest[0]
            return coeff, Mul(tuple(rest))
    return Fraction(1), term


def _canon_add(terms: list[Node]) -> Node:
    flat: list[Node] = []
    stack = list(terms)
    while stack:
        t = stack.pop()
        if isinstance(t, Add):
            stack.extend(t.terms)
        else:
            flat.append(t)

    const = Fraction(0)
    by_rest: dict[tuple, list] = {}
    for t in flat:
        coeff, rest = _coeff_rest(t)
        if rest is None:
            const += coeff
            continue
        key = sort_key(rest)
        if key not in by_rest:
            by_rest[key] = [rest, Fraction(0)]
        by_rest[key][1] += coeff

    rebuilt: list[Node] = []
    for rest, coeff in by_rest.values():
        if coeff == 0:
            continue
        if coeff == 1:
            rebuilt.append(rest)
        else:
            rebuilt.append(_canon_mul([Rat(coeff), rest]))
    rebuilt.sort(key=sort_key)

    if const != 0 or not rebuilt:
        rebuilt.insert(0, Rat(const))
    if len(rebuilt) == 1:
        return rebuilt[0]
    return Add(tuple(rebuilt))


def canon(node: Node) -> Node:
    """Canonical form; idempotent."""
    if isinstance(node, (Rat, Sym, Const, Text)):
        return node
    if isinstance(node, Add):
        return _canon_add([canon(t) for t in node.terms])
    if isinstance(node, Mul):
        return _canon_mul([canon(f) for f in node.factors])
    if isinstance(node, Pow):
        return _canon_pow(canon(node.base), canon(node.exp))
    if isinstance(node, Deg):
        return Deg(canon(node.value))
    if isinstance(node, Tup):
        return Tup(tuple(canon(i) for i in node.items))
    if isinstance(node, Lst):
        return Lst(tuple(canon(i) for i in node.items))
    if isinstance(node, SetN):
        items = [canon(i) for i in node.items]
        uniq: dict[tuple, Node] = {}
        for i in items:
            uniq.setdefault(sort_key(i), i)
        return SetN(tuple(sorted(uniq.values(), key=sort_key)))
    if isinstance(node, Interval):
        return Interval(canon(node.lo), canon(node.hi), node.closed_lo, node.closed_hi)
    if isinstance(node, Rel):
        return Rel(node.op, canon(node.lhs), canon(node.rhs))
    raise TypeError(f"unknown node {node!r}")


# --- evaluation ----------------------------------------------------------


def eval_exact(node: Node) -> Fraction | None:
    """Exact rational value of a closed-form scalar, or None."""
    if isinstance(node, Rat):
        return node.value
    if isinstance(node, Add):
        total = Fraction(0)
        for t in node.terms:
            v = eval_exact(t)
            if v is None:
                return None
            total += v
        return total
    if isinstance(node, Mul):
        total = Fraction(1)
        for f in node.factors:
            v = eval_exact(f)
            if v is None:
                return None
            total *= v
        return total
    if isinstance(node, Pow):
        b = eval_exact(node.base)
        e = eval_exact(node.exp)
        if b is None or e is None or e.denominator != 1:
            return None
        if abs(e.numerator) > _FOLD_EXP_LIMIT:
            return None
        if b == 0 and e.numerator < 0:
            return None
        return b**e.numerator
    return None


class EvalError(ValueError):
    pass


def eval_numeric(node: Node, env: dict[str, object] | None = None):
    """High-precision numeric value (mpf/mpc) under PRECISION_DPS digits."""
    env = env or {}
    with mpmath.workdps(PRECISION_DPS):
        return _eval_mp(node, env)


def _eval_mp(node: Node, env: dict[str, object]):
    if isinstance(node, Rat):
        return mpmath.mpf(node.value.numerator) / mpmath.mpf(node.value.denominator)
    if isinstance(node, Const):
        return mpmath.pi if node.name == "pi" else mpmath.e
    if isinstance(node, Sym):
        if node.name not in env:
            raise EvalError(f"unbound symbol {node.name}")
        v = env[node.name]
        if isinstance(v, Fraction):
            return mpmath.mpf(v.numerator) / mpmath.mpf(v.denominator)
        return mpmath.mpf(v)
    if isinstance(node, Add):
        return mpmath.fsum(_eval_mp(t, env) for t in node.terms)
    if isinstance(node, Mul):
        out = mpmath.mpf(1)
        for f in node.factors:
            out = out * _eval_mp(f, env)
        return out
    if isinstance(node, Pow):
        base = _eval_mp(node.base, env)
        exp = _eval_mp(node.exp, env)
        if base == 0 and exp < 0:
            raise EvalError("division by zero")
        try:
            return mpmath.power(base, exp)
        except (ZeroDivisionError, ValueError) as exc:
            raise EvalError(str(exc))
    raise EvalError(f"not numerically evaluable: {type(node).__name__}")


# --- printing ------------------------------------------------------------


def to_string(node: Node) -> str:
    """Render a node in a form parse_answer accepts (print-parse fixpoint)."""
    return _print(node, 0)


def _print(node: Node, prec: int) -> str:
    # prec: 0 add, 1 mul, 2 pow/atom
    if isinstance(node, Rat):
        v = node.value
        s = str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
        if (v < 0 or v.denominator != 1) and prec >= 1:
            return f"({s})"
        return s
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Const):
        return "\\pi" if node.name == "pi" else "e"
    if isinstance(node, Add):
        s = " + ".join(_print(t, 1) for t in node.terms)
        return f"({s})" if prec >= 1 else s
    if isinstance(node, Mul):
        s = "*".join(_print(f, 2) for f in node.factors)
        return f"({s})" if prec >= 2 else s
    if isinstance(node, Pow):
        if isinstance(node.exp, Rat) and node.exp.value == Fraction(1, 2):
            return "\\sqrt{%s}" % _print(node.base, 0)
        if (
            isinstance(node.exp, Rat)
            and node.exp.value.numerator == 1
            and node.exp.value.denominator > 2
        ):
            return "\\sqrt[%d]{%s}" % (node.exp.value.denominator, _print(node.base, 0))
        return "%s^{%s}" % (_print(node.base, 2), _print(node.exp, 0))
    if isinstance(node, Deg):
        return "%s^\\circ" % _print(node.value, 2)
    if isinstance(node, Tup):
        return "(" + ", ".join(_print(i, 0) for i in node.items) + ")"
    if isinstance(node, Lst):
        return ", ".join(_print(i, 0) for i in node.items)
    if isinstance(node, SetN):
        return "\\{" + ", ".join(_print(i, 0) for i in node.items) + "\\}"
    if isinstance(node, Interval):
        lo = "[" if node.closed_lo else "("
        hi = "]" if node.closed_hi else ")"
        return f"{lo}{_print(node.lo, 0)}, {_print(node.hi, 0)}{hi}"
    if isinstance(node, Rel):
        op = {"=": "=", "<": "<", ">": ">", "<=": "\\leq", ">=": "\\geq"}[node.op]
        return f"{_print(node.lhs, 0)} {op} {_print(node.rhs, 0)}"
    if isinstance(node, Text):
        return node.raw
    raise TypeError(f"unknown node {node!r}")
