"""Boxed-answer extraction, equivalence checking and answer-type labels.

The equivalence decision ladder:
  1. normalized string equality                  -> method "string"
  2. closed-form numerics: exact canonical-AST equality, else high-precision
     evaluation within 1e-9 relative tolerance   -> "numeric_value"/"symbolic_exact"
  3. symbol-bearing expressions: canonical equality, else agreement at 8
     seeded random rational points               -> "symbolic_exact"/"numeric_probe"
  4. tuples element-wise (ordered), sets order-insensitive; otherwise unequal.
"""

from __future__ import annotations

import hashlib
import json
import random
import sys
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import mpmath

from .answer_ast import (
    Deg,
    EvalError,
    Interval,
    Lst,
    Node,
    Rel,
    SetN,
    Text,
    Tup,
    canon,
    eval_exact,
    eval_numeric,
    free_symbols,
    sort_key,
)
from .answer_parse import normalize_string, parse_answer, text_normalize

REL_TOL = Fraction(1, 10**9)
PROBE_POINTS = 8


class ExtractError(ValueError):
    pass


@dataclass(frozen=True)
class BoxedAnswer:
    raw: str
    span: tuple[int, int]


class AnswerType(Enum):
    EQUATION = "equation"
    EXPRESSION = "expression"
    LIST = "list"
    NUMERIC_DEC = "numeric_dec"
    NUMERIC_INT = "numeric_int"
    NUMERIC_IRR = "numeric_irr"
    OTHERS = "others"


class Method(Enum):
    STRING = "string"
    NUMERIC_VALUE = "numeric_value"
    SYMBOLIC_EXACT = "symbolic_exact"
    NUMERIC_PROBE = "numeric_probe"


@dataclass(frozen=True)
class EquivalenceVerdict:
    equivalent: bool
    method: Method
    detail: str = ""


def extract_boxed(text: str) -> BoxedAnswer | None:
    """Last \\boxed{...} in text, brace-aware; None when absent."""
    marker = "\\boxed"
    idx = text.rfind(marker)
    if idx < 0:
        return None
    scan = idx + len(marker)
    while scan < len(text) and text[scan].isspace():
        scan += 1
    if scan >= len(text) or text[scan] != "{":
        raise ExtractError("\\boxed without braced argument")
    depth = 1
    start = scan + 1
    pos = start
    while pos < len(text):
        ch = text[pos]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                raw = text[start:pos]
                if not raw.strip():
                    raise ExtractError("empty \\boxed{}")
                return BoxedAnswer(raw=raw, span=(start, pos))
        pos += 1
    raise ExtractError("unbalanced braces after \\boxed{")


# --- equivalence ---------------------------------------------------------


def _close(x, y) -> bool:
    try:
        ax, ay = abs(x), abs(y)
    except TypeError:
        return False
    scale = max(ax, ay)
    if scale == 0:
        return True
    return abs(x - y) / scale <= mpmath.mpf(REL_TOL.numerator) / REL_TOL.denominator


def _probe_env(symbols: frozenset[str], seed: bytes, attempt: int) -> dict[str, Fraction]:
    rng = random.Random(seed + attempt.to_bytes(2, "big"))
    return {
        name: Fraction(rng.randint(2, 97), rng.randint(1, 9))
        for name in sorted(symbols)
    }


def _probe(a: Node, b: Node, pair_key: str) -> bool:
    syms = free_symbols(a) | free_symbols(b)
    seed = hashlib.sha256(pair_key.encode("utf-8")).digest()
    passed = 0
    attempt = 0
    while passed < PROBE_POINTS and attempt < PROBE_POINTS * 4:
        env = _probe_env(syms, seed, attempt)
        attempt += 1
        try:
            va = eval_numeric(a, env)
            vb = eval_numeric(b, env)
        except EvalError:
            continue  # pole or unbound; redraw
        if not _close(va, vb):
            return False
        passed += 1
    return passed == PROBE_POINTS


def _scalar_equivalent(a: Node, b: Node, pair_key: str) -> EquivalenceVerdict:
    ca, cb = canon(a), canon(b)
    exact_a, exact_b = eval_exact(ca), eval_exact(cb)
    if exact_a is not None and exact_b is not None:
        eq = exact_a == exact_b
        return EquivalenceVerdict(eq, Method.NUMERIC_VALUE, "exact rational values")
    syms_a, syms_b = free_symbols(ca), free_symbols(cb)
    if not syms_a and not syms_b:
        if sort_key(ca) == sort_key(cb):
            return EquivalenceVerdict(True, Method.SYMBOLIC_EXACT, "canonical forms equal")
        try:
            va, vb = eval_numeric(ca), eval_numeric(cb)
        except EvalError:
            return EquivalenceVerdict(False, Method.SYMBOLIC_EXACT, "not evaluable")
        if _close(va, vb):
            return EquivalenceVerdict(True, Method.NUMERIC_VALUE, "high-precision values agree")
        return EquivalenceVerdict(False, Method.NUMERIC_VALUE, "values differ")
    if sort_key(ca) == sort_key(cb):
        return EquivalenceVerdict(True, Method.SYMBOLIC_EXACT, "canonical forms equal")
    if _probe(ca, cb, pair_key):
        return EquivalenceVerdict(
            True, Method.NUMERIC_PROBE, f"agree at {PROBE_POINTS} random rational points"
        )
    return EquivalenceVerdict(False, Method.NUMERIC_PROBE, "probe points differ")


def _node_equivalent(a: Node, b: Node, pair_key: str) -> EquivalenceVerdict:
    if isinstance(a, Text) or isinstance(b, Text):
        return EquivalenceVerdict(False, Method.STRING, "text answers differ")
    if isinstance(a, Deg) != isinstance(b, Deg):
        return EquivalenceVerdict(False, Method.SYMBOLIC_EXACT, "degree unit mismatch")
    if isinstance(a, Deg) and isinstance(b, Deg):
        return _node_equivalent(a.value, b.value, pair_key)
    if isinstance(a, Rel) or isinstance(b, Rel):
        if not (isinstance(a, Rel) and isinstance(b, Rel)):
            return EquivalenceVerdict(False, Method.SYMBOLIC_EXACT, "relation vs value")
        pairs = [((a.lhs, b.lhs), (a.rhs, b.rhs))]
        if a.op == "=" and b.op == "=":
            pairs.append(((a.lhs, b.rhs), (a.rhs, b.lhs)))
        if a.op == b.op:
            for (l_pair, r_pair) in pairs:
                vl = _node_equivalent(l_pair[0], l_pair[1], pair_key + "/l")
                vr = _node_equivalent(r_pair[0], r_pair[1], pair_key + "/r")
                if vl.equivalent and vr.equivalent:
                    return EquivalenceVerdict(True, _worst(vl.method, vr.method), "both sides")
        return EquivalenceVerdict(False, Method.SYMBOLIC_EXACT, "relations differ")
    if isinstance(a, Tup) or isinstance(b, Tup):
        if not (isinstance(a, Tup) and isinstance(b, Tup)) or len(a.items) != len(b.items):
            return EquivalenceVerdict(False, Method.SYMBOLIC_EXACT, "tuple shape mismatch")
        return _ordered_items(a.items, b.items, pair_key)
    if isinstance(a, Interval) or isinstance(b, Interval):
        if not (isinstance(a, Interval) and isinstance(b, Interval)):
            return EquivalenceVerdict(False, Method.SYMBOLIC_EXACT, "interval vs value")
        if (a.closed_lo, a.closed_hi) != (b.closed_lo, b.closed_hi):
            return EquivalenceVerdict(False, Method.SYMBOLIC_EXACT, "interval closedness")
        return _ordered_items((a.lo, a.hi), (b.lo, b.hi), pair_key)
    if isinstance(a, (SetN, Lst)) or isinstance(b, (SetN, Lst)):
        items_a = a.items if isinstance(a, (SetN, Lst)) else (a,)
        items_b = b.items if isinstance(b, (SetN, Lst)) else (b,)
        return _unordered_items(items_a, items_b, pair_key)
    return _scalar_equivalent(a, b, pair_key)


_METHOD_ORDER = [Method.STRING, Method.NUMERIC_VALUE, Method.SYMBOLIC_EXACT, Method.NUMERIC_PROBE]


def _worst(*methods: Method) -> Method:
    return max(methods, key=_METHOD_ORDER.index)


def _ordered_items(items_a, items_b, pair_key: str) -> EquivalenceVerdict:
    methods = []
    for i, (x, y) in enumerate(zip(items_a, items_b)):
        v = _node_equivalent(x, y, f"{pair_key}/{i}")
        if not v.equivalent:
            return EquivalenceVerdict(False, v.method, f"item {i}: {v.detail}")
        methods.append(v.method)
    return EquivalenceVerdict(True, _worst(*methods), "all items")


def _unordered_items(items_a, items_b, pair_key: str) -> EquivalenceVerdict:
    if len(items_a) != len(items_b):
        return EquivalenceVerdict(False, Method.SYMBOLIC_EXACT, "cardinality mismatch")
    remaining = list(items_b)
    methods = []
    for i, x in enumerate(items_a):
        hit = None
        for j, y in enumerate(remaining):
            v = _node_equivalent(x, y, f"{pair_key}/{i}")
            if v.equivalent:
                hit = (j, v)
                break
        if hit is None:
            return EquivalenceVerdict(False, Method.SYMBOLIC_EXACT, "unmatched element")
        remaining.pop(hit[0])
        methods.append(hit[1].method)
    return EquivalenceVerdict(True, _worst(*methods), "all elements matched")


def equivalent(a: str, b: str) -> EquivalenceVerdict:
    """Total equivalence check over raw answer strings."""
    na, nb = normalize_string(a), normalize_string(b)
    if na == nb:
        return EquivalenceVerdict(True, Method.STRING, "normalized strings equal")
    pa, pb = parse_answer(a), parse_answer(b)
    if isinstance(pa, Text) and isinstance(pb, Text):
        if text_normalize(pa.raw) == text_normalize(pb.raw):
            return EquivalenceVerdict(True, Method.STRING, "normalized text equal")
        return EquivalenceVerdict(False, Method.STRING, "text answers differ")
    pair_key = f"{na}\x00{nb}"
    return _node_equivalent(pa, pb, pair_key)


# --- answer-type classification -----------------------------------------


def classify_answer_type(raw: str) -> AnswerType:
    node = parse_answer(raw)
    if isinstance(node, Text):
        return AnswerType.OTHERS
    if isinstance(node, Rel):
        return AnswerType.EQUATION
    if isinstance(node, (Tup, Lst, SetN)):
        return AnswerType.LIST
    if isinstance(node, Interval):
        return AnswerType.OTHERS
    inner = node.value if isinstance(node, Deg) else node
    c = canon(inner)
    exact = eval_exact(c)
    if exact is not None:
        if exact.denominator == 1:
            return AnswerType.NUMERIC_INT
        return AnswerType.NUMERIC_DEC
    if free_symbols(c):
        return AnswerType.EXPRESSION
    return AnswerType.NUMERIC_IRR


# --- CLI -----------------------------------------------------------------


def eqcheck_main(argv: list[str] | None = None) -> int:
    """`eqcheck <a> <b>`: print the verdict as JSON, exit 0/1."""
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 2:
        print("usage: eqcheck <answer-a> <answer-b>", file=sys.stderr)
        return 2
    verdict = equivalent(args[0], args[1])
    print(
        json.dumps(
            {
                "a": args[0],
                "b": args[1],
                "equivalent": verdict.equivalent,
                "method": verdict.method.value,
                "detail": verdict.detail,
            }
        )
    )
    return 0 if verdict.equivalent else 1


if __name__ == "__main__":
    sys.exit(eqcheck_main())
