"""Parse competition-answer strings (LaTeX-flavoured) into the answer AST.

The grammar covers integers, decimals, \\frac, \\sqrt[n], \\pi, e, ^, plus/minus,
degree markers, products and quotients, tuples "(a, b)", top-level lists
"a, b, c", intervals "[a, b)", sets "\\{...\\}" and single relations
"lhs = rhs". Anything outside the grammar falls back to Text — parsing is
total for valid unicode.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .answer_ast import (
    Add,
    Const,
    Deg,
    Interval,
    Lst,
    Mul,
    Node,
    Pow,
    Rat,
    Rel,
    SetN,
    Sym,
    Text,
    Tup,
    rat,
)


class ParseFail(ValueError):
    pass


_SPACING_CMDS = re.compile(r"\\(?:,|;|!|:|quad|qquad|left|right|displaystyle|limits)\b|\\ |~")
_WRAPPERS = re.compile(r"^\s*(?:\${1,2}|\\\(|\\\[)\s*|\s*(?:\${1,2}|\\\)|\\\])\s*$")


def prepare(raw: str) -> str:
    s = raw.strip()
    prev = None
    while prev != s:
        prev = s
        s = _WRAPPERS.sub("", s).strip()
    s = s.replace("\\dfrac", "\\frac").replace("\\tfrac", "\\frac")
    s = _SPACING_CMDS.sub(" ", s)
    return s.strip()


def text_normalize(raw: str) -> str:
    return " ".join(raw.split())


def normalize_string(raw: str) -> str:
    """Aggressive normal form for the string-equality rule: insensitive to
    whitespace, grouping braces and LaTeX spacing."""
    s = prepare(raw)
    s = s.replace("\\le ", "\\leq ").replace("\\ge ", "\\geq ")
    s = re.sub(r"\\le\b", "\\\\leq", s)
    s = re.sub(r"\\ge\b", "\\\\geq", s)
    s = s.replace("\\{", "(").replace("\\}", ")")
    s = s.replace("{", "").replace("}", "")
    s = s.replace("\\degree", "^\\circ").replace("°", "^\\circ").replace("∘", "\\circ")
    s = re.sub(r"\s+", "", s)
    s = s.rstrip(".")
    return s


# --- tokenizer -----------------------------------------------------------

_ATOM_CMDS = {"frac", "sqrt", "pi", "infty"}
_MUL_CMDS = {"cdot", "times"}
_REL_MAP = {"le": "<=", "leq": "<=", "ge": ">=", "geq": ">=", "lt": "<", "gt": ">"}


def tokenize(s: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    i = 0
    n = len(s)
    while i < n:
        c = s[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and s[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (s[j].isdigit() or (s[j] == "." and not seen_dot)):
                if s[j] == ".":
                    # a dot not followed by a digit ends the number (sentence period)
                    if j + 1 >= n or not s[j + 1].isdigit():
                        break
                    seen_dot = True
                j += 1
            tokens.append(("num", s[i:j]))
            i = j
            continue
        if c == "\\":
            j = i + 1
            while j < n and s[j].isalpha():
                j += 1
            if j == i + 1:  # escaped single char: \{ \} \% \$ ...
                if j < n:
                    ch = s[j]
                    if ch == "{":
                        tokens.append(("setopen", "\\{"))
                    elif ch == "}":
                        tokens.append(("setclose", "\\}"))
                    elif ch == "%":
                        tokens.append(("percent", "%"))
                    elif ch == "$":
                        pass
                    else:
                        raise ParseFail(f"unsupported escape \\{ch}")
                    i = j + 1
                    continue
                raise ParseFail("dangling backslash")
            name = s[i + 1 : j]
            if name in _ATOM_CMDS or name in _MUL_CMDS:
                tokens.append(("cmd", name))
            elif name == "div":
                tokens.append(("op", "/"))
            elif name in ("circ", "degree"):
                tokens.append(("circ", name))
            elif name == "pm":
                tokens.append(("pm", "pm"))
            elif name in _REL_MAP:
                tokens.append(("rel", _REL_MAP[name]))
            else:
                raise ParseFail(f"unsupported command \\{name}")
            i = j
            continue
        if c.isalpha():
            j = i
            while j < n and s[j].isalpha():
                j += 1
            if j - i > 1:
                raise ParseFail(f"word {s[i:j]!r}")
            tokens.append(("sym", c))
            i = j
            continue
        if c in "+-*/^!":
            tokens.append(("op", c))
        elif c in "=<>":
            if c in "<>" and i + 1 < n and s[i + 1] == "=":
                tokens.append(("rel", c + "="))
                i += 2
                continue
            tokens.append(("rel", c if c != "=" else "="))
        elif c == "≤":
            tokens.append(("rel", "<="))
        elif c == "≥":
            tokens.append(("rel", ">="))
        elif c == ",":
            tokens.append(("comma", c))
        elif c == "(":
            tokens.append(("lparen", c))
        elif c == ")":
            tokens.append(("rparen", c))
        elif c == "[":
            tokens.append(("lbrack", c))
        elif c == "]":
            tokens.append(("rbrack", c))
        elif c == "{":
            tokens.append(("lbrace", c))
        elif c == "}":
            tokens.append(("rbrace", c))
        elif c in "°":
            tokens.append(("circ", "degree"))
        elif c == "∘":
            tokens.append(("circ", "circ"))
        elif c == "±":
            tokens.append(("pm", "pm"))
        elif c == "%":
            tokens.append(("percent", c))
        else:
            raise ParseFail(f"unsupported char {c!r}")
        i += 1
    return tokens


# --- recursive descent ---------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise ParseFail("unexpected end")
        self.pos += 1
        return tok

    def expect(self, kind: str) -> tuple[str, str]:
        tok = self.next()
        if tok[0] != kind:
            raise ParseFail(f"expected {kind}, got {tok}")
        return tok

    # top level: relation/expression, optionally a comma list
    def parse_top(self) -> Node:
        items = [self.parse_element()]
        while self.peek() and self.peek()[0] == "comma":
            self.next()
            items.append(self.parse_element())
        if self.peek() is not None:
            raise ParseFail(f"trailing input {self.peek()}")
        if len(items) == 1:
            return items[0]
        return Lst(tuple(items))

    def parse_element(self) -> Node:
        lhs = self.parse_expr()
        tok = self.peek()
        if tok and tok[0] == "rel":
            op = self.next()[1]
            rhs = self.parse_expr()
            if self.peek() and self.peek()[0] == "rel":
                raise ParseFail("chained relation")
            return Rel(op, lhs, rhs)
        return lhs

    def parse_expr(self) -> Node:
        first = self.parse_term()
        terms = [first]
        pm_split: list[Node] | None = None
        while True:
            tok = self.peek()
            if tok and tok[0] == "op" and tok[1] in "+-":
                self.next()
                t = self.parse_term()
                terms.append(t if tok[1] == "+" else Mul((rat(-1), t)))
            elif tok and tok[0] == "pm":
                self.next()
                t = self.parse_term()
                base = Add(tuple(terms)) if len(terms) > 1 else terms[0]
                pm_split = [Add((base, t)), Add((base, Mul((rat(-1), t))))]
                terms = []
                # a +/- b may be followed by more additive terms
                while True:
                    tok2 = self.peek()
                    if tok2 and tok2[0] == "op" and tok2[1] in "+-":
                        self.next()
                        tt = self.parse_term()
                        tt = tt if tok2[1] == "+" else Mul((rat(-1), tt))
                        pm_split = [Add((v, tt)) for v in pm_split]
                    else:
                        break
                return SetN(tuple(pm_split))
            else:
                break
        return Add(tuple(terms)) if len(terms) > 1 else terms[0]

    def parse_term(self) -> Node:
        factors = [self.parse_factor()]
        while True:
            tok = self.peek()
            if tok is None:
                break
            if tok[0] == "op" and tok[1] == "*":
                self.next()
                factors.append(self.parse_factor())
            elif tok[0] == "cmd" and tok[1] in _MUL_CMDS:
                self.next()
                factors.append(self.parse_factor())
            elif tok[0] == "op" and tok[1] == "/":
                self.next()
                factors.append(Pow(self.parse_factor(), rat(-1)))
            elif self._starts_atom(tok):
                factors.append(self.parse_factor())
            else:
                break
        return Mul(tuple(factors)) if len(factors) > 1 else factors[0]

    @staticmethod
    def _starts_atom(tok: tuple[str, str]) -> bool:
        return tok[0] in ("num", "sym", "lparen", "lbrace", "setopen") or (
            tok[0] == "cmd" and tok[1] in _ATOM_CMDS
        )

    def parse_factor(self) -> Node:
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] in "+-":
            self.next()
            inner = self.parse_factor()
            return inner if tok[1] == "+" else Mul((rat(-1), inner))
        if tok and tok[0] == "pm":
            self.next()
            inner = self.parse_factor()
            return SetN((inner, Mul((rat(-1), inner))))
        return self.parse_postfix()

    def parse_postfix(self) -> Node:
        node = self.parse_atom()
        while True:
            tok = self.peek()
            if tok is None:
                break
            if tok[0] == "op" and tok[1] == "^":
                self.next()
                exp = self.parse_exponent()
                if exp == "deg":
                    node = Deg(node)
                else:
                    node = Pow(node, exp)
            elif tok[0] == "circ":
                self.next()
                node = Deg(node)
            elif tok[0] == "op" and tok[1] == "!":
                self.next()
                node = _factorial(node)
            elif tok[0] == "percent":
                self.next()
                node = Mul((node, rat(1, 100)))
            else:
                break
        return node

    def parse_exponent(self):
        tok = self.peek()
        if tok is None:
            raise ParseFail("missing exponent")
        if tok[0] == "circ":
            self.next()
            return "deg"
        if tok[0] == "lbrace":
            self.next()
            inner = self.peek()
            if inner and inner[0] == "circ":
                self.next()
                self.expect("rbrace")
                return "deg"
            exp = self.parse_expr()
            self.expect("rbrace")
            return exp
        if tok[0] == "num":
            self.next()
            return _num_node(tok[1])
        if tok[0] == "sym":
            self.next()
            return _sym_node(tok[1])
        if tok[0] == "op" and tok[1] == "-":
            self.next()
            return Mul((rat(-1), self.parse_exponent()))
        if tok[0] == "lparen":
            return self.parse_atom()
        raise ParseFail(f"bad exponent {tok}")

    def parse_atom(self) -> Node:
        tok = self.next()
        kind, value = tok
        if kind == "num":
            return _num_node(value)
        if kind == "sym":
            return _sym_node(value)
        if kind == "cmd" and value == "pi":
            return Const("pi")
        if kind == "cmd" and value == "infty":
            return Sym("infty")
        if kind == "cmd" and value == "frac":
            a = self.parse_braced()
            b = self.parse_braced()
            return Mul((a, Pow(b, rat(-1))))
        if kind == "cmd" and value == "sqrt":
            index: Node = rat(2)
            if self.peek() and self.peek()[0] == "lbrack":
                self.next()
                index = self.parse_expr()
                self.expect("rbrack")
            body = self.parse_braced()
            return Pow(body, Pow(index, rat(-1)))
        if kind == "lparen":
            return self.parse_paren_group()
        if kind == "lbrack":
            return self.parse_interval(closed_lo=True)
        if kind == "lbrace":
            return self.parse_brace_group("rbrace")
        if kind == "setopen":
            return self.parse_brace_group("setclose")
        raise ParseFail(f"unexpected {tok}")

    def parse_braced(self) -> Node:
        tok = self.peek()
        if tok and tok[0] == "lbrace":
            self.next()
            node = self.parse_expr()
            self.expect("rbrace")
            return node
        # LaTeX allows a bare token argument: \frac12
        if tok and tok[0] == "num":
            self.next()
            text = tok[1]
            if len(text) > 1 and "." not in text:
                # \frac12 means frac{1}{2}: only first digit binds
                self.tokens.insert(self.pos, ("num", text[1:]))
                return _num_node(text[0])
            return _num_node(text)
        if tok and tok[0] == "sym":
            self.next()
            return _sym_node(tok[1])
        raise ParseFail("expected braced group")

    def parse_paren_group(self) -> Node:
        items = [self.parse_element()]
        while self.peek() and self.peek()[0] == "comma":
            self.next()
            items.append(self.parse_element())
        closer = self.next()
        if closer[0] == "rparen":
            if len(items) == 1:
                return items[0]
            return Tup(tuple(items))
        if closer[0] == "rbrack" and len(items) == 2:
            return Interval(items[0], items[1], closed_lo=False, closed_hi=True)
        raise ParseFail(f"bad paren group close {closer}")

    def parse_interval(self, closed_lo: bool) -> Node:
        lo = self.parse_expr()
        self.expect("comma")
        hi = self.parse_expr()
        closer = self.next()
        if closer[0] == "rbrack":
            return Interval(lo, hi, closed_lo, True)
        if closer[0] == "rparen":
            return Interval(lo, hi, closed_lo, False)
        raise ParseFail(f"bad interval close {closer}")

    def parse_brace_group(self, close_kind: str) -> Node:
        items = [self.parse_element()]
        while self.peek() and self.peek()[0] == "comma":
            self.next()
            items.append(self.parse_element())
        self.expect(close_kind)
        if close_kind == "setclose" or len(items) > 1:
            return SetN(tuple(items))
        return items[0]


def _num_node(text: str) -> Rat:
    text = text.rstrip(".")
    if not text:
        raise ParseFail("empty number")
    return Rat(Fraction(text))


def _sym_node(ch: str) -> Node:
    if ch == "e":
        return Const("e")
    return Sym(ch)


def _factorial(node: Node) -> Node:
    from math import factorial

    if isinstance(node, Rat) and node.value.denominator == 1 and 0 <= node.value <= 500:
        return Rat(Fraction(factorial(node.value.numerator)))
    raise ParseFail("factorial of non-integer")


def parse_answer(raw: str) -> Node:
    """Total parse: AST on success, Text(normalized) on grammar failure."""
    s = prepare(raw)
    if not s:
        return Text(text_normalize(raw))
    try:
        tokens = tokenize(s)
        if not tokens:
            return Text(text_normalize(raw))
        return _Parser(tokens).parse_top()
    except ParseFail:
        return Text(text_normalize(raw))
    except (ZeroDivisionError, RecursionError):
        return Text(text_normalize(raw))
