"""Co-safe LTL over finite traces: syntax tree, text grammar, semantics, progression.

Formulas are in positive normal form: negation is only allowed directly in
front of an atomic proposition.  The only temporal operators are strong Next,
Until and the derived Eventually, which keeps every formula syntactically
co-safe: satisfaction is witnessed by a finite prefix and is monotone under
trace extension.

The concrete grammar (precedence low to high: `|`, `&`, `U`, then the unary
`!`/`X`/`F`):

    f := T | <ident> | <ident>(<ident>, ...) | ! f | f & f | f | f
       | X f | f U f | F f | ( f )

`U` is right-associative, `&` and `|` are left-associative.  API-style atoms
such as ``Pickup(plate)`` are folded into a single canonical proposition name
(``pickup_plate``).  Identifiers are case-normalized to lower case.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import DomainError


class ParseError(DomainError):
    """Malformed formula text; carries the byte offset and the expected tokens."""

    def __init__(self, message: str, offset: int, expected: Iterable[str]):
        self.offset = offset
        self.expected = frozenset(expected)
        exp = ", ".join(sorted(self.expected))
        super().__init__(f"{message} at offset {offset} (expected: {exp})")


class NotCoSafeError(DomainError):
    """The formula leaves the co-safe fragment (negation above a non-atom)."""


def _node_hash(self) -> int:
    # Progression shares subtrees across states; the generated dataclass
    # hash rewalks the whole tree on every call, which goes exponential on
    # that sharing. Cache per node (an explicit __hash__ in the class body
    # keeps the dataclass machinery from replacing it).
    h = self.__dict__.get("_hash")
    if h is None:
        h = hash((type(self).__name__,
                  *(getattr(self, name) for name in self.__dataclass_fields__)))
        self.__dict__["_hash"] = h
    return h


@dataclass(frozen=True)
class TrueBool:
    pass


@dataclass(frozen=True)
class FalseBool:
    pass


@dataclass(frozen=True)
class Prop:
    name: str


@dataclass(frozen=True)
class Not:
    operand: "Formula"

    __hash__ = _node_hash


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"

    __hash__ = _node_hash


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"

    __hash__ = _node_hash


@dataclass(frozen=True)
class Next:
    operand: "Formula"

    __hash__ = _node_hash


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"

    __hash__ = _node_hash


@dataclass(frozen=True)
class Eventually:
    operand: "Formula"

    __hash__ = _node_hash


Formula = TrueBool | FalseBool | Prop | Not | And | Or | Next | Until | Eventually

TRUE = TrueBool()
FALSE = FalseBool()

# "At least one more step": T U T holds exactly on non-empty traces.
STEP = Until(TRUE, TRUE)

Valuation = frozenset[str]
Trace = tuple[Valuation, ...]

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_RESERVED = {"T", "X", "F", "U"}


def canonical_name(text: str) -> str:
    """Normalize an identifier: lower case, non-alphanumerics collapsed to _."""
    out = re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")
    if not out:
        raise DomainError(f"identifier {text!r} has no usable characters")
    return out


def canonical_call(verb: str, args: Sequence[str]) -> str:
    """Canonical proposition name for an API call, e.g. Pickup(plate) -> pickup_plate."""
    return "_".join(canonical_name(part) for part in (verb, *args))


# ---------------------------------------------------------------------------
# Parsing


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "()!&|,":
            kind = {"(": "lparen", ")": "rparen", "!": "not", "&": "and",
                    "|": "or", ",": "comma"}[c]
            tokens.append(_Token(kind, c, i))
            i += 1
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            word = m.group(0)
            if word == "T":
                tokens.append(_Token("true", word, i))
            elif word in _RESERVED:
                tokens.append(_Token(word, word, i))
            else:
                tokens.append(_Token("ident", word, i))
            i = m.end()
            continue
        raise ParseError(f"unexpected character {c!r}", i,
                         ("T", "identifier", "(", "!", "X", "F"))
    tokens.append(_Token("eof", "", n))
    return tokens


_PRIMARY_EXPECTED = ("T", "identifier", "(", "!", "X", "F")


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, expected: Iterable[str]) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"unexpected token {tok.text or 'end of input'!r}",
                             tok.offset, expected)
        return self.take()

    def formula(self) -> Formula:
        return self.or_expr()

    def or_expr(self) -> Formula:
        node = self.and_expr()
        while self.peek().kind == "or":
            self.take()
            node = Or(node, self.and_expr())
        return node

    def and_expr(self) -> Formula:
        node = self.until_expr()
        while self.peek().kind == "and":
            self.take()
            node = And(node, self.until_expr())
        return node

    def until_expr(self) -> Formula:
        node = self.unary_expr()
        if self.peek().kind == "U":
            self.take()
            return Until(node, self.until_expr())
        return node

    def unary_expr(self) -> Formula:
        tok = self.peek()
        if tok.kind == "not":
            self.take()
            operand = self.unary_expr()
            # !T is the concrete spelling of the false constant.
            return FALSE if operand == TRUE else Not(operand)
        if tok.kind == "X":
            self.take()
            return Next(self.unary_expr())
        if tok.kind == "F":
            self.take()
            return Eventually(self.unary_expr())
        return self.primary()

    def primary(self) -> Formula:
        tok = self.peek()
        if tok.kind == "true":
            self.take()
            return TRUE
        if tok.kind == "lparen":
            self.take()
            node = self.formula()
            self.expect("rparen", (")",))
            return node
        if tok.kind == "ident":
            self.take()
            if self.peek().kind == "lparen":
                # API-style atom: ident(arg, arg, ...) folds to one proposition.
                self.take()
                args = [self.expect("ident", ("identifier",)).text]
                while self.peek().kind == "comma":
                    self.take()
                    args.append(self.expect("ident", ("identifier",)).text)
                self.expect("rparen", (")", ","))
                return Prop(canonical_call(tok.text, args))
            return Prop(tok.text.lower())
        raise ParseError(f"unexpected token {tok.text or 'end of input'!r}",
                         tok.offset, _PRIMARY_EXPECTED)


def parse(text: str) -> Formula:
    """Parse formula text. Raises ParseError (with offset) on malformed input."""
    if not text or text.isspace():
        raise ParseError("empty formula", 0, _PRIMARY_EXPECTED)
    parser = _Parser(_tokenize(text))
    node = parser.formula()
    tail = parser.peek()
    if tail.kind != "eof":
        raise ParseError(f"trailing input {tail.text!r}", tail.offset,
                         ("end of input", "&", "|", "U"))
    return node


# ---------------------------------------------------------------------------
# Printing

_PREC_OR = 1
_PREC_AND = 2
_PREC_UNTIL = 3
_PREC_UNARY = 4
_PREC_ATOM = 5


def _unary(sym: str, operand: Formula) -> str:
    if isinstance(operand, (Prop, TrueBool, FalseBool, Not, Next, Eventually)):
        sep = "" if sym == "!" else " "
        return sym + sep + _fmt(operand, _PREC_UNARY)
    return sym + "(" + _fmt(operand, 0) + ")"


def _fmt(f: Formula, min_prec: int) -> str:
    if isinstance(f, TrueBool):
        return "T"
    if isinstance(f, FalseBool):
        return "!T"
    if isinstance(f, Prop):
        return f.name
    if isinstance(f, Not):
        return _wrap(_unary("!", f.operand), _PREC_UNARY, min_prec)
    if isinstance(f, Next):
        return _wrap(_unary("X", f.operand), _PREC_UNARY, min_prec)
    if isinstance(f, Eventually):
        return _wrap(_unary("F", f.operand), _PREC_UNARY, min_prec)
    if isinstance(f, Until):
        # Right-associative: the left operand needs strictly higher precedence.
        s = _fmt(f.left, _PREC_UNARY) + " U " + _fmt(f.right, _PREC_UNTIL)
        return _wrap(s, _PREC_UNTIL, min_prec)
    if isinstance(f, And):
        s = _fmt(f.left, _PREC_AND) + " & " + _fmt(f.right, _PREC_AND + 1)
        return _wrap(s, _PREC_AND, min_prec)
    if isinstance(f, Or):
        s = _fmt(f.left, _PREC_OR) + " | " + _fmt(f.right, _PREC_OR + 1)
        return _wrap(s, _PREC_OR, min_prec)
    raise TypeError(f"not a formula: {f!r}")


def _wrap(s: str, prec: int, min_prec: int) -> str:
    return s if prec >= min_prec else "(" + s + ")"


def to_text(f: Formula) -> str:
    """Render a formula in the concrete grammar. parse(to_text(f)) == f."""
    return _fmt(f, 0)


# ---------------------------------------------------------------------------
# Structure helpers


def props(f: Formula) -> tuple[str, ...]:
    """Proposition names in first-occurrence order."""
    seen: dict[str, None] = {}
    # Revisiting a shared subtree cannot add names, so skip by identity to
    # stay linear on progression results.
    done: set[int] = set()

    def walk(g: Formula) -> None:
        if id(g) in done:
            return
        done.add(id(g))
        if isinstance(g, Prop):
            seen.setdefault(g.name)
        elif isinstance(g, (Not, Next, Eventually)):
            walk(g.operand)
        elif isinstance(g, (And, Or, Until)):
            walk(g.left)
            walk(g.right)

    walk(f)
    return tuple(seen)


def is_sc_ltl(f: Formula) -> bool:
    """True when every negation sits directly above an atomic proposition."""
    if isinstance(f, Not):
        return isinstance(f.operand, Prop)
    if isinstance(f, (Next, Eventually)):
        return is_sc_ltl(f.operand)
    if isinstance(f, (And, Or, Until)):
        return is_sc_ltl(f.left) and is_sc_ltl(f.right)
    return isinstance(f, (TrueBool, FalseBool, Prop))


def rename_props(f: Formula, mapping: Mapping[str, str]) -> Formula:
    if isinstance(f, Prop):
        return Prop(mapping.get(f.name, f.name))
    if isinstance(f, Not):
        return Not(rename_props(f.operand, mapping))
    if isinstance(f, Next):
        return Next(rename_props(f.operand, mapping))
    if isinstance(f, Eventually):
        return Eventually(rename_props(f.operand, mapping))
    if isinstance(f, And):
        return And(rename_props(f.left, mapping), rename_props(f.right, mapping))
    if isinstance(f, Or):
        return Or(rename_props(f.left, mapping), rename_props(f.right, mapping))
    if isinstance(f, Until):
        return Until(rename_props(f.left, mapping), rename_props(f.right, mapping))
    return f


def as_trace(steps: Iterable[Iterable[str]]) -> Trace:
    return tuple(frozenset(str(p) for p in step) for step in steps)


# ---------------------------------------------------------------------------
# Finite-trace semantics

# Positions run 0..n-1; a virtual position n past the end makes the empty
# trace uniform: only pure boolean structure over T can hold there, anything
# that needs an actual step (atoms, negated atoms, X, U, F) is false.
#
# Satisfaction vectors are bitmasks: bit i holds satisfaction at position i,
# bit n is the virtual position.  Whole-trace operators then reduce to a few
# integer operations, which keeps exhaustive trace sweeps affordable.


def _sat_vector(f: Formula, steps: Trace, n: int,
                memo: dict[Formula, int]) -> int:
    cached = memo.get(f)
    if cached is not None:
        return cached
    real = (1 << n) - 1
    if isinstance(f, TrueBool):
        vec = (1 << (n + 1)) - 1
    elif isinstance(f, FalseBool):
        vec = 0
    elif isinstance(f, Prop):
        vec = 0
        for i in range(n):
            if f.name in steps[i]:
                vec |= 1 << i
    elif isinstance(f, Not):
        vec = ~_sat_vector(f.operand, steps, n, memo) & real
    elif isinstance(f, And):
        vec = (_sat_vector(f.left, steps, n, memo)
               & _sat_vector(f.right, steps, n, memo))
    elif isinstance(f, Or):
        vec = (_sat_vector(f.left, steps, n, memo)
               | _sat_vector(f.right, steps, n, memo))
    elif isinstance(f, Next):
        # Strong Next: a real next position must exist and satisfy the operand.
        sub = _sat_vector(f.operand, steps, n, memo)
        vec = (sub & real) >> 1
    elif isinstance(f, Until):
        a = _sat_vector(f.left, steps, n, memo) & real
        b = _sat_vector(f.right, steps, n, memo) & real
        vec = b
        while True:
            grown = vec | (a & (vec >> 1)) | b
            if grown == vec:
                break
            vec = grown
    elif isinstance(f, Eventually):
        vec = _sat_vector(f.operand, steps, n, memo) & real
        shift = 1
        while shift <= n:
            vec |= vec >> shift
            shift <<= 1
    else:
        raise TypeError(f"not a formula: {f!r}")
    memo[f] = vec
    return vec


def evaluate(f: Formula, trace: Iterable[Iterable[str]]) -> bool:
    """Finite-trace satisfaction. Rejects formulas outside the co-safe fragment."""
    if not is_sc_ltl(f):
        raise NotCoSafeError(f"not co-safe: {to_text(f)}")
    steps = as_trace(trace)
    return bool(_sat_vector(f, steps, len(steps), {}) & 1)


# ---------------------------------------------------------------------------
# Simplification and progression


@lru_cache(maxsize=None)
def nullable(f: Formula) -> bool:
    """Whether the empty trace satisfies f."""
    if isinstance(f, TrueBool):
        return True
    if isinstance(f, And):
        return nullable(f.left) and nullable(f.right)
    if isinstance(f, Or):
        return nullable(f.left) or nullable(f.right)
    return False


def conj(parts: Iterable[Formula]) -> Formula:
    """Conjunction with True/False absorption, flattening and deduplication."""
    out: list[Formula] = []
    seen: set[Formula] = set()

    def add(p: Formula) -> bool:
        if isinstance(p, And):
            return add(p.left) and add(p.right)
        if isinstance(p, FalseBool):
            return False
        if isinstance(p, TrueBool) or p in seen:
            return True
        seen.add(p)
        out.append(p)
        return True

    for part in parts:
        if not add(part):
            return FALSE
    if not out:
        return TRUE
    return reduce(And, out)


def disj(parts: Iterable[Formula]) -> Formula:
    """Disjunction with True/False absorption, flattening and deduplication."""
    out: list[Formula] = []
    seen: set[Formula] = set()

    def add(p: Formula) -> bool:
        if isinstance(p, Or):
            return add(p.left) and add(p.right)
        if isinstance(p, TrueBool):
            return False
        if isinstance(p, FalseBool) or p in seen:
            return True
        seen.add(p)
        out.append(p)
        return True

    for part in parts:
        if not add(part):
            return TRUE
    if not out:
        return FALSE
    return reduce(Or, out)


@lru_cache(maxsize=None)
def simplify(f: Formula) -> Formula:
    if isinstance(f, And):
        return conj((simplify(f.left), simplify(f.right)))
    if isinstance(f, Or):
        return disj((simplify(f.left), simplify(f.right)))
    if isinstance(f, Not):
        sub = simplify(f.operand)
        if isinstance(sub, TrueBool):
            return FALSE
        if isinstance(sub, FalseBool):
            return TRUE
        return Not(sub)
    if isinstance(f, Next):
        return Next(simplify(f.operand))
    if isinstance(f, Until):
        return Until(simplify(f.left), simplify(f.right))
    if isinstance(f, Eventually):
        return Eventually(simplify(f.operand))
    return f


@lru_cache(maxsize=None)
def _progress(f: Formula, v: Valuation) -> Formula:
    if isinstance(f, (TrueBool, FalseBool)):
        return f
    if isinstance(f, Prop):
        return TRUE if f.name in v else FALSE
    if isinstance(f, Not):
        if not isinstance(f.operand, Prop):
            raise NotCoSafeError(f"not co-safe: {to_text(f)}")
        return FALSE if f.operand.name in v else TRUE
    if isinstance(f, And):
        return conj((_progress(f.left, v), _progress(f.right, v)))
    if isinstance(f, Or):
        return disj((_progress(f.left, v), _progress(f.right, v)))
    if isinstance(f, Next):
        sub = simplify(f.operand)
        # Strong Next also demands that a next step exists at all; the STEP
        # conjunct carries that demand when the operand alone would accept
        # the empty remainder.
        if nullable(sub):
            return conj((STEP, sub))
        return sub
    if isinstance(f, Until):
        stay = conj((_progress(f.left, v), f))
        return disj((_progress(f.right, v), stay))
    if isinstance(f, Eventually):
        return disj((_progress(f.operand, v), f))
    raise TypeError(f"not a formula: {f!r}")


def progress(f: Formula, valuation: Iterable[str]) -> Formula:
    """One-step formula progression: trace (v . t) satisfies f iff t satisfies
    progress(f, v). The result is simplified."""
    return _progress(simplify(f), frozenset(valuation))


# ---------------------------------------------------------------------------
# JSON form

_BINARY_OPS = {"&": And, "|": Or, "U": Until}
_UNARY_OPS = {"!": Not, "X": Next, "F": Eventually}


def formula_to_json(f: Formula) -> dict:
    if isinstance(f, TrueBool):
        return {"op": "T"}
    if isinstance(f, FalseBool):
        return {"op": "false"}
    if isinstance(f, Prop):
        return {"op": "prop", "name": f.name}
    if isinstance(f, Not):
        return {"op": "!", "args": [formula_to_json(f.operand)]}
    if isinstance(f, Next):
        return {"op": "X", "args": [formula_to_json(f.operand)]}
    if isinstance(f, Eventually):
        return {"op": "F", "args": [formula_to_json(f.operand)]}
    if isinstance(f, And):
        return {"op": "&", "args": [formula_to_json(f.left), formula_to_json(f.right)]}
    if isinstance(f, Or):
        return {"op": "|", "args": [formula_to_json(f.left), formula_to_json(f.right)]}
    if isinstance(f, Until):
        return {"op": "U", "args": [formula_to_json(f.left), formula_to_json(f.right)]}
    raise TypeError(f"not a formula: {f!r}")


def formula_from_json(data: dict) -> Formula:
    op = data.get("op")
    if op == "T":
        return TRUE
    if op == "false":
        return FALSE
    if op == "prop":
        return Prop(str(data["name"]))
    args = data.get("args", [])
    if op in _UNARY_OPS and len(args) == 1:
        return _UNARY_OPS[op](formula_from_json(args[0]))
    if op in _BINARY_OPS and len(args) == 2:
        cls = _BINARY_OPS[op]
        return cls(formula_from_json(args[0]), formula_from_json(args[1]))
    raise DomainError(f"malformed formula JSON: {json.dumps(data)[:120]}")


# ---------------------------------------------------------------------------
# Trace enumeration and bounded equivalence


def all_valuations(names: Sequence[str], pulse: bool = False) -> tuple[Valuation, ...]:
    """All subsets of names; with pulse=True only the empty set and singletons."""
    if pulse:
        return (frozenset(),) + tuple(frozenset((p,)) for p in names)
    vals = []
    for mask in range(1 << len(names)):
        vals.append(frozenset(p for i, p in enumerate(names) if mask >> i & 1))
    return tuple(vals)


def all_traces(names: Sequence[str], max_len: int,
               pulse: bool = False) -> Iterator[Trace]:
    vals = all_valuations(names, pulse=pulse)
    for length in range(max_len + 1):
        yield from itertools.product(vals, repeat=length)


def equivalent_on_traces(f: Formula, g: Formula, *, max_len: int = 5,
                         rename: Mapping[str, str] | None = None,
                         pulse: bool = False) -> bool:
    """Bounded trace-set equivalence over the union alphabet of both formulas.

    `rename` maps g's proposition names onto f's alphabet before comparing.
    """
    if rename:
        g = rename_props(g, rename)
    names = list(props(f))
    for p in props(g):
        if p not in names:
            names.append(p)
    for trace in all_traces(names, max_len, pulse=pulse):
        if evaluate(f, trace) != evaluate(g, trace):
            return False
    return True
