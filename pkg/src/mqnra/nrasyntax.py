"""Textual format for NRA queries, instances and schemas.

Queries use prefix operator notation with named attributes:

    union(Q, Q)   diff(Q, Q)   product(Q, Q)
    select[FILTER](Q)
    project[a, b, c/EXPR](Q)
    nest[{a, b} -> c](Q)
    unnest[a](Q)
    NAME                      a relation leaf

Filters and expressions share one grammar: attribute names (dotted), JSON
literals, ``missing``, ``true``/``false``, ``=`` comparisons, ``and``, ``or``
and ``not``, conditionals ``cond(FILTER, EXPR, EXPR)``, and relation values
``subrel({a: EXPR, ...}, ...)``.

Instances are JSON: a relation is an array of objects whose keys are the
attribute names verbatim; sub-relations are nested arrays of objects, and an
absent key denotes the missing constant (the schema supplies the full
attribute set on ingestion).

Schemas print in the classical nested style:
``bios(_id, awards(awards.award, awards.year), ...)``.
"""

from __future__ import annotations

import json

from .errors import ParseError, SchemaError
from .nra import (
    Attr,
    EAttr,
    EConst,
    ECond,
    ESubrel,
    FAnd,
    FAttrEq,
    FEq,
    FFalse,
    FNot,
    FOr,
    FTrue,
    MISSING,
    PDef,
    PKeep,
    QDiff,
    QNest,
    QProduct,
    QProject,
    QRel,
    QSelect,
    QUnion,
    QUnnest,
    Query,
    Rel,
    Schema,
    Tup,
)

_KEYWORDS = {"union", "diff", "product", "select", "project", "nest", "unnest",
             "and", "or", "not", "true", "false", "null", "missing", "cond", "subrel"}

_FILTER_TYPES = (FTrue, FFalse, FEq, FAttrEq, FNot, FAnd, FOr)

_NAME_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_NAME_CHARS = _NAME_START | set("0123456789.")


class _Tok:
    __slots__ = ("kind", "value", "line", "col")

    def __init__(self, kind, value, line, col):
        self.kind, self.value, self.line, self.col = kind, value, line, col


def _tokenize(text: str) -> list[_Tok]:
    tokens, i, line, col = [], 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if text.startswith("->", i):
            tokens.append(_Tok("->", "->", line, col))
            i, col = i + 2, col + 2
            continue
        if ch in "()[]{},:/=":
            tokens.append(_Tok(ch, ch, line, col))
            i, col = i + 1, col + 1
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            if j >= n:
                raise ParseError("unterminated string", line, col)
            try:
                tokens.append(_Tok("string", json.loads(text[i:j + 1]), line, col))
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad string literal: {exc}", line, col) from None
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and (text[j].isdigit() or text[j] in "eE+-."):
                if text[j] == "." and not (j + 1 < n and text[j + 1].isdigit()):
                    break
                if text[j] in "+-" and text[j - 1] not in "eE":
                    break
                j += 1
            tokens.append(_Tok("number", json.loads(text[i:j]), line, col))
            col += j - i
            i = j
            continue
        if ch in _NAME_START:
            j = i + 1
            while j < n and text[j] in _NAME_CHARS:
                j += 1
            word = text[i:j]
            kind = "keyword" if word in _KEYWORDS else "name"
            tokens.append(_Tok(kind, word, line, col))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Tok("eof", None, line, col))
    return tokens


class _P:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def next(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok.kind != kind:
            raise ParseError(f"expected {kind!r}, found {tok.value!r}", tok.line, tok.col)
        return tok

    def at_keyword(self, word):
        tok = self.peek()
        return tok.kind == "keyword" and tok.value == word

    def eat_keyword(self, word) -> bool:
        if self.at_keyword(word):
            self.next()
            return True
        return False

    # --- expressions -------------------------------------------------------

    def expr(self):
        left = self.and_expr()
        items = [left]
        while self.eat_keyword("or"):
            items.append(self.and_expr())
        if len(items) == 1:
            return left
        return FOr(tuple(self._as_filter(x) for x in items))

    def and_expr(self):
        left = self.not_expr()
        items = [left]
        while self.eat_keyword("and"):
            items.append(self.not_expr())
        if len(items) == 1:
            return left
        return FAnd(tuple(self._as_filter(x) for x in items))

    def not_expr(self):
        if self.eat_keyword("not"):
            return FNot(self._as_filter(self.not_expr()))
        return self.cmp_expr()

    def cmp_expr(self):
        left = self.base_expr()
        if self.peek().kind != "=":
            return left
        tok = self.next()
        right = self.base_expr()
        return self._make_eq(left, right, tok)

    def _make_eq(self, left, right, tok):
        def as_operand(x):
            if isinstance(x, EAttr):
                return ("attr", x.name)
            if isinstance(x, EConst):
                return ("const", x)
            raise ParseError("an equality compares attributes and constants",
                             tok.line, tok.col)

        lo, ro = as_operand(left), as_operand(right)
        if lo[0] == "const" and ro[0] == "attr":
            lo, ro = ro, lo
        if (lo[0], ro[0]) == ("attr", "attr"):
            return FAttrEq(lo[1], ro[1])
        if (lo[0], ro[0]) == ("attr", "const"):
            return FEq(lo[1], ro[1])
        return FTrue() if lo[1].value == ro[1].value else FFalse()

    def base_expr(self):
        tok = self.peek()
        if tok.kind == "(":
            self.next()
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.kind == "keyword":
            if tok.value == "true":
                self.next()
                return FTrue()
            if tok.value == "false":
                self.next()
                return FFalse()
            if tok.value == "null":
                self.next()
                return EConst.of(None)
            if tok.value == "missing":
                self.next()
                return EConst.of(MISSING)
            if tok.value == "cond":
                self.next()
                self.expect("(")
                cond = self._as_filter(self.expr())
                self.expect(",")
                then = self.expr()
                self.expect(",")
                other = self.expr()
                self.expect(")")
                return ECond(cond, then, other)
            if tok.value == "subrel":
                return self._subrel()
            raise ParseError(f"unexpected keyword {tok.value!r}", tok.line, tok.col)
        if tok.kind == "name":
            return EAttr(self.next().value)
        if tok.kind in ("string", "number"):
            return EConst.of(self.next().value)
        raise ParseError(f"unexpected token {tok.value!r}", tok.line, tok.col)

    def _subrel(self):
        self.next()  # subrel
        self.expect("(")
        rows = []
        if self.peek().kind != ")":
            while True:
                self.expect("{")
                row = []
                if self.peek().kind != "}":
                    while True:
                        name = self._attr_name()
                        self.expect(":")
                        row.append((name, self.expr()))
                        if self.peek().kind != ",":
                            break
                        self.next()
                self.expect("}")
                rows.append(tuple(row))
                if self.peek().kind != ",":
                    break
                self.next()
        self.expect(")")
        expr = ESubrel(tuple(rows))
        return self._fold_const_subrel(expr)

    @staticmethod
    def _fold_const_subrel(expr: ESubrel):
        rows = []
        for row in expr.rows:
            folded = {}
            for name, e in row:
                if not isinstance(e, EConst):
                    return expr
                folded[name] = e.value
            rows.append(Tup(folded))
        return EConst.of(Rel(rows))

    def _attr_name(self) -> str:
        tok = self.next()
        if tok.kind == "name":
            return tok.value
        if tok.kind == "string":
            return tok.value
        raise ParseError(f"expected an attribute name, found {tok.value!r}", tok.line, tok.col)

    @staticmethod
    def _as_filter(x):
        if isinstance(x, _FILTER_TYPES):
            return x
        tok_repr = getattr(x, "name", x)
        raise ParseError(f"expected a Boolean filter, found {tok_repr!r}")

    # --- queries -----------------------------------------------------------

    def query(self) -> Query:
        tok = self.peek()
        if tok.kind == "name":
            return QRel(self.next().value)
        if tok.kind != "keyword":
            raise ParseError(f"expected a query, found {tok.value!r}", tok.line, tok.col)
        op = self.next().value
        if op in ("union", "diff", "product"):
            self.expect("(")
            left = self.query()
            self.expect(",")
            right = self.query()
            self.expect(")")
            cls = {"union": QUnion, "diff": QDiff, "product": QProduct}[op]
            return cls(left, right)
        if op == "select":
            self.expect("[")
            f = self._as_filter(self.expr())
            self.expect("]")
            self.expect("(")
            src = self.query()
            self.expect(")")
            return QSelect(f, src)
        if op == "project":
            self.expect("[")
            items = []
            while True:
                name = self._attr_name()
                if self.peek().kind == "/":
                    self.next()
                    items.append(PDef(name, self.expr()))
                else:
                    items.append(PKeep(name))
                if self.peek().kind != ",":
                    break
                self.next()
            self.expect("]")
            self.expect("(")
            src = self.query()
            self.expect(")")
            return QProject(tuple(items), src)
        if op == "nest":
            self.expect("[")
            self.expect("{")
            attrs = []
            while True:
                attrs.append(self._attr_name())
                if self.peek().kind != ",":
                    break
                self.next()
            self.expect("}")
            self.expect("->")
            target = self._attr_name()
            self.expect("]")
            self.expect("(")
            src = self.query()
            self.expect(")")
            return QNest(frozenset(attrs), target, src)
        if op == "unnest":
            self.expect("[")
            attr = self._attr_name()
            self.expect("]")
            self.expect("(")
            src = self.query()
            self.expect(")")
            return QUnnest(attr, src)
        raise ParseError(f"unknown query operator {op!r}", tok.line, tok.col)


def parse_query(text: str) -> Query:
    p = _P(text)
    q = p.query()
    eof = p.next()
    if eof.kind != "eof":
        raise ParseError("trailing input after the query", eof.line, eof.col)
    return q


def parse_filter(text: str):
    p = _P(text)
    f = p._as_filter(p.expr())
    eof = p.next()
    if eof.kind != "eof":
        raise ParseError("trailing input after the filter", eof.line, eof.col)
    return f


# ---------------------------------------------------------------------------
# printing


def _name_ok(name: str) -> bool:
    return (bool(name) and name[0] in _NAME_START and all(c in _NAME_CHARS for c in name)
            and name not in _KEYWORDS)


def _fmt_name(name: str) -> str:
    return name if _name_ok(name) else json.dumps(name, ensure_ascii=False)


def _fmt_const(value) -> str:
    if value is MISSING:
        return "missing"
    if isinstance(value, Rel):
        rows = []
        for t in value:
            inner = ", ".join(f"{_fmt_name(n)}: {_fmt_const(v)}" for n, v in t.items)
            rows.append(f"{{{inner}}}")
        return f"subrel({', '.join(rows)})"
    return json.dumps(value, sort_keys=True, ensure_ascii=False)


def print_expr(e) -> str:
    if isinstance(e, EAttr):
        return _fmt_name(e.name)
    if isinstance(e, EConst):
        return _fmt_const(e.value)
    if isinstance(e, FTrue):
        return "true"
    if isinstance(e, FFalse):
        return "false"
    if isinstance(e, FEq):
        return f"({_fmt_name(e.attr)} = {_fmt_const(e.const.value)})"
    if isinstance(e, FAttrEq):
        return f"({_fmt_name(e.left)} = {_fmt_name(e.right)})"
    if isinstance(e, FNot):
        return f"not {print_expr(e.inner)}"
    if isinstance(e, FAnd):
        return "(" + " and ".join(print_expr(x) for x in e.items) + ")"
    if isinstance(e, FOr):
        return "(" + " or ".join(print_expr(x) for x in e.items) + ")"
    if isinstance(e, ECond):
        return f"cond({print_expr(e.cond)}, {print_expr(e.then)}, {print_expr(e.other)})"
    if isinstance(e, ESubrel):
        rows = []
        for row in e.rows:
            inner = ", ".join(f"{_fmt_name(n)}: {print_expr(x)}" for n, x in row)
            rows.append(f"{{{inner}}}")
        return f"subrel({', '.join(rows)})"
    raise SchemaError(f"cannot print expression {e!r}")


def print_query(q: Query) -> str:
    if isinstance(q, QRel):
        return _fmt_name(q.name)
    if isinstance(q, QUnion):
        return f"union({print_query(q.left)}, {print_query(q.right)})"
    if isinstance(q, QDiff):
        return f"diff({print_query(q.left)}, {print_query(q.right)})"
    if isinstance(q, QProduct):
        return f"product({print_query(q.left)}, {print_query(q.right)})"
    if isinstance(q, QSelect):
        return f"select[{print_expr(q.filter)}]({print_query(q.source)})"
    if isinstance(q, QProject):
        items = ", ".join(
            _fmt_name(it.name) if isinstance(it, PKeep)
            else f"{_fmt_name(it.name)}/{print_expr(it.expr)}"
            for it in q.items)
        return f"project[{items}]({print_query(q.source)})"
    if isinstance(q, QNest):
        attrs = ", ".join(_fmt_name(a) for a in sorted(q.attrs))
        return f"nest[{{{attrs}}} -> {_fmt_name(q.target)}]({print_query(q.source)})"
    if isinstance(q, QUnnest):
        return f"unnest[{_fmt_name(q.attr)}]({print_query(q.source)})"
    raise SchemaError(f"cannot print query {q!r}")


# ---------------------------------------------------------------------------
# instances (JSON)


def _value_to_json(value):
    if value is MISSING:
        raise SchemaError("missing cannot appear inside a serialized value")
    if isinstance(value, Rel):
        return [_tuple_to_json(t) for t in value]
    return value


def _tuple_to_json(t: Tup) -> dict:
    return {n: _value_to_json(v) for n, v in t.items if v is not MISSING}


def print_instance(rel: Rel) -> str:
    return json.dumps([_tuple_to_json(t) for t in rel], sort_keys=True,
                      separators=(",", ":"), ensure_ascii=False)


def _json_to_value(raw, attr: Attr):
    if attr.sub is None:
        if isinstance(raw, (list, dict)):
            raise SchemaError(f"attribute {attr.name!r} is atomic")
        return raw
    if not isinstance(raw, list):
        raise SchemaError(f"attribute {attr.name!r} expects an array of objects")
    return Rel(_json_to_tuple(row, attr.sub) for row in raw)


def _json_to_tuple(raw: dict, schema: Schema) -> Tup:
    if not isinstance(raw, dict):
        raise SchemaError("a tuple must be a JSON object")
    unknown = set(raw) - set(schema.names())
    if unknown:
        raise SchemaError(f"unknown attributes {sorted(unknown)} for schema {schema.name!r}")
    row = {}
    for attr in schema.attrs:
        if attr.name in raw:
            row[attr.name] = _json_to_value(raw[attr.name], attr)
        else:
            row[attr.name] = MISSING
    return Tup(row)


def parse_instance(text: str, schema: Schema) -> Rel:
    """JSON array of objects; absent keys become the missing constant."""
    raw = json.loads(text)
    if not isinstance(raw, list):
        raise SchemaError("an instance must be a JSON array of objects")
    return Rel(_json_to_tuple(row, schema) for row in raw)


def print_schema(schema: Schema) -> str:
    parts = []
    for a in schema.attrs:
        if a.sub is None:
            parts.append(_fmt_name(a.name))
        else:
            inner = print_schema(a.sub)
            parts.append(f"{_fmt_name(a.name)}({inner[inner.index('(') + 1:-1]})")
    return f"{_fmt_name(schema.name)}({', '.join(parts)})"
