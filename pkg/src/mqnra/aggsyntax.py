"""Concrete syntax: the MongoDB-style aggregate grammar and collection files.

parse_aggregate reads the textual form ``db.C.aggregate([ ... ])`` and maps
it onto the stage algebra: $match to match, $unwind (optionally with
preserveNullAndEmptyArrays) to the two unwind forms, $project (with
``_id: false``) to the two project forms, $group with $addToSet to group,
and $lookup to lookup.  ``$$ROOT`` denotes the empty path.

Conventions beyond the core grammar, kept deliberately small:

* $exists and $ne desugar to path existence and negated equality,
  $and/$or/$nor map to conjunction, disjunction and negated disjunction;
* in value definitions, a string starting with ``$`` is a path reference
  and any other bare scalar is a constant ($literal always forces a
  constant);
* path existence inside a value definition has no operator of its own and
  is printed through its conditional encoding, which the parser recognizes
  and folds back;
* grouping and aggregation output keys may be dotted paths.

Anything else (other accumulators, order comparisons, bare-value criteria)
is rejected with a pointed message: the fragment boundary is part of the
contract.

Collections are line-delimited JSON, one document per line, each with a
unique _id; the writer emits canonically serialized documents in sorted
order.
"""

from __future__ import annotations

import json
from typing import Any, Iterable

from .errors import IngestionError, ParseError, SemanticError
from .mquery import (
    And,
    BAnd,
    BConst,
    BEq,
    BExists,
    BNot,
    BOr,
    BPathEq,
    Cmp,
    Criterion,
    DArray,
    DBool,
    DConst,
    DCond,
    DPath,
    Define,
    Exists,
    Group,
    Keep,
    Lookup,
    Match,
    Not,
    Or,
    Pipeline,
    Project,
    Stage,
    Unwind,
    ValueDef,
)
from .trees import EPSILON, DocumentTree, Forest, Path, build_tree, canon_dumps, interpret_path

# ---------------------------------------------------------------------------
# folding constructors


def band(items) -> Any:
    items = tuple(items)
    if not items:
        return BConst(True)
    return items[0] if len(items) == 1 else BAnd(items)


def bor(items) -> Any:
    items = tuple(items)
    if not items:
        return BConst(False)
    return items[0] if len(items) == 1 else BOr(items)


# ---------------------------------------------------------------------------
# tokenizer


_PUNCT = set("{}[](),:.")
_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_$")
_IDENT_CHARS = _IDENT_START | set("0123456789")


class _Token:
    __slots__ = ("kind", "value", "line", "col")

    def __init__(self, kind, value, line, col):
        self.kind = kind
        self.value = value
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if ch in _PUNCT:
            tokens.append(_Token(ch, ch, line, col))
            i, col = i + 1, col + 1
            continue
        if ch in "\"'":
            quote, j, buf = ch, i + 1, []
            while j < n and text[j] != quote:
                if text[j] == "\\":
                    if j + 1 >= n:
                        raise ParseError("unterminated escape", line, col)
                    esc = text[j + 1]
                    mapping = {"n": "\n", "t": "\t", "\\": "\\", '"': '"', "'": "'", "/": "/"}
                    if esc == "u":
                        buf.append(chr(int(text[j + 2:j + 6], 16)))
                        j += 6
                        continue
                    if esc not in mapping:
                        raise ParseError(f"unsupported escape \\{esc}", line, col)
                    buf.append(mapping[esc])
                    j += 2
                    continue
                if text[j] == "\n":
                    raise ParseError("unterminated string", line, col)
                buf.append(text[j])
                j += 1
            if j >= n:
                raise ParseError("unterminated string", line, col)
            tokens.append(_Token("string", "".join(buf), line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and (text[j].isdigit() or text[j] in ".eE+-"):
                # a '.' belongs to the number only when a digit follows
                if text[j] == "." and not (j + 1 < n and text[j + 1].isdigit()):
                    break
                if text[j] in "+-" and text[j - 1] not in "eE":
                    break
                j += 1
            raw = text[i:j]
            try:
                num = json.loads(raw)
            except json.JSONDecodeError:
                raise ParseError(f"bad number {raw!r}", line, col) from None
            tokens.append(_Token("number", num, line, col))
            col += j - i
            i = j
            continue
        if ch in _IDENT_START:
            j = i + 1
            while j < n and text[j] in _IDENT_CHARS:
                j += 1
            tokens.append(_Token("ident", text[i:j], line, col))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("eof", None, line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.next()
        if tok.kind != kind:
            raise ParseError(f"expected {kind!r}, found {tok.value!r}", tok.line, tok.col)
        return tok

    def expect_ident(self, name: str) -> None:
        tok = self.next()
        if tok.kind != "ident" or tok.value != name:
            raise ParseError(f"expected {name!r}, found {tok.value!r}", tok.line, tok.col)

    # raw JS-ish values -----------------------------------------------------

    def value(self):
        tok = self.peek()
        if tok.kind == "{":
            return self.object()
        if tok.kind == "[":
            return self.array()
        if tok.kind == "string":
            return self.next().value
        if tok.kind == "number":
            return self.next().value
        if tok.kind == "ident":
            word = self.next().value
            if word == "true":
                return True
            if word == "false":
                return False
            if word == "null":
                return None
            return _Word(word)
        raise ParseError(f"unexpected token {tok.value!r}", tok.line, tok.col)

    def object(self):
        tok = self.expect("{")
        out = _RawObject(tok.line, tok.col)
        if self.peek().kind == "}":
            self.next()
            return out
        while True:
            key_tok = self.next()
            if key_tok.kind not in ("string", "ident"):
                raise ParseError("expected an object key", key_tok.line, key_tok.col)
            key = key_tok.value
            self.expect(":")
            if key in out.pairs:
                raise ParseError(f"duplicate key {key!r}", key_tok.line, key_tok.col)
            out.pairs[key] = self.value()
            tok = self.next()
            if tok.kind == "}":
                return out
            if tok.kind != ",":
                raise ParseError("expected ',' or '}'", tok.line, tok.col)
            if self.peek().kind == "}":  # tolerate a trailing comma
                self.next()
                return out

    def array(self):
        self.expect("[")
        items = []
        if self.peek().kind == "]":
            self.next()
            return items
        while True:
            items.append(self.value())
            tok = self.next()
            if tok.kind == "]":
                return items
            if tok.kind != ",":
                raise ParseError("expected ',' or ']'", tok.line, tok.col)
            if self.peek().kind == "]":  # tolerate a trailing comma
                self.next()
                return items


class _Word(str):
    """A bare identifier in value position (true/false/null already folded)."""


class _RawObject:
    def __init__(self, line, col):
        self.pairs: dict = {}
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# interpretation helpers


def _pathref(text: str) -> Path:
    if text == "$$ROOT":
        return EPSILON
    if text.startswith("$") and len(text) > 1 and not text.startswith("$$"):
        return Path.parse(text[1:])
    raise SemanticError(f"not a path reference: {text!r}")


def _is_pathref(v) -> bool:
    return isinstance(v, str) and not isinstance(v, _Word) and v.startswith("$")


def _plain_value(v, where: str):
    """A literal JSON value (no path references, no operators)."""
    if isinstance(v, _RawObject):
        return {k: _plain_value(x, where) for k, x in v.pairs.items()}
    if isinstance(v, list):
        return [_plain_value(x, where) for x in v]
    if isinstance(v, _Word):
        raise SemanticError(f"{where}: bare identifier {str(v)!r} is not a value")
    return v


_EXISTS_PROBE = [None, False, 0]


def _exists_pattern(p: Path, beta) -> bool:
    want = BAnd(tuple(BNot(BEq.of(p, probe)) for probe in _EXISTS_PROBE))
    return beta == want


def _parse_bool(raw, where: str):
    """A Boolean value definition."""
    if raw is True or raw is False:
        return BConst(raw)
    if isinstance(raw, _RawObject):
        if set(raw.pairs) == {"$cond"}:
            parsed = _parse_cond(raw.pairs["$cond"], where, boolean=True)
            if isinstance(parsed, BExists):
                return parsed
            raise SemanticError(f"{where}: a conditional is not a Boolean value definition")
        if len(raw.pairs) != 1:
            raise SemanticError(f"{where}: a Boolean operator object must have exactly one key")
        (op, arg), = raw.pairs.items()
        if op in ("$eq", "$ne"):
            if not isinstance(arg, list) or len(arg) != 2:
                raise SemanticError(f"{where}: {op} takes an array of exactly two operands")
            beta = _combine_eq(arg[0], arg[1], where)
            return BNot(beta) if op == "$ne" else beta
        if op in ("$and", "$or", "$nor"):
            if not isinstance(arg, list):
                raise SemanticError(f"{where}: {op} takes an array")
            items = [_parse_bool(x, where) for x in arg]
            if op == "$and":
                return band(items)
            if op == "$or":
                return bor(items)
            return BNot(bor(items))
        if op == "$not":
            inner = arg[0] if isinstance(arg, list) and len(arg) == 1 else arg
            return BNot(_parse_bool(inner, where))
        if op in ("$gt", "$lt", "$gte", "$lte"):
            raise SemanticError(f"{where}: order comparison {op} is outside the equality fragment")
        raise SemanticError(f"{where}: unknown Boolean operator {op!r}")
    if _is_pathref(raw):
        raise SemanticError(
            f"{where}: a bare path is not a Boolean value definition; compare it explicitly")
    raise SemanticError(f"{where}: expected a Boolean value definition")


def _bool_operand(raw, where: str):
    if _is_pathref(raw):
        return ("path", _pathref(raw))
    if raw is True or raw is False or raw is None or isinstance(raw, (int, float)):
        return ("const", raw)
    if isinstance(raw, str) and not isinstance(raw, _Word):
        return ("const", raw)
    if isinstance(raw, list):
        return ("const", _plain_value(raw, where))
    if isinstance(raw, _RawObject):
        if "$literal" in raw.pairs and len(raw.pairs) == 1:
            return ("const", _plain_value(raw.pairs["$literal"], where))
        return ("bool", _parse_bool(raw, where))
    raise SemanticError(f"{where}: bad comparison operand")


def _combine_eq(left_raw, right_raw, where: str):
    left = _bool_operand(left_raw, where)
    right = _bool_operand(right_raw, where)
    if left[0] == "const" and right[0] != "const":
        left, right = right, left
    kinds = (left[0], right[0])
    if kinds == ("path", "path"):
        return BPathEq(left[1], right[1])
    if kinds == ("path", "const"):
        return BEq.of(left[1], right[1])
    if kinds == ("const", "const"):
        return BConst(canon_dumps(left[1]) == canon_dumps(right[1]))
    if kinds == ("bool", "bool"):
        b1, b2 = left[1], right[1]
        return bor([band([b1, b2]), band([BNot(b1), BNot(b2)])])
    if kinds == ("bool", "const"):
        if right[1] is True:
            return left[1]
        if right[1] is False:
            return BNot(left[1])
        return BConst(False)
    if kinds == ("path", "bool"):
        p, b = left[1], right[1]
        return bor([band([BEq.of(p, True), b]), band([BEq.of(p, False), BNot(b)])])
    raise SemanticError(f"{where}: cannot compare these operands")


def _parse_cond(raw, where: str, boolean: bool):
    if not isinstance(raw, _RawObject) or set(raw.pairs) != {"if", "then", "else"}:
        raise SemanticError(f"{where}: $cond takes an object with if/then/else")
    if_raw, then_raw, else_raw = raw.pairs["if"], raw.pairs["then"], raw.pairs["else"]
    # the conditional encoding of path existence
    if _is_pathref(if_raw) and then_raw is True and isinstance(else_raw, _RawObject):
        p = _pathref(if_raw)
        try:
            else_beta = _parse_bool(else_raw, where)
        except SemanticError:
            else_beta = None
        if else_beta is not None and _exists_pattern(p, else_beta):
            return BExists(p)
    if _is_pathref(if_raw):
        raise SemanticError(
            f"{where}: a bare path condition is supported only in the existence encoding")
    cond = _parse_bool(if_raw, where)
    if boolean:
        raise SemanticError(f"{where}: a conditional is not a Boolean value definition")
    return DCond(cond, _parse_valuedef(then_raw, where), _parse_valuedef(else_raw, where))


_BOOL_OPS = {"$eq", "$ne", "$and", "$or", "$nor", "$not"}


def _parse_valuedef(raw, where: str) -> ValueDef:
    if _is_pathref(raw):
        return DPath(_pathref(raw))
    if isinstance(raw, list):
        return DArray(tuple(_parse_valuedef(x, where) for x in raw))
    if isinstance(raw, _RawObject):
        if len(raw.pairs) == 1:
            (op, arg), = raw.pairs.items()
            if op == "$literal":
                return DConst.of(_plain_value(arg, where))
            if op == "$cond":
                parsed = _parse_cond(arg, where, boolean=False)
                return DBool(parsed) if isinstance(parsed, BExists) else parsed
            if op in _BOOL_OPS:
                return DBool(_parse_bool(raw, where))
            if op in ("$gt", "$lt", "$gte", "$lte"):
                raise SemanticError(f"{where}: order comparison {op} is outside the equality fragment")
            if op.startswith("$"):
                raise SemanticError(f"{where}: unknown value operator {op!r}")
        raise SemanticError(f"{where}: an object value must be wrapped in $literal")
    if raw is True or raw is False or raw is None or isinstance(raw, (int, float)):
        return DConst.of(raw)
    if isinstance(raw, str) and not isinstance(raw, _Word):
        return DConst.of(raw)
    raise SemanticError(f"{where}: bad value definition")


# ---------------------------------------------------------------------------
# criteria


_LOPS = {"$and", "$or", "$nor"}


def _parse_condition(path: Path, raw, where: str) -> Criterion:
    if not isinstance(raw, _RawObject):
        raise SemanticError(
            f"{where}: conditions must be explicit, e.g. {{$eq: ...}}, not a bare value")
    if len(raw.pairs) != 1:
        # {$eq: v, $exists: true} style conjunctions
        return And(tuple(_parse_condition(path, _single(raw, k), where) for k in raw.pairs))
    (op, arg), = raw.pairs.items()
    if op == "$eq":
        return Cmp.of(path, _plain_value(arg, where))
    if op == "$ne":
        return Not(Cmp.of(path, _plain_value(arg, where)))
    if op == "$exists":
        if arg is True:
            return Exists(path)
        if arg is False:
            return Not(Exists(path))
        raise SemanticError(f"{where}: $exists takes true or false")
    if op == "$not":
        return Not(_parse_condition(path, arg, where))
    if op in ("$gt", "$lt", "$gte", "$lte"):
        raise SemanticError(f"{where}: order comparison {op} is outside the equality fragment")
    raise SemanticError(f"{where}: unknown condition operator {op!r}")


def _single(raw: _RawObject, key) -> _RawObject:
    out = _RawObject(raw.line, raw.col)
    out.pairs[key] = raw.pairs[key]
    return out


def parse_criterion_object(raw, where: str = "$match") -> Criterion:
    if not isinstance(raw, _RawObject):
        raise SemanticError(f"{where}: criterion must be an object")
    items = []
    for key, arg in raw.pairs.items():
        if key in _LOPS:
            if not isinstance(arg, list) or not arg:
                raise SemanticError(f"{where}: {key} takes a non-empty array of criteria")
            parts = [parse_criterion_object(x, where) for x in arg]
            if key == "$and":
                items.append(And(tuple(parts)) if len(parts) != 1 else parts[0])
            elif key == "$or":
                items.append(Or(tuple(parts)) if len(parts) != 1 else parts[0])
            else:
                items.append(Not(Or(tuple(parts)) if len(parts) != 1 else parts[0]))
        elif key.startswith("$"):
            raise SemanticError(f"{where}: unknown criterion operator {key!r}")
        else:
            items.append(_parse_condition(Path.parse(key), arg, where))
    if not items:
        return And(())
    return items[0] if len(items) == 1 else And(tuple(items))


# ---------------------------------------------------------------------------
# stages


def _parse_match(arg) -> Stage:
    return Match(parse_criterion_object(arg))


def _parse_unwind(arg) -> Stage:
    if _is_pathref(arg):
        return Unwind(_pathref(arg), preserve=False)
    if isinstance(arg, _RawObject):
        keys = set(arg.pairs)
        if not keys <= {"path", "preserveNullAndEmptyArrays"} or "path" not in keys:
            raise SemanticError("$unwind takes path and optional preserveNullAndEmptyArrays")
        path = _pathref(arg.pairs["path"])
        preserve = arg.pairs.get("preserveNullAndEmptyArrays", False)
        if preserve not in (True, False):
            raise SemanticError("preserveNullAndEmptyArrays must be true or false")
        return Unwind(path, preserve=preserve)
    raise SemanticError("$unwind takes a path reference or an options object")


def _parse_project(arg) -> Stage:
    if not isinstance(arg, _RawObject) or not arg.pairs:
        raise SemanticError("$project takes a non-empty object")
    items = []
    keep_id = True
    for key, value in arg.pairs.items():
        if key == "_id" and value is False:
            keep_id = False
            continue
        if key.startswith("$"):
            raise SemanticError(f"$project: unexpected operator key {key!r}")
        path = Path.parse(key)
        if value is True:
            items.append(Keep(path))
        elif value is False:
            raise SemanticError("$project: only _id can be excluded with false")
        else:
            items.append(Define(path, _parse_valuedef(value, f"$project {key}")))
    return Project(tuple(items), keep_id=keep_id)


def _parse_group(arg) -> Stage:
    if not isinstance(arg, _RawObject) or "_id" not in arg.pairs:
        raise SemanticError("$group requires an _id grouping condition")
    raw_id = arg.pairs["_id"]
    if raw_id is None:
        keys = None
    elif _is_pathref(raw_id):
        keys = _pathref(raw_id)
    elif isinstance(raw_id, _RawObject):
        pairs = []
        for g, y in raw_id.pairs.items():
            if not _is_pathref(y):
                raise SemanticError("$group: grouping values must be path references")
            pairs.append((Path.parse(g), _pathref(y)))
        if not pairs:
            raise SemanticError("$group: object grouping condition must be non-empty")
        keys = tuple(pairs)
    else:
        raise SemanticError("$group: _id must be null, a path reference, or an object of them")
    aggs = []
    for key, value in arg.pairs.items():
        if key == "_id":
            continue
        if key.startswith("$"):
            raise SemanticError(f"$group: unexpected operator key {key!r}")
        if not isinstance(value, _RawObject) or set(value.pairs) != {"$addToSet"}:
            raise SemanticError("$group: the only supported accumulator is $addToSet")
        aggs.append((Path.parse(key), _pathref(value.pairs["$addToSet"])))
    return Group(keys=keys, aggs=tuple(aggs))


def _parse_lookup(arg) -> Stage:
    if not isinstance(arg, _RawObject) or set(arg.pairs) != {"from", "localField", "foreignField", "as"}:
        raise SemanticError("$lookup takes from, localField, foreignField and as")
    coll = arg.pairs["from"]
    if isinstance(coll, _Word):
        coll = str(coll)
    if not isinstance(coll, str):
        raise SemanticError("$lookup: from must be a collection name")
    return Lookup(
        path=Path.parse(_as_plain_path(arg.pairs["as"], "as")),
        local=Path.parse(_as_plain_path(arg.pairs["localField"], "localField")),
        foreign=Path.parse(_as_plain_path(arg.pairs["foreignField"], "foreignField")),
        collection=coll,
    )


def _as_plain_path(v, what: str) -> str:
    if isinstance(v, str) and not v.startswith("$"):
        return str(v)
    raise SemanticError(f"$lookup: {what} must be a plain path (no '$')")


_STAGE_PARSERS = {
    "$match": _parse_match,
    "$unwind": _parse_unwind,
    "$project": _parse_project,
    "$group": _parse_group,
    "$lookup": _parse_lookup,
}


def parse_aggregate(text: str) -> Pipeline:
    """Parse ``db.C.aggregate([stage, ...])`` into a pipeline."""
    parser = _Parser(text)
    tok = parser.next()
    if tok.kind != "ident":
        raise ParseError("expected a collection reference", tok.line, tok.col)
    name_parts = [tok.value]
    while parser.peek().kind == ".":
        parser.next()
        name_parts.append(parser.expect("ident").value)
    if len(name_parts) < 2 or name_parts[-1] != "aggregate":
        raise ParseError("expected C.aggregate([...])", tok.line, tok.col)
    collection = ".".join(name_parts[:-1])
    if collection.startswith("db."):
        collection = collection[3:]
    parser.expect("(")
    raw_stages = parser.array()
    parser.expect(")")
    eof = parser.next()
    if eof.kind != "eof":
        raise ParseError("trailing input after the aggregate call", eof.line, eof.col)
    if not raw_stages:
        raise ParseError("an aggregate call requires at least one stage", tok.line, tok.col)
    stages = []
    for raw in raw_stages:
        if not isinstance(raw, _RawObject) or len(raw.pairs) != 1:
            raise SemanticError("each stage is an object with a single stage operator")
        (op, arg), = raw.pairs.items()
        if op not in _STAGE_PARSERS:
            raise SemanticError(f"unknown stage operator {op!r}")
        stages.append(_STAGE_PARSERS[op](arg))
    return Pipeline(collection, tuple(stages))


# ---------------------------------------------------------------------------
# printing


def _fmt_scalar(v) -> str:
    return json.dumps(v, ensure_ascii=False)


def _fmt_pathref(p: Path) -> str:
    return '"$$ROOT"' if not p else f'"${p}"'


def _fmt_value(v) -> str:
    return json.dumps(v, sort_keys=True, separators=(", ", ": "), ensure_ascii=False)


def _fmt_criterion(c: Criterion) -> str:
    if isinstance(c, And) and not c.items:
        return "{}"
    if isinstance(c, Or) and not c.items:
        return '{$or: []}'
    if isinstance(c, Cmp):
        return f'{{"{c.path}": {{$eq: {_fmt_value(c.value)}}}}}'
    if isinstance(c, Exists):
        return f'{{"{c.path}": {{$exists: true}}}}'
    if isinstance(c, Not):
        if isinstance(c.inner, Cmp):
            return f'{{"{c.inner.path}": {{$ne: {_fmt_value(c.inner.value)}}}}}'
        if isinstance(c.inner, Exists):
            return f'{{"{c.inner.path}": {{$exists: false}}}}'
        return f"{{$nor: [{_fmt_criterion(c.inner)}]}}"
    if isinstance(c, And):
        return f"{{$and: [{', '.join(_fmt_criterion(x) for x in c.items)}]}}"
    if isinstance(c, Or):
        return f"{{$or: [{', '.join(_fmt_criterion(x) for x in c.items)}]}}"
    raise SemanticError(f"cannot print criterion {c!r}")


def _fmt_bool(b) -> str:
    if isinstance(b, BConst):
        return "true" if b.value else "false"
    if isinstance(b, BEq):
        return f"{{$eq: [{_fmt_pathref(b.path)}, {_fmt_value(b.value)}]}}"
    if isinstance(b, BPathEq):
        return f"{{$eq: [{_fmt_pathref(b.left)}, {_fmt_pathref(b.right)}]}}"
    if isinstance(b, BExists):
        probes = ", ".join(
            f"{{$ne: [{_fmt_pathref(b.path)}, {_fmt_scalar(v)}]}}" for v in _EXISTS_PROBE)
        return (f"{{$cond: {{if: {_fmt_pathref(b.path)}, then: true, "
                f"else: {{$and: [{probes}]}}}}}}")
    if isinstance(b, BNot):
        return f"{{$not: {_fmt_bool(b.inner)}}}"
    if isinstance(b, BAnd):
        return f"{{$and: [{', '.join(_fmt_bool(x) for x in b.items)}]}}"
    if isinstance(b, BOr):
        return f"{{$or: [{', '.join(_fmt_bool(x) for x in b.items)}]}}"
    raise SemanticError(f"cannot print Boolean definition {b!r}")


def _fmt_valuedef(d: ValueDef) -> str:
    if isinstance(d, DConst):
        return f"{{$literal: {_fmt_value(d.value)}}}"
    if isinstance(d, DPath):
        return _fmt_pathref(d.path)
    if isinstance(d, DArray):
        return f"[{', '.join(_fmt_valuedef(x) for x in d.items)}]"
    if isinstance(d, DBool):
        return _fmt_bool(d.expr)
    if isinstance(d, DCond):
        return (f"{{$cond: {{if: {_fmt_bool(d.cond)}, then: {_fmt_valuedef(d.then)}, "
                f"else: {_fmt_valuedef(d.other)}}}}}")
    raise SemanticError(f"cannot print value definition {d!r}")


def _fmt_stage(s: Stage) -> str:
    if isinstance(s, Match):
        return f"{{$match: {_fmt_criterion(s.criterion)}}}"
    if isinstance(s, Unwind):
        if s.preserve:
            return (f'{{$unwind: {{path: {_fmt_pathref(s.path)}, '
                    f'preserveNullAndEmptyArrays: true}}}}')
        return f"{{$unwind: {_fmt_pathref(s.path)}}}"
    if isinstance(s, Project):
        parts = []
        if not s.keep_id:
            parts.append('"_id": false')
        for item in s.items:
            if isinstance(item, Keep):
                parts.append(f'"{item.path}": true')
            else:
                parts.append(f'"{item.path}": {_fmt_valuedef(item.definition)}')
        return f"{{$project: {{{', '.join(parts)}}}}}"
    if isinstance(s, Group):
        if s.keys is None:
            head = "_id: null"
        elif isinstance(s.keys, Path):
            head = f"_id: {_fmt_pathref(s.keys)}"
        else:
            inner = ", ".join(f'"{g}": {_fmt_pathref(y)}' for g, y in s.keys)
            head = f"_id: {{{inner}}}"
        parts = [head] + [f'"{a}": {{$addToSet: {_fmt_pathref(b)}}}' for a, b in s.aggs]
        return f"{{$group: {{{', '.join(parts)}}}}}"
    if isinstance(s, Lookup):
        return (f'{{$lookup: {{from: "{s.collection}", localField: "{s.local}", '
                f'foreignField: "{s.foreign}", as: "{s.path}"}}}}')
    raise SemanticError(f"cannot print stage {s!r}")


def print_aggregate(q: Pipeline) -> str:
    stages = ", ".join(_fmt_stage(s) for s in q.stages)
    return f"db.{q.collection}.aggregate([{stages}])"


# ---------------------------------------------------------------------------
# collections


def read_collection(text_or_lines) -> Forest:
    """Line-delimited JSON documents, each with a unique _id."""
    if isinstance(text_or_lines, str):
        lines: Iterable[str] = text_or_lines.splitlines()
    else:
        lines = text_or_lines
    trees = []
    seen_ids = set()
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            value = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(value, dict):
            raise IngestionError(f"line {lineno}: a document must be a JSON object")
        tree = build_tree(value)
        ids = interpret_path(tree, Path(("_id",)))
        if len(ids) != 1:
            raise IngestionError(f"line {lineno}: document must carry exactly one _id")
        key = canon_dumps(tree.value["_id"])
        if key in seen_ids:
            raise IngestionError(f"line {lineno}: duplicate _id {key}")
        seen_ids.add(key)
        trees.append(tree)
    return Forest(trees)


def write_collection(forest: Forest) -> str:
    """Canonical serialization, one document per line, sorted."""
    return "\n".join(t.canon for t in forest) + ("\n" if len(forest) else "")
