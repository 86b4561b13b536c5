"""Nested relational algebra: schemas, instances, and a bottom-up evaluator.

Instances are sets of tuples; a tuple maps attribute names to atomic values
or nested relation instances, and the distinguished constant MISSING is an
admissible atomic value.  Attribute names are dotted paths, following the
convention that sub-relation attributes are named by their path from the
root of the schema.

Two naming rules keep that convention stable under the operators:

* renaming (or copying) a relation-valued column rewrites the nested
  attribute names by prefix substitution, and the cross product prefixes
  every attribute name at every depth with rel1./rel2.;
* equality of relation values (in filters and in result comparison)
  normalizes nested names relative to the column they live under, so a
  sub-relation named b with inner attribute b.x equals one whose inner
  attribute is plain x.

Nest keeps the nested attribute names exactly as they were (the translations
arrange names before nesting); unnest surfaces them unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .errors import SchemaError, WorkbenchError
from .trees import canon_dumps, canonicalize_value


class _Missing:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "missing"


MISSING = _Missing()


# ---------------------------------------------------------------------------
# values: literals, MISSING, relation instances


def _canon_value(value, column: Optional[str]):
    """Canonical, hashable form; nested names are taken relative to `column`."""
    if value is MISSING:
        return ("m",)
    if isinstance(value, Rel):
        rows = []
        for tup in value.tuples:
            row = []
            for name, v in tup.items:
                rel_name = _strip_prefix(name, column)
                row.append((rel_name, _canon_value(v, name)))
            rows.append(tuple(sorted(row)))
        return ("r", tuple(sorted(rows)))
    return ("l", canon_dumps(value))


def _strip_prefix(name: str, column: Optional[str]) -> str:
    if column and name.startswith(column + "."):
        return name[len(column) + 1:]
    return name


def values_equal(v1, v2, col1: Optional[str] = None, col2: Optional[str] = None) -> bool:
    return _canon_value(v1, col1) == _canon_value(v2, col2)


class Tup:
    """An immutable tuple: a finite map from attribute names to values."""

    __slots__ = ("items", "_map", "_canon")

    def __init__(self, pairs):
        mapping = dict(pairs)
        items = tuple(sorted(mapping.items()))
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "_map", mapping)
        object.__setattr__(self, "_canon",
                           tuple((n, _canon_value(v, n)) for n, v in items))

    def __setattr__(self, name, value):  # pragma: no cover
        raise AttributeError("Tup is immutable")

    def __getitem__(self, name: str):
        try:
            return self._map[name]
        except KeyError:
            raise SchemaError(f"unbound attribute {name!r}") from None

    def get(self, name: str, default=None):
        return self._map.get(name, default)

    def __contains__(self, name: str) -> bool:
        return name in self._map

    def names(self) -> frozenset:
        return frozenset(self._map)

    def __eq__(self, other):
        return isinstance(other, Tup) and self._canon == other._canon

    def __hash__(self):
        return hash(self._canon)

    def __repr__(self):
        inner = ", ".join(f"{n}: {v!r}" for n, v in self.items)
        return f"{{{inner}}}"


class Rel:
    """A relation instance: a set of tuples."""

    __slots__ = ("tuples",)

    def __init__(self, tuples: Iterable[Tup] = ()):
        object.__setattr__(self, "tuples", frozenset(tuples))

    def __setattr__(self, name, value):  # pragma: no cover
        raise AttributeError("Rel is immutable")

    @classmethod
    def of(cls, *rows) -> "Rel":
        return cls(Tup(row) for row in rows)

    def __iter__(self):
        return iter(sorted(self.tuples, key=lambda t: t._canon))

    def __len__(self):
        return len(self.tuples)

    def __eq__(self, other):
        return isinstance(other, Rel) and _canon_value(self, None) == _canon_value(other, None)

    def __hash__(self):
        return hash(_canon_value(self, None))

    def attribute_names(self) -> frozenset:
        names = frozenset()
        for t in self.tuples:
            names |= t.names()
        return names

    def __repr__(self):
        return f"Rel({len(self.tuples)} tuples)"


EMPTY_REL = Rel()


def rename_value(value, old: str, new: str):
    """Deep prefix substitution of nested attribute names (old -> new)."""
    if not isinstance(value, Rel) or old == new:
        return value

    def ren(name: str) -> str:
        if name == old:
            return new
        if name.startswith(old + "."):
            return new + name[len(old):]
        return name

    return Rel(Tup({ren(n): rename_value(v, old, new) for n, v in t.items})
               for t in value.tuples)


def prefix_value(value, prefix: str):
    """Deep prefixing of every attribute name (used by the cross product)."""
    if not isinstance(value, Rel):
        return value
    return Rel(Tup({f"{prefix}.{n}": prefix_value(v, prefix) for n, v in t.items})
               for t in value.tuples)


# ---------------------------------------------------------------------------
# schemas


@dataclass(frozen=True)
class Attr:
    name: str
    sub: Optional["Schema"] = None  # None for atomic attributes

    def is_relation(self) -> bool:
        return self.sub is not None


@dataclass(frozen=True)
class Schema:
    name: str
    attrs: tuple = ()

    def __post_init__(self):
        names = [a.name for a in self.attrs]
        if len(set(names)) != len(names):
            raise SchemaError(f"schema {self.name!r} has duplicate attribute names")
        object.__setattr__(self, "attrs", tuple(sorted(self.attrs, key=lambda a: a.name)))

    def attribute(self, name: str) -> Attr:
        for a in self.attrs:
            if a.name == name:
                return a
        raise SchemaError(f"schema {self.name!r} has no attribute {name!r}")

    def names(self) -> tuple:
        return tuple(a.name for a in self.attrs)

    def has(self, name: str) -> bool:
        return any(a.name == name for a in self.attrs)


def schema_canon(schema: Schema, column: Optional[str] = None):
    """Structural form of a schema with names relative to their column."""
    out = []
    for a in schema.attrs:
        rel_name = _strip_prefix(a.name, column)
        out.append((rel_name, schema_canon(a.sub, a.name) if a.sub else None))
    return tuple(sorted(out))


def schemas_compatible(s1: Schema, s2: Schema) -> bool:
    return schema_canon(s1) == schema_canon(s2)


# ---------------------------------------------------------------------------
# extended projection expressions (Appendix-style grammar)


@dataclass(frozen=True)
class EAttr:
    name: str


@dataclass(frozen=True)
class EConst:
    value_canon_repr: tuple

    @staticmethod
    def of(value) -> "EConst":
        if value is MISSING or isinstance(value, Rel):
            return EConst(("raw", value))
        return EConst(("json", canon_dumps(canonicalize_value(value))))

    @property
    def value(self):
        kind, payload = self.value_canon_repr
        if kind == "raw":
            return payload
        import json
        return json.loads(payload)


@dataclass(frozen=True)
class FTrue:
    pass


@dataclass(frozen=True)
class FFalse:
    pass


@dataclass(frozen=True)
class FEq:
    """Attribute against constant (atomic or relation)."""
    attr: str
    const: EConst


@dataclass(frozen=True)
class FAttrEq:
    left: str
    right: str


@dataclass(frozen=True)
class FNot:
    inner: "Filter"


@dataclass(frozen=True)
class FAnd:
    items: tuple = ()


@dataclass(frozen=True)
class FOr:
    items: tuple = ()


Filter = Union[FTrue, FFalse, FEq, FAttrEq, FNot, FAnd, FOr]


@dataclass(frozen=True)
class ECond:
    cond: Filter
    then: "ExtExpr"
    other: "ExtExpr"


@dataclass(frozen=True)
class ESubrel:
    """Relation constructor: a set of tuple definitions over a shared name set."""
    rows: tuple = ()  # of tuple((name, ExtExpr), ...)

    def __post_init__(self):
        shapes = {tuple(sorted(n for n, _ in row)) for row in self.rows}
        if len(shapes) > 1:
            raise SchemaError("subrel tuple definitions must share one schema")


ExtExpr = Union[EAttr, EConst, Filter, ECond, ESubrel]


def eval_filter(f: Filter, tup: Tup) -> bool:
    if isinstance(f, FTrue):
        return True
    if isinstance(f, FFalse):
        return False
    if isinstance(f, FEq):
        return values_equal(tup[f.attr], f.const.value, f.attr, f.attr)
    if isinstance(f, FAttrEq):
        return values_equal(tup[f.left], tup[f.right], f.left, f.right)
    if isinstance(f, FNot):
        return not eval_filter(f.inner, tup)
    if isinstance(f, FAnd):
        return all(eval_filter(x, tup) for x in f.items)
    if isinstance(f, FOr):
        return any(eval_filter(x, tup) for x in f.items)
    raise WorkbenchError(f"not a filter: {f!r}")


def eval_ext_expr(e: ExtExpr, tup: Tup):
    """Evaluation of an extended-projection expression over one tuple."""
    if isinstance(e, EAttr):
        return tup[e.name]
    if isinstance(e, EConst):
        return e.value
    if isinstance(e, (FTrue, FFalse, FEq, FAttrEq, FNot, FAnd, FOr)):
        return eval_filter(e, tup)
    if isinstance(e, ECond):
        return eval_ext_expr(e.then if eval_filter(e.cond, tup) else e.other, tup)
    if isinstance(e, ESubrel):
        return Rel(Tup({n: eval_ext_expr(x, tup) for n, x in row}) for row in e.rows)
    raise WorkbenchError(f"not an expression: {e!r}")


def _expr_source_attr(e: ExtExpr, tup: Tup) -> Optional[str]:
    """The attribute an expression resolves to, when it is a plain (possibly
    conditional) reference; renames of relation values follow it."""
    if isinstance(e, EAttr):
        return e.name
    if isinstance(e, ECond):
        return _expr_source_attr(e.then if eval_filter(e.cond, tup) else e.other, tup)
    return None


# ---------------------------------------------------------------------------
# queries


@dataclass(frozen=True)
class QRel:
    name: str


@dataclass(frozen=True)
class QUnion:
    left: "Query"
    right: "Query"


@dataclass(frozen=True)
class QDiff:
    left: "Query"
    right: "Query"


@dataclass(frozen=True)
class QProduct:
    left: "Query"
    right: "Query"


@dataclass(frozen=True)
class QSelect:
    filter: Filter
    source: "Query"


@dataclass(frozen=True)
class PKeep:
    name: str


@dataclass(frozen=True)
class PDef:
    name: str
    expr: ExtExpr


@dataclass(frozen=True)
class QProject:
    items: tuple  # of PKeep | PDef
    source: "Query"

    def __post_init__(self):
        names = [it.name for it in self.items]
        if len(set(names)) != len(names):
            raise SchemaError("projection items must have distinct names")


@dataclass(frozen=True)
class QNest:
    attrs: frozenset
    target: str
    source: "Query"


@dataclass(frozen=True)
class QUnnest:
    attr: str
    source: "Query"


Query = Union[QRel, QUnion, QDiff, QProduct, QSelect, QProject, QNest, QUnnest]


# ---------------------------------------------------------------------------
# standalone operators


def op_select(rel: Rel, f: Filter) -> Rel:
    return Rel(t for t in rel.tuples if eval_filter(f, t))


def op_project(rel: Rel, items) -> Rel:
    out = []
    for t in rel.tuples:
        row = {}
        for it in items:
            if isinstance(it, PKeep):
                row[it.name] = t[it.name]
            else:
                value = eval_ext_expr(it.expr, t)
                src = _expr_source_attr(it.expr, t)
                if src is not None and isinstance(value, Rel):
                    value = rename_value(value, src, it.name)
                row[it.name] = value
        out.append(Tup(row))
    return Rel(out)


def op_union(r1: Rel, r2: Rel) -> Rel:
    _check_union_names(r1, r2)
    return Rel(r1.tuples | r2.tuples)


def op_diff(r1: Rel, r2: Rel) -> Rel:
    _check_union_names(r1, r2)
    return Rel(r1.tuples - r2.tuples)


def _check_union_names(r1: Rel, r2: Rel) -> None:
    if len(r1) and len(r2) and r1.attribute_names() != r2.attribute_names():
        raise SchemaError("set operation over unequal attribute sets")


def op_product(r1: Rel, r2: Rel) -> Rel:
    out = []
    for t1 in r1.tuples:
        row1 = {f"rel1.{n}": prefix_value(v, "rel1") for n, v in t1.items}
        for t2 in r2.tuples:
            row = dict(row1)
            row.update({f"rel2.{n}": prefix_value(v, "rel2") for n, v in t2.items})
            out.append(Tup(row))
    return Rel(out)


def op_nest(rel: Rel, attrs: frozenset, target: str) -> Rel:
    names = rel.attribute_names()
    if len(rel) and not attrs <= names:
        raise SchemaError(f"nest: {sorted(attrs - names)} not in the schema")
    groups: dict = {}
    for t in rel.tuples:
        complement = {n: v for n, v in t.items if n not in attrs}
        inner = {n: v for n, v in t.items if n in attrs}
        key = Tup(complement)
        groups.setdefault(key, []).append(Tup(inner))
    out = []
    for key, inners in groups.items():
        row = dict(key.items)
        row[target] = Rel(inners)
        out.append(Tup(row))
    return Rel(out)


def op_unnest(rel: Rel, attr: str) -> Rel:
    out = []
    for t in rel.tuples:
        value = t[attr]
        if value is MISSING:
            continue
        if not isinstance(value, Rel):
            raise SchemaError(f"unnest: attribute {attr!r} is not a sub-relation")
        complement = {n: v for n, v in t.items if n != attr}
        for inner in value.tuples:
            clash = set(complement) & set(inner._map)
            if clash:
                raise SchemaError(f"unnest: surfaced attributes {sorted(clash)} clash")
            row = dict(complement)
            row.update(inner._map)
            out.append(Tup(row))
    return Rel(out)


# ---------------------------------------------------------------------------
# evaluation and schemas


def eval_query(q: Query, db: dict) -> Rel:
    """Bottom-up evaluation over a map from relation names to instances."""
    if isinstance(q, QRel):
        if q.name not in db:
            raise SchemaError(f"unknown relation {q.name!r}")
        return db[q.name]
    if isinstance(q, QUnion):
        return op_union(eval_query(q.left, db), eval_query(q.right, db))
    if isinstance(q, QDiff):
        return op_diff(eval_query(q.left, db), eval_query(q.right, db))
    if isinstance(q, QProduct):
        return op_product(eval_query(q.left, db), eval_query(q.right, db))
    if isinstance(q, QSelect):
        return op_select(eval_query(q.source, db), q.filter)
    if isinstance(q, QProject):
        return op_project(eval_query(q.source, db), q.items)
    if isinstance(q, QNest):
        return op_nest(eval_query(q.source, db), q.attrs, q.target)
    if isinstance(q, QUnnest):
        return op_unnest(eval_query(q.source, db), q.attr)
    raise WorkbenchError(f"not a query: {q!r}")


def _schema_rename(schema: Schema, old: str, new: str) -> Schema:
    def ren(name: str) -> str:
        if name == old:
            return new
        if name.startswith(old + "."):
            return new + name[len(old):]
        return name

    return Schema(schema.name, tuple(
        Attr(ren(a.name), _schema_rename(a.sub, old, new) if a.sub else None)
        for a in schema.attrs))


def _schema_prefix(schema: Schema, prefix: str) -> Schema:
    return Schema(schema.name, tuple(
        Attr(f"{prefix}.{a.name}", _schema_prefix(a.sub, prefix) if a.sub else None)
        for a in schema.attrs))


def _const_schema(value, name: str) -> Optional[Schema]:
    if not isinstance(value, Rel):
        return None
    attrs = {}
    for t in value.tuples:
        for n, v in t.items:
            attrs.setdefault(n, _const_schema(v, n))
    return Schema(name, tuple(Attr(n, s) for n, s in attrs.items()))


def _expr_schema(e: ExtExpr, name: str, schema: Schema) -> Attr:
    if isinstance(e, EAttr):
        a = schema.attribute(e.name)
        if a.sub is not None:
            return Attr(name, _schema_rename(a.sub, e.name, name))
        return Attr(name, None)
    if isinstance(e, EConst):
        return Attr(name, _const_schema(e.value, name))
    if isinstance(e, ECond):
        return _expr_schema(e.then, name, schema)
    if isinstance(e, ESubrel):
        attrs = {}
        for row in e.rows:
            for n, x in row:
                attrs.setdefault(n, _expr_schema(x, n, schema).sub)
        return Attr(name, Schema(name, tuple(Attr(n, s) for n, s in attrs.items())))
    # filters evaluate to Booleans
    return Attr(name, None)


def schema_of(q: Query, schemas: dict) -> Schema:
    """The schema implied by a query, given schemas for the relation leaves."""
    if isinstance(q, QRel):
        if q.name not in schemas:
            raise SchemaError(f"unknown relation {q.name!r}")
        return schemas[q.name]
    if isinstance(q, (QUnion, QDiff)):
        s1 = schema_of(q.left, schemas)
        s2 = schema_of(q.right, schemas)
        if not schemas_compatible(s1, s2):
            raise SchemaError("set operation over unequal attribute sets")
        return s1
    if isinstance(q, QProduct):
        s1 = _schema_prefix(schema_of(q.left, schemas), "rel1")
        s2 = _schema_prefix(schema_of(q.right, schemas), "rel2")
        return Schema("product", s1.attrs + s2.attrs)
    if isinstance(q, QSelect):
        return schema_of(q.source, schemas)
    if isinstance(q, QProject):
        src = schema_of(q.source, schemas)
        attrs = []
        for it in q.items:
            if isinstance(it, PKeep):
                attrs.append(src.attribute(it.name))
            else:
                attrs.append(_expr_schema(it.expr, it.name, src))
        return Schema(src.name, tuple(attrs))
    if isinstance(q, QNest):
        src = schema_of(q.source, schemas)
        nested = tuple(a for a in src.attrs if a.name in q.attrs)
        rest = tuple(a for a in src.attrs if a.name not in q.attrs)
        if len(nested) != len(q.attrs):
            raise SchemaError("nest: attributes not in the schema")
        return Schema(src.name, rest + (Attr(q.target, Schema(q.target, nested)),))
    if isinstance(q, QUnnest):
        src = schema_of(q.source, schemas)
        a = src.attribute(q.attr)
        if a.sub is None:
            raise SchemaError(f"unnest: attribute {q.attr!r} is atomic")
        rest = tuple(x for x in src.attrs if x.name != q.attr)
        return Schema(src.name, rest + a.sub.attrs)
    raise WorkbenchError(f"not a query: {q!r}")


# ---------------------------------------------------------------------------
# sizes


def filter_size(f: Filter) -> int:
    if isinstance(f, (FTrue, FFalse, FEq, FAttrEq)):
        return 1
    if isinstance(f, FNot):
        return 1 + filter_size(f.inner)
    return 1 + sum(filter_size(x) for x in f.items)


def expr_size(e: ExtExpr) -> int:
    if isinstance(e, (EAttr, EConst)):
        return 1
    if isinstance(e, (FTrue, FFalse, FEq, FAttrEq, FNot, FAnd, FOr)):
        return filter_size(e)
    if isinstance(e, ECond):
        return 1 + filter_size(e.cond) + expr_size(e.then) + expr_size(e.other)
    if isinstance(e, ESubrel):
        return 1 + sum(1 + expr_size(x) for row in e.rows for _, x in row)
    raise WorkbenchError(f"not an expression: {e!r}")


def query_size(q: Query) -> int:
    if isinstance(q, QRel):
        return 1
    if isinstance(q, (QUnion, QDiff, QProduct)):
        return 1 + query_size(q.left) + query_size(q.right)
    if isinstance(q, QSelect):
        return 1 + filter_size(q.filter) + query_size(q.source)
    if isinstance(q, QProject):
        total = 1 + query_size(q.source)
        for it in q.items:
            total += 1 if isinstance(it, PKeep) else 1 + expr_size(it.expr)
        return total
    if isinstance(q, QNest):
        return 1 + len(q.attrs) + query_size(q.source)
    if isinstance(q, QUnnest):
        return 2 + query_size(q.source)
    raise WorkbenchError(f"not a query: {q!r}")
