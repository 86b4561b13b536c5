"""The type discipline bridging trees and nested relations.

A type is itself a tree: literal leaves, object nodes, and single-child array
nodes.  A document tree is of a type when every path it has exists in the
type with the same kind.  Types induce relation schemas (attributes are the
simple extensions of the root, arrays become sub-relations, arrays of
literals get a single ``p.lit`` attribute), and well-typed forests have a
relational view in which absent paths surface as the missing constant.

The view is tolerant of extra paths: a document may carry keys the type does
not mention (they are simply not part of the view), but a path the type does
mention must have the declared kind.  Strict membership is a separate check
(check_type).

The same module computes output types of stages and checks pipelines:
match preserves the type, unwind and group evaluate the stage over the
singleton forest containing the type tree itself, lookup grafts an array of
the external type, and project composes the types of its value definitions.
"""

from __future__ import annotations

import json
from itertools import product as iter_product
from typing import Optional, Union

from .errors import ConfigError, MergeConflictError, NotWellTypedError, SchemaError
from .mquery import (
    BAnd,
    BConst,
    BEq,
    BExists,
    BNot,
    BOr,
    BPathEq,
    BoolDef,
    DArray,
    DBool,
    DConst,
    DCond,
    DPath,
    Define,
    Group,
    Keep,
    Lookup,
    Match,
    Pipeline,
    Project,
    Stage,
    Unwind,
    eval_bool,
)
from .nra import MISSING, Attr, Rel, Schema, Tup
from .trees import (
    ARRAY,
    LITERAL,
    OBJECT,
    DocumentTree,
    Forest,
    Path,
    Value,
    attach,
    build_tree,
    canon_dumps,
    merge,
    value_kind,
)

LITERAL_TYPE = "literal"


class TypeTree:
    """A canonical type tree; the underlying value follows the type grammar."""

    __slots__ = ("value", "_canon")

    def __init__(self, value):
        canonical = _canon_type(value)
        object.__setattr__(self, "value", canonical)
        object.__setattr__(self, "_canon", json.dumps(canonical, sort_keys=True))

    def __setattr__(self, name, value):  # pragma: no cover
        raise AttributeError("TypeTree is immutable")

    @property
    def canon(self) -> str:
        return self._canon

    def kind(self) -> str:
        return _kind(self.value)

    def __eq__(self, other):
        return isinstance(other, TypeTree) and self._canon == other._canon

    def __hash__(self):
        return hash(self._canon)

    def __repr__(self):
        return f"TypeTree({self._canon})"


def _canon_type(value):
    if value == LITERAL_TYPE:
        return LITERAL_TYPE
    if isinstance(value, dict):
        return {k: _canon_type(v) for k, v in sorted(value.items())}
    if isinstance(value, list):
        if len(value) != 1:
            raise SchemaError("an array type has exactly one element type")
        return [_canon_type(value[0])]
    raise SchemaError(f"not a type: {value!r} (leaves are the string 'literal')")


def _kind(tv) -> str:
    if tv == LITERAL_TYPE:
        return LITERAL
    return OBJECT if isinstance(tv, dict) else ARRAY


TypeConstraints = dict  # collection name -> TypeTree


def load_constraints(text: str) -> TypeConstraints:
    raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ConfigError("type constraints must be a JSON object of collection types")
    return {name: TypeTree(tv) for name, tv in raw.items()}


def dump_constraints(constraints: TypeConstraints) -> str:
    return json.dumps({name: tt.value for name, tt in sorted(constraints.items())},
                      sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# navigation inside type trees


def type_subtree_value(tv, p: Path):
    """The type hanging from a key path, skipping array layers; None if absent."""
    cur = tv
    for key in p:
        while isinstance(cur, list):
            cur = cur[0]
        if not isinstance(cur, dict) or key not in cur:
            return None
        cur = cur[key]
    return cur


def type_kind_at(tt: TypeTree, p: Path) -> Optional[str]:
    sub = type_subtree_value(tt.value, p)
    return None if sub is None else _kind(sub)


def type_subtree(tt: TypeTree, p: Path) -> Optional[TypeTree]:
    sub = type_subtree_value(tt.value, p)
    return None if sub is None else TypeTree(sub)


def is_first_array_in_type(tt: TypeTree, p: Path) -> bool:
    if type_kind_at(tt, p) != ARRAY:
        return False
    return all(type_kind_at(tt, q) != ARRAY for q in p.strict_prefixes())


def is_nested_in_type(tt: TypeTree, p: Path) -> bool:
    """Some strict prefix of p has array type."""
    return any(type_kind_at(tt, q) == ARRAY for q in p.strict_prefixes())


def array_prefix(tt: TypeTree, p: Path) -> Optional[Path]:
    """The (unique, level-one) array prefix of p, possibly p itself."""
    for i in range(len(p) + 1):
        q = p[:i]
        if type_kind_at(tt, q) == ARRAY:
            return q
    return None


# ---------------------------------------------------------------------------
# membership


def check_type(t: DocumentTree, tt: TypeTree) -> bool:
    """Strict membership: every path of t exists in the type with its kind."""

    def rec(value, tv) -> bool:
        kind = value_kind(value)
        if tv == LITERAL_TYPE:
            return kind == LITERAL
        if isinstance(tv, dict):
            if kind != OBJECT:
                return False
            return all(k in tv and rec(v, tv[k]) for k, v in value.items())
        if kind != ARRAY:
            return False
        return all(rec(elem, tv[0]) for elem in value)

    return rec(t.value, tt.value)


def forest_of_type(forest: Forest, tt: TypeTree) -> bool:
    return all(check_type(t, tt) for t in forest)


# ---------------------------------------------------------------------------
# relation schemas (simple extensions)


def rschema(tt: TypeTree, name: str = "R") -> Schema:
    """The relation schema induced by a type; the root must be an object and
    arrays directly inside arrays have no relational counterpart."""
    if not isinstance(tt.value, dict):
        raise SchemaError("only object-rooted types induce relation schemas")
    return Schema(name, tuple(_ratt(tt.value, Path(()))))


def _ratt(tv: dict, base: Path) -> list[Attr]:
    attrs: list[Attr] = []
    for key, sub in tv.items():
        p = base.child(key)
        if sub == LITERAL_TYPE:
            attrs.append(Attr(str(p), None))
        elif isinstance(sub, dict):
            attrs.extend(_ratt(sub, p))
        else:
            elem = sub[0]
            if elem == LITERAL_TYPE:
                attrs.append(Attr(str(p), Schema(str(p), (Attr(f"{p}.lit", None),))))
            elif isinstance(elem, dict):
                attrs.append(Attr(str(p), Schema(str(p), tuple(_ratt(elem, p)))))
            else:
                raise SchemaError(
                    f"array directly inside array at {p}: no relational view exists")
    return attrs


def object_expansion(schema: Schema, p: Path) -> list[Attr]:
    """The attributes descending from an object path at this nesting level."""
    prefix = str(p) + "."
    return [a for a in schema.attrs if a.name.startswith(prefix)]


# ---------------------------------------------------------------------------
# relational view and its inverse


def _navigate(value, segments, where: str):
    """Walk object keys only; returns MISSING when a key is absent."""
    cur = value
    for key in segments:
        if not isinstance(cur, dict):
            raise NotWellTypedError(f"{where}: expected an object on the way to {key!r}")
        if key not in cur:
            return MISSING
        cur = cur[key]
    return cur


def _rtuple(value, tv: dict, base: Path, where: str) -> Tup:
    row = {}
    for key, sub in tv.items():
        p = base.child(key)
        inner = value.get(key, MISSING) if isinstance(value, dict) else MISSING
        if sub == LITERAL_TYPE:
            if inner is not MISSING and value_kind(inner) != LITERAL:
                raise NotWellTypedError(f"{where}: path {p} should be a literal")
            row[str(p)] = inner
        elif isinstance(sub, dict):
            if inner is MISSING:
                for attr in _ratt(sub, p):
                    _fill_missing(row, attr)
            else:
                if value_kind(inner) != OBJECT:
                    raise NotWellTypedError(f"{where}: path {p} should be an object")
                row.update(_rtuple(inner, sub, p, where)._map)
        else:
            elem_tv = sub[0]
            if inner is MISSING:
                row[str(p)] = MISSING
                continue
            if value_kind(inner) != ARRAY:
                raise NotWellTypedError(f"{where}: path {p} should be an array")
            if elem_tv == LITERAL_TYPE:
                rows = []
                for elem in inner:
                    if value_kind(elem) != LITERAL:
                        raise NotWellTypedError(f"{where}: elements of {p} should be literals")
                    rows.append(Tup({f"{p}.lit": elem}))
                row[str(p)] = Rel(rows)
            elif isinstance(elem_tv, dict):
                rows = []
                for elem in inner:
                    if value_kind(elem) != OBJECT:
                        raise NotWellTypedError(f"{where}: elements of {p} should be objects")
                    rows.append(_rtuple(elem, elem_tv, p, where))
                row[str(p)] = Rel(rows)
            else:
                raise SchemaError(f"array directly inside array at {p}")
    return Tup(row)


def _fill_missing(row: dict, attr: Attr) -> None:
    row[attr.name] = MISSING


def rel(forest: Forest, tt: TypeTree, name: str = "R") -> Rel:
    """The relational view of a forest under a type; extra paths are ignored,
    conflicting paths raise."""
    if not isinstance(tt.value, dict):
        raise SchemaError("only object-rooted types have relational views")
    return Rel(_rtuple(t.value, tt.value, Path(()), name) for t in forest)


def rdb(db, constraints: TypeConstraints) -> dict:
    """Per-collection relational views; relation names are collection names."""
    views = {}
    for name, forest in db.collections.items():
        if name not in constraints:
            raise ConfigError(f"no type constraint for collection {name!r}")
        views[name] = rel(forest, constraints[name], name)
    return views


def rdb_schemas(constraints: TypeConstraints) -> dict:
    return {name: rschema(tt, name) for name, tt in constraints.items()}


def _mongo_value(tup: Tup, tv: dict, base: Path):
    out = {}
    for key, sub in tv.items():
        p = base.child(key)
        if sub == LITERAL_TYPE:
            v = tup.get(str(p), MISSING)
            if v is not MISSING:
                out[key] = v
        elif isinstance(sub, dict):
            inner = _mongo_value(tup, sub, p)
            if inner:
                out[key] = inner
        else:
            v = tup.get(str(p), MISSING)
            if v is MISSING:
                continue
            if not isinstance(v, Rel):
                raise SchemaError(f"attribute {p} should hold a sub-relation")
            elem_tv = sub[0]
            if elem_tv == LITERAL_TYPE:
                elems = sorted((t[f"{p}.lit"] for t in v), key=canon_dumps)
            else:
                elems = sorted((_mongo_value(t, elem_tv, p) for t in v), key=canon_dumps)
            out[key] = elems
    return out


def mongo_view(instance: Rel, tt: TypeTree) -> Forest:
    """The document view of a nested relation: missing attributes become
    absent paths, sub-relations become arrays in canonical element order."""
    if not isinstance(tt.value, dict):
        raise SchemaError("only object-rooted types have document views")
    return Forest(build_tree(_mongo_value(t, tt.value, Path(()))) for t in instance)


def forest_equiv(forest: Forest, instance: Rel, tt: TypeTree) -> bool:
    """rel(F) = R, as sets of tuples (sub-relation names compared relative
    to their column)."""
    return rel(forest, tt) == instance


# ---------------------------------------------------------------------------
# the type of a schema (inverse direction, used by the differential harness)


def _graft(target: dict, segments, leaf) -> None:
    cur = target
    for key in segments[:-1]:
        nxt = cur.setdefault(key, {})
        if not isinstance(nxt, dict):
            raise SchemaError(f"attribute name clash under {key!r}")
        cur = nxt
    if segments[-1] in cur:
        raise SchemaError(f"attribute name clash at {segments[-1]!r}")
    cur[segments[-1]] = leaf


def type_of_schema(schema: Schema) -> TypeTree:
    """Rebuild the tree-shaped type a schema describes; sub-relation inner
    names are taken relative to the sub-relation's path."""
    root: dict = {}
    for attr in schema.attrs:
        _graft(root, attr.name.split("."), _attr_type_value(attr))
    return TypeTree(root)


def _attr_type_value(attr: Attr):
    if attr.sub is None:
        return LITERAL_TYPE
    inner_names = [a.name for a in attr.sub.attrs]
    if inner_names in ([f"{attr.name}.lit"], ["lit"]):
        return [LITERAL_TYPE]
    elem: dict = {}
    for sub_attr in attr.sub.attrs:
        rel_name = sub_attr.name
        if rel_name.startswith(attr.name + "."):
            rel_name = rel_name[len(attr.name) + 1:]
        renamed = Attr(rel_name, _rename_schema(sub_attr.sub, sub_attr.name, rel_name)
                       if sub_attr.sub else None)
        _graft(elem, rel_name.split("."), _attr_type_value(renamed))
    return [elem]


def _rename_schema(schema: Schema, old: str, new: str) -> Schema:
    from .nra import _schema_rename
    return _schema_rename(schema, old, new)


# ---------------------------------------------------------------------------
# types of value definitions (project typing)


def type_of_value(value: Value) -> Optional[TypeTree]:
    def rec(v):
        kind = value_kind(v)
        if kind == LITERAL:
            return LITERAL_TYPE
        if kind == OBJECT:
            return {k: rec(x) for k, x in v.items()}
        elems = [rec(x) for x in v]
        if not elems:
            return None
        first = json.dumps(_canon_type(elems[0]) if elems[0] is not None else None, sort_keys=True)
        for e in elems[1:]:
            if e is None or json.dumps(_canon_type(e), sort_keys=True) != first:
                return None
        return [elems[0]] if elems[0] is not None else None

    try:
        tv = rec(value)
    except SchemaError:
        return None
    return None if tv is None else TypeTree(tv)


def _beta_paths(b: BoolDef, paths: set, consts: list) -> None:
    if isinstance(b, BEq):
        paths.add(b.path)
        consts.append(b.value)
    elif isinstance(b, BExists):
        paths.add(b.path)
    elif isinstance(b, BPathEq):
        paths.add(b.left)
        paths.add(b.right)
    elif isinstance(b, BNot):
        _beta_paths(b.inner, paths, consts)
    elif isinstance(b, (BAnd, BOr)):
        for x in b.items:
            _beta_paths(x, paths, consts)


def _minimal_value(tv):
    if tv == LITERAL_TYPE:
        return "z!fresh"
    if isinstance(tv, dict):
        return {k: _minimal_value(v) for k, v in tv.items()}
    return [_minimal_value(tv[0])]


_WITNESS_CAP = 512


def classify_condition(cond: BoolDef, tt: TypeTree) -> str:
    """'valid', 'unsatisfiable' or 'mixed' over trees of the given type,
    decided by bounded witness enumeration (conservative for exotic domains:
    anything the sample cannot settle is reported as mixed)."""
    if cond == BConst(True):
        return "valid"
    if cond == BConst(False):
        return "unsatisfiable"
    paths: set = set()
    consts: list = []
    _beta_paths(cond, paths, consts)
    paths = sorted(paths)
    if not paths or len(paths) > 4:
        return "mixed"
    choices = []
    for p in paths:
        tv = type_subtree_value(tt.value, p)
        opts = [None]  # absent
        if tv is not None:
            path_type = TypeTree(tv)
            probes = [c for c in consts if type_of_value(c) == path_type][:3]
            probes.append(_minimal_value(tv))
            if tv == LITERAL_TYPE:
                probes.extend(["z!other", 909090])
            if isinstance(tv, list):
                probes.append([])
            seen, uniq = set(), []
            for v in probes:
                key = canon_dumps(v)
                if key not in seen:
                    seen.add(key)
                    uniq.append(v)
            opts.extend(uniq)
        choices.append(opts)
    total = 1
    for opts in choices:
        total *= len(opts)
    if total > _WITNESS_CAP:
        return "mixed"
    outcomes = set()
    for combo in iter_product(*choices):
        doc = build_tree({})
        try:
            for p, v in zip(paths, combo):
                if v is None:
                    continue
                if not p:
                    doc = build_tree(v) if value_kind(v) == OBJECT else doc
                    continue
                doc = merge(doc, attach(p, build_tree(v)))
        except MergeConflictError:
            continue
        outcomes.add(eval_bool(doc, cond))
        if len(outcomes) == 2:
            return "mixed"
    if outcomes == {True}:
        return "valid"
    if outcomes == {False}:
        return "unsatisfiable"
    return "mixed"


def def_type(d, tt: TypeTree) -> Optional[TypeTree]:
    """The type of a value definition with respect to an input type, or None
    when no single type covers it."""
    if isinstance(d, DConst):
        return type_of_value(d.value)
    if isinstance(d, DBool):
        return TypeTree(LITERAL_TYPE)
    if isinstance(d, DPath):
        # a path below an array denotes one node or many depending on the
        # data, so its value is a literal for one tree and an array for the
        # next: no single type covers it
        if is_nested_in_type(tt, d.path):
            return None
        sub = type_subtree(tt, d.path)
        # a path the type does not mention is missing in every tree; the
        # defined key never appears, so any leaf type is sound
        return sub if sub is not None else TypeTree(LITERAL_TYPE)
    if isinstance(d, DArray):
        if not d.items:
            return None
        item_types = [def_type(x, tt) for x in d.items]
        if any(x is None for x in item_types) or len({x.canon for x in item_types}) != 1:
            return None
        return TypeTree([item_types[0].value])
    if isinstance(d, DCond):
        status = classify_condition(d.cond, tt)
        if status == "valid":
            return def_type(d.then, tt)
        if status == "unsatisfiable":
            return def_type(d.other, tt)
        t1 = def_type(d.then, tt)
        t2 = def_type(d.other, tt)
        if t1 is not None and t1 == t2:
            return t1
        return None
    raise SchemaError(f"not a value definition: {d!r}")


# ---------------------------------------------------------------------------
# stage output types


def _keep_type_value(tv, segments):
    if not segments:
        return tv
    if isinstance(tv, dict):
        key = segments[0]
        if key not in tv:
            return None
        below = _keep_type_value(tv[key], segments[1:])
        return None if below is None else {key: below}
    if isinstance(tv, list):
        below = _keep_type_value(tv[0], segments)
        return None if below is None else [below]
    return None


def _merge_type_values(v1, v2, where: str):
    if isinstance(v1, dict) and isinstance(v2, dict):
        out = dict(v1)
        for k, v in v2.items():
            out[k] = _merge_type_values(out[k], v, where) if k in out else v
        return out
    if isinstance(v1, list) and isinstance(v2, list):
        return [_merge_type_values(v1[0], v2[0], where)]
    if v1 == v2:
        return v1
    raise NotWellTypedError(f"{where}: conflicting types "
                            f"{json.dumps(v1)} vs {json.dumps(v2)}")


def _project_output_type(stage: Project, tt: TypeTree) -> TypeTree:
    out: dict = {}
    contributions = []
    for item in stage.items:
        if isinstance(item, Keep):
            kept = _keep_type_value(tt.value, list(item.path))
            if kept is not None:
                contributions.append(kept)
        else:
            dt = def_type(item.definition, tt)
            if dt is None:
                raise NotWellTypedError(
                    f"no single type covers the definition of {item.path}")
            spine = dt.value
            for key in reversed(item.path.segments):
                spine = {key: spine}
            contributions.append(spine)
    if stage.keep_id:
        kept = _keep_type_value(tt.value, ["_id"])
        if kept is not None:
            contributions.append(kept)
    for c in contributions:
        out = _merge_type_values(out, c, "project output")
    return TypeTree(out)


def _group_output_type(stage: Group, tt: TypeTree) -> TypeTree:
    out: dict = {}
    if stage.keys is None:
        out["_id"] = LITERAL_TYPE
    elif isinstance(stage.keys, Path):
        sub = type_subtree_value(tt.value, stage.keys)
        if sub is not None and sub != LITERAL_TYPE:
            raise NotWellTypedError(
                "bare grouping mixes null with a non-literal grouped value; "
                "use the object grouping form")
        out["_id"] = LITERAL_TYPE
    else:
        id_tv: dict = {}
        for g, y in stage.keys:
            sub = type_subtree_value(tt.value, y)
            if sub is None:
                continue
            spine = sub
            for key in reversed(g.segments):
                spine = {key: spine}
            id_tv = _merge_type_values(id_tv, spine, "group _id")
        out["_id"] = id_tv
    for a, b in stage.aggs:
        sub = type_subtree_value(tt.value, b)
        leaf = [sub] if sub is not None else [LITERAL_TYPE]
        spine = leaf
        for key in reversed(a.segments):
            spine = {key: spine}
        out = _merge_type_values(out, spine, "group output")
    return TypeTree(out)


def stage_output_type(stage: Stage, tt: TypeTree,
                      ext: Optional[TypeTree] = None) -> TypeTree:
    """The output type of a well-typed stage; raises NotWellTypedError when
    the stage has none."""
    if isinstance(stage, Match):
        return tt
    if isinstance(stage, Unwind):
        if is_first_array_in_type(tt, stage.path):
            elem = type_subtree_value(tt.value, stage.path)[0]
            kept = _remove_type_at(tt.value, list(stage.path))
            spine = elem
            for key in reversed(stage.path.segments):
                spine = {key: spine}
            return TypeTree(_merge_type_values(kept, spine, "unwind output"))
        if stage.preserve:
            return tt
        raise NotWellTypedError(
            f"unwind over {stage.path} empties every forest of this type")
    if isinstance(stage, Project):
        return _project_output_type(stage, tt)
    if isinstance(stage, Group):
        return _group_output_type(stage, tt)
    if isinstance(stage, Lookup):
        if ext is None:
            raise ConfigError("lookup typing requires the external collection type")
        if type_kind_at(tt, stage.path) is not None:
            raise NotWellTypedError(f"lookup target {stage.path} already exists in the type")
        spine: object = [ext.value]
        for key in reversed(stage.path.segments):
            spine = {key: spine}
        return TypeTree(_merge_type_values(dict(tt.value), spine, "lookup output"))
    raise SchemaError(f"not a stage: {stage!r}")


def _remove_type_at(tv, segments):
    if len(segments) == 1:
        return {k: v for k, v in tv.items() if k != segments[0]}
    return {k: (_remove_type_at(v, segments[1:]) if k == segments[0] else v)
            for k, v in tv.items()}


def pipeline_typecheck(q: Pipeline, constraints: TypeConstraints) -> list[TypeTree]:
    """Fold stage_output_type along the pipeline; the result lists the input
    type of every stage followed by the output type of the last one."""
    if q.collection not in constraints:
        raise ConfigError(f"no type constraint for collection {q.collection!r}")
    types = [constraints[q.collection]]
    for i, stage in enumerate(q.stages):
        ext = None
        if isinstance(stage, Lookup):
            if stage.collection not in constraints:
                raise ConfigError(f"no type constraint for collection {stage.collection!r}")
            ext = constraints[stage.collection]
        try:
            types.append(stage_output_type(stage, types[-1], ext))
        except NotWellTypedError as exc:
            raise NotWellTypedError(str(exc), stage_index=i) from exc
    return types
