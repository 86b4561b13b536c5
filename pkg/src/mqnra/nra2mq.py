"""Translation from NRA to the document algebra.

An NRA query is a tree while a pipeline is one sequence of stages, so the
translation first linearizes: spec2 duplicates every input tree into two
specialized copies tagged actRel 1/2 with the original document stored under
rel1/rel2, and subq(j, s) rewrites a stage so that it only affects the trees
of its own side.  Binary operators then combine two translated sequences with
spec2 + subq and recover both answers from the tagged branches.

Single-collection queries translate against one type constraint; queries over
several collections first "bring in" the other collections through a group
and a chain of lookups on a path that exists nowhere, and then tag each
document with the collection it came from.

The tag keys actRel/rel1/rel2/origDoc/actColl/coll1..colln follow the
published convention; genuinely fresh helper names carry the reserved "__"
prefix, and the translator refuses schemas that use any of these names.
"""

from __future__ import annotations

from .errors import ConfigError, UnsupportedError
from .mquery import (
    And,
    BAnd,
    BConst,
    BEq,
    BExists,
    BNot,
    BOr,
    BPathEq,
    BoolDef,
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
from .nra import (
    MISSING,
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
    schema_of,
)
from .reltypes import TypeConstraints, rdb_schemas
from .trees import EPSILON, Path, canon_dumps

ACT_REL = Path(("actRel",))
ORIG_DOC = Path(("origDoc",))
ACT_COLL = Path(("actColl",))
DUMMY = Path(("__dummy",))
COND_KEY = Path(("__cond",))

_MARKERS = {"actRel", "rel1", "rel2", "origDoc", "actColl"}


def _rel_path(j: int) -> Path:
    return Path((f"rel{j}",))


def _coll_path(i: int) -> Path:
    return Path((f"coll{i}",))


# ---------------------------------------------------------------------------
# path rewriting


def _shift(prefix: Path, p: Path) -> Path:
    return prefix + p


def rewrite_criterion(c: Criterion, prefix: Path) -> Criterion:
    if isinstance(c, Cmp):
        return Cmp(_shift(prefix, c.path), c.value_canon)
    if isinstance(c, Exists):
        return Exists(_shift(prefix, c.path))
    if isinstance(c, Not):
        return Not(rewrite_criterion(c.inner, prefix))
    if isinstance(c, And):
        return And(tuple(rewrite_criterion(x, prefix) for x in c.items))
    return Or(tuple(rewrite_criterion(x, prefix) for x in c.items))


def rewrite_bool(b: BoolDef, prefix: Path) -> BoolDef:
    if isinstance(b, BConst):
        return b
    if isinstance(b, BEq):
        return BEq(_shift(prefix, b.path), b.value_canon)
    if isinstance(b, BPathEq):
        return BPathEq(_shift(prefix, b.left), _shift(prefix, b.right))
    if isinstance(b, BExists):
        return BExists(_shift(prefix, b.path))
    if isinstance(b, BNot):
        return BNot(rewrite_bool(b.inner, prefix))
    if isinstance(b, BAnd):
        return BAnd(tuple(rewrite_bool(x, prefix) for x in b.items))
    return BOr(tuple(rewrite_bool(x, prefix) for x in b.items))


def rewrite_def(d: ValueDef, prefix: Path) -> ValueDef:
    if isinstance(d, DConst):
        return d
    if isinstance(d, DPath):
        return DPath(_shift(prefix, d.path))
    if isinstance(d, DArray):
        return DArray(tuple(rewrite_def(x, prefix) for x in d.items))
    if isinstance(d, DBool):
        return DBool(rewrite_bool(d.expr, prefix))
    return DCond(rewrite_bool(d.cond, prefix),
                 rewrite_def(d.then, prefix), rewrite_def(d.other, prefix))


# ---------------------------------------------------------------------------
# spec2 and subqueries


def spec2() -> tuple:
    """Duplicate and specialize each tree into {actRel: j, relj: t}, j = 1, 2."""
    return (
        Project((Define(ORIG_DOC, DPath(EPSILON)),
                 Define(ACT_REL, DArray((DConst.of(1), DConst.of(2))))),
                keep_id=False),
        Unwind(ACT_REL),
        Project((Keep(ACT_REL),
                 Define(_rel_path(1), DCond(BEq.of(ACT_REL, 1), DPath(ORIG_DOC), DPath(DUMMY))),
                 Define(_rel_path(2), DCond(BEq.of(ACT_REL, 2), DPath(ORIG_DOC), DPath(DUMMY)))),
                keep_id=False),
    )


def subq(j: int, stage: Stage) -> tuple:
    """Rewrite one stage so it affects only the trees with actRel = j and
    works under the relj key."""
    if j not in (1, 2):
        raise ConfigError("subquery side must be 1 or 2")
    other = _rel_path(3 - j)
    mine = _rel_path(j)
    other_side = Cmp.of(ACT_REL, 3 - j)

    if isinstance(stage, Match):
        return (Match(Or((other_side, rewrite_criterion(stage.criterion, mine)))),)

    if isinstance(stage, Unwind):
        shifted = _shift(mine, stage.path)
        if stage.preserve:
            return (Unwind(shifted, preserve=True),)
        guard = Or((other_side, And((Exists(shifted), Not(Cmp.of(shifted, []))))))
        return (Match(guard), Unwind(shifted, preserve=True))

    if isinstance(stage, Project):
        items = [Keep(other), Keep(ACT_REL)]
        if stage.keep_id:
            items.append(Keep(mine.child("_id")))
        for item in stage.items:
            if isinstance(item, Keep):
                items.append(Keep(_shift(mine, item.path)))
            else:
                guarded = DCond(BEq.of(ACT_REL, j),
                                rewrite_def(item.definition, mine), DPath(DUMMY))
                items.append(Define(_shift(mine, item.path), guarded))
        return (Project(tuple(items), keep_id=False),)

    if isinstance(stage, Group):
        if isinstance(stage.keys, Path):
            raise UnsupportedError("bare grouping conditions have no subquery form")
        keys = tuple(stage.keys) if stage.keys else ()
        group = Group(
            keys=tuple((_shift(mine, g), _shift(mine, y)) for g, y in keys) + ((ACT_REL, ACT_REL),),
            aggs=tuple((_shift(mine, a), _shift(mine, b)) for a, b in stage.aggs) + ((other, other),),
        )
        restore = [Keep(other), Define(ACT_REL, DPath(Path(("_id",)) + ACT_REL))]
        for a, _ in stage.aggs:
            restore.append(Keep(_shift(mine, a)))
        if keys:
            for g, _ in keys:
                restore.append(Define(mine.child("_id") + g,
                                      DPath(Path(("_id",)) + _shift(mine, g))))
        else:
            # an empty inner grouping condition produces _id: null
            restore.append(Define(mine.child("_id"), DConst.of(None)))
        normalize = Project((
            Keep(ACT_REL),
            Define(_rel_path(1), DCond(BEq.of(ACT_REL, 1), DPath(_rel_path(1)), DPath(DUMMY))),
            Define(_rel_path(2), DCond(BEq.of(ACT_REL, 2), DPath(_rel_path(2)), DPath(DUMMY)))),
            keep_id=False)
        return (group, Project(tuple(restore), keep_id=False), normalize,
                Unwind(other, preserve=True))

    if isinstance(stage, Lookup):
        raise UnsupportedError("lookup stages cannot be packed into a subquery")
    raise UnsupportedError(f"no subquery form for {stage!r}")


def combine_pipelines(q1, q2) -> tuple:
    """spec2, then both stage sequences rewritten to their own sides; the
    result of qi is recoverable under actRel = i at key reli."""
    stages = list(spec2())
    for s in q1:
        stages.extend(subq(1, s))
    for s in q2:
        stages.extend(subq(2, s))
    return tuple(stages)


# ---------------------------------------------------------------------------
# filters and expressions, relationally phrased, as value definitions


def rel_const_to_value(value: Rel, column: str):
    """The array value a sub-relation constant denotes on the tree side."""
    elems = []
    for tup in value:
        names = {n: v for n, v in tup.items if v is not MISSING}
        rel_names = {}
        for n, v in names.items():
            rel_names[n[len(column) + 1:] if n.startswith(column + ".") else n] = (n, v)
        if set(rel_names) == {"lit"}:
            _, v = rel_names["lit"]
            elems.append(rel_const_to_value(v, "lit") if isinstance(v, Rel) else v)
            continue
        obj: dict = {}
        for rel_name, (orig, v) in rel_names.items():
            cur = obj
            parts = rel_name.split(".")
            for seg in parts[:-1]:
                cur = cur.setdefault(seg, {})
            cur[parts[-1]] = rel_const_to_value(v, orig) if isinstance(v, Rel) else v
        elems.append(obj)
    return sorted(elems, key=canon_dumps)


def _const_to_bool_atom(attr: str, const) -> BoolDef:
    path = Path.parse(attr)
    if const is MISSING:
        return BNot(BExists(path))
    if isinstance(const, Rel):
        return BEq.of(path, rel_const_to_value(const, attr))
    return BEq.of(path, const)


def filter_to_bool(f) -> BoolDef:
    """An NRA filter as a Boolean value definition over the document view."""
    if isinstance(f, FTrue):
        return BConst(True)
    if isinstance(f, FFalse):
        return BConst(False)
    if isinstance(f, FEq):
        return _const_to_bool_atom(f.attr, f.const.value)
    if isinstance(f, FAttrEq):
        return BPathEq(Path.parse(f.left), Path.parse(f.right))
    if isinstance(f, FNot):
        return BNot(filter_to_bool(f.inner))
    if isinstance(f, FAnd):
        return BAnd(tuple(filter_to_bool(x) for x in f.items))
    if isinstance(f, FOr):
        return BOr(tuple(filter_to_bool(x) for x in f.items))
    raise UnsupportedError(f"cannot translate filter {f!r}")


def expr_to_def(e, target: str) -> ValueDef:
    if isinstance(e, EAttr):
        return DPath(Path.parse(e.name))
    if isinstance(e, EConst):
        v = e.value
        if v is MISSING:
            return DPath(DUMMY)
        if isinstance(v, Rel):
            return DConst.of(rel_const_to_value(v, target))
        return DConst.of(v)
    if isinstance(e, (FTrue, FFalse, FEq, FAttrEq, FNot, FAnd, FOr)):
        return DBool(filter_to_bool(e))
    if isinstance(e, ECond):
        return DCond(filter_to_bool(e.cond), expr_to_def(e.then, target),
                     expr_to_def(e.other, target))
    if isinstance(e, ESubrel):
        rows = []
        for row in e.rows:
            obj: dict = {}
            for name, x in row:
                if not isinstance(x, EConst) or isinstance(x.value, Rel) or x.value is MISSING:
                    raise UnsupportedError(
                        "subrel with computed fields has no value-definition form")
                rel_name = name[len(target) + 1:] if name.startswith(target + ".") else name
                cur = obj
                parts = rel_name.split(".")
                for seg in parts[:-1]:
                    cur = cur.setdefault(seg, {})
                cur[parts[-1]] = x.value
            rows.append(DConst.of(obj))
        return DArray(tuple(rows))
    raise UnsupportedError(f"cannot translate expression {e!r}")


# ---------------------------------------------------------------------------
# the recursive translation


def _att_keeps(schema: Schema) -> tuple:
    return tuple(Keep(Path.parse(a.name)) for a in schema.attrs)


def _att_project(schema: Schema) -> Project:
    return Project(_att_keeps(schema), keep_id=False)


def nra2mq(q: Query, schemas: dict, leaf=None) -> tuple:
    """The stage sequence for a query, given schemas for the relation leaves.

    `leaf` maps a relation name to the stages that materialize it; the
    default projects the collection onto its schema attributes.
    """
    if isinstance(q, QRel):
        if leaf is not None:
            return leaf(q.name)
        return (_att_project(schemas[q.name]),)

    if isinstance(q, QSelect):
        src_schema = schema_of(q.source, schemas)
        cond = DBool(filter_to_bool(q.filter))
        return nra2mq(q.source, schemas, leaf) + (
            Project(_att_keeps(src_schema) + (Define(COND_KEY, cond),), keep_id=False),
            Match(Cmp.of(COND_KEY, True)),
            _att_project(src_schema),
        )

    if isinstance(q, QProject):
        items = []
        for it in q.items:
            if isinstance(it, PKeep):
                items.append(Keep(Path.parse(it.name)))
            else:
                items.append(Define(Path.parse(it.name), expr_to_def(it.expr, it.name)))
        return nra2mq(q.source, schemas, leaf) + (Project(tuple(items), keep_id=False),)

    if isinstance(q, QNest):
        src_schema = schema_of(q.source, schemas)
        complement = [a.name for a in src_schema.attrs if a.name not in q.attrs]
        target = Path.parse(q.target)
        pack = [Keep(Path.parse(a)) for a in complement]
        pack += [Define(target + Path.parse(p), DPath(Path.parse(p))) for p in sorted(q.attrs)]
        group = Group(
            keys=tuple((Path.parse(a), Path.parse(a)) for a in complement) or None,
            aggs=((target, target),),
        )
        unpack = [Keep(target)]
        unpack += [Define(Path.parse(a), DPath(Path(("_id",)) + Path.parse(a)))
                   for a in complement]
        return nra2mq(q.source, schemas, leaf) + (
            Project(tuple(pack), keep_id=False), group,
            Project(tuple(unpack), keep_id=False),
        )

    if isinstance(q, QUnnest):
        out_schema = schema_of(q, schemas)
        return nra2mq(q.source, schemas, leaf) + (
            Unwind(Path.parse(q.attr)), _att_project(out_schema))

    if isinstance(q, QProduct):
        combined = combine_pipelines(nra2mq(q.left, schemas, leaf), nra2mq(q.right, schemas, leaf))
        return combined + (
            Group(keys=None, aggs=((_rel_path(1), _rel_path(1)), (_rel_path(2), _rel_path(2)))),
            Unwind(_rel_path(1)),
            Unwind(_rel_path(2)),
            Project((Keep(_rel_path(1)), Keep(_rel_path(2))), keep_id=False),
        )

    if isinstance(q, (QUnion, QDiff)):
        att = [a.name for a in schema_of(q.left, schemas).attrs]
        combined = combine_pipelines(nra2mq(q.left, schemas, leaf), nra2mq(q.right, schemas, leaf))
        repack = [Keep(_rel_path(1)), Keep(_rel_path(2))]
        for a in att:
            p = Path.parse(a)
            repack.append(Define(p, DCond(BEq.of(ACT_REL, 1),
                                          DPath(_rel_path(1) + p), DPath(_rel_path(2) + p))))
        keys = tuple((Path.parse(a), Path.parse(a)) for a in att) or None
        unpack = tuple(Define(Path.parse(a), DPath(Path(("_id",)) + Path.parse(a)))
                       for a in att)
        if isinstance(q, QUnion):
            return combined + (
                Project(tuple(repack), keep_id=False),
                Group(keys=keys, aggs=()),
                Project(unpack, keep_id=False),
            )
        return combined + (
            Project(tuple(repack), keep_id=False),
            Group(keys=keys, aggs=((_rel_path(2), _rel_path(2)),)),
            Match(Cmp.of(_rel_path(2), [])),
            Project(unpack, keep_id=False),
        )

    raise UnsupportedError(f"cannot translate query {q!r}")


# ---------------------------------------------------------------------------
# whole-query entry points


def _leaf_names(q: Query) -> set:
    if isinstance(q, QRel):
        return {q.name}
    if isinstance(q, (QUnion, QDiff, QProduct)):
        return _leaf_names(q.left) | _leaf_names(q.right)
    return _leaf_names(q.source)


def _check_markers(schemas: dict) -> None:
    import re
    for schema in schemas.values():
        for attr in schema.attrs:
            head = attr.name.split(".", 1)[0]
            if head in _MARKERS or head.startswith("__") or re.fullmatch(r"coll\d+", head):
                raise ConfigError(
                    f"attribute {attr.name!r} collides with a reserved translation key")


def translate_single(q: Query, collection: str, constraints: TypeConstraints) -> Pipeline:
    """A query over one collection becomes a pipeline over that collection."""
    leaves = _leaf_names(q)
    if leaves != {collection}:
        raise ConfigError(f"query mentions {sorted(leaves)}, expected only {collection!r}")
    schemas = rdb_schemas(constraints)
    if collection not in schemas:
        raise ConfigError(f"no type constraint for collection {collection!r}")
    _check_markers(schemas)
    return Pipeline(collection, nra2mq(q, schemas))


def bring(colls: list) -> tuple:
    """Aggregate the home collection into coll1, pull every other collection
    in through a lookup over a path that exists nowhere, and fan the union
    out again tagged with actColl."""
    n = len(colls)
    stages: list = [Group(keys=None, aggs=((_coll_path(1), EPSILON),))]
    for i, name in enumerate(colls[1:], start=2):
        stages.append(Lookup(_coll_path(i), DUMMY, DUMMY, name))
    spread = [Keep(_coll_path(i)) for i in range(1, n + 1)]
    spread.append(Define(ACT_COLL, DArray(tuple(DConst.of(i) for i in range(1, n + 1)))))
    stages.append(Project(tuple(spread), keep_id=False))
    stages.append(Unwind(ACT_COLL))
    normalize = [Keep(ACT_COLL)]
    for i in range(1, n + 1):
        normalize.append(Define(_coll_path(i), DCond(BEq.of(ACT_COLL, i),
                                                     DPath(_coll_path(i)), DPath(DUMMY))))
    stages.append(Project(tuple(normalize), keep_id=False))
    for i in range(1, n + 1):
        stages.append(Unwind(_coll_path(i), preserve=True))
    return tuple(stages)


def translate_multi(q: Query, constraints: TypeConstraints) -> Pipeline:
    """A query over n >= 2 collections becomes a pipeline over the first one
    (in sorted order), prefixed with the bring-in phase."""
    leaves = sorted(_leaf_names(q))
    if len(leaves) < 2:
        raise ConfigError("translate_multi needs a query over at least two collections")
    for name in leaves:
        if name not in constraints:
            raise ConfigError(f"no type constraint for collection {name!r}")
    schemas = rdb_schemas(constraints)
    _check_markers({name: schemas[name] for name in leaves})
    order = {name: i + 1 for i, name in enumerate(leaves)}

    def collection_leaf(name: str) -> tuple:
        i = order[name]
        schema = schemas[name]
        unpack = tuple(Define(Path.parse(a.name), DPath(_coll_path(i) + Path.parse(a.name)))
                       for a in schema.attrs)
        return (
            Match(And((Cmp.of(ACT_COLL, i), Exists(_coll_path(i))))),
            Project(unpack, keep_id=False),
        )

    return Pipeline(leaves[0], bring(leaves) + nra2mq(q, schemas, leaf=collection_leaf))
