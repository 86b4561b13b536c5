"""The MQuery document algebra: criteria, value definitions, stages, and the
forest-to-forest semantics of each stage.

Stages transform forests (sets of trees): match filters, unwind flattens a
first array, project reshapes trees, group partitions and aggregates, lookup
left-joins an external collection.  Everything is a pure function over
immutable inputs.

Semantics follow the formal reading rather than live MongoDB wherever the two
diverge (deep equality, null vs missing, grouping of missing paths), with one
exception: unwind-with-preserve drops a present-but-empty array from the
preserved tree, because keeping the empty array would let one stage emit
forests that no single type covers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import (
    IllFormedProjectionError,
    MergeConflictError,
    MissingCollectionError,
    SemanticError,
    WorkbenchError,
)
from .trees import (
    ARRAY,
    EPSILON,
    DocumentTree,
    Forest,
    Path,
    Value,
    array_of,
    attach,
    build_tree,
    canon_dumps,
    canonicalize_value,
    index_children,
    interpret_path,
    is_first_array,
    merge,
    remove_at,
    subtree_at,
    subvalue_at,
)

# ---------------------------------------------------------------------------
# criteria (match)


@dataclass(frozen=True)
class Cmp:
    """Atomic criterion: the value of a path equals a constant."""
    path: Path
    value_canon: str

    @staticmethod
    def of(path: Path, value: Value) -> "Cmp":
        return Cmp(path, canon_dumps(canonicalize_value(value)))

    @property
    def value(self) -> Value:
        import json
        return json.loads(self.value_canon)


@dataclass(frozen=True)
class Exists:
    path: Path


@dataclass(frozen=True)
class Not:
    inner: "Criterion"


@dataclass(frozen=True)
class And:
    items: tuple = ()


@dataclass(frozen=True)
class Or:
    items: tuple = ()


Criterion = Union[Cmp, Exists, Not, And, Or]

TRUE = And(())
FALSE = Or(())


def conj(items) -> Criterion:
    items = tuple(items)
    return items[0] if len(items) == 1 else And(items)


def disj(items) -> Criterion:
    items = tuple(items)
    return items[0] if len(items) == 1 else Or(items)


# ---------------------------------------------------------------------------
# Boolean value definitions (project)


@dataclass(frozen=True)
class BConst:
    value: bool


@dataclass(frozen=True)
class BEq:
    """Path against constant, with the same matching rules as match atoms."""
    path: Path
    value_canon: str

    @staticmethod
    def of(path: Path, value: Value) -> "BEq":
        return BEq(path, canon_dumps(canonicalize_value(value)))

    @property
    def value(self) -> Value:
        import json
        return json.loads(self.value_canon)


@dataclass(frozen=True)
class BPathEq:
    """Two paths match-equal some common value, or are both missing."""
    left: Path
    right: Path


@dataclass(frozen=True)
class BExists:
    path: Path


@dataclass(frozen=True)
class BNot:
    inner: "BoolDef"


@dataclass(frozen=True)
class BAnd:
    items: tuple = ()


@dataclass(frozen=True)
class BOr:
    items: tuple = ()


BoolDef = Union[BConst, BEq, BPathEq, BExists, BNot, BAnd, BOr]


# ---------------------------------------------------------------------------
# value definitions


@dataclass(frozen=True)
class DConst:
    value_canon: str

    @staticmethod
    def of(value: Value) -> "DConst":
        return DConst(canon_dumps(canonicalize_value(value)))

    @property
    def value(self) -> Value:
        import json
        return json.loads(self.value_canon)


@dataclass(frozen=True)
class DPath:
    path: Path


@dataclass(frozen=True)
class DArray:
    items: tuple = ()


@dataclass(frozen=True)
class DBool:
    expr: BoolDef


@dataclass(frozen=True)
class DCond:
    cond: BoolDef
    then: "ValueDef"
    other: "ValueDef"


ValueDef = Union[DConst, DPath, DArray, DBool, DCond]


# ---------------------------------------------------------------------------
# stages


@dataclass(frozen=True)
class Keep:
    path: Path


@dataclass(frozen=True)
class Define:
    path: Path
    definition: ValueDef


ProjItem = Union[Keep, Define]


def _check_prefix_free(paths: list[Path], what: str) -> None:
    for i, p in enumerate(paths):
        for q in paths[i + 1:]:
            if p.is_prefix_of(q) or q.is_prefix_of(p):
                raise SemanticError(f"{what}: {p} and {q} violate prefix-freeness")


@dataclass(frozen=True)
class Match:
    criterion: Criterion


@dataclass(frozen=True)
class Unwind:
    path: Path
    preserve: bool = False

    def __post_init__(self):
        if not self.path:
            raise SemanticError("unwind path must be non-empty")


@dataclass(frozen=True)
class Project:
    items: tuple  # of ProjItem
    keep_id: bool = True

    def __post_init__(self):
        paths = [it.path for it in self.items]
        if not paths:
            raise SemanticError("projection list must be non-empty")
        _check_prefix_free(paths, "projection")


@dataclass(frozen=True)
class Group:
    """Grouping specification.

    keys is None for the empty grouping condition (one group, _id null), a
    single Path for the bare form (_id takes the grouped value directly,
    missing collapsing to null), or a tuple of (output, source) path pairs
    for the object form (_id is an object of the present source values).
    """
    keys: Union[None, Path, tuple] = None
    aggs: tuple = ()  # of (output Path, source Path)

    def __post_init__(self):
        outs = [a for a, _ in self.aggs]
        if isinstance(self.keys, tuple):
            outs = [g for g, _ in self.keys] + outs
            if not self.keys:
                raise SemanticError("object grouping condition must be non-empty")
        _check_prefix_free(outs, "group outputs")


@dataclass(frozen=True)
class Lookup:
    path: Path
    local: Path
    foreign: Path
    collection: str

    def __post_init__(self):
        if not self.path:
            raise SemanticError("lookup target path must be non-empty")


Stage = Union[Match, Unwind, Project, Group, Lookup]


@dataclass(frozen=True)
class Pipeline:
    collection: str
    stages: tuple = ()

    def fragment(self) -> str:
        """The stage letters used, in MUPGL order (the M^alpha convention)."""
        letters = {Match: "M", Unwind: "U", Project: "P", Group: "G", Lookup: "L"}
        used = {letters[type(s)] for s in self.stages}
        return "".join(c for c in "MUPGL" if c in used)


@dataclass
class DatabaseInstance:
    """Named collections; each document carries a per-collection unique _id."""
    collections: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, forest in self.collections.items():
            validate_collection(name, forest)

    def forest(self, name: str) -> Forest:
        if name not in self.collections:
            raise MissingCollectionError(f"unknown collection {name!r}")
        return self.collections[name]


def validate_collection(name: str, forest: Forest) -> None:
    seen = set()
    for t in forest:
        ids = [subvalue_at(t.value, pos) for pos in interpret_path(t, Path(("_id",)))]
        if len(ids) != 1:
            raise WorkbenchError(f"collection {name!r}: document without a single _id: {t.canon}")
        key = canon_dumps(ids[0])
        if key in seen:
            raise WorkbenchError(f"collection {name!r}: duplicate _id {key}")
        seen.add(key)


# ---------------------------------------------------------------------------
# match semantics


def _match_candidates(t: DocumentTree, p: Path) -> list[Value]:
    """Values a match atom on p may compare with: the nodes at p and the
    nodes one array level below them."""
    positions = interpret_path(t, p)
    out = [subvalue_at(t.value, pos) for pos in positions]
    out.extend(subvalue_at(t.value, pos) for pos in index_children(t, positions))
    return out


def _match_eq(t: DocumentTree, p: Path, value_canon: str) -> bool:
    return any(canon_dumps(v) == value_canon for v in _match_candidates(t, p))


def satisfies(t: DocumentTree, criterion: Criterion) -> bool:
    """t |= criterion, with deep equality and element-of-array matching."""
    if isinstance(criterion, Cmp):
        return _match_eq(t, criterion.path, criterion.value_canon)
    if isinstance(criterion, Exists):
        return bool(interpret_path(t, criterion.path))
    if isinstance(criterion, Not):
        return not satisfies(t, criterion.inner)
    if isinstance(criterion, And):
        return all(satisfies(t, c) for c in criterion.items)
    if isinstance(criterion, Or):
        return any(satisfies(t, c) for c in criterion.items)
    raise WorkbenchError(f"not a criterion: {criterion!r}")


def eval_bool(t: DocumentTree, b: BoolDef) -> bool:
    """Truth value of a Boolean value definition over one tree."""
    if isinstance(b, BConst):
        return b.value
    if isinstance(b, BEq):
        return _match_eq(t, b.path, b.value_canon)
    if isinstance(b, BPathEq):
        lpos = interpret_path(t, b.left)
        rpos = interpret_path(t, b.right)
        if not lpos and not rpos:
            return True
        lvals = {canon_dumps(v) for v in _match_candidates(t, b.left)}
        rvals = {canon_dumps(v) for v in _match_candidates(t, b.right)}
        return bool(lvals & rvals)
    if isinstance(b, BExists):
        return bool(interpret_path(t, b.path))
    if isinstance(b, BNot):
        return not eval_bool(t, b.inner)
    if isinstance(b, BAnd):
        return all(eval_bool(t, x) for x in b.items)
    if isinstance(b, BOr):
        return any(eval_bool(t, x) for x in b.items)
    raise WorkbenchError(f"not a Boolean value definition: {b!r}")


_ABSENT = object()


def _def_value(t: DocumentTree, d: ValueDef):
    """The value associated with a definition, or _ABSENT for a missing path.

    Inside array definitions a missing path degrades to null instead.
    """
    if isinstance(d, DConst):
        return d.value
    if isinstance(d, DPath):
        if not interpret_path(t, d.path):
            return _ABSENT
        return subtree_at(t, d.path).value
    if isinstance(d, DBool):
        return eval_bool(t, d.expr)
    if isinstance(d, DCond):
        branch = d.then if eval_bool(t, d.cond) else d.other
        return _def_value(t, branch)
    if isinstance(d, DArray):
        out = []
        for item in d.items:
            v = _def_value(t, item)
            out.append(None if v is _ABSENT else v)
        return out
    raise WorkbenchError(f"not a value definition: {d!r}")


def value_of_def(t: DocumentTree, d: ValueDef) -> Value:
    """Public reading of v_d: a missing path definition yields null."""
    v = _def_value(t, d)
    return None if v is _ABSENT else v


# ---------------------------------------------------------------------------
# stage application


def apply_match(forest: Forest, criterion: Criterion) -> Forest:
    return Forest(t for t in forest if satisfies(t, criterion))


def _unwind_tree(t: DocumentTree, p: Path, preserve: bool) -> list[DocumentTree]:
    if not is_first_array(t, p):
        if preserve:
            return [t]
        return []
    positions = interpret_path(t, p)
    assert len(positions) == 1, "a first array is denoted by a single node"
    pos = positions[0]
    elements = subvalue_at(t.value, pos)
    if not elements:
        if preserve:
            # Keeping the empty array would make the output forest untypable
            # next to the rebound trees, so the preserved tree drops p.
            return [remove_at(t, pos)]
        return []
    stripped = remove_at(t, pos)
    return [merge(stripped, attach(p, DocumentTree(elem, _trusted=True))) for elem in elements]


def apply_unwind(forest: Forest, p: Path, preserve: bool = False) -> Forest:
    out = []
    for t in forest:
        out.extend(_unwind_tree(t, p, preserve))
    return Forest(out)


def _project_tree(t: DocumentTree, items: tuple, keep_id: bool) -> DocumentTree:
    parts: list[DocumentTree] = []
    for item in items:
        part = _project_item(t, item)
        if part is not None:
            parts.append(part)
    if keep_id:
        part = _project_item(t, Keep(Path(("_id",))))
        if part is not None:
            parts.append(part)
    result = DocumentTree({}, _trusted=True)
    for part in parts:
        try:
            result = merge(result, part)
        except MergeConflictError as exc:
            raise IllFormedProjectionError(f"projection parts conflict: {exc}") from exc
    return result


def _project_item(t: DocumentTree, item: ProjItem) -> Optional[DocumentTree]:
    if isinstance(item, Keep):
        return _keep_subtree(t, item.path)
    d = item.definition
    while isinstance(d, DCond):
        d = d.then if eval_bool(t, d.cond) else d.other
    v = _def_value(t, d)
    if v is _ABSENT:
        return None
    return attach(item.path, DocumentTree(v, _trusted=True))


def _keep_subtree(t: DocumentTree, p: Path) -> Optional[DocumentTree]:
    """The subtree induced by all root-to-leaf paths through a node at p:
    ancestors keep only the branch to p, arrays on the way are re-densified,
    and everything below p survives."""
    if not p:
        return t

    def rec(value: Value, remaining: tuple) -> object:
        if not remaining:
            return value
        if isinstance(value, dict):
            key = remaining[0]
            if key not in value:
                return _ABSENT
            below = rec(value[key], remaining[1:])
            if below is _ABSENT:
                return _ABSENT
            return {key: below}
        if isinstance(value, list):
            kept = []
            for elem in value:
                below = rec(elem, remaining)
                if below is not _ABSENT:
                    kept.append(below)
            if not kept:
                return _ABSENT
            return kept
        return _ABSENT

    kept = rec(t.value, p.segments)
    if kept is _ABSENT:
        return None
    return DocumentTree(kept, _trusted=True)


def apply_project(forest: Forest, items: tuple, keep_id: bool = True) -> Forest:
    paths = [it.path for it in items]
    _check_prefix_free(paths, "projection")
    return Forest(_project_tree(t, items, keep_id) for t in forest)


def _group_key(t: DocumentTree, keys) -> tuple:
    if keys is None:
        return ()
    if isinstance(keys, Path):
        return (subtree_at(t, keys).canon,)
    parts = []
    for g, y in keys:
        if interpret_path(t, y):
            parts.append((str(g), subtree_at(t, y).canon))
    return tuple(parts)


def _aggregate(members: list[DocumentTree], b: Path) -> DocumentTree:
    present = Forest(t for t in members if interpret_path(t, b))
    return array_of(present, b, dedup=True)


def apply_group(forest: Forest, spec: Group) -> Forest:
    """Partition by the grouped values (existence-aware for the object form)
    and collect each aggregation source as a deduplicated array."""
    if not len(forest):
        return Forest()
    classes: dict[tuple, list[DocumentTree]] = {}
    for t in forest:  # canonical order; preserved inside each class
        classes.setdefault(_group_key(t, spec.keys), []).append(t)

    out = []
    for key, members in classes.items():
        member_forest = Forest(members)
        if spec.keys is None:
            head = attach(Path(("_id",)), DocumentTree(None, _trusted=True))
        elif isinstance(spec.keys, Path):
            head = attach(Path(("_id",)), subtree_at(members[0], spec.keys))
        else:
            present = dict(key)
            head = DocumentTree({"_id": {}}, _trusted=True)
            for g, y in spec.keys:
                if str(g) in present:
                    head = merge(head, attach(Path(("_id",)) + g, subtree_at(members[0], y)))
        tree = head
        for a, b in spec.aggs:
            tree = merge(tree, attach(a, _aggregate(members, b)))
        out.append(tree)
    return Forest(out)


def apply_lookup(forest: Forest, p: Path, local: Path, foreign: Path,
                 external: Forest) -> Forest:
    """Join each tree with the matching external trees, stored as an array
    under p; trees lacking the local path join the external trees lacking
    the foreign path."""
    out = []
    for t in forest:
        if interpret_path(t, local):
            criterion: Criterion = Cmp(foreign, subtree_at(t, local).canon)
        else:
            criterion = Not(Exists(foreign))
        matches = apply_match(external, criterion)
        out.append(merge(t, attach(p, array_of(matches, EPSILON))))
    return Forest(out)


def apply_stage(forest: Forest, stage: Stage, db: Optional[DatabaseInstance] = None) -> Forest:
    if isinstance(stage, Match):
        return apply_match(forest, stage.criterion)
    if isinstance(stage, Unwind):
        return apply_unwind(forest, stage.path, stage.preserve)
    if isinstance(stage, Project):
        return apply_project(forest, stage.items, stage.keep_id)
    if isinstance(stage, Group):
        return apply_group(forest, stage)
    if isinstance(stage, Lookup):
        if db is None:
            raise MissingCollectionError("lookup stage requires a database instance")
        return apply_lookup(forest, stage.path, stage.local, stage.foreign,
                            db.forest(stage.collection))
    raise WorkbenchError(f"not a stage: {stage!r}")


def run_pipeline(q: Pipeline, db: DatabaseInstance) -> Forest:
    """Evaluate the pipeline stage by stage over the named collection."""
    forest = db.forest(q.collection)
    for stage in q.stages:
        forest = apply_stage(forest, stage, db)
    return forest


def run_stages(forest: Forest, stages, db: Optional[DatabaseInstance] = None) -> Forest:
    for stage in stages:
        forest = apply_stage(forest, stage, db)
    return forest


# ---------------------------------------------------------------------------
# sizes (for the polynomial-size reports)


def criterion_size(c: Criterion) -> int:
    if isinstance(c, (Cmp, Exists)):
        return 1 + len(c.path)
    if isinstance(c, Not):
        return 1 + criterion_size(c.inner)
    return 1 + sum(criterion_size(x) for x in c.items)


def booldef_size(b: BoolDef) -> int:
    if isinstance(b, (BConst, BEq, BExists)):
        return 1
    if isinstance(b, BPathEq):
        return 1
    if isinstance(b, BNot):
        return 1 + booldef_size(b.inner)
    return 1 + sum(booldef_size(x) for x in b.items)


def valuedef_size(d: ValueDef) -> int:
    if isinstance(d, DConst):
        return 1
    if isinstance(d, DPath):
        return 1 + len(d.path)
    if isinstance(d, DArray):
        return 1 + sum(valuedef_size(x) for x in d.items)
    if isinstance(d, DBool):
        return 1 + booldef_size(d.expr)
    return 1 + booldef_size(d.cond) + valuedef_size(d.then) + valuedef_size(d.other)


def stage_size(s: Stage) -> int:
    if isinstance(s, Match):
        return 1 + criterion_size(s.criterion)
    if isinstance(s, Unwind):
        return 1 + len(s.path)
    if isinstance(s, Project):
        total = 1
        for it in s.items:
            total += len(it.path) + (valuedef_size(it.definition) if isinstance(it, Define) else 1)
        return total
    if isinstance(s, Group):
        total = 1
        if isinstance(s.keys, Path):
            total += len(s.keys)
        elif isinstance(s.keys, tuple):
            total += sum(len(g) + len(y) for g, y in s.keys)
        total += sum(len(a) + len(b) for a, b in s.aggs)
        return total
    if isinstance(s, Lookup):
        return 1 + len(s.path) + len(s.local) + len(s.foreign)
    raise WorkbenchError(f"not a stage: {s!r}")


def pipeline_size(q: Pipeline) -> int:
    return 1 + sum(stage_size(s) for s in q.stages)
