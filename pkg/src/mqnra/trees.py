"""Labeled-tree document model and the tree operators shared by every engine.

A document is a finite unordered tree: nodes are labeled with a literal, an
object mark or an array mark; edges are labeled with string keys (under
objects) or dense integer indexes (under arrays).  We keep trees in a
canonical form so that forests (sets of trees) have decidable membership and
reproducible output order:

* object children are stored under lexicographically sorted keys,
* array children are dense, 0..m-1, in index order,
* floats with integral value are normalized to int (numbers compare by
  numeric value),
* deep equality is equality of canonical serializations.

Nodes have no global identity.  A node is addressed by its *position*: the
tuple of edge labels from the root.  Paths in the query sense are key-only
sequences; index steps exist only internally.
"""

from __future__ import annotations

import json
import math
from typing import Any, Iterable, Iterator

from .errors import MalformedValueError, MergeConflictError, WorkbenchError

Value = Any  # JSON value: None | bool | int | float | str | list | dict
Position = tuple  # tuple of str keys and int indexes, root is ()

LITERAL = "literal"
OBJECT = "object"
ARRAY = "array"
HETEROGENEOUS = "heterogeneous"
MISSING = "missing"


# ---------------------------------------------------------------------------
# paths


class Path:
    """A possibly empty sequence of keys; the empty path denotes the root."""

    __slots__ = ("segments",)

    def __init__(self, segments: Iterable[str] = ()):
        segs = tuple(segments)
        for s in segs:
            _check_key(s)
        object.__setattr__(self, "segments", segs)

    def __setattr__(self, name, value):  # pragma: no cover - immutability guard
        raise AttributeError("Path is immutable")

    @classmethod
    def parse(cls, text: str) -> "Path":
        if text == "":
            return EPSILON
        return cls(text.split("."))

    def __bool__(self) -> bool:
        return bool(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Path(self.segments[item])
        return self.segments[item]

    def __add__(self, other: "Path") -> "Path":
        return Path(self.segments + other.segments)

    def child(self, key: str) -> "Path":
        return Path(self.segments + (key,))

    def is_prefix_of(self, other: "Path", strict: bool = False) -> bool:
        if len(self.segments) > len(other.segments):
            return False
        if strict and len(self.segments) == len(other.segments):
            return False
        return other.segments[: len(self.segments)] == self.segments

    def strict_prefixes(self) -> Iterator["Path"]:
        for i in range(len(self.segments)):
            yield Path(self.segments[:i])

    def __eq__(self, other):
        return isinstance(other, Path) and self.segments == other.segments

    def __hash__(self):
        return hash(self.segments)

    def __lt__(self, other):
        return self.segments < other.segments

    def __str__(self):
        return ".".join(self.segments)

    def __repr__(self):
        return f"Path({str(self)!r})"


EPSILON = Path(())


def _check_key(key) -> None:
    if not isinstance(key, str) or key == "":
        raise MalformedValueError(f"key must be a non-empty string, got {key!r}")
    if "." in key:
        raise MalformedValueError(f"key {key!r} must not contain '.'")
    if key.startswith("$"):
        raise MalformedValueError(f"key {key!r} must not start with '$'")


# ---------------------------------------------------------------------------
# values and canonical form


def canonicalize_value(value: Value) -> Value:
    """Validate a JSON value and return its canonical form."""
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            raise MalformedValueError("non-finite numbers are not valid literals")
        return int(value) if value.is_integer() else value
    if isinstance(value, list):
        return [canonicalize_value(v) for v in value]
    if isinstance(value, dict):
        out = {}
        for key in sorted(value):
            _check_key(key)
            out[key] = canonicalize_value(value[key])
        return out
    raise MalformedValueError(f"not a JSON value: {type(value).__name__}")


def canon_dumps(value: Value) -> str:
    """Canonical serialization: sorted keys, no insignificant whitespace."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def value_kind(value: Value) -> str:
    if isinstance(value, dict):
        return OBJECT
    if isinstance(value, list):
        return ARRAY
    return LITERAL


class DocumentTree:
    """An immutable document tree in canonical form."""

    __slots__ = ("value", "_canon")

    def __init__(self, value: Value, _trusted: bool = False):
        canonical = value if _trusted else canonicalize_value(value)
        object.__setattr__(self, "value", canonical)
        object.__setattr__(self, "_canon", canon_dumps(canonical))

    def __setattr__(self, name, value):  # pragma: no cover - immutability guard
        raise AttributeError("DocumentTree is immutable")

    @property
    def canon(self) -> str:
        return self._canon

    def kind(self) -> str:
        return value_kind(self.value)

    def __eq__(self, other):
        return isinstance(other, DocumentTree) and self._canon == other._canon

    def __hash__(self):
        return hash(self._canon)

    def __lt__(self, other):
        return self._canon < other._canon

    def __repr__(self):
        return f"tree({self._canon})"


def build_tree(value: Value) -> DocumentTree:
    """The tree corresponding to a JSON value."""
    return DocumentTree(value)


def value_of(t: DocumentTree) -> Value:
    """The JSON value represented by a tree (arrays in index order, keys sorted)."""
    return t.value


def deep_equal(t1: DocumentTree, t2: DocumentTree) -> bool:
    """Equality of values: objects unordered, arrays compared by index."""
    return t1.canon == t2.canon


NULL_TREE = DocumentTree(None)
EMPTY_OBJECT_TREE = DocumentTree({})


# ---------------------------------------------------------------------------
# positions


def subvalue_at(value: Value, pos: Position) -> Value:
    cur = value
    for step in pos:
        if isinstance(step, int):
            cur = cur[step]
        else:
            cur = cur[step]
    return cur


def _index_closure(value: Value, pos: Position) -> list[tuple[Position, Value]]:
    """All positions reachable from `pos` through index edges, in document order."""
    out = [(pos, value)]
    if isinstance(value, list):
        for i, elem in enumerate(value):
            out.extend(_index_closure(elem, pos + (i,)))
    return out


def interpret_path(t: DocumentTree, p: Path) -> list[Position]:
    """Positions denoted by a key path; a key step may skip any number of
    intervening array layers.  Missing paths yield the empty list."""
    frontier: list[tuple[Position, Value]] = [((), t.value)]
    for key in p:
        nxt: list[tuple[Position, Value]] = []
        for pos, val in frontier:
            for cpos, cval in _index_closure(val, pos):
                if isinstance(cval, dict) and key in cval:
                    nxt.append((cpos + (key,), cval[key]))
        frontier = nxt
        if not frontier:
            return []
    return [pos for pos, _ in frontier]


def path_values(t: DocumentTree, p: Path) -> list[Value]:
    return [subvalue_at(t.value, pos) for pos in interpret_path(t, p)]


def index_children(t: DocumentTree, positions: list[Position]) -> list[Position]:
    """One index step down from each of the given positions (the p.i nodes)."""
    out = []
    for pos in positions:
        val = subvalue_at(t.value, pos)
        if isinstance(val, list):
            out.extend(pos + (i,) for i in range(len(val)))
    return out


def path_type(t: DocumentTree, p: Path) -> str:
    """literal/object/array when all nodes at p agree, heterogeneous when they
    disagree, missing when p denotes no node."""
    positions = interpret_path(t, p)
    if not positions:
        return MISSING
    kinds = {value_kind(subvalue_at(t.value, pos)) for pos in positions}
    return kinds.pop() if len(kinds) == 1 else HETEROGENEOUS


def element_type(t: DocumentTree, p: Path) -> str:
    """The common type of the elements one array level below p (type of p[])."""
    positions = interpret_path(t, p)
    elems = index_children(t, positions)
    if not elems:
        return MISSING
    kinds = {value_kind(subvalue_at(t.value, pos)) for pos in elems}
    return kinds.pop() if len(kinds) == 1 else HETEROGENEOUS


def is_first_array(t: DocumentTree, p: Path) -> bool:
    """p has array type and no strict prefix of p has array type."""
    if path_type(t, p) != ARRAY:
        return False
    return all(path_type(t, q) != ARRAY for q in p.strict_prefixes())


# ---------------------------------------------------------------------------
# tree operators


def subtree_at(t: DocumentTree, p: Path) -> DocumentTree:
    """The subtree hanging from p: tree(null) when p is missing, the array of
    all hanging subtrees (in document order) when p denotes several nodes."""
    positions = interpret_path(t, p)
    if not positions:
        return NULL_TREE
    if len(positions) == 1:
        return DocumentTree(subvalue_at(t.value, positions[0]), _trusted=True)
    return DocumentTree([subvalue_at(t.value, pos) for pos in sorted(positions)], _trusted=True)


def attach(p: Path, t: DocumentTree) -> DocumentTree:
    """A fresh object chain for the keys of p, rooted above t (p non-empty)."""
    if not p:
        raise WorkbenchError("attach requires a non-empty path")
    value = t.value
    for key in reversed(p.segments):
        value = {key: value}
    return DocumentTree(value, _trusted=True)


def _merge_values(v1: Value, v2: Value, at: str) -> Value:
    k1, k2 = value_kind(v1), value_kind(v2)
    if k1 == OBJECT and k2 == OBJECT:
        out = {}
        for key in sorted(set(v1) | set(v2)):
            if key in v1 and key in v2:
                out[key] = _merge_values(v1[key], v2[key], f"{at}.{key}" if at else key)
            else:
                out[key] = v1.get(key, v2.get(key))
        return out
    if k1 == ARRAY and k2 == ARRAY:
        out = []
        for i in range(max(len(v1), len(v2))):
            if i < len(v1) and i < len(v2):
                out.append(_merge_values(v1[i], v2[i], f"{at}[{i}]"))
            else:
                out.append(v1[i] if i < len(v1) else v2[i])
        return out
    if k1 == LITERAL and k2 == LITERAL and literal_equal(v1, v2):
        return v1
    raise MergeConflictError(f"cannot merge values at {at or 'root'}: {canon_dumps(v1)} vs {canon_dumps(v2)}")


def literal_equal(v1: Value, v2: Value) -> bool:
    """Literal equality: booleans and null by identity of meaning, numbers by
    numeric value (canonical form already folds integral floats)."""
    return canon_dumps(v1) == canon_dumps(v2)


def merge(t1: DocumentTree, t2: DocumentTree) -> DocumentTree:
    """Merge two trees, identifying nodes reachable via identical paths.

    Raises MergeConflictError when identical edge labels lead to nodes that
    cannot be identified (differing literals, object vs array, and so on).
    """
    return DocumentTree(_merge_values(t1.value, t2.value, ""), _trusted=True)


def remove_at(t: DocumentTree, target: Position) -> DocumentTree:
    """Drop the subtree hanging at a position; arrays are re-densified."""
    if target == ():
        raise WorkbenchError("cannot remove the root of a tree")

    def rec(value: Value, pos: Position) -> Value:
        if pos == target[:-1]:
            step = target[-1]
            if isinstance(value, dict):
                return {k: v for k, v in value.items() if k != step}
            return [v for i, v in enumerate(value) if i != step]
        if isinstance(value, dict):
            return {k: rec(v, pos + (k,)) if target[: len(pos) + 1] == pos + (k,) else v
                    for k, v in value.items()}
        if isinstance(value, list):
            return [rec(v, pos + (i,)) if target[: len(pos) + 1] == pos + (i,) else v
                    for i, v in enumerate(value)]
        return value

    return DocumentTree(rec(t.value, ()), _trusted=True)


def remove(t1: DocumentTree, t2: DocumentTree) -> DocumentTree:
    """Remove every maximal hanging occurrence of t2 from t1.

    The result is the subtree induced by the remaining nodes; removing the
    whole tree is an error, and a t2 that occurs nowhere leaves t1 unchanged.
    """
    target = t2.canon

    def occurs_here(value: Value) -> bool:
        return canon_dumps(value) == target

    if occurs_here(t1.value):
        raise WorkbenchError("cannot remove the root of a tree")

    def rec(value: Value) -> Value:
        if isinstance(value, dict):
            return {k: rec(v) for k, v in value.items() if not occurs_here(v)}
        if isinstance(value, list):
            return [rec(v) for v in value if not occurs_here(v)]
        return value

    return DocumentTree(rec(t1.value), _trusted=True)


# ---------------------------------------------------------------------------
# forests


class Forest:
    """A set of trees, deduplicated under deep equality.

    Iteration order is the canonical (serialization) order, which makes every
    downstream output reproducible.
    """

    __slots__ = ("_trees",)

    def __init__(self, trees: Iterable[DocumentTree] = ()):
        seen: dict[str, DocumentTree] = {}
        for t in trees:
            seen.setdefault(t.canon, t)
        object.__setattr__(self, "_trees", tuple(seen[c] for c in sorted(seen)))

    def __setattr__(self, name, value):  # pragma: no cover - immutability guard
        raise AttributeError("Forest is immutable")

    @classmethod
    def of_values(cls, values: Iterable[Value]) -> "Forest":
        return cls(build_tree(v) for v in values)

    def __iter__(self) -> Iterator[DocumentTree]:
        return iter(self._trees)

    def __len__(self) -> int:
        return len(self._trees)

    def __contains__(self, t: DocumentTree) -> bool:
        return any(t.canon == u.canon for u in self._trees)

    def __eq__(self, other):
        return isinstance(other, Forest) and self._trees == other._trees

    def __hash__(self):
        return hash(self._trees)

    def values(self) -> list[Value]:
        return [t.value for t in self._trees]

    def union(self, other: "Forest") -> "Forest":
        return Forest(list(self._trees) + list(other._trees))

    def __repr__(self):
        return f"Forest({len(self._trees)} trees)"


EMPTY_FOREST = Forest()


def array_of(forest: Forest, p: Path, dedup: bool = False) -> DocumentTree:
    """The array of subtree(t, p) over the forest, in the canonical order of
    the source trees.  A missing p contributes null (callers that want the
    aggregation behavior filter on existence first and pass dedup=True)."""
    elems: list[Value] = []
    seen: set[str] = set()
    for t in forest:
        sub = subtree_at(t, p)
        if dedup:
            if sub.canon in seen:
                continue
            seen.add(sub.canon)
        elems.append(sub.value)
    return DocumentTree(elems, _trusted=True)


def forest_of(forest: Forest, p: Path) -> Forest:
    """All subtree(t, p) kept as a set."""
    return Forest(subtree_at(t, p) for t in forest)
