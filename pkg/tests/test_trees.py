import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mqnra.errors import MalformedValueError, MergeConflictError, WorkbenchError
from mqnra.trees import (
    EPSILON,
    DocumentTree,
    Forest,
    Path,
    array_of,
    attach,
    build_tree,
    canon_dumps,
    deep_equal,
    element_type,
    forest_of,
    interpret_path,
    is_first_array,
    merge,
    path_type,
    remove,
    subtree_at,
    subvalue_at,
    value_of,
)

from .conftest import NYGAARD


def P(text):
    return Path.parse(text)


# --- construction and round trips ------------------------------------------


def test_build_value_round_trip(nygaard_tree):
    assert value_of(nygaard_tree) == NYGAARD


def test_single_literal_tree():
    assert value_of(build_tree(5)) == 5
    assert value_of(build_tree(None)) is None


def test_empty_object_tree():
    assert value_of(build_tree({})) == {}


def test_floats_normalize_to_ints():
    assert canon_dumps(build_tree({"a": 2.0}).value) == '{"a":2}'


def test_bad_keys_rejected():
    with pytest.raises(MalformedValueError):
        build_tree({"a.b": 1})
    with pytest.raises(MalformedValueError):
        build_tree({"$x": 1})
    with pytest.raises(MalformedValueError):
        build_tree({"": 1})


def json_values(max_depth=3):
    literals = st.one_of(
        st.none(),
        st.booleans(),
        st.integers(-50, 50),
        st.text(alphabet="abxyz", max_size=4),
    )
    keys = st.text(alphabet="abcde_", min_size=1, max_size=4).filter(
        lambda k: not k.startswith("$"))
    return st.recursive(
        literals,
        lambda children: st.one_of(
            st.lists(children, max_size=4),
            st.dictionaries(keys, children, max_size=4),
        ),
        max_leaves=12,
    )


@settings(max_examples=120, deadline=None)
@given(json_values())
def test_round_trip_property(value):
    t = build_tree(value)
    assert deep_equal(build_tree(value_of(t)), t)


# --- path interpretation ----------------------------------------------------


def test_empty_path_is_root(nygaard_tree):
    assert interpret_path(nygaard_tree, EPSILON) == [()]


def test_key_steps_skip_arrays(nygaard_tree):
    positions = interpret_path(nygaard_tree, P("awards.award"))
    values = sorted(subvalue_at(nygaard_tree.value, pos) for pos in positions)
    assert values == ["IEEE John von Neumann Medal", "Rosing Prize", "Turing Award"]


def test_missing_path_is_empty(nygaard_tree):
    assert interpret_path(nygaard_tree, P("nonExistingPath")) == []


def test_nested_array_skipping():
    t = build_tree({"a": [[{"b": 1}], {"b": 2}]})
    values = [subvalue_at(t.value, pos) for pos in interpret_path(t, P("a.b"))]
    assert sorted(values) == [1, 2]


@settings(max_examples=60, deadline=None)
@given(json_values())
def test_prefix_monotonicity(value):
    t = build_tree(value)
    p = P("a.b")
    if not interpret_path(t, P("a")):
        assert interpret_path(t, p) == []


# --- types ------------------------------------------------------------------


def test_path_types(nygaard_tree):
    assert path_type(nygaard_tree, P("awards")) == "array"
    assert element_type(nygaard_tree, P("awards")) == "object"
    assert path_type(nygaard_tree, P("name")) == "object"
    assert path_type(nygaard_tree, P("birth")) == "literal"
    assert path_type(nygaard_tree, P("gone")) == "missing"


def test_heterogeneous_type():
    t = build_tree({"a": [{"b": 1}, {"b": [2]}]})
    assert path_type(t, P("a.b")) == "heterogeneous"


def test_first_array(nygaard_tree):
    assert is_first_array(nygaard_tree, P("awards"))
    t = build_tree({"a": [{"b": [1, 2]}]})
    assert not is_first_array(t, P("a.b"))
    assert is_first_array(t, P("a"))


# --- subtree / attach / merge / remove --------------------------------------


def test_subtree_at_single(nygaard_tree):
    assert value_of(subtree_at(nygaard_tree, P("name"))) == {
        "first": "Kristen", "last": "Nygaard"}


def test_subtree_at_missing_is_null(nygaard_tree):
    assert value_of(subtree_at(nygaard_tree, P("absent"))) is None


def test_subtree_at_multiple_nodes_in_document_order():
    t = build_tree({"a": [{"b": 1}, {"b": 2}]})
    assert value_of(subtree_at(t, P("a.b"))) == [1, 2]


def test_attach():
    assert value_of(attach(P("a.b"), build_tree(1))) == {"a": {"b": 1}}
    assert value_of(attach(P("k"), build_tree([0, 1]))) == {"k": [0, 1]}
    with pytest.raises(WorkbenchError):
        attach(EPSILON, build_tree(1))


def test_attach_subtree_inverse():
    t = build_tree({"x": [1, {"y": 2}]})
    assert deep_equal(subtree_at(attach(P("a.b"), t), P("a.b")), t)


def test_merge_disjoint():
    assert value_of(merge(build_tree({"a": 1}), build_tree({"b": 2}))) == {"a": 1, "b": 2}


def test_merge_shared_prefix():
    got = merge(build_tree({"x": {"a": 1}}), build_tree({"x": {"b": 2}}))
    assert value_of(got) == {"x": {"a": 1, "b": 2}}


def test_merge_conflict():
    with pytest.raises(MergeConflictError):
        merge(build_tree({"a": 1}), build_tree({"a": 2}))
    with pytest.raises(MergeConflictError):
        merge(build_tree({"a": [1]}), build_tree({"a": {"b": 2}}))


def test_merge_commutative_when_defined():
    t1 = build_tree({"x": {"a": 1}, "y": 3})
    t2 = build_tree({"x": {"b": 2}})
    assert deep_equal(merge(t1, t2), merge(t2, t1))


def test_remove_branch(nygaard_tree):
    pruned = remove(nygaard_tree, subtree_at(nygaard_tree, P("awards")))
    expected = {k: v for k, v in NYGAARD.items() if k != "awards"}
    assert value_of(pruned) == expected


def test_remove_absent_subtree_is_identity(nygaard_tree):
    assert deep_equal(remove(nygaard_tree, build_tree({"zz": 1})), nygaard_tree)


# --- forests ----------------------------------------------------------------


def test_forest_dedup():
    f = Forest.of_values([{"a": 1, "b": 2}, {"b": 2, "a": 1}, {"a": 2}])
    assert len(f) == 2


def test_array_of_orders_by_source_tree():
    f = Forest.of_values([{"_id": 2, "a": "a2"}, {"_id": 1, "a": "a1"}])
    assert value_of(array_of(f, P("_id"))) == [1, 2]
    assert value_of(array_of(Forest(), P("x"))) == []


def test_forest_of_dedups_subtrees():
    f = Forest.of_values([{"_id": 1, "a": 5}, {"_id": 2, "a": 5}])
    assert len(forest_of(f, P("a"))) == 1


def test_deep_equality_semantics():
    assert deep_equal(build_tree({"a": 1, "b": 2}), build_tree({"b": 2, "a": 1}))
    assert not deep_equal(build_tree([1, 2]), build_tree([2, 1]))
    assert not deep_equal(build_tree(True), build_tree(1))
    assert deep_equal(build_tree(1.0), build_tree(1))
