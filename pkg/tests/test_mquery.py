import pytest

from mqnra.errors import IllFormedProjectionError, SemanticError
from mqnra.mquery import (
    And,
    BEq,
    BExists,
    BNot,
    BPathEq,
    Cmp,
    DArray,
    DBool,
    DConst,
    DCond,
    DPath,
    DatabaseInstance,
    Define,
    Exists,
    Group,
    Keep,
    Lookup,
    Match,
    Not,
    Pipeline,
    Project,
    TRUE,
    Unwind,
    apply_group,
    apply_lookup,
    apply_match,
    apply_project,
    apply_unwind,
    eval_bool,
    run_pipeline,
    satisfies,
    value_of_def,
)
from mqnra.trees import Forest, Path, build_tree

from .conftest import NYGAARD, VAN_ROSSUM


def P(text):
    return Path.parse(text)


def forest_values(f):
    return [t.value for t in f]


# --- match -------------------------------------------------------------------


def test_match_atoms(nygaard_tree):
    assert satisfies(nygaard_tree, Cmp.of(P("_id"), 4))
    assert satisfies(nygaard_tree, Cmp.of(P("awards.award"), "Turing Award"))
    phi3 = Cmp.of(P("awards"), {"award": "Rosing Prize", "year": 2001, "by": "ACM"})
    assert not satisfies(nygaard_tree, phi3)


def test_match_arrays_both_ways(nygaard_tree):
    assert satisfies(nygaard_tree, Cmp.of(P("contributes"), ["OOP", "Simula"]))
    assert satisfies(nygaard_tree, Cmp.of(P("contributes"), "OOP"))
    assert not satisfies(nygaard_tree, Cmp.of(P("contributes"), ["Simula", "OOP"]))


def test_match_conditions_from_different_elements(nygaard_tree):
    phi = And((Cmp.of(P("awards.award"), "Rosing Prize"), Cmp.of(P("awards.year"), 2001)))
    assert satisfies(nygaard_tree, phi)


def test_match_null_vs_missing(nygaard_tree):
    assert not satisfies(nygaard_tree, Cmp.of(P("absent"), None))
    assert satisfies(build_tree({"a": None}), Cmp.of(P("a"), None))


def test_apply_match_examples(nygaard_tree, bios_forest):
    singleton = Forest([nygaard_tree])
    phi = And((Cmp.of(P("awards.year"), 1999), Cmp.of(P("awards.award"), "Turing Award")))
    assert apply_match(singleton, phi) == singleton

    unwound = apply_unwind(singleton, P("awards"), preserve=False)
    assert len(apply_match(unwound, phi)) == 0

    assert apply_match(bios_forest, TRUE) == bios_forest


# --- boolean value definitions ------------------------------------------------


def test_eval_bool(nygaard_tree):
    assert not eval_bool(nygaard_tree, BPathEq(P("birth"), P("death")))
    assert eval_bool(nygaard_tree, BPathEq(P("gone1"), P("gone2")))
    assert eval_bool(nygaard_tree, BPathEq(P("name.first"), P("name.first")))
    assert eval_bool(nygaard_tree, BExists(P("awards")))
    assert not eval_bool(nygaard_tree, BNot(BEq.of(P("_id"), 4)))


# --- value definitions ---------------------------------------------------------


def test_value_of_def(nygaard_tree):
    assert value_of_def(nygaard_tree, DArray((DConst.of(0), DConst.of(1)))) == [0, 1]
    assert value_of_def(nygaard_tree, DArray((DPath(P("nonExistingPath")),))) == [None]
    assert value_of_def(nygaard_tree, DPath(P("contributes"))) == ["OOP", "Simula"]


# --- project -------------------------------------------------------------------


def test_project_running_example(nygaard_tree):
    items = (
        Define(P("bool"), DBool(BPathEq(P("birth"), P("death")))),
        Define(P("cond"), DCond(BExists(P("awards")), DPath(P("contributes")), DPath(P("_id")))),
        Define(P("newArray"), DArray((DConst.of(0), DConst.of(1)))),
    )
    out = apply_project(Forest([nygaard_tree]), items, keep_id=True)
    assert forest_values(out) == [
        {"_id": 4, "bool": False, "cond": ["OOP", "Simula"], "newArray": [0, 1]}]


def test_project_disassembles_arrays(nygaard_tree):
    items = (Define(P("awsName"), DPath(P("awards.award"))),
             Define(P("awsYear"), DPath(P("awards.year"))))
    out = apply_project(Forest([nygaard_tree]), items, keep_id=True)
    assert forest_values(out) == [{
        "_id": 4,
        "awsName": ["Rosing Prize", "Turing Award", "IEEE John von Neumann Medal"],
        "awsYear": [1999, 2001, 2001],
    }]


def test_project_missing_paths(nygaard_tree):
    out = apply_project(Forest([nygaard_tree]),
                        (Define(P("newPath"), DPath(P("nonExistingPath"))),), keep_id=True)
    assert forest_values(out) == [{"_id": 4}]


def test_project_keep_keeps_structure(nygaard_tree):
    out = apply_project(Forest([nygaard_tree]), (Keep(P("awards.award")),), keep_id=False)
    assert forest_values(out) == [{"awards": [
        {"award": "Rosing Prize"},
        {"award": "Turing Award"},
        {"award": "IEEE John von Neumann Medal"},
    ]}]


def test_project_prefix_freeness_enforced():
    with pytest.raises(SemanticError):
        Project((Keep(P("a")), Define(P("a.b"), DConst.of(1))))


def test_project_conflicting_definitions_error(nygaard_tree):
    items = (Keep(P("name.first")), Define(P("name.last"), DConst.of(1)))
    apply_project(Forest([nygaard_tree]), items, keep_id=False)  # merges fine
    bad = (Keep(P("awards.award")), Define(P("awards.year"), DConst.of(1)))
    with pytest.raises(IllFormedProjectionError):
        apply_project(Forest([nygaard_tree]), bad, keep_id=False)


# --- unwind ---------------------------------------------------------------------


def test_unwind_produces_one_tree_per_element(nygaard_tree):
    out = apply_unwind(Forest([nygaard_tree]), P("awards"))
    assert len(out) == 3
    for t in out:
        assert isinstance(t.value["awards"], dict)
        rest = {k: v for k, v in t.value.items() if k != "awards"}
        assert rest == {k: v for k, v in NYGAARD.items() if k != "awards"}


def test_unwind_missing_and_empty(nygaard_tree):
    assert len(apply_unwind(Forest([nygaard_tree]), P("gone"))) == 0
    assert forest_values(apply_unwind(Forest([nygaard_tree]), P("gone"), preserve=True)) == [NYGAARD]

    empty = build_tree({"_id": 1, "a": []})
    assert len(apply_unwind(Forest([empty]), P("a"))) == 0
    # preserved trees drop a present-but-empty array
    assert forest_values(apply_unwind(Forest([empty]), P("a"), preserve=True)) == [{"_id": 1}]


def test_unwind_non_first_array_drops_tree():
    t = build_tree({"a": [{"b": [1, 2]}]})
    assert len(apply_unwind(Forest([t]), P("a.b"))) == 0
    assert forest_values(apply_unwind(Forest([t]), P("a.b"), preserve=True)) == [t.value]


# --- group -----------------------------------------------------------------------


def test_group_empty_condition():
    f = Forest.of_values([{"_id": 1, "a": "a1"}, {"_id": 2, "a": "a2", "d": "d2"}])
    out = apply_group(f, Group(keys=None, aggs=((P("ids"), P("_id")),)))
    assert forest_values(out) == [{"_id": None, "ids": [1, 2]}]


def test_group_object_form_missing_goes_to_empty_object():
    f = Forest.of_values([{"_id": 1, "a": "a1"}, {"_id": 2, "a": "a2", "d": "d2"}])
    out = apply_group(f, Group(keys=((P("d"), P("d")),), aggs=((P("a"), P("a")),)))
    assert sorted(forest_values(out), key=str) == sorted(
        [{"_id": {}, "a": ["a1"]}, {"_id": {"d": "d2"}, "a": ["a2"]}], key=str)


def test_group_of_empty_forest_is_empty():
    assert len(apply_group(Forest(), Group(keys=None, aggs=((P("x"), P("y")),)))) == 0


def test_group_aggregation_is_a_set():
    f = Forest.of_values([{"_id": 1, "v": 5}, {"_id": 2, "v": 5}])
    out = apply_group(f, Group(keys=None, aggs=((P("vs"), P("v")),)))
    assert forest_values(out) == [{"_id": None, "vs": [5]}]


def test_group_is_a_partition(bios_forest):
    unwound = apply_unwind(bios_forest, P("awards"))
    out = apply_group(unwound, Group(keys=((P("year"), P("awards.year")),),
                                     aggs=((P("names"), P("name")),)))
    total = sum(len(t.value["names"]) for t in out)
    # every input tree lands in exactly one group; two Nygaard trees share a name
    assert len(out) == 3 and total == 4


# --- lookup ----------------------------------------------------------------------


def test_lookup_example(nygaard_tree):
    external = Forest.of_values([{"_id": 1, "a": 3}, {"_id": 2, "a": 4}])
    out = apply_lookup(Forest([nygaard_tree]), P("docs"), P("_id"), P("a"), external)
    assert [t.value["docs"] for t in out] == [[{"_id": 2, "a": 4}]]


def test_lookup_no_match_yields_empty_array(nygaard_tree):
    external = Forest.of_values([{"_id": 1, "a": 999}])
    out = apply_lookup(Forest([nygaard_tree]), P("docs"), P("_id"), P("a"), external)
    assert [t.value["docs"] for t in out] == [[]]


def test_lookup_missing_local_joins_missing_foreign():
    f = Forest.of_values([{"_id": 1}])
    external = Forest.of_values([{"_id": 10, "a": 1}, {"_id": 11}])
    out = apply_lookup(f, P("docs"), P("x"), P("a"), external)
    assert [t.value["docs"] for t in out] == [[{"_id": 11}]]


# --- pipelines (Appendix B) --------------------------------------------------------


def bios_db(*docs):
    return DatabaseInstance({"bios": Forest.of_values(docs)})


def test_example_21_equivalent_projection(nygaard_tree):
    # the find query returns the full name and birth date, _id kept by default
    q = Pipeline("bios", (
        Match(Cmp.of(P("name.first"), "Kristen")),
        Project((Keep(P("name")), Keep(P("birth")))),
    ))
    out = run_pipeline(q, bios_db(NYGAARD))
    assert forest_values(out) == [{
        "_id": 4, "birth": "1926-08-27",
        "name": {"first": "Kristen", "last": "Nygaard"}}]


def test_example_22(nygaard_tree):
    q = Pipeline("bios", (
        Match(Cmp.of(P("name.first"), "Kristen")),
        Project((Keep(P("birth")),
                 Define(P("firstName"), DPath(P("name.first"))),
                 Define(P("lastName"), DPath(P("name.last"))))),
    ))
    out = run_pipeline(q, bios_db(NYGAARD))
    assert forest_values(out) == [{
        "_id": 4, "birth": "1926-08-27", "firstName": "Kristen", "lastName": "Nygaard"}]


def test_examples_23_and_24():
    phi = And((Cmp.of(P("awards.year"), 1999), Cmp.of(P("awards.award"), "Turing Award")))
    assert len(run_pipeline(Pipeline("bios", (Match(phi),)), bios_db(NYGAARD))) == 1
    assert len(run_pipeline(Pipeline("bios", (Unwind(P("awards")), Match(phi))),
                            bios_db(NYGAARD))) == 0
    object_eq = Pipeline("bios", (
        Project((Keep(P("awards.award")), Keep(P("awards.year")))),
        Match(Cmp.of(P("awards"), {"award": "Turing Award", "year": 1999})),
    ))
    assert len(run_pipeline(object_eq, bios_db(NYGAARD))) == 0


def test_example_25_non_well_typed_array():
    q = Pipeline("bios", (
        Project((Define(P("fields"),
                        DArray((DPath(P("name")), DPath(P("birth")), DPath(P("awards"))))),)),
    ))
    out = run_pipeline(q, bios_db(NYGAARD))
    assert forest_values(out) == [{
        "_id": 4,
        "fields": [
            {"first": "Kristen", "last": "Nygaard"},
            "1926-08-27",
            NYGAARD["awards"],
        ]}]


def test_example_26_conditional():
    q = Pipeline("bios", (
        Project((Define(P("value"),
                        DCond(BEq.of(P("_id"), 4), DPath(P("awards")), DPath(P("name")))),)),
    ))
    out = run_pipeline(q, bios_db(NYGAARD, VAN_ROSSUM))
    assert sorted(forest_values(out), key=str) == sorted([
        {"_id": 4, "value": NYGAARD["awards"]},
        {"_id": 6, "value": {"first": "Guido", "last": "van Rossum"}},
    ], key=str)


def test_example_27_groups_by_year():
    q = Pipeline("bios", (
        Unwind(P("awards")),
        Group(keys=((P("year"), P("awards.year")),), aggs=((P("names"), P("name")),)),
    ))
    out = run_pipeline(q, bios_db(NYGAARD, VAN_ROSSUM))
    kristen = {"first": "Kristen", "last": "Nygaard"}
    guido = {"first": "Guido", "last": "van Rossum"}
    expected = [
        {"_id": {"year": 2003}, "names": [guido]},
        {"_id": {"year": 2001}, "names": [kristen, guido]},
        {"_id": {"year": 1999}, "names": [kristen]},
    ]
    assert sorted(forest_values(out), key=str) == sorted(expected, key=str)


def test_example_28_bare_grouping_null_group():
    q = Pipeline("bios", (Group(keys=P("death"), aggs=((P("names"), P("name")),)),))
    out = run_pipeline(q, bios_db(NYGAARD, VAN_ROSSUM))
    expected = [
        {"_id": "2002-08-10", "names": [{"first": "Kristen", "last": "Nygaard"}]},
        {"_id": None, "names": [{"first": "Guido", "last": "van Rossum"}]},
    ]
    assert sorted(forest_values(out), key=str) == sorted(expected, key=str)


def test_example_29_two_grouping_paths_empty_object_group():
    q = Pipeline("bios", (
        Group(keys=((P("death"), P("death")), (P("citizenship"), P("citizenship"))),
              aggs=((P("names"), P("name")),)),
    ))
    out = run_pipeline(q, bios_db(NYGAARD, VAN_ROSSUM))
    expected = [
        {"_id": {"death": "2002-08-10"}, "names": [{"first": "Kristen", "last": "Nygaard"}]},
        {"_id": {}, "names": [{"first": "Guido", "last": "van Rossum"}]},
    ]
    assert sorted(forest_values(out), key=str) == sorted(expected, key=str)


def test_example_30_join_in_a_document():
    from mqnra.mquery import BAnd
    two_in_one_year = BAnd((
        BPathEq(P("award1.year"), P("award2.year")),
        BNot(BPathEq(P("award1.award"), P("award2.award"))),
    ))
    q = Pipeline("bios", (
        Project((Keep(P("name")),
                 Define(P("award1"), DPath(P("awards"))),
                 Define(P("award2"), DPath(P("awards"))))),
        Unwind(P("award1")),
        Unwind(P("award2")),
        Project((Keep(P("name")), Keep(P("award1")), Keep(P("award2")),
                 Define(P("twoInOneYear"), DBool(two_in_one_year)))),
        Match(Cmp.of(P("twoInOneYear"), True)),
        Project((Define(P("firstName"), DPath(P("name.first"))),
                 Define(P("lastName"), DPath(P("name.last"))),
                 Define(P("awardName1"), DPath(P("award1.award"))),
                 Define(P("awardName2"), DPath(P("award2.award"))),
                 Define(P("year"), DPath(P("award1.year"))))),
    ))
    out = run_pipeline(q, bios_db(NYGAARD))
    shown = {
        "_id": 4,
        "firstName": "Kristen",
        "lastName": "Nygaard",
        "awardName1": "IEEE John von Neumann Medal",
        "awardName2": "Turing Award",
        "year": 2001,
    }
    mirror = dict(shown, awardName1="Turing Award",
                  awardName2="IEEE John von Neumann Medal")
    # the displayed document reproduces bit-exactly; its symmetric twin is the
    # other satisfying (award1, award2) pair
    assert sorted(forest_values(out), key=str) == sorted([shown, mirror], key=str)


def test_empty_pipeline_returns_collection(bios_forest):
    db = DatabaseInstance({"bios": bios_forest})
    assert run_pipeline(Pipeline("bios", ()), db) == bios_forest
