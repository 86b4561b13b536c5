import pytest

from mqnra.errors import ConfigError, UnsupportedError
from mqnra.mquery import (
    Cmp,
    DatabaseInstance,
    Exists,
    Group,
    Keep,
    Lookup,
    Match,
    Pipeline,
    Project,
    Unwind,
    run_pipeline,
    run_stages,
)
from mqnra.nra import (
    EAttr,
    EConst,
    FAttrEq,
    FEq,
    FNot,
    FOr,
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
    eval_query,
)
from mqnra.nra2mq import combine_pipelines, spec2, subq, translate_multi, translate_single
from mqnra.reltypes import TypeTree, forest_equiv, rdb, rdb_schemas, type_of_schema
from mqnra.nra import schema_of
from mqnra.trees import Forest, Path, build_tree, subtree_at

from .conftest import BIOS_TYPE, BIOS_TYPE_FULL, NYGAARD, VAN_ROSSUM


def P(text):
    return Path.parse(text)


CONSTRAINTS = {"bios": TypeTree(BIOS_TYPE_FULL)}


def bios_db(*docs):
    return DatabaseInstance({"bios": Forest.of_values(docs)})


# --- spec2 and subqueries ------------------------------------------------------


def test_spec2_duplicates_and_specializes(nygaard_tree):
    out = run_stages(Forest([nygaard_tree]), spec2())
    assert sorted((t.value for t in out), key=str) == sorted([
        {"actRel": 1, "rel1": NYGAARD},
        {"actRel": 2, "rel2": NYGAARD},
    ], key=str)


def test_spec2_on_empty_and_two_trees(bios_forest):
    assert len(run_stages(Forest(), spec2())) == 0
    assert len(run_stages(bios_forest, spec2())) == 4


def test_subq_match_shape():
    (stage,) = subq(1, Match(Cmp.of(P("name.first"), "Kristen")))
    assert stage == Match(__import__("mqnra.mquery", fromlist=["Or"]).Or(
        (Cmp.of(P("actRel"), 2), Cmp.of(P("rel1.name.first"), "Kristen"))))


def test_subq_unwind_shape():
    stages = subq(1, Unwind(P("p")))
    assert isinstance(stages[0], Match)
    assert stages[1] == Unwind(P("rel1.p"), preserve=True)


def test_subq_rejects_lookup_and_bare_group():
    with pytest.raises(UnsupportedError):
        subq(1, Lookup(P("d"), P("a"), P("b"), "c"))
    with pytest.raises(UnsupportedError):
        subq(1, Group(keys=P("death")))


def test_example_9_two_tree_output(nygaard_tree):
    q1 = (Match(Cmp.of(P("name.first"), "Kristen")), Project((Keep(P("name")),)))
    q2 = (Match(Exists(P("awards"))), Project((Keep(P("awards")),)))
    out = run_stages(Forest([nygaard_tree]), combine_pipelines(q1, q2))
    expected = [
        {"actRel": 1,
         "rel1": {"_id": 4, "name": {"first": "Kristen", "last": "Nygaard"}}},
        {"actRel": 2,
         "rel2": {"_id": 4, "awards": NYGAARD["awards"]}},
    ]
    assert sorted((t.value for t in out), key=str) == sorted(expected, key=str)


def test_combine_of_empty_sequences_is_spec2():
    assert combine_pipelines((), ()) == spec2()


def lemma31_properties(forest, q1, q2, db=None):
    """(clean)/(own)/(other) for one combination."""
    combined = run_stages(forest, combine_pipelines(q1, q2), db)
    for t in combined:
        act = t.value.get("actRel")
        assert act in (1, 2)
        assert (f"rel{act}" in t.value) and (f"rel{3 - act}" not in t.value)
    for j, qj in ((1, q1), (2, q2)):
        own = Forest(subtree_at(t, P(f"rel{j}"))
                     for t in combined if t.value.get("actRel") == j
                     and f"rel{j}" in t.value)
        expected = run_stages(forest, qj, db)
        assert own == expected, f"side {j} differs"


def test_lemma31_on_handpicked_sequences(bios_forest):
    cases = [
        ((), ()),
        ((Match(Cmp.of(P("name.first"), "Kristen")),), (Match(Exists(P("death"))),)),
        ((Unwind(P("awards")),), (Project((Keep(P("name")),)),)),
        ((Group(keys=((P("y"), P("birth")),), aggs=((P("ids"), P("_id")),)),),
         (Unwind(P("contribs"), preserve=True),)),
        ((Group(keys=None, aggs=((P("all"), P("_id")),)),), (Match(Cmp.of(P("_id"), 6)),)),
    ]
    for q1, q2 in cases:
        lemma31_properties(bios_forest, q1, q2)


# --- translate_single -----------------------------------------------------------


def equiv_single(q, db, constraints=CONSTRAINTS, collection="bios"):
    pipeline = translate_single(q, collection, constraints)
    mongo_out = run_pipeline(pipeline, db)
    schemas = rdb_schemas(constraints)
    nra_out = eval_query(q, rdb(db, constraints))
    out_type = type_of_schema(schema_of(q, schemas))
    assert forest_equiv(mongo_out, nra_out, out_type), (
        f"mismatch for {q}:\n{[t.value for t in mongo_out]}\nvs {list(nra_out)}")
    return pipeline


def test_translate_leaf_is_att_projection():
    q = QRel("bios")
    pipeline = translate_single(q, "bios", CONSTRAINTS)
    assert len(pipeline.stages) == 1
    assert isinstance(pipeline.stages[0], Project)
    equiv_single(q, bios_db(NYGAARD, VAN_ROSSUM))


def test_translate_example_32_query():
    # project the four attributes of interest after unnesting awards
    q = QProject(
        (PKeep("name.first"), PKeep("name.last"), PKeep("awards.award"), PKeep("awards.year")),
        QUnnest("awards", QRel("bios")))
    pipeline = equiv_single(q, bios_db(NYGAARD, VAN_ROSSUM))
    kinds = [type(s).__name__ for s in pipeline.stages]
    assert kinds == ["Project", "Unwind", "Project", "Project"]


def test_translate_select():
    q = QSelect(FEq("name.first", EConst.of("Kristen")), QRel("bios"))
    equiv_single(q, bios_db(NYGAARD, VAN_ROSSUM))
    q2 = QSelect(FNot(FEq("death", EConst.of("2002-08-10"))), QRel("bios"))
    equiv_single(q2, bios_db(NYGAARD, VAN_ROSSUM))


def test_translate_select_missing_constant():
    from mqnra.nra import MISSING
    q = QSelect(FEq("death", EConst.of(MISSING)), QRel("bios"))
    equiv_single(q, bios_db(NYGAARD, VAN_ROSSUM))


def test_translate_extended_projection():
    q = QProject((PKeep("_id"),
                  PDef("b", FAttrEq("birth", "death")),
                  PDef("c", EConst.of(7))),
                 QRel("bios"))
    equiv_single(q, bios_db(NYGAARD, VAN_ROSSUM))


def test_translate_nest():
    q = QNest(frozenset({"awards.award", "awards.year"}), "grp",
              QUnnest("awards", QRel("bios")))
    equiv_single(q, bios_db(NYGAARD, VAN_ROSSUM))


def test_translate_nest_everything():
    q = QNest(frozenset({"_id"}), "g",
              QProject((PKeep("_id"),), QRel("bios")))
    equiv_single(q, bios_db(NYGAARD, VAN_ROSSUM))


def test_translate_product():
    q = QProduct(QProject((PKeep("_id"),), QRel("bios")),
                 QProject((PKeep("name.first"),), QRel("bios")))
    equiv_single(q, bios_db(NYGAARD, VAN_ROSSUM))


def test_translate_union_and_diff():
    base = QProject((PKeep("_id"), PKeep("name.first")), QRel("bios"))
    filtered = QSelect(FEq("name.first", EConst.of("Kristen")), base)
    equiv_single(QUnion(base, filtered), bios_db(NYGAARD, VAN_ROSSUM))
    equiv_single(QDiff(base, filtered), bios_db(NYGAARD, VAN_ROSSUM))
    equiv_single(QDiff(base, base), bios_db(NYGAARD, VAN_ROSSUM))


def test_translate_union_with_missing_attributes():
    base = QProject((PKeep("_id"), PKeep("death")), QRel("bios"))
    equiv_single(QUnion(base, base), bios_db(NYGAARD, VAN_ROSSUM))


def test_translate_product_with_empty_side():
    empty = QSelect(FEq("_id", EConst.of(999)), QProject((PKeep("_id"),), QRel("bios")))
    q = QProduct(QProject((PKeep("_id"),), QRel("bios")), empty)
    equiv_single(q, bios_db(NYGAARD, VAN_ROSSUM))


def test_translate_rejects_marker_collision():
    constraints = {"c": TypeTree({"_id": "literal", "rel1": "literal"})}
    with pytest.raises(ConfigError):
        translate_single(QRel("c"), "c", constraints)


def test_translate_single_rejects_multi():
    constraints = dict(CONSTRAINTS, other=TypeTree({"_id": "literal"}))
    with pytest.raises(ConfigError):
        translate_single(QProduct(QRel("bios"), QRel("other")), "bios", constraints)


# --- translate_multi ---------------------------------------------------------------


OTHER_TYPE = TypeTree({"_id": "literal", "a": "literal"})
MULTI_CONSTRAINTS = {"bios": TypeTree(BIOS_TYPE_FULL), "extra": OTHER_TYPE}


def multi_db():
    return DatabaseInstance({
        "bios": Forest.of_values([NYGAARD, VAN_ROSSUM]),
        "extra": Forest.of_values([{"_id": 1, "a": 3}, {"_id": 2, "a": 4}]),
    })


def equiv_multi(q, db, constraints=MULTI_CONSTRAINTS):
    pipeline = translate_multi(q, constraints)
    mongo_out = run_pipeline(pipeline, db)
    schemas = rdb_schemas(constraints)
    nra_out = eval_query(q, rdb(db, constraints))
    out_type = type_of_schema(schema_of(q, schemas))
    assert forest_equiv(mongo_out, nra_out, out_type), (
        f"mismatch for {q}:\n{[t.value for t in mongo_out]}\nvs {list(nra_out)}")
    return pipeline


def test_translate_multi_cross_product():
    q = QProduct(QProject((PKeep("_id"),), QRel("bios")), QRel("extra"))
    equiv_multi(q, multi_db())


def test_translate_multi_empty_collection():
    db = DatabaseInstance({
        "bios": Forest.of_values([NYGAARD]),
        "extra": Forest(),
    })
    q = QProduct(QProject((PKeep("_id"),), QRel("bios")), QRel("extra"))
    equiv_multi(q, db)
    # the empty collection's leaf alone must come out empty, not as junk
    equiv_multi(QUnion(QProject((PKeep("_id"),), QRel("extra")),
                       QProject((PKeep("_id"),), QRel("bios"))), db)


def test_translate_multi_union_across_collections():
    q = QUnion(QProject((PKeep("_id"),), QRel("bios")),
               QProject((PKeep("_id"),), QRel("extra")))
    equiv_multi(q, multi_db())


def test_translate_multi_requires_two_collections():
    with pytest.raises(ConfigError):
        translate_multi(QRel("bios"), MULTI_CONSTRAINTS)
