import numpy as np
import pytest

from planenc import datagen
from planenc.errors import EmptyDataset, MissingCheckpoint, SchemaMismatch
from planenc.features import FeatureSchema
from planenc.perf import (FeatureBundle, PerfGroupModel, build_training_rows,
                          joint_train, perf_embed_plan, rows_from_jsonl,
                          rows_to_jsonl)
from planenc.taxonomy import MODELED_GROUPS


@pytest.fixture(scope="module")
def corpus():
    spec = datagen.SyntheticSpec(seed=7, max_depth=4, max_nodes=30)
    from planenc.features import load_catalog
    catalog = load_catalog(datagen.catalog_jsonl(spec))
    configs = datagen.lhs_configs(6, datagen.default_ranges(), seed=0)
    schema = FeatureSchema.default()
    rows, plans = [], []
    for ci, cfg in enumerate(configs):
        for tree in datagen.gen_plans(
                datagen.SyntheticSpec(seed=7 + ci, max_depth=4, max_nodes=30),
                8, config=cfg):
            rows.extend(build_training_rows(tree, catalog, cfg, schema=schema))
            plans.append((tree, cfg))
    return rows, plans, catalog, schema


def test_cumulative_row_is_exact_sum(corpus, catalog):
    spec = datagen.SyntheticSpec(seed=7, max_depth=4, max_nodes=30)
    cfg = datagen.default_config()
    tree = max(datagen.gen_plans(spec, 10, config=cfg),
               key=lambda t: t.node_count)
    schema = FeatureSchema.default()
    rows = build_training_rows(tree, catalog, cfg, schema=schema)
    for group in {r.group for r in rows}:
        node_rows = [r for r in rows if r.group == group and not r.is_cumulative]
        cum = [r for r in rows if r.group == group and r.is_cumulative]
        assert len(cum) == 1
        assert np.array_equal(cum[0].f_node,
                              np.sum([r.f_node for r in node_rows], axis=0))
        # plan-level labels on the cumulative row
        assert cum[0].labels.total_time == tree.root.labels.total_time


def test_rows_jsonl_round_trip(corpus):
    rows = corpus[0][:5]
    back = rows_from_jsonl(rows_to_jsonl(rows))
    assert len(back) == 5
    for a, b in zip(rows, back):
        assert np.array_equal(a.f_node, b.f_node)
        assert a.group == b.group
        assert a.labels.total_time == b.labels.total_time


def test_fit_requires_rows():
    with pytest.raises(EmptyDataset):
        PerfGroupModel(group="Scan").fit([])


def test_heads_share_trunk(corpus):
    rows = [r for r in corpus[0] if r.group == "Scan"]
    model = PerfGroupModel(group="Scan", hidden=8, merge=16, embedding_dim=12,
                           epochs=2, seed=0)
    model.fit(rows[:40])
    emb, preds, _ = model._forward_rows(rows[:4])
    # every head is a linear readout of the same embedding
    for label in ("total_cost", "total_time", "startup_time"):
        head = getattr(model.net_, f"head_{label}")
        manual = emb.data @ head.w.data + head.b.data
        assert np.allclose(manual, preds[label].data)


def test_single_column_budget_matched(corpus):
    rows = [r for r in corpus[0] if r.group == "Join"][:40]
    three = PerfGroupModel(group="Join", hidden=32, merge=64,
                           embedding_dim=50, epochs=1, seed=0)
    three.fit(rows)
    solo = PerfGroupModel(group="Join", architecture="single-column",
                          hidden=32, merge=64, embedding_dim=50, epochs=1,
                          seed=0)
    solo.fit(rows)
    a, b = three.net_.param_count(), solo.net_.param_count()
    assert abs(a - b) / a <= 0.10


def test_schema_width_guard(corpus):
    rows = [r for r in corpus[0] if r.group == "Scan"][:20]
    model = PerfGroupModel(group="Scan", hidden=8, merge=16, embedding_dim=12,
                           epochs=1, seed=0)
    model.fit(rows)
    bad = FeatureBundle(np.zeros(3), rows[0].f_meta, rows[0].f_db,
                        rows[0].labels, "Scan")
    with pytest.raises(SchemaMismatch):
        model.predict([bad])


def test_joint_train_and_embed(corpus):
    rows, plans, catalog, schema = corpus
    models = joint_train(rows, seed=0, epochs=3, hidden=8, merge=16,
                         embedding_dim=12)
    assert set(models) <= set(MODELED_GROUPS)
    tree, cfg = max(plans, key=lambda p: p[0].node_count)
    vec = perf_embed_plan(tree, catalog, cfg, models, schema=schema)
    assert vec.shape == (12 * len(MODELED_GROUPS),)
    # deterministic
    assert np.array_equal(
        vec, perf_embed_plan(tree, catalog, cfg, models, schema=schema))


def test_embed_requires_models(corpus):
    rows, plans, catalog, schema = corpus
    tree, cfg = plans[0]
    with pytest.raises(MissingCheckpoint):
        perf_embed_plan(tree, catalog, cfg, {}, schema=schema)


def test_save_load_predictions_identical(corpus, tmp_path):
    rows = [r for r in corpus[0] if r.group == "Scan"]
    model = PerfGroupModel(group="Scan", hidden=8, merge=16, embedding_dim=12,
                           epochs=2, seed=0)
    model.fit(rows[:60])
    path = tmp_path / "scan.ckpt"
    model.save(path)
    back = PerfGroupModel.load(path)
    assert back.params_hash() == model.params_hash()
    p1 = model.predict(rows[:10])
    p2 = back.predict(rows[:10])
    for label in p1:
        assert np.array_equal(p1[label], p2[label])


def test_predictions_non_negative(corpus):
    rows = [r for r in corpus[0] if r.group == "Scan"]
    model = PerfGroupModel(group="Scan", hidden=8, merge=16, embedding_dim=12,
                           epochs=2, seed=0)
    model.fit(rows[:60])
    preds = model.predict(rows[:20])
    for label, vals in preds.items():
        assert (vals > -1.0).all()  # expm1 lower bound
