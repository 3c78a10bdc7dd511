import numpy as np
import pytest

from planenc import datagen, parse_plan_document
from planenc.errors import SchemaMismatch
from planenc.features import (DB_SETTING_NAMES, FeatureSchema,
                              extract_db_features, extract_meta_features,
                              extract_node_features, load_catalog)


def test_schema_rejects_label_fields():
    with pytest.raises(SchemaMismatch):
        FeatureSchema([{"name": "Total Cost", "kind": "numeric"}])


def test_schema_round_trip():
    schema = FeatureSchema.default()
    back = FeatureSchema.from_json(schema.to_json())
    assert back.length == schema.length
    assert back.fields == schema.fields


def test_node_features_fixed_length(medium_plans):
    schema = FeatureSchema.default()
    for tree in medium_plans[:5]:
        for node in tree.nodes():
            vec = extract_node_features(node, schema)
            assert vec.shape == (schema.length,)
            assert np.isfinite(vec).all()


def test_node_features_reflect_properties():
    schema = FeatureSchema.default()
    tree = parse_plan_document(
        {"Plan": {"Node Type": "Seq Scan", "Actual Rows": 123.0}})
    other = parse_plan_document(
        {"Plan": {"Node Type": "Seq Scan", "Actual Rows": 7.0}})
    v1 = extract_node_features(tree.root, schema)
    v2 = extract_node_features(other.root, schema)
    assert not np.array_equal(v1, v2)


def test_meta_features(catalog, medium_plans):
    tree = medium_plans[0]
    vec = extract_meta_features(tree, catalog)
    assert np.isfinite(vec).all()
    per_node = [extract_meta_features(n, catalog) for n in tree.nodes()]
    assert all(v.shape == vec.shape for v in per_node)


def test_db_features_order_and_length():
    config = {name: float(i + 1) for i, name in enumerate(DB_SETTING_NAMES)}
    vec = extract_db_features(config)
    assert vec.shape == (len(DB_SETTING_NAMES),)
    assert list(vec) == [float(i + 1) for i in range(len(DB_SETTING_NAMES))]


def test_catalog_loading():
    spec = datagen.SyntheticSpec(seed=5, n_relations=4)
    catalog = load_catalog(datagen.catalog_jsonl(spec))
    assert len(catalog) == 4
    assert all("reltuples" in v for v in catalog.values())
