import json

import pytest

from planenc import (MetricLabels, deserialize_plan, load_plan,
                     parse_plan_document, serialize_plan)
from planenc.errors import MalformedDocument, NegativeLabel


def test_parse_reference(reference_doc):
    tree = load_plan(reference_doc)
    assert tree.node_count == 15
    assert tree.root.triple.render() == "Filter--"


def test_children_sorted_canonically():
    doc = {"Plan": {"Node Type": "Hash Join", "Plans": [
        {"Node Type": "Seq Scan"},
        {"Node Type": "Index Scan"},
    ]}}
    tree = parse_plan_document(doc)
    names = [c.triple.render() for c in tree.root.children]
    assert names == sorted(names)


def test_child_order_input_invariance():
    a = {"Plan": {"Node Type": "Hash Join", "Plans": [
        {"Node Type": "Seq Scan"}, {"Node Type": "Index Scan"}]}}
    b = {"Plan": {"Node Type": "Hash Join", "Plans": [
        {"Node Type": "Index Scan"}, {"Node Type": "Seq Scan"}]}}
    assert serialize_plan(parse_plan_document(a)) == \
        serialize_plan(parse_plan_document(b))


def test_labels_split_from_properties():
    doc = {"Plan": {"Node Type": "Seq Scan", "Total Cost": 10.5,
                    "Actual Total Time": 3.25, "Actual Startup Time": 1.0,
                    "Actual Rows": 7}}
    tree = parse_plan_document(doc)
    assert tree.root.labels.total_cost == 10.5
    assert tree.root.labels.total_time == 3.25
    assert tree.root.labels.startup_time == 1.0
    assert "Total Cost" not in tree.root.properties
    assert tree.root.properties["Actual Rows"] == 7


def test_negative_label_rejected():
    with pytest.raises(NegativeLabel):
        MetricLabels(total_cost=-1.0)
    with pytest.raises(NegativeLabel):
        MetricLabels(total_time=1.0, startup_time=2.0)


def test_malformed_document():
    with pytest.raises(MalformedDocument):
        parse_plan_document("not json at all {")
    with pytest.raises(MalformedDocument):
        parse_plan_document({"no plan": True})


def test_serialize_round_trip(reference_tree):
    text = serialize_plan(reference_tree)
    back = deserialize_plan(text)
    assert serialize_plan(back) == text
    assert back.node_count == reference_tree.node_count


def test_serialize_deterministic(medium_plans):
    for tree in medium_plans[:10]:
        s1 = serialize_plan(tree)
        s2 = serialize_plan(deserialize_plan(s1))
        assert s1 == s2


def test_load_plan_accepts_both_dialects(reference_tree):
    canonical = serialize_plan(reference_tree)
    assert load_plan(canonical).node_count == 15
    explain_list = [{"Plan": {"Node Type": "Seq Scan"}}]
    assert load_plan(json.dumps(explain_list)).node_count == 1
