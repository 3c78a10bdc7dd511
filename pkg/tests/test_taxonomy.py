import pytest

from planenc.taxonomy import (NIL, UNK, OperatorTriple, normalize_operator,
                              operator_group)


def test_render_drops_nil_segments():
    assert OperatorTriple("Scan", "Seq", NIL).render() == "Scan-Seq-"
    assert OperatorTriple("Loop", NIL, "Nested").render() == "Loop--Nested"
    assert OperatorTriple("Hash", NIL, NIL).render() == "Hash--"


def test_parse_inverts_render():
    for triple in (OperatorTriple("Scan", "Seq"),
                   OperatorTriple("Loop", NIL, "Nested"),
                   OperatorTriple("Scan", "Heap", "Bitmap")):
        assert OperatorTriple.parse(triple.render()) == triple


def test_normalize_common_operators():
    assert normalize_operator("Seq Scan").render() == "Scan-Seq-"
    assert normalize_operator("Nested Loop").render() == "Loop--Nested"
    assert normalize_operator("Bitmap Heap Scan").render() == "Scan-Heap-Bitmap"
    assert normalize_operator("Bitmap Index Scan").render() == "Scan-Index-Bitmap"
    assert normalize_operator("Hash Join").render() == "Join-Hash-"


def test_normalize_uses_properties():
    t = normalize_operator("Hash Join", {"Join Type": "Left"})
    assert t.level3 == "Left"
    t = normalize_operator("Aggregate", {"Strategy": "Hashed"})
    assert t.level2 == "Hash"
    t = normalize_operator("Seq Scan", {"Parallel Aware": True})
    assert t.level3 == "Parallel"


def test_unknown_operator_maps_to_unk():
    t = normalize_operator("Completely Made Up Node")
    assert t.level1 == UNK


def test_operator_group():
    assert operator_group(normalize_operator("Seq Scan")) == "Scan"
    assert operator_group(normalize_operator("Nested Loop")) == "Join"
    assert operator_group(normalize_operator("Hash Join")) == "Join"
    assert operator_group(normalize_operator("Sort")) == "Sort"
    assert operator_group(normalize_operator("Aggregate")) == "Aggregate"
    assert operator_group(normalize_operator("Limit")) == "Others"
