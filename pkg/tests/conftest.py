import json
from pathlib import Path

import pytest

from planenc import datagen, load_plan


def _n(node_type, *children, **props):
    doc = {"Node Type": node_type, **props}
    if children:
        doc["Plans"] = list(children)
    return doc


# 15-node reference plan used by the linearization fixture test.
REFERENCE_EXPLAIN = {
    "Plan": _n(
        "Filter",
        _n("Sort",
           _n("Aggregate",
              _n("Hash Join",
                 _n("Nested Loop",
                    _n("Hash Join",
                       _n("Hash",
                          _n("Nested Loop",
                             _n("Nested Loop",
                                _n("Index Scan"),
                                _n("Seq Scan")),
                             _n("Bitmap Heap Scan"))),
                       _n("Bitmap Index Scan")),
                    _n("Index Scan")),
                 _n("Seq Scan"))))),
}

REFERENCE_SEQUENCE = (
    "( Filter-- ( Sort-- ( Aggregate-- ( Join-Hash- ( Loop--Nested "
    "( Join-Hash- ( Hash-- ( Loop--Nested ( Loop--Nested Scan-Index- "
    "Scan-Seq- ) Scan-Heap-Bitmap ) ) Scan-Index-Bitmap ) Scan-Index- ) "
    "Scan-Seq- ) ) ) )"
)


@pytest.fixture
def reference_doc():
    return json.loads(json.dumps(REFERENCE_EXPLAIN))


@pytest.fixture
def reference_tree(reference_doc):
    return load_plan(reference_doc)


@pytest.fixture(scope="session")
def small_plans():
    """A corpus of labeled plans capped at 7 nodes (exact-oracle territory)."""
    spec = datagen.SyntheticSpec(seed=11, max_depth=3, max_nodes=7,
                                 leaf_prob=0.25)
    return datagen.gen_plans(spec, 60)


@pytest.fixture(scope="session")
def medium_plans():
    spec = datagen.SyntheticSpec(seed=7, max_depth=4, max_nodes=30)
    return datagen.gen_plans(spec, 40)


@pytest.fixture(scope="session")
def catalog():
    from planenc.features import load_catalog
    spec = datagen.SyntheticSpec(seed=7, max_depth=4, max_nodes=30)
    return load_catalog(datagen.catalog_jsonl(spec))
