"""Feature extraction: node property vectors, catalog meta features, DB settings.

The FeatureSchema is a versioned, ordered description of how node properties
become a fixed-length vector. Feature extraction reads from the
label-stripped property view the parser produces, so the metric labels can
never leak into a feature vector.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import SchemaMismatch
from .plan import LABEL_FIELDS, PlanNode, PlanTree

SCHEMA_FORMAT = "planenc/feature-schema-v1"

# Default field inventory. Kinds:
#   numeric      one slot, raw value, missing -> 0
#   categorical  one-hot over the listed values, unknown/missing -> zeros
#   bool         one slot, 1.0 when truthy
#   flag         one slot, 1.0 when the property is present at all
#   list         two slots: element count and presence
DEFAULT_FIELDS = [
    {"name": "Actual Loops", "kind": "numeric"},
    {"name": "Actual Rows", "kind": "numeric"},
    {"name": "Plan Rows", "kind": "numeric"},
    {"name": "Plan Width", "kind": "numeric"},
    {"name": "Startup Cost", "kind": "numeric"},
    {"name": "Local Dirtied Blocks", "kind": "numeric"},
    {"name": "Local Hit Blocks", "kind": "numeric"},
    {"name": "Local Read Blocks", "kind": "numeric"},
    {"name": "Local Written Blocks", "kind": "numeric"},
    {"name": "Shared Dirtied Blocks", "kind": "numeric"},
    {"name": "Shared Hit Blocks", "kind": "numeric"},
    {"name": "Shared Read Blocks", "kind": "numeric"},
    {"name": "Shared Written Blocks", "kind": "numeric"},
    {"name": "Temp Read Blocks", "kind": "numeric"},
    {"name": "Temp Written Blocks", "kind": "numeric"},
    {"name": "Rows Removed by Filter", "kind": "numeric"},
    {"name": "Rows Removed by Join Filter", "kind": "numeric"},
    {"name": "Hash Buckets", "kind": "numeric"},
    {"name": "Hash Batches", "kind": "numeric"},
    {"name": "Peak Memory Usage", "kind": "numeric"},
    {"name": "Sort Space Used", "kind": "numeric"},
    {"name": "Parent Relationship", "kind": "categorical",
     "values": ["Outer", "Inner", "Member", "Subquery", "InitPlan", "SubPlan"]},
    {"name": "Scan Direction", "kind": "categorical",
     "values": ["Forward", "Backward", "NoMovement"]},
    {"name": "Join Type", "kind": "categorical",
     "values": ["Inner", "Left", "Right", "Full", "Semi", "Anti"]},
    {"name": "Sort Method", "kind": "categorical",
     "values": ["quicksort", "top-N heapsort", "external merge", "external sort"]},
    {"name": "Sort Space Type", "kind": "categorical",
     "values": ["Memory", "Disk"]},
    {"name": "Strategy", "kind": "categorical",
     "values": ["Plain", "Sorted", "Hashed", "Mixed"]},
    {"name": "Parallel Aware", "kind": "bool"},
    {"name": "Inner Unique", "kind": "bool"},
    {"name": "Filter", "kind": "flag"},
    {"name": "Index Cond", "kind": "flag"},
    {"name": "Hash Cond", "kind": "flag"},
    {"name": "Merge Cond", "kind": "flag"},
    {"name": "Recheck Cond", "kind": "flag"},
    {"name": "Sort Key", "kind": "list"},
    {"name": "Group Key", "kind": "list"},
]


def _field_width(field: dict) -> int:
    kind = field["kind"]
    if kind == "categorical":
        return len(field["values"])
    if kind == "list":
        return 2
    return 1


@dataclass
class FeatureSchema:
    fields: list[dict]
    version: int = 1

    def __post_init__(self):
        for f in self.fields:
            if f["name"] in LABEL_FIELDS:
                raise SchemaMismatch(f"label field {f['name']!r} cannot be a feature")
        self._slots = []
        offset = 0
        for f in self.fields:
            w = _field_width(f)
            self._slots.append((f, offset, w))
            offset += w
        self.length = offset

    @classmethod
    def default(cls) -> "FeatureSchema":
        return cls(fields=[dict(f) for f in DEFAULT_FIELDS])

    def to_json(self) -> str:
        return json.dumps({"format": SCHEMA_FORMAT, "version": self.version,
                           "fields": self.fields}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str | dict) -> "FeatureSchema":
        doc = json.loads(text) if isinstance(text, (str, bytes)) else text
        if doc.get("format") != SCHEMA_FORMAT:
            raise SchemaMismatch("not a feature schema file")
        return cls(fields=doc["fields"], version=doc.get("version", 1))


def extract_node_features(node: PlanNode, schema: FeatureSchema) -> np.ndarray:
    """Fixed-length numeric vector for one node; reads only node.properties."""
    vec = np.zeros(schema.length)
    props = node.properties
    for field, offset, width in schema._slots:
        name, kind = field["name"], field["kind"]
        value = props.get(name)
        if value is None:
            continue
        if kind == "numeric":
            try:
                vec[offset] = float(value)
            except (TypeError, ValueError):
                pass
        elif kind == "categorical":
            if value in field["values"]:
                vec[offset + field["values"].index(value)] = 1.0
        elif kind == "bool":
            vec[offset] = 1.0 if value else 0.0
        elif kind == "flag":
            vec[offset] = 1.0
        elif kind == "list":
            vec[offset] = float(len(value)) if isinstance(value, (list, tuple)) else 1.0
            vec[offset + 1] = 1.0
    if vec.shape[0] != schema.length:
        raise SchemaMismatch("vector length disagrees with schema")
    return vec


# ---------------------------------------------------------------------------
# Meta features (per-relation catalog statistics)

META_NUMERIC_FIELDS = ("reltuples", "relpages", "relfilenode", "relam",
                       "n_distinct", "distinct_values", "selectivity",
                       "avg_width", "correlation")
# + relation count + unknown-relation flag
META_LENGTH = len(META_NUMERIC_FIELDS) + 2

_CONDITION_PROPS = ("Relation Name", "Hash Cond", "Join Cond", "Merge Cond",
                    "Index Cond", "Filter", "Output", "Hash Condition",
                    "Join Condition", "Merge Condition", "Index Condition")

_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def load_catalog(text: str) -> dict:
    """Catalog stats: JSONL rows keyed by (relname, attname); aggregated per relname."""
    catalog: dict[str, dict] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        row = json.loads(line)
        rel = catalog.setdefault(row["relname"], {k: 0.0 for k in META_NUMERIC_FIELDS})
        rel["_atts"] = rel.get("_atts", 0) + 1
        for k in META_NUMERIC_FIELDS:
            if k in row and row[k] is not None:
                # per-relation fields overwrite; per-attribute fields sum
                if k in ("reltuples", "relpages", "relfilenode", "relam"):
                    rel[k] = float(row[k])
                else:
                    rel[k] += float(row[k])
    return catalog


def node_relations(node: PlanNode, catalog: dict) -> list[str]:
    """Catalog relations referenced by this node's name/condition properties."""
    rels = []
    for prop in _CONDITION_PROPS:
        value = node.properties.get(prop)
        if value is None:
            continue
        texts = value if isinstance(value, (list, tuple)) else [value]
        for t in texts:
            for word in _WORD.findall(str(t)):
                if word in catalog and word not in rels:
                    rels.append(word)
    return rels


def extract_meta_features(node_or_tree: PlanNode | PlanTree, catalog: dict) -> np.ndarray:
    """Summed catalog statistics of referenced relations plus count + unknown flag."""
    if isinstance(node_or_tree, PlanTree):
        nodes = list(node_or_tree.nodes())
    else:
        nodes = [node_or_tree]
    rels: list[str] = []
    unknown = 0.0
    for n in nodes:
        for r in node_relations(n, catalog):
            if r not in rels:
                rels.append(r)
        name = n.properties.get("Relation Name")
        if name is not None and name not in catalog:
            unknown = 1.0
    vec = np.zeros(META_LENGTH)
    for r in rels:
        for i, k in enumerate(META_NUMERIC_FIELDS):
            vec[i] += float(catalog[r].get(k, 0.0))
    vec[len(META_NUMERIC_FIELDS)] = float(len(rels))
    vec[len(META_NUMERIC_FIELDS) + 1] = unknown
    return vec


# ---------------------------------------------------------------------------
# DB settings

DB_SETTING_NAMES = (
    "bgwriter_delay", "bgwriter_lru_maxpages", "checkpoint_timeout",
    "deadlock_timeout", "default_statistics_target", "effective_cache_size",
    "effective_io_concurrency", "maintenance_work_mem", "max_stack_depth",
    "random_page_cost", "shared_buffers", "wal_buffers", "work_mem",
)


def extract_db_features(config: dict, names: tuple = DB_SETTING_NAMES) -> np.ndarray:
    return np.array([float(config.get(n, 0.0)) for n in names])
