"""Plan trees: parsing EXPLAIN-style JSON, normalization, canonical serialization.

The canonical in-memory form keeps metric labels (Total Cost, Actual Total
Time, Actual Startup Time) separate from the feature-visible property map, so
no downstream feature extractor can accidentally leak a label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import EmptyPlan, MalformedDocument, NegativeLabel
from .taxonomy import OperatorTriple, normalize_operator

# Properties that are prediction labels, never features.
LABEL_FIELDS = ("Total Cost", "Actual Total Time", "Actual Startup Time")

_EXPLAIN_CHILD_KEY = "Plans"
_EXPLAIN_TYPE_KEY = "Node Type"


@dataclass(frozen=True)
class MetricLabels:
    """Per-node performance labels; fields are absent (None) for planner-only plans."""

    total_cost: float | None = None
    total_time: float | None = None
    startup_time: float | None = None

    def __post_init__(self):
        for name, v in (("total_cost", self.total_cost),
                        ("total_time", self.total_time),
                        ("startup_time", self.startup_time)):
            if v is not None and v < 0:
                raise NegativeLabel(f"{name} is negative: {v}")
        if (self.startup_time is not None and self.total_time is not None
                and self.startup_time > self.total_time):
            raise NegativeLabel(
                f"startup_time {self.startup_time} exceeds total_time {self.total_time}")

    def to_dict(self) -> dict:
        out = {}
        if self.total_cost is not None:
            out["total_cost"] = self.total_cost
        if self.total_time is not None:
            out["total_time"] = self.total_time
        if self.startup_time is not None:
            out["startup_time"] = self.startup_time
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MetricLabels":
        return cls(d.get("total_cost"), d.get("total_time"), d.get("startup_time"))


@dataclass
class PlanNode:
    triple: OperatorTriple
    properties: dict = field(default_factory=dict)
    children: list["PlanNode"] = field(default_factory=list)
    labels: MetricLabels = field(default_factory=MetricLabels)
    raw_name: str | None = None

    def subtree_size(self) -> int:
        return 1 + sum(c.subtree_size() for c in self.children)

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass
class PlanTree:
    root: PlanNode
    source_id: str | None = None

    @property
    def node_count(self) -> int:
        return self.root.subtree_size()

    def nodes(self):
        return self.root.walk()


def extract_labels(node_or_properties) -> MetricLabels:
    """Pull the three label fields from a raw property map or a parsed node."""
    if isinstance(node_or_properties, PlanNode):
        return node_or_properties.labels
    properties = node_or_properties
    return MetricLabels(
        total_cost=properties.get("Total Cost"),
        total_time=properties.get("Actual Total Time"),
        startup_time=properties.get("Actual Startup Time"),
    )


def _node_from_explain(obj: dict) -> PlanNode:
    if _EXPLAIN_TYPE_KEY not in obj:
        raise MalformedDocument(f"plan node missing {_EXPLAIN_TYPE_KEY!r}")
    raw_name = obj[_EXPLAIN_TYPE_KEY]
    children_docs = obj.get(_EXPLAIN_CHILD_KEY) or []
    properties = {k: v for k, v in obj.items()
                  if k not in (_EXPLAIN_CHILD_KEY, _EXPLAIN_TYPE_KEY)
                  and k not in LABEL_FIELDS}
    labels = extract_labels(obj)
    triple = normalize_operator(raw_name, properties)
    children = [_node_from_explain(c) for c in children_docs]
    return PlanNode(triple=triple, properties=properties, children=children,
                    labels=labels, raw_name=raw_name)


def _sort_key(node: PlanNode):
    return (node.triple.render(), node.subtree_size(), _canonical_bytes(node))


def _normalize(node: PlanNode) -> None:
    for c in node.children:
        _normalize(c)
    node.children.sort(key=_sort_key)


def parse_plan_document(text: str | bytes | dict | list, source_id: str | None = None) -> PlanTree:
    """Parse an EXPLAIN (FORMAT JSON)-style document into a normalized PlanTree.

    Accepts the raw JSON text, the decoded object, or the one-element list
    EXPLAIN emits. Children are sorted into canonical order.
    """
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise MalformedDocument(str(e)) from e
    else:
        doc = text

    if isinstance(doc, list):
        if not doc:
            raise EmptyPlan("document is an empty list")
        doc = doc[0]
    if not isinstance(doc, dict):
        raise MalformedDocument(f"expected a plan object, got {type(doc).__name__}")

    root_obj = doc.get("Plan", doc)
    if not isinstance(root_obj, dict) or not root_obj:
        raise EmptyPlan("no root plan node")

    root = _node_from_explain(root_obj)
    _normalize(root)
    return PlanTree(root=root, source_id=source_id)


# ---------------------------------------------------------------------------
# Canonical serialization (round-trip stable)

def _node_to_dict(node: PlanNode) -> dict:
    out = {"triple": [node.triple.level1, node.triple.level2, node.triple.level3]}
    if node.raw_name is not None:
        out["raw_name"] = node.raw_name
    if node.properties:
        out["properties"] = node.properties
    labels = node.labels.to_dict()
    if labels:
        out["labels"] = labels
    if node.children:
        out["children"] = [_node_to_dict(c) for c in node.children]
    return out


def _canonical_bytes(node: PlanNode) -> bytes:
    return json.dumps(_node_to_dict(node), sort_keys=True,
                      separators=(",", ":")).encode()


def serialize_plan(tree: PlanTree) -> str:
    """Canonical JSON form with normalized triples and separated labels."""
    doc = {"format": "planenc/plan-v1", "node_count": tree.node_count,
           "plan": _node_to_dict(tree.root)}
    if tree.source_id is not None:
        doc["source_id"] = tree.source_id
    return json.dumps(doc, sort_keys=True)


def _node_from_dict(obj: dict) -> PlanNode:
    triple = OperatorTriple(*obj["triple"])
    labels = MetricLabels.from_dict(obj.get("labels", {}))
    children = [_node_from_dict(c) for c in obj.get("children", [])]
    return PlanNode(triple=triple, properties=obj.get("properties", {}),
                    children=children, labels=labels,
                    raw_name=obj.get("raw_name"))


def deserialize_plan(text: str | bytes | dict) -> PlanTree:
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise MalformedDocument(str(e)) from e
    else:
        doc = text
    if doc.get("format") != "planenc/plan-v1":
        raise MalformedDocument("not a canonical plan document")
    root = _node_from_dict(doc["plan"])
    return PlanTree(root=root, source_id=doc.get("source_id"))


def load_plan(text: str | bytes | dict | list, source_id: str | None = None) -> PlanTree:
    """Load a plan from either the canonical format or the EXPLAIN dialect."""
    doc = json.loads(text) if isinstance(text, (str, bytes)) else text
    if isinstance(doc, dict) and doc.get("format") == "planenc/plan-v1":
        return deserialize_plan(doc)
    return parse_plan_document(doc, source_id=source_id)
