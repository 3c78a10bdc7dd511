"""Operator taxonomy: 3-level subtype triples, normalization, functional groups.

Every plan operator is identified by a (level1, level2, level3) triple drawn
from fixed per-level vocabularies. Unknown tokens fall back to UNK at the
offending level so embedding tables stay fixed across checkpoints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

log = logging.getLogger(__name__)

NIL = "NIL"
UNK = "UNK"

# Sequence control / bracket pseudo-operators used by the linearizer.
BR_OPEN = "BR_OPEN"
BR_CLOSE = "BR_CLOSE"
CLS = "CLS"
SEP = "SEP"
SPECIALS = (BR_OPEN, BR_CLOSE, CLS, SEP)

# "Filter" appears as a first-level operator in worked plan examples even
# though it is missing from the base taxonomy listing; it is included here.
LEVEL1_TOKENS = (
    "Aggregate", "Append", "Count", "Delete", "Enum", "Filter", "Gather",
    "Group", "GroupAggregate", "Hash", "Insert", "Intersect", "Join", "Limit",
    "LockRows", "Loop", "Materialize", "ModifyTable", "Network", "Result",
    "Scan", "Sequence", "Set", "Sort", "Union", "Unique", "Update", "Window",
    "WindowAgg",
)

LEVEL2_TOKENS = (
    "And", "CTE", "Except", "Exists", "Foreign", "Hash", "Heap", "Index",
    "IndexOnly", "LoopHash", "Merge", "Or", "Query", "Quick", "Seq", "SetOp",
    "Subquery", "Table", "WorkTable",
)

LEVEL3_TOKENS = (
    "Anti", "Bitmap", "Full", "Left", "Nested", "Parallel", "Partial",
    "Partition", "Right", "Semi", "XN",
)

LEVEL1_VOCAB = frozenset(LEVEL1_TOKENS) | frozenset(SPECIALS) | {UNK}
LEVEL2_VOCAB = frozenset(LEVEL2_TOKENS) | {NIL, UNK}
LEVEL3_VOCAB = frozenset(LEVEL3_TOKENS) | {NIL, UNK}


@dataclass(frozen=True, order=True)
class OperatorTriple:
    """Normalized (level1, level2, level3) operator identity."""

    level1: str
    level2: str = NIL
    level3: str = NIL

    def __post_init__(self):
        if self.level1 in SPECIALS and (self.level2 != NIL or self.level3 != NIL):
            raise ValueError("special tokens must have NIL sub-levels")

    def render(self) -> str:
        """Hyphen-joined form with NIL rendered as an empty segment."""
        l2 = "" if self.level2 == NIL else self.level2
        l3 = "" if self.level3 == NIL else self.level3
        return f"{self.level1}-{l2}-{l3}"

    @property
    def is_special(self) -> bool:
        return self.level1 in SPECIALS

    @classmethod
    def parse(cls, rendered: str) -> "OperatorTriple":
        parts = rendered.split("-")
        if len(parts) != 3:
            raise ValueError(f"not a rendered triple: {rendered!r}")
        l1, l2, l3 = parts
        return cls(l1 or NIL, l2 or NIL, l3 or NIL)


BR_OPEN_TRIPLE = OperatorTriple(BR_OPEN)
BR_CLOSE_TRIPLE = OperatorTriple(BR_CLOSE)
CLS_TRIPLE = OperatorTriple(CLS)
SEP_TRIPLE = OperatorTriple(SEP)


# Raw node-type names (PostgreSQL EXPLAIN dialect) -> base triple tokens.
# Property-driven refinements (join type, partial mode, parallel aware)
# are applied afterwards in normalize_operator.
_RAW_NAME_MAP = {
    "Seq Scan": ("Scan", "Seq", NIL),
    "Index Scan": ("Scan", "Index", NIL),
    "Index Only Scan": ("Scan", "IndexOnly", NIL),
    "Bitmap Heap Scan": ("Scan", "Heap", "Bitmap"),
    "Bitmap Index Scan": ("Scan", "Index", "Bitmap"),
    "CTE Scan": ("Scan", "CTE", NIL),
    "Subquery Scan": ("Scan", "Subquery", NIL),
    "Foreign Scan": ("Scan", "Foreign", NIL),
    "Function Scan": ("Scan", "Query", NIL),
    "Table Scan": ("Scan", "Table", NIL),
    "WorkTable Scan": ("Scan", "WorkTable", NIL),
    "Work Table Scan": ("Scan", "WorkTable", NIL),
    "Nested Loop": ("Loop", NIL, "Nested"),
    "Hash Join": ("Join", "Hash", NIL),
    "Merge Join": ("Join", "Merge", NIL),
    "Hash": ("Hash", NIL, NIL),
    "Sort": ("Sort", NIL, NIL),
    "Incremental Sort": ("Sort", NIL, NIL),
    "Aggregate": ("Aggregate", NIL, NIL),
    "Group": ("Aggregate", NIL, NIL),
    "GroupAggregate": ("Aggregate", NIL, NIL),
    "Group Aggregate": ("Aggregate", NIL, NIL),
    "WindowAgg": ("WindowAgg", NIL, NIL),
    "Window": ("Window", NIL, NIL),
    "Limit": ("Limit", NIL, NIL),
    "Gather": ("Gather", NIL, NIL),
    "Gather Merge": ("Gather", "Merge", NIL),
    "Materialize": ("Materialize", NIL, NIL),
    "Memoize": ("Materialize", NIL, NIL),
    "Unique": ("Unique", NIL, NIL),
    "Append": ("Append", NIL, NIL),
    "Merge Append": ("Append", "Merge", NIL),
    "Result": ("Result", NIL, NIL),
    "SetOp": ("Set", "SetOp", NIL),
    "LockRows": ("LockRows", NIL, NIL),
    "ModifyTable": ("ModifyTable", NIL, NIL),
    "Insert": ("Insert", NIL, NIL),
    "Update": ("Update", NIL, NIL),
    "Delete": ("Delete", NIL, NIL),
    "Filter": ("Filter", NIL, NIL),
    "Intersect": ("Intersect", NIL, NIL),
    "Union": ("Union", NIL, NIL),
    "Count": ("Count", NIL, NIL),
    "Sequence": ("Sequence", NIL, NIL),
    "Network": ("Network", NIL, NIL),
    "Enum": ("Enum", NIL, NIL),
}

# Join Type values that refine level 3. "Inner" carries no extra token.
_JOIN_TYPE_L3 = {"Left": "Left", "Right": "Right", "Full": "Full",
                 "Semi": "Semi", "Anti": "Anti"}


def _checked(token: str, vocab: frozenset, what: str, raw_name: str) -> str:
    if token in vocab:
        return token
    log.warning("unknown %s token %r for operator %r; using UNK", what, token, raw_name)
    return UNK


def normalize_operator(raw_name: str, properties: dict | None = None) -> OperatorTriple:
    """Map a raw operator name plus node properties to a taxonomy triple.

    Deterministic and total: unknown names yield (UNK, NIL, NIL), unknown
    sub-level tokens yield UNK at that level only.
    """
    if not raw_name:
        raise ValueError("raw_name must be nonempty")
    properties = properties or {}

    base = _RAW_NAME_MAP.get(raw_name.strip())
    if base is None:
        log.warning("unknown operator name %r; using UNK", raw_name)
        return OperatorTriple(UNK, NIL, NIL)
    l1, l2, l3 = base

    join_type = properties.get("Join Type")
    if join_type in _JOIN_TYPE_L3 and l3 == NIL:
        l3 = _JOIN_TYPE_L3[join_type]
    strategy = properties.get("Strategy")
    if l1 == "Aggregate" and strategy in ("Hashed", "Mixed") and l2 == NIL:
        l2 = "Hash"
    if properties.get("Partial Mode") == "Partial" and l3 == NIL:
        l3 = "Partial"
    if properties.get("Parallel Aware") is True and l3 == NIL:
        l3 = "Parallel"

    return OperatorTriple(
        _checked(l1, LEVEL1_VOCAB, "level1", raw_name),
        _checked(l2, LEVEL2_VOCAB, "level2", raw_name),
        _checked(l3, LEVEL3_VOCAB, "level3", raw_name),
    )


GROUPS = ("Scan", "Join", "Sort", "Aggregate", "Others")
MODELED_GROUPS = ("Scan", "Join", "Sort", "Aggregate")

_GROUP_BY_L1 = {
    "Scan": "Scan",
    "Join": "Join",
    "Loop": "Join",
    "Sort": "Sort",
    "Aggregate": "Aggregate",
    "Group": "Aggregate",
    "GroupAggregate": "Aggregate",
    "WindowAgg": "Aggregate",
}


def operator_group(triple: OperatorTriple) -> str:
    """Partition triples into the five functional groups."""
    return _GROUP_BY_L1.get(triple.level1, "Others")
