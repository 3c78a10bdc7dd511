"""DFS-bracket linearization of plan trees and token-id encoding.

A tree is rendered root-first; every non-terminal's children are wrapped in
bracket pseudo-tokens. Children were already sorted at parse time, so the
sequence is a deterministic function of the normalized tree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DanglingTokens, SequenceTooLong, UnbalancedBrackets
from .plan import PlanNode, PlanTree
from .taxonomy import (BR_CLOSE_TRIPLE, BR_OPEN_TRIPLE, CLS_TRIPLE, NIL,
                       LEVEL1_TOKENS, LEVEL2_TOKENS, LEVEL3_TOKENS,
                       SEP_TRIPLE, SPECIALS, UNK, OperatorTriple)

MAX_SEQUENCE_LENGTH = 512


@dataclass
class TokenSequence:
    tokens: list[OperatorTriple] = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.tokens)

    def render(self) -> str:
        """Whitespace-separated rendered triples; brackets render as ( and )."""
        out = []
        for t in self.tokens:
            if t is BR_OPEN_TRIPLE or t.level1 == "BR_OPEN":
                out.append("(")
            elif t is BR_CLOSE_TRIPLE or t.level1 == "BR_CLOSE":
                out.append(")")
            else:
                out.append(t.render())
        return " ".join(out)

    @classmethod
    def from_rendered(cls, text: str) -> "TokenSequence":
        tokens = []
        for tok in text.split():
            if tok == "(":
                tokens.append(BR_OPEN_TRIPLE)
            elif tok == ")":
                tokens.append(BR_CLOSE_TRIPLE)
            else:
                tokens.append(OperatorTriple.parse(tok))
        return cls(tokens)


def linearize(tree: PlanTree, max_length: int = MAX_SEQUENCE_LENGTH) -> TokenSequence:
    """Root-first DFS-bracket traversal of a normalized tree."""
    tokens: list[OperatorTriple] = []

    def visit(node: PlanNode) -> None:
        if node.children:
            tokens.append(BR_OPEN_TRIPLE)
            tokens.append(node.triple)
            for c in node.children:
                visit(c)
            tokens.append(BR_CLOSE_TRIPLE)
        else:
            tokens.append(node.triple)

    visit(tree.root)
    if len(tokens) > max_length:
        raise SequenceTooLong(
            f"sequence length {len(tokens)} exceeds cap {max_length}")
    return TokenSequence(tokens)


def add_specials(seq: TokenSequence, max_length: int = MAX_SEQUENCE_LENGTH) -> TokenSequence:
    """Wrap a corpus sequence with CLS/SEP for encoder input."""
    tokens = [CLS_TRIPLE, *seq.tokens, SEP_TRIPLE]
    if len(tokens) > max_length:
        raise SequenceTooLong(
            f"sequence length {len(tokens)} exceeds cap {max_length}")
    return TokenSequence(tokens)


def delinearize(seq: TokenSequence) -> PlanTree:
    """Rebuild a PlanTree from a DFS-bracket sequence (CLS/SEP tolerated)."""
    tokens = [t for t in seq.tokens if t.level1 not in ("CLS", "SEP")]
    if not tokens:
        raise DanglingTokens("empty sequence")

    pos = 0

    def parse_node() -> PlanNode:
        nonlocal pos
        if pos >= len(tokens):
            raise UnbalancedBrackets("unexpected end of sequence")
        tok = tokens[pos]
        if tok.level1 == "BR_CLOSE":
            raise UnbalancedBrackets("close bracket with no matching open")
        if tok.level1 == "BR_OPEN":
            pos += 1
            if pos >= len(tokens) or tokens[pos].level1 in ("BR_OPEN", "BR_CLOSE"):
                raise UnbalancedBrackets("open bracket not followed by a node")
            node = PlanNode(triple=tokens[pos])
            pos += 1
            while pos < len(tokens) and tokens[pos].level1 != "BR_CLOSE":
                node.children.append(parse_node())
            if pos >= len(tokens):
                raise UnbalancedBrackets("missing close bracket")
            pos += 1
            return node
        pos += 1
        return PlanNode(triple=tok)

    root = parse_node()
    if pos != len(tokens):
        raise DanglingTokens(f"{len(tokens) - pos} tokens after root subtree")
    return PlanTree(root=root)


# ---------------------------------------------------------------------------
# Vocabulary and id encoding

class Vocabulary:
    """Three per-level token->id maps with stable reserved ids.

    Reserved block (same at every level): NIL=0, UNK=1, BR_OPEN=2,
    BR_CLOSE=3, CLS=4, SEP=5. Regular tokens follow in alphabetical order.
    """

    VERSION = "planenc/vocab-v1"
    RESERVED = (NIL, UNK, *SPECIALS)

    def __init__(self, level_maps: tuple[dict, dict, dict] | None = None):
        if level_maps is None:
            level_maps = tuple(
                self._build(tokens)
                for tokens in (LEVEL1_TOKENS, LEVEL2_TOKENS, LEVEL3_TOKENS))
        self.levels = tuple(level_maps)

    @classmethod
    def _build(cls, tokens) -> dict:
        table = {tok: i for i, tok in enumerate(cls.RESERVED)}
        for tok in sorted(tokens):
            if tok not in table:
                table[tok] = len(table)
        return table

    def size(self, level: int) -> int:
        return len(self.levels[level])

    @property
    def sizes(self) -> tuple[int, int, int]:
        return tuple(len(m) for m in self.levels)

    def id_of(self, level: int, token: str) -> int:
        table = self.levels[level]
        return table.get(token, table[UNK])

    def to_json(self) -> str:
        return json.dumps({"format": self.VERSION,
                           "reserved": list(self.RESERVED),
                           "levels": [dict(m) for m in self.levels]},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str | dict) -> "Vocabulary":
        doc = json.loads(text) if isinstance(text, (str, bytes)) else text
        if doc.get("format") != cls.VERSION:
            raise ValueError("not a vocabulary file")
        return cls(tuple(doc["levels"]))


def encode_ids(seq: TokenSequence, vocab: Vocabulary) -> tuple[list[int], list[int], list[int]]:
    """Three parallel id lists, one per subtype level."""
    ids1, ids2, ids3 = [], [], []
    for t in seq.tokens:
        ids1.append(vocab.id_of(0, t.level1))
        ids2.append(vocab.id_of(1, t.level2))
        ids3.append(vocab.id_of(2, t.level3))
    return ids1, ids2, ids3
