"""Desk-scale data supply: LHS config sampling, synthetic plans, oracle labels.

Labels come from a transparent analytic oracle (see ORACLE_FORMULA) so that
encoder learnability is auditable: re-evaluating the formula on a stored
plan's properties and config reproduces the stored labels bit-exactly.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import InsufficientPlans, InvalidRange
from .plan import MetricLabels, PlanTree, parse_plan_document, serialize_plan
from .smatch import pair_seed, smatch_hillclimb
from .taxonomy import operator_group

# ---------------------------------------------------------------------------
# Latin Hypercube Sampling

@dataclass
class ConfigRange:
    name: str
    unit: str          # ms | integer | bytes | number
    low: float
    high: float
    scale: str = "linear"   # linear | log
    median: float | None = None

    def __post_init__(self):
        if not self.low < self.high:
            raise InvalidRange(f"{self.name}: low {self.low} >= high {self.high}")
        if self.scale == "log" and self.low <= 0:
            raise InvalidRange(f"{self.name}: log scale requires low > 0")


def default_ranges() -> list[ConfigRange]:
    """Default sampling ranges (5th/95th percentile anchors) shipped with the package."""
    text = resources.files("planenc.data").joinpath("config_ranges.json").read_text()
    doc = json.loads(text)
    return [ConfigRange(**r) for r in doc["ranges"]]


def lhs_configs(n: int, ranges: list[ConfigRange], seed: int = 0) -> list[dict]:
    """Latin Hypercube sample: per dimension, one midpoint sample per stratum,
    stratum order permuted independently; log-scaled dimensions stratified in
    log space."""
    if n < 1:
        raise InvalidRange("n must be >= 1")
    rng = np.random.default_rng(seed)
    columns = {}
    for r in ranges:
        lo, hi = (np.log(r.low), np.log(r.high)) if r.scale == "log" else (r.low, r.high)
        mids = lo + (np.arange(n) + 0.5) * (hi - lo) / n
        if r.scale == "log":
            mids = np.exp(mids)
        columns[r.name] = mids[rng.permutation(n)]
    return [{name: float(col[i]) for name, col in columns.items()}
            for i in range(n)]


def render_config(config: dict, ranges: list[ConfigRange]) -> str:
    """One key=value file body; integer-like units rendered as integers."""
    units = {r.name: r.unit for r in ranges}
    lines = []
    for k in sorted(config):
        v = config[k]
        if units.get(k) in ("integer", "bytes", "ms"):
            lines.append(f"{k}={int(round(v))}")
        else:
            lines.append(f"{k}={v:.6g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Synthetic plan generator

@dataclass
class SyntheticSpec:
    seed: int = 0
    n_relations: int = 12
    max_depth: int = 5
    leaf_prob: float = 0.35
    max_nodes: int = 200
    # relative frequencies of internal operators
    operator_weights: dict = field(default_factory=lambda: {
        "Hash Join": 3.0, "Merge Join": 1.0, "Nested Loop": 2.0,
        "Sort": 2.0, "Aggregate": 2.0, "Hash": 1.0,
        "Limit": 0.7, "Materialize": 0.5,
    })
    scan_weights: dict = field(default_factory=lambda: {
        "Seq Scan": 3.0, "Index Scan": 2.0, "Index Only Scan": 1.0,
        "Bitmap Heap Scan": 1.0,
    })
    # analytic oracle coefficients, per functional group
    time_coef: dict = field(default_factory=lambda: {
        "Scan": 1.0, "Join": 1.6, "Sort": 2.2, "Aggregate": 1.2, "Others": 0.3})
    cost_coef: dict = field(default_factory=lambda: {
        "Scan": 2.0, "Join": 3.0, "Sort": 4.0, "Aggregate": 2.5, "Others": 0.5})
    reltuples_scale: float = 1.0
    selectivity_shift: float = 0.0

    def relations(self) -> dict:
        """Deterministic relation catalog derived from the spec seed."""
        rng = np.random.default_rng(self.seed + 7919)
        rels = {}
        for i in range(self.n_relations):
            name = f"rel_{i}"
            reltuples = float(np.round(
                self.reltuples_scale * 10 ** rng.uniform(3, 6)))
            sel = float(np.clip(
                10 ** rng.uniform(-3, -0.3) + self.selectivity_shift, 1e-4, 1.0))
            rels[name] = {
                "relname": name,
                "reltuples": reltuples,
                "relpages": float(np.round(reltuples / rng.uniform(20, 120))),
                "relfilenode": float(16384 + i),
                "relam": 2.0,
                "n_distinct": float(np.round(reltuples * rng.uniform(0.001, 0.5))),
                "distinct_values": float(np.round(reltuples * rng.uniform(0.001, 0.5))),
                "selectivity": sel,
                "avg_width": float(np.round(rng.uniform(8, 240))),
                "correlation": float(np.round(rng.uniform(-1, 1), 4)),
            }
        return rels

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "n_relations": self.n_relations,
            "max_depth": self.max_depth, "leaf_prob": self.leaf_prob,
            "max_nodes": self.max_nodes,
            "operator_weights": dict(self.operator_weights),
            "scan_weights": dict(self.scan_weights),
            "time_coef": dict(self.time_coef),
            "cost_coef": dict(self.cost_coef),
            "reltuples_scale": self.reltuples_scale,
            "selectivity_shift": self.selectivity_shift,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)


def catalog_jsonl(spec: SyntheticSpec) -> str:
    """Catalog stats file body: one (relname, attname) row per relation."""
    rows = []
    for rel in spec.relations().values():
        row = dict(rel)
        row["attname"] = f"{rel['relname']}_id"
        rows.append(json.dumps(row, sort_keys=True))
    return "\n".join(rows) + "\n"


ORACLE_FORMULA = (
    "per-node own_ms = time_coef[group] * (Actual Rows / 100) * "
    "(1 + Plan Width / 200) * k(group, config); "
    "k(Scan) = (0.5 + random_page_cost/2000) * 4 / log2(shared_buffers/131072 + 2); "
    "k(Join) = 3 / log2(work_mem/1048576 + 2); "
    "k(Sort) = 4 / log2(work_mem/1048576 + 2); "
    "k(Aggregate) = 1.5 / log2(effective_cache_size/131072 + 2); "
    "k(Others) = 0.3; "
    "total_time = own_ms + sum(children total_time); startup_time = 0.1 * total_time; "
    "own_cost = cost_coef[group] * (Actual Rows / 50) * (1 + Plan Width / 100) * "
    "(1 + 0.2 * k); total_cost = own_cost + sum(children total_cost)."
)


def _config_factor(group: str, config: dict) -> float:
    if group == "Scan":
        return ((0.5 + config.get("random_page_cost", 4.0) / 2000.0) * 4.0
                / np.log2(config.get("shared_buffers", 131072.0) / 131072.0 + 2.0))
    if group == "Join":
        return 3.0 / np.log2(config.get("work_mem", 1048576.0) / 1048576.0 + 2.0)
    if group == "Sort":
        return 4.0 / np.log2(config.get("work_mem", 1048576.0) / 1048576.0 + 2.0)
    if group == "Aggregate":
        return 1.5 / np.log2(config.get("effective_cache_size", 131072.0) / 131072.0 + 2.0)
    return 0.3


def oracle_node_times(node, config: dict, spec: SyntheticSpec) -> tuple[float, float]:
    """(total_time_ms, total_cost) of the subtree rooted at node."""
    group = operator_group(node.triple)
    rows = float(node.properties.get("Actual Rows", 0.0))
    width = float(node.properties.get("Plan Width", 0.0))
    k = _config_factor(group, config)
    own_ms = spec.time_coef[group] * (rows / 100.0) * (1 + width / 200.0) * k
    own_cost = (spec.cost_coef[group] * (rows / 50.0) * (1 + width / 100.0)
                * (1 + 0.2 * k))
    t, c = own_ms, own_cost
    for child in node.children:
        ct, cc = oracle_node_times(child, config, spec)
        t += ct
        c += cc
    return t, c


def apply_oracle_labels(tree: PlanTree, config: dict, spec: SyntheticSpec) -> MetricLabels:
    """Set oracle labels on every node; returns the root (plan-level) labels."""
    def visit(node):
        t, c = oracle_node_times(node, config, spec)
        node.labels = MetricLabels(total_cost=c, total_time=t, startup_time=0.1 * t)
        for child in node.children:
            visit(child)
    visit(tree.root)
    return tree.root.labels


def _weighted_choice(rng: np.random.Generator, weights: dict) -> str:
    names = sorted(weights)
    w = np.array([weights[n] for n in names], dtype=float)
    return names[rng.choice(len(names), p=w / w.sum())]

_UNARY_OPS = ("Sort", "Aggregate", "Hash", "Limit", "Materialize")


def _gen_node(spec: SyntheticSpec, rng: np.random.Generator, rels: dict,
              depth: int, budget: list) -> dict:
    budget[0] -= 1
    leaf = (depth >= spec.max_depth or budget[0] <= 1
            or rng.random() < spec.leaf_prob)
    if leaf:
        op = _weighted_choice(rng, spec.scan_weights)
        rel = rels[sorted(rels)[rng.integers(len(rels))]]
        rows = max(1.0, np.round(rel["reltuples"] * rel["selectivity"]
                                 * rng.uniform(0.5, 1.5)))
        node = {
            "Node Type": op,
            "Relation Name": rel["relname"],
            "Actual Rows": float(rows),
            "Plan Rows": float(max(1.0, np.round(rows * rng.uniform(0.7, 1.4)))),
            "Plan Width": rel["avg_width"],
            "Actual Loops": 1.0,
        }
        if op in ("Index Scan", "Index Only Scan"):
            node["Index Cond"] = f"({rel['relname']}_id = $1)"
            node["Scan Direction"] = "Forward"
        if op == "Seq Scan" and rng.random() < 0.5:
            node["Filter"] = f"({rel['relname']}_id > $1)"
        return node

    op = _weighted_choice(rng, spec.operator_weights)
    arity = 1 if op in _UNARY_OPS else 2
    children = [_gen_node(spec, rng, rels, depth + 1, budget)
                for _ in range(arity)]
    child_rows = [c["Actual Rows"] for c in children]
    if arity == 2:
        rows = max(1.0, np.round(min(child_rows) * rng.uniform(0.2, 1.2)))
    elif op == "Aggregate":
        rows = max(1.0, np.round(child_rows[0] * rng.uniform(0.01, 0.3)))
    elif op == "Limit":
        rows = min(child_rows[0], float(rng.integers(1, 101)))
    else:
        rows = child_rows[0]
    node = {
        "Node Type": op,
        "Actual Rows": float(rows),
        "Plan Rows": float(max(1.0, np.round(rows * rng.uniform(0.7, 1.4)))),
        "Plan Width": float(np.round(max(c["Plan Width"] for c in children))),
        "Actual Loops": 1.0,
        "Plans": children,
    }
    if op in ("Hash Join", "Merge Join", "Nested Loop"):
        node["Join Type"] = "Inner" if rng.random() < 0.7 else "Left"
        if op == "Hash Join":
            node["Hash Cond"] = "(a_id = b_id)"
    if op == "Sort":
        node["Sort Key"] = ["k1"] if rng.random() < 0.6 else ["k1", "k2"]
        node["Sort Method"] = "quicksort"
    if op == "Aggregate":
        node["Strategy"] = "Hashed" if rng.random() < 0.5 else "Plain"
    return node


def gen_plan(spec: SyntheticSpec, rng: np.random.Generator,
             source_id: str | None = None) -> PlanTree:
    rels = spec.relations()
    budget = [spec.max_nodes]
    doc = {"Plan": _gen_node(spec, rng, rels, 0, budget)}
    return parse_plan_document(doc, source_id=source_id)


def default_config(ranges: list[ConfigRange] | None = None) -> dict:
    ranges = ranges or default_ranges()
    return {r.name: r.median if r.median is not None else (r.low + r.high) / 2
            for r in ranges}


def gen_plans(spec: SyntheticSpec, n: int,
              config: dict | None = None) -> list[PlanTree]:
    """n labeled plans; per-plan seeds derived from spec.seed + index."""
    config = config or default_config()
    plans = []
    for i in range(n):
        rng = np.random.default_rng(pair_seed(spec.seed, i))
        tree = gen_plan(spec, rng, source_id=f"syn-{spec.seed}-{i}")
        apply_oracle_labels(tree, config, spec)
        plans.append(tree)
    return plans


def corpus_header(spec: SyntheticSpec, kind: str) -> dict:
    return {"type": "meta", "kind": kind, "spec": spec.to_dict(),
            "oracle": ORACLE_FORMULA, "seed": spec.seed}


# ---------------------------------------------------------------------------
# Pair dataset

def split_sizes(n_pairs: int, ratio: tuple = (20, 1, 1)) -> tuple[int, int, int]:
    total = sum(ratio)
    train = n_pairs * ratio[0] // total
    dev = (n_pairs - train) // 2
    test = n_pairs - train - dev
    return train, dev, test


def build_pair_dataset(plans: list[PlanTree], n_pairs: int, seed: int = 0,
                       restarts: int = 4, identity_fraction: float = 0.01,
                       max_nodes: int = 200) -> list[dict]:
    """Smatch-scored plan pairs with disjoint 20:1:1 split tags.

    Returns rows {plan_a, plan_b, smatch, precision, recall, split}; plan
    payloads are canonical serialized objects.
    """
    plans = [p for p in plans if p.node_count <= max_nodes]
    if len(plans) < 2:
        raise InsufficientPlans("need at least 2 plans within the node cap")
    rng = np.random.default_rng(seed)
    n_identity = int(np.ceil(identity_fraction * n_pairs))
    rows = []
    for idx in range(n_pairs):
        if idx < n_identity:
            i = j = int(rng.integers(len(plans)))
        else:
            i, j = rng.choice(len(plans), size=2, replace=False)
        res = smatch_hillclimb(plans[i], plans[j], restarts=restarts,
                               seed=pair_seed(seed, idx))
        rows.append({
            "plan_a": json.loads(serialize_plan(plans[i])),
            "plan_b": json.loads(serialize_plan(plans[j])),
            "smatch": res.score,
            "precision": res.precision,
            "recall": res.recall,
        })
    n_train, n_dev, _ = split_sizes(n_pairs)
    for idx, row in enumerate(rows):
        if idx < n_train:
            row["split"] = "train"
        elif idx < n_train + n_dev:
            row["split"] = "dev"
        else:
            row["split"] = "test"
    return rows


# ---------------------------------------------------------------------------
# Downstream corpora

def _jitter_rows(tree: PlanTree, rng: np.random.Generator,
                 spread: float = 0.3) -> PlanTree:
    """Copy of the tree with per-node multiplicative noise on Actual Rows."""
    shifted = copy.deepcopy(tree)
    for node in shifted.root.walk():
        rows = float(node.properties.get("Actual Rows", 1.0))
        factor = float(np.exp(rng.uniform(-spread, spread)))
        node.properties["Actual Rows"] = max(1.0, np.round(rows * factor))
    return shifted


def gen_latency_corpus(spec: SyntheticSpec, n_templates: int = 20,
                       n_configs: int = 30, seed: int = 0,
                       ranges: list[ConfigRange] | None = None) -> list[dict]:
    """Latency rows: one plan per (template, config) cell.

    Each template is a fixed synthetic plan shape; each instance gets LHS
    config settings, row-count jitter, and oracle labels. The latency target
    is the plan-level total_time.
    """
    ranges = ranges or default_ranges()
    configs = lhs_configs(n_configs, ranges, seed=seed)
    rels = spec.relations()
    templates = []
    for t in range(n_templates):
        rng = np.random.default_rng(pair_seed(spec.seed, 50_000 + t))
        templates.append(gen_plan(spec, rng, source_id=f"tmpl-{t}"))
    rows = []
    for t, base in enumerate(templates):
        for c, config in enumerate(configs):
            rng = np.random.default_rng(pair_seed(seed, t * n_configs + c))
            tree = _jitter_rows(base, rng)
            tree.source_id = f"tmpl-{t}-cfg-{c}"
            labels = apply_oracle_labels(tree, config, spec)
            rows.append({
                "template": f"tmpl-{t}",
                "config": dict(config),
                "plan": json.loads(serialize_plan(tree)),
                "latency": labels.total_time,
            })
    return rows


def gen_classification_corpus(spec: SyntheticSpec, n_templates: int = 113,
                              n_clusters: int = 33,
                              instances_per_template: int = 4,
                              seed: int = 0,
                              ranges: list[ConfigRange] | None = None,
                              ) -> tuple[list[dict], dict]:
    """Classification rows plus the template-to-cluster map.

    Every cluster has a structural prototype plan; templates inherit their
    cluster's structure (round-robin assignment) and apply a template-specific
    scaling to row counts and widths, so templates within a cluster are
    structurally identical but numerically distinct.
    """
    if n_templates < n_clusters:
        raise InvalidRange("need at least one template per cluster")
    ranges = ranges or default_ranges()
    prototypes = []
    for k in range(n_clusters):
        rng = np.random.default_rng(pair_seed(spec.seed, 90_000 + k))
        prototypes.append(gen_plan(spec, rng, source_id=f"cluster-{k}"))
    template_to_cluster = {f"tmpl-{t}": f"cluster-{t % n_clusters}"
                           for t in range(n_templates)}
    configs = lhs_configs(max(instances_per_template, 2), ranges, seed=seed)
    rows = []
    for t in range(n_templates):
        cluster = t % n_clusters
        scale_rng = np.random.default_rng(pair_seed(seed, 70_000 + t))
        row_scale = float(np.exp(scale_rng.uniform(-1.5, 1.5)))
        width_scale = float(np.exp(scale_rng.uniform(-0.7, 0.7)))
        base = copy.deepcopy(prototypes[cluster])
        for node in base.root.walk():
            rows_v = float(node.properties.get("Actual Rows", 1.0))
            node.properties["Actual Rows"] = max(1.0, np.round(rows_v * row_scale))
            width_v = float(node.properties.get("Plan Width", 8.0))
            node.properties["Plan Width"] = max(1.0, np.round(width_v * width_scale))
        for i in range(instances_per_template):
            rng = np.random.default_rng(
                pair_seed(seed, t * instances_per_template + i))
            tree = _jitter_rows(base, rng, spread=0.15)
            tree.source_id = f"tmpl-{t}-inst-{i}"
            config = configs[i % len(configs)]
            apply_oracle_labels(tree, config, spec)
            rows.append({
                "template": f"tmpl-{t}",
                "cluster": f"cluster-{cluster}",
                "config": dict(config),
                "plan": json.loads(serialize_plan(tree)),
            })
    return rows, template_to_cluster


def domain_shift(spec: SyntheticSpec, weight_jitter: float = 0.0,
                 reltuples_scale: float = 1.0, coef_scale: float = 1.0,
                 selectivity_shift: float = 0.0, seed_offset: int = 0) -> SyntheticSpec:
    """Deterministically perturb a spec into a related-but-different domain.

    Zero shift with seed_offset 0 returns an identical spec.
    """
    shifted = copy.deepcopy(spec)
    shifted.seed = spec.seed + seed_offset
    shifted.reltuples_scale = spec.reltuples_scale * reltuples_scale
    shifted.selectivity_shift = spec.selectivity_shift + selectivity_shift
    shifted.time_coef = {g: v * coef_scale for g, v in spec.time_coef.items()}
    shifted.cost_coef = {g: v * coef_scale for g, v in spec.cost_coef.items()}
    if weight_jitter:
        jrng = np.random.default_rng(spec.seed + 104729)
        shifted.operator_weights = {
            k: v * float(np.exp(jrng.uniform(-weight_jitter, weight_jitter)))
            for k, v in spec.operator_weights.items()}
    return shifted
