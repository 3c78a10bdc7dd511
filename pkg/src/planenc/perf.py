"""Computational performance encoder: per-operator-group three-column networks
over (f_node, f_meta, f_db) jointly trained on the three metric labels, plus
the single-column comparison baseline and the C(p) plan embedding.
"""

from __future__ import annotations

import copy
import json
import logging

import numpy as np
from sklearn.base import BaseEstimator

from . import nn
from .errors import (ArchitectureMismatch, EmptyDataset, MissingCheckpoint,
                     SchemaMismatch)
from .features import (FeatureSchema, META_LENGTH, DB_SETTING_NAMES,
                       extract_db_features, extract_meta_features,
                       extract_node_features)
from .nn import Tensor, concat
from .plan import MetricLabels, PlanTree
from .taxonomy import MODELED_GROUPS, operator_group

log = logging.getLogger(__name__)

EMBEDDING_DIM = 300
LABELS = ("total_cost", "total_time", "startup_time")


class FeatureBundle:
    """One training row: (f_node, f_meta, f_db) with labels and group tag."""

    __slots__ = ("f_node", "f_meta", "f_db", "labels", "group", "is_cumulative",
                 "source_id")

    def __init__(self, f_node, f_meta, f_db, labels: MetricLabels, group: str,
                 is_cumulative: bool = False, source_id: str | None = None):
        self.f_node = np.asarray(f_node, dtype=float)
        self.f_meta = np.asarray(f_meta, dtype=float)
        self.f_db = np.asarray(f_db, dtype=float)
        self.labels = labels
        self.group = group
        self.is_cumulative = is_cumulative
        self.source_id = source_id

    def to_dict(self) -> dict:
        return {"f_node": self.f_node.tolist(), "f_meta": self.f_meta.tolist(),
                "f_db": self.f_db.tolist(), "labels": self.labels.to_dict(),
                "group": self.group, "is_cumulative": self.is_cumulative,
                "source_id": self.source_id}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureBundle":
        return cls(d["f_node"], d["f_meta"], d["f_db"],
                   MetricLabels.from_dict(d.get("labels", {})), d["group"],
                   d.get("is_cumulative", False), d.get("source_id"))


def build_training_rows(plan: PlanTree, catalog: dict, config: dict,
                        schema: FeatureSchema | None = None) -> list[FeatureBundle]:
    """Per-node rows for each modeled group plus one cumulative row per group.

    The cumulative row's f_node is the elementwise sum of that group's node
    vectors and carries the plan-level (root) labels.
    """
    schema = schema or FeatureSchema.default()
    f_db = extract_db_features(config)
    plan_meta = extract_meta_features(plan, catalog)
    rows: list[FeatureBundle] = []
    sums: dict[str, np.ndarray] = {}
    for node in plan.nodes():
        group = operator_group(node.triple)
        if group not in MODELED_GROUPS:
            continue
        f_node = extract_node_features(node, schema)
        f_meta = extract_meta_features(node, catalog)
        rows.append(FeatureBundle(f_node, f_meta, f_db, node.labels, group,
                                  source_id=plan.source_id))
        sums[group] = sums.get(group, np.zeros(schema.length)) + f_node
    for group in MODELED_GROUPS:
        if group in sums:
            rows.append(FeatureBundle(sums[group], plan_meta, f_db,
                                      plan.root.labels, group,
                                      is_cumulative=True,
                                      source_id=plan.source_id))
    return rows


# ---------------------------------------------------------------------------
# Networks

class ThreeColumnNet(nn.Module):
    """Independent column stacks for node/meta/db features, merged into the
    embedding layer; one linear head per metric label off the shared trunk."""

    def __init__(self, d_node: int, d_meta: int, d_db: int, hidden: int,
                 merge: int, embedding_dim: int, rng: np.random.Generator):
        super().__init__()
        self.col_node = nn.MLP([d_node, hidden, hidden], ["relu", "relu"], rng)
        self.col_meta = nn.MLP([d_meta, hidden, hidden], ["relu", "relu"], rng)
        self.col_db = nn.MLP([d_db, hidden, hidden], ["relu", "relu"], rng)
        self.merge = nn.Linear(3 * hidden, merge, rng)
        self.embed_layer = nn.Linear(merge, embedding_dim, rng)
        for label in LABELS:
            setattr(self, f"head_{label}", nn.Linear(embedding_dim, 1, rng))

    def embed(self, f_node: Tensor, f_meta: Tensor, f_db: Tensor) -> Tensor:
        cols = concat([self.col_node(f_node), self.col_meta(f_meta),
                       self.col_db(f_db)], axis=-1)
        return self.embed_layer(self.merge(cols).tanh())

    def forward(self, f_node, f_meta, f_db) -> tuple[Tensor, dict]:
        emb = self.embed(f_node, f_meta, f_db)
        preds = {label: getattr(self, f"head_{label}")(emb)
                 for label in LABELS}
        return emb, preds


class SingleColumnNet(nn.Module):
    """Standard DNN baseline: all features concatenated into one column."""

    def __init__(self, d_in: int, hidden: int, embedding_dim: int,
                 rng: np.random.Generator):
        super().__init__()
        self.trunk = nn.MLP([d_in, hidden, hidden], ["relu", "relu"], rng)
        self.merge = nn.Linear(hidden, hidden, rng)
        self.embed_layer = nn.Linear(hidden, embedding_dim, rng)
        for label in LABELS:
            setattr(self, f"head_{label}", nn.Linear(embedding_dim, 1, rng))

    def embed(self, f_node, f_meta, f_db) -> Tensor:
        x = concat([f_node, f_meta, f_db], axis=-1)
        return self.embed_layer(self.merge(self.trunk(x)).tanh())

    forward = ThreeColumnNet.forward


class PerfGroupModel(BaseEstimator):
    """Joint multi-task regressor for one operator group.

    Trains on log1p-transformed labels with standardized inputs; MAE is
    reported back in original units. Early stop: validation total_time MAE
    must improve by more than early_stop_delta within early_stop_window
    epochs.
    """

    def __init__(self, group: str = "Scan", architecture: str = "three-column",
                 hidden: int = 64, merge: int = 128,
                 embedding_dim: int = EMBEDDING_DIM, lr: float = 1e-3,
                 epochs: int = 300, batch_size: int = 64, seed: int = 0,
                 early_stop_delta: float = 5.0, early_stop_window: int = 100):
        self.group = group
        self.architecture = architecture
        self.hidden = hidden
        self.merge = merge
        self.embedding_dim = embedding_dim
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.early_stop_delta = early_stop_delta
        self.early_stop_window = early_stop_window

    # -- data plumbing -------------------------------------------------------

    def _matrices(self, rows: list[FeatureBundle]):
        xn = np.stack([r.f_node for r in rows])
        xm = np.stack([r.f_meta for r in rows])
        xd = np.stack([r.f_db for r in rows])
        y = np.stack([[r.labels.total_cost or 0.0, r.labels.total_time or 0.0,
                       r.labels.startup_time or 0.0] for r in rows])
        return xn, xm, xd, y

    def _standardize(self, x, key, fit=False):
        if fit:
            mu, sd = x.mean(axis=0), x.std(axis=0)
            sd[sd < 1e-12] = 1.0
            self.norms_[key] = (mu, sd)
        mu, sd = self.norms_[key]
        return (x - mu) / sd

    def _build(self, d_node, d_meta, d_db):
        rng = np.random.default_rng(self.seed)
        if self.architecture == "three-column":
            self.net_ = ThreeColumnNet(d_node, d_meta, d_db, self.hidden,
                                       self.merge, self.embedding_dim, rng)
        else:
            hidden = self._matched_single_hidden(d_node, d_meta, d_db)
            self.net_ = SingleColumnNet(d_node + d_meta + d_db, hidden,
                                        self.embedding_dim, rng)
        self.dims_ = (d_node, d_meta, d_db)
        return self.net_

    def _matched_single_hidden(self, d_node, d_meta, d_db) -> int:
        """Pick the single-column width whose parameter count best matches
        the three-column budget (within 10%)."""
        rng = np.random.default_rng(0)
        target = ThreeColumnNet(d_node, d_meta, d_db, self.hidden, self.merge,
                                self.embedding_dim, rng).param_count()
        d_in = d_node + d_meta + d_db
        best_h, best_gap = 8, np.inf
        for h in range(8, 1024, 4):
            n = SingleColumnNet(d_in, h, self.embedding_dim, rng).param_count()
            gap = abs(n - target) / target
            if gap < best_gap:
                best_h, best_gap = h, gap
            if n > target * 1.5:
                break
        return best_h

    # -- training ------------------------------------------------------------

    def fit(self, rows: list[FeatureBundle], val_rows: list[FeatureBundle] | None = None):
        rows = [r for r in rows if r.group == self.group]
        if not rows:
            raise EmptyDataset(f"no rows for group {self.group}")
        self.norms_ = {}
        xn, xm, xd, y = self._matrices(rows)
        xn = self._standardize(xn, "node", fit=True)
        xm = self._standardize(xm, "meta", fit=True)
        xd = self._standardize(xd, "db", fit=True)
        ylog = np.log1p(y)
        self._build(xn.shape[1], xm.shape[1], xd.shape[1])
        net = self.net_
        opt = nn.Adam(net.parameters(), lr=self.lr)
        rng = np.random.default_rng(self.seed + 1)

        val = None
        if val_rows:
            val = [r for r in val_rows if r.group == self.group]
        self.history_ = []
        best_mae, best_weights, last_improve = np.inf, None, 0
        for epoch in range(self.epochs):
            order = rng.permutation(len(rows))
            ep_loss, nb = 0.0, 0
            for lo in range(0, len(rows), self.batch_size):
                idx = order[lo:lo + self.batch_size]
                _, preds = net.forward(Tensor(xn[idx]), Tensor(xm[idx]),
                                       Tensor(xd[idx]))
                loss = None
                for li, label in enumerate(LABELS):
                    term = nn.mse(preds[label].reshape(len(idx)), ylog[idx, li])
                    loss = term if loss is None else loss + term
                opt.zero_grad()
                loss.backward()
                opt.step()
                ep_loss += float(loss.data)
                nb += 1
            self.history_.append(
                {"epoch": epoch, "split": "train", "loss": ep_loss / nb})
            if val:
                maes = self.evaluate(val)
                net.train()
                self.history_.append({"epoch": epoch, "split": "val", **maes})
                crit = maes["mae_total_time"]
                if crit < best_mae:
                    if best_mae - crit > self.early_stop_delta or best_weights is None:
                        last_improve = epoch
                    best_mae = crit
                    best_weights = [p.data.copy() for p in net.parameters()]
                if epoch - last_improve >= self.early_stop_window:
                    break
        if best_weights is not None:
            for p, data in zip(net.parameters(), best_weights):
                p.data = data
            self.best_val_mae_ = best_mae
        return self

    # -- inference -------------------------------------------------------------

    def _forward_rows(self, rows: list[FeatureBundle]):
        if not hasattr(self, "net_"):
            raise MissingCheckpoint("model not fitted")
        xn, xm, xd, y = self._matrices(rows)
        if xn.shape[1] != self.dims_[0]:
            raise SchemaMismatch(
                f"f_node width {xn.shape[1]} != trained {self.dims_[0]}")
        xn = self._standardize(xn, "node")
        xm = self._standardize(xm, "meta")
        xd = self._standardize(xd, "db")
        self.net_.eval()
        emb, preds = self.net_.forward(Tensor(xn), Tensor(xm), Tensor(xd))
        return emb, preds, y

    def predict(self, rows: list[FeatureBundle]) -> dict[str, np.ndarray]:
        """Per-label predictions in original units."""
        _, preds, _ = self._forward_rows(rows)
        return {label: np.expm1(preds[label].data.ravel()) for label in LABELS}

    def transform(self, rows: list[FeatureBundle]) -> np.ndarray:
        emb, _, _ = self._forward_rows(rows)
        return emb.data

    def evaluate(self, rows: list[FeatureBundle]) -> dict[str, float]:
        _, preds, y = self._forward_rows(rows)
        out = {}
        for li, label in enumerate(LABELS):
            pred = np.expm1(preds[label].data.ravel())
            out[f"mae_{label}"] = float(np.abs(pred - y[:, li]).mean())
        return out

    def finetune(self, rows: list[FeatureBundle],
                 val_rows: list[FeatureBundle] | None = None):
        """Continue training this already-fitted model on new rows, reusing
        the stored input standardization. Keeps best-validation weights."""
        rows = [r for r in rows if r.group == self.group]
        if not rows:
            raise EmptyDataset(f"no rows for group {self.group}")
        xn, xm, xd, y = self._matrices(rows)
        xn = self._standardize(xn, "node")
        xm = self._standardize(xm, "meta")
        xd = self._standardize(xd, "db")
        ylog = np.log1p(y)
        net = self.net_
        net.train()
        opt = nn.Adam(net.parameters(), lr=self.lr)
        rng = np.random.default_rng(self.seed + 1)
        best_mae, best_weights = np.inf, None
        for epoch in range(self.epochs):
            order = rng.permutation(len(rows))
            for lo in range(0, len(rows), self.batch_size):
                idx = order[lo:lo + self.batch_size]
                _, preds = net.forward(Tensor(xn[idx]), Tensor(xm[idx]),
                                       Tensor(xd[idx]))
                loss = None
                for li, label in enumerate(LABELS):
                    term = nn.mse(preds[label].reshape(len(idx)), ylog[idx, li])
                    loss = term if loss is None else loss + term
                opt.zero_grad()
                loss.backward()
                opt.step()
            if val_rows:
                crit = self.evaluate(val_rows)["mae_total_time"]
                net.train()
                if crit < best_mae:
                    best_mae = crit
                    best_weights = [p.data.copy() for p in net.parameters()]
        if best_weights is not None:
            for p, data in zip(net.parameters(), best_weights):
                p.data = data
        return self

    # -- persistence -------------------------------------------------------------

    def _architecture(self) -> dict:
        return {"kind": "perf-encoder", "group": self.group,
                "architecture": self.architecture, "hidden": self.hidden,
                "merge": self.merge, "embedding_dim": self.embedding_dim,
                "dims": list(self.dims_)}

    def save(self, path) -> dict:
        norms = {k: [v[0].tolist(), v[1].tolist()] for k, v in self.norms_.items()}
        return nn.save_checkpoint(path, self.net_, self._architecture(),
                                  extra={"norms": norms})

    @classmethod
    def load(cls, path, **overrides) -> "PerfGroupModel":
        header = nn.read_header(path)
        arch = header["architecture"]
        if arch.get("kind") != "perf-encoder":
            raise ArchitectureMismatch(f"{path}: not a perf-encoder checkpoint")
        est = cls(group=arch["group"], architecture=arch["architecture"],
                  hidden=arch["hidden"], merge=arch["merge"],
                  embedding_dim=arch["embedding_dim"], **overrides)
        est._build(*arch["dims"])
        nn.load_checkpoint(path, est.net_)
        est.norms_ = {k: (np.array(v[0]), np.array(v[1]))
                      for k, v in header["norms"].items()}
        return est

    def params_hash(self) -> str:
        return nn.params_hash(self.net_)


# ---------------------------------------------------------------------------
# Corpus-level training and embedding

def split_rows(rows: list, seed: int = 0,
               ratio: tuple = (8, 1, 1)) -> tuple[list, list, list]:
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(rows))
    total = sum(ratio)
    n_train = len(rows) * ratio[0] // total
    n_val = (len(rows) - n_train) // 2
    train = [rows[i] for i in idx[:n_train]]
    val = [rows[i] for i in idx[n_train:n_train + n_val]]
    test = [rows[i] for i in idx[n_train + n_val:]]
    return train, val, test


def joint_train(rows: list[FeatureBundle], seed: int = 0,
                **params) -> dict[str, PerfGroupModel]:
    """Train one group model per modeled group on an 8:1:1 split."""
    models = {}
    for group in MODELED_GROUPS:
        grows = [r for r in rows if r.group == group]
        if not grows:
            log.warning("group %s has no rows; skipped", group)
            continue
        train, val, test = split_rows(grows, seed=seed)
        model = PerfGroupModel(group=group, seed=seed, **params)
        model.fit(train, val_rows=val)
        model.test_mae_ = model.evaluate(test) if test else None
        models[group] = model
    return models


def perf_embed_plan(plan: PlanTree, catalog: dict, config: dict,
                    models: dict[str, PerfGroupModel],
                    schema: FeatureSchema | None = None) -> np.ndarray:
    """C(p): per-group embedding of the cumulative row, concatenated
    Scan|Join|Sort|Aggregate; zero block when the group is absent."""
    if not models:
        raise MissingCheckpoint("no perf group models loaded")
    rows = build_training_rows(plan, catalog, config, schema=schema)
    cumulative = {r.group: r for r in rows if r.is_cumulative}
    dim = next(iter(models.values())).embedding_dim
    blocks = []
    for group in MODELED_GROUPS:
        if group in cumulative and group in models:
            blocks.append(models[group].transform([cumulative[group]])[0])
        else:
            if group in cumulative:
                raise MissingCheckpoint(f"no checkpoint for group {group}")
            blocks.append(np.zeros(dim))
    return np.concatenate(blocks)


def finetune_perf(models: dict[str, PerfGroupModel],
                  rows: list[FeatureBundle], fractions: list[float],
                  seed: int = 0, epochs: int = 100,
                  **scratch_params) -> list[dict]:
    """Pretrained-vs-scratch MAE table over training fractions.

    Returns rows {group, fraction, mode, mae_total_time, ...} evaluated on a
    fixed held-out split of the new-domain rows.
    """
    report = []
    for group in MODELED_GROUPS:
        grows = [r for r in rows if r.group == group]
        if not grows or group not in models:
            continue
        train, val, test = split_rows(grows, seed=seed)
        rng = np.random.default_rng(seed + 13)
        order = rng.permutation(len(train))
        for fraction in fractions:
            n = max(1, int(round(fraction * len(train))))
            sub = [train[i] for i in order[:n]]
            for mode in ("pretrained", "scratch"):
                if mode == "pretrained":
                    model = copy.deepcopy(models[group])
                    model.epochs = epochs
                    model.finetune(sub, val_rows=val)
                else:
                    model = PerfGroupModel(group=group, seed=seed,
                                           epochs=epochs, **scratch_params)
                    model.fit(sub, val_rows=val)
                maes = model.evaluate(test)
                report.append({"group": group, "fraction": fraction,
                               "mode": mode, **maes})
    return report


def rows_to_jsonl(rows: list[FeatureBundle]) -> str:
    return "\n".join(json.dumps(r.to_dict(), sort_keys=True) for r in rows) + "\n"


def rows_from_jsonl(text: str) -> list[FeatureBundle]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        d = json.loads(line)
        if d.get("type") == "meta":
            continue
        out.append(FeatureBundle.from_dict(d))
    return out
