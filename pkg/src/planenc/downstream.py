"""Downstream models over the frozen plan encoders: latency regression and
query template/cluster classification.

Inputs are the structure embedding S(p), the concatenated per-group
performance embedding C(p), and the database configuration vector.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import nn
from .errors import (ArchitectureMismatch, EmptyDataset, ShapeMismatch,
                     UnknownLabel)
from .nn import Tensor, concat


def _standardize_fit(x: np.ndarray):
    mu, sd = x.mean(axis=0), x.std(axis=0)
    sd[sd < 1e-12] = 1.0
    return mu, sd


class LatencyNet(nn.Module):
    """Latency head: linear reshape of S(p), concatenation with C(p) and both
    raw and log1p configuration settings, ReLU MLP, softplus output."""

    def __init__(self, d_structure: int, d_perf: int, d_settings: int,
                 reshape_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.reshape = nn.Linear(d_structure, reshape_dim, rng)
        d_in = reshape_dim + d_perf + 2 * d_settings
        self.mlp = nn.MLP([d_in, hidden, hidden, 1],
                          ["relu", "relu", "linear"], rng)

    def forward(self, s: Tensor, c: Tensor, settings_raw: Tensor,
                settings_log: Tensor) -> Tensor:
        x = concat([self.reshape(s), c, settings_raw, settings_log], axis=-1)
        return self.mlp(x).softplus()


class LatencyModel(BaseEstimator):
    """Predicts plan latency from (S(p), C(p), config settings).

    Trains on log1p(latency) with a softplus output so predictions are
    non-negative on both scales; reports come back in original units.
    """

    def __init__(self, reshape_dim: int = 128, hidden: int = 256,
                 lr: float = 1e-3, epochs: int = 200, batch_size: int = 64,
                 seed: int = 0):
        self.reshape_dim = reshape_dim
        self.hidden = hidden
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _inputs(self, S, C, settings):
        S = np.asarray(S, float)
        C = np.asarray(C, float)
        settings = np.asarray(settings, float)
        if not (len(S) == len(C) == len(settings)):
            raise ShapeMismatch("S, C, settings row counts differ")
        raw = (settings - self.norms_["raw"][0]) / self.norms_["raw"][1]
        lg = (np.log1p(settings) - self.norms_["log"][0]) / self.norms_["log"][1]
        return Tensor(S), Tensor(C), Tensor(raw), Tensor(lg)

    def fit(self, S, C, settings, latency, val=None):
        S = np.asarray(S, float)
        C = np.asarray(C, float)
        settings = np.asarray(settings, float)
        y = np.log1p(np.asarray(latency, float))
        if len(S) == 0:
            raise EmptyDataset("no latency training rows")
        self.norms_ = {"raw": _standardize_fit(settings),
                       "log": _standardize_fit(np.log1p(settings))}
        rng = np.random.default_rng(self.seed)
        self.net_ = LatencyNet(S.shape[1], C.shape[1], settings.shape[1],
                               self.reshape_dim, self.hidden, rng)
        self.dims_ = (S.shape[1], C.shape[1], settings.shape[1])
        opt = nn.Adam(self.net_.parameters(), lr=self.lr)
        self.history_ = []
        best_mae, best_weights = np.inf, None
        for epoch in range(self.epochs):
            order = rng.permutation(len(S))
            ep_loss, nb = 0.0, 0
            for lo in range(0, len(S), self.batch_size):
                idx = order[lo:lo + self.batch_size]
                ts, tc, tr, tl = self._inputs(S[idx], C[idx], settings[idx])
                pred = self.net_.forward(ts, tc, tr, tl).reshape(len(idx))
                loss = nn.mse(pred, y[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
                ep_loss += float(loss.data)
                nb += 1
            self.history_.append(
                {"epoch": epoch, "split": "train", "loss": ep_loss / nb})
            if val is not None:
                vmae = float(np.abs(
                    self.predict(val[0], val[1], val[2]) - np.asarray(val[3])
                ).mean())
                self.history_.append(
                    {"epoch": epoch, "split": "val", "mae": vmae})
                if vmae < best_mae:
                    best_mae = vmae
                    best_weights = [p.data.copy()
                                    for p in self.net_.parameters()]
        if best_weights is not None:
            for p, data in zip(self.net_.parameters(), best_weights):
                p.data = data
            self.best_val_mae_ = best_mae
        return self

    def predict(self, S, C, settings) -> np.ndarray:
        """Latency predictions in original (non-log) units."""
        ts, tc, tr, tl = self._inputs(np.asarray(S, float),
                                      np.asarray(C, float),
                                      np.asarray(settings, float))
        self.net_.eval()
        out = self.net_.forward(ts, tc, tr, tl).data.ravel()
        self.net_.train()
        return np.expm1(out)

    def report(self, S, C, settings, latency, templates) -> list[dict]:
        """Per-template accuracy table: MAE of this model and of a constant
        mean-latency baseline, next to the label spread (median, p5, p95)."""
        pred = self.predict(S, C, settings)
        latency = np.asarray(latency, float)
        templates = np.asarray(templates)
        rows = []
        for tmpl in sorted(set(templates.tolist())):
            m = templates == tmpl
            yv = latency[m]
            rows.append({
                "template": tmpl,
                "count": int(m.sum()),
                "median": float(np.median(yv)),
                "p5": float(np.percentile(yv, 5)),
                "p95": float(np.percentile(yv, 95)),
                "mae": float(np.abs(pred[m] - yv).mean()),
                "baseline_mae": float(np.abs(yv - latency.mean()).mean()),
            })
        return rows

    def _architecture(self) -> dict:
        return {"kind": "latency-model", "reshape_dim": self.reshape_dim,
                "hidden": self.hidden, "dims": list(self.dims_)}

    def save(self, path) -> dict:
        norms = {k: [v[0].tolist(), v[1].tolist()]
                 for k, v in self.norms_.items()}
        return nn.save_checkpoint(path, self.net_, self._architecture(),
                                  extra={"norms": norms})

    @classmethod
    def load(cls, path, **overrides) -> "LatencyModel":
        header = nn.read_header(path)
        arch = header["architecture"]
        if arch.get("kind") != "latency-model":
            raise ArchitectureMismatch(f"{path}: not a latency-model checkpoint")
        est = cls(reshape_dim=arch["reshape_dim"], hidden=arch["hidden"],
                  **overrides)
        d_s, d_c, d_cfg = arch["dims"]
        rng = np.random.default_rng(est.seed)
        est.net_ = LatencyNet(d_s, d_c, d_cfg, est.reshape_dim, est.hidden, rng)
        est.dims_ = (d_s, d_c, d_cfg)
        nn.load_checkpoint(path, est.net_)
        est.norms_ = {k: (np.array(v[0]), np.array(v[1]))
                      for k, v in header["norms"].items()}
        return est

    def params_hash(self) -> str:
        return nn.params_hash(self.net_)


class ClassifierNet(nn.Module):
    """Template classifier: batch-normalized fusion of the two embeddings
    followed by a ReLU MLP into template logits."""

    def __init__(self, d_in: int, hidden: int, n_templates: int,
                 rng: np.random.Generator):
        super().__init__()
        self.fuse_norm = nn.BatchNorm(d_in)
        self.mlp = nn.MLP([d_in, hidden, n_templates],
                          ["relu", "linear"], rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.mlp(self.fuse_norm(x))


class TemplateClassifier(BaseEstimator):
    """Joint template and cluster classifier.

    Cluster probabilities are derived exactly from template probabilities
    through the template-to-cluster membership matrix, so the per-row cluster
    distribution always sums to the same total as the template distribution.
    Loss is CE(template) + lam * CE(cluster).
    """

    def __init__(self, hidden: int = 256, lam: float = 1.0, lr: float = 1e-3,
                 epochs: int = 100, batch_size: int = 64, seed: int = 0,
                 inputs: str = "both"):
        self.hidden = hidden
        self.lam = lam
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.inputs = inputs  # "both" | "structure" | "performance"

    def _fuse(self, S, C) -> np.ndarray:
        S = np.asarray(S, float)
        C = np.asarray(C, float)
        if self.inputs == "structure":
            return S
        if self.inputs == "performance":
            return C
        return np.concatenate([S, C], axis=1)

    def fit(self, S, C, templates, template_to_cluster: dict,
            val=None):
        """`template_to_cluster` maps every template label to its cluster."""
        x = self._fuse(S, C)
        if len(x) == 0:
            raise EmptyDataset("no classification training rows")
        self.templates_ = sorted(template_to_cluster)
        self.clusters_ = sorted(set(template_to_cluster.values()))
        t_index = {t: i for i, t in enumerate(self.templates_)}
        c_index = {c: i for i, c in enumerate(self.clusters_)}
        # membership matrix M[t, c] = 1 iff template t belongs to cluster c
        self.membership_ = np.zeros((len(self.templates_), len(self.clusters_)))
        for t, c in template_to_cluster.items():
            self.membership_[t_index[t], c_index[c]] = 1.0
        try:
            y_t = np.array([t_index[t] for t in templates])
        except KeyError as exc:
            raise UnknownLabel(f"template {exc} not in cluster map") from exc
        y_c = self.membership_[y_t].argmax(axis=1)

        rng = np.random.default_rng(self.seed)
        self.net_ = ClassifierNet(x.shape[1], self.hidden,
                                  len(self.templates_), rng)
        self.dims_ = (x.shape[1],)
        opt = nn.Adam(self.net_.parameters(), lr=self.lr)
        member = Tensor(self.membership_)
        self.history_ = []
        best_acc, best_weights = -1.0, None
        for epoch in range(self.epochs):
            order = rng.permutation(len(x))
            ep_loss, nb = 0.0, 0
            for lo in range(0, len(x), self.batch_size):
                idx = order[lo:lo + self.batch_size]
                logits = self.net_.forward(Tensor(x[idx]))
                loss = nn.cross_entropy(logits, y_t[idx])
                if self.lam:
                    cluster_probs = logits.softmax() @ member
                    loss = loss + self.lam * nn.nll_from_probs(
                        cluster_probs, y_c[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
                ep_loss += float(loss.data)
                nb += 1
            self.history_.append(
                {"epoch": epoch, "split": "train", "loss": ep_loss / nb})
            if val is not None:
                acc = self.score(val[0], val[1], val[2])
                self.history_.append(
                    {"epoch": epoch, "split": "val", "accuracy": acc})
                if acc > best_acc:
                    best_acc = acc
                    best_weights = [p.data.copy()
                                    for p in self.net_.parameters()]
        if best_weights is not None:
            for p, data in zip(self.net_.parameters(), best_weights):
                p.data = data
            self.best_val_accuracy_ = best_acc
        return self

    def predict_proba(self, S, C) -> tuple[np.ndarray, np.ndarray]:
        """(template_probs, cluster_probs); cluster probs are the membership
        sums of template probs, so each row's cluster total equals 1."""
        x = self._fuse(S, C)
        self.net_.eval()
        logits = self.net_.forward(Tensor(x)).data
        self.net_.train()
        z = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        return probs, probs @ self.membership_

    def predict(self, S, C) -> tuple[np.ndarray, np.ndarray]:
        pt, pc = self.predict_proba(S, C)
        templates = np.array(self.templates_)[pt.argmax(axis=1)]
        clusters = np.array(self.clusters_)[pc.argmax(axis=1)]
        return templates, clusters

    def score(self, S, C, templates) -> float:
        pred, _ = self.predict(S, C)
        return float((pred == np.asarray(templates)).mean())

    def score_clusters(self, S, C, clusters) -> float:
        _, pred = self.predict(S, C)
        return float((pred == np.asarray(clusters)).mean())

    def _architecture(self) -> dict:
        return {"kind": "template-classifier", "hidden": self.hidden,
                "inputs": self.inputs, "d_in": self.dims_[0],
                "n_templates": len(self.templates_)}

    def save(self, path) -> dict:
        return nn.save_checkpoint(
            path, self.net_, self._architecture(),
            extra={"templates": list(self.templates_),
                   "clusters": list(self.clusters_),
                   "membership": self.membership_.tolist(),
                   "lam": self.lam})

    @classmethod
    def load(cls, path, **overrides) -> "TemplateClassifier":
        header = nn.read_header(path)
        arch = header["architecture"]
        if arch.get("kind") != "template-classifier":
            raise ArchitectureMismatch(
                f"{path}: not a template-classifier checkpoint")
        est = cls(hidden=arch["hidden"], inputs=arch["inputs"],
                  lam=header.get("lam", 1.0), **overrides)
        est.templates_ = header["templates"]
        est.clusters_ = header["clusters"]
        est.membership_ = np.array(header["membership"])
        rng = np.random.default_rng(est.seed)
        est.net_ = ClassifierNet(arch["d_in"], est.hidden,
                                 arch["n_templates"], rng)
        est.dims_ = (arch["d_in"],)
        nn.load_checkpoint(path, est.net_)
        return est

    def params_hash(self) -> str:
        return nn.params_hash(self.net_)


def classification_ablation(S, C, templates, template_to_cluster: dict,
                            fractions=(0.1, 0.3, 1.0), seed: int = 0,
                            **params) -> list[dict]:
    """Accuracy table over input ablations (both / structure-only /
    performance-only) and training-set fractions, on a fixed 80:20 split."""
    S = np.asarray(S, float)
    C = np.asarray(C, float)
    templates = np.asarray(templates)
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(S))
    n_train = int(0.8 * len(S))
    tr, te = idx[:n_train], idx[n_train:]
    rows = []
    for fraction in fractions:
        n = max(1, int(round(fraction * len(tr))))
        sub = tr[:n]
        for inputs in ("both", "structure", "performance"):
            clf = TemplateClassifier(inputs=inputs, seed=seed, **params)
            clf.fit(S[sub], C[sub], templates[sub], template_to_cluster)
            rows.append({
                "inputs": inputs, "fraction": fraction,
                "template_accuracy": clf.score(S[te], C[te], templates[te]),
                "cluster_accuracy": clf.score_clusters(
                    S[te], C[te],
                    np.array([template_to_cluster[t] for t in templates[te]])),
            })
    return rows
