"""Plan structure encoder: subtype embeddings, self-attentive layers, CLS pooling,
and the 4d matching head; pretraining via plan-pair similarity regression.
"""

from __future__ import annotations

import copy
import hashlib

import numpy as np
from sklearn.base import BaseEstimator

from . import nn
from .errors import ArchitectureMismatch, EmptyDataset, ScoreOutOfRange
from .linearize import Vocabulary, add_specials, encode_ids, linearize
from .nn import Tensor, concat
from .plan import PlanTree, deserialize_plan


def match_pair(v_i: Tensor, v_j: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """sigmoid(W . [v_i ; v_j ; v_i - v_j ; v_i * v_j] + b), batched over rows."""
    feats = concat([v_i, v_j, v_i - v_j, v_i * v_j], axis=-1)
    out = feats @ w + b
    return out.reshape(feats.shape[0]).sigmoid() if out.ndim > 1 else out.sigmoid()


class StructureNet(nn.Module):
    """Embedding input layer + stacked transformer blocks + matching head."""

    def __init__(self, d_model: int, heads: int, layers: int, d_ff: int,
                 max_seq_len: int, dropout: float, vocab: Vocabulary,
                 rng: np.random.Generator):
        super().__init__()
        d1 = d_model // 2
        d2 = d_model // 4
        d3 = d_model - d1 - d2
        self.emb_dims = (d1, d2, d3)
        self.d_model = d_model
        self.n_layers = layers
        self.emb1 = nn.Embedding(vocab.size(0), d1, rng)
        self.emb2 = nn.Embedding(vocab.size(1), d2, rng)
        self.emb3 = nn.Embedding(vocab.size(2), d3, rng)
        self.pos = nn.Embedding(max_seq_len, d_model, rng)
        for i in range(layers):
            setattr(self, f"block{i}", nn.TransformerBlock(
                d_model, heads, d_ff, rng, dropout=dropout))
        self.match_w = nn.xavier_uniform(rng, 4 * d_model, 1)
        self.match_b = Tensor(np.zeros(1), requires_grad=True)

    def embed_inputs(self, ids1, ids2, ids3) -> Tensor:
        x = concat([self.emb1(ids1), self.emb2(ids2), self.emb3(ids3)], axis=-1)
        n = np.asarray(ids1).shape[-1]
        return x + self.pos(np.arange(n))

    def encode(self, ids1, ids2, ids3, mask=None) -> Tensor:
        """CLS-pooled plan vectors for a [B, L] id batch."""
        x = self.embed_inputs(ids1, ids2, ids3)
        for i in range(self.n_layers):
            x = getattr(self, f"block{i}")(x, mask=mask)
        return x[:, 0, :]

    def match(self, p_i: Tensor, p_j: Tensor) -> Tensor:
        return match_pair(p_i, p_j, self.match_w, self.match_b)

    def encoder_parameters(self) -> list[Tensor]:
        """Everything except the matching head (for fixed-feature finetuning)."""
        head = {id(self.match_w), id(self.match_b)}
        return [p for p in self.parameters() if id(p) not in head]


def _pad_batch(id_triples: list[tuple], length: int | None = None):
    """Pad variable-length id triples with the all-NIL token (id 0)."""
    length = length or max(len(t[0]) for t in id_triples)
    b = len(id_triples)
    ids = [np.zeros((b, length), dtype=np.intp) for _ in range(3)]
    mask = np.zeros((b, length))
    for r, triple in enumerate(id_triples):
        n = len(triple[0])
        for lvl in range(3):
            ids[lvl][r, :n] = triple[lvl]
        mask[r, :n] = 1.0
    return ids[0], ids[1], ids[2], mask


class StructureEncoder(BaseEstimator):
    """Plan-pair similarity regressor and whole-plan embedding transformer.

    fit(pairs, scores) pretrains on Smatch regression (MSE loss, per-epoch
    MAE logged); transform(plans) yields CLS-pooled plan vectors;
    predict(pairs) yields similarity scores in (0, 1).
    """

    def __init__(self, d_model: int = 128, heads: int = 4, layers: int = 2,
                 d_ff: int = 256, max_seq_len: int = 512, dropout: float = 0.0,
                 lr: float = 1e-3, epochs: int = 30, batch_size: int = 32,
                 seed: int = 0, patience: int = 10, min_delta: float = 1e-4):
        self.d_model = d_model
        self.heads = heads
        self.layers = layers
        self.d_ff = d_ff
        self.max_seq_len = max_seq_len
        self.dropout = dropout
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.patience = patience
        self.min_delta = min_delta

    # -- construction ------------------------------------------------------

    def _ensure_model(self):
        if not hasattr(self, "net_"):
            self.vocab_ = Vocabulary()
            rng = np.random.default_rng(self.seed)
            self.net_ = StructureNet(self.d_model, self.heads, self.layers,
                                     self.d_ff, self.max_seq_len, self.dropout,
                                     self.vocab_, rng)
            self.history_ = []
        return self.net_

    def _ids_for(self, tree: PlanTree):
        seq = add_specials(linearize(tree, self.max_seq_len), self.max_seq_len)
        return encode_ids(seq, self.vocab_)

    def _encode_trees(self, trees: list[PlanTree], train: bool = False) -> Tensor:
        net = self._ensure_model()
        net.train() if train else net.eval()
        i1, i2, i3, mask = _pad_batch([self._ids_for(t) for t in trees])
        return net.encode(i1, i2, i3, mask=mask)

    def _forward_pairs(self, pairs, train: bool = False) -> Tensor:
        # encode both sides in one batch for efficiency
        trees = [t for pair in pairs for t in pair]
        emb = self._encode_trees(trees, train=train)
        b = len(pairs)
        idx_a = np.arange(0, 2 * b, 2)
        idx_b = np.arange(1, 2 * b, 2)
        return self.net_.match(emb[idx_a], emb[idx_b])

    # -- estimator API -------------------------------------------------------

    def fit(self, pairs, scores, dev_pairs=None, dev_scores=None,
            trainable: str = "all"):
        """Minimize MSE between the matching head and the pair scores.

        trainable: "all" or "head" (fixed-feature mode: encoder frozen).
        """
        pairs = list(pairs)
        scores = np.asarray(scores, dtype=float)
        if len(pairs) == 0:
            raise EmptyDataset("no training pairs")
        if scores.min() < 0 or scores.max() > 1:
            raise ScoreOutOfRange("pair scores must lie in [0, 1]")
        net = self._ensure_model()
        if trainable == "head":
            params = [net.match_w, net.match_b]
        else:
            params = net.parameters()
        opt = nn.Adam(params, lr=self.lr)
        rng = np.random.default_rng(self.seed + 1)
        if dev_pairs is not None and len(dev_pairs) == 0:
            dev_pairs = None
        self.best_dev_mae_ = None

        best = (np.inf, None, 0)  # dev MAE, params snapshot, epoch
        for epoch in range(self.epochs):
            order = rng.permutation(len(pairs))
            ep_mse, ep_mae, nb = 0.0, 0.0, 0
            for lo in range(0, len(pairs), self.batch_size):
                idx = order[lo:lo + self.batch_size]
                batch = [pairs[i] for i in idx]
                target = scores[idx]
                pred = self._forward_pairs(batch, train=True)
                loss = nn.mse(pred, target)
                opt.zero_grad()
                loss.backward()
                opt.step()
                ep_mse += float(loss.data)
                ep_mae += float(np.abs(pred.data - target).mean())
                nb += 1
            self.history_.append({"epoch": epoch, "split": "train",
                                  "mse": ep_mse / nb, "mae": ep_mae / nb})
            if dev_pairs is not None:
                dev_pred = self.predict(dev_pairs)
                dev_mae = float(np.abs(dev_pred - np.asarray(dev_scores)).mean())
                dev_mse = float(((dev_pred - np.asarray(dev_scores)) ** 2).mean())
                self.history_.append({"epoch": epoch, "split": "dev",
                                      "mse": dev_mse, "mae": dev_mae})
                if dev_mae < best[0] - self.min_delta:
                    best = (dev_mae, [p.data.copy() for p in net.parameters()], epoch)
                elif epoch - best[2] >= self.patience:
                    break
        if best[1] is not None:
            for p, data in zip(net.parameters(), best[1]):
                p.data = data
            self.best_dev_mae_ = best[0]
        return self

    def predict(self, pairs) -> np.ndarray:
        pairs = list(pairs)
        out = np.zeros(len(pairs))
        for lo in range(0, len(pairs), self.batch_size):
            chunk = pairs[lo:lo + self.batch_size]
            out[lo:lo + len(chunk)] = self._forward_pairs(chunk, train=False).data
        return out

    def transform(self, plans) -> np.ndarray:
        plans = list(plans)
        out = np.zeros((len(plans), self.d_model))
        for lo in range(0, len(plans), self.batch_size):
            chunk = plans[lo:lo + self.batch_size]
            out[lo:lo + len(chunk)] = self._encode_trees(chunk, train=False).data
        return out

    def encode_plan(self, tree: PlanTree) -> np.ndarray:
        return self.transform([tree])[0]

    # -- persistence ---------------------------------------------------------

    def _architecture(self) -> dict:
        return {"kind": "structure-encoder", "d_model": self.d_model,
                "heads": self.heads, "layers": self.layers, "d_ff": self.d_ff,
                "max_seq_len": self.max_seq_len, "dropout": self.dropout}

    def save(self, path) -> dict:
        net = self._ensure_model()
        vocab_hash = hashlib.sha256(self.vocab_.to_json().encode()).hexdigest()
        return nn.save_checkpoint(path, net, self._architecture(),
                                  extra={"vocab_sha256": vocab_hash})

    @classmethod
    def load(cls, path, **overrides) -> "StructureEncoder":
        header = nn.read_header(path)
        arch = header["architecture"]
        if arch.get("kind") != "structure-encoder":
            raise ArchitectureMismatch(f"{path}: not a structure-encoder checkpoint")
        est = cls(d_model=arch["d_model"], heads=arch["heads"],
                  layers=arch["layers"], d_ff=arch["d_ff"],
                  max_seq_len=arch["max_seq_len"], dropout=arch["dropout"],
                  **overrides)
        nn.load_checkpoint(path, est._ensure_model())
        return est

    def params_hash(self) -> str:
        return nn.params_hash(self._ensure_model())


# ---------------------------------------------------------------------------
# Dataset-level helpers

def pairs_from_rows(rows: list[dict]):
    """Decode JSONL pair rows into (pairs, scores) per split."""
    splits = {}
    for row in rows:
        if row.get("type") == "meta":
            continue
        split = row.get("split", "train")
        pair = (deserialize_plan(row["plan_a"]), deserialize_plan(row["plan_b"]))
        splits.setdefault(split, ([], []))
        splits[split][0].append(pair)
        splits[split][1].append(float(row["smatch"]))
    return splits


def train_ppsr(rows: list[dict], seed: int = 0, **params) -> StructureEncoder:
    """Pretrain on a scored pair dataset with 'split' tags."""
    splits = pairs_from_rows(rows)
    if "train" not in splits:
        raise EmptyDataset("no train split in dataset")
    est = StructureEncoder(seed=seed, **params)
    dev = splits.get("dev", (None, None))
    est.fit(splits["train"][0], splits["train"][1],
            dev_pairs=dev[0], dev_scores=dev[1])
    return est


def finetune_structure(pretrained: StructureEncoder, rows: list[dict],
                       fraction: float = 1.0, mode: str = "finetune-all",
                       seed: int = 0, epochs: int | None = None,
                       lr: float | None = None) -> StructureEncoder:
    """Continue training on a new domain.

    mode "finetune-all" updates everything; "fixed-features" freezes the
    encoder and trains only the matching head.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    if mode not in ("finetune-all", "fixed-features"):
        raise ValueError(f"unknown mode {mode!r}")
    splits = pairs_from_rows(rows)
    train_pairs, train_scores = splits.get("train", ([], []))
    if not train_pairs:
        raise EmptyDataset("no train split in dataset")
    n = max(1, int(round(fraction * len(train_pairs))))
    idx = np.random.default_rng(seed).permutation(len(train_pairs))[:n]
    sub_pairs = [train_pairs[i] for i in idx]
    sub_scores = [train_scores[i] for i in idx]

    est = copy.deepcopy(pretrained)
    if epochs is not None:
        est.epochs = epochs
    if lr is not None:
        est.lr = lr
    est.seed = seed
    dev = splits.get("dev", (None, None))
    est.fit(sub_pairs, sub_scores, dev_pairs=dev[0], dev_scores=dev[1],
            trainable="head" if mode == "fixed-features" else "all")
    return est
