"""Layers: linear, normalization, attention, transformer block.

Modules register parameters and submodules on attribute assignment, so
parameters() yields a stable, declaration-ordered list (checkpoint order).
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor, concat, embedding, xavier_uniform


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif name in self._buffers:
            self._buffers[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray):
        """Non-trainable state persisted in checkpoints (e.g. running stats)."""
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield f"{prefix}{name}", p
        for name, mod in self._modules.items():
            yield from mod.named_parameters(prefix=f"{prefix}{name}.")

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield f"{prefix}{name}", b
        for name, mod in self._modules.items():
            yield from mod.named_buffers(prefix=f"{prefix}{name}.")

    def set_buffer(self, dotted: str, value: np.ndarray):
        *path, leaf = dotted.split(".")
        mod = self
        for part in path:
            mod = mod._modules[part]
        mod.register_buffer(leaf, value)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self):
        object.__setattr__(self, "training", True)
        for m in self._modules.values():
            m.train()
        return self

    def eval(self):
        object.__setattr__(self, "training", False)
        for m in self._modules.values():
            m.eval()
        return self

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        super().__init__()
        self.w = xavier_uniform(rng, d_in, d_out)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class Embedding(Module):
    def __init__(self, n_rows: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.table = xavier_uniform(rng, n_rows, dim, shape=(n_rows, dim))

    def __call__(self, ids: np.ndarray) -> Tensor:
        return embedding(self.table, ids)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        norm = centered / (var + self.eps).sqrt()
        return norm * self.gamma + self.beta


class BatchNorm(Module):
    """1-d batch normalization over axis 0 with running statistics."""

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.register_buffer("running_mean", np.zeros(dim))
        self.register_buffer("running_var", np.ones(dim))
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2:
            raise ShapeMismatch(f"BatchNorm expects 2-d input, got {x.shape}")
        if self.training:
            mu = x.mean(axis=0, keepdims=True)
            centered = x - mu
            var = (centered * centered).mean(axis=0, keepdims=True)
            self.running_mean = ((1 - self.momentum) * self.running_mean
                                 + self.momentum * mu.data.ravel())
            self.running_var = ((1 - self.momentum) * self.running_var
                                + self.momentum * var.data.ravel())
        else:
            mu = Tensor(self.running_mean)
            centered = x - mu
            var = Tensor(self.running_var)
        norm = centered / (var + self.eps).sqrt()
        return norm * self.gamma + self.beta


class Dropout(Module):
    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        self.rate = rate
        self.rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        if not self.training or self.rate <= 0.0:
            return x
        keep = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * Tensor(keep)


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention with h heads over [.., n, d] input.

    head_i = softmax(X Wq_i (X Wk_i)^T / sqrt(d_head)) X Wv_i;
    output = concat(heads) Wo. An optional additive mask (0 for visible,
    -inf-like for padded positions) is applied before the softmax.
    """

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if d_model % heads != 0:
            raise ShapeMismatch(f"d_model {d_model} not divisible by heads {heads}")
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.wq = xavier_uniform(rng, d_model, d_model)
        self.wk = xavier_uniform(rng, d_model, d_model)
        self.wv = xavier_uniform(rng, d_model, d_model)
        self.wo = xavier_uniform(rng, d_model, d_model)
        self.last_attention = None  # numpy copy of the most recent weights

    def _split(self, x: Tensor) -> Tensor:
        # [..., n, d] -> [..., h, n, d_head]
        *lead, n, _ = x.shape
        x = x.reshape(*lead, n, self.heads, self.d_head)
        return x.swapaxes(-2, -3)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        *lead, n, d = x.shape
        if d != self.d_model:
            raise ShapeMismatch(f"expected width {self.d_model}, got {d}")
        q = self._split(x @ self.wq)
        k = self._split(x @ self.wk)
        v = self._split(x @ self.wv)
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(self.d_head))
        if mask is not None:
            # mask: [..., n] with 1 = real token, 0 = padding
            bias = np.where(np.asarray(mask)[..., None, None, :] > 0, 0.0, -1e9)
            scores = scores + Tensor(bias)
        attn = scores.softmax(axis=-1)
        self.last_attention = attn.data.copy()
        ctx = attn @ v  # [..., h, n, d_head]
        ctx = ctx.swapaxes(-2, -3).reshape(*lead, n, self.d_model)
        return ctx @ self.wo


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Linear(d_model, d_ff, rng)
        self.fc2 = Linear(d_ff, d_model, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).relu())


class TransformerBlock(Module):
    """Self-attention + residual + layernorm + feed-forward + residual + layernorm."""

    def __init__(self, d_model: int, heads: int, d_ff: int,
                 rng: np.random.Generator, dropout: float = 0.0):
        super().__init__()
        self.attn = MultiHeadSelfAttention(d_model, heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.ff = FeedForward(d_model, d_ff, rng)
        self.norm2 = LayerNorm(d_model)
        self.drop = Dropout(dropout, rng)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = self.norm1(x + self.drop(self.attn(x, mask=mask)))
        x = self.norm2(x + self.drop(self.ff(x)))
        return x


class MLP(Module):
    """Stack of Linear layers with a per-layer activation name."""

    ACTS = {"relu": Tensor.relu, "sigmoid": Tensor.sigmoid,
            "tanh": Tensor.tanh, "linear": lambda t: t}

    def __init__(self, dims: list[int], activations: list[str],
                 rng: np.random.Generator):
        super().__init__()
        if len(activations) != len(dims) - 1:
            raise ShapeMismatch("need one activation per layer")
        self.activations = list(activations)
        for i in range(len(dims) - 1):
            setattr(self, f"fc{i}", Linear(dims[i], dims[i + 1], rng))
        self.n_layers = len(dims) - 1

    def __call__(self, x: Tensor) -> Tensor:
        for i in range(self.n_layers):
            x = getattr(self, f"fc{i}")(x)
            x = self.ACTS[self.activations[i]](x)
        return x
