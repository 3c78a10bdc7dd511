import numpy as np
import pytest

from planenc import nn
from planenc.errors import ArchitectureMismatch, ShapeMismatch, UnknownId
from planenc.nn import Tensor


def rng(s=0):
    return np.random.default_rng(s)


def test_grad_check_linear():
    lin = nn.Linear(5, 3, rng())
    x = rng(1).normal(size=(4, 5))
    rep = nn.grad_check(lin, lambda m: (m(Tensor(x)) * m(Tensor(x))).sum(),
                        rng=rng(2))
    assert rep.passes(1e-4), rep.max_rel_error


def test_grad_check_layernorm_batchnorm():
    ln = nn.LayerNorm(6)
    x = rng(3).normal(size=(4, 6))
    rep = nn.grad_check(ln, lambda m: (m(Tensor(x)) ** 3).sum(), rng=rng(4))
    assert rep.passes(1e-4), rep.max_rel_error
    bn = nn.BatchNorm(6)
    rep = nn.grad_check(bn, lambda m: (m(Tensor(x)) ** 3).sum(), rng=rng(5))
    assert rep.passes(1e-4), rep.max_rel_error


def test_grad_check_attention_with_mask():
    attn = nn.MultiHeadSelfAttention(12, 3, rng())
    x = rng(6).normal(size=(2, 5, 12))
    mask = np.ones((2, 5))
    mask[1, 3:] = 0
    rep = nn.grad_check(attn, lambda m: m(Tensor(x), mask=mask).sum(),
                        rng=rng(7))
    assert rep.passes(1e-4), rep.max_rel_error


def test_grad_check_transformer_block():
    blk = nn.TransformerBlock(8, 2, 16, rng())
    x = rng(8).normal(size=(2, 4, 8))
    rep = nn.grad_check(blk, lambda m: (m(Tensor(x)) ** 2).sum(), rng=rng(9))
    assert rep.passes(1e-4), rep.max_rel_error


def test_softmax_rows_and_stability():
    x = Tensor(np.array([[1e4, 1e4 + 1.0, 3.0], [-1e4, 0.0, 1e4]]))
    s = x.softmax().data
    assert np.allclose(s.sum(axis=1), 1.0)
    assert np.isfinite(s).all()


def test_cross_entropy_matches_manual():
    logits = Tensor(rng(10).normal(size=(6, 4)), requires_grad=True)
    labels = np.array([0, 1, 2, 3, 0, 2])
    ce = nn.cross_entropy(logits, labels)
    z = logits.data
    p = np.exp(z - z.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    manual = -np.log(p[np.arange(6), labels]).mean()
    assert float(ce.data) == pytest.approx(manual)


def test_adam_skips_unused_params():
    lin1 = nn.Linear(3, 3, rng())
    lin2 = nn.Linear(3, 3, rng(1))
    before = lin2.w.data.copy()
    opt = nn.Adam(lin1.parameters() + lin2.parameters(), lr=0.1)
    x = Tensor(rng(2).normal(size=(2, 3)))
    loss = (lin1(x) ** 2).sum()
    opt.zero_grad()
    loss.backward()
    opt.step()
    assert np.array_equal(lin2.w.data, before)
    assert not np.array_equal(lin1.w.data, np.zeros_like(lin1.w.data))


def test_adam_deterministic():
    def run():
        lin = nn.Linear(4, 2, rng(0))
        opt = nn.Adam(lin.parameters(), lr=1e-2)
        x = Tensor(rng(1).normal(size=(8, 4)))
        y = rng(2).normal(size=(8, 2))
        for _ in range(20):
            loss = nn.mse(lin(x), y)
            opt.zero_grad()
            loss.backward()
            opt.step()
        return lin.w.data.copy()

    assert np.array_equal(run(), run())


def test_matmul_shape_mismatch():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((4, 2)))
    with pytest.raises(ShapeMismatch):
        a @ b


def test_embedding_unknown_id():
    table = Tensor(np.ones((4, 2)), requires_grad=True)
    with pytest.raises(UnknownId):
        nn.embedding(table, np.array([[5]]))


def test_checkpoint_round_trip(tmp_path):
    blk = nn.TransformerBlock(8, 2, 16, rng(3))
    path = tmp_path / "blk.ckpt"
    nn.save_checkpoint(path, blk, {"kind": "test"})
    h1 = nn.params_hash(blk)
    blk2 = nn.TransformerBlock(8, 2, 16, rng(99))
    assert nn.params_hash(blk2) != h1
    nn.load_checkpoint(path, blk2)
    assert nn.params_hash(blk2) == h1


def test_checkpoint_architecture_mismatch(tmp_path):
    lin = nn.Linear(3, 3, rng())
    path = tmp_path / "lin.ckpt"
    nn.save_checkpoint(path, lin, {"kind": "test"})
    other = nn.Linear(4, 3, rng())
    with pytest.raises(ArchitectureMismatch):
        nn.load_checkpoint(path, other)


def test_batchnorm_buffers_persisted(tmp_path):
    bn = nn.BatchNorm(3)
    x = Tensor(rng(4).normal(size=(16, 3)) * 5 + 2)
    bn(x)
    assert not np.allclose(bn.running_mean, 0.0)
    path = tmp_path / "bn.ckpt"
    nn.save_checkpoint(path, bn, {"kind": "test"})
    bn2 = nn.BatchNorm(3)
    nn.load_checkpoint(path, bn2)
    assert np.array_equal(bn2.running_mean, bn.running_mean)
    assert np.array_equal(bn2.running_var, bn.running_var)
    bn.eval(), bn2.eval()
    assert np.array_equal(bn(x).data, bn2(x).data)


def test_named_parameters_declaration_order():
    blk = nn.TransformerBlock(8, 2, 16, rng())
    names = [n for n, _ in blk.named_parameters()]
    assert names == sorted(names, key=names.index)  # stable
    assert names[0].startswith("attn.")
