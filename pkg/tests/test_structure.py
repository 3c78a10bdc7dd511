import numpy as np
import pytest

from planenc import StructureEncoder, datagen, parse_plan_document
from planenc.errors import EmptyDataset, ScoreOutOfRange
from planenc.structure import finetune_structure, train_ppsr


def tiny_encoder(**over):
    params = dict(d_model=32, heads=2, layers=1, d_ff=64, epochs=5,
                  batch_size=16, seed=0)
    params.update(over)
    return StructureEncoder(**params)


@pytest.fixture(scope="module")
def pair_rows():
    spec = datagen.SyntheticSpec(seed=5, max_depth=4, max_nodes=25)
    plans = datagen.gen_plans(spec, 40)
    return datagen.build_pair_dataset(plans, 66, seed=0)


def test_fit_validates_inputs():
    with pytest.raises(EmptyDataset):
        tiny_encoder().fit([], [])
    tree = parse_plan_document({"Plan": {"Node Type": "Seq Scan"}})
    with pytest.raises(ScoreOutOfRange):
        tiny_encoder().fit([(tree, tree)], [1.5])


def test_memorizes_small_pair_set(medium_plans):
    """Targets are assigned per distinct structure pair so zero training
    error is attainable."""
    from planenc import linearize
    rng = np.random.default_rng(0)
    pairs, scores, seen = [], [], {}
    for k in range(30):
        i, j = rng.integers(len(medium_plans), size=2)
        key = (linearize(medium_plans[i]).render(),
               linearize(medium_plans[j]).render())
        if key not in seen:
            seen[key] = float(rng.uniform(0.05, 0.95))
        pairs.append((medium_plans[i], medium_plans[j]))
        scores.append(seen[key])
    enc = tiny_encoder(epochs=400, lr=3e-3, batch_size=30, patience=10 ** 6)
    enc.fit(pairs, scores)
    pred = enc.predict(pairs)
    mse = float(np.mean((pred - np.array(scores)) ** 2))
    assert mse < 1e-3, mse


def test_child_permutation_invariance():
    a = {"Plan": {"Node Type": "Hash Join", "Plans": [
        {"Node Type": "Seq Scan"}, {"Node Type": "Index Scan"}]}}
    b = {"Plan": {"Node Type": "Hash Join", "Plans": [
        {"Node Type": "Index Scan"}, {"Node Type": "Seq Scan"}]}}
    enc = tiny_encoder()
    ta, tb = parse_plan_document(a), parse_plan_document(b)
    enc.fit([(ta, tb)], [1.0])
    ea, eb = enc.transform([ta, tb])
    assert np.array_equal(ea, eb)


def test_predictions_in_unit_interval(pair_rows):
    enc = train_ppsr(pair_rows, seed=0, epochs=2, d_model=32, heads=2,
                     layers=1, d_ff=64)
    from planenc.structure import pairs_from_rows
    splits = pairs_from_rows(pair_rows)
    pred = enc.predict(splits["test"][0])
    assert ((pred >= 0.0) & (pred <= 1.0)).all()


def test_save_load_reproduces(pair_rows, tmp_path):
    enc = train_ppsr(pair_rows, seed=0, epochs=2, d_model=32, heads=2,
                     layers=1, d_ff=64)
    path = tmp_path / "struct.ckpt"
    enc.save(path)
    back = StructureEncoder.load(path)
    assert back.params_hash() == enc.params_hash()
    from planenc.structure import pairs_from_rows
    splits = pairs_from_rows(pair_rows)
    plans = [p for pair in splits["train"][0][:4] for p in pair]
    assert np.array_equal(back.transform(plans), enc.transform(plans))


def test_fixed_features_keeps_encoder_frozen(pair_rows):
    enc = train_ppsr(pair_rows, seed=0, epochs=2, d_model=32, heads=2,
                     layers=1, d_ff=64)
    before = [p.data.copy() for p in enc.net_.encoder_parameters()]
    tuned = finetune_structure(enc, pair_rows, fraction=0.5,
                               mode="fixed-features", seed=1, epochs=2)
    after = tuned.net_.encoder_parameters()
    assert all(np.array_equal(b, a.data) for b, a in zip(before, after))
    # and the original encoder object is untouched
    assert all(np.array_equal(b, p.data)
               for b, p in zip(before, enc.net_.encoder_parameters()))


def test_training_fraction_effect(pair_rows):
    full = finetune_structure(
        train_ppsr(pair_rows, seed=0, epochs=1, d_model=32, heads=2,
                   layers=1, d_ff=64),
        pair_rows, fraction=1.0, mode="finetune-all", epochs=1)
    assert hasattr(full, "best_dev_mae_")
