import numpy as np
import pytest

from planenc.downstream import (LatencyModel, TemplateClassifier,
                                classification_ablation)
from planenc.errors import EmptyDataset, UnknownLabel


def make_latency_data(n=120, d_s=16, d_c=24, d_cfg=5, seed=0):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(n, d_s))
    C = rng.normal(size=(n, d_c))
    settings = rng.uniform(1.0, 100.0, size=(n, d_cfg))
    latency = np.abs(3.0 * S[:, 0] + settings[:, 0] * 0.5 + 5.0
                     + rng.normal(scale=0.1, size=n))
    return S, C, settings, latency


def test_latency_fit_predict_nonnegative():
    S, C, settings, latency = make_latency_data()
    model = LatencyModel(reshape_dim=8, hidden=32, epochs=30, seed=0)
    model.fit(S, C, settings, latency)
    pred = model.predict(S, C, settings)
    assert pred.shape == (len(S),)
    assert (pred >= 0.0).all()


def test_latency_empty_dataset():
    with pytest.raises(EmptyDataset):
        LatencyModel().fit(np.zeros((0, 4)), np.zeros((0, 4)),
                           np.zeros((0, 2)), [])


def test_latency_save_load(tmp_path):
    S, C, settings, latency = make_latency_data(n=60)
    model = LatencyModel(reshape_dim=8, hidden=16, epochs=5, seed=0)
    model.fit(S, C, settings, latency)
    path = tmp_path / "lat.ckpt"
    model.save(path)
    back = LatencyModel.load(path)
    assert np.array_equal(back.predict(S, C, settings),
                          model.predict(S, C, settings))


def test_latency_report_fields():
    S, C, settings, latency = make_latency_data(n=60)
    model = LatencyModel(reshape_dim=8, hidden=16, epochs=5, seed=0)
    model.fit(S, C, settings, latency)
    templates = ["t%d" % (i % 3) for i in range(60)]
    rows = model.report(S, C, settings, latency, templates)
    assert len(rows) == 3
    for row in rows:
        assert {"template", "median", "p5", "p95", "mae",
                "baseline_mae"} <= set(row)


def make_classification_data(n_templates=8, n_clusters=4, per=10, seed=0):
    rng = np.random.default_rng(seed)
    cmap = {f"t{t}": f"c{t % n_clusters}" for t in range(n_templates)}
    centers_s = rng.normal(scale=3.0, size=(n_templates, 12))
    centers_c = rng.normal(scale=3.0, size=(n_templates, 8))
    S, C, labels = [], [], []
    for t in range(n_templates):
        S.append(centers_s[t] + rng.normal(scale=0.2, size=(per, 12)))
        C.append(centers_c[t] + rng.normal(scale=0.2, size=(per, 8)))
        labels += [f"t{t}"] * per
    return np.vstack(S), np.vstack(C), labels, cmap


def test_classifier_distributions_and_identity():
    S, C, labels, cmap = make_classification_data()
    clf = TemplateClassifier(hidden=32, epochs=40, seed=0)
    clf.fit(S, C, labels, cmap)
    pt, pc = clf.predict_proba(S, C)
    assert np.allclose(pt.sum(axis=1), 1.0)
    assert np.allclose(pc.sum(axis=1), 1.0)
    assert (pt >= 0).all() and (pc >= 0).all()
    # cluster distribution is exactly the membership sum of template probs
    assert np.array_equal(pc, pt @ clf.membership_)


def test_classifier_learns_separable_data():
    S, C, labels, cmap = make_classification_data()
    clf = TemplateClassifier(hidden=32, epochs=60, seed=0)
    clf.fit(S, C, labels, cmap)
    assert clf.score(S, C, labels) >= 0.95


def test_classifier_cluster_consistent_with_map():
    S, C, labels, cmap = make_classification_data()
    clf = TemplateClassifier(hidden=32, epochs=40, seed=0)
    clf.fit(S, C, labels, cmap)
    pred_t, _ = clf.predict(S, C)
    # argmax cluster of a confident template prediction matches the map
    pt, pc = clf.predict_proba(S, C)
    confident = pt.max(axis=1) > 0.9
    t_idx = {t: i for i, t in enumerate(clf.templates_)}
    for k in np.flatnonzero(confident)[:20]:
        assert cmap[pred_t[k]] == clf.clusters_[pc[k].argmax()]


def test_classifier_unknown_template():
    S, C, labels, cmap = make_classification_data()
    with pytest.raises(UnknownLabel):
        TemplateClassifier(epochs=1).fit(S, C, ["nope"] * len(S), cmap)


def test_classifier_save_load(tmp_path):
    S, C, labels, cmap = make_classification_data(per=5)
    clf = TemplateClassifier(hidden=16, epochs=5, seed=0)
    clf.fit(S, C, labels, cmap)
    path = tmp_path / "clf.ckpt"
    clf.save(path)
    back = TemplateClassifier.load(path)
    p1, c1 = back.predict_proba(S, C)
    p2, c2 = clf.predict_proba(S, C)
    assert np.array_equal(p1, p2) and np.array_equal(c1, c2)


def test_ablation_table():
    S, C, labels, cmap = make_classification_data(per=6)
    rows = classification_ablation(S, C, labels, cmap,
                                   fractions=(0.5, 1.0), seed=0,
                                   hidden=16, epochs=10)
    assert len(rows) == 6
    assert {r["inputs"] for r in rows} == {"both", "structure", "performance"}
    assert all(0.0 <= r["template_accuracy"] <= 1.0 for r in rows)
