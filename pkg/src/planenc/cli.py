"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 checkpoint error.
Every command that writes an artifact also writes a run manifest next to it
(<output>.manifest.json) unless --manifest overrides the location.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import datagen, perf, smatch as smatch_mod, structure
from .downstream import LatencyModel, TemplateClassifier
from .errors import (ArchitectureMismatch, MissingCheckpoint, PlanEncError)
from .features import FeatureSchema, extract_db_features, load_catalog
from .linearize import add_specials, linearize
from .manifest import RunManifest
from .plan import deserialize_plan, load_plan, serialize_plan


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def _write_out(text: str, out: str | None) -> Path | None:
    if out is None or out == "-":
        click.echo(text, nl=not text.endswith("\n"))
        return None
    Path(out).write_text(text)
    return Path(out)


def _finish(manifest: RunManifest, out_paths, manifest_path: str | None):
    paths = [p for p in out_paths if p is not None]
    for p in paths:
        manifest.add_output(p)
    if manifest_path:
        manifest.write(manifest_path)
    elif paths:
        manifest.write(str(paths[0]) + ".manifest.json")


manifest_option = click.option("--manifest", "manifest_path", default=None,
                               help="Where to write the run manifest.")


@click.group()
def cli():
    """Query plan encoding toolkit."""


@cli.command()
@click.argument("input_path")
@click.option("-o", "--output", default=None)
@manifest_option
def parse(input_path, output, manifest_path):
    """Normalize an EXPLAIN JSON document into the canonical plan form."""
    man = RunManifest("parse")
    if input_path != "-":
        man.add_input(input_path)
    tree = load_plan(_read(input_path), source_id=Path(input_path).name
                     if input_path != "-" else None)
    p = _write_out(serialize_plan(tree), output)
    _finish(man, [p], manifest_path)


@cli.command("linearize")
@click.argument("input_path")
@click.option("-o", "--output", default=None)
@click.option("--specials/--no-specials", default=False,
              help="Wrap the sequence in classifier/separator markers.")
@manifest_option
def linearize_cmd(input_path, output, specials, manifest_path):
    """Render a plan as its bracketed depth-first token sequence."""
    man = RunManifest("linearize")
    if input_path != "-":
        man.add_input(input_path)
    tree = load_plan(_read(input_path))
    seq = linearize(tree)
    if specials:
        seq = add_specials(seq)
    p = _write_out(seq.render() + "\n", output)
    _finish(man, [p], manifest_path)


@cli.command("smatch")
@click.argument("plan_a")
@click.argument("plan_b")
@click.option("--restarts", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--exact", is_flag=True, help="Use the exhaustive oracle.")
def smatch_cmd(plan_a, plan_b, restarts, seed, exact):
    """Structural similarity score between two plans."""
    a = load_plan(_read(plan_a))
    b = load_plan(_read(plan_b))
    if exact:
        res = smatch_mod.smatch_exact(a, b)
    else:
        res = smatch_mod.smatch_hillclimb(a, b, restarts=restarts, seed=seed)
    click.echo(json.dumps({"smatch": res.score, "precision": res.precision,
                           "recall": res.recall}, sort_keys=True))


@cli.command("gen-configs")
@click.option("-n", "--count", default=30, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--output", required=True)
@manifest_option
def gen_configs(count, seed, output, manifest_path):
    """Stratified (Latin hypercube) database configuration sample."""
    man = RunManifest("gen-configs", seed=seed, config={"count": count})
    ranges = datagen.default_ranges()
    configs = datagen.lhs_configs(count, ranges, seed=seed)
    text = "\n".join(json.dumps(c, sort_keys=True) for c in configs) + "\n"
    p = _write_out(text, output)
    _finish(man, [p], manifest_path)


@cli.command("gen-plans")
@click.option("-n", "--count", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--kind", type=click.Choice(["plans", "latency", "classification"]),
              default="plans", show_default=True)
@click.option("--templates", default=20, show_default=True,
              help="Template count for downstream corpora.")
@click.option("--configs", default=30, show_default=True,
              help="Config count (latency) or instances per template.")
@click.option("--clusters", default=33, show_default=True,
              help="Cluster count for the classification corpus.")
@click.option("-o", "--output", required=True)
@manifest_option
def gen_plans_cmd(count, seed, kind, templates, configs, clusters, output,
                  manifest_path):
    """Synthetic labeled plan corpora; also writes <output>.catalog.jsonl."""
    spec = datagen.SyntheticSpec(seed=seed)
    man = RunManifest("gen-plans", seed=seed,
                      config={"kind": kind, "count": count,
                              "templates": templates, "configs": configs,
                              "clusters": clusters, "spec": spec.to_dict()})
    lines = [json.dumps(datagen.corpus_header(spec, kind), sort_keys=True)]
    if kind == "plans":
        config = datagen.default_config()
        for tree in datagen.gen_plans(spec, count, config):
            lines.append(json.dumps(
                {"plan": json.loads(serialize_plan(tree)),
                 "config": config}, sort_keys=True))
    elif kind == "latency":
        for row in datagen.gen_latency_corpus(spec, n_templates=templates,
                                              n_configs=configs, seed=seed):
            lines.append(json.dumps(row, sort_keys=True))
    else:
        rows, cluster_map = datagen.gen_classification_corpus(
            spec, n_templates=templates, n_clusters=clusters,
            instances_per_template=configs, seed=seed)
        lines.append(json.dumps({"type": "cluster-map", "map": cluster_map},
                                sort_keys=True))
        lines.extend(json.dumps(r, sort_keys=True) for r in rows)
    p = _write_out("\n".join(lines) + "\n", output)
    catalog_path = None
    if p is not None:
        catalog_path = Path(str(p) + ".catalog.jsonl")
        catalog_path.write_text(datagen.catalog_jsonl(spec))
    _finish(man, [p, catalog_path], manifest_path)


def _load_corpus(path: str) -> tuple[dict | None, list[dict], dict | None]:
    """(meta header, data rows, cluster map) from a corpus JSONL file."""
    meta, cluster_map, rows = None, None, []
    for line in _read(path).splitlines():
        line = line.strip()
        if not line:
            continue
        d = json.loads(line)
        if d.get("type") == "meta":
            meta = d
        elif d.get("type") == "cluster-map":
            cluster_map = d["map"]
        else:
            rows.append(d)
    return meta, rows, cluster_map


@cli.command("build-pairs")
@click.argument("plans_path")
@click.option("-n", "--count", default=2200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--restarts", default=4, show_default=True)
@click.option("-o", "--output", required=True)
@manifest_option
def build_pairs(plans_path, count, seed, restarts, output, manifest_path):
    """Similarity-scored plan pairs with train/dev/test split tags."""
    man = RunManifest("build-pairs", seed=seed,
                      config={"count": count, "restarts": restarts})
    man.add_input(plans_path)
    _, rows, _ = _load_corpus(plans_path)
    plans = [deserialize_plan(r["plan"]) for r in rows]
    pair_rows = datagen.build_pair_dataset(plans, count, seed=seed,
                                           restarts=restarts)
    text = "\n".join(json.dumps(r, sort_keys=True) for r in pair_rows) + "\n"
    p = _write_out(text, output)
    _finish(man, [p], manifest_path)


@cli.command("pretrain-structure")
@click.argument("pairs_path")
@click.option("-o", "--output", required=True, help="Checkpoint path.")
@click.option("--epochs", default=50, show_default=True)
@click.option("--d-model", default=128, show_default=True)
@click.option("--layers", default=2, show_default=True)
@click.option("--heads", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@manifest_option
def pretrain_structure(pairs_path, output, epochs, d_model, layers, heads,
                       seed, manifest_path):
    """Pretrain the structural encoder on pair-similarity regression."""
    man = RunManifest("pretrain-structure", seed=seed,
                      config={"epochs": epochs, "d_model": d_model,
                              "layers": layers, "heads": heads})
    man.add_input(pairs_path)
    rows = [json.loads(line) for line in _read(pairs_path).splitlines()
            if line.strip()]
    enc = structure.train_ppsr(rows, seed=seed, epochs=epochs,
                               d_model=d_model, layers=layers, heads=heads)
    enc.save(output)
    man.add_checkpoint("structure", enc.params_hash())
    man.extra["best_dev_mae"] = enc.best_dev_mae_
    _finish(man, [Path(output)], manifest_path)


def _group_models_dir(directory) -> dict[str, perf.PerfGroupModel]:
    models = {}
    for path in sorted(Path(directory).glob("*.ckpt")):
        model = perf.PerfGroupModel.load(path)
        models[model.group] = model
    if not models:
        raise MissingCheckpoint(f"no perf checkpoints in {directory}")
    return models


def _perf_rows(plans_path: str, catalog_path: str) -> list[perf.FeatureBundle]:
    catalog = load_catalog(_read(catalog_path))
    _, rows, _ = _load_corpus(plans_path)
    schema = FeatureSchema.default()
    bundles = []
    for r in rows:
        tree = deserialize_plan(r["plan"])
        bundles.extend(perf.build_training_rows(tree, catalog, r["config"],
                                                schema=schema))
    return bundles


@cli.command("pretrain-perf")
@click.argument("plans_path")
@click.option("--catalog", "catalog_path", required=True)
@click.option("-o", "--output", required=True, help="Checkpoint directory.")
@click.option("--epochs", default=300, show_default=True)
@click.option("--seed", default=0, show_default=True)
@manifest_option
def pretrain_perf(plans_path, catalog_path, output, epochs, seed,
                  manifest_path):
    """Train the per-group performance encoders jointly on all three labels."""
    man = RunManifest("pretrain-perf", seed=seed, config={"epochs": epochs})
    man.add_input(plans_path)
    man.add_input(catalog_path)
    bundles = _perf_rows(plans_path, catalog_path)
    models = perf.joint_train(bundles, seed=seed, epochs=epochs)
    outdir = Path(output)
    outdir.mkdir(parents=True, exist_ok=True)
    report = {}
    paths = []
    for group, model in models.items():
        path = outdir / f"{group.lower()}.ckpt"
        model.save(path)
        paths.append(path)
        man.add_checkpoint(group, model.params_hash())
        report[group] = model.test_mae_
    report_path = outdir / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    paths.append(report_path)
    _finish(man, paths, manifest_path)


@cli.command("finetune")
@click.option("--kind", type=click.Choice(["structure", "perf"]),
              required=True)
@click.option("--checkpoint", "ckpt", required=True,
              help="Structure checkpoint file or perf checkpoint directory.")
@click.argument("data_path")
@click.option("--catalog", "catalog_path", default=None)
@click.option("--fractions", default="0.1,0.3,1.0", show_default=True)
@click.option("--epochs", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--output", required=True, help="Report JSON path.")
@manifest_option
def finetune(kind, ckpt, data_path, catalog_path, fractions, epochs, seed,
             output, manifest_path):
    """Compare pretrained-and-tuned models against from-scratch training."""
    fracs = [float(f) for f in fractions.split(",")]
    man = RunManifest("finetune", seed=seed,
                      config={"kind": kind, "fractions": fracs,
                              "epochs": epochs})
    man.add_input(data_path)
    if kind == "structure":
        enc = structure.StructureEncoder.load(ckpt)
        man.add_checkpoint("structure", enc.params_hash())
        rows = [json.loads(line) for line in _read(data_path).splitlines()
                if line.strip()]
        data_rows = [r for r in rows if r.get("type") != "meta"]
        train_rows = [r for r in data_rows if r.get("split", "train") == "train"]
        other_rows = [r for r in data_rows if r.get("split", "train") != "train"]
        sub_rng = np.random.default_rng(seed)
        report = []
        for fraction in fracs:
            n = max(1, int(round(fraction * len(train_rows))))
            idx = sub_rng.permutation(len(train_rows))[:n]
            sub_rows = [train_rows[i] for i in idx] + other_rows
            for mode in ("finetune-all", "fixed-features", "scratch"):
                if mode == "scratch":
                    model = structure.train_ppsr(
                        sub_rows, seed=seed, epochs=epochs,
                        d_model=enc.d_model, layers=enc.layers,
                        heads=enc.heads)
                else:
                    model = structure.finetune_structure(
                        enc, rows, fraction=fraction, mode=mode, seed=seed,
                        epochs=epochs)
                report.append({"fraction": fraction, "mode": mode,
                               "dev_mae": model.best_dev_mae_})
    else:
        if not catalog_path:
            raise click.UsageError("--catalog is required for perf finetune")
        man.add_input(catalog_path)
        models = _group_models_dir(ckpt)
        bundles = _perf_rows(data_path, catalog_path)
        report = perf.finetune_perf(models, bundles, fracs, seed=seed,
                                    epochs=epochs)
    p = _write_out(json.dumps(report, indent=2, sort_keys=True) + "\n", output)
    _finish(man, [p], manifest_path)


def _embed_corpus(rows, enc, models, catalog):
    """(S, C, settings, plans) matrices for downstream corpus rows."""
    schema = FeatureSchema.default()
    plans = [deserialize_plan(r["plan"]) for r in rows]
    S = enc.transform(plans)
    C = np.stack([perf.perf_embed_plan(t, catalog, r["config"], models,
                                       schema=schema)
                  for t, r in zip(plans, rows)])
    settings = np.stack([extract_db_features(r["config"]) for r in rows])
    return S, C, settings, plans


@cli.command("train-latency")
@click.argument("corpus_path")
@click.option("--structure-ckpt", required=True)
@click.option("--perf-dir", required=True)
@click.option("--catalog", "catalog_path", required=True)
@click.option("--epochs", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--output", required=True, help="Checkpoint path.")
@manifest_option
def train_latency(corpus_path, structure_ckpt, perf_dir, catalog_path,
                  epochs, seed, output, manifest_path):
    """Train the latency predictor over the frozen encoders."""
    man = RunManifest("train-latency", seed=seed, config={"epochs": epochs})
    for pth in (corpus_path, catalog_path):
        man.add_input(pth)
    enc = structure.StructureEncoder.load(structure_ckpt)
    models = _group_models_dir(perf_dir)
    catalog = load_catalog(_read(catalog_path))
    _, rows, _ = _load_corpus(corpus_path)
    S, C, settings, _ = _embed_corpus(rows, enc, models, catalog)
    latency = np.array([r["latency"] for r in rows])
    model = LatencyModel(epochs=epochs, seed=seed)
    model.fit(S, C, settings, latency)
    model.save(output)
    man.add_checkpoint("latency", model.params_hash())
    templates = [r["template"] for r in rows]
    report = model.report(S, C, settings, latency, templates)
    report_path = Path(str(output) + ".report.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _finish(man, [Path(output), report_path], manifest_path)


@cli.command("train-classifier")
@click.argument("corpus_path")
@click.option("--structure-ckpt", required=True)
@click.option("--perf-dir", required=True)
@click.option("--catalog", "catalog_path", required=True)
@click.option("--epochs", default=100, show_default=True)
@click.option("--lam", default=1.0, show_default=True,
              help="Weight of the cluster loss term.")
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--output", required=True, help="Checkpoint path.")
@manifest_option
def train_classifier(corpus_path, structure_ckpt, perf_dir, catalog_path,
                     epochs, lam, seed, output, manifest_path):
    """Train the template/cluster classifier over the frozen encoders."""
    man = RunManifest("train-classifier", seed=seed,
                      config={"epochs": epochs, "lam": lam})
    for pth in (corpus_path, catalog_path):
        man.add_input(pth)
    enc = structure.StructureEncoder.load(structure_ckpt)
    models = _group_models_dir(perf_dir)
    catalog = load_catalog(_read(catalog_path))
    _, rows, cluster_map = _load_corpus(corpus_path)
    if cluster_map is None:
        raise PlanEncError("corpus has no cluster map")
    S, C, settings, _ = _embed_corpus(rows, enc, models, catalog)
    templates = [r["template"] for r in rows]
    clf = TemplateClassifier(epochs=epochs, lam=lam, seed=seed)
    clf.fit(S, C, templates, cluster_map)
    clf.save(output)
    man.extra["train_accuracy"] = clf.score(S, C, templates)
    _finish(man, [Path(output)], manifest_path)


@cli.command("predict-latency")
@click.argument("plan_path")
@click.option("--config", "config_path", required=True,
              help="JSON file of database settings.")
@click.option("--checkpoint", "ckpt", required=True)
@click.option("--structure-ckpt", required=True)
@click.option("--perf-dir", required=True)
@click.option("--catalog", "catalog_path", required=True)
def predict_latency(plan_path, config_path, ckpt, structure_ckpt, perf_dir,
                    catalog_path):
    """Predict latency for one plan under one configuration."""
    enc = structure.StructureEncoder.load(structure_ckpt)
    models = _group_models_dir(perf_dir)
    catalog = load_catalog(_read(catalog_path))
    config = json.loads(_read(config_path))
    tree = load_plan(_read(plan_path))
    model = LatencyModel.load(ckpt)
    S = enc.transform([tree])
    C = perf.perf_embed_plan(tree, catalog, config, models)[None, :]
    settings = extract_db_features(config)[None, :]
    pred = model.predict(S, C, settings)
    click.echo(json.dumps({"latency": float(pred[0])}))


@cli.command("classify")
@click.argument("plan_path")
@click.option("--config", "config_path", required=True)
@click.option("--checkpoint", "ckpt", required=True)
@click.option("--structure-ckpt", required=True)
@click.option("--perf-dir", required=True)
@click.option("--catalog", "catalog_path", required=True)
@click.option("--top", default=3, show_default=True)
def classify(plan_path, config_path, ckpt, structure_ckpt, perf_dir,
             catalog_path, top):
    """Predict the query template and cluster for one plan."""
    enc = structure.StructureEncoder.load(structure_ckpt)
    models = _group_models_dir(perf_dir)
    catalog = load_catalog(_read(catalog_path))
    config = json.loads(_read(config_path))
    tree = load_plan(_read(plan_path))
    clf = TemplateClassifier.load(ckpt)
    S = enc.transform([tree])
    C = perf.perf_embed_plan(tree, catalog, config, models)[None, :]
    pt, pc = clf.predict_proba(S, C)
    t_order = np.argsort(pt[0])[::-1][:top]
    c_order = np.argsort(pc[0])[::-1][:top]
    click.echo(json.dumps({
        "templates": [{"template": clf.templates_[i], "prob": float(pt[0][i])}
                      for i in t_order],
        "clusters": [{"cluster": clf.clusters_[i], "prob": float(pc[0][i])}
                     for i in c_order],
    }, indent=2))


@cli.command("report")
@click.argument("manifest_or_report")
def report(manifest_or_report):
    """Pretty-print a run manifest or report JSON."""
    doc = json.loads(_read(manifest_or_report))
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except (MissingCheckpoint, ArchitectureMismatch) as exc:
        click.echo(f"checkpoint error: {exc}", err=True)
        return 3
    except (PlanEncError, FileNotFoundError, json.JSONDecodeError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
