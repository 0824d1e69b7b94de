"""``ooc``: one binary, subcommand per pipeline stage.

    ooc synth     generate a planted synthetic corpus (manifest + EMB1 files)
    ooc mine      mine mismatches and write the balanced training pairs file
    ooc build     same assembly for an evaluation split (dev defaults, 50/50)
    ooc train     train the fusion head (joint or per-topic experts)
    ooc evaluate  score pairs, write predictions CSV + metrics report JSON
    ooc cluster   spherical k-means per topic + TF-IDF names + cross tags
    ooc report    recompute reports from an existing predictions CSV

Every stochastic stage takes the run seed; identical inputs and seed give
byte-identical outputs.  Exit status: 0 success, 1 validation or
configuration error, 2 internal error.
"""
from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import analytics, detector, metrics, mismatch, store, synth
from .config import RunConfig, load_config
from .errors import ConfigError, OocError


def _cfg(config_path: str | None) -> RunConfig:
    return load_config(config_path)


def _pick(flag, cfg_value, default=None):
    if flag is not None:
        return flag
    if cfg_value is not None:
        return cfg_value
    return default


def _need(value, what: str):
    if value is None:
        raise ConfigError(f"{what} is required (flag or config)")
    return value


def _load_norm_matrix(path: str) -> store.EmbeddingMatrix:
    return store.load_matrix(path).normalize()


@click.group()
def cli():
    """Out-of-context pair detection pipeline."""


@cli.command("synth")
@click.option("--config", type=click.Path(), default=None, help="Run config file.")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--samples", default=1000, show_default=True, type=int)
@click.option("--dim", default=64, show_default=True, type=int)
@click.option("--blobs-per-topic", default=3, show_default=True, type=int)
@click.option("--seed", default=None, type=int)
def synth_cmd(config, out, samples, dim, blobs_per_topic, seed):
    """Generate a planted synthetic corpus under OUT."""
    cfg = _cfg(config)
    corpus = synth.generate(synth.SynthConfig(
        samples=samples, d=dim, blobs_per_topic=blobs_per_topic,
        seed=_pick(seed, None, cfg.seed),
    ))
    paths = synth.write_corpus(corpus, out)
    per_split: dict[str, int] = {}
    for rec in corpus.records:
        per_split[rec.split] = per_split.get(rec.split, 0) + 1
    click.echo(f"wrote {len(corpus.records)} samples to {out}")
    for name, path in paths.items():
        click.echo(f"  {name}: {path}")
    click.echo("splits: " + ", ".join(f"{s}={per_split[s]}" for s in sorted(per_split)))


def _build_pairs(config, manifest, text_emb, ratio_hard, cross_topic, seed,
                 split, topic_scope, out) -> None:
    cfg = _cfg(config)
    manifest_path = _need(_pick(manifest, cfg.manifest), "--manifest")
    text_path = _need(_pick(text_emb, cfg.text_emb), "--text-emb")
    ratio = _pick(ratio_hard, None, cfg.ratio_hard)
    cross = _pick(cross_topic, None, cfg.cross_topic_count)
    run_seed = _pick(seed, None, cfg.seed)
    scope = _pick(topic_scope, None, cfg.topic_scope)
    out_path = _need(_pick(out, cfg.pairs), "--out")

    records = [r for r in store.load_manifest(manifest_path) if r.split == split]
    if not records:
        raise ConfigError(f"no samples with split {split!r} in {manifest_path}")
    texts = _load_norm_matrix(text_path)
    dataset = mismatch.build_dataset(
        records, texts, ratio_hard=ratio, cross_topic_count=cross,
        seed=run_seed, topic_scope=scope,
    )
    mismatch.save_pairs(dataset.pairs, out_path)

    topic_of = {r.id: r.topic for r in records}
    rows: dict[str, dict[str, int]] = {}
    for p in dataset.pairs:
        if p.method == mismatch.METHOD_CROSS_TOPIC:
            row = rows.setdefault("cross_topic", {"pristine": 0, "random": 0, "hard": 0})
            row["random"] += 1  # cross-topic mismatches are random-only
            row["pristine"] += 1  # balanced by pristine repeats
            continue
        if p.label == mismatch.LABEL_FALSIFIED:
            row = rows.setdefault(topic_of[p.caption_id], {"pristine": 0, "random": 0, "hard": 0})
            row[p.method] += 1
            row["pristine"] += 1  # one falsified pair per pristine caption

    click.echo(f"{'topic':<14}{'pristine':>10}{'random':>10}{'hard':>10}")
    for topic in sorted(rows):
        row = rows[topic]
        hard = "-" if topic == "cross_topic" else str(row["hard"])
        click.echo(f"{topic:<14}{row['pristine']:>10}{row['random']:>10}{hard:>10}")
    n_pairs = len(dataset.pairs)
    click.echo(f"total pairs: {n_pairs} ({n_pairs // 2} pristine / {n_pairs // 2} falsified)")
    click.echo(f"pairs written to {out_path}")


@cli.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--text-emb", type=click.Path(), default=None)
@click.option("--ratio-hard", type=float, default=None)
@click.option("--cross-topic", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--split", default="train", show_default=True,
              type=click.Choice(store.SPLITS))
@click.option("--topic-scope", default=None, type=click.Choice(["joint", "per_topic"]))
@click.option("--out", type=click.Path(), default=None)
def mine(config, manifest, text_emb, ratio_hard, cross_topic, seed, split, topic_scope, out):
    """Mine mismatches and write the balanced training pairs file."""
    _build_pairs(config, manifest, text_emb, ratio_hard, cross_topic, seed,
                 split, topic_scope, out)


@cli.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--text-emb", type=click.Path(), default=None)
@click.option("--ratio-hard", type=float, default=0.5, show_default=True,
              help="Evaluation sets default to a 50-50 random/hard mix.")
@click.option("--cross-topic", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--split", default="dev", show_default=True, type=click.Choice(store.SPLITS))
@click.option("--topic-scope", default=None, type=click.Choice(["joint", "per_topic"]))
@click.option("--out", type=click.Path(), default=None)
def build(config, manifest, text_emb, ratio_hard, cross_topic, seed, split, topic_scope, out):
    """Assemble a balanced evaluation pairs file (dev split by default)."""
    _build_pairs(config, manifest, text_emb, ratio_hard, cross_topic, seed,
                 split, topic_scope, out)


@cli.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--pairs", type=click.Path(), default=None)
@click.option("--text-emb", type=click.Path(), default=None)
@click.option("--img-emb", type=click.Path(), default=None)
@click.option("--manifest", type=click.Path(), default=None,
              help="Needed for per-topic expert training.")
@click.option("--model-out", type=click.Path(), default=None)
@click.option("--loss-out", type=click.Path(), default=None)
@click.option("--fusion", default=None, type=click.Choice(detector.FUSIONS))
@click.option("--hidden-width", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--topic-scope", default=None, type=click.Choice(["joint", "per_topic"]))
def train(config, pairs, text_emb, img_emb, manifest, model_out, loss_out, fusion,
          hidden_width, epochs, lr, batch_size, seed, topic_scope):
    """Train the fusion classifier head on a pairs file."""
    cfg = _cfg(config)
    pairs_path = _need(_pick(pairs, cfg.pairs), "--pairs")
    text_path = _need(_pick(text_emb, cfg.text_emb), "--text-emb")
    img_path = _need(_pick(img_emb, cfg.img_emb), "--img-emb")
    model_path = _need(_pick(model_out, cfg.model), "--model-out")
    scope = _pick(topic_scope, None, cfg.topic_scope)

    all_pairs = mismatch.load_pairs(pairs_path)
    txt = _load_norm_matrix(text_path)
    img = _load_norm_matrix(img_path)
    run_seed = _pick(seed, None, cfg.seed)
    train_cfg = detector.TrainConfig(
        learning_rate=_pick(lr, None, cfg.learning_rate),
        epochs=_pick(epochs, None, cfg.epochs),
        batch_size=_pick(batch_size, None, cfg.batch_size),
        seed=run_seed,
    )
    fusion_name = _pick(fusion, None, cfg.fusion)
    width = _pick(hidden_width, cfg.hidden_width, txt.d)

    jobs: list[tuple[str, list[mismatch.LabeledPair], Path]] = []
    model_path = Path(model_path)
    if scope == "joint":
        jobs.append(("joint", all_pairs, model_path))
    else:
        manifest_path = _need(_pick(manifest, cfg.manifest), "--manifest")
        topic_of = {r.id: r.topic for r in store.load_manifest(manifest_path)}
        by_topic: dict[str, list[mismatch.LabeledPair]] = {}
        for p in all_pairs:
            try:
                by_topic.setdefault(topic_of[p.caption_id], []).append(p)
            except KeyError:
                raise ConfigError(
                    f"caption {p.caption_id!r} from {pairs_path} missing in manifest"
                ) from None
        for topic in sorted(by_topic):
            jobs.append((
                topic, by_topic[topic],
                model_path.with_suffix(f".{topic}{model_path.suffix or '.json'}"),
            ))

    loss_rows: list[tuple[str, int, float]] = []
    for scope_name, scoped_pairs, out_path in jobs:
        model = detector.init_model(txt.d, fusion_name, width, run_seed)
        trained, trace = detector.train(model, scoped_pairs, img, txt, train_cfg)
        detector.save_model(trained, out_path)
        for epoch, loss in enumerate(trace, start=1):
            loss_rows.append((scope_name, epoch, loss))
        click.echo(
            f"{scope_name}: {len(scoped_pairs)} pairs, "
            f"loss {trace[0]:.6f} -> {trace[-1]:.6f}, model {out_path}"
        )
    if loss_out is None:
        loss_out = str(model_path) + ".loss.csv"
    with Path(loss_out).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scope", "epoch", "mean_loss"])
        for scope_name, epoch, loss in loss_rows:
            writer.writerow([scope_name, epoch, repr(loss)])
    click.echo(f"loss trace written to {loss_out}")


def _method_subsets(preds, pairs, topic_of):
    """Subset per falsification method: falsified pairs of that method plus
    one pristine pair per involved caption (the paper's breakout rule)."""
    pristine_by_caption: dict[str, metrics.ScoredPair] = {}
    for sp, p in zip(preds, pairs):
        if p.label == mismatch.LABEL_PRISTINE and sp.caption_id not in pristine_by_caption:
            pristine_by_caption[sp.caption_id] = sp
    subsets: dict[str, list[metrics.ScoredPair]] = {}

    def add(key: str, sp: metrics.ScoredPair) -> None:
        subsets.setdefault(key, []).append(sp)

    for sp, p in zip(preds, pairs):
        if p.label != mismatch.LABEL_FALSIFIED:
            continue
        topic = topic_of.get(p.caption_id)
        keys = [f"method/{p.method}"]
        if topic:
            keys.append(f"topic_method/{topic}/{p.method}")
        for key in keys:
            add(key, sp)
            pristine = pristine_by_caption.get(sp.caption_id)
            if pristine is not None:
                add(key, pristine)
    return subsets


def _summarize_subsets(subsets) -> dict:
    out = {}
    for key in sorted(subsets):
        preds = subsets[key]
        labels = [sp.label for sp in preds]
        if len(set(labels)) < 2:
            continue
        out[key] = dict(
            metrics.summarize([sp.score for sp in preds], labels).to_dict(),
            n=len(preds),
        )
    return out


def _breakout_section(preds, pairs, topic_of, coverage_bucket_of, groups, cluster_args):
    section: dict = {}
    nested = _summarize_subsets(_method_subsets(preds, pairs, topic_of))
    for key, value in nested.items():
        head, _, rest = key.partition("/")
        section.setdefault(head, {})[rest] = value

    if topic_of:
        rep = metrics.breakout(preds, topic_of)
        section["topic"] = rep.to_dict()["groups"]
    if coverage_bucket_of is not None:
        rep = metrics.grouped_summaries(
            preds, lambda sp: coverage_bucket_of.get(sp.image_id)
        )
        section["ocr_bucket"] = rep.to_dict()["groups"]
    if groups is not None:
        rep = metrics.breakout(preds, groups)
        section["group"] = rep.to_dict()["groups"]
    if cluster_args is not None:
        assignments, image_owner = cluster_args
        tags = analytics.tag_cross_cluster(pairs, assignments, image_owner)
        subsets: dict[str, list[metrics.ScoredPair]] = {}
        pristine_by_caption: dict[str, metrics.ScoredPair] = {}
        for sp, p in zip(preds, pairs):
            if p.label == mismatch.LABEL_PRISTINE and sp.caption_id not in pristine_by_caption:
                pristine_by_caption[sp.caption_id] = sp
        for sp, p, tag in zip(preds, pairs, tags):
            if p.method != mismatch.METHOD_HARD:
                continue
            subsets.setdefault(tag, []).append(sp)
            pristine = pristine_by_caption.get(sp.caption_id)
            if pristine is not None:
                subsets[tag].append(pristine)
        section["cluster_tag"] = _summarize_subsets(subsets)
    return section


@cli.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--pairs", type=click.Path(), default=None)
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--text-emb", type=click.Path(), default=None)
@click.option("--img-emb", type=click.Path(), default=None)
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--ocr", type=click.Path(), default=None)
@click.option("--groups", type=click.Path(), default=None)
@click.option("--clusters", type=click.Path(), default=None,
              help="Cluster assignments JSONL for within/cross breakouts.")
@click.option("--pred-out", type=click.Path(), default=None)
@click.option("--report-out", type=click.Path(), default=None)
@click.option("--coverage-out", type=click.Path(), default=None)
@click.option("--roc-out", type=click.Path(), default=None)
def evaluate(config, pairs, model_path, text_emb, img_emb, manifest, ocr, groups,
             clusters, pred_out, report_out, coverage_out, roc_out):
    """Score pairs with a trained model; write predictions and metric reports.

    The report always carries a zero-shot baseline section since both
    embedding stores are present for scoring.
    """
    cfg = _cfg(config)
    pairs_path = _need(_pick(pairs, cfg.pairs), "--pairs")
    model_file = _need(_pick(model_path, cfg.model), "--model")
    text_path = _need(_pick(text_emb, cfg.text_emb), "--text-emb")
    img_path = _need(_pick(img_emb, cfg.img_emb), "--img-emb")
    manifest_path = _pick(manifest, cfg.manifest)
    ocr_path = _pick(ocr, cfg.ocr)
    report_path = _pick(report_out, cfg.reports)

    eval_pairs = mismatch.load_pairs(pairs_path)
    if not eval_pairs:
        raise ConfigError(f"no pairs in {pairs_path}")
    txt = _load_norm_matrix(text_path)
    img = _load_norm_matrix(img_path)
    model = detector.load_model(model_file)

    scores = detector.score_pairs(model, eval_pairs, img, txt)
    preds = [
        metrics.ScoredPair(p.caption_id, p.image_id, float(s), p.label)
        for p, s in zip(eval_pairs, scores)
    ]
    if pred_out is not None:
        metrics.write_predictions(preds, pred_out)
        click.echo(f"predictions written to {pred_out}")

    # Zero-shot dot product is pristine-oriented; negate for the
    # falsified-positive ROC convention.
    zs = detector.zero_shot_scores(eval_pairs, img, txt)
    zs_preds = [
        metrics.ScoredPair(p.caption_id, p.image_id, float(-s), p.label)
        for p, s in zip(eval_pairs, zs)
    ]

    topic_of: dict[str, str] = {}
    image_owner: dict[str, str] = {}
    if manifest_path is not None:
        records = store.load_manifest(manifest_path)
        topic_of = {r.id: r.topic for r in records}
        image_owner = {r.image_id: r.id for r in records}

    coverage_bucket_of = None
    if ocr_path is not None:
        ocr_records = store.load_ocr(ocr_path)
        coverage_bucket_of = {
            rec.image_id: analytics.bucket(analytics.ocr_coverage(rec))
            for rec in ocr_records
        }
        if coverage_out is not None:
            with Path(coverage_out).open("w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["image_id", "coverage", "bucket"])
                for rec in ocr_records:
                    cov = analytics.ocr_coverage(rec)
                    writer.writerow([rec.image_id, repr(cov), analytics.bucket(cov)])
            click.echo(f"coverage written to {coverage_out}")

    group_of = synth.load_groups(groups) if groups is not None else None
    cluster_args = None
    if clusters is not None:
        if manifest_path is None:
            raise ConfigError("--clusters breakout needs --manifest for image owners")
        cluster_args = (analytics.load_assignments(clusters), image_owner)

    report = {}
    for name, section_preds in (("model", preds), ("zero_shot", zs_preds)):
        labels = [sp.label for sp in section_preds]
        report[name] = {
            "global": metrics.summarize([sp.score for sp in section_preds], labels).to_dict(),
            "breakouts": _breakout_section(
                section_preds, eval_pairs, topic_of, coverage_bucket_of,
                group_of, cluster_args,
            ),
        }
    if report_path is not None:
        metrics.write_report(report, report_path)
        click.echo(f"report written to {report_path}")
    if roc_out is not None:
        curve = metrics.roc([sp.score for sp in preds], [sp.label for sp in preds])
        metrics.write_roc_csv(curve, roc_out)
        click.echo(f"ROC dump written to {roc_out}")

    g_model = report["model"]["global"]
    g_zs = report["zero_shot"]["global"]
    click.echo(
        f"model:     acc@eer {g_model['acc_at_eer']:.4f}  "
        f"pd@eer {g_model['pd_at_eer']:.4f}  pd@0.1far {g_model['pd_at_far01']:.4f}"
    )
    click.echo(
        f"zero-shot: acc@eer {g_zs['acc_at_eer']:.4f}  "
        f"pd@eer {g_zs['pd_at_eer']:.4f}  pd@0.1far {g_zs['pd_at_far01']:.4f}"
    )


@cli.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--text-emb", type=click.Path(), default=None)
@click.option("--k", "k_override", type=int, default=None,
              help="Cluster count for every topic (overrides per-topic config).")
@click.option("--seed", type=int, default=None)
@click.option("--assignments-out", type=click.Path(), default=None)
@click.option("--summary-out", type=click.Path(), default=None)
@click.option("--pairs", type=click.Path(), default=None,
              help="Optional pairs file to tag with within/cross status.")
@click.option("--tagged-out", type=click.Path(), default=None)
def cluster(config, manifest, text_emb, k_override, seed, assignments_out,
            summary_out, pairs, tagged_out):
    """Cluster tweet texts per topic and name clusters by TF-IDF words."""
    cfg = _cfg(config)
    manifest_path = _need(_pick(manifest, cfg.manifest), "--manifest")
    text_path = _need(_pick(text_emb, cfg.text_emb), "--text-emb")
    assignments_path = _need(assignments_out, "--assignments-out")
    run_seed = _pick(seed, None, cfg.seed)

    records = store.load_manifest(manifest_path)
    texts = _load_norm_matrix(text_path)
    by_topic: dict[str, list[store.SampleRecord]] = {}
    for rec in records:
        by_topic.setdefault(rec.topic, []).append(rec)

    assignments: dict[str, int] = {}
    summary: list[dict] = []
    offset = 0
    for topic in sorted(by_topic):
        topic_records = sorted(by_topic[topic], key=lambda r: r.id)
        k = k_override if k_override is not None else cfg.cluster_k.get(topic, 20)
        sub = texts.subset([r.id for r in topic_records])
        model = analytics.cluster_texts(sub, k=k, seed=run_seed)
        texts_per_cluster: list[list[str]] = [[] for _ in range(k)]
        for rec in topic_records:
            texts_per_cluster[model.assignments[rec.id]].append(rec.text)
        top_words = analytics.cluster_top_words(texts_per_cluster)
        for local in range(k):
            global_idx = offset + local
            size = sum(1 for c in model.assignments.values() if c == local)
            summary.append({
                "cluster": global_idx,
                "topic": topic,
                "name": analytics.cluster_name(global_idx, top_words[local]),
                "size": size,
                "top_words": [{"word": w, "score": s} for w, s in top_words[local]],
            })
        for sid, c in model.assignments.items():
            assignments[sid] = offset + c
        offset += k

    with Path(assignments_path).open("w", encoding="utf-8") as fh:
        for rec in records:  # manifest order
            fh.write(json.dumps({"id": rec.id, "cluster": assignments[rec.id]}) + "\n")
    click.echo(f"assignments written to {assignments_path}")
    if summary_out is not None:
        Path(summary_out).write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        click.echo(f"cluster summary written to {summary_out}")

    if pairs is not None:
        pair_list = mismatch.load_pairs(pairs)
        image_owner = {r.image_id: r.id for r in records}
        topic_of = {r.id: r.topic for r in records}
        tags = analytics.tag_cross_cluster(pair_list, assignments, image_owner)
        if tagged_out is not None:
            with Path(tagged_out).open("w", encoding="utf-8") as fh:
                for p, tag in zip(pair_list, tags):
                    fh.write(json.dumps({
                        "caption_id": p.caption_id, "image_id": p.image_id,
                        "label": p.label, "method": p.method, "cluster_tag": tag,
                    }) + "\n")
            click.echo(f"tagged pairs written to {tagged_out}")
        stats = analytics.cross_cluster_stats(pair_list, tags, topic_of)
        click.echo(f"{'topic':<12}{'method':<14}{'total':>8}{'# cross':>10}{'% cross_cluster':>18}")
        for topic in sorted(stats):
            for method in sorted(stats[topic]):
                cell = stats[topic][method]
                click.echo(
                    f"{topic:<12}{method:<14}{cell['total']:>8}"
                    f"{cell['cross_cluster']:>10}{cell['pct_cross_cluster']:>17.2f}%"
                )


@cli.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--pred", type=click.Path(), required=True, help="Predictions CSV.")
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--ocr", type=click.Path(), default=None)
@click.option("--groups", type=click.Path(), default=None)
@click.option("--clusters", type=click.Path(), default=None)
@click.option("--pairs", type=click.Path(), default=None,
              help="Pairs file matching the predictions (for method breakouts).")
@click.option("--report-out", type=click.Path(), default=None)
@click.option("--csv-out", type=click.Path(), default=None)
@click.option("--roc-out", type=click.Path(), default=None)
def report(config, pred, manifest, ocr, groups, clusters, pairs, report_out,
           csv_out, roc_out):
    """Recompute metrics and breakouts from an existing predictions file."""
    cfg = _cfg(config)
    preds = metrics.load_predictions(pred)
    if not preds:
        raise ConfigError(f"no predictions in {pred}")
    manifest_path = _pick(manifest, cfg.manifest)

    topic_of: dict[str, str] = {}
    image_owner: dict[str, str] = {}
    if manifest_path is not None:
        records = store.load_manifest(manifest_path)
        topic_of = {r.id: r.topic for r in records}
        image_owner = {r.image_id: r.id for r in records}

    coverage_bucket_of = None
    ocr_path = _pick(ocr, cfg.ocr)
    if ocr_path is not None:
        coverage_bucket_of = {
            rec.image_id: analytics.bucket(analytics.ocr_coverage(rec))
            for rec in store.load_ocr(ocr_path)
        }
    group_of = synth.load_groups(groups) if groups is not None else None
    cluster_args = None
    pair_list = mismatch.load_pairs(pairs) if pairs is not None else None
    if pair_list is not None:
        if len(pair_list) != len(preds) or any(
            (p.caption_id, p.image_id, p.label) != (sp.caption_id, sp.image_id, sp.label)
            for p, sp in zip(pair_list, preds)
        ):
            raise ConfigError(f"{pairs} does not align row-for-row with {pred}")
    if clusters is not None:
        if manifest_path is None or pair_list is None:
            raise ConfigError("--clusters breakout needs --manifest and --pairs")
        cluster_args = (analytics.load_assignments(clusters), image_owner)

    labels = [sp.label for sp in preds]
    doc = {"global": metrics.summarize([sp.score for sp in preds], labels).to_dict()}
    if pair_list is not None:
        doc["breakouts"] = _breakout_section(
            preds, pair_list, topic_of, coverage_bucket_of, group_of, cluster_args
        )
    elif topic_of or coverage_bucket_of or group_of:
        section: dict = {}
        if topic_of:
            section["topic"] = metrics.breakout(preds, topic_of).to_dict()["groups"]
        if coverage_bucket_of is not None:
            section["ocr_bucket"] = metrics.grouped_summaries(
                preds, lambda sp: coverage_bucket_of.get(sp.image_id)
            ).to_dict()["groups"]
        if group_of is not None:
            section["group"] = metrics.breakout(preds, group_of).to_dict()["groups"]
        doc["breakouts"] = section

    if report_out is not None:
        metrics.write_report(doc, report_out)
        click.echo(f"report written to {report_out}")
    if csv_out is not None:
        metrics.flatten_report_csv(doc, csv_out)
        click.echo(f"flattened report written to {csv_out}")
    if roc_out is not None:
        curve = metrics.roc([sp.score for sp in preds], labels)
        metrics.write_roc_csv(curve, roc_out)
        click.echo(f"ROC dump written to {roc_out}")
    g = doc["global"]
    click.echo(
        f"global: acc@eer {g['acc_at_eer']:.4f}  pd@eer {g['pd_at_eer']:.4f}  "
        f"pd@0.1far {g['pd_at_far01']:.4f}  (n_pos {g['n_pos']}, n_neg {g['n_neg']})"
    )


def main(argv: list[str] | None = None) -> int:
    """Run the CLI; returns the process exit status instead of raising."""
    try:
        cli.main(args=argv, prog_name="ooc", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except OocError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return 2
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
