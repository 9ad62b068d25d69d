"""End-to-end orchestration shared by the CLI subcommands.

Each stage is side-effect-free outside its declared output directory, and
every run writes metadata (config, seed, input hashes) sufficient to
reproduce it exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import __about__
from ._binio import read_container, write_container
from .config import RunConfig
from .evaluation import (
    RANK_CUTOFFS,
    ClassificationReport,
    RankingReport,
    classify_eval,
    rank_eval,
    sweep,
)
from .graph import NodeUniverse, Schema, SnapshotSeries, SparseMatrix, load_schema, load_snapshots
from .objectives import (
    ClassificationLabels,
    InteractionSplit,
    eval_negative_sets,
    leave_one_out_split,
    load_labels,
)
from .optim import load_checkpoint, restore_params, save_checkpoint
from .training import EmbeddingModel, TrainResult, compute_embeddings, train
from .views import ViewSeries, build_views, parse_metapath

SNAPSHOT_MAGIC = b"DHSC"
SNAPSHOT_VERSION = 1
VIEWS_MAGIC = b"DHVC"
VIEWS_VERSION = 1


def _file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def input_digests(config: RunConfig) -> dict[str, str]:
    out = {
        "schema_sha256": _file_sha256(config.schema_path),
        "edges_sha256": _file_sha256(config.edges_path),
    }
    if config.labels_path:
        out["labels_sha256"] = _file_sha256(config.labels_path)
    return out


def _view_cache_key(config: RunConfig) -> str:
    digests = input_digests(config)
    payload = json.dumps(
        {
            "digests": digests,
            "task": config.task,
            "interaction_edge_type": config.interaction_edge_type,
            "views": config.views,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# -- snapshot cache ----------------------------------------------------------


def save_snapshot_cache(path: str, series: SnapshotSeries) -> None:
    schema = series.schema
    meta = {
        "node_types": list(schema.node_types),
        "edge_types": [[e.name, e.src, e.dst] for e in schema.edge_types],
        "ids_by_type": {t: list(series.universe.ids(t)) for t in schema.node_types},
        "n_steps": series.n_steps,
    }
    arrays = []
    for t in range(1, series.n_steps + 1):
        for e in schema.edge_types:
            rows, cols, vals = series.adjacency(t, e.name).entry_arrays()
            arrays.append((f"t{t}.{e.name}.rows", rows))
            arrays.append((f"t{t}.{e.name}.cols", cols))
            arrays.append((f"t{t}.{e.name}.vals", vals))
    write_container(path, SNAPSHOT_MAGIC, SNAPSHOT_VERSION, meta, arrays)


def load_snapshot_cache(path: str) -> SnapshotSeries:
    from .graph import EdgeType

    meta, arrays = read_container(path, SNAPSHOT_MAGIC, SNAPSHOT_VERSION)
    schema = Schema(
        tuple(meta["node_types"]),
        tuple(EdgeType(*triple) for triple in meta["edge_types"]),
    )
    universe = NodeUniverse(meta["ids_by_type"])
    snapshots = []
    for t in range(1, meta["n_steps"] + 1):
        per_type = {}
        for e in schema.edge_types:
            shape = (universe.size(e.src), universe.size(e.dst))
            per_type[e.name] = SparseMatrix.from_entries(
                shape[0],
                shape[1],
                arrays[f"t{t}.{e.name}.rows"],
                arrays[f"t{t}.{e.name}.cols"],
                arrays[f"t{t}.{e.name}.vals"],
            )
        snapshots.append(per_type)
    return SnapshotSeries(schema, universe, meta["n_steps"], tuple(snapshots))


# -- view cache --------------------------------------------------------------


def save_view_cache(path: str, views: Sequence[ViewSeries], cache_key: str) -> None:
    meta = {
        "cache_key": cache_key,
        "specs": [v.meta_path.spec for v in views],
        "n_steps": views[0].n_steps if views else 0,
        "kinds": [
            ["dense" if isinstance(m, np.ndarray) else "sparse" for m in v.matrices]
            for v in views
        ],
        "n_nodes": [v.n_nodes for v in views],
    }
    arrays = []
    for k, v in enumerate(views):
        for ti, m in enumerate(v.matrices, start=1):
            if isinstance(m, np.ndarray):
                arrays.append((f"v{k}.t{ti}.dense", m))
            else:
                rows, cols, vals = m.entry_arrays()
                arrays.append((f"v{k}.t{ti}.rows", rows))
                arrays.append((f"v{k}.t{ti}.cols", cols))
                arrays.append((f"v{k}.t{ti}.vals", vals))
    write_container(path, VIEWS_MAGIC, VIEWS_VERSION, meta, arrays)


def load_view_cache(path: str, schema: Schema, expected_key: str) -> Optional[list[ViewSeries]]:
    meta, arrays = read_container(path, VIEWS_MAGIC, VIEWS_VERSION)
    if meta.get("cache_key") != expected_key:
        return None
    views = []
    for k, spec in enumerate(meta["specs"]):
        mats = []
        n = meta["n_nodes"][k]
        for ti in range(1, meta["n_steps"] + 1):
            if meta["kinds"][k][ti - 1] == "dense":
                mats.append(arrays[f"v{k}.t{ti}.dense"])
            else:
                mats.append(
                    SparseMatrix.from_entries(
                        n,
                        n,
                        arrays[f"v{k}.t{ti}.rows"],
                        arrays[f"v{k}.t{ti}.cols"],
                        arrays[f"v{k}.t{ti}.vals"],
                    )
                )
        views.append(ViewSeries(spec, parse_metapath(spec, schema), tuple(mats)))
    return views


# -- prepared runs -----------------------------------------------------------


@dataclass
class PreparedRun:
    config: RunConfig
    schema: Schema
    series: SnapshotSeries
    views: list[ViewSeries]
    task_data: ClassificationLabels | InteractionSplit
    split: Optional[InteractionSplit]


def prepare(config: RunConfig, use_cache: bool = True) -> PreparedRun:
    """Load inputs, apply the task split, and build (or reload) the views."""
    config.validate()
    schema = load_schema(config.schema_path)
    series = load_snapshots(schema, config.edges_path)

    split: Optional[InteractionSplit] = None
    if config.task == "recommendation":
        split, view_series_source = leave_one_out_split(series, config.interaction_edge_type)
        task_data: ClassificationLabels | InteractionSplit = split
    else:
        view_series_source = series
        task_data = load_labels(config.labels_path, config.label_node_type, series.universe)

    cache_key = _view_cache_key(config)
    cache_path = os.path.join(config.effective_cache_dir(), f"views_{cache_key}.dhvc")
    views: Optional[list[ViewSeries]] = None
    if use_cache and os.path.isfile(cache_path):
        views = load_view_cache(cache_path, schema, cache_key)
    if views is None:
        views = build_views(view_series_source, config.views, workers=config.workers)
        if use_cache:
            os.makedirs(os.path.dirname(cache_path), exist_ok=True)
            save_view_cache(cache_path, views, cache_key)
    return PreparedRun(config, schema, series, views, task_data, split)


# -- artifacts ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_loss_trace(path: str, result: TrainResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "L_structure", "L_attention", "L_all"])
        for stats in result.trace:
            writer.writerow(
                [stats.epoch, _fmt(stats.structure), _fmt(stats.attention_task), _fmt(stats.combined)]
            )


def write_metadata(path: str, config: RunConfig, result: Optional[TrainResult]) -> None:
    entries = {
        "package_version": __about__.__version__,
        "task": config.task,
        "views": ",".join(config.views),
        "train_fraction": config.train_fraction,
        "label_node_type": config.label_node_type or "",
        "interaction_edge_type": config.interaction_edge_type or "",
        "classifier": "logistic",
        "initializer": "xavier_uniform",
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_epsilon": 1e-8,
        "workers": config.workers,
    }
    entries.update({f"hyper.{k}": v for k, v in config.hyper.as_dict().items()})
    entries.update(input_digests(config))
    if result is not None:
        entries["best_epoch"] = result.best_epoch
        entries["val_metric_name"] = result.val_metric_name or ""
        entries["val_metric_best"] = "" if result.best_metric is None else _fmt(result.best_metric)
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(entries):
            fh.write(f"{key}={entries[key]}\n")


def _external_ids(series: SnapshotSeries, node_type: str) -> tuple[str, ...]:
    return series.universe.ids(node_type)


def write_negative_sets(
    out_dir: str, series: SnapshotSeries, split: InteractionSplit, negatives: dict[str, np.ndarray]
) -> None:
    users = _external_ids(series, split.user_type)
    items = _external_ids(series, split.item_type)
    for name, pairs in (("val", split.val_pairs), ("test", split.test_pairs)):
        path = os.path.join(out_dir, f"eval_negatives_{name}.tsv")
        with open(path, "w", encoding="utf-8") as fh:
            for row, (u, pos) in enumerate(pairs):
                negs = "\t".join(items[i] for i in negatives[name][row])
                fh.write(f"{users[u]}\t{items[pos]}\t{negs}\n")


def checkpoint_meta(config: RunConfig, task_data) -> dict:
    meta = {
        "task": config.task,
        "views": config.views,
        "hyper": config.hyper.as_dict(),
    }
    if isinstance(task_data, ClassificationLabels):
        meta["n_classes"] = task_data.n_classes
        meta["class_names"] = list(task_data.class_names)
    else:
        meta["n_classes"] = None
    return meta


def run_train(config: RunConfig, resume_from: Optional[str] = None) -> TrainResult:
    prepared = prepare(config)
    os.makedirs(config.output_dir, exist_ok=True)
    rng = np.random.default_rng(config.hyper.seed)
    n_classes = (
        prepared.task_data.n_classes
        if isinstance(prepared.task_data, ClassificationLabels)
        else None
    )
    model = EmbeddingModel(prepared.views, config.hyper, rng, n_classes=n_classes)
    if resume_from is not None:
        _, arrays = load_checkpoint(resume_from)
        restore_params(model.named_params(), arrays)
    result = train(model, prepared.views, prepared.task_data, config.hyper, rng)

    save_checkpoint(
        os.path.join(config.output_dir, "checkpoint.dhck"),
        model.named_params(),
        checkpoint_meta(config, prepared.task_data),
    )
    write_loss_trace(os.path.join(config.output_dir, "loss_trace.csv"), result)
    write_metadata(os.path.join(config.output_dir, "run_metadata.txt"), config, result)
    config.save(os.path.join(config.output_dir, "config.json"))
    if prepared.split is not None and result.eval_negatives is not None:
        write_negative_sets(
            config.output_dir, prepared.series, prepared.split, result.eval_negatives
        )
    return result


def load_model(
    config: RunConfig, checkpoint_path: str, views: Sequence[ViewSeries]
) -> EmbeddingModel:
    meta, arrays = load_checkpoint(checkpoint_path)
    rng = np.random.default_rng(config.hyper.seed)
    model = EmbeddingModel(views, config.hyper, rng, n_classes=meta.get("n_classes"))
    restore_params(model.named_params(), arrays)
    return model


def _truncated(views: Sequence[ViewSeries], window: Optional[int]) -> list[ViewSeries]:
    if window is None:
        return list(views)
    return [v.truncate_to_last(window) for v in views]


def evaluate_prepared(
    prepared: PreparedRun, model: EmbeddingModel
) -> ClassificationReport | RankingReport:
    config = prepared.config
    views = _truncated(prepared.views, config.hyper.window)
    if isinstance(prepared.task_data, ClassificationLabels):
        labels = prepared.task_data
        emb, _ = compute_embeddings(model, views, labels.node_type)
        return classify_eval(
            emb,
            labels.node_indices,
            labels.class_ids,
            labels.class_names,
            config.train_fraction,
            config.hyper.seed,
        )
    split = prepared.task_data
    negatives = eval_negative_sets(split, config.hyper.neg_per_pos_eval, config.hyper.seed)
    user_emb, _ = compute_embeddings(model, views, split.user_type)
    item_emb, _ = compute_embeddings(model, views, split.item_type)
    return rank_eval(user_emb, item_emb, split.test_pairs, negatives["test"], RANK_CUTOFFS)


def write_classification_report(out_dir: str, report: ClassificationReport) -> None:
    csv_path = os.path.join(out_dir, "report_classification.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value", "train_fraction"])
        for row in report.rows():
            writer.writerow([row["metric"], _fmt(row["value"]), row["train_fraction"]])
    txt_path = os.path.join(out_dir, "report_classification.txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(f"classifier: {report.classifier}  repetitions: {report.n_repetitions}\n")
        fh.write(f"train_fraction: {report.train_fraction}\n")
        fh.write(f"{'metric':<24}{'value':>12}\n")
        for row in report.rows():
            fh.write(f"{row['metric']:<24}{row['value']:>12.4f}\n")


def write_ranking_report(out_dir: str, report: RankingReport) -> None:
    csv_path = os.path.join(out_dir, "report_recommendation.csv")
    header = [f"HR@{k}" for k in report.cutoffs] + [f"NDCG@{k}" for k in report.cutoffs]
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header + ["n_users"])
        writer.writerow(
            [_fmt(report.hr[k]) for k in report.cutoffs]
            + [_fmt(report.ndcg[k]) for k in report.cutoffs]
            + [report.n_users]
        )
    txt_path = os.path.join(out_dir, "report_recommendation.txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(f"{'metric':<12}{'value':>10}\n")
        for k in report.cutoffs:
            fh.write(f"{f'HR@{k}':<12}{report.hr[k]:>10.4f}\n")
        for k in report.cutoffs:
            fh.write(f"{f'NDCG@{k}':<12}{report.ndcg[k]:>10.4f}\n")
        fh.write(f"{'n_users':<12}{report.n_users:>10}\n")


def dump_attention(
    out_dir: str, prepared: PreparedRun, model: EmbeddingModel
) -> str:
    """Per-node attention weights as TSV: node_id, then one column per view."""
    config = prepared.config
    views = _truncated(prepared.views, config.hyper.window)
    path = os.path.join(out_dir, "attention_weights.tsv")
    with open(path, "w", encoding="utf-8") as fh:
        for anchor in model.anchor_types:
            specs = [model.view_ids[k] for k in model.view_indices(anchor)]
            fh.write("node_id\t" + "\t".join(specs) + "\n")
            _, att = compute_embeddings(model, views, anchor)
            n = views[model.view_indices(anchor)[0]].n_nodes
            if att is None:  # uniform fusion
                att = np.full((n, len(specs)), 1.0 / len(specs))
            ids = _external_ids(prepared.series, anchor)
            for i in range(n):
                fh.write(ids[i] + "\t" + "\t".join(_fmt(w) for w in att[i]) + "\n")
    return path


def emit_plot_data(out_dir: str, report: ClassificationReport | RankingReport) -> list[str]:
    """(x, metric) series files for external plotting."""
    plot_dir = os.path.join(out_dir, "plots")
    os.makedirs(plot_dir, exist_ok=True)
    paths = []
    if isinstance(report, RankingReport):
        for name, table in (("hr", report.hr), ("ndcg", report.ndcg)):
            path = os.path.join(plot_dir, f"{name}_vs_k.tsv")
            with open(path, "w", encoding="utf-8") as fh:
                for k in report.cutoffs:
                    fh.write(f"{k}\t{_fmt(table[k])}\n")
            paths.append(path)
    else:
        path = os.path.join(plot_dir, "f1_vs_train_fraction.tsv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{report.train_fraction}\t{_fmt(report.micro_f1)}\t{_fmt(report.macro_f1)}\n")
        paths.append(path)
    return paths


def run_evaluate(
    config: RunConfig,
    checkpoint_path: str,
    want_attention_dump: bool = False,
    want_plot_data: bool = False,
) -> ClassificationReport | RankingReport:
    prepared = prepare(config)
    os.makedirs(config.output_dir, exist_ok=True)
    model = load_model(config, checkpoint_path, prepared.views)
    report = evaluate_prepared(prepared, model)
    if isinstance(report, RankingReport):
        write_ranking_report(config.output_dir, report)
    else:
        write_classification_report(config.output_dir, report)
    if want_attention_dump:
        dump_attention(config.output_dir, prepared, model)
    if want_plot_data:
        emit_plot_data(config.output_dir, report)
    write_metadata(os.path.join(config.output_dir, "run_metadata.txt"), config, None)
    return report


def _sweep_runner(config: RunConfig) -> dict[str, float]:
    result = run_train(config)
    prepared = prepare(config)
    model = result.model
    report = evaluate_prepared(prepared, model)
    if isinstance(report, RankingReport):
        out: dict[str, float] = {}
        for k in report.cutoffs:
            out[f"HR@{k}"] = report.hr[k]
        for k in report.cutoffs:
            out[f"NDCG@{k}"] = report.ndcg[k]
        return out
    return {"micro_f1": report.micro_f1, "macro_f1": report.macro_f1}


def run_sweep(
    config: RunConfig, axis: str, values: Sequence, want_plot_data: bool = False
) -> list[dict]:
    def runner(cfg: RunConfig) -> dict[str, float]:
        cfg.output_dir = os.path.join(config.output_dir, f"{axis}_{cfg_label(cfg, axis)}")
        return _sweep_runner(cfg)

    rows = sweep(config, axis, values, runner)
    os.makedirs(config.output_dir, exist_ok=True)
    csv_path = os.path.join(config.output_dir, f"sweep_{axis}.csv")
    metric_names = [k for k in rows[0] if k not in ("axis", "value")]
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis", "value"] + metric_names)
        for row in rows:
            writer.writerow([row["axis"], row["value"]] + [_fmt(row[m]) for m in metric_names])
    if want_plot_data:
        plot_dir = os.path.join(config.output_dir, "plots")
        os.makedirs(plot_dir, exist_ok=True)
        for metric in metric_names:
            safe = metric.replace("@", "_at_").lower()
            with open(os.path.join(plot_dir, f"sweep_{axis}_{safe}.tsv"), "w", encoding="utf-8") as fh:
                for row in rows:
                    fh.write(f"{row['value']}\t{_fmt(row[metric])}\n")
    return rows


def cfg_label(config: RunConfig, axis: str) -> str:
    if axis == "dimension":
        return str(config.hyper.dim)
    if axis == "history":
        return str((config.hyper.window or 1) - 1)
    if axis == "views":
        return hashlib.sha256(",".join(config.views).encode()).hexdigest()[:8]
    return str(len(config.views))


def run_ingest(config: RunConfig) -> tuple[str, str]:
    """Persist the snapshot cache and a human-readable stats file."""
    config.validate()
    schema = load_schema(config.schema_path)
    series = load_snapshots(schema, config.edges_path)
    cache_dir = config.effective_cache_dir()
    os.makedirs(cache_dir, exist_ok=True)
    digest = hashlib.sha256(
        (_file_sha256(config.schema_path) + _file_sha256(config.edges_path)).encode()
    ).hexdigest()[:16]
    cache_path = os.path.join(cache_dir, f"snapshots_{digest}.dhsc")
    save_snapshot_cache(cache_path, series)

    os.makedirs(config.output_dir, exist_ok=True)
    stats_path = os.path.join(config.output_dir, "ingest_stats.txt")
    with open(stats_path, "w", encoding="utf-8") as fh:
        for t_name in schema.node_types:
            fh.write(f"node_type\t{t_name}\t{series.universe.size(t_name)}\n")
        for e in schema.edge_types:
            total = sum(
                series.adjacency(t, e.name).nnz for t in range(1, series.n_steps + 1)
            )
            fh.write(f"edge_total\t{e.name}\t{total}\n")
        for t in range(1, series.n_steps + 1):
            for e in schema.edge_types:
                fh.write(f"edge_count\t{t}\t{e.name}\t{series.adjacency(t, e.name).nnz}\n")
    return cache_path, stats_path


def run_build_views(config: RunConfig) -> str:
    """Build and persist the view cache; returns the cache path."""
    prepare(config, use_cache=True)
    cache_key = _view_cache_key(config)
    return os.path.join(config.effective_cache_dir(), f"views_{cache_key}.dhvc")
