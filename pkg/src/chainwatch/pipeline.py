"""Stage orchestration: artifacts in, artifacts out, a manifest per stage.

Every stage reads only files produced by earlier stages (plus the config),
writes its declared outputs, and records a manifest with content hashes of
both sides. All artifacts are plain text so two runs can be diffed file by
file; a run with the same config and seed reproduces every byte.

Stage order:

    synth -> ingest -> paths -> features -> select -> segment
          -> train -> predict -> eval -> report

`synth` only runs when the config carries a generator spec; real dumps
enter the directory as the same two files the generator writes.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import DataError
from .features import (
    FeatureExtractor,
    FeatureSchema,
    load_features_csv,
    load_schema_manifest,
    raw_schema,
    seed_schema,
    signed_log,
    write_features_csv,
    write_schema_manifest,
)
from .featsel import run_selection
from .metrics import metric_report, write_metrics_csv
from .model import (
    TrainInputs,
    load_checkpoint,
    pad_columns,
    predict_stream,
    save_checkpoint,
    train,
    write_history_csv,
)
from .pathtrace import extract_path_sets, write_paths_csv
from .report import render_report
from .spies import select_reliable_negatives
from .statuses import StatusCatalog, discover_statuses, segment_vector, segments_of, status_sequence
from .synth import LabelRow, load_labels_csv, write_synth
from .txgraph import build_address_index, load_transactions

TRANSACTIONS = "transactions.jsonl"
LABELS = "labels.csv"
INGEST_SUMMARY = "ingest_summary.json"
PATHS_CSV = "paths.csv"
FEATURES_FINAL = "features_final.csv"
SPLIT_JSON = "split.json"
SPY_REPORT = "spy_report.json"
TRAINING_POOL = "training_pool.json"
SELECTION_REPORT = "selection_report.json"
SCHEMA_SELECTED = "schema_selected.json"
FEATURES_HOURLY = "features_hourly.csv"
CATALOG_JSON = "catalog.json"
STATUSES_CSV = "statuses.csv"
CHECKPOINT_JSON = "checkpoint.json"
HISTORY_CSV = "history.csv"
PREDICTIONS_CSV = "predictions.csv"
STREAM_SUMMARY = "stream_summary.csv"
METRICS_TRAIN = "metrics_train.csv"
METRICS_TEST = "metrics_test.csv"
EVAL_SUMMARY = "eval_summary.json"
REPORT_TXT = "report.txt"

# file -> stage that produces it, for actionable missing-artifact errors
PRODUCED_BY = {
    TRANSACTIONS: "synth",
    LABELS: "synth",
    INGEST_SUMMARY: "ingest",
    PATHS_CSV: "paths",
    FEATURES_FINAL: "features",
    SPLIT_JSON: "select",
    SPY_REPORT: "select",
    TRAINING_POOL: "select",
    SELECTION_REPORT: "select",
    SCHEMA_SELECTED: "select",
    FEATURES_HOURLY: "segment",
    CATALOG_JSON: "segment",
    STATUSES_CSV: "segment",
    CHECKPOINT_JSON: "train",
    HISTORY_CSV: "train",
    PREDICTIONS_CSV: "predict",
    STREAM_SUMMARY: "predict",
    METRICS_TRAIN: "eval",
    METRICS_TEST: "eval",
    EVAL_SUMMARY: "eval",
}

STAGES = ("synth", "ingest", "paths", "features", "select", "segment",
          "train", "predict", "eval", "report")


def stage_seed(root_seed: int, label: str) -> int:
    """Per-stage seed carved from the root seed; stable across runs."""
    digest = hashlib.sha256(f"{root_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require(out_dir: Path, names: list[str]) -> dict[str, Path]:
    found = {}
    for name in names:
        path = out_dir / name
        if not path.exists():
            stage = PRODUCED_BY.get(name, "an earlier stage")
            raise DataError(f"missing artifact {name!r}; run {stage} first")
        found[name] = path
    return found


def _write_manifest(out_dir: Path, stage: str, config: PipelineConfig,
                    seed: int, inputs: list[str], outputs: list[str]) -> str:
    manifest = {
        "stage": stage,
        "seed": seed,
        "config": config.to_json(),
        "inputs": {name: _sha256(out_dir / name) for name in sorted(inputs)},
        "outputs": {name: _sha256(out_dir / name) for name in sorted(outputs)},
    }
    name = f"manifest_{stage}.json"
    (out_dir / name).write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return name


# ---------------------------------------------------------------- shared

def load_graph(out_dir: Path):
    paths = _require(out_dir, [TRANSACTIONS, LABELS])
    graph = load_transactions(paths[TRANSACTIONS])
    index = build_address_index(graph)
    labels = load_labels_csv(paths[LABELS])
    return graph, index, labels


def extract_raw_sequences(graph, index, labels: list[LabelRow],
                          config: PipelineConfig):
    """Raw feature sequences for every labeled address, label-file order."""
    extractor = FeatureExtractor(graph, index, config.paths,
                                 horizon_hours=config.horizon_hours,
                                 hour_seconds=config.hour_seconds)
    return [extractor.sequence(row.address) for row in labels]


def write_final_rows_csv(sequences, path) -> None:
    """Final-hour snapshot of the full raw schema, one row per address."""
    names = raw_schema().names()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("address," + ",".join(names) + "\n")
        for seq in sequences:
            values = ",".join(repr(float(v)) for v in seq.matrix[-1])
            fh.write(f"{seq.address},{values}\n")


def load_final_rows_csv(path) -> tuple[list[str], np.ndarray]:
    names = raw_schema().names()
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header != ["address"] + names:
            raise DataError(f"{str(path)!r} does not carry the full raw schema")
        addresses, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            addresses.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    return addresses, np.asarray(rows, dtype=float)


def split_addresses(labels: list[LabelRow], test_fraction: float,
                    seed: int) -> tuple[list[str], list[str]]:
    """Deterministic train/test split, stratified on the malicious flag."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test fraction must sit strictly between 0 and 1")
    rng = np.random.default_rng([seed, 0x59717])
    train_set, test_set = [], []
    for flag in (1, 0):
        group = [r.address for r in labels if r.label == flag]
        order = rng.permutation(len(group))
        n_test = int(round(test_fraction * len(group)))
        picked = {group[i] for i in order[:n_test]}
        test_set.extend(a for a in group if a in picked)
        train_set.extend(a for a in group if a not in picked)
    return train_set, test_set


def _zscore_stats(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = stack.reshape(-1, stack.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std[std == 0.0] = 1.0
    return mean, std


def model_width(selected_width: int, heads: int) -> int:
    return max(heads, math.ceil(selected_width / heads) * heads)


def prepare_model_inputs(hourly: dict[str, np.ndarray], addresses: list[str],
                         catalog: StatusCatalog, mean: np.ndarray,
                         std: np.ndarray, d_model: int):
    """Stack z-scored features, normalized segment vectors, and status ids."""
    feats, seg_vecs, status_ids = [], [], []
    for address in addresses:
        if address not in hourly:
            raise DataError(f"no hourly features for address {address!r}")
        seq = hourly[address]
        feats.append((seq - mean) / std)
        vecs = np.stack([segment_vector(seq[b:e], catalog.importances[k])
                         for k, (b, e) in enumerate(segments_of(catalog.splits))])
        seg_vecs.append(catalog.normalizer.transform(vecs))
        ids, _ = status_sequence(seq, catalog)
        status_ids.append(ids)
    feats = pad_columns(np.stack(feats), d_model)
    seg_vecs = pad_columns(np.stack(seg_vecs), d_model)
    return feats, seg_vecs, np.stack(status_ids)


def _label_map(labels: list[LabelRow]) -> dict[str, LabelRow]:
    return {row.address: row for row in labels}


# ---------------------------------------------------------------- stages

def run_synth(config: PipelineConfig, out_dir: Path) -> list[str]:
    if config.synth is None:
        raise DataError("config has no synth section; nothing to generate")
    write_synth(config.synth, out_dir)
    outputs = [TRANSACTIONS, LABELS]
    outputs.append(_write_manifest(out_dir, "synth", config, config.synth.seed,
                                   [], outputs))
    return outputs


def run_ingest(config: PipelineConfig, out_dir: Path) -> list[str]:
    graph, index, labels = load_graph(out_dir)
    for row in labels:
        if index.activation(row.address) is None:
            raise DataError(f"labeled address {row.address!r} never appears "
                            f"in the transaction dump")
    timestamps = [tx.timestamp for tx in graph.transactions.values()]
    summary = {
        "n_transactions": len(graph.transactions),
        "n_addresses": len(index.addresses()),
        "n_labeled": len(labels),
        "n_malicious": sum(r.label for r in labels),
        "n_external_sources": len(graph.external_sources),
        "first_timestamp": min(timestamps) if timestamps else None,
        "last_timestamp": max(timestamps) if timestamps else None,
    }
    (out_dir / INGEST_SUMMARY).write_text(
        json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    outputs = [INGEST_SUMMARY]
    outputs.append(_write_manifest(out_dir, "ingest", config, config.seed,
                                   [TRANSACTIONS, LABELS], outputs))
    return outputs


def run_paths(config: PipelineConfig, out_dir: Path) -> list[str]:
    graph, index, labels = load_graph(out_dir)
    per_address = {}
    for row in labels:
        start = index.activation(row.address)
        if start is None:
            continue
        as_of = start + config.horizon_hours * config.hour_seconds - 1
        per_address[row.address] = extract_path_sets(graph, index, row.address,
                                                     as_of, config.paths)
    write_paths_csv(per_address, out_dir / PATHS_CSV)
    outputs = [PATHS_CSV]
    outputs.append(_write_manifest(out_dir, "paths", config, config.seed,
                                   [TRANSACTIONS, LABELS], outputs))
    return outputs


def run_features(config: PipelineConfig, out_dir: Path) -> list[str]:
    graph, index, labels = load_graph(out_dir)
    sequences = extract_raw_sequences(graph, index, labels, config)
    write_final_rows_csv(sequences, out_dir / FEATURES_FINAL)
    outputs = [FEATURES_FINAL]
    outputs.append(_write_manifest(out_dir, "features", config, config.seed,
                                   [TRANSACTIONS, LABELS], outputs))
    return outputs


def run_select(config: PipelineConfig, out_dir: Path) -> list[str]:
    _require(out_dir, [FEATURES_FINAL, LABELS])
    labels = load_labels_csv(out_dir / LABELS)
    addresses, rows = load_final_rows_csv(out_dir / FEATURES_FINAL)
    by_addr = _label_map(labels)
    missing = [a for a in by_addr if a not in set(addresses)]
    if missing:
        raise DataError(f"feature rows missing for {missing[:3]}; rerun features")

    train_set, test_set = split_addresses(
        labels, config.evaluation.test_fraction,
        stage_seed(config.seed, "select.split"))
    (out_dir / SPLIT_JSON).write_text(
        json.dumps({"train": train_set, "test": test_set},
                   indent=1, sort_keys=True) + "\n", encoding="utf-8")

    row_of = {a: rows[i] for i, a in enumerate(addresses)}
    positives = [a for a in train_set if by_addr[a].label == 1]
    unlabeled = [a for a in train_set if by_addr[a].label == 0]
    seed_cols = seed_schema()
    spy = select_reliable_negatives(
        seed_cols.project(np.stack([row_of[a] for a in positives])),
        seed_cols.project(np.stack([row_of[a] for a in unlabeled])),
        stage_seed(config.seed, "select.spies"),
        spy_fraction=config.evaluation.spy_fraction,
    )
    reliable = [a for a, keep in zip(unlabeled, spy.reliable_mask) if keep]
    report = spy.to_report()
    report["n_reliable"] = len(reliable)
    report["n_positives"] = len(positives)
    (out_dir / SPY_REPORT).write_text(
        json.dumps(report, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    pool = {"positives": positives, "reliable_negatives": reliable}
    (out_dir / TRAINING_POOL).write_text(
        json.dumps(pool, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    pool_rows = np.stack([row_of[a] for a in positives + reliable])
    pool_y = np.array([1] * len(positives) + [0] * len(reliable), dtype=int)
    result = run_selection(lambda schema: schema.project(pool_rows), pool_y,
                           config.selection,
                           stage_seed(config.seed, "select.dtsa"))
    write_schema_manifest(result.schema, out_dir / SCHEMA_SELECTED)
    (out_dir / SELECTION_REPORT).write_text(
        json.dumps(result.report_json(), indent=1, sort_keys=True) + "\n",
        encoding="utf-8")

    outputs = [SPLIT_JSON, SPY_REPORT, TRAINING_POOL, SCHEMA_SELECTED,
               SELECTION_REPORT]
    outputs.append(_write_manifest(out_dir, "select", config,
                                   stage_seed(config.seed, "select"),
                                   [FEATURES_FINAL, LABELS], outputs))
    return outputs


def run_segment(config: PipelineConfig, out_dir: Path) -> list[str]:
    _require(out_dir, [SCHEMA_SELECTED, TRAINING_POOL])
    graph, index, labels = load_graph(out_dir)
    schema = load_schema_manifest(out_dir / SCHEMA_SELECTED)
    pool = json.loads((out_dir / TRAINING_POOL).read_text(encoding="utf-8"))

    sequences = extract_raw_sequences(graph, index, labels, config)
    write_features_csv(sequences, schema, out_dir / FEATURES_HOURLY)

    # statuses and the network live in compressed space; the CSV stays raw
    raw_selected = {s.address: schema.project(s.matrix) for s in sequences}
    selected = {a: signed_log(m) for a, m in raw_selected.items()}
    pool_addrs = pool["positives"] + pool["reliable_negatives"]
    pool_seqs = [selected[a] for a in pool_addrs]
    pool_y = [1] * len(pool["positives"]) + [0] * len(pool["reliable_negatives"])
    discovery = discover_statuses(pool_seqs, pool_y, config.statuses.eps,
                                  config.statuses.min_pts,
                                  theta=config.statuses.split_theta,
                                  min_len=config.statuses.min_segment_hours,
                                  profile_sequences=[raw_selected[a]
                                                     for a in pool_addrs])
    catalog = discovery.catalog
    (out_dir / CATALOG_JSON).write_text(
        json.dumps(catalog.to_json(), indent=1, sort_keys=True) + "\n",
        encoding="utf-8")

    with open(out_dir / STATUSES_CSV, "w", encoding="utf-8") as fh:
        fh.write("address,segment,status_id,distance\n")
        for row in labels:
            ids, dists = status_sequence(selected[row.address], catalog)
            for k, (sid, dist) in enumerate(zip(ids, dists)):
                fh.write(f"{row.address},{k},{sid},{dist!r}\n")

    outputs = [FEATURES_HOURLY, CATALOG_JSON, STATUSES_CSV]
    outputs.append(_write_manifest(
        out_dir, "segment", config, config.seed,
        [TRANSACTIONS, LABELS, SCHEMA_SELECTED, TRAINING_POOL], outputs))
    return outputs


def load_catalog(out_dir: Path) -> StatusCatalog:
    _require(out_dir, [CATALOG_JSON])
    return StatusCatalog.from_json(
        json.loads((out_dir / CATALOG_JSON).read_text(encoding="utf-8")))


def run_train(config: PipelineConfig, out_dir: Path) -> list[str]:
    found = _require(out_dir, [FEATURES_HOURLY, SCHEMA_SELECTED, CATALOG_JSON,
                               TRAINING_POOL, LABELS])
    schema = load_schema_manifest(found[SCHEMA_SELECTED])
    hourly = load_features_csv(found[FEATURES_HOURLY], schema)
    hourly = {a: signed_log(m) for a, m in hourly.items()}
    catalog = load_catalog(out_dir)
    pool = json.loads(found[TRAINING_POOL].read_text(encoding="utf-8"))
    pool_addrs = pool["positives"] + pool["reliable_negatives"]
    pool_y = np.array([1] * len(pool["positives"])
                      + [0] * len(pool["reliable_negatives"]), dtype=float)

    raw_stack = np.stack([hourly[a] for a in pool_addrs])
    mean, std = _zscore_stats(raw_stack)
    d_model = model_width(len(schema), config.model.heads)
    feats, seg_vecs, status_ids = prepare_model_inputs(
        hourly, pool_addrs, catalog, mean, std, d_model)

    model_cfg = config.model_config(d_model, catalog.noise_id + 1)
    train_cfg = config.train_config(stage_seed(config.seed, "train"))
    inputs = TrainInputs(feats=feats, seg_vecs=seg_vecs, status_ids=status_ids,
                         labels=pool_y, splits=list(catalog.splits))
    params, history = train(inputs, model_cfg, train_cfg)

    extras = {
        "feature_mean": [float(v) for v in mean],
        "feature_std": [float(v) for v in std],
        "d_model": d_model,
        "n_status_ids": catalog.noise_id + 1,
    }
    save_checkpoint(out_dir / CHECKPOINT_JSON, params, model_cfg, extras)
    write_history_csv(out_dir / HISTORY_CSV, history)

    outputs = [CHECKPOINT_JSON, HISTORY_CSV]
    outputs.append(_write_manifest(
        out_dir, "train", config, train_cfg.seed,
        [FEATURES_HOURLY, SCHEMA_SELECTED, CATALOG_JSON, TRAINING_POOL, LABELS],
        outputs))
    return outputs


def run_predict(config: PipelineConfig, out_dir: Path) -> list[str]:
    found = _require(out_dir, [FEATURES_HOURLY, SCHEMA_SELECTED, CATALOG_JSON,
                               CHECKPOINT_JSON, LABELS])
    schema = load_schema_manifest(found[SCHEMA_SELECTED])
    hourly = load_features_csv(found[FEATURES_HOURLY], schema)
    hourly = {a: signed_log(m) for a, m in hourly.items()}
    catalog = load_catalog(out_dir)
    labels = load_labels_csv(found[LABELS])
    params, model_cfg, extras = load_checkpoint(found[CHECKPOINT_JSON])
    mean = np.asarray(extras["feature_mean"], dtype=float)
    std = np.asarray(extras["feature_std"], dtype=float)
    d_model = int(extras["d_model"])
    splits = list(catalog.splits)

    addresses = [row.address for row in labels]
    feats, seg_vecs, status_ids = prepare_model_inputs(
        hourly, addresses, catalog, mean, std, d_model)

    with open(out_dir / PREDICTIONS_CSV, "w", encoding="utf-8") as pred_fh, \
            open(out_dir / STREAM_SUMMARY, "w", encoding="utf-8") as sum_fh:
        pred_fh.write("address,segment,hour,y,survival\n")
        sum_fh.write("address,final_y,verdict,t_die,t_fc\n")
        for i, address in enumerate(addresses):
            stream = predict_stream(params, model_cfg, feats[i], seg_vecs[i],
                                    status_ids[i], splits)
            for k in range(len(stream.split_y)):
                pred_fh.write(f"{address},{k},{splits[k + 1] - 1},"
                              f"{float(stream.split_y[k])!r},"
                              f"{float(stream.split_survival[k])!r}\n")
            t_die = "" if stream.t_die is None else stream.t_die
            sum_fh.write(f"{address},{float(stream.split_y[-1])!r},"
                         f"{int(stream.verdict)},{t_die},{stream.t_fc}\n")

    outputs = [PREDICTIONS_CSV, STREAM_SUMMARY]
    outputs.append(_write_manifest(
        out_dir, "predict", config, config.seed,
        [FEATURES_HOURLY, SCHEMA_SELECTED, CATALOG_JSON, CHECKPOINT_JSON, LABELS],
        outputs))
    return outputs


def load_predictions_csv(path) -> dict[str, list[tuple[int, int, float, float]]]:
    """address -> [(segment, hour, y, survival)] in segment order."""
    per_address: dict[str, list[tuple[int, int, float, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "address,segment,hour,y,survival":
            raise DataError(f"{str(path)!r} is not a predictions file")
        for line in fh:
            addr, seg, hour, y, surv = line.rstrip("\n").split(",")
            per_address.setdefault(addr, []).append(
                (int(seg), int(hour), float(y), float(surv)))
    for rows in per_address.values():
        rows.sort(key=lambda r: r[0])
    return per_address


def load_stream_summary(path) -> dict[str, dict]:
    out: dict[str, dict] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "address,final_y,verdict,t_die,t_fc":
            raise DataError(f"{str(path)!r} is not a stream summary file")
        for line in fh:
            addr, final_y, verdict, t_die, t_fc = line.rstrip("\n").split(",")
            out[addr] = {
                "final_y": float(final_y),
                "verdict": int(verdict),
                "t_die": None if t_die == "" else int(t_die),
                "t_fc": int(t_fc),
            }
    return out


def _subset_report(predictions, labels_by_addr, subset: list[str]):
    members = [a for a in subset if a in predictions]
    if not members:
        return None
    prob = np.array([[row[2] for row in predictions[a]] for a in members]).T
    y_true = np.array([labels_by_addr[a].label for a in members], dtype=int)
    return metric_report(y_true, prob)


def earliness_summary(stream, labels: list[LabelRow],
                      subset: list[str] | None = None) -> dict:
    """How often a correct malicious call died before the scripted hour."""
    wanted = set(subset) if subset is not None else None
    n_detected = n_early = n_malicious = 0
    for row in labels:
        if row.label != 1 or (wanted is not None and row.address not in wanted):
            continue
        n_malicious += 1
        summary = stream.get(row.address)
        if summary is None or summary["verdict"] != 1:
            continue
        n_detected += 1
        # an address whose survival never collapsed yields no early call
        if summary["t_die"] is not None and row.bulk_hour >= 0 \
                and summary["t_die"] < row.bulk_hour:
            n_early += 1
    fraction = n_early / n_detected if n_detected else 0.0
    return {"n_malicious": n_malicious, "n_detected": n_detected,
            "n_early": n_early, "fraction_early": fraction}


def run_eval(config: PipelineConfig, out_dir: Path) -> list[str]:
    found = _require(out_dir, [PREDICTIONS_CSV, STREAM_SUMMARY, SPLIT_JSON,
                               LABELS])
    predictions = load_predictions_csv(found[PREDICTIONS_CSV])
    stream = load_stream_summary(found[STREAM_SUMMARY])
    split = json.loads(found[SPLIT_JSON].read_text(encoding="utf-8"))
    labels = load_labels_csv(found[LABELS])
    by_addr = _label_map(labels)

    summary = {}
    for name, subset, csv_name in (("train", split["train"], METRICS_TRAIN),
                                   ("test", split["test"], METRICS_TEST)):
        report = _subset_report(predictions, by_addr, subset)
        if report is None:
            raise DataError(f"no predictions overlap the {name} split; "
                            f"run predict first")
        write_metrics_csv(report, out_dir / csv_name)
        summary[name] = {
            "n_addresses": len(subset),
            "mean_accuracy": report.mean_accuracy,
            "mean_precision": report.mean_precision,
            "mean_recall": report.mean_recall,
            "mean_f1": report.mean_f1,
            "f1_early": report.f1_early,
            "f1_consistent": report.f1_consistent,
        }
    summary["earliness"] = earliness_summary(stream, labels)
    summary["earliness_heldout"] = earliness_summary(stream, labels,
                                                     split["test"])
    (out_dir / EVAL_SUMMARY).write_text(
        json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    outputs = [METRICS_TRAIN, METRICS_TEST, EVAL_SUMMARY]
    outputs.append(_write_manifest(
        out_dir, "eval", config, config.seed,
        [PREDICTIONS_CSV, STREAM_SUMMARY, SPLIT_JSON, LABELS], outputs))
    return outputs


def load_statuses_csv(path) -> dict[str, list[int]]:
    out: dict[str, list[tuple[int, int]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "address,segment,status_id,distance":
            raise DataError(f"{str(path)!r} is not a status file")
        for line in fh:
            addr, seg, sid, _ = line.rstrip("\n").split(",")
            out.setdefault(addr, []).append((int(seg), int(sid)))
    return {a: [sid for _, sid in sorted(rows)] for a, rows in out.items()}


def run_report(config: PipelineConfig, out_dir: Path) -> list[str]:
    found = _require(out_dir, [PREDICTIONS_CSV, STREAM_SUMMARY, STATUSES_CSV,
                               LABELS])
    predictions = load_predictions_csv(found[PREDICTIONS_CSV])
    stream = load_stream_summary(found[STREAM_SUMMARY])
    statuses = load_statuses_csv(found[STATUSES_CSV])
    labels = load_labels_csv(found[LABELS])
    text = render_report(predictions, stream, statuses, labels)
    (out_dir / REPORT_TXT).write_text(text, encoding="utf-8")
    outputs = [REPORT_TXT]
    outputs.append(_write_manifest(
        out_dir, "report", config, config.seed,
        [PREDICTIONS_CSV, STREAM_SUMMARY, STATUSES_CSV, LABELS], outputs))
    return outputs


RUNNERS = {
    "synth": run_synth,
    "ingest": run_ingest,
    "paths": run_paths,
    "features": run_features,
    "select": run_select,
    "segment": run_segment,
    "train": run_train,
    "predict": run_predict,
    "eval": run_eval,
    "report": run_report,
}


def run_stage(stage: str, config: PipelineConfig, out_dir) -> list[str]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if stage == "all":
        written = []
        chain = [s for s in STAGES if s != "synth" or config.synth is not None]
        for name in chain:
            written.extend(RUNNERS[name](config, out_dir))
        return written
    if stage not in RUNNERS:
        raise DataError(f"unknown stage {stage!r}")
    return RUNNERS[stage](config, out_dir)
