"""CSV dataset loading and deterministic artifact writers.

Modality files carry a header row with node_id followed by feature columns;
the labels file has columns node_id,label with -1 marking unlabelled nodes.
All tables are joined on node_id, with the labels file fixing the canonical
node order.  Errors report the offending file and line.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from .config import RunConfig
from .hypergraph import ModalityTable
from .labels import LabelState

__all__ = [
    "load_labels_csv",
    "load_modality_csv",
    "load_dataset",
    "write_predictions_csv",
    "write_metrics_csv",
]


def _parse_float(text, path, lineno, col):
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: column {col!r}: "
                         f"not a number: {text!r}") from None
    if math.isnan(v):
        raise ValueError(f"{path}:{lineno}: column {col!r}: NaN cell")
    return v


def load_labels_csv(path):
    """Read (node_ids, labels) from a node_id,label file; -1 is unlabelled."""
    ids, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(f"{path}:1: expected header node_id,label")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, "
                                 f"got {len(row)}")
            ids.append(row[0])
            try:
                labels.append(int(row[1]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: label must be an "
                                 f"integer, got {row[1]!r}") from None
    if not ids:
        raise ValueError(f"{path}: no data rows")
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate node_id values")
    return ids, np.array(labels, dtype=int)


def load_modality_csv(path):
    """Read (node_ids, feature matrix) from a node_id + features file."""
    ids, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(f"{path}:1: expected header with node_id plus "
                             "at least one feature column")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} "
                                 f"columns, got {len(row)}")
            ids.append(row[0])
            rows.append([_parse_float(v, path, lineno, header[j + 1])
                         for j, v in enumerate(row[1:])])
    if not ids:
        raise ValueError(f"{path}: no data rows")
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate node_id values")
    return ids, np.array(rows)


def load_dataset(config: RunConfig):
    """Load all modalities and labels, joined on node_id.

    The labels file fixes the node order; every modality must cover exactly
    the same ids.  Returns (node_ids, modality tables, label state).
    """
    if not config.labels:
        raise ValueError("config has no labels path")
    if not config.modalities:
        raise ValueError("config lists no modalities")
    ids, raw_labels = load_labels_csv(config.labels)
    if np.all(raw_labels < 0):
        raise ValueError(f"{config.labels}: no labeled nodes")
    order = {node: i for i, node in enumerate(ids)}
    tables = []
    for spec in config.modalities:
        mids, X = load_modality_csv(spec.path)
        if set(mids) != set(order):
            missing = sorted(set(order) - set(mids))[:5]
            extra = sorted(set(mids) - set(order))[:5]
            raise ValueError(
                f"{spec.path}: node_id mismatch with {config.labels}"
                f" (missing {missing}, unknown {extra})")
        perm = np.argsort([order[m] for m in mids], kind="stable")
        tables.append(ModalityTable(spec.kind, X[perm], spec.name,
                                    categorical=spec.categorical))
    classes = int(raw_labels.max()) + 1
    if classes < 2:
        raise ValueError(f"{config.labels}: need at least two classes, "
                         f"found labels up to {classes - 1}")
    labels = LabelState.from_given(raw_labels, classes)
    return ids, tables, labels


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def write_predictions_csv(path, node_ids, predictions, gamma, sources):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node_id", "predicted_class", "gamma", "source"])
        for node, y, g, s in zip(node_ids, predictions, gamma, sources):
            writer.writerow([node, int(y), _fmt(float(g)), s])


def write_metrics_csv(path, rows, header):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
