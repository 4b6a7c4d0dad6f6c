"""CSV/JSON file formats shared by the command-line tools.

* data CSV: header row of node names, then one row per time sample.
* mask CSV: same header and shape, entries 0 or 1.
* edge list CSV: header ``frame,i,j,weight``; ``i < j`` are 0-based node indices.
* labels CSV: header ``node,label``.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .graph_ops import edge_index, num_edges


class InputError(ValueError):
    """Malformed or inconsistent input file."""


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise InputError(f"{path}: empty file")
    return rows


def _numeric_body(path, rows, width):
    body = np.empty((len(rows), width))
    for r, row in enumerate(rows, start=2):
        if len(row) != width:
            raise InputError(f"{path}: row {r} has {len(row)} cells, expected {width}")
        for c, cell in enumerate(row, start=1):
            try:
                body[r - 2, c - 1] = float(cell)
            except ValueError:
                raise InputError(f"{path}: non-numeric cell {cell!r} at row {r}, column {c}") from None
    if not np.all(np.isfinite(body)):
        raise InputError(f"{path}: non-finite values")
    return body


def ingest_data(data_path, mask_path=None):
    """Read a data CSV (and optional mask) into ``(names, X p x T, M p x T)``.

    Unobserved entries of ``X`` are zeroed.
    """
    rows = _read_rows(data_path)
    names = [cell.strip() for cell in rows[0]]
    X = _numeric_body(data_path, rows[1:], len(names))
    if X.shape[0] == 0:
        raise InputError(f"{data_path}: no samples")
    if mask_path is None:
        M = np.ones_like(X)
    else:
        mrows = _read_rows(mask_path)
        M = _numeric_body(mask_path, mrows[1:], len(mrows[0]))
        if M.shape != X.shape:
            raise InputError(f"{mask_path}: mask shape {M.shape} does not match data shape {X.shape}")
        bad = np.argwhere(~np.isin(M, (0.0, 1.0)))
        if bad.size:
            r, c = bad[0]
            raise InputError(
                f"{mask_path}: mask value {M[r, c]:g} at row {r + 2}, column {c + 1} is not 0 or 1"
            )
    X = np.where(M == 1, X, 0.0)
    return names, X.T.copy(), M.T.copy()


def write_matrix(path, names, X):
    """Write a ``p x T`` matrix in the data-CSV layout (one row per sample)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in np.asarray(X).T:
            writer.writerow([repr(float(v)) for v in row])


def write_edge_list(path, weights_per_frame, edge_tol: float):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame", "i", "j", "weight"])
        for n, w in enumerate(weights_per_frame):
            w = np.asarray(w)
            p = int(round((1 + np.sqrt(1 + 8 * w.size)) / 2))
            rows, cols = edge_index(p)
            for e in np.flatnonzero(w > edge_tol):
                writer.writerow([n, int(rows[e]), int(cols[e]), repr(float(w[e]))])


def read_edge_list(path, p: int) -> list[np.ndarray]:
    """Edge weight vectors per frame; frames are numbered from 0 without gaps."""
    rows = _read_rows(path)
    if [c.strip() for c in rows[0]] != ["frame", "i", "j", "weight"]:
        raise InputError(f"{path}: expected header frame,i,j,weight")
    body = _numeric_body(path, rows[1:], 4)
    n_frames = int(body[:, 0].max()) + 1 if body.size else 1
    out = [np.zeros(num_edges(p)) for _ in range(n_frames)]
    for r, (n, i, j, w) in enumerate(body, start=2):
        n, i, j = int(n), int(i), int(j)
        if not 0 <= i < j < p:
            raise InputError(f"{path}: row {r} has invalid node pair ({i}, {j}) for p={p}")
        if n < 0:
            raise InputError(f"{path}: row {r} has negative frame index")
        e = i * p - i * (i + 1) // 2 + (j - i - 1)
        out[n][e] = w
    return out


def write_labels(path, labels):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node", "label"])
        for i, lab in enumerate(labels):
            writer.writerow([i, int(lab)])


def read_labels(path) -> np.ndarray:
    rows = _read_rows(path)
    body = _numeric_body(path, rows[1:], 2)
    order = np.argsort(body[:, 0])
    return body[order, 1].astype(int)


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


class OutputSet:
    """Tracks files written by a command so they can be removed on failure."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.paths: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.paths.append(p)
        return p

    def discard(self):
        for p in self.paths:
            if p.exists():
                os.remove(p)


_number = {"type": "number"}
_nullable_number = {"type": ["number", "null"]}

DIAGNOSTICS_SCHEMA = {
    "type": "object",
    "required": ["p", "nodes", "frame_length", "overlap", "frames"],
    "properties": {
        "p": {"type": "integer"},
        "nodes": {"type": "array", "items": {"type": "string"}},
        "frame_length": {"type": "integer"},
        "overlap": {"type": "integer"},
        "frames": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["frame", "start", "iterations", "converged", "residuals", "lagrangian"],
                "properties": {
                    "frame": {"type": "integer"},
                    "start": {"type": "integer"},
                    "iterations": {"type": "integer"},
                    "converged": {"type": "boolean"},
                    "residuals": {
                        "type": "object",
                        "required": ["laplacian", "temporal", "degree"],
                        "additionalProperties": {"type": "array", "items": _number},
                    },
                    "lagrangian": {"type": "array", "items": _number},
                },
            },
        },
    },
}

CLUSTERING_ROW = {
    "type": "object",
    "required": ["frame", "accuracy", "purity", "modularity", "ari"],
    "properties": {k: _number for k in ("accuracy", "purity", "modularity", "ari")},
}

METRICS_SCHEMA = {
    "type": "object",
    "required": ["settings", "recovery", "final", "clustering"],
    "properties": {
        "settings": {
            "type": "object",
            "required": ["sampling_rate", "noise_std", "edge_tol", "rel_err_scaling"],
        },
        "recovery": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["frame", "rel_err", "f_score"],
                "properties": {"frame": {"type": "integer"}, "rel_err": _number, "f_score": _number},
            },
        },
        "final": {"type": "object", "required": ["frame", "rel_err", "f_score"]},
        "clustering": {"type": "array", "items": CLUSTERING_ROW},
    },
}

BACKTEST_SCHEMA = {
    "type": "object",
    "required": ["scheme", "ann_return", "ann_volatility", "sharpe", "max_drawdown", "rebalances"],
    "properties": {
        "scheme": {"enum": ["MTVGRP", "MSRP", "EWP"]},
        "ann_return": _number,
        "ann_volatility": _number,
        "sharpe": _nullable_number,
        "max_drawdown": {"type": "number", "minimum": 0, "maximum": 1},
        "rebalances": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "weights"],
                "properties": {"index": {"type": "integer"}, "weights": {"type": "array", "items": _number}},
            },
        },
    },
}
