"""Append-only metrics files: one JSON object per line.

Two row kinds share a file. "round" rows carry per-round test metrics of
one run; "summary" rows carry end-of-run or aggregate statistics. Rows
are reproducible given the experiment config and seeds, except for the
wall_time field.
"""

import json
from pathlib import Path

from .errors import MetricsSchemaError

ROW_KINDS = ("round", "summary")

_REQUIRED = {
    "round": {
        "kind": str,
        "experiment": str,
        "seed": int,
        "round": int,
        "test_accuracy": float,
        "test_mse": float,
        "wall_time": float,
    },
    "summary": {
        "kind": str,
        "experiment": str,
        "wall_time": float,
    },
}

_OPTIONAL_TYPES = {
    "seed": int,
    "train_accuracy": float,
    "train_mse": float,
    "final_test_accuracy": float,
    "final_test_mse": float,
    "final_test_mse_x100": float,
    "n_clients": int,
    "train_clients": int,
    "test_clients": int,
    "samples_per_client": int,
    "optimizer": str,
    "lr": float,
    "rounds": int,
    "epochs": int,
    "batch_size": int,
    "non_iid_fraction": float,
    "dataset": str,
    "centralized": bool,
    "label_balance": float,
    "local_loss_mean": float,
    "test_accuracy_mean": float,
    "test_accuracy_min": float,
    "test_accuracy_max": float,
    "test_accuracy_spread": float,
    "test_mse_mean": float,
    "test_mse_min": float,
    "test_mse_max": float,
    "test_mse_spread": float,
    "train_accuracy_mean": float,
    "train_accuracy_min": float,
    "train_accuracy_max": float,
    "train_accuracy_spread": float,
    "train_mse_mean": float,
    "train_mse_min": float,
    "train_mse_max": float,
    "train_mse_spread": float,
}


def validate_row(row: dict) -> None:
    if not isinstance(row, dict):
        raise MetricsSchemaError(f"row must be an object, got {type(row).__name__}")
    kind = row.get("kind")
    if kind not in ROW_KINDS:
        raise MetricsSchemaError(f"unknown row kind {kind!r}")
    for key, expected in _REQUIRED[kind].items():
        if key not in row:
            raise MetricsSchemaError(f"{kind} row missing {key!r}")
    for key, value in row.items():
        expected = _REQUIRED[kind].get(key) or _OPTIONAL_TYPES.get(key)
        if expected is None:
            raise MetricsSchemaError(f"unknown metrics field {key!r}")
        if expected is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        elif expected is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        else:
            ok = isinstance(value, expected)
        if not ok:
            raise MetricsSchemaError(
                f"field {key!r} expects {expected.__name__}, got {value!r}"
            )
    if kind == "round" and row["round"] < 0:
        raise MetricsSchemaError("round must be >= 0")
    for key in ("test_accuracy", "train_accuracy", "final_test_accuracy"):
        if key in row and row[key] is not None and not 0.0 <= row[key] <= 1.0:
            raise MetricsSchemaError(f"{key} out of [0, 1]: {row[key]}")


def append_rows(path, rows) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        for row in rows:
            validate_row(row)
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_metrics(path) -> list[dict]:
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetricsSchemaError(f"{path}:{lineno}: {exc}") from None
            validate_row(row)
            rows.append(row)
    return rows
