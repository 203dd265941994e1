"""Run results, stability scoring and result serialization.

Stability of a run is the population standard deviation of its per-epoch
accuracy series: a jerky curve scores high, a steady one low. Comparisons
between policies are reported as accuracy-point differences and relative
stability gains.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RunResult:
    accuracy_series: tuple  # ((epoch, accuracy), ...) epochs 1-based, ordered
    stability: float
    peak_accuracy: float
    trace_path: str | None
    config_echo: dict

    def __post_init__(self):
        epochs = [e for e, _ in self.accuracy_series]
        if epochs != sorted(epochs) or len(set(epochs)) != len(epochs):
            raise ValueError("accuracy series epochs must be strictly increasing")


def stability(accuracies) -> float:
    """Population standard deviation of an accuracy series (ddof=0)."""
    a = np.asarray(accuracies, dtype=np.float64)
    if a.ndim != 1 or a.shape[0] < 2:
        raise ValueError("stability needs at least two accuracy samples")
    return float(np.std(a))


def improvement(peak_a: float, peak_b: float) -> float:
    """Peak-accuracy edge of a over b, in accuracy points (x100)."""
    return (peak_a - peak_b) * 100.0


def stability_gain(std_a: float, std_b: float) -> float:
    """How much steadier a is than baseline b, in percent of b's deviation."""
    if std_b == 0.0:
        raise ValueError("baseline stability is zero, gain undefined")
    return (std_b - std_a) / std_b * 100.0


def make_result(series, trace_path, config_echo) -> RunResult:
    series = tuple((int(e), float(a)) for e, a in series)
    return RunResult(
        accuracy_series=series,
        stability=stability([a for _, a in series]),
        peak_accuracy=max(a for _, a in series),
        trace_path=trace_path,
        config_echo=config_echo,
    )


def _summary_dict(result: RunResult) -> dict:
    return {
        "stability": result.stability,
        "peak_accuracy": result.peak_accuracy,
        "trace_path": result.trace_path,
        "config_echo": result.config_echo,
    }


def emit(result: RunResult, format: str, sink) -> None:
    """Write a result to ``sink`` (a path) as csv or json.

    csv writes the epoch,accuracy series plus a <sink>.summary.json sidecar
    carrying the scalars; json writes the whole result as one object.
    Floats go through repr, so a rewrite of the same result is
    byte-identical and parsing gives back the exact values.
    """
    sink = str(sink)
    if format == "csv":
        with open(sink, "w", newline="") as f:
            f.write("epoch,accuracy\n")
            for e, a in result.accuracy_series:
                f.write(f"{e},{a!r}\n")
        with open(sink + ".summary.json", "w") as f:
            json.dump(_summary_dict(result), f, indent=2, sort_keys=True)
            f.write("\n")
    elif format == "json":
        payload = dict(
            _summary_dict(result),
            accuracy_series=[[e, a] for e, a in result.accuracy_series],
        )
        with open(sink, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    else:
        raise ValueError(f"unknown result format {format!r} (use 'csv' or 'json')")


def load_result(path) -> RunResult:
    """Inverse of emit(..., 'json', path)."""
    with open(path) as f:
        payload = json.load(f)
    return RunResult(
        accuracy_series=tuple((int(e), float(a)) for e, a in payload["accuracy_series"]),
        stability=float(payload["stability"]),
        peak_accuracy=float(payload["peak_accuracy"]),
        trace_path=payload["trace_path"],
        config_echo=payload["config_echo"],
    )


def read_series_csv(path) -> list:
    """Read back an epoch,accuracy series written by emit(..., 'csv', ...)."""
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["epoch", "accuracy"]:
            raise ValueError(f"{path}: unexpected series header {reader.fieldnames}")
        for row in reader:
            out.append((int(row["epoch"]), float(row["accuracy"])))
    return out
