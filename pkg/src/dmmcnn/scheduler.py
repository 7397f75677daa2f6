"""Per-attribute loss weights driven by the validation-loss trend, and
per-attribute decision thresholds driven by the FP/FN balance."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

TRACE_COLUMNS = ("iteration", "epoch", "attribute", "val_loss", "lambda", "tau", "fp", "fn")


def trend_weights(current, previous, cap: float | None = None) -> np.ndarray:
    """``|(L(t) - L(t-1)) / L(t-1)|`` per attribute.

    An attribute whose previous loss is exactly zero gets weight 0.
    """
    current = np.asarray(current, dtype=np.float64)
    previous = np.asarray(previous, dtype=np.float64)
    out = np.zeros_like(current)
    ok = previous != 0
    out[ok] = np.abs((current[ok] - previous[ok]) / previous[ok])
    if cap is not None:
        np.minimum(out, cap, out=out)
    return out


def threshold_step(tau, fp, fn, gamma: float, epoch: int, n_val: int) -> np.ndarray:
    """``tau + gamma * epoch * (fp - fn) / n_val``."""
    fp = np.asarray(fp)
    fn = np.asarray(fn)
    if n_val < 1:
        raise ValueError("validation set size must be positive")
    for name, v in (("fp", fp), ("fn", fn)):
        if np.any(v < 0) or np.any(v > n_val):
            raise ValueError(f"{name} counts must lie in [0, {n_val}]")
    return np.asarray(tau, dtype=np.float64) + gamma * epoch * (fp - fn) / n_val


def predict_labels(outputs, tau) -> np.ndarray:
    """+1 where ``output > tau_j``, otherwise -1 (a tie is negative)."""
    outputs = np.asarray(outputs, dtype=np.float64)
    return np.where(outputs > np.asarray(tau, dtype=np.float64), 1.0, -1.0)


def count_fp_fn(predictions, labels) -> tuple[np.ndarray, np.ndarray]:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"predictions {predictions.shape} vs labels {labels.shape}")
    fp = np.sum((predictions == 1) & (labels == -1), axis=0)
    fn = np.sum((predictions == -1) & (labels == 1), axis=0)
    return fp.astype(np.int64), fn.astype(np.int64)


@dataclass
class SchedulerState:
    """Mutable state shared by the weight and threshold updates.

    ``t`` counts completed scheduler updates.  The first update only records
    the baseline validation losses (weights stay at 1), so the number of
    trend-based weight updates is ``t - 1`` once ``t >= 1``.
    """

    J: int
    gamma: float = 0.01
    P: int = 100
    V: int = 0
    dynamic_weights: bool = True
    adaptive_threshold: bool = True
    weight_cap: float | None = None
    normalize_weights: bool = False
    weights: np.ndarray = None
    tau: np.ndarray = None
    prev_val_losses: np.ndarray | None = None
    t: int = 0
    epoch: int = 1
    weight_updates: int = 0
    trace: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.ones(self.J)
        if self.tau is None:
            self.tau = np.zeros(self.J)

    def update_thresholds(self, fp, fn) -> np.ndarray:
        if self.adaptive_threshold:
            self.tau = threshold_step(self.tau, fp, fn, self.gamma, self.epoch, self.V)
        return self.tau

    def update_weights(self, val_losses) -> np.ndarray:
        val_losses = np.asarray(val_losses, dtype=np.float64)
        if np.any(val_losses < 0):
            raise ValueError("validation losses must be non-negative")
        if self.dynamic_weights and self.prev_val_losses is not None:
            w = trend_weights(val_losses, self.prev_val_losses, self.weight_cap)
            if self.normalize_weights:
                total = w.sum()
                w = w * (self.J / total) if total > 0 else np.ones(self.J)
            self.weights = w
            self.weight_updates += 1
        self.prev_val_losses = val_losses.copy()
        return self.weights

    def advance(self):
        self.t += 1

    def record(self, iteration, names, val_losses, fp, fn):
        for j, name in enumerate(names):
            self.trace.append({
                "iteration": iteration, "epoch": self.epoch, "attribute": name,
                "val_loss": float(val_losses[j]), "lambda": float(self.weights[j]),
                "tau": float(self.tau[j]), "fp": int(fp[j]), "fn": int(fn[j]),
            })


def write_trace(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("iteration", "epoch", "fp", "fn"):
            row[key] = int(row[key])
        for key in ("val_loss", "lambda", "tau"):
            row[key] = float(row[key])
    return rows
