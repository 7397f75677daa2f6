"""Accuracy reports and scheme comparisons."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, DatasetSplit
from .losses import check_labels
from .scheduler import predict_labels


@dataclass
class EvalReport:
    names: tuple[str, ...]
    tp: np.ndarray
    tn: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @property
    def n(self) -> int:
        return int(self.tp[0] + self.tn[0] + self.fp[0] + self.fn[0])

    @property
    def per_attribute_accuracy(self) -> np.ndarray:
        return (self.tp + self.tn) / self.n

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.per_attribute_accuracy))

    @property
    def balanced_accuracy(self) -> np.ndarray:
        # a rate with an empty denominator contributes 0.5
        pos, neg = self.tp + self.fn, self.tn + self.fp
        tpr = np.where(pos > 0, self.tp / np.maximum(pos, 1), 0.5)
        tnr = np.where(neg > 0, self.tn / np.maximum(neg, 1), 0.5)
        return (tpr + tnr) / 2.0

    def rows(self):
        acc, bal = self.per_attribute_accuracy, self.balanced_accuracy
        for j, name in enumerate(self.names):
            yield {"attribute": name, "accuracy": float(acc[j]),
                   "balanced_accuracy": float(bal[j]), "tp": int(self.tp[j]),
                   "tn": int(self.tn[j]), "fp": int(self.fp[j]), "fn": int(self.fn[j])}


def report_from_predictions(predictions, labels, names=None) -> EvalReport:
    predictions = np.asarray(predictions)
    labels = check_labels(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"predictions {predictions.shape} vs labels {labels.shape}")
    if labels.shape[0] == 0:
        raise ValueError("cannot evaluate an empty sample set")
    pos_pred, pos_true = predictions == 1, labels == 1
    count = lambda m: m.sum(axis=0).astype(np.int64)
    names = tuple(names) if names is not None else tuple(f"attr{j}" for j in range(labels.shape[1]))
    return EvalReport(names, count(pos_pred & pos_true), count(~pos_pred & ~pos_true),
                      count(pos_pred & ~pos_true), count(~pos_pred & pos_true))


def evaluate(net, samples: Dataset, tau=None) -> EvalReport:
    if len(samples) == 0:
        raise ValueError("cannot evaluate an empty sample set")
    tau = np.zeros(net.spec.J) if tau is None else np.asarray(tau, dtype=np.float64)
    if tau.shape != (net.spec.J,):
        raise ValueError(f"thresholds must have length {net.spec.J}")
    scores, _ = net.predict(samples.images)
    return report_from_predictions(predict_labels(scores, tau), samples.labels, net.spec.names)


REPORT_COLUMNS = ("attribute", "accuracy", "balanced_accuracy", "tp", "tn", "fp", "fn")
COMPARISON_COLUMNS = ("scheme", "seed", "mean_accuracy")


def write_report_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in report.rows():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def compare_schemes(data: DatasetSplit, configs: dict, seeds=(0,)):
    """Train every named config once per seed on the same data.

    Returns ``(rows, summary)``: one row per (scheme, seed) carrying the test
    report and final validation loss, and per-scheme aggregates.
    """
    from .trainer import make_network, train

    if len(configs) < 2:
        raise ValueError("compare_schemes needs at least two configurations")
    rows = []
    for name, base in configs.items():
        for seed in seeds:
            cfg = replace(base, seed=int(seed))
            net, tlog = train(make_network(cfg, data), data, cfg)
            report = evaluate(net, data.test, tlog.thresholds)
            _, val_curve = tlog.val_fac_curve()
            rows.append({"scheme": name, "seed": int(seed),
                         "mean_accuracy": report.mean_accuracy,
                         "final_val_fac_loss": float(val_curve[-1]),
                         "report": report, "log": tlog})
    summary = {}
    for name in configs:
        mine = [r for r in rows if r["scheme"] == name]
        acc = [r["mean_accuracy"] for r in mine]
        summary[name] = {
            "mean_accuracy": float(np.mean(acc)), "std": float(np.std(acc)),
            "balanced_accuracy": np.mean([r["report"].balanced_accuracy for r in mine], axis=0),
            "final_val_fac_loss": float(np.mean([r["final_val_fac_loss"] for r in mine])),
        }
    return rows, summary


def balanced_accuracy_delta(summary, scheme, reference, attribute: int) -> float:
    """Balanced-accuracy gain of ``scheme`` over ``reference`` on one attribute."""
    return float(summary[scheme]["balanced_accuracy"][attribute]
                 - summary[reference]["balanced_accuracy"][attribute])


def write_summary_csv(summary, names, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "mean_accuracy", "std", "final_val_fac_loss",
                    *(f"balanced_{n}" for n in names)])
        for scheme, s in summary.items():
            w.writerow([scheme, repr(s["mean_accuracy"]), repr(s["std"]),
                        repr(s["final_val_fac_loss"]),
                        *(repr(float(v)) for v in s["balanced_accuracy"])])


def write_comparison_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for r in rows:
            w.writerow([r["scheme"], r["seed"], repr(float(r["mean_accuracy"]))])
