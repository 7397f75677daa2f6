"""Joint training loop with periodic whole-validation-set scheduler updates.

Loop skeleton (``loop`` runs from 0 to ``max_iters`` inclusive)::

    if loop % interval == 0:
        per-attribute validation losses
        threshold update from FP/FN counts
        weight update from the loss trend
        t += 1
    joint loss on a minibatch
    one SGD step
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .data import Dataset, DatasetSplit, shuffled_order
from .losses import fac_loss_per_attribute, fld_loss, joint_loss, joint_loss_and_grads
from .network import BackboneConfig, DmmNetwork, HeadConfig, NetworkConfig
from .nn import SGD
from .scheduler import SchedulerState, count_fp_fn, predict_labels

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, fac_losses, fld: float):
        self.iteration = iteration
        self.fac_losses = np.asarray(fac_losses)
        self.fld = fld
        super().__init__(f"non-finite loss at iteration {iteration}: "
                         f"fac={np.array2string(self.fac_losses, precision=4)} fld={fld}")


@dataclass
class TrainConfig:
    max_iters: int = 3000
    interval: int = 50
    batch_size: int = 64
    base_lr: float = 0.001
    lr_decay_factor: float = 0.1
    plateau_patience: int = 3
    plateau_metric: str = "joint"          # "joint" or "mean_fac"
    momentum: float = 0.0
    beta: float = 0.5
    gamma: float = 0.01
    weight_cap: float | None = None
    normalize_weights: bool = False
    seed: int = 0
    use_fld: bool = True
    use_dynamic_weights: bool = True
    use_adaptive_threshold: bool = True
    use_grouping: bool = True
    validation_source: str = "val"         # "val" or "train"
    freeze_backbone: bool = False
    backbone_channels: tuple[int, ...] = (8, 16, 32)
    objective_hidden: tuple[int, ...] = (64,)
    subjective_hidden: tuple[int, ...] = (128, 64)
    landmark_hidden: tuple[int, ...] = (64,)

    def __post_init__(self):
        if self.max_iters <= 0 or self.interval <= 0 or self.batch_size <= 0:
            raise ValueError("max_iters, interval and batch_size must be positive")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")
        if self.plateau_metric not in ("joint", "mean_fac"):
            raise ValueError(f"unknown plateau_metric {self.plateau_metric!r}")
        if self.validation_source not in ("val", "train"):
            raise ValueError(f"unknown validation_source {self.validation_source!r}")
        for name in ("backbone_channels", "objective_hidden", "subjective_hidden",
                     "landmark_hidden"):
            setattr(self, name, tuple(int(v) for v in getattr(self, name)))

    @classmethod
    def field_types(cls) -> dict[str, str]:
        return {f.name: f.type for f in fields(cls)}

    def network_config(self, spec, landmarks: int, in_channels: int = 1) -> NetworkConfig:
        return NetworkConfig(
            spec.names, spec.groups, landmarks,
            BackboneConfig(in_channels=in_channels, channels=self.backbone_channels),
            HeadConfig(objective_hidden=self.objective_hidden,
                       subjective_hidden=self.subjective_hidden,
                       landmark_hidden=self.landmark_hidden),
            grouping=self.use_grouping, seed=self.seed)


def epochs_to_iters(epochs: float, n_train: int, batch_size: int) -> int:
    return max(1, int(round(epochs * n_train / batch_size)))


def make_network(config: TrainConfig, data: DatasetSplit) -> DmmNetwork:
    T = data.train.landmarks.shape[1] // 2
    return DmmNetwork(config.network_config(data.spec, T, data.train.images.shape[1]))


@dataclass
class TrainLog:
    trace: list[dict] = field(default_factory=list)
    loss_curve: list[dict] = field(default_factory=list)
    lr_events: list[dict] = field(default_factory=list)
    events: list[tuple[str, int]] = field(default_factory=list)
    val_history: list[float] = field(default_factory=list)
    weights: np.ndarray | None = None
    thresholds: np.ndarray | None = None
    updates: int = 0
    weight_updates: int = 0
    checkpoint_path: str | None = None

    def val_fac_curve(self) -> tuple[np.ndarray, np.ndarray]:
        """Iterations and mean per-attribute validation loss at each update."""
        its = {}
        for row in self.trace:
            its.setdefault(row["iteration"], []).append(row["val_loss"])
        keys = sorted(its)
        return np.array(keys), np.array([np.mean(its[k]) for k in keys])


def lr_policy(history, current_lr: float, config: TrainConfig) -> float:
    """Learning rate after the newest entry of ``history`` has been observed.

    A plateau is a run of entries that fail to beat the best value so far.
    The rate is multiplied by ``lr_decay_factor`` when a plateau reaches
    ``plateau_patience`` entries, once; the next decay needs a new best
    followed by another plateau.
    """
    if len(history) == 0:
        raise ValueError("empty validation history")
    best, since = np.inf, 0
    for v in history:
        if v < best:
            best, since = v, 0
        else:
            since += 1
    return current_lr * config.lr_decay_factor if since == config.plateau_patience else current_lr


def _batches(n: int, batch_size: int, seed: int):
    """Endless minibatch index stream, reshuffled every epoch."""
    epoch, order, pos = 0, shuffled_order(n, seed, 0), 0
    while True:
        idx = []
        while len(idx) < batch_size:
            take = order[pos:pos + batch_size - len(idx)]
            idx.extend(take.tolist())
            pos += len(take)
            if pos >= n:
                epoch += 1
                order, pos = shuffled_order(n, seed, epoch), 0
        yield np.asarray(idx)


def validation_stats(net: DmmNetwork, ds: Dataset, tau, with_landmarks: bool):
    scores, marks = net.predict(ds.images)
    fac = fac_loss_per_attribute(scores, ds.labels)
    fld = fld_loss(marks, ds.landmarks) if with_landmarks else 0.0
    fp, fn = count_fp_fn(predict_labels(scores, tau), ds.labels)
    return fac, fld, fp, fn


def train(net: DmmNetwork, data: DatasetSplit, config: TrainConfig,
          on_event=None) -> tuple[DmmNetwork, TrainLog]:
    """Train ``net`` in place; ``on_event(name, loop)`` observes each loop step."""
    if net.config.grouping != config.use_grouping:
        raise ValueError("network grouping does not match config.use_grouping")
    if list(net.spec.names) != list(data.spec.names):
        raise ValueError("network attributes do not match the dataset")
    if data.train.landmarks.shape[1] != 2 * net.T:
        raise ValueError("dataset landmark count does not match the network")
    eval_set = data.val if config.validation_source == "val" else data.train
    if len(eval_set) == 0:
        raise ValueError(f"{config.validation_source} split is empty")

    state = SchedulerState(J=net.spec.J, gamma=config.gamma, P=config.interval,
                           V=len(eval_set), dynamic_weights=config.use_dynamic_weights,
                           adaptive_threshold=config.use_adaptive_threshold,
                           weight_cap=config.weight_cap,
                           normalize_weights=config.normalize_weights)
    trainable = net.params()
    if config.freeze_backbone:
        frozen = {id(p) for p in net.backbone.params()}
        trainable = [p for p in trainable if id(p) not in frozen]
    opt = SGD(trainable, config.base_lr, config.momentum)
    net.zero_grad()
    tlog = TrainLog()
    beta = config.beta if config.use_fld else 0.0
    n_train = len(data.train)
    batches = _batches(n_train, config.batch_size, config.seed)

    def emit(name, loop):
        tlog.events.append((name, loop))
        if on_event is not None:
            on_event(name, loop)

    samples_seen = 0
    for loop in range(config.max_iters + 1):
        state.epoch = samples_seen // n_train + 1
        if loop % config.interval == 0:
            fac, fld, fp, fn = validation_stats(net, eval_set, state.tau, config.use_fld)
            emit("val_loss", loop)
            state.update_thresholds(fp, fn)
            emit("tau", loop)
            state.update_weights(fac)
            emit("lambda", loop)
            state.advance()
            emit("t", loop)
            state.record(loop, net.spec.names, fac, fp, fn)
            metric = (joint_loss(fac, state.weights, fld, beta)
                      if config.plateau_metric == "joint" else float(np.mean(fac)))
            tlog.val_history.append(metric)
            new_lr = lr_policy(tlog.val_history, opt.lr, config)
            if new_lr != opt.lr:
                tlog.lr_events.append({"iteration": loop, "old_lr": opt.lr, "new_lr": new_lr})
                log.info("iteration %d: lr %.3g -> %.3g", loop, opt.lr, new_lr)
                opt.lr = new_lr

        idx = next(batches)
        images, labels = data.train.images[idx], data.train.labels[idx]
        scores, marks = net.forward(images, with_landmarks=config.use_fld)
        report, g_scores, g_marks = joint_loss_and_grads(
            scores, labels, marks, data.train.landmarks[idx] if config.use_fld else None,
            state.weights, beta)
        if not (np.isfinite(report.joint) and np.all(np.isfinite(report.fac_losses))):
            raise TrainingDiverged(loop, report.fac_losses, report.fld_loss)
        emit("joint", loop)
        net.backward(g_scores, g_marks, need_input_grad=False)
        if config.freeze_backbone:
            for p in net.backbone.params():
                p.zero_grad()
        opt.step()
        emit("sgd", loop)
        tlog.loss_curve.append({"iteration": loop, "epoch": state.epoch, "lr": opt.lr,
                                "joint": report.joint,
                                "fac_mean": float(np.mean(report.fac_losses)),
                                "fld": report.fld_loss})
        samples_seen += len(idx)

    tlog.trace = state.trace
    tlog.weights = state.weights.copy()
    tlog.thresholds = state.tau.copy()
    tlog.updates = state.t
    tlog.weight_updates = state.weight_updates
    return net, tlog


# -- ablations ---------------------------------------------------------------

# (FLD, DW, AT, AG) per variant
VARIANTS = {
    "Baseline":   (False, False, False, False),
    "DMM-FAC":    (False, True, True, True),
    "DMM-EQ-FIX": (True, False, False, True),
    "DMM-EQ-AT":  (True, False, True, True),
    "DMM-DW-FIX": (True, True, False, True),
    "DMM-SPP":    (True, True, True, False),
    "DMM-CNN":    (True, True, True, True),
}


def variant_config(name: str, base: TrainConfig) -> TrainConfig:
    fld, dw, at, ag = VARIANTS[name]
    return replace(base, use_fld=fld, use_dynamic_weights=dw, use_adaptive_threshold=at,
                   use_grouping=ag)


def run_ablation_suite(data: DatasetSplit, base_config: TrainConfig, variants=None):
    """Train each variant on the same data and seed; evaluate on the test split."""
    from .evaluation import evaluate

    rows = []
    for name in variants or VARIANTS:
        cfg = variant_config(name, base_config)
        net, tlog = train(make_network(cfg, data), data, cfg)
        report = evaluate(net, data.test, tlog.thresholds)
        fld, dw, at, ag = VARIANTS[name]
        rows.append({"variant": name, "fld": fld, "dw": dw, "at": at, "ag": ag,
                     "mean_accuracy": report.mean_accuracy,
                     "per_attribute_accuracy": report.per_attribute_accuracy,
                     "report": report})
    return rows


def write_ablation_csv(rows, names, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "FLD", "DW", "AT", "AG", "mean_accuracy", *names])
        for r in rows:
            w.writerow([r["variant"], *(int(r[k]) for k in ("fld", "dw", "at", "ag")),
                        repr(r["mean_accuracy"]), *(repr(float(a)) for a in r["per_attribute_accuracy"])])


def write_rows(rows, path, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
