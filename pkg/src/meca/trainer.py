"""Optimization loop for one (method, weight) configuration.

Each step pairs an equal-size source and target mini-batch, applies one
SGD-with-momentum update on the method's loss, and each epoch records
full-set metrics: source cross-entropy, target entropy, covariance distance,
target accuracy, and a KL diagnostic.  Target labels are touched only inside
the accuracy metric, never in any gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import network
from .alignment import AlignmentPenalty, covariance, penalty_distance, penalty_value_and_grads
from .errors import (
    BadShapeError,
    ConfigInvalidError,
    DegenerateMatrixError,
    NoConvergenceError,
    TooFewSamplesError,
)
from .network import LabeledBatch, MlpModel, UnlabeledBatch

METHODS = ("source_only", "entropy_reg", "coral_euclidean", "meca_geodesic")
METHOD_PENALTY_KIND = {
    "source_only": "none",
    "entropy_reg": "none",
    "coral_euclidean": "euclidean",
    "meca_geodesic": "log_euclidean",
}
METRICS_HEADER = "epoch,h_source,e_target,pen_value,target_acc,kl_st"
VAR_FLOOR = 1e-8


@dataclass
class TrainConfig:
    method: str = "meca_geodesic"
    lambda_or_gamma: float = 0.1
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    alignment_layer_index: int | None = None  # None = penultimate layer
    jitter_rel: float = 1e-5
    normalize_cov: bool = False

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigInvalidError(f"unknown method {self.method!r}")
        if self.epochs < 1:
            raise ConfigInvalidError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigInvalidError(f"batch_size must be >= 2, got {self.batch_size}")
        if not self.learning_rate > 0.0:
            raise ConfigInvalidError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigInvalidError(f"momentum must be in [0, 1), got {self.momentum}")
        if not np.isfinite(self.lambda_or_gamma) or self.lambda_or_gamma < 0.0:
            raise ConfigInvalidError(
                f"lambda/gamma must be finite and >= 0, got {self.lambda_or_gamma}"
            )


@dataclass
class EpochMetrics:
    epoch: int
    h_source: float
    e_target: float
    pen_value: float
    target_accuracy: float
    kl_st: float


@dataclass
class TrainRunResult:
    model: MlpModel
    metrics: list[EpochMetrics] = field(default_factory=list)
    diverged: bool = False


def _accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    # np.argmax breaks ties toward the lowest class index
    return float(np.mean(np.argmax(probs, axis=1) == np.argmax(labels, axis=1)))


def evaluate(model: MlpModel, batch: LabeledBatch) -> tuple[float, float, float]:
    """(accuracy, entropy, cross_entropy) of the model on a labeled set."""
    if batch.n == 0:
        raise BadShapeError("cannot evaluate on an empty dataset")
    trace = network.forward(model, batch.inputs)
    return (
        _accuracy(trace.probs, batch.labels),
        network.entropy(trace.probs),
        network.cross_entropy(trace.probs, batch.labels),
    )


def kl_diagnostic(feature_acts_s: np.ndarray, feature_acts_t: np.ndarray) -> float:
    """KL divergence between diagonal Gaussians fitted per feature.

    Reported as an alignment diagnostic only, never optimized.  Variances are
    floored at 1e-8; asymmetric in its arguments, as KL is.
    """
    fs = np.asarray(feature_acts_s, dtype=np.float64)
    ft = np.asarray(feature_acts_t, dtype=np.float64)
    if fs.ndim != 2 or ft.ndim != 2 or fs.shape[0] != ft.shape[0]:
        raise BadShapeError("feature sets must be 2-d with equal feature counts")
    if fs.shape[1] < 2 or ft.shape[1] < 2:
        raise TooFewSamplesError("KL diagnostic needs >= 2 samples per domain")
    mu_s, mu_t = fs.mean(axis=1), ft.mean(axis=1)
    var_s = np.maximum(fs.var(axis=1), VAR_FLOOR)
    var_t = np.maximum(ft.var(axis=1), VAR_FLOOR)
    terms = 0.5 * (np.log(var_t / var_s) + (var_s + (mu_s - mu_t) ** 2) / var_t - 1.0)
    return float(np.sum(terms))


def _momentum_step(model: MlpModel, grads, vel_w, vel_b, lr: float, momentum: float):
    for i in range(model.n_layers):
        vel_w[i] = momentum * vel_w[i] - lr * grads.weights[i]
        vel_b[i] = momentum * vel_b[i] - lr * grads.biases[i]
        model.weights[i] = model.weights[i] + vel_w[i]
        model.biases[i] = model.biases[i] + vel_b[i]


def _epoch_metrics(
    model: MlpModel,
    source: LabeledBatch,
    target: UnlabeledBatch,
    config: TrainConfig,
    epoch: int,
    metric_kind: str,
    eval_labels: np.ndarray | None,
) -> EpochMetrics:
    trace_s = network.forward(model, source.inputs, config.alignment_layer_index)
    trace_t = network.forward(model, target.inputs, config.alignment_layer_index)
    cs = covariance(trace_s.feature_acts, config.jitter_rel, config.normalize_cov)
    ct = covariance(trace_t.feature_acts, config.jitter_rel, config.normalize_cov)
    acc = float("nan")
    if eval_labels is not None:
        acc = _accuracy(trace_t.probs, eval_labels)
    return EpochMetrics(
        epoch=epoch,
        h_source=network.cross_entropy(trace_s.probs, source.labels),
        e_target=network.entropy(trace_t.probs),
        pen_value=penalty_distance(cs, ct, metric_kind),
        target_accuracy=acc,
        kl_st=kl_diagnostic(trace_s.feature_acts, trace_t.feature_acts),
    )


def train_run(
    model: MlpModel,
    source: LabeledBatch,
    target: UnlabeledBatch,
    config: TrainConfig,
    eval_labels: np.ndarray | None = None,
) -> TrainRunResult:
    """Train a copy of ``model`` for ``config.epochs`` epochs.

    Deterministic per seed.  ``eval_labels`` (target ground truth) feeds only
    the per-epoch accuracy metric; passing None records NaN accuracy and
    changes nothing else.  On a non-finite loss the run aborts and returns the
    partial metrics with ``diverged`` set.
    """
    config.validate()
    if eval_labels is not None and np.asarray(eval_labels).shape[0] != target.n:
        raise BadShapeError("eval_labels row count must match the target set")
    model = model.copy()
    has_alignment = config.method in ("coral_euclidean", "meca_geodesic")
    penalty = AlignmentPenalty(
        kind=METHOD_PENALTY_KIND[config.method],
        lam=config.lambda_or_gamma if has_alignment else 0.0,
        jitter_rel=config.jitter_rel,
        normalize_cov=config.normalize_cov,
    )
    # the distance reported per epoch: the method's own penalty when it has
    # one, the geodesic distance as a diagnostic otherwise
    metric_kind = penalty.kind if has_alignment else "log_euclidean"

    rng = np.random.default_rng(config.seed)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    metrics: list[EpochMetrics] = []

    for epoch in range(1, config.epochs + 1):
        perm_s = rng.permutation(source.n)
        perm_t = rng.permutation(target.n)
        for start in range(0, source.n, config.batch_size):
            idx_s = perm_s[start : start + config.batch_size]
            if idx_s.size < 2:
                continue  # covariance needs two samples
            idx_t = perm_t[(start + np.arange(idx_s.size)) % target.n]
            xs, zs = source.inputs[:, idx_s], source.labels[idx_s]
            xt = target.inputs[:, idx_t]

            try:
                trace_s = network.forward(model, xs, config.alignment_layer_index)
                total = network.cross_entropy(trace_s.probs, zs)
                g_probs_s = network.grad_cross_entropy_wrt_probs(trace_s.probs, zs)

                if config.method == "source_only":
                    grads = network.backward(model, trace_s, g_probs_s, None)
                elif config.method == "entropy_reg":
                    trace_t = network.forward(model, xt, config.alignment_layer_index)
                    total += config.lambda_or_gamma * network.entropy(trace_t.probs)
                    g_probs_t = config.lambda_or_gamma * network.grad_entropy_wrt_probs(
                        trace_t.probs
                    )
                    grads = network.backward(model, trace_s, g_probs_s, None)
                    grads.add_(network.backward(model, trace_t, g_probs_t, None))
                else:
                    trace_t = network.forward(model, xt, config.alignment_layer_index)
                    pen_val, ga_s, ga_t = penalty_value_and_grads(
                        trace_s.feature_acts, trace_t.feature_acts, penalty
                    )
                    total += pen_val
                    grads = network.backward(model, trace_s, g_probs_s, ga_s)
                    grads.add_(network.backward(model, trace_t, None, ga_t))
            except (DegenerateMatrixError, NoConvergenceError):
                # overflowed activations poison the covariance path
                return TrainRunResult(model, metrics, diverged=True)

            if not np.isfinite(total):
                return TrainRunResult(model, metrics, diverged=True)
            _momentum_step(
                model, grads, vel_w, vel_b, config.learning_rate, config.momentum
            )

        try:
            em = _epoch_metrics(
                model, source, target, config, epoch, metric_kind, eval_labels
            )
        except (DegenerateMatrixError, NoConvergenceError):
            return TrainRunResult(model, metrics, diverged=True)
        finite = (
            np.isfinite(em.h_source)
            and np.isfinite(em.e_target)
            and np.isfinite(em.pen_value)
            and np.isfinite(em.kl_st)
        )
        if not finite:
            return TrainRunResult(model, metrics, diverged=True)
        metrics.append(em)
    return TrainRunResult(model, metrics, diverged=False)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_metrics_csv(metrics: list[EpochMetrics], path) -> None:
    """One row per epoch, floats with 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(METRICS_HEADER + "\n")
        for m in metrics:
            fh.write(
                ",".join(
                    [
                        str(m.epoch),
                        _fmt(m.h_source),
                        _fmt(m.e_target),
                        _fmt(m.pen_value),
                        _fmt(m.target_accuracy),
                        _fmt(m.kl_st),
                    ]
                )
                + "\n"
            )
