"""Meta-training with attention over label sets.

Each training iteration runs, on one minibatch carrying M candidate label
sets:

1. a single forward pass caching the predictions ``pred``;
2. one throwaway gradient probe per label set at rate ``alpha`` producing a
   meta-updated classifier (the probe never mutates the live model);
3. a feature-feedback pass: the probe models' feature vectors, detached and
   stacked per sample;
4. a softmax attention over the stacked feedback producing per-sample,
   per-set weights on the simplex;
5. per-sample label sampling: the weighted sum of the one-hot label sets;
6. differentiable binarization, the smooth step sigmoid(k * (soft - t)),
   pushing the soft consensus toward {0, 1} while keeping gradients;
7. the live model update at rate ``beta`` (Adam) against the binarized
   target treated as a constant;
8. the attention-parameter update at rate ``beta`` (plain gradient),
   where the gradient flows through binarization, label sampling and the
   softmax into the attention weights while ``pred`` is held constant.

The weighted soft label is an exact loss reweighting: the BCE against the
weighted label equals the weight-averaged BCE against the individual sets
(see :func:`theorem1_gap`), which holds before binarization only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from .autodiff import (BCE_EPS, Tensor, add_bias, bce_loss, concat, constant, detach,
                       gradients, make_op, matmul, softmax)
from .data import Batch, LabeledDataset, consensus_labels, minibatches, one_hot
from .model import (Classifier, classifier_bytes, classifier_from_bytes, forward,
                    params_get, params_set, predict_class)
from .optim import AdamState, adam_init, adam_step, sgd_step

ATTENTION_CONCAT = "concat"   # one linear map from the stacked M*D vector to M logits
ATTENTION_SHARED = "shared"   # one D->1 scorer applied to each feature block


@dataclass(frozen=True)
class MetaConfig:
    alpha: float = 0.2            # probe (meta) learning rate
    beta: float = 1e-4            # global learning rate
    k: float = 50.0               # binarization sharpness
    t_threshold: float = 0.5      # binarization threshold
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    attention_mode: str = ATTENTION_CONCAT

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if not 0.0 < self.t_threshold < 1.0:
            raise ValueError(f"t_threshold must be in (0, 1), got {self.t_threshold}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.attention_mode not in (ATTENTION_CONCAT, ATTENTION_SHARED):
            raise ValueError(f"unknown attention_mode {self.attention_mode!r}")


@dataclass(frozen=True)
class AttentionParams:
    """Learnable map from stacked feedback features to per-set weights."""

    n_sets: int
    feat_dim: int
    w: Tensor
    b: Tensor
    mode: str = ATTENTION_CONCAT


def attention_init(n_sets: int, feat_dim: int, mode: str = ATTENTION_CONCAT) -> AttentionParams:
    """Zero-initialized attention: every sample starts at uniform weights."""
    if n_sets < 1 or feat_dim < 1:
        raise ValueError("n_sets and feat_dim must be positive")
    if mode == ATTENTION_CONCAT:
        w = Tensor(np.zeros((n_sets * feat_dim, n_sets)), requires_grad=True, copy=False)
        b = Tensor(np.zeros(n_sets), requires_grad=True, copy=False)
    elif mode == ATTENTION_SHARED:
        w = Tensor(np.zeros((feat_dim, 1)), requires_grad=True, copy=False)
        b = Tensor(np.zeros(1), requires_grad=True, copy=False)
    else:
        raise ValueError(f"unknown attention mode {mode!r}")
    return AttentionParams(n_sets=n_sets, feat_dim=feat_dim, w=w, b=b, mode=mode)


@dataclass(frozen=True)
class IterationTrace:
    weight_means: np.ndarray              # [M] batch-mean attention weights
    loss_pre: float                       # loss value driving both updates
    model_update_norm: float
    attn_update_norm: float
    weights: np.ndarray | None = None     # [B, M] per-sample weights (full trace)
    loss_post: float | None = None        # same-batch loss after the update (full trace)


@dataclass
class EpochStats:
    train_loss: float
    val_accuracy: float | None = None
    val_loss: float | None = None
    mean_weights: list[float] | None = None


@dataclass
class TrainResult:
    model: Classifier                     # best-validation snapshot (or last)
    last_model: Classifier
    attn: AttentionParams | None
    history: list[EpochStats]
    best_epoch: int
    iteration_weights: list[list[np.ndarray]] = field(default_factory=list)  # per epoch


# ---------------------------------------------------------------------------
# single operations
# ---------------------------------------------------------------------------


def meta_step(model: Classifier, y_m: np.ndarray, alpha: float, pred: Tensor) -> Classifier:
    """One throwaway gradient probe toward label set ``y_m``.

    ``pred`` must be the cached, graph-connected forward output of ``model``
    for the current batch; the probe returns a new classifier and leaves the
    input model untouched.
    """
    loss = bce_loss(pred, constant(y_m))
    if not np.isfinite(loss.item()):
        raise ValueError("non-finite meta loss")
    params = params_get(model)
    grads = gradients(loss, params)
    return params_set(model, sgd_step(params, grads, alpha))


def collect_feedback(meta_models: Sequence[Classifier], x, aux=None) -> Tensor:
    """Per-sample stack of the probe models' feature vectors, detached.

    Returns a constant [B, M*D] tensor; no later backward pass can reach the
    probe parameters through it.
    """
    feats = [detach(forward(m, x, aux).features) for m in meta_models]
    return constant(np.concatenate([f.data for f in feats], axis=1))


def attend(attn: AttentionParams, stacked: Tensor) -> Tensor:
    """Per-sample weights over the M label sets: softmax of a learned linear
    map of the stacked feedback features."""
    m, d = attn.n_sets, attn.feat_dim
    if stacked.data.ndim != 2 or stacked.shape[1] != m * d:
        raise ValueError(f"stacked features {stacked.shape} do not match M*D = {m}*{d}")
    if attn.mode == ATTENTION_CONCAT:
        logits = add_bias(matmul(stacked, attn.w), attn.b)
    else:
        blocks = [matmul(constant(stacked.data[:, i * d:(i + 1) * d]), attn.w) for i in range(m)]
        joined = concat(blocks, axis=1)
        bias = attn.b
        logits = make_op(joined.data + bias.data[0], (joined, bias),
                         lambda g: (g, np.array([g.sum()])))
    return softmax(logits)


def sample_label(weights: Tensor, label_sets: np.ndarray) -> Tensor:
    """Convex combination of the one-hot label sets under per-sample weights.

    ``weights`` is [B, M] (or [M] for one sample), ``label_sets`` is a
    constant [M, B, N] (or [M, N]) array of binary vectors.
    """
    labels = np.ascontiguousarray(label_sets, dtype=np.float64)
    single = weights.data.ndim == 1
    w2 = weights.data.reshape(1, -1) if single else weights.data
    lab3 = labels.reshape(labels.shape[0], 1, -1) if labels.ndim == 2 else labels
    if lab3.shape[0] != w2.shape[1] or lab3.shape[1] != w2.shape[0]:
        raise ValueError(f"label sets {labels.shape} do not match weights {weights.shape}")
    out = K.weighted_label_fwd(np.ascontiguousarray(w2), lab3)

    def grad_fn(g):
        g2 = g.reshape(lab3.shape[1], lab3.shape[2])
        gw = K.weighted_label_grad(np.ascontiguousarray(g2), lab3)
        return (gw.reshape(weights.shape),)

    return make_op(out[0] if single else out, (weights,), grad_fn)


def binarize(y_soft: Tensor, k: float, t: float) -> Tensor:
    """Differentiable binarization sigmoid(k * (y - t)); strictly monotone,
    maps [0, 1] into (0, 1), derivative k * out * (1 - out)."""
    if k <= 0:
        raise ValueError("k must be positive")
    out = K.binarize(np.ascontiguousarray(y_soft.data).ravel(), float(k), float(t)) \
        .reshape(y_soft.shape)
    return make_op(out, (y_soft,), lambda g: (g * k * out * (1.0 - out),))


def final_step(model: Classifier, y_tilde: Tensor, pred: Tensor,
               adam_state: AdamState) -> tuple[Classifier, AdamState, float]:
    """Model update against the binarized target held constant. Returns the
    new classifier, the advanced Adam state and the driving loss value."""
    loss = bce_loss(pred, detach(y_tilde))
    value = loss.item()
    if not np.isfinite(value):
        raise ValueError("non-finite final loss")
    params = params_get(model)
    grads = gradients(loss, params)
    new_params, new_state = adam_step(adam_state, params, grads)
    return params_set(model, new_params), new_state, value


def attention_step(attn: AttentionParams, label_sets: np.ndarray, stacked: Tensor,
                   pred: Tensor, k: float, t: float, beta: float) -> AttentionParams:
    """Attention-parameter update: gradient of the BCE between the constant
    predictions and the binarized sampled label, flowing through binarization,
    the label sum and the softmax into the linear map."""
    weights = attend(attn, stacked)
    y_tilde = binarize(sample_label(weights, label_sets), k, t)
    loss = bce_loss(detach(pred), y_tilde)
    if not np.isfinite(loss.item()):
        raise ValueError("non-finite attention loss")
    gw, gb = gradients(loss, [attn.w, attn.b])
    new_w, new_b = sgd_step([attn.w, attn.b], [gw, gb], beta)
    return replace(attn, w=new_w, b=new_b)


_MODE_CODES = {ATTENTION_CONCAT: 0, ATTENTION_SHARED: 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


def save_checkpoint(model: Classifier, attn: AttentionParams, path) -> None:
    """Classifier parameters (model format) with the attention parameters
    appended in the same flat layout: int64 [n_sets, feat_dim, mode] then the
    row-major float64 weight matrix and bias."""
    attn_header = np.array([attn.n_sets, attn.feat_dim, _MODE_CODES[attn.mode]],
                           dtype=np.int64)
    Path(path).write_bytes(classifier_bytes(model) + attn_header.tobytes()
                           + attn.w.data.tobytes() + attn.b.data.tobytes())


def load_checkpoint(path) -> tuple[Classifier, AttentionParams]:
    data = Path(path).read_bytes()
    model, offset = classifier_from_bytes(data)
    n_sets, feat_dim, mode_code = (int(v) for v in
                                   np.frombuffer(data, np.int64, 3, offset=offset))
    offset += 3 * 8
    mode = _MODE_NAMES[mode_code]
    template = attention_init(n_sets, feat_dim, mode)
    w_size = template.w.data.size
    w = np.frombuffer(data, np.float64, w_size, offset=offset)
    offset += w_size * 8
    b = np.frombuffer(data, np.float64, template.b.data.size, offset=offset)
    attn = AttentionParams(n_sets=n_sets, feat_dim=feat_dim,
                           w=Tensor(w.reshape(template.w.shape).copy(),
                                    requires_grad=True, copy=False),
                           b=Tensor(b.copy(), requires_grad=True, copy=False),
                           mode=mode)
    return model, attn


def reweighted_loss(pred, label_sets, weights) -> float:
    """Weighted sum of per-set BCE losses, sum_m w_m * L(pred, y_m)."""
    p = np.ascontiguousarray(pred.data if isinstance(pred, Tensor) else pred,
                             dtype=np.float64).ravel()
    sets = np.asarray(label_sets, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if sets.shape[0] != w.size:
        raise ValueError(f"{sets.shape[0]} label sets but {w.size} weights")
    total = 0.0
    for m in range(w.size):
        total += w[m] * K.bce_forward(p, np.ascontiguousarray(sets[m]).ravel(), BCE_EPS)
    return total


def theorem1_gap(pred, label_sets, weights) -> float:
    """|L(pred, sum_m w_m y_m) - sum_m w_m L(pred, y_m)|, evaluated on the
    un-binarized weighted label where the equality is exact."""
    p = np.ascontiguousarray(pred.data if isinstance(pred, Tensor) else pred,
                             dtype=np.float64).ravel()
    sets = np.asarray(label_sets, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64).ravel()
    mixed = np.tensordot(w, sets, axes=(0, 0))
    lhs = K.bce_forward(p, np.ascontiguousarray(mixed).ravel(), BCE_EPS)
    return abs(lhs - reweighted_loss(p, sets, w))


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------


def train_iteration(model: Classifier, attn: AttentionParams, batch: Batch,
                    config: MetaConfig, adam_state: AdamState,
                    full_trace: bool = False):
    """One full pass of the meta-training procedure on one minibatch."""
    if batch.label_sets.shape[0] != attn.n_sets:
        raise ValueError(f"batch carries {batch.label_sets.shape[0]} label sets, "
                         f"attention expects {attn.n_sets}")
    fwd = forward(model, batch.x, batch.aux)
    pred = fwd.probs

    metas = [meta_step(model, batch.label_sets[m], config.alpha, pred)
             for m in range(attn.n_sets)]
    stacked = collect_feedback(metas, batch.x, batch.aux)

    weights = attend(attn, stacked)
    y_tilde = binarize(sample_label(weights, batch.label_sets),
                       config.k, config.t_threshold)

    new_model, new_state, loss_pre = final_step(model, y_tilde, pred, adam_state)
    new_attn = attention_step(attn, batch.label_sets, stacked, pred,
                              config.k, config.t_threshold, config.beta)

    model_delta = np.sqrt(sum(float(np.sum((a.data - b.data) ** 2))
                              for a, b in zip(new_model.params, model.params)))
    attn_delta = np.sqrt(float(np.sum((new_attn.w.data - attn.w.data) ** 2))
                         + float(np.sum((new_attn.b.data - attn.b.data) ** 2)))
    loss_post = None
    per_sample = None
    if full_trace:
        post = bce_loss(forward(new_model, batch.x, batch.aux).probs, detach(y_tilde))
        loss_post = post.item()
        per_sample = weights.data.copy()
    trace = IterationTrace(weight_means=weights.data.mean(axis=0),
                           loss_pre=loss_pre,
                           model_update_norm=model_delta,
                           attn_update_norm=attn_delta,
                           weights=per_sample,
                           loss_post=loss_post)
    return new_model, new_attn, new_state, trace


def _evaluate_noisy(model: Classifier, ds: LabeledDataset, target_labels: np.ndarray):
    """(accuracy, bce loss) of the model against the given noisy targets."""
    fwd = forward(model, ds.features, ds.aux)
    predicted = predict_class(fwd)
    acc = float(np.mean(predicted == target_labels))
    loss = bce_loss(fwd.probs, constant(one_hot(target_labels, ds.n_classes)))
    return acc, loss.item()


def train_attention(model: Classifier, train_ds: LabeledDataset, config: MetaConfig,
                    val_ds: LabeledDataset | None = None,
                    attn: AttentionParams | None = None,
                    full_trace: bool = False,
                    trace_hook=None) -> TrainResult:
    """Run the full meta-training loop over the dataset's label sets.

    Validation (when given) scores the model against the plurality vote of
    the noisy label sets; the returned ``model`` is the best-validation
    snapshot and ``last_model`` the final iterate.
    """
    if train_ds.n_sets < 1:
        raise ValueError("training dataset carries no label sets")
    feat_dim = model.feature_dim + model.aux_dim
    if attn is None:
        attn = attention_init(train_ds.n_sets, feat_dim, config.attention_mode)
    adam_state = adam_init(params_get(model), lr=config.beta)

    val_targets = consensus_labels(val_ds) if val_ds is not None else None
    history: list[EpochStats] = []
    iteration_weights: list[list[np.ndarray]] = []
    best_acc, best_epoch, best_model = -np.inf, -1, model
    iteration = 0

    for epoch in range(config.epochs):
        losses, epoch_weights = [], []
        for i, batch in enumerate(minibatches(train_ds, config.batch_size,
                                              config.seed, epoch)):
            try:
                model, attn, adam_state, trace = train_iteration(
                    model, attn, batch, config, adam_state, full_trace=full_trace)
            except ValueError as err:
                raise ValueError(f"epoch {epoch}, batch {i}: {err}") from err
            losses.append(trace.loss_pre)
            epoch_weights.append(trace.weight_means)
            if trace_hook is not None:
                trace_hook(iteration, trace)
            iteration += 1
        iteration_weights.append(epoch_weights)

        stats = EpochStats(train_loss=float(np.mean(losses)) if losses else float("nan"),
                           mean_weights=[float(v) for v in np.mean(epoch_weights, axis=0)]
                           if epoch_weights else None)
        if val_ds is not None:
            stats.val_accuracy, stats.val_loss = _evaluate_noisy(model, val_ds, val_targets)
            if stats.val_accuracy > best_acc:
                best_acc, best_epoch, best_model = stats.val_accuracy, epoch, model
        history.append(stats)

    if val_ds is None or best_epoch < 0:
        best_model, best_epoch = model, max(config.epochs - 1, 0)
    return TrainResult(model=best_model, last_model=model, attn=attn, history=history,
                       best_epoch=best_epoch, iteration_weights=iteration_weights)


def train_baseline(model: Classifier, train_ds: LabeledDataset, target,
                   config: MetaConfig, val_ds: LabeledDataset | None = None) -> TrainResult:
    """Plain Adam + BCE training on one fixed label set (``target`` an index)
    or on the per-sample average of all sets (``target="avg"``), with the
    same data order as the attention trainer under the same seed."""
    if train_ds.n_sets < 1:
        raise ValueError("training dataset carries no label sets")
    if target != "avg" and not 0 <= int(target) < train_ds.n_sets:
        raise ValueError(f"label set index {target} out of range")
    adam_state = adam_init(params_get(model), lr=config.beta)

    if val_ds is not None:
        val_targets = (consensus_labels(val_ds) if target == "avg"
                       else val_ds.label_sets[int(target)].labels)
    history: list[EpochStats] = []
    best_acc, best_epoch, best_model = -np.inf, -1, model

    for epoch in range(config.epochs):
        losses = []
        for i, batch in enumerate(minibatches(train_ds, config.batch_size,
                                              config.seed, epoch)):
            target_arr = (batch.label_sets.mean(axis=0) if target == "avg"
                          else batch.label_sets[int(target)])
            fwd = forward(model, batch.x, batch.aux)
            loss = bce_loss(fwd.probs, constant(target_arr))
            value = loss.item()
            if not np.isfinite(value):
                raise ValueError(f"epoch {epoch}, batch {i}: non-finite loss")
            grads = gradients(loss, params_get(model))
            new_params, adam_state = adam_step(adam_state, params_get(model), grads)
            model = params_set(model, new_params)
            losses.append(value)

        stats = EpochStats(train_loss=float(np.mean(losses)) if losses else float("nan"))
        if val_ds is not None:
            stats.val_accuracy, stats.val_loss = _evaluate_noisy(model, val_ds, val_targets)
            if stats.val_accuracy > best_acc:
                best_acc, best_epoch, best_model = stats.val_accuracy, epoch, model
        history.append(stats)

    if val_ds is None or best_epoch < 0:
        best_model, best_epoch = model, max(config.epochs - 1, 0)
    return TrainResult(model=best_model, last_model=model, attn=None, history=history,
                       best_epoch=best_epoch)
