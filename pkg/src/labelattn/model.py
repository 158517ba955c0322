"""Desk-scale multi-label classifier: a dense ReLU stack producing a feature
vector, an optional auxiliary-feature concatenation, and a per-class sigmoid
head. Classifiers are immutable; parameter updates produce new instances."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor, add_bias, concat, constant, matmul, relu, sigmoid


@dataclass(frozen=True)
class Classifier:
    layer_dims: tuple[int, ...]          # input_dim, hidden..., feature_dim
    n_classes: int
    aux_dim: int
    params: tuple[Tensor, ...]           # W1, b1, ..., Wk, bk, head_W, head_b

    @property
    def feature_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass(frozen=True)
class ForwardResult:
    features: Tensor                     # penultimate activations, post-aux concat
    logits: Tensor
    probs: Tensor


def classifier_init(layer_dims, n_classes: int, aux_dim: int = 0,
                    rng: np.random.Generator | None = None) -> Classifier:
    """He-scaled normal weights (std = sqrt(2/fan_in)), zero biases."""
    layer_dims = tuple(int(d) for d in layer_dims)
    if len(layer_dims) < 2 or any(d < 1 for d in layer_dims) or n_classes < 1 or aux_dim < 0:
        raise ValueError(f"invalid dimensions: layer_dims={layer_dims}, "
                         f"n_classes={n_classes}, aux_dim={aux_dim}")
    if rng is None:
        rng = np.random.default_rng(0)
    params: list[Tensor] = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        params.append(Tensor(w, requires_grad=True, copy=False))
        params.append(Tensor(np.zeros(fan_out), requires_grad=True, copy=False))
    head_in = layer_dims[-1] + aux_dim
    head_w = rng.normal(0.0, np.sqrt(2.0 / head_in), size=(head_in, n_classes))
    params.append(Tensor(head_w, requires_grad=True, copy=False))
    params.append(Tensor(np.zeros(n_classes), requires_grad=True, copy=False))
    return Classifier(layer_dims=layer_dims, n_classes=n_classes, aux_dim=aux_dim,
                      params=tuple(params))


def forward(model: Classifier, x, aux=None) -> ForwardResult:
    """Differentiable forward pass over a batch [B, input_dim]."""
    h = x if isinstance(x, Tensor) else constant(x)
    if h.data.ndim != 2 or h.shape[1] != model.layer_dims[0]:
        raise ValueError(f"input width {h.shape} does not match layer_dims[0]={model.layer_dims[0]}")
    if aux is not None and model.aux_dim == 0:
        raise ValueError("auxiliary features supplied to a model with aux_dim=0")
    if aux is None and model.aux_dim > 0:
        raise ValueError(f"model expects auxiliary features of width {model.aux_dim}")

    for i in range(len(model.layer_dims) - 1):
        h = relu(add_bias(matmul(h, model.params[2 * i]), model.params[2 * i + 1]))

    feats = h
    if model.aux_dim > 0:
        a = aux if isinstance(aux, Tensor) else constant(aux)
        if a.data.ndim != 2 or a.shape[1] != model.aux_dim or a.shape[0] != h.shape[0]:
            raise ValueError(f"aux shape {a.shape} does not match (batch, {model.aux_dim})")
        feats = concat([feats, a], axis=1)

    logits = add_bias(matmul(feats, model.params[-2]), model.params[-1])
    return ForwardResult(features=feats, logits=logits, probs=sigmoid(logits))


def params_get(model: Classifier) -> list[Tensor]:
    return list(model.params)


def params_set(model: Classifier, params) -> Classifier:
    """New classifier with copied parameters; shares nothing mutable."""
    params = list(params)
    if len(params) != len(model.params):
        raise ValueError(f"expected {len(model.params)} parameter tensors, got {len(params)}")
    fresh = []
    for old, new in zip(model.params, params):
        arr = new.data if isinstance(new, Tensor) else np.asarray(new, dtype=np.float64)
        if arr.shape != old.data.shape:
            raise ValueError(f"parameter shape {arr.shape} does not match {old.data.shape}")
        fresh.append(Tensor(arr.copy(), requires_grad=True, copy=False))
    return Classifier(layer_dims=model.layer_dims, n_classes=model.n_classes,
                      aux_dim=model.aux_dim, params=tuple(fresh))


def predict_class(result: ForwardResult) -> np.ndarray | int:
    """Argmax over probabilities; ties break toward the lowest index."""
    probs = result.probs.data
    if probs.ndim == 1:
        return int(np.argmax(probs))
    return np.argmax(probs, axis=1)


def param_shapes(layer_dims, n_classes: int, aux_dim: int) -> list[tuple[int, ...]]:
    """Parameter shapes in declaration order: (W, b) per layer, then the head."""
    shapes: list[tuple[int, ...]] = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        shapes.extend([(fan_in, fan_out), (fan_out,)])
    shapes.extend([(layer_dims[-1] + aux_dim, n_classes), (n_classes,)])
    return shapes


def classifier_bytes(model: Classifier) -> bytes:
    """Flat binary layout: int64 header [n_dims, *layer_dims, n_classes,
    aux_dim] followed by row-major float64 parameters in declaration order."""
    header = np.array([len(model.layer_dims), *model.layer_dims,
                       model.n_classes, model.aux_dim], dtype=np.int64)
    flat = np.concatenate([p.data.ravel() for p in model.params])
    return header.tobytes() + flat.tobytes()


def classifier_from_bytes(data: bytes, offset: int = 0) -> tuple[Classifier, int]:
    """Parse one classifier; returns (model, offset past its payload)."""
    n_dims = int(np.frombuffer(data, dtype=np.int64, count=1, offset=offset)[0])
    header = np.frombuffer(data, dtype=np.int64, count=n_dims + 3, offset=offset)
    layer_dims = tuple(int(v) for v in header[1:1 + n_dims])
    n_classes, aux_dim = int(header[-2]), int(header[-1])
    offset += header.nbytes
    params = []
    for shape in param_shapes(layer_dims, n_classes, aux_dim):
        size = int(np.prod(shape))
        arr = np.frombuffer(data, dtype=np.float64, count=size, offset=offset)
        if arr.size != size:
            raise ValueError(f"parameter payload truncated at byte offset {offset}")
        params.append(Tensor(arr.reshape(shape).copy(), requires_grad=True, copy=False))
        offset += size * 8
    return Classifier(layer_dims=layer_dims, n_classes=n_classes, aux_dim=aux_dim,
                      params=tuple(params)), offset


def save_params(model: Classifier, path) -> None:
    Path(path).write_bytes(classifier_bytes(model))


def load_params(path) -> Classifier:
    data = Path(path).read_bytes()
    model, offset = classifier_from_bytes(data)
    if offset != len(data):
        raise ValueError(f"parameter payload has {len(data) - offset} trailing bytes")
    return model
