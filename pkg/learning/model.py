"""
Model - tanh MLP feature extractor g, affine predictor h, hand-written
backward pass and the Adam optimizer
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import NumericalError, ShapeError

Layer = Tuple[np.ndarray, np.ndarray]


@dataclass
class ModelParams:
    """Extractor layers [(W, b), ...] with W of shape (in, out), and predictor (W, b).

    An empty extractor is the identity map, Z = X.
    """
    extractor: List[Layer]
    predictor: Layer

    def __post_init__(self):
        width = None
        for i, (W, b) in enumerate(self.extractor):
            if width is not None and W.shape[0] != width:
                raise ShapeError(f"extractor layer {i} expects {W.shape[0]} inputs, previous layer gives {width}")
            if b.shape != (W.shape[1],):
                raise ShapeError(f"extractor layer {i} bias has shape {b.shape}, expected ({W.shape[1]},)")
            width = W.shape[1]
        W, b = self.predictor
        if width is not None and W.shape[0] != width:
            raise ShapeError(f"predictor expects {W.shape[0]} inputs, extractor gives {width}")
        if b.shape != (W.shape[1],):
            raise ShapeError(f"predictor bias has shape {b.shape}, expected ({W.shape[1]},)")
        for name, arr in self.named():
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"parameter {name} is not finite")

    @property
    def input_dim(self) -> int:
        return self.extractor[0][0].shape[0] if self.extractor else self.predictor[0].shape[0]

    @property
    def representation_dim(self) -> int:
        return self.predictor[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.predictor[0].shape[1]

    def named(self) -> List[Tuple[str, np.ndarray]]:
        items = []
        for i, (W, b) in enumerate(self.extractor):
            items += [(f"extractor.{i}.W", W), (f"extractor.{i}.b", b)]
        items += [("predictor.W", self.predictor[0]), ("predictor.b", self.predictor[1])]
        return items

    def to_dict(self) -> Dict[str, np.ndarray]:
        return dict(self.named())

    @classmethod
    def from_dict(cls, arrays: Dict[str, np.ndarray]) -> 'ModelParams':
        layers = []
        i = 0
        while f"extractor.{i}.W" in arrays:
            layers.append((np.asarray(arrays[f"extractor.{i}.W"], dtype=np.float64),
                           np.asarray(arrays[f"extractor.{i}.b"], dtype=np.float64)))
            i += 1
        predictor = (np.asarray(arrays["predictor.W"], dtype=np.float64),
                     np.asarray(arrays["predictor.b"], dtype=np.float64))
        return cls(extractor=layers, predictor=predictor)

    def copy(self) -> 'ModelParams':
        return ModelParams.from_dict({k: v.copy() for k, v in self.named()})


def init_params(input_dim: int, hidden_sizes: Sequence[int], output_dim: int,
                rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    layers = []
    width = input_dim
    for size in hidden_sizes:
        layers.append((glorot(width, size), np.zeros(size)))
        width = size
    return ModelParams(extractor=layers, predictor=(glorot(width, output_dim), np.zeros(output_dim)))


def forward(params: ModelParams, X: np.ndarray, return_cache: bool = False):
    """Z = g(X) with tanh on every extractor layer; yhat = Z W + b.

    Returns:
        (Z, yhat), plus the activation cache for backward() when return_cache
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ShapeError(f"input must be n x {params.input_dim}, got shape {X.shape}")
    activations = [X]
    h = X
    for W, b in params.extractor:
        h = np.tanh(h @ W + b)
        activations.append(h)
    W, b = params.predictor
    yhat = h @ W + b
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(yhat))):
        raise NumericalError("nonfinite activation in forward pass")
    if return_cache:
        return h, yhat, activations
    return h, yhat


def backward(params: ModelParams, activations: List[np.ndarray],
             d_yhat: Optional[np.ndarray], d_Z: Optional[np.ndarray]) -> Dict[str, np.ndarray]:
    """Parameter gradients given dL/dyhat and an extra dL/dZ flowing into the representation."""
    grads = {name: np.zeros_like(arr) for name, arr in params.named()}
    Z = activations[-1]
    W, _ = params.predictor
    dh = np.zeros_like(Z)
    if d_yhat is not None:
        grads["predictor.W"] = Z.T @ d_yhat
        grads["predictor.b"] = d_yhat.sum(axis=0)
        dh = dh + d_yhat @ W.T
    if d_Z is not None:
        dh = dh + d_Z
    for i in range(len(params.extractor) - 1, -1, -1):
        Wi, _ = params.extractor[i]
        out = activations[i + 1]
        da = dh * (1.0 - out ** 2)
        grads[f"extractor.{i}.W"] = activations[i].T @ da
        grads[f"extractor.{i}.b"] = da.sum(axis=0)
        dh = da @ Wi.T
    return grads


def add_grads(*grad_dicts: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    total = {k: v.copy() for k, v in grad_dicts[0].items()}
    for g in grad_dicts[1:]:
        for k, v in g.items():
            total[k] += v
    return total


class Adam:
    """Bias-corrected Adam over the named parameter arrays of a ModelParams."""

    def __init__(self, params: ModelParams, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.named()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.named()}

    def step(self, params: ModelParams, grads: Dict[str, np.ndarray]) -> ModelParams:
        """Return updated parameters; the input params are left untouched."""
        self.t += 1
        updated = {}
        for name, arr in params.named():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g ** 2
            m_hat = self.m[name] / (1 - self.beta1 ** self.t)
            v_hat = self.v[name] / (1 - self.beta2 ** self.t)
            updated[name] = arr - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return ModelParams.from_dict(updated)
