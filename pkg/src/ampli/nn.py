"""Minimal dense feed-forward network with exact reverse-mode gradients.

Layers: fully connected (Dense), ReLU, and batch normalization. Everything
is float64 numpy. The network assigns a stable integer id to each
parameterized layer; gradients travel as a flat vector per layer id
(weights first, then bias / scale then shift), which is the unit the
amplification machinery operates on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import NonFiniteError, ShapeError

# GradientSet: flat gradient vector per parameterized layer id.
GradientSet = dict[int, np.ndarray]


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-d batch [B, D], got shape {x.shape}")
    return x


class Dense:
    """Affine layer y = x @ w + b with uniform Glorot initialization."""

    kind = "dense"

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        if fan_in < 1 or fan_out < 1:
            raise ShapeError(f"dense dims must be positive, got ({fan_in}, {fan_out})")
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        self.w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        self.b = np.zeros(fan_out)

    @property
    def fan_in(self) -> int:
        return self.w.shape[0]

    @property
    def fan_out(self) -> int:
        return self.w.shape[1]

    @property
    def n_params(self) -> int:
        return self.w.size + self.b.size

    def parameters(self) -> list[np.ndarray]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray, train: bool):
        return x @ self.w + self.b, x

    def backward(self, cache, dout: np.ndarray):
        x = cache
        dw = x.T @ dout
        db = dout.sum(axis=0)
        dx = dout @ self.w.T
        return dx, np.concatenate([dw.ravel(), db])

    def apply_update(self, flat_grad: np.ndarray, lr: float) -> None:
        nw = self.w.size
        self.w -= lr * flat_grad[:nw].reshape(self.w.shape)
        self.b -= lr * flat_grad[nw:]


class ReLU:
    """Elementwise max(x, 0); no parameters."""

    kind = "relu"
    n_params = 0
    fan_in = None
    fan_out = None

    def parameters(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray, train: bool):
        mask = x > 0
        return np.where(mask, x, 0.0), mask

    def backward(self, cache, dout: np.ndarray):
        return dout * cache, None


class BatchNorm:
    """Per-feature batch normalization with learnable scale and shift.

    Train mode normalizes with batch mean and population variance and
    updates the running statistics; eval mode normalizes with the running
    statistics. Running statistics are not gradients and are never touched
    by an optimizer step.
    """

    kind = "batchnorm"

    def __init__(self, dim: int, eps: float = 1e-5, momentum: float = 0.1):
        if dim < 1:
            raise ShapeError(f"batchnorm dim must be positive, got {dim}")
        self.scale = np.ones(dim)
        self.shift = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.eps = eps
        self.momentum = momentum

    @property
    def fan_in(self) -> int:
        return self.scale.shape[0]

    fan_out = property(lambda self: self.scale.shape[0])

    @property
    def n_params(self) -> int:
        return self.scale.size + self.shift.size

    def parameters(self) -> list[np.ndarray]:
        return [self.scale, self.shift]

    def forward(self, x: np.ndarray, train: bool):
        if train:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mu) * inv_std
            m = self.momentum
            self.running_mean = (1.0 - m) * self.running_mean + m * mu
            self.running_var = (1.0 - m) * self.running_var + m * var
            return xhat * self.scale + self.shift, (xhat, inv_std)
        xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return xhat * self.scale + self.shift, None

    def backward(self, cache, dout: np.ndarray):
        if cache is None:
            raise ShapeError("batchnorm backward requires a train-mode cache")
        xhat, inv_std = cache
        batch = dout.shape[0]
        dscale = (dout * xhat).sum(axis=0)
        dshift = dout.sum(axis=0)
        dxhat = dout * self.scale
        dx = (inv_std / batch) * (
            batch * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )
        return dx, np.concatenate([dscale, dshift])

    def apply_update(self, flat_grad: np.ndarray, lr: float) -> None:
        ns = self.scale.size
        self.scale -= lr * flat_grad[:ns]
        self.shift -= lr * flat_grad[ns:]


@dataclass
class ActivationCache:
    """Opaque record produced by a train-mode forward pass."""

    network_token: int
    train: bool
    batch_size: int
    out_dim: int
    items: list[Any] = field(default_factory=list)


class Network:
    """Ordered layer stack with stable ids for parameterized layers.

    Ids run 0..L-1 over Dense/BatchNorm layers in declaration order and
    stay fixed for the life of the network.
    """

    def __init__(self, layers: list):
        if not layers:
            raise ShapeError("network needs at least one layer")
        width = None
        for i, layer in enumerate(layers):
            if layer.fan_in is not None:
                if width is not None and layer.fan_in != width:
                    raise ShapeError(
                        f"layer {i} ({layer.kind}): fan_in {layer.fan_in} does not "
                        f"match producer width {width}"
                    )
                width = layer.fan_out
        self.layers = list(layers)
        self.param_layers: list[tuple[int, Any]] = [
            (lid, layer)
            for lid, layer in enumerate(l for l in layers if l.n_params > 0)
        ]
        first = next((l for l in layers if l.fan_in is not None), None)
        if first is None:
            raise ShapeError("network has no layer with a declared input width")
        self.in_dim = first.fan_in
        self.out_dim = width

    @property
    def layer_ids(self) -> list[int]:
        return [lid for lid, _ in self.param_layers]

    def param_count(self, layer_id: int) -> int:
        return dict(self.param_layers)[layer_id].n_params

    def parameters(self) -> list[np.ndarray]:
        """All trainable arrays in declaration order (for snapshots and tests)."""
        out = []
        for _, layer in self.param_layers:
            out.extend(layer.parameters())
        return out

    def forward(self, x, train: bool = True) -> tuple[np.ndarray, ActivationCache]:
        x = _as_batch(x)
        if x.shape[1] != self.in_dim:
            raise ShapeError(
                f"layer 0 ({self.layers[0].kind}): expected input width "
                f"{self.in_dim}, got {x.shape[1]}"
            )
        if not np.isfinite(x).all():
            raise NonFiniteError("non-finite values in input batch")
        cache = ActivationCache(
            network_token=id(self), train=train, batch_size=x.shape[0], out_dim=0
        )
        for i, layer in enumerate(self.layers):
            try:
                x, item = layer.forward(x, train)
            except ValueError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from exc
            cache.items.append(item)
        cache.out_dim = x.shape[1]
        return x, cache

    def backward(self, cache: ActivationCache, dlogits: np.ndarray) -> GradientSet:
        """Exact gradients of a scalar loss w.r.t. every trainable parameter.

        `dlogits` is the loss gradient at the logits; `cache` must come from
        the immediately preceding train-mode forward on this network.
        """
        if cache.network_token != id(self) or len(cache.items) != len(self.layers):
            raise ShapeError("activation cache does not belong to this network")
        if not cache.train:
            raise ShapeError("backward requires a train-mode cache")
        dlogits = np.asarray(dlogits, dtype=np.float64)
        if dlogits.shape != (cache.batch_size, cache.out_dim):
            raise ShapeError(
                f"dlogits shape {dlogits.shape} does not match logits "
                f"({cache.batch_size}, {cache.out_dim})"
            )
        grads: GradientSet = {}
        dx = dlogits
        next_id = len(self.param_layers)
        for layer, item in zip(reversed(self.layers), reversed(cache.items)):
            dx, flat = layer.backward(item, dx)
            if layer.n_params > 0:
                next_id -= 1
                grads[next_id] = flat
        return dict(sorted(grads.items()))


def loss_softmax_ce(logits, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient at the logits.

    Stabilized with the log-sum-exp shift so saturated logits cannot
    overflow. Returns (loss, (softmax - onehot) / B).
    """
    logits = _as_batch(logits)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    batch, classes = logits.shape
    if labels.shape[0] != batch:
        raise ShapeError(f"{labels.shape[0]} labels for a batch of {batch}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= classes:
        raise ValueError(f"labels must lie in [0, {classes}), got {labels.min()}..{labels.max()}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.arange(batch)
    loss = float(-log_probs[rows, labels].mean())
    dlogits = np.exp(log_probs)
    dlogits[rows, labels] -= 1.0
    dlogits /= batch
    return loss, dlogits


def sgd_step(network: Network, grads: GradientSet, lr: float) -> Network:
    """Plain gradient descent: p <- p - lr * g for every trainable parameter.

    Updates the network in place and returns it. Batchnorm running
    statistics are untouched.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for lid, layer in network.param_layers:
        if lid not in grads:
            raise ValueError(f"gradient set is missing layer {lid} ({layer.kind})")
        flat = grads[lid]
        if flat.shape != (layer.n_params,):
            raise ShapeError(
                f"layer {lid} ({layer.kind}): gradient length {flat.shape} "
                f"!= parameter count {layer.n_params}"
            )
        layer.apply_update(flat, lr)
    return network


def build_mlp(
    in_dim: int,
    hidden: tuple[int, ...] | list[int],
    out_dim: int,
    *,
    batchnorm: bool = False,
    seed: int = 0,
) -> Network:
    """Seeded MLP factory: [Dense, (BatchNorm), ReLU] per hidden width, then
    a Dense output head."""
    rng = np.random.default_rng(seed)
    layers: list = []
    width = in_dim
    for h in hidden:
        layers.append(Dense(width, h, rng))
        if batchnorm:
            layers.append(BatchNorm(h))
        layers.append(ReLU())
        width = h
    layers.append(Dense(width, out_dim, rng))
    return Network(layers)
