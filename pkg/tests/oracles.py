"""Independent brute-force oracles the tests check the fast paths against.

Everything here recomputes results from first principles (raw gradient
streams, central finite differences, a bare training loop) without going
through the code paths under test.
"""

from __future__ import annotations

import copy

import numpy as np

from ampli.data import split_and_batch
from ampli.nn import Network, build_mlp, loss_softmax_ce, sgd_step


def stream_ratios(stream: np.ndarray) -> tuple[float, float]:
    """Direction ratios recomputed from a raw [iterations, scalars] stream."""
    signed = stream.sum(axis=0)
    absolute = np.abs(stream).sum(axis=0)
    total = absolute.sum()
    pooled = 0.0 if total == 0.0 else min(1.0, float(np.abs(signed).sum() / total))
    per = np.zeros_like(absolute)
    nz = absolute > 0
    per[nz] = np.abs(signed[nz]) / absolute[nz]
    return pooled, min(1.0, float(per.mean()))


def _layer_param_arrays(network: Network) -> list[tuple[int, list[np.ndarray]]]:
    return [(lid, layer.parameters()) for lid, layer in network.param_layers]


def finite_diff_gradients(network: Network, x, y, h: float = 1e-5) -> dict[int, np.ndarray]:
    """Central-difference loss gradients for every trainable scalar.

    Works on a deep copy so batchnorm running statistics of the original
    network are untouched.
    """
    net = copy.deepcopy(network)

    def loss_at() -> float:
        logits, _ = net.forward(x, train=True)
        loss, _ = loss_softmax_ce(logits, y)
        return loss

    grads: dict[int, np.ndarray] = {}
    for lid, arrays in _layer_param_arrays(net):
        parts = []
        for arr in arrays:
            flat = arr.reshape(-1)
            g = np.zeros(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_at()
                flat[i] = orig - h
                down = loss_at()
                flat[i] = orig
                g[i] = (up - down) / (2.0 * h)
            parts.append(g)
        grads[lid] = np.concatenate(parts)
    return grads


def rel_error(a: float, b: float) -> float:
    """Guarded relative error; near-zero pairs compare absolutely."""
    return abs(a - b) / max(1.0, abs(a), abs(b))


def relu_kink_safe(network: Network, x, tol: float = 5e-4) -> bool:
    """True when no ReLU input sits within `tol` of zero.

    A pre-activation inside the tolerance band can cross the kink under a
    finite-difference perturbation, invalidating the central-difference
    oracle for that draw.
    """
    net = copy.deepcopy(network)
    cur = np.asarray(x, dtype=np.float64)
    for layer in net.layers:
        if layer.kind == "relu" and (np.abs(cur) < tol).any():
            return False
        cur, _ = layer.forward(cur, train=True)
    return True


def bare_training_loop(ds, split, hidden, batchnorm, seed, batch_size, lr_by_epoch):
    """Uninstrumented reference trainer: forward, loss, backward, SGD step.

    No recording, no selection, no amplification hooks of any kind.
    Returns the trained network.
    """
    net = build_mlp(ds.dim, hidden, ds.class_count, batchnorm=batchnorm, seed=seed)
    for epoch, lr in enumerate(lr_by_epoch, start=1):
        batches, _ = split_and_batch(ds, split, batch_size, epoch)
        for xb, yb in batches:
            logits, cache = net.forward(xb, train=True)
            _, dlogits = loss_softmax_ce(logits, yb)
            sgd_step(net, net.backward(cache, dlogits), lr)
    return net
