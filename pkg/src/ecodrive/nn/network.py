"""Network containers, optimizers, soft target updates, and checkpoints.

Two container shapes cover every network in this project:

* ``Sequential`` chains layers over a single input.
* ``BranchNet`` runs a (possibly empty) trunk over a grid input, flattens it,
  concatenates one or more extra feature vectors, and runs a dense head.
  ``backward`` returns the gradient w.r.t. each extra input, which is what
  lets a Q network pass gradients back into the action-parameter network.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..errors import ConfigurationError, StateError, TrainingError
from .layers import Layer, layer_from_spec

CHECKPOINT_VERSION = 1


class Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = layers
        self._cache = None

    def forward(self, x: np.ndarray, keep_cache: bool = True) -> np.ndarray:
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        if keep_cache:
            self._cache = caches
        return x

    def backward(self, gy: np.ndarray, accumulate: bool = True) -> np.ndarray:
        if self._cache is None:
            raise StateError("backward called before forward")
        caches, self._cache = self._cache, None
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            gy = layer.backward(gy, c, accumulate=accumulate)
        return gy

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def out_shape(self, in_shape: tuple) -> tuple:
        for layer in self.layers:
            in_shape = layer.out_shape(in_shape)
        return in_shape

    def specs(self):
        return [layer.spec() for layer in self.layers]


class BranchNet:
    """Grid trunk -> flatten -> concat(extra inputs) -> dense head."""

    def __init__(self, trunk: Sequential, head: Sequential, extra_widths: list[int]):
        self.trunk = trunk
        self.head = head
        self.extra_widths = list(extra_widths)
        self._split = None

    def forward(self, grid: np.ndarray, *extras: np.ndarray, keep_cache: bool = True) -> np.ndarray:
        if len(extras) != len(self.extra_widths):
            raise ConfigurationError(
                f"expected {len(self.extra_widths)} extra inputs, got {len(extras)}")
        h = self.trunk.forward(grid, keep_cache=keep_cache)
        parts = [h]
        for width, e in zip(self.extra_widths, extras):
            if e.ndim != 2 or e.shape[1] != width:
                raise ConfigurationError(f"concat: expected (batch, {width}), got {e.shape}")
            parts.append(e)
        z = np.concatenate(parts, axis=1)
        if keep_cache:
            self._split = [h.shape[1]] + self.extra_widths
        return self.head.forward(z, keep_cache=keep_cache)

    def backward(self, gy: np.ndarray, accumulate: bool = True):
        """Returns (grid_grad, extra_grads list)."""
        if self._split is None:
            raise StateError("backward called before forward")
        gz = self.head.backward(gy, accumulate=accumulate)
        split, self._split = self._split, None
        bounds = np.cumsum(split)[:-1]
        pieces = np.split(gz, bounds, axis=1)
        ggrid = self.trunk.backward(pieces[0], accumulate=accumulate)
        return ggrid, pieces[1:]

    def params(self):
        return self.trunk.params() + self.head.params()

    def specs(self):
        return {"trunk": self.trunk.specs(),
                "concat_extra": self.extra_widths,
                "head": self.head.specs()}


def parameters_of(net) -> list[tuple[str, np.ndarray, np.ndarray]]:
    return net.params()


def zero_grads(net):
    for _, _, g in net.params():
        g[:] = 0.0


def copy_weights(dst, src):
    for (_, wd, _), (_, ws, _) in zip(dst.params(), src.params()):
        wd[:] = ws


def soft_update(target, online, tau: float):
    """target <- tau * online + (1 - tau) * target, per tensor."""
    for (_, wt, _), (_, wo, _) in zip(target.params(), online.params()):
        wt *= 1.0 - tau
        wt += tau * wo


def global_grad_norm(net) -> float:
    total = 0.0
    for _, _, g in net.params():
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_grad_norm(net, max_norm: float) -> float:
    norm = global_grad_norm(net)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for _, _, g in net.params():
            g *= scale
    return norm


class SGD:
    """Plain gradient step: w <- w - lr * grad, grads zeroed afterward."""

    def __init__(self, net, lr: float):
        self.net = net
        self.lr = lr

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        for name, w, g in self.net.params():
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in {name}")
            w -= lr * g
            g[:] = 0.0


class Adam:
    def __init__(self, net, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(w) for _, w, _ in net.params()]
        self.v = [np.zeros_like(w) for _, w, _ in net.params()]

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, (name, w, g) in enumerate(self.net.params()):
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in {name}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            w -= lr * (self.m[i] / b1t) / (np.sqrt(self.v[i] / b2t) + self.eps)
            g[:] = 0.0


def make_optimizer(kind: str, net, lr: float):
    if kind == "sgd":
        return SGD(net, lr)
    if kind == "adam":
        return Adam(net, lr)
    raise ConfigurationError(f"unknown optimizer {kind!r}")


# ---------------------------------------------------------------------------
# Checkpoint container: layer specs + named tensors, lossless at float64
# (json round-trips float64 via repr).
# ---------------------------------------------------------------------------

def net_state(net) -> dict:
    return {name: w.tolist() for name, w, _ in net.params()}


def load_net_state(net, state: dict):
    for name, w, _ in net.params():
        if name not in state:
            raise ConfigurationError(f"checkpoint missing tensor {name!r}")
        arr = np.asarray(state[name], dtype=np.float64)
        if arr.shape != w.shape:
            raise ConfigurationError(
                f"checkpoint tensor {name!r} has shape {arr.shape}, expected {w.shape}")
        w[:] = arr


def sequential_from_specs(specs: list[dict]) -> Sequential:
    return Sequential([layer_from_spec(s) for s in specs])


def branchnet_from_specs(spec: dict) -> BranchNet:
    trunk = sequential_from_specs(spec["trunk"])
    head = sequential_from_specs(spec["head"])
    return BranchNet(trunk, head, list(spec["concat_extra"]))


def save_checkpoint(path: str, payload: dict):
    payload = dict(payload)
    payload["version"] = CHECKPOINT_VERSION
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {payload.get('version')!r}")
    return payload
