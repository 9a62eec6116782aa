"""Neural network layers with exact analytic backpropagation.

All tensors are float64 numpy arrays with a leading batch dimension.
Convolutional layers use NHWC layout. Each layer owns its weights and a
parallel gradient accumulator; ``forward`` returns the output plus a cache
object that ``backward`` consumes.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError

NEG_INF = -np.inf


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float64)


def _pair(value) -> tuple[int, int]:
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


class Layer:
    """Base layer: parameter-free unless overridden."""

    name = "layer"

    def params(self):
        """Ordered (name, weight, grad) triples; grads mirror weight shapes."""
        return []

    def forward(self, x: np.ndarray):
        raise NotImplementedError

    def backward(self, gy: np.ndarray, cache, accumulate: bool = True) -> np.ndarray:
        raise NotImplementedError

    def out_shape(self, in_shape: tuple) -> tuple:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None,
                 name: str = "dense", dtype=np.float64):
        if in_features < 1 or out_features < 1:
            raise ConfigurationError(f"{name}: units must be >= 1")
        self.name = name
        self.dtype = np.dtype(dtype)
        self.in_features = in_features
        self.out_features = out_features
        if rng is None:
            self.w = np.zeros((in_features, out_features), dtype=self.dtype)
        else:
            self.w = glorot_uniform(rng, (in_features, out_features),
                                    in_features, out_features).astype(self.dtype)
        self.b = np.zeros(out_features, dtype=self.dtype)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def params(self):
        return [(f"{self.name}.w", self.w, self.gw), (f"{self.name}.b", self.b, self.gb)]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ConfigurationError(
                f"{self.name}: expected input (batch, {self.in_features}), got {x.shape}")
        return x @ self.w + self.b, x

    def backward(self, gy, cache, accumulate=True):
        x = cache
        if accumulate:
            self.gw += x.T @ gy
            self.gb += gy.sum(axis=0)
        return gy @ self.w.T

    def out_shape(self, in_shape):
        return (self.out_features,)

    def spec(self):
        return {"kind": "dense", "name": self.name, "in": self.in_features,
                "out": self.out_features, "dtype": self.dtype.name}


class Conv2D(Layer):
    """2-D convolution, NHWC layout, zero padding.

    Patch gathering uses kernel-major column blocks (each block a contiguous
    slab) with one accumulated GEMM per kernel offset, and scratch arrays are
    reused between calls keyed by input shape: the tensors here are small
    enough that allocation and strided-copy overhead, not FLOPs, dominate.
    """

    def __init__(self, in_channels: int, filters: int, kernel, stride=1, padding=0,
                 rng: np.random.Generator | None = None, name: str = "conv",
                 dtype=np.float64):
        self.name = name
        self.dtype = np.dtype(dtype)
        self.kh, self.kw = _pair(kernel)
        self.sh, self.sw = _pair(stride)
        self.ph, self.pw = _pair(padding)
        if self.kh < 1 or self.kw < 1 or self.sh < 1 or self.sw < 1:
            raise ConfigurationError(f"{name}: kernel and stride must be >= 1")
        if self.ph < 0 or self.pw < 0 or filters < 1:
            raise ConfigurationError(f"{name}: padding must be >= 0 and filters >= 1")
        self.in_channels = in_channels
        self.filters = filters
        fan_in = self.kh * self.kw * in_channels
        fan_out = self.kh * self.kw * filters
        if rng is None:
            self.w = np.zeros((self.kh, self.kw, in_channels, filters), dtype=self.dtype)
        else:
            self.w = glorot_uniform(rng, (self.kh, self.kw, in_channels, filters),
                                    fan_in, fan_out).astype(self.dtype)
        self.b = np.zeros(filters, dtype=self.dtype)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._scratch: dict = {}

    def params(self):
        return [(f"{self.name}.w", self.w, self.gw), (f"{self.name}.b", self.b, self.gb)]

    def _dims(self, h, w):
        oh = (h + 2 * self.ph - self.kh) // self.sh + 1
        ow = (w + 2 * self.pw - self.kw) // self.sw + 1
        if oh < 1 or ow < 1:
            raise ConfigurationError(f"{self.name}: output dims {oh}x{ow} for input {h}x{w}")
        return oh, ow

    def _active_offsets(self, h, w, oh, ow):
        """Kernel offsets whose slices touch real data: a slice living
        entirely in the zero padding contributes nothing but bias."""
        active = []
        for u in range(self.kh):
            rows = range(u, u + self.sh * oh, self.sh)
            if not any(self.ph <= r < self.ph + h for r in rows):
                continue
            for v in range(self.kw):
                cols = range(v, v + self.sw * ow, self.sw)
                if any(self.pw <= col < self.pw + w for col in cols):
                    active.append((u, v))
        return active

    def _buffers(self, b, h, w):
        key = (b, h, w)
        buf = self._scratch.get(key)
        if buf is None:
            oh, ow = self._dims(h, w)
            c = self.in_channels
            buf = {
                "oh": oh, "ow": ow,
                "active": self._active_offsets(h, w, oh, ow),
                "xp": np.zeros((b, h + 2 * self.ph, w + 2 * self.pw, c), dtype=self.dtype),
                "cols": np.empty((self.kh, self.kw, b, oh, ow, c), dtype=self.dtype),
                "y2": np.empty((b * oh * ow, self.filters), dtype=self.dtype),
                "gxp": np.empty((b, h + 2 * self.ph, w + 2 * self.pw, c), dtype=self.dtype),
            }
            self._scratch[key] = buf
        return buf

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ConfigurationError(
                f"{self.name}: expected input (batch, h, w, {self.in_channels}), got {x.shape}")
        b, h, w, c = x.shape
        buf = self._buffers(b, h, w)
        oh, ow = buf["oh"], buf["ow"]
        xp = buf["xp"]
        xp[:, self.ph:self.ph + h, self.pw:self.pw + w, :] = x
        cols = buf["cols"]
        y2 = buf["y2"]
        y2[:] = self.b
        for u, v in buf["active"]:
            block = cols[u, v]
            block[:] = xp[:, u:u + self.sh * oh:self.sh,
                          v:v + self.sw * ow:self.sw, :]
            y2 += block.reshape(-1, c) @ self.w[u, v]
        return y2.reshape(b, oh, ow, self.filters).copy(), (b, h, w, buf)

    def backward(self, gy, cache, accumulate=True):
        b, h, w, buf = cache
        oh, ow = buf["oh"], buf["ow"]
        c = self.in_channels
        cols = buf["cols"]
        gy2 = np.ascontiguousarray(gy).reshape(b * oh * ow, self.filters)
        gxp = buf["gxp"]
        gxp[:] = 0.0
        for u, v in buf["active"]:
            if accumulate:
                self.gw[u, v] += cols[u, v].reshape(-1, c).T @ gy2
            gxp[:, u:u + self.sh * oh:self.sh, v:v + self.sw * ow:self.sw, :] += \
                (gy2 @ self.w[u, v].T).reshape(b, oh, ow, c)
        if accumulate:
            self.gb += gy2.sum(axis=0)
        return gxp[:, self.ph:self.ph + h, self.pw:self.pw + w, :].copy()

    def out_shape(self, in_shape):
        h, w, _ = in_shape
        oh, ow = self._dims(h, w)
        return (oh, ow, self.filters)

    def spec(self):
        return {"kind": "conv2d", "name": self.name, "in_channels": self.in_channels,
                "filters": self.filters, "kernel": [self.kh, self.kw],
                "stride": [self.sh, self.sw], "padding": [self.ph, self.pw],
                "dtype": self.dtype.name}


class MaxPool2D(Layer):
    """Max pooling; padded cells hold -inf so they never win the max.

    The window maximum and argmax are computed with pairwise ufunc passes
    over per-offset slabs (reused between calls), which is far cheaper here
    than a generic reduction; ties resolve to the first window offset.
    """

    def __init__(self, kernel, stride=None, padding=0, name: str = "maxpool"):
        self.name = name
        self.kh, self.kw = _pair(kernel)
        self.sh, self.sw = _pair(stride if stride is not None else kernel)
        self.ph, self.pw = _pair(padding)
        if self.kh < 1 or self.kw < 1 or self.sh < 1 or self.sw < 1 or self.ph < 0 or self.pw < 0:
            raise ConfigurationError(f"{name}: bad kernel/stride/padding")
        self._scratch: dict = {}
        self._dtype = np.float64

    def _dims(self, h, w):
        oh = (h + 2 * self.ph - self.kh) // self.sh + 1
        ow = (w + 2 * self.pw - self.kw) // self.sw + 1
        if oh < 1 or ow < 1:
            raise ConfigurationError(f"{self.name}: output dims {oh}x{ow} for input {h}x{w}")
        # every window must contain at least one real cell
        if self.ph >= self.kh or self.pw >= self.kw:
            raise ConfigurationError(f"{self.name}: padding covers whole windows")
        return oh, ow

    def _buffers(self, b, h, w, c):
        key = (b, h, w, c, self._dtype)
        buf = self._scratch.get(key)
        if buf is None:
            oh, ow = self._dims(h, w)
            k = self.kh * self.kw
            active = []
            for u in range(self.kh):
                rows = range(u, u + self.sh * oh, self.sh)
                ok_row = any(self.ph <= r < self.ph + h for r in rows)
                for v in range(self.kw):
                    cols = range(v, v + self.sw * ow, self.sw)
                    if ok_row and any(self.pw <= col < self.pw + w for col in cols):
                        active.append((u * self.kw + v, u, v))
            dt = self._dtype
            buf = {
                "oh": oh, "ow": ow, "active": active,
                "xp": np.full((b, h + 2 * self.ph, w + 2 * self.pw, c), NEG_INF, dtype=dt),
                "slabs": np.empty((k, b, oh, ow, c), dtype=dt),
                "y": np.empty((b, oh, ow, c), dtype=dt),
                "arg": np.empty((b, oh, ow, c), dtype=np.int8),
                "tmp": np.empty((b, oh, ow, c), dtype=dt),
                "gxp": np.empty((b, h + 2 * self.ph, w + 2 * self.pw, c), dtype=dt),
            }
            self._scratch[key] = buf
        return buf

    def forward(self, x):
        if x.ndim != 4:
            raise ConfigurationError(f"{self.name}: expected 4-d input, got {x.shape}")
        b, h, w, c = x.shape
        self._dtype = x.dtype
        buf = self._buffers(b, h, w, c)
        oh, ow = buf["oh"], buf["ow"]
        xp = buf["xp"]
        xp[:, self.ph:self.ph + h, self.pw:self.pw + w, :] = x
        slabs, y, arg = buf["slabs"], buf["y"], buf["arg"]
        first = True
        for i, u, v in buf["active"]:
            slabs[i] = xp[:, u:u + self.sh * oh:self.sh,
                          v:v + self.sw * ow:self.sw, :]
            if first:
                y[:] = slabs[i]
                arg[:] = i
                first = False
            else:
                better = slabs[i] > y
                np.copyto(y, slabs[i], where=better)
                arg[better] = i
        return y.copy(), (arg, x.shape, (b, oh, ow, c), buf)

    def backward(self, gy, cache, accumulate=True):
        arg, x_shape, out_shape, buf = cache
        b, h, w, c = x_shape
        oh, ow = buf["oh"], buf["ow"]
        gxp, tmp = buf["gxp"], buf["tmp"]
        gxp[:] = 0.0
        for i, u, v in buf["active"]:
            np.multiply(gy, arg == i, out=tmp)
            gxp[:, u:u + self.sh * oh:self.sh,
                v:v + self.sw * ow:self.sw, :] += tmp
        return gxp[:, self.ph:self.ph + h, self.pw:self.pw + w, :].copy()

    def out_shape(self, in_shape):
        h, w, c = in_shape
        oh, ow = self._dims(h, w)
        return (oh, ow, c)

    def spec(self):
        return {"kind": "maxpool2d", "name": self.name, "kernel": [self.kh, self.kw],
                "stride": [self.sh, self.sw], "padding": [self.ph, self.pw]}


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name

    def forward(self, x):
        return np.maximum(x, 0.0), x

    def backward(self, gy, cache, accumulate=True):
        return gy * (cache > 0)

    def out_shape(self, in_shape):
        return in_shape

    def spec(self):
        return {"kind": "relu", "name": self.name}


class Tanh(Layer):
    def __init__(self, name: str = "tanh"):
        self.name = name

    def forward(self, x):
        y = np.tanh(x)
        return y, y

    def backward(self, gy, cache, accumulate=True):
        return gy * (1.0 - cache * cache)

    def out_shape(self, in_shape):
        return in_shape

    def spec(self):
        return {"kind": "tanh", "name": self.name}


class Flatten(Layer):
    def __init__(self, name: str = "flatten"):
        self.name = name

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, gy, cache, accumulate=True):
        return gy.reshape(cache)

    def out_shape(self, in_shape):
        n = 1
        for d in in_shape:
            n *= d
        return (n,)

    def spec(self):
        return {"kind": "flatten", "name": self.name}


LAYER_KINDS = {
    "dense": Dense,
    "conv2d": Conv2D,
    "maxpool2d": MaxPool2D,
    "relu": ReLU,
    "tanh": Tanh,
    "flatten": Flatten,
}


def layer_from_spec(spec: dict) -> Layer:
    kind = spec.get("kind")
    name = spec.get("name", kind)
    if kind == "dense":
        return Dense(spec["in"], spec["out"], rng=None, name=name,
                     dtype=spec.get("dtype", "float64"))
    if kind == "conv2d":
        return Conv2D(spec["in_channels"], spec["filters"], tuple(spec["kernel"]),
                      tuple(spec["stride"]), tuple(spec["padding"]), rng=None, name=name,
                      dtype=spec.get("dtype", "float64"))
    if kind == "maxpool2d":
        return MaxPool2D(tuple(spec["kernel"]), tuple(spec["stride"]), tuple(spec["padding"]), name=name)
    if kind == "relu":
        return ReLU(name=name)
    if kind == "tanh":
        return Tanh(name=name)
    if kind == "flatten":
        return Flatten(name=name)
    raise ConfigurationError(f"unknown layer kind {kind!r}")
