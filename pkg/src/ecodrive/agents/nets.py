"""Network factories shared by the learning agents.

Every agent uses the same convolutional trunk over the occupancy grid
(8 filters k3, pool 2x2, 16 filters k3 pad 1, pool 2x2 pad 1), flattened
and concatenated with the logic features (plus action inputs where the
architecture calls for them), followed by a dense head. Hidden layers are
ReLU; continuous-action outputs are tanh, mapped affinely onto the
acceleration bounds by the caller.
"""

from __future__ import annotations

import numpy as np

from ..nn import BranchNet, Conv2D, Dense, Flatten, MaxPool2D, ReLU, Sequential, Tanh

K_VALUES = (-1, 0, 1)   # discrete lane decisions, in network output order


def conv_trunk(grid_shape: tuple[int, int], rng: np.random.Generator,
               dtype="float64") -> Sequential:
    rows, lanes = grid_shape
    w1 = lanes - 2  # width after the first (unpadded) k3 convolution
    pool1_pad_w = 1 if w1 < 2 else 0
    return Sequential([
        Conv2D(1, 8, kernel=3, rng=rng, name="conv1", dtype=dtype),
        ReLU(name="relu_c1"),
        MaxPool2D(kernel=2, stride=2, padding=(0, pool1_pad_w), name="pool1"),
        Conv2D(8, 16, kernel=3, padding=1, rng=rng, name="conv2", dtype=dtype),
        ReLU(name="relu_c2"),
        MaxPool2D(kernel=2, stride=2, padding=1, name="pool2"),
        Flatten(name="flatten"),
    ])


def trunk_features(grid_shape: tuple[int, int]) -> int:
    rng = np.random.default_rng(0)
    return conv_trunk(grid_shape, rng).out_shape((grid_shape[0], grid_shape[1], 1))[0]


def q_network(grid_shape, logic_len: int, n_actions: int, n_params: int,
              rng: np.random.Generator, dtype="float64") -> BranchNet:
    """Q(s, k, x) for all k at once: trunk + concat(logic, x) + 256/64 head."""
    feat = trunk_features(grid_shape)
    head = Sequential([
        Dense(feat + logic_len + n_params, 256, rng=rng, name="q_dense1", dtype=dtype),
        ReLU(name="q_relu1"),
        Dense(256, 64, rng=rng, name="q_dense2", dtype=dtype),
        ReLU(name="q_relu2"),
        Dense(64, n_actions, rng=rng, name="q_out", dtype=dtype),
    ])
    return BranchNet(conv_trunk(grid_shape, rng, dtype), head, [logic_len, n_params])


def param_network(grid_shape, logic_len: int, n_params: int,
                  rng: np.random.Generator, dtype="float64") -> BranchNet:
    """Deterministic action-parameter network: trunk + concat(logic) + 128/64."""
    feat = trunk_features(grid_shape)
    head = Sequential([
        Dense(feat + logic_len, 128, rng=rng, name="mu_dense1", dtype=dtype),
        ReLU(name="mu_relu1"),
        Dense(128, 64, rng=rng, name="mu_dense2", dtype=dtype),
        ReLU(name="mu_relu2"),
        Dense(64, n_params, rng=rng, name="mu_out", dtype=dtype),
        Tanh(name="mu_tanh"),
    ])
    return BranchNet(conv_trunk(grid_shape, rng, dtype), head, [logic_len])


def plain_q_network(grid_shape, logic_len: int, n_actions: int,
                    rng: np.random.Generator, dtype="float64") -> BranchNet:
    """Discrete Q network without an action-parameter input (DQN)."""
    feat = trunk_features(grid_shape)
    head = Sequential([
        Dense(feat + logic_len, 256, rng=rng, name="q_dense1", dtype=dtype),
        ReLU(name="q_relu1"),
        Dense(256, 64, rng=rng, name="q_dense2", dtype=dtype),
        ReLU(name="q_relu2"),
        Dense(64, n_actions, rng=rng, name="q_out", dtype=dtype),
    ])
    return BranchNet(conv_trunk(grid_shape, rng, dtype), head, [logic_len])


def scale_to_bounds(t, a_min: float, a_max: float):
    """Affine map of tanh output [-1, 1] onto [a_min, a_max]."""
    return a_min + (np.asarray(t) + 1.0) * 0.5 * (a_max - a_min)


def bounds_grad(a_min: float, a_max: float) -> float:
    """d(scale_to_bounds)/d(tanh output)."""
    return 0.5 * (a_max - a_min)
