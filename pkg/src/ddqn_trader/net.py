"""From-scratch Q-network: two ReLU hidden layers, linear 3-way output.

Forward, analytic backprop, inverted dropout (after the second hidden layer
only), an L2 penalty on hidden activations, and Adam are all implemented here
on plain numpy arrays. The loss regressed is

    mean_i [ (y_i - q(s_i)[a_i])^2
             + l2_activity * (sum_j a1_ij^2 + sum_j a2_ij^2) ]

so gradients flow only through each sample's taken action plus the activity
penalty, and the learning rate is batch-size invariant.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, ConfigError, NumericsError

PARAMS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    hidden_dims: tuple[int, int] = (64, 64)
    output_dim: int = 3
    dropout_rate: float = 0.1
    l2_activity: float = 1e-6
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if len(self.hidden_dims) != 2:
            raise ConfigError(f"exactly two hidden layers supported, got {self.hidden_dims}")
        if min(self.input_dim, *self.hidden_dims, self.output_dim) < 1:
            raise ConfigError("all layer dims must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.l2_activity < 0:
            raise ConfigError(f"l2_activity must be >= 0, got {self.l2_activity}")

    @property
    def layer_shapes(self) -> tuple[tuple[int, int], ...]:
        h1, h2 = self.hidden_dims
        return ((self.input_dim, h1), (h1, h2), (h2, self.output_dim))


@dataclass
class NetParams:
    """Per-layer weight matrices [in, out] and bias vectors [out]."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def clone(self) -> "NetParams":
        return NetParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class AdamState:
    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class ForwardCache:
    """Intermediates of a train-mode forward, reused by the backward pass."""

    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    a2_dropped: np.ndarray
    mask: np.ndarray | None  # None when dropout_rate == 0


def param_count(config: NetConfig) -> int:
    return sum(i * o + o for i, o in config.layer_shapes)


def init_params(config: NetConfig, rng: np.random.Generator | None = None) -> NetParams:
    """He-uniform weights scaled by fan-in, zero biases; deterministic per seed."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for fan_in, fan_out in config.layer_shapes:
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetParams(weights, biases)


def init_adam(config: NetConfig) -> AdamState:
    shapes = config.layer_shapes
    return AdamState(
        m_weights=[np.zeros(s) for s in shapes],
        m_biases=[np.zeros(s[1]) for s in shapes],
        v_weights=[np.zeros(s) for s in shapes],
        v_biases=[np.zeros(s[1]) for s in shapes],
    )


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values in {where}")


def forward(
    params: NetParams,
    states: np.ndarray,
    config: NetConfig,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache | None]:
    """Q-values for a batch of states, shape [batch, 3].

    Eval mode is deterministic (no dropout, no cache). Train mode samples a
    fresh inverted-dropout mask over the second hidden layer and returns the
    cache the backward pass needs.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != config.input_dim:
        raise ValueError(
            f"states must be [batch, {config.input_dim}], got shape {states.shape}"
        )
    w, b = params.weights, params.biases
    z1 = states @ w[0] + b[0]
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w[1] + b[1]
    a2 = np.maximum(z2, 0.0)
    if mode == "train" and config.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("train-mode forward with dropout needs an rng")
        keep = 1.0 - config.dropout_rate
        mask = (rng.random(a2.shape) < keep) / keep
        a2_dropped = a2 * mask
    else:
        mask = None
        a2_dropped = a2
    q = a2_dropped @ w[2] + b[2]
    if mode == "eval":
        return q, None
    return q, ForwardCache(states, z1, a1, z2, a2, a2_dropped, mask)


def loss_and_grads(
    params: NetParams,
    states: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
    config: NetConfig,
    mode: str = "train",
    rng: np.random.Generator | None = None,
) -> tuple[float, NetParams]:
    """Mean squared TD error plus activity penalty, with analytic gradients.

    ``actions`` selects the output unit each sample's error flows through.
    Dropout masks sampled in the forward are applied consistently backward.
    Raises NumericsError naming the layer if anything goes non-finite.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    actions = np.asarray(actions, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.float64)
    if len(actions) == 0:
        raise ValueError("empty batch")
    if not np.all(np.isfinite(targets)):
        raise NumericsError("non-finite targets")
    if mode == "eval":  # dropout off regardless of config, used by gradient checks
        config = dataclasses.replace(config, dropout_rate=0.0)
    q, cache = forward(params, states, config, mode="train", rng=rng)
    assert cache is not None
    _check_finite(cache.z1, "hidden layer 1")
    _check_finite(cache.z2, "hidden layer 2")
    _check_finite(q, "output layer")

    batch = len(actions)
    rows = np.arange(batch)
    err = q[rows, actions] - targets
    l2 = config.l2_activity
    loss = float(np.mean(err**2))
    if l2 > 0.0:
        loss += l2 * float(np.sum(cache.a1**2) + np.sum(cache.a2**2)) / batch
    if not math.isfinite(loss):
        raise NumericsError("non-finite loss")

    w = params.weights
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * err / batch
    dw3 = cache.a2_dropped.T @ dq
    db3 = dq.sum(axis=0)
    da2_dropped = dq @ w[2].T
    da2 = da2_dropped * cache.mask if cache.mask is not None else da2_dropped
    if l2 > 0.0:
        da2 = da2 + (2.0 * l2 / batch) * cache.a2
    dz2 = da2 * (cache.z2 > 0.0)
    dw2 = cache.a1.T @ dz2
    db2 = dz2.sum(axis=0)
    da1 = dz2 @ w[1].T
    if l2 > 0.0:
        da1 = da1 + (2.0 * l2 / batch) * cache.a1
    dz1 = da1 * (cache.z1 > 0.0)
    dw1 = cache.x.T @ dz1
    db1 = dz1.sum(axis=0)
    return loss, NetParams([dw1, dw2, dw3], [db1, db2, db3])


def adam_step(
    params: NetParams, grads: NetParams, state: AdamState, lr: float
) -> tuple[NetParams, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    t = state.t + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_w, new_b = [], []
    m_w, m_b, v_w, v_b = [], [], [], []

    def _update(p, g, m, v, out_p, out_m, out_v):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * g**2
        out_p.append(p - lr * (m_new / c1) / (np.sqrt(v_new / c2) + eps))
        out_m.append(m_new)
        out_v.append(v_new)

    for i in range(len(params.weights)):
        _update(params.weights[i], grads.weights[i], state.m_weights[i], state.v_weights[i],
                new_w, m_w, v_w)
        _update(params.biases[i], grads.biases[i], state.m_biases[i], state.v_biases[i],
                new_b, m_b, v_b)
    return (
        NetParams(new_w, new_b),
        AdamState(m_w, m_b, v_w, v_b, t=t, beta1=b1, beta2=b2, eps=eps),
    )


def clone(params: NetParams) -> NetParams:
    return params.clone()


def config_to_dict(config: NetConfig) -> dict:
    return {
        "input_dim": config.input_dim,
        "hidden_dims": list(config.hidden_dims),
        "output_dim": config.output_dim,
        "dropout_rate": config.dropout_rate,
        "l2_activity": config.l2_activity,
        "seed": config.seed,
    }


def config_from_dict(d: dict) -> NetConfig:
    return NetConfig(
        input_dim=int(d["input_dim"]),
        hidden_dims=tuple(d["hidden_dims"]),
        output_dim=int(d["output_dim"]),
        dropout_rate=float(d["dropout_rate"]),
        l2_activity=float(d["l2_activity"]),
        seed=d["seed"],
    )


def params_to_dict(params: NetParams) -> dict:
    """Flat per-layer arrays in layer order; JSON float repr round-trips bit-exactly."""
    return {
        "weights": [w.flatten().tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def params_from_dict(d: dict, config: NetConfig) -> NetParams:
    weights, biases = [], []
    for shape, flat, bias in zip(config.layer_shapes, d["weights"], d["biases"]):
        w = np.array(flat, dtype=np.float64)
        if w.size != shape[0] * shape[1] or len(bias) != shape[1]:
            raise CheckpointError(f"parameter block does not match layer shape {shape}")
        weights.append(w.reshape(shape))
        biases.append(np.array(bias, dtype=np.float64))
    return NetParams(weights, biases)


def save_params(params: NetParams, config: NetConfig, path) -> None:
    record = {
        "version": PARAMS_FORMAT_VERSION,
        "config": config_to_dict(config),
        "params": params_to_dict(params),
    }
    with open(path, "w") as fh:
        json.dump(record, fh)


def load_params(path) -> tuple[NetParams, NetConfig]:
    try:
        with open(path) as fh:
            record = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot load parameters from {path}: {exc}") from exc
    if record.get("version") != PARAMS_FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported parameter format version {record.get('version')!r}, "
            f"expected {PARAMS_FORMAT_VERSION}"
        )
    config = config_from_dict(record["config"])
    return params_from_dict(record["params"], config), config
