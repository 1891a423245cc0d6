"""Dense networks with hand-written reverse-mode gradients.

Everything is float64 and deterministic given the initialization Generator.
A DenseNet is a chain of affine layers with per-layer activation tags;
GaussianPolicy adds a tanh-squashed diagonal-Gaussian head with the
change-of-variables log-probability correction, reparameterized so
gradients flow through the mean and log-std paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activate_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(float)
    if name == "tanh":
        return 1.0 - a * a
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


def _init_layer(fan_in: int, fan_out: int, rng: np.random.Generator,
                scale: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    limit = scale if scale is not None else math.sqrt(6.0 / fan_in)
    w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
    b = np.zeros(fan_out)
    return w, b


class DenseNet:
    """Fully-connected chain; layers hold (W, b, activation tag)."""

    def __init__(self, dims, activations, rng: np.random.Generator,
                 final_scale: float | None = None):
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        self.dims = list(dims)
        self.activations = list(activations)
        self.weights = []
        self.biases = []
        last = len(dims) - 2
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            scale = final_scale if (final_scale is not None and i == last) else None
            w, b = _init_layer(fan_in, fan_out, rng, scale)
            self.weights.append(w)
            self.biases.append(b)

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, x: np.ndarray):
        """Returns (output, cache); x has shape (batch, dims[0])."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.dims[0]:
            raise ValueError(
                f"input shape {x.shape} incompatible with width {self.dims[0]}")
        cache = [(x, None)]
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = h @ w + b
            h = _activate(act, z)
            cache.append((h, z))
        return h, cache

    def backward(self, cache, d_out: np.ndarray):
        """Gradients of a scalar loss given d(loss)/d(output).

        Returns (d_input, grads) with grads parallel to params().
        """
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = np.asarray(d_out, dtype=float)
        for i in range(len(self.weights) - 1, -1, -1):
            h, z = cache[i + 1]
            delta = delta * _activate_grad(self.activations[i], z, h)
            h_prev = cache[i][0]
            grads_w[i] = h_prev.T @ delta
            grads_b[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend([gw, gb])
        return delta, grads

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "DenseNet":
        dup = object.__new__(DenseNet)
        dup.dims = list(self.dims)
        dup.activations = list(self.activations)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def tanh_log_det(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2), computed stably."""
    return 2.0 * (math.log(2.0) - u - softplus(-2.0 * u))


class GaussianPolicy:
    """Squashed diagonal-Gaussian policy over [-1, 1]^action_dim."""

    def __init__(self, state_dim: int, action_dim: int, hidden: int,
                 rng: np.random.Generator,
                 log_std_bounds: tuple[float, float] = (-20.0, 2.0)):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.log_std_bounds = log_std_bounds
        self.trunk = DenseNet([state_dim, hidden, hidden], ["relu", "relu"], rng)
        self.w_mean, self.b_mean = _init_layer(hidden, action_dim, rng, scale=3e-3)
        self.w_log_std, self.b_log_std = _init_layer(hidden, action_dim, rng,
                                                     scale=3e-3)

    def params(self) -> list[np.ndarray]:
        return self.trunk.params() + [self.w_mean, self.b_mean,
                                      self.w_log_std, self.b_log_std]

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params())

    def forward(self, x: np.ndarray):
        h, trunk_cache = self.trunk.forward(x)
        mean = h @ self.w_mean + self.b_mean
        log_std_raw = h @ self.w_log_std + self.b_log_std
        lo, hi = self.log_std_bounds
        log_std = np.clip(log_std_raw, lo, hi)
        return mean, log_std, {"trunk": trunk_cache, "h": h,
                               "log_std_raw": log_std_raw}

    def sample(self, x: np.ndarray, eps: np.ndarray):
        """Reparameterized sample: a = tanh(mean + std * eps).

        Returns (action, log_prob, cache); log_prob has shape (batch,).
        """
        mean, log_std, cache = self.forward(x)
        std = np.exp(log_std)
        u = mean + std * eps
        action = np.tanh(u)
        log_prob = (-0.5 * eps * eps - 0.5 * LOG_2PI - log_std
                    - tanh_log_det(u)).sum(axis=1)
        cache.update({"eps": eps, "std": std, "u": u, "action": action,
                      "log_std": log_std})
        return action, log_prob, cache

    def deterministic(self, x: np.ndarray) -> np.ndarray:
        mean, _, _ = self.forward(x)
        return np.tanh(mean)

    def log_prob_at(self, mean, log_std, u) -> np.ndarray:
        """Log-density of the squashed sample tanh(u); general-purpose."""
        std = np.exp(log_std)
        z = (u - mean) / std
        return (-0.5 * z * z - 0.5 * LOG_2PI - log_std
                - tanh_log_det(u)).sum(axis=1)

    def backward_sample(self, cache, d_action: np.ndarray,
                        d_log_prob: np.ndarray):
        """Gradients through the sampling path.

        d_action: (batch, A) upstream gradient on the squashed action;
        d_log_prob: (batch,) upstream gradient on the log-probability.
        Returns grads parallel to params().
        """
        a = cache["action"]
        eps = cache["eps"]
        std = cache["std"]
        dlp = np.asarray(d_log_prob, dtype=float)[:, None]
        # d log_prob / d u = 2*tanh(u); d a / d u = 1 - tanh(u)^2
        d_u = d_action * (1.0 - a * a) + dlp * (2.0 * a)
        d_mean = d_u
        d_log_std = d_u * (std * eps) - dlp
        # clamp kills the gradient outside the bounds
        lo, hi = self.log_std_bounds
        raw = cache["log_std_raw"]
        d_log_std = d_log_std * ((raw > lo) & (raw < hi))
        h = cache["h"]
        gw_mean = h.T @ d_mean
        gb_mean = d_mean.sum(axis=0)
        gw_ls = h.T @ d_log_std
        gb_ls = d_log_std.sum(axis=0)
        d_h = d_mean @ self.w_mean.T + d_log_std @ self.w_log_std.T
        _, trunk_grads = self.trunk.backward(cache["trunk"], d_h)
        return trunk_grads + [gw_mean, gb_mean, gw_ls, gb_ls]

    def copy(self) -> "GaussianPolicy":
        dup = object.__new__(GaussianPolicy)
        dup.state_dim = self.state_dim
        dup.action_dim = self.action_dim
        dup.log_std_bounds = self.log_std_bounds
        dup.trunk = self.trunk.copy()
        dup.w_mean = self.w_mean.copy()
        dup.b_mean = self.b_mean.copy()
        dup.w_log_std = self.w_log_std.copy()
        dup.b_log_std = self.b_log_std.copy()
        return dup


class Adam:
    """Adaptive-moment estimation; updates parameters in place."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("step size must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {"step": np.array([float(self.step_count)])}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        self.step_count = int(tensors["step"][0])
        for i in range(len(self.m)):
            self.m[i][...] = tensors[f"m{i}"]
            self.v[i][...] = tensors[f"v{i}"]


class Sgd:
    """Plain stochastic gradient descent."""

    def __init__(self, params: list[np.ndarray], lr: float):
        if lr <= 0:
            raise ValueError("step size must be positive")
        self.lr = lr
        self.step_count = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.step_count += 1
        for p, g in zip(params, grads):
            p -= self.lr * g

    def state_tensors(self) -> dict[str, np.ndarray]:
        return {"step": np.array([float(self.step_count)])}

    def load_state_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        self.step_count = int(tensors["step"][0])


def make_optimizer(kind: str, params: list[np.ndarray], lr: float):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return Sgd(params, lr)
    raise ValueError(f"unknown optimizer kind {kind!r}")
