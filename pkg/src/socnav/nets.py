"""Minimal dense-network machinery with exact reverse-mode gradients.

Float64 end to end, no autograd framework: the trainers rely on being able to
verify every gradient against central finite differences, and on bitwise
reproducibility of weight trajectories given a seed.  Supported activations
are relu, tanh, and linear; no normalization layers.
"""

from __future__ import annotations

import numpy as np

_ACTIVATIONS = ("relu", "tanh", "linear")

CHECKPOINT_VERSION = 1


class Mlp:
    """Fully connected network: layers[i] maps sizes[i] -> sizes[i+1].

    Parameters live in self.weights / self.biases (float64).  forward()
    returns outputs plus a cache that backward() consumes to produce exact
    parameter and input gradients.
    """

    def __init__(self, sizes, activations, rng=None, final_init_scale=None):
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        for act in activations:
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        self.sizes = list(int(s) for s in sizes)
        self.activations = list(activations)
        self.weights = []
        self.biases = []
        rng = rng if rng is not None else np.random.default_rng()
        for i in range(len(sizes) - 1):
            fan_in = sizes[i]
            bound = 1.0 / np.sqrt(fan_in)
            if final_init_scale is not None and i == len(sizes) - 2:
                bound = final_init_scale
            self.weights.append(rng.uniform(-bound, bound, size=(sizes[i], sizes[i + 1])))
            self.biases.append(rng.uniform(-bound, bound, size=sizes[i + 1]))

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def forward(self, x: np.ndarray):
        """Run the net on x (B, in_dim). Returns (out (B, out_dim), cache)."""
        h = np.asarray(x, dtype=float)
        pre_acts = []
        post_acts = [h]
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = h @ w + b
            pre_acts.append(z)
            if act == "relu":
                h = np.maximum(z, 0.0)
            elif act == "tanh":
                h = np.tanh(z)
            else:
                h = z
            post_acts.append(h)
        return h, (pre_acts, post_acts)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, upstream: np.ndarray):
        """Backpropagate upstream (B, out_dim) through the cached forward pass.

        Returns (weight_grads, bias_grads, input_grad).  Gradients are summed
        over the batch; the caller owns any 1/B scaling (fold it into
        upstream).  relu uses the z > 0 subgradient.
        """
        pre_acts, post_acts = cache
        grad = np.asarray(upstream, dtype=float)
        weight_grads = [None] * len(self.weights)
        bias_grads = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            act = self.activations[i]
            if act == "relu":
                grad = grad * (pre_acts[i] > 0.0)
            elif act == "tanh":
                out = np.tanh(pre_acts[i])
                grad = grad * (1.0 - out * out)
            weight_grads[i] = post_acts[i].T @ grad
            bias_grads[i] = grad.sum(axis=0)
            grad = grad @ self.weights[i].T
        return weight_grads, bias_grads, grad

    def input_gradient(self, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Gradient of upstream . f(x) with respect to x; convenience wrapper."""
        _, cache = self.forward(x)
        return self.backward(cache, upstream)[2]

    # -- parameter plumbing ------------------------------------------------

    def copy(self) -> "Mlp":
        dup = Mlp.__new__(Mlp)
        dup.sizes = list(self.sizes)
        dup.activations = list(self.activations)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos : pos + b.size].reshape(b.shape).copy()
            pos += b.size
        if pos != flat.size:
            raise ValueError("flat vector size mismatch")

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def actor_net(in_dim: int, out_dim: int, hidden: int = 256, rng=None) -> Mlp:
    """Three fully connected layers; tanh on the last so outputs land in (-1, 1)."""
    return Mlp([in_dim, hidden, hidden, out_dim], ["relu", "relu", "tanh"], rng=rng)


def critic_net(in_dim: int, hidden: int = 256, rng=None, final_init_scale: float = 1e-3) -> Mlp:
    """Five fully connected layers with a linear head.

    The head is initialized uniform(-final_init_scale, +final_init_scale) so a
    fresh critic scores near zero everywhere and the composite objective it
    joins starts out dominated by the model-based term.
    """
    return Mlp(
        [in_dim, hidden, hidden, hidden, hidden, 1],
        ["relu", "relu", "relu", "relu", "linear"],
        rng=rng,
        final_init_scale=final_init_scale,
    )


class Adam:
    """Adam over an Mlp's parameter list. step() applies a descent update."""

    def __init__(self, net: Mlp, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m_w = [np.zeros_like(w) for w in net.weights]
        self.v_w = [np.zeros_like(w) for w in net.weights]
        self.m_b = [np.zeros_like(b) for b in net.biases]
        self.v_b = [np.zeros_like(b) for b in net.biases]

    def step(self, weight_grads, bias_grads) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i in range(len(self.net.weights)):
            for param, grad, m, v in (
                (self.net.weights[i], weight_grads[i], self.m_w[i], self.v_w[i]),
                (self.net.biases[i], bias_grads[i], self.m_b[i], self.v_b[i]),
            ):
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * grad * grad
                m_hat = m / bc1
                v_hat = v / bc2
                param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def polyak_update(target: Mlp, online: Mlp, rho: float) -> None:
    """In-place soft update: target <- (1 - rho) * target + rho * online."""
    for tw, ow in zip(target.weights, online.weights):
        tw *= 1.0 - rho
        tw += rho * ow
    for tb, ob in zip(target.biases, online.biases):
        tb *= 1.0 - rho
        tb += rho * ob


# ---------------------------------------------------------------------------
# Checkpoints: named nets as shapes plus flat float64 arrays in one npz file.


def save_checkpoint(path, nets: dict) -> None:
    payload = {"version": np.array(CHECKPOINT_VERSION)}
    for name, net in nets.items():
        payload[f"{name}.sizes"] = np.array(net.sizes, dtype=np.int64)
        payload[f"{name}.activations"] = np.array(net.activations)
        payload[f"{name}.flat"] = net.get_flat()
    np.savez(path, **payload)


def load_checkpoint(path) -> dict:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        names = sorted({key.split(".")[0] for key in data.files if key != "version"})
        nets = {}
        for name in names:
            sizes = data[f"{name}.sizes"].tolist()
            activations = [str(a) for a in data[f"{name}.activations"]]
            net = Mlp(sizes, activations, rng=np.random.default_rng(0))
            net.set_flat(data[f"{name}.flat"])
            nets[name] = net
    return nets
