"""Small fully-connected networks with hand-written backprop and Adam."""
from __future__ import annotations

import numpy as np

ACTIVATIONS = ("relu", "tanh", "linear")


class DimensionMismatch(ValueError):
    pass


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a, g):
    # g is dL/da; returns dL/dz
    if name == "relu":
        return g * (z > 0.0)
    if name == "tanh":
        return g * (1.0 - a * a)
    return g


class Mlp:
    """Feed-forward network ``sizes[0] -> ... -> sizes[-1]``.

    Weights are stored as ``(fan_in, fan_out)`` matrices so a batch of inputs
    ``(n, fan_in)`` maps with ``x @ W + b``.  Hidden layers use
    ``hidden_activation``; the last layer uses ``output_activation``.
    """

    def __init__(self, sizes, hidden_activation="relu", output_activation="linear", rng=None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes}")
        for a in (hidden_activation, output_activation):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.sizes = sizes
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        rng = np.random.default_rng(rng)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    def parameters(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` of the live arrays."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def _activation(self, i):
        return self.output_activation if i == self.n_layers - 1 else self.hidden_activation

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim or x.ndim not in (1, 2):
            raise DimensionMismatch(f"expected input of width {self.input_dim}, got shape {x.shape}")
        return x

    def forward(self, x):
        x = self._check_input(x)
        a = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = _act(self._activation(i), a @ w + b)
        return a

    __call__ = forward

    def forward_cache(self, x):
        """Forward pass keeping the pre/post activations needed by :meth:`backward`."""
        x = self._check_input(x)
        cache = [(None, x)]
        a = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = _act(self._activation(i), z)
            cache.append((z, a))
        return a, cache

    def backward(self, cache, output_grad):
        """Reverse-mode pass.

        Returns ``(param_grads, input_grad)`` where ``param_grads`` is ordered
        like :meth:`parameters`.  For batched input the parameter gradients are
        summed over the batch.
        """
        g = np.asarray(output_grad, dtype=float)
        if g.shape != cache[-1][1].shape:
            raise DimensionMismatch(f"output_grad shape {g.shape} != output shape {cache[-1][1].shape}")
        grads = [None] * (2 * self.n_layers)
        for i in reversed(range(self.n_layers)):
            z, a = cache[i + 1]
            a_prev = cache[i][1]
            g = _act_grad(self._activation(i), z, a, g)
            if g.ndim == 1:
                grads[2 * i] = np.outer(a_prev, g)
                grads[2 * i + 1] = g.copy()
            else:
                grads[2 * i] = a_prev.T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, g

    def copy(self) -> "Mlp":
        new = Mlp.__new__(Mlp)
        new.sizes = list(self.sizes)
        new.hidden_activation = self.hidden_activation
        new.output_activation = self.output_activation
        new.weights = [w.copy() for w in self.weights]
        new.biases = [b.copy() for b in self.biases]
        return new

    def load_parameters_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src

    def polyak_update(self, online: "Mlp", tau: float) -> None:
        """``self <- tau * online + (1 - tau) * self``."""
        for dst, src in zip(self.parameters(), online.parameters()):
            dst *= 1.0 - tau
            dst += tau * src

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        net = cls.__new__(cls)
        net.sizes = [int(s) for s in d["sizes"]]
        net.hidden_activation = d["hidden_activation"]
        net.output_activation = d["output_activation"]
        net.weights = [np.asarray(w, dtype=float) for w in d["weights"]]
        net.biases = [np.asarray(b, dtype=float) for b in d["biases"]]
        if len(net.weights) != len(net.sizes) - 1 or len(net.biases) != len(net.weights):
            raise DimensionMismatch("layer count does not match sizes")
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            if w.shape != (net.sizes[i], net.sizes[i + 1]) or b.shape != (net.sizes[i + 1],):
                raise DimensionMismatch(f"layer {i} has shapes {w.shape}/{b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")
        return net


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
