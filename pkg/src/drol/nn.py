"""Dense networks with hand-written reverse-mode gradients.

Everything is float64 so analytic gradients can be compared against
central finite differences at tight tolerance, and so checkpoints
round-trip bit-exactly.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .validation import check_choice, check_in_range, check_positive, check_rng

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


def gelu(x):
    """Exact Gaussian-error-linear unit, x * Phi(x)."""
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    phi = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * phi


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    return (x > 0.0).astype(np.float64)


def tanh_grad(x):
    t = np.tanh(x)
    return 1.0 - t * t


ACTIVATIONS = {
    "gelu": (gelu, gelu_grad),
    "relu": (relu, relu_grad),
    "tanh": (np.tanh, tanh_grad),
}


class Mlp:
    """Fully connected net; hidden activation on all layers but the last.

    Parameters and gradient buffers are plain float64 arrays. forward()
    caches the activations needed by backward(); backward() accumulates
    into the gradient buffers and returns the gradient with respect to
    the input, which is how critic gradients reach actor outputs.
    """

    def __init__(self, sizes, activation="gelu", rng=None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"sizes must list >= 2 positive widths, got {sizes}")
        check_choice(activation, "activation", set(ACTIVATIONS))
        self.sizes = sizes
        self.activation = activation
        rng = check_rng(rng)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            # He-style uniform bound keeps early per-unit variance O(1)
            bound = np.sqrt(6.0 / fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))
        self.weight_grads = [np.zeros_like(w) for w in self.weights]
        self.bias_grads = [np.zeros_like(b) for b in self.biases]
        self._cache = None

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]

    @property
    def n_layers(self):
        return len(self.weights)

    def param_arrays(self):
        """All parameter arrays in a fixed order, paired with grads."""
        for w, g in zip(self.weights, self.weight_grads):
            yield w, g
        for b, g in zip(self.biases, self.bias_grads):
            yield b, g

    def forward(self, x):
        """Evaluate the net on a vector (d,) or a batch (n, d)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.in_dim:
            raise ValueError(
                f"input has shape {x.shape}, expected (*, {self.in_dim})"
            )
        act, _ = ACTIVATIONS[self.activation]
        inputs = [h]
        pre_acts = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            if i < self.n_layers - 1:
                pre_acts.append(z)
                h = act(z)
                inputs.append(h)
            else:
                h = z
        self._cache = (single, inputs, pre_acts)
        return h[0] if single else h

    def backward(self, output_grad, accumulate=True):
        """Backpropagate d(loss)/d(output); return d(loss)/d(input).

        accumulate=False computes the input gradient without touching
        the parameter gradient buffers (used when this net is frozen
        inside another loss).
        """
        if self._cache is None:
            raise RuntimeError("backward() called before forward()")
        single, inputs, pre_acts = self._cache
        g = np.asarray(output_grad, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != (inputs[0].shape[0], self.out_dim):
            raise ValueError(
                f"output_grad has shape {output_grad.shape}, expected "
                f"({inputs[0].shape[0]}, {self.out_dim})"
            )
        _, act_grad = ACTIVATIONS[self.activation]
        for i in range(self.n_layers - 1, -1, -1):
            if accumulate:
                self.weight_grads[i] += g.T @ inputs[i]
                self.bias_grads[i] += g.sum(axis=0)
            g = g @ self.weights[i]
            if i > 0:
                g = g * act_grad(pre_acts[i - 1])
        return g[0] if single else g

    def zero_grads(self):
        for g in self.weight_grads:
            g.fill(0.0)
        for g in self.bias_grads:
            g.fill(0.0)

    def copy(self):
        clone = Mlp.__new__(Mlp)
        clone.sizes = self.sizes
        clone.activation = self.activation
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        clone.weight_grads = [np.zeros_like(w) for w in self.weights]
        clone.bias_grads = [np.zeros_like(b) for b in self.biases]
        clone._cache = None
        return clone


@dataclass
class AdamState:
    """First/second-moment buffers plus the shared step counter."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        check_positive(lr, "lr")
        check_in_range(beta1, "beta1", 0.0, 1.0, include_low=True)
        check_in_range(beta2, "beta2", 0.0, 1.0, include_low=True)
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for p, _ in net.param_arrays():
            state.m.append(np.zeros_like(p))
            state.v.append(np.zeros_like(p))
        return state


def adam_step(net, state):
    """Apply one bias-corrected Adam update from the accumulated grads.

    Gradient buffers are zeroed afterwards so the next loss starts clean.
    Raises if any parameter leaves the finite range.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    with np.errstate(invalid="ignore", over="ignore"):
        for (p, g), m, v in zip(net.param_arrays(), state.m, state.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
            if not np.all(np.isfinite(p)):
                raise FloatingPointError(
                    "adam_step produced non-finite parameters"
                )
    net.zero_grads()


def polyak_update(target, online, tau):
    """In-place target <- (1 - tau) * target + tau * online."""
    check_in_range(tau, "tau", 0.0, 1.0, include_high=True)
    if target.sizes != online.sizes:
        raise ValueError(
            f"polyak_update across architectures: {target.sizes} vs {online.sizes}"
        )
    for (tp, _), (op, _) in zip(target.param_arrays(), online.param_arrays()):
        tp *= 1.0 - tau
        tp += tau * op


def save_params(net, path):
    """Write a checkpoint: one JSON header line, then raw little-endian
    float64 blocks (weights then biases, C order). Bit-exact round trip."""
    header = {
        "kind": "mlp-params",
        "sizes": list(net.sizes),
        "activation": net.activation,
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for w in net.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        for b in net.biases:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path):
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    if header.get("kind") != "mlp-params":
        raise ValueError(f"{path} is not a network checkpoint")
    sizes = tuple(header["sizes"])
    net = Mlp(sizes, activation=header["activation"], rng=0)
    offset = 0
    def take(shape):
        nonlocal offset
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
        offset += n * 8
        return arr.reshape(shape).copy()
    net.weights = [take((o, i)) for i, o in zip(sizes[:-1], sizes[1:])]
    net.biases = [take((o,)) for o in sizes[1:]]
    if offset != len(blob):
        raise ValueError(f"{path}: trailing bytes after parameter blocks")
    net.zero_grads()
    return net
