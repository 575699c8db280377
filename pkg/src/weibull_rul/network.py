"""Feed-forward regression network in numpy.

Hidden layers are affine -> ReLU -> inverted dropout (train mode only); the
single output unit is affine -> sigmoid, so predictions lie in (0, 1).
Gradients are computed by explicit reverse-mode backpropagation and applied
with ADAM.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

LAYER_CHOICES = range(2, 8)
UNIT_CHOICES = (16, 32, 64, 128, 256)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkArchitecture:
    input_dim: int = 20
    hidden_layers: int = 2
    units_per_layer: int = 32
    dropout_prob: float = 0.0

    def __post_init__(self):
        if self.input_dim < 1:
            raise NetworkError(f"input_dim must be positive, got {self.input_dim}")
        if self.hidden_layers not in LAYER_CHOICES:
            raise NetworkError(f"hidden_layers must be in 2..7, got {self.hidden_layers}")
        if self.units_per_layer < 1:
            raise NetworkError(f"units_per_layer must be positive, got {self.units_per_layer}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise NetworkError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [self.units_per_layer] * self.hidden_layers + [1]


def _layout(arch: "NetworkArchitecture") -> list[tuple[tuple[int, int], int, int]]:
    """(weight shape, weight offset, bias offset) of each layer in the flat vector."""
    sizes = arch.layer_sizes
    out, pos = [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        out.append(((fan_in, fan_out), pos, pos + fan_in * fan_out))
        pos += fan_in * fan_out + fan_out
    return out


def _views(flat: np.ndarray, arch: "NetworkArchitecture") -> tuple[list[np.ndarray], list[np.ndarray]]:
    weights, biases = [], []
    for (fan_in, fan_out), w_at, b_at in _layout(arch):
        weights.append(flat[w_at:b_at].reshape(fan_in, fan_out))
        biases.append(flat[b_at : b_at + fan_out])
    return weights, biases


def n_parameters(arch: "NetworkArchitecture") -> int:
    sizes = arch.layer_sizes
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


class NetworkState:
    """Parameters and ADAM moments.

    All parameters live in one flat vector; ``weights[i]`` (fan_in x fan_out)
    and ``biases[i]`` are views into it, and the moments share its layout.
    """

    def __init__(self, arch: NetworkArchitecture, flat: np.ndarray, m=None, v=None, step: int = 0):
        flat = np.ascontiguousarray(flat, dtype=float)
        if flat.shape != (n_parameters(arch),):
            raise NetworkError(f"expected {n_parameters(arch)} parameters, got {flat.shape}")
        self.arch = arch
        self.flat = flat
        self.m = np.zeros_like(flat) if m is None else np.asarray(m, dtype=float)
        self.v = np.zeros_like(flat) if v is None else np.asarray(v, dtype=float)
        self.step = step
        self.weights, self.biases = _views(self.flat, arch)

    @classmethod
    def from_layers(cls, arch: NetworkArchitecture, weights, biases) -> "NetworkState":
        parts = []
        for w, b in zip(weights, biases):
            parts += [np.asarray(w, dtype=float).ravel(), np.asarray(b, dtype=float).ravel()]
        return cls(arch, np.concatenate(parts))

    def copy(self) -> "NetworkState":
        return NetworkState(self.arch, self.flat.copy(), self.m.copy(), self.v.copy(), self.step)

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


class Gradients:
    """Gradient vector laid out like :attr:`NetworkState.flat`."""

    def __init__(self, arch: NetworkArchitecture, flat: np.ndarray | None = None):
        self.flat = np.zeros(n_parameters(arch)) if flat is None else flat
        self.weights, self.biases = _views(self.flat, arch)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each affine layer
    pre: list[np.ndarray]  # affine outputs of hidden layers
    masks: list[np.ndarray | None]  # scaled dropout masks, None in eval mode
    output: np.ndarray
    consumed: bool = False


def init(arch: NetworkArchitecture, seed: int) -> NetworkState:
    """He-normal weights (std sqrt(2/fan_in)) for ReLU layers, Glorot for the output."""
    rng = np.random.default_rng(seed)
    state = NetworkState(arch, np.zeros(n_parameters(arch)))
    last = len(state.weights) - 1
    for i, w in enumerate(state.weights):
        fan_in, fan_out = w.shape
        std = np.sqrt(2.0 / (fan_in + fan_out)) if i == last else np.sqrt(2.0 / fan_in)
        w[...] = rng.standard_normal((fan_in, fan_out)) * std
    return state


def forward(
    state: NetworkState,
    batch: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Predictions of shape (n,) and the cache needed by :func:`backward`.

    ``rng`` drives the dropout masks and is required in train mode when
    dropout is active.
    """
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2 or x.shape[1] != state.arch.input_dim:
        raise NetworkError(f"expected batch of shape (n, {state.arch.input_dim}), got {x.shape}")
    if mode not in ("train", "eval"):
        raise NetworkError(f"mode must be 'train' or 'eval', got {mode!r}")
    p = state.arch.dropout_prob
    use_dropout = mode == "train" and p > 0.0
    if use_dropout and rng is None:
        raise NetworkError("train-mode dropout needs a random generator")

    inputs, pre, masks = [], [], []
    h = x
    for w, b in zip(state.weights[:-1], state.biases[:-1]):
        inputs.append(h)
        z = h @ w
        z += b
        pre.append(z)
        h = np.maximum(z, 0.0)
        if use_dropout:
            mask = (rng.random(h.shape) >= p) / (1.0 - p)
            h = h * mask
            masks.append(mask)
        else:
            masks.append(None)
    inputs.append(h)
    out = expit(h @ state.weights[-1] + state.biases[-1])[:, 0]
    return out, ForwardCache(inputs, pre, masks, out)


def backward(state: NetworkState, cache: ForwardCache, grad_out) -> Gradients:
    """Parameter gradients given dLoss/dPrediction for each sample in the batch."""
    if cache is None or cache.consumed:
        raise NetworkError("backward needs a fresh forward cache")
    g = np.asarray(grad_out, dtype=float).reshape(-1, 1)
    if g.shape[0] != cache.output.shape[0]:
        raise NetworkError("gradient length does not match the cached batch")
    cache.consumed = True

    grads = Gradients(state.arch)
    s = cache.output.reshape(-1, 1)
    delta = g * s * (1.0 - s)
    for i in range(len(state.weights) - 1, -1, -1):
        np.matmul(cache.inputs[i].T, delta, out=grads.weights[i])
        np.sum(delta, axis=0, out=grads.biases[i])
        if i == 0:
            break
        dh = delta @ state.weights[i].T
        mask = cache.masks[i - 1]
        if mask is not None:
            dh = dh * mask
        delta = dh * (cache.pre[i - 1] > 0.0)
    return grads


def adam_step(state: NetworkState, grads: Gradients, lr: float) -> NetworkState:
    """One bias-corrected ADAM update, in place. Returns ``state`` for chaining."""
    if not lr > 0:
        raise NetworkError(f"learning rate must be positive, got {lr}")
    state.step += 1
    t = state.step
    g = grads.flat
    state.m *= ADAM_BETA1
    state.m += (1.0 - ADAM_BETA1) * g
    state.v *= ADAM_BETA2
    state.v += (1.0 - ADAM_BETA2) * (g * g)
    # lr * m_hat / (sqrt(v_hat) + eps) with the bias corrections folded into scalars
    denom = np.sqrt(state.v)
    denom *= 1.0 / np.sqrt(1.0 - ADAM_BETA2**t)
    denom += ADAM_EPS
    state.flat -= (lr / (1.0 - ADAM_BETA1**t)) * state.m / denom
    return state


def predict(state: NetworkState, x: np.ndarray) -> np.ndarray:
    return forward(state, x, mode="eval")[0]


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(path, state: NetworkState, metadata: dict | None = None) -> None:
    """Write architecture, parameters, and free-form metadata to one ``.npz`` file.

    Parameters are stored as float64 arrays so a reload reproduces predictions
    bit-exactly.
    """
    arrays = {"parameters": state.flat}
    header = {"architecture": asdict(state.arch), "n_parameters": state.flat.size, "step": state.step}
    header["metadata"] = metadata or {}
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[NetworkState, dict]:
    with np.load(path) as data:
        header = json.loads(data["header"].tobytes().decode())
        flat = data["parameters"].copy()
    state = NetworkState(NetworkArchitecture(**header["architecture"]), flat, step=header["step"])
    return state, header["metadata"]
