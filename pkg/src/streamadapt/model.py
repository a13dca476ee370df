"""Single-hidden-layer denoising autoencoder with a softmax head.

The network keeps six parameter arrays: an encoder (shared between the
reconstruction path and the classification path), a decoder, and a softmax
output layer.  Hidden units can be appended or removed at any time; both
mutations leave every surviving weight bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from streamadapt.errors import DimensionError, ValidationError


@dataclass
class ModelConfig:
    """Hyperparameters of the learner.

    learning_rate   SGD step size for every phase.
    alpha           weight of the discrepancy-scaled norm regularizer.
    noise_fraction  masking probability for input corruption, in [0, 1).
    cmd_order       highest central-moment order matched by the
                    discrepancy measure, >= 1.
    bandwidth       similarity-kernel bandwidth; None selects the median
                    pairwise distance of the batch.
    rng_seed        seed for every stochastic choice of a run.
    initial_nodes   hidden-unit count before any structural learning.
    """

    learning_rate: float = 0.01
    alpha: float = 1.0
    noise_fraction: float = 0.1
    cmd_order: int = 5
    bandwidth: float | None = None
    rng_seed: int = 0
    initial_nodes: int = 1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be nonnegative")
        if self.alpha < 0:
            raise ValidationError("alpha must be nonnegative")
        if not 0 <= self.noise_fraction < 1:
            raise ValidationError("noise_fraction must lie in [0, 1)")
        if self.cmd_order < 1:
            raise ValidationError("cmd_order must be >= 1")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValidationError("bandwidth must be positive when fixed")
        if self.initial_nodes < 1:
            raise ValidationError("initial_nodes must be >= 1")


@dataclass
class Network:
    """Parameter container; shapes are validated on construction.

    W_enc: (u, R)  b_enc: (R,)  W_dec: (R, u)  b_dec: (u,)
    W_out: (R, m)  b_out: (m,)
    """

    W_enc: np.ndarray
    b_enc: np.ndarray
    W_dec: np.ndarray
    b_dec: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        u, R = self.W_enc.shape
        m = self.W_out.shape[1]
        if R < 1:
            raise DimensionError("network needs at least one hidden node")
        if self.b_enc.shape != (R,) or self.W_dec.shape != (R, u):
            raise DimensionError("encoder/decoder shapes disagree")
        if self.b_dec.shape != (u,) or self.W_out.shape != (R, m) or self.b_out.shape != (m,):
            raise DimensionError("output-layer shapes disagree")

    @property
    def u(self) -> int:
        return self.W_enc.shape[0]

    @property
    def R(self) -> int:
        return self.W_enc.shape[1]

    @property
    def m(self) -> int:
        return self.W_out.shape[1]

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.W_enc, self.b_enc, self.W_dec, self.b_dec, self.W_out, self.b_out)

    def copy(self) -> "Network":
        return Network(*(p.copy() for p in self.params()))


@dataclass
class GradientSet:
    """One gradient array per network parameter, shape-matched."""

    W_enc: np.ndarray
    b_enc: np.ndarray
    W_dec: np.ndarray
    b_dec: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    @classmethod
    def zeros_like(cls, net: Network) -> "GradientSet":
        return cls(*(np.zeros_like(p) for p in net.params()))

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.W_enc, self.b_enc, self.W_dec, self.b_dec, self.W_out, self.b_out)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_network(u: int, nodes: int, m: int, rng: np.random.Generator) -> Network:
    """Uniform fan-scaled weight init, zero biases."""
    if u < 1 or nodes < 1 or m < 1:
        raise DimensionError(f"invalid dimensions u={u}, nodes={nodes}, m={m}")
    return Network(
        W_enc=_xavier(rng, u, nodes, (u, nodes)),
        b_enc=np.zeros(nodes),
        W_dec=_xavier(rng, nodes, u, (nodes, u)),
        b_dec=np.zeros(u),
        W_out=_xavier(rng, nodes, m, (nodes, m)),
        b_out=np.zeros(m),
    )


def _check_input(net: Network, X: np.ndarray, cols: int, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != cols:
        raise DimensionError(f"{name} must be 2-d with {cols} columns, got shape {X.shape}")
    return X


def encode(net: Network, X: np.ndarray) -> np.ndarray:
    """Sigmoid embedding of the inputs, (N, R)."""
    X = _check_input(net, X, net.u, "X")
    return expit(X @ net.W_enc + net.b_enc)


def decode(net: Network, H: np.ndarray) -> np.ndarray:
    """Sigmoid reconstruction from the embedding, (N, u)."""
    H = _check_input(net, H, net.R, "H")
    return expit(H @ net.W_dec + net.b_dec)


def softmax_rows(Z: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def predict(net: Network, X: np.ndarray) -> np.ndarray:
    """Class-probability rows for every input, (N, m)."""
    H = encode(net, X)
    return softmax_rows(H @ net.W_out + net.b_out)


def corrupt(X: np.ndarray, noise_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Masking noise: each entry zeroed independently with the given probability."""
    if not 0 <= noise_fraction < 1:
        raise ValidationError("noise_fraction must lie in [0, 1)")
    X = np.asarray(X, dtype=float)
    if noise_fraction == 0.0:
        return X.copy()
    return X * (rng.random(X.shape) >= noise_fraction)


def grow_node(net: Network, rng: np.random.Generator) -> Network:
    """Append one hidden unit; new weights fan-scaled, new bias zero.

    Draw order is fixed (encoder column, decoder row, output row) so the
    result is reproducible from the generator state.
    """
    u, R, m = net.u, net.R, net.m
    enc_col = _xavier(rng, u, R + 1, (u, 1))
    dec_row = _xavier(rng, R + 1, u, (1, u))
    out_row = _xavier(rng, R + 1, m, (1, m))
    return Network(
        W_enc=np.hstack([net.W_enc, enc_col]),
        b_enc=np.append(net.b_enc, 0.0),
        W_dec=np.vstack([net.W_dec, dec_row]),
        b_dec=net.b_dec.copy(),
        W_out=np.vstack([net.W_out, out_row]),
        b_out=net.b_out.copy(),
    )


def prune_node(net: Network, r: int) -> Network:
    """Remove hidden unit ``r`` (0-based); refuses to empty the layer."""
    if net.R < 2:
        raise ValidationError("cannot prune the last hidden node")
    if not 0 <= r < net.R:
        raise ValidationError(f"node index {r} out of range for R={net.R}")
    keep = np.arange(net.R) != r
    return Network(
        W_enc=net.W_enc[:, keep].copy(),
        b_enc=net.b_enc[keep].copy(),
        W_dec=net.W_dec[keep, :].copy(),
        b_dec=net.b_dec.copy(),
        W_out=net.W_out[keep, :].copy(),
        b_out=net.b_out.copy(),
    )


def apply_gradients(net: Network, g: GradientSet, lr: float) -> Network:
    """One SGD step: theta <- theta - lr * grad, returning a new network."""
    new = []
    for p, gp in zip(net.params(), g.params()):
        if p.shape != gp.shape:
            raise DimensionError(f"gradient shape {gp.shape} != parameter shape {p.shape}")
        new.append(p - lr * gp)
    return Network(*new)
