"""Structural learning: when to add or remove hidden units.

The expected network output under a running Gaussian fit of the source
inputs gives a per-sample squared bias and variance.  Control-chart
statistics over those two sequences signal node growing (high bias,
underfitting) and node pruning (high variance, overfitting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from streamadapt.errors import DimensionError, ValidationError
from streamadapt.model import Network, softmax_rows

# Layout of the flat SPC state vector shared with the compiled kernel.
SPC_COUNT = 0
SPC_MEAN_BIAS = 1
SPC_M2_BIAS = 2
SPC_MEAN_VAR = 3
SPC_M2_VAR = 4
SPC_MIN_MEAN_BIAS = 5
SPC_MIN_STD_BIAS = 6
SPC_MIN_MEAN_VAR = 7
SPC_MIN_STD_VAR = 8
SPC_GROW_COUNT = 9
SPC_PRUNE_COUNT = 10
SPC_SLOTS = 11

# Samples of warm-up before the control chart is consulted.  The first
# sample has zero spread and the two-sample spread still equals the
# running mean offset exactly, so both would fire spuriously.
SPC_WARMUP = 2


@dataclass
class DensityEstimate:
    """Streaming per-feature Gaussian fit of the source inputs.

    Keeps the running mean and the sum of squared deviations per feature,
    so mean and standard deviation match a one-shot computation over all
    samples seen (population convention).
    """

    mean: np.ndarray
    m2: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, n_features: int) -> "DensityEstimate":
        return cls(mean=np.zeros(n_features), m2=np.zeros(n_features), count=0)

    @property
    def variance(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.m2)
        return self.m2 / self.count

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.variance)


def update_density(est: DensityEstimate, X: np.ndarray) -> DensityEstimate:
    """Fold a batch of rows into the running fit (in place, returned)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != est.mean.shape[0]:
        raise DimensionError(
            f"expected (N, {est.mean.shape[0]}) batch, got shape {X.shape}"
        )
    nb = X.shape[0]
    if nb == 0:
        return est
    mean_b = X.mean(axis=0)
    m2_b = np.sum((X - mean_b) ** 2, axis=0)
    n = est.count
    total = n + nb
    delta = mean_b - est.mean
    est.mean = est.mean + delta * (nb / total)
    est.m2 = est.m2 + m2_b + delta**2 * (n * nb / total)
    est.count = total
    return est


def expected_hidden(net: Network, est: DensityEstimate) -> np.ndarray:
    """Expected sigmoid activation of each hidden unit under the fit.

    The Gaussian integral of a sigmoid has no closed form; the probit
    surrogate rescales the mean pre-activation by the pre-activation
    variance, per unit.
    """
    if est.count < 1:
        raise ValidationError("density estimate has no samples")
    pre_mean = est.mean @ net.W_enc + net.b_enc
    pre_var = est.variance @ (net.W_enc**2)
    return expit(pre_mean / np.sqrt(1.0 + (math.pi / 8.0) * pre_var))


def expected_output(net: Network, est: DensityEstimate) -> np.ndarray:
    """Expected class probabilities under the input density."""
    eh = expected_hidden(net, est)
    return softmax_rows((eh @ net.W_out + net.b_out)[None, :])[0]


def ns_components(net: Network, est: DensityEstimate, y_onehot: np.ndarray):
    """Squared bias and variance of the expected output against a label.

    The second output moment pushes the squared expected activations
    through the same head, which keeps the variance informative instead
    of identically zero.
    """
    y_onehot = np.asarray(y_onehot, dtype=float)
    if y_onehot.shape != (net.m,) or not np.all((y_onehot == 0) | (y_onehot == 1)) \
            or y_onehot.sum() != 1:
        raise ValidationError("y must be a one-hot vector of the class count")
    eh = expected_hidden(net, est)
    ey = softmax_rows((eh @ net.W_out + net.b_out)[None, :])[0]
    ey2 = softmax_rows(((eh * eh) @ net.W_out + net.b_out)[None, :])[0]
    bias_sq = float(np.sum((ey - y_onehot) ** 2))
    var = float(np.sum(ey2 - ey**2))
    return bias_sq, var


def grow_signal(mean_bias, std_bias, min_mean_bias, min_std_bias, pi) -> bool:
    """High-bias control limit: running level exceeds the tracked minimum band."""
    return mean_bias + std_bias >= min_mean_bias + pi * min_std_bias


def prune_signal(mean_var, std_var, min_mean_var, min_std_var, chi) -> bool:
    """High-variance control limit; the doubled width resists pruning a
    node straight after it was added."""
    return mean_var + std_var >= min_mean_var + 2.0 * chi * min_std_var


def confidence_pi(bias_sq: float) -> float:
    return 1.3 * math.exp(-bias_sq) + 0.7


def confidence_chi(var: float) -> float:
    return 1.3 * math.exp(-var) + 0.7


def spc_update_vec(vec: np.ndarray, bias_sq: float, var: float,
                   raw_bias: float | None = None, raw_var: float | None = None):
    """Advance the flat SPC state by one sample; returns (grow, prune).

    Reference implementation; the compiled kernel mirrors it exactly.
    Minima follow the lowest running level seen (joint mean/std pair),
    are consulted only after the warm-up, and are re-based on the firing
    statistic when a signal fires.
    """
    n = vec[SPC_COUNT] + 1.0
    vec[SPC_COUNT] = n
    d = bias_sq - vec[SPC_MEAN_BIAS]
    vec[SPC_MEAN_BIAS] += d / n
    vec[SPC_M2_BIAS] += d * (bias_sq - vec[SPC_MEAN_BIAS])
    d = var - vec[SPC_MEAN_VAR]
    vec[SPC_MEAN_VAR] += d / n
    vec[SPC_M2_VAR] += d * (var - vec[SPC_MEAN_VAR])
    std_b = math.sqrt(vec[SPC_M2_BIAS] / n)
    std_v = math.sqrt(vec[SPC_M2_VAR] / n)

    if n <= SPC_WARMUP:
        vec[SPC_MIN_MEAN_BIAS] = vec[SPC_MEAN_BIAS]
        vec[SPC_MIN_STD_BIAS] = std_b
        vec[SPC_MIN_MEAN_VAR] = vec[SPC_MEAN_VAR]
        vec[SPC_MIN_STD_VAR] = std_v
        return False, False

    if vec[SPC_MEAN_BIAS] + std_b < vec[SPC_MIN_MEAN_BIAS] + vec[SPC_MIN_STD_BIAS]:
        vec[SPC_MIN_MEAN_BIAS] = vec[SPC_MEAN_BIAS]
        vec[SPC_MIN_STD_BIAS] = std_b
    if vec[SPC_MEAN_VAR] + std_v < vec[SPC_MIN_MEAN_VAR] + vec[SPC_MIN_STD_VAR]:
        vec[SPC_MIN_MEAN_VAR] = vec[SPC_MEAN_VAR]
        vec[SPC_MIN_STD_VAR] = std_v

    pi = confidence_pi(bias_sq if raw_bias is None else raw_bias)
    chi = confidence_chi(var if raw_var is None else raw_var)
    grow = grow_signal(vec[SPC_MEAN_BIAS], std_b,
                       vec[SPC_MIN_MEAN_BIAS], vec[SPC_MIN_STD_BIAS], pi)
    prune = (not grow) and prune_signal(vec[SPC_MEAN_VAR], std_v,
                                        vec[SPC_MIN_MEAN_VAR], vec[SPC_MIN_STD_VAR], chi)
    if grow:
        vec[SPC_MIN_MEAN_BIAS] = vec[SPC_MEAN_BIAS]
        vec[SPC_MIN_STD_BIAS] = std_b
        vec[SPC_GROW_COUNT] += 1
    elif prune:
        vec[SPC_MIN_MEAN_VAR] = vec[SPC_MEAN_VAR]
        vec[SPC_MIN_STD_VAR] = std_v
        vec[SPC_PRUNE_COUNT] += 1
    return bool(grow), bool(prune)


@dataclass
class SpcState:
    """Running control-chart statistics of the bias and variance streams.

    Backed by a flat vector so the hot loop can update it without object
    overhead; named accessors are for inspection and tests.
    """

    vec: np.ndarray = field(default_factory=lambda: np.zeros(SPC_SLOTS))

    @property
    def count(self) -> int:
        return int(self.vec[SPC_COUNT])

    @property
    def mean_bias(self) -> float:
        return float(self.vec[SPC_MEAN_BIAS])

    @property
    def std_bias(self) -> float:
        n = self.vec[SPC_COUNT]
        return math.sqrt(self.vec[SPC_M2_BIAS] / n) if n else 0.0

    @property
    def mean_var(self) -> float:
        return float(self.vec[SPC_MEAN_VAR])

    @property
    def std_var(self) -> float:
        n = self.vec[SPC_COUNT]
        return math.sqrt(self.vec[SPC_M2_VAR] / n) if n else 0.0

    @property
    def grow_count(self) -> int:
        return int(self.vec[SPC_GROW_COUNT])

    @property
    def prune_count(self) -> int:
        return int(self.vec[SPC_PRUNE_COUNT])


def spc_step(spc: SpcState, bias_sq: float, var: float,
             raw_bias: float | None = None, raw_var: float | None = None):
    """One control-chart step; mutates the state, returns (state, grow, prune)."""
    grow, prune = spc_update_vec(spc.vec, bias_sq, var, raw_bias, raw_var)
    return spc, grow, prune


def least_significant_node(net: Network, est: DensityEstimate) -> int:
    """Index of the hidden unit contributing least to the output.

    Contribution is the expected activation magnitude times the absolute
    outgoing weight mass; ties resolve to the lowest index.
    """
    if net.R < 2:
        raise ValidationError("refusing to select a prune target with one node")
    eh = expected_hidden(net, est)
    significance = np.abs(eh) * np.sum(np.abs(net.W_out), axis=1)
    return int(np.argmin(significance))
