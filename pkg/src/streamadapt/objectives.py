"""Loss terms of the joint objective, each with its analytic gradient.

Four terms: reconstruction error of corrupted inputs, cross entropy on
labelled source samples, a graph-smoothness penalty on target predictions,
and a weight-norm regularizer scaled by the source/target moment
discrepancy measured in the embedding space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from streamadapt.errors import DimensionError, ValidationError
from streamadapt.model import GradientSet, Network, encode, softmax_rows
from scipy.special import expit

LOG_FLOOR = 1e-12


@dataclass
class SimilarityMatrix:
    """Dense sample-similarity kernel exp(-||x_i - x_j|| / (2 sigma))."""

    W: np.ndarray
    sigma: float


@dataclass
class LaplacianMatrix:
    """Graph Laplacian D - W of a similarity matrix."""

    L: np.ndarray


def recon_loss_grad(net: Network, X_clean: np.ndarray, X_noisy: np.ndarray):
    """Mean squared reconstruction error of the clean inputs from their
    corrupted version, with gradients for the encoder and decoder only."""
    X_clean = np.asarray(X_clean, dtype=float)
    X_noisy = np.asarray(X_noisy, dtype=float)
    if X_clean.shape != X_noisy.shape or X_clean.ndim != 2 or X_clean.shape[1] != net.u:
        raise DimensionError(
            f"expected matching (N, {net.u}) inputs, got {X_clean.shape} and {X_noisy.shape}"
        )
    n = X_clean.shape[0]
    H = expit(X_noisy @ net.W_enc + net.b_enc)
    Xhat = expit(H @ net.W_dec + net.b_dec)

    diff = Xhat - X_clean
    loss = float(np.sum(diff * diff) / n)

    dZ2 = (2.0 / n) * diff * Xhat * (1.0 - Xhat)
    g = GradientSet.zeros_like(net)
    g.W_dec[:] = H.T @ dZ2
    g.b_dec[:] = dZ2.sum(axis=0)
    dZ1 = (dZ2 @ net.W_dec.T) * H * (1.0 - H)
    g.W_enc[:] = X_noisy.T @ dZ1
    g.b_enc[:] = dZ1.sum(axis=0)
    return loss, g


def _check_one_hot(Y: np.ndarray, m: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != m:
        raise ValidationError(f"labels must be one-hot rows of width {m}")
    if not np.all((Y == 0) | (Y == 1)) or not np.all(Y.sum(axis=1) == 1):
        raise ValidationError("label rows must be one-hot")
    return Y


def ce_loss_grad(net: Network, X: np.ndarray, Y: np.ndarray):
    """Mean cross entropy of the softmax head on one-hot labels."""
    Y = _check_one_hot(Y, net.m)
    H = encode(net, X)
    P = softmax_rows(H @ net.W_out + net.b_out)
    n = X.shape[0]

    loss = float(-np.sum(Y * np.log(np.maximum(P, LOG_FLOOR))) / n)

    dZ = (P - Y) / n
    g = GradientSet.zeros_like(net)
    g.W_out[:] = H.T @ dZ
    g.b_out[:] = dZ.sum(axis=0)
    dZ1 = (dZ @ net.W_out.T) * H * (1.0 - H)
    g.W_enc[:] = np.asarray(X, dtype=float).T @ dZ1
    g.b_enc[:] = dZ1.sum(axis=0)
    return loss, g


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    """Euclidean distance between every pair of rows."""
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def median_bandwidth(X: np.ndarray) -> float:
    """Median pairwise distance of the batch; 1.0 when all rows coincide."""
    n = X.shape[0]
    if n < 2:
        return 1.0
    D = pairwise_distances(X)
    iu = np.triu_indices(n, k=1)
    med = float(np.median(D[iu]))
    return med if med > 0 else 1.0


def similarity_matrix(X: np.ndarray, sigma: float) -> SimilarityMatrix:
    """Kernel on the distance itself (not its square), unit diagonal."""
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    X = np.asarray(X, dtype=float)
    W = np.exp(-pairwise_distances(X) / (2.0 * sigma))
    return SimilarityMatrix(W=W, sigma=sigma)


def laplacian(sim: SimilarityMatrix) -> LaplacianMatrix:
    W = sim.W
    return LaplacianMatrix(L=np.diag(W.sum(axis=1)) - W)


def smoothness_loss_grad(net: Network, X_t: np.ndarray, bandwidth: float | None = None):
    """Penalty on prediction differences between similar target samples.

    The quadratic form over the graph Laplacian is scaled by 2 so that it
    equals the sum over ordered sample pairs of the squared prediction
    difference times the pair similarity.
    """
    X_t = np.asarray(X_t, dtype=float)
    if X_t.ndim != 2 or X_t.shape[1] != net.u:
        raise DimensionError(f"expected (N, {net.u}) target batch, got {X_t.shape}")
    if X_t.shape[0] < 2:
        return 0.0, GradientSet.zeros_like(net)

    sigma = median_bandwidth(X_t) if bandwidth is None else bandwidth
    L = laplacian(similarity_matrix(X_t, sigma)).L

    H = encode(net, X_t)
    P = softmax_rows(H @ net.W_out + net.b_out)
    LP = L @ P
    loss = 2.0 * float(np.sum(P * LP))

    dP = 4.0 * LP
    # softmax backward, row-wise
    dZ = P * (dP - np.sum(dP * P, axis=1, keepdims=True))
    g = GradientSet.zeros_like(net)
    g.W_out[:] = H.T @ dZ
    g.b_out[:] = dZ.sum(axis=0)
    dZ1 = (dZ @ net.W_out.T) * H * (1.0 - H)
    g.W_enc[:] = X_t.T @ dZ1
    g.b_enc[:] = dZ1.sum(axis=0)
    return loss, g


def cmd(A: np.ndarray, B: np.ndarray, order: int, lo: float, hi: float) -> float:
    """Central moment discrepancy between two embedded batches.

    Sums the distance of the column means plus the distances of the
    elementwise central moments up to ``order``, each scaled by the
    matching power of the activation range.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.size == 0 or B.size == 0:
        raise ValidationError("discrepancy of an empty batch is undefined")
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise DimensionError("batches must be 2-d with equal column counts")
    if hi <= lo:
        raise ValidationError("activation range must satisfy hi > lo")
    if order < 1:
        raise ValidationError("order must be >= 1")

    span = abs(hi - lo)
    mean_a = A.mean(axis=0)
    mean_b = B.mean(axis=0)
    total = float(np.linalg.norm(mean_a - mean_b)) / span
    ctr_a = A - mean_a
    ctr_b = B - mean_b
    for k in range(2, order + 1):
        mk_a = np.mean(ctr_a**k, axis=0)
        mk_b = np.mean(ctr_b**k, axis=0)
        total += float(np.linalg.norm(mk_a - mk_b)) / span**k
    return total


def weight_norm(net: Network) -> float:
    """Euclidean norm of all weight-matrix entries; biases excluded."""
    return float(
        np.sqrt(
            np.sum(net.W_enc**2) + np.sum(net.W_dec**2) + np.sum(net.W_out**2)
        )
    )


def cmd_reg_loss_grad(net: Network, X_s: np.ndarray, X_t: np.ndarray, alpha: float, order: int):
    """Weight-norm penalty scaled by the embedding discrepancy.

    The discrepancy acts as a fixed coefficient: the gradient is taken of
    the norm alone, so an irrelevant source (large discrepancy) shrinks
    the shared weights harder.  Returns (loss, discrepancy, gradients).
    """
    if alpha < 0:
        raise ValidationError("alpha must be nonnegative")
    value = cmd(encode(net, X_s), encode(net, X_t), order, 0.0, 1.0)
    norm = weight_norm(net)
    loss = alpha * value * norm
    g = GradientSet.zeros_like(net)
    if alpha == 0.0 or value == 0.0 or norm == 0.0:
        return 0.0 if loss == 0.0 else loss, value, g
    coeff = alpha * value / norm
    g.W_enc[:] = coeff * net.W_enc
    g.W_dec[:] = coeff * net.W_dec
    g.W_out[:] = coeff * net.W_out
    return loss, value, g
