# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-sample training kernel.

Behaviourally identical to ``_ref``; the parity tests hold the two
backends together step for step, so any change here must land there
too (and vice versa).
"""

from libc.math cimport exp, log, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double LOG_FLOOR = 1e-12
cdef double PI8 = 0.39269908169872414  # pi / 8 in double precision
cdef double WARMUP = 2.0


cdef inline double _expit(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline void _softmax(double[::1] v) noexcept nogil:
    cdef Py_ssize_t m = v.shape[0]
    cdef Py_ssize_t o
    cdef double mx = v[0]
    cdef double s = 0.0
    for o in range(1, m):
        if v[o] > mx:
            mx = v[o]
    for o in range(m):
        v[o] = exp(v[o] - mx)
        s += v[o]
    for o in range(m):
        v[o] /= s


cdef (bint, bint) _spc_update(double[::1] v, double bias_sq, double var) noexcept nogil:
    # Slot layout: 0 count, 1 mean_bias, 2 m2_bias, 3 mean_var, 4 m2_var,
    # 5..8 minima (mean_b, std_b, mean_v, std_v), 9 grow count, 10 prune count.
    cdef double n = v[0] + 1.0
    cdef double d, std_b, std_v, pi_lvl, chi
    cdef bint grow, prune
    v[0] = n
    d = bias_sq - v[1]
    v[1] += d / n
    v[2] += d * (bias_sq - v[1])
    d = var - v[3]
    v[3] += d / n
    v[4] += d * (var - v[3])
    std_b = sqrt(v[2] / n)
    std_v = sqrt(v[4] / n)

    if n <= WARMUP:
        v[5] = v[1]
        v[6] = std_b
        v[7] = v[3]
        v[8] = std_v
        return False, False

    if v[1] + std_b < v[5] + v[6]:
        v[5] = v[1]
        v[6] = std_b
    if v[3] + std_v < v[7] + v[8]:
        v[7] = v[3]
        v[8] = std_v

    pi_lvl = 1.3 * exp(-bias_sq) + 0.7
    chi = 1.3 * exp(-var) + 0.7
    grow = v[1] + std_b >= v[5] + pi_lvl * v[6]
    prune = (not grow) and (v[3] + std_v >= v[7] + 2.0 * chi * v[8])
    if grow:
        v[5] = v[1]
        v[6] = std_b
        v[9] += 1.0
    elif prune:
        v[7] = v[3]
        v[8] = std_v
        v[10] += 1.0
    return grow, prune


cdef double _ce_step(double[:, ::1] W_enc, double[::1] b_enc,
                     double[:, ::1] W_out, double[::1] b_out,
                     double[::1] x, Py_ssize_t y, double lr,
                     double[::1] h, double[::1] d, double[::1] dz) noexcept nogil:
    cdef Py_ssize_t u = W_enc.shape[0]
    cdef Py_ssize_t R = W_enc.shape[1]
    cdef Py_ssize_t m = W_out.shape[1]
    cdef Py_ssize_t f, r, o
    cdef double z, py, loss
    for r in range(R):
        z = b_enc[r]
        for f in range(u):
            z += x[f] * W_enc[f, r]
        h[r] = _expit(z)
    for o in range(m):
        z = b_out[o]
        for r in range(R):
            z += h[r] * W_out[r, o]
        d[o] = z
    _softmax(d)
    py = d[y]
    if py < LOG_FLOOR:
        py = LOG_FLOOR
    loss = -log(py)
    d[y] -= 1.0
    for r in range(R):
        z = 0.0
        for o in range(m):
            z += W_out[r, o] * d[o]
        dz[r] = z * h[r] * (1.0 - h[r])
    for r in range(R):
        for o in range(m):
            W_out[r, o] -= lr * h[r] * d[o]
    for o in range(m):
        b_out[o] -= lr * d[o]
    for f in range(u):
        for r in range(R):
            W_enc[f, r] -= lr * x[f] * dz[r]
    for r in range(R):
        b_enc[r] -= lr * dz[r]
    return loss


def ce_sgd_step(double[:, ::1] W_enc, double[::1] b_enc,
                double[:, ::1] W_out, double[::1] b_out,
                double[::1] x, Py_ssize_t y, double lr):
    """One stochastic cross-entropy step on a single sample, in place.

    Returns the pre-update loss.
    """
    cdef Py_ssize_t R = W_enc.shape[1]
    cdef Py_ssize_t m = W_out.shape[1]
    h = np.empty(R)
    d = np.empty(m)
    dz = np.empty(R)
    return _ce_step(W_enc, b_enc, W_out, b_out, x, y, lr, h, d, dz)


def discriminative_pass(double[:, ::1] W_enc, double[::1] b_enc,
                        double[:, ::1] W_out, double[::1] b_out,
                        double[:, ::1] X, cnp.int64_t[::1] y,
                        double[::1] mu, double[::1] var,
                        double[::1] spc_vec, double lr,
                        bint use_structure, Py_ssize_t start):
    """Per-sample supervised pass with structural signalling.

    Same contract as the reference backend: stops before the gradient
    step of a sample whose control-chart check fires, returning
    ``(sample index, event, loss sum)`` with event 1 = grow, 2 = prune;
    event 0 means the batch completed.
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t u = W_enc.shape[0]
    cdef Py_ssize_t R = W_enc.shape[1]
    cdef Py_ssize_t m = W_out.shape[1]
    cdef Py_ssize_t i, f, r, o
    cdef double ce_sum = 0.0
    cdef double pre, q, z, bias_sq, var_out
    cdef bint grow, prune
    h_buf = np.empty(R)
    d_buf = np.empty(m)
    dz_buf = np.empty(R)
    eh_buf = np.empty(R)
    ey_buf = np.empty(m)
    ey2_buf = np.empty(m)
    cdef double[::1] h = h_buf
    cdef double[::1] d = d_buf
    cdef double[::1] dz = dz_buf
    cdef double[::1] eh = eh_buf
    cdef double[::1] ey = ey_buf
    cdef double[::1] ey2 = ey2_buf

    i = start
    while i < n:
        if use_structure:
            for r in range(R):
                pre = b_enc[r]
                q = 0.0
                for f in range(u):
                    pre += mu[f] * W_enc[f, r]
                    q += var[f] * W_enc[f, r] * W_enc[f, r]
                eh[r] = _expit(pre / sqrt(1.0 + PI8 * q))
            for o in range(m):
                z = b_out[o]
                for r in range(R):
                    z += eh[r] * W_out[r, o]
                ey[o] = z
            _softmax(ey)
            for o in range(m):
                z = b_out[o]
                for r in range(R):
                    z += eh[r] * eh[r] * W_out[r, o]
                ey2[o] = z
            _softmax(ey2)
            bias_sq = 0.0
            var_out = 0.0
            for o in range(m):
                z = ey[o] - (1.0 if o == y[i] else 0.0)
                bias_sq += z * z
                var_out += ey2[o] - ey[o] * ey[o]
            grow, prune = _spc_update(spc_vec, bias_sq, var_out)
            if grow:
                return i, 1, ce_sum
            if prune and R >= 2:
                return i, 2, ce_sum
        ce_sum += _ce_step(W_enc, b_enc, W_out, b_out, X[i], y[i], lr,
                           h, d, dz)
        i += 1
    return n, 0, ce_sum
