"""Compiled full-batch Adam loop for symbolic networks.

Parameters travel as one flat vector laid out layer by layer: the ``m x k``
weight block (row-major) followed by the ``m`` biases.  ``keep`` has the same
layout and is 1 for live parameters, 0 for absent edges.
"""
import math

import numpy as np
from numba import njit

LOG_FLOOR = 1e-12
EXP_CLAMP = 60.0


@njit(cache=True)
def _act(code, z):
    if code == 1:
        return 1.0
    if code == 2:
        return z
    if code == 3:
        if z > EXP_CLAMP:
            z = EXP_CLAMP
        elif z < -EXP_CLAMP:
            z = -EXP_CLAMP
        return math.exp(z)
    if code == 4:
        a = abs(z)
        if a < LOG_FLOOR:
            a = LOG_FLOOR
        return math.log(a)
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _dact(code, z, a):
    if code == 1:
        return 0.0
    if code == 2:
        return 1.0
    if code == 3:
        return a if abs(z) < EXP_CLAMP else 0.0
    if code == 4:
        return 1.0 / z if abs(z) > LOG_FLOOR else 0.0
    return a * (1.0 - a)


@njit(cache=True)
def _loss_grad(X, y, log_mode, theta, keep, sizes, acts, grad, zbuf, abuf, dbuf):
    n = X.shape[0]
    n_layers = sizes.shape[0] - 1
    for q in range(grad.shape[0]):
        grad[q] = 0.0
    total = 0.0
    for s in range(n):
        p_off = 0
        u_off = 0
        for l in range(n_layers):
            k = sizes[l]
            m = sizes[l + 1]
            prev = u_off - k
            for i in range(m):
                z = theta[p_off + m * k + i]
                for j in range(k):
                    w = theta[p_off + i * k + j]
                    if w != 0.0:
                        x = X[s, j] if l == 0 else abuf[prev + j]
                        z += w * x
                zbuf[u_off + i] = z
                abuf[u_off + i] = _act(acts[u_off + i], z)
            p_off += m * k + m
            u_off += m
        out = u_off - 1
        pred = abuf[out]
        if log_mode:
            if pred > LOG_FLOOR:
                r = math.log(pred) - math.log(y[s])
                dpred = 2.0 * r / n / pred
            else:
                r = math.log(LOG_FLOOR) - math.log(y[s])
                dpred = 0.0
        else:
            r = pred - y[s]
            dpred = 2.0 * r / n
        total += r * r
        # backward
        for q in range(u_off):
            dbuf[q] = 0.0
        dbuf[out] = dpred
        for l in range(n_layers - 1, -1, -1):
            k = sizes[l]
            m = sizes[l + 1]
            u_off -= m
            p_off -= m * k + m
            prev = u_off - k
            for i in range(m):
                dz = dbuf[u_off + i] * _dact(acts[u_off + i], zbuf[u_off + i], abuf[u_off + i])
                if dz == 0.0:
                    continue
                grad[p_off + m * k + i] += dz
                for j in range(k):
                    if keep[p_off + i * k + j] == 0.0:
                        continue
                    x = X[s, j] if l == 0 else abuf[prev + j]
                    grad[p_off + i * k + j] += dz * x
                    if l > 0:
                        dbuf[prev + j] += dz * theta[p_off + i * k + j]
    return total / n


@njit(cache=True, nogil=True)
def adam_train(X, y, log_mode, theta0, keep, sizes, acts, epochs, lr, beta1, beta2, eps):
    """Returns ``(best_theta, best_loss)`` over ``epochs`` Adam steps."""
    theta = theta0.copy()
    n_units = 0
    for l in range(1, sizes.shape[0]):
        n_units += sizes[l]
    zbuf = np.zeros(n_units)
    abuf = np.zeros(n_units)
    dbuf = np.zeros(n_units)
    grad = np.zeros(theta.shape[0])
    m = np.zeros(theta.shape[0])
    v = np.zeros(theta.shape[0])
    best = theta.copy()
    best_loss = np.inf
    for t in range(1, epochs + 2):
        loss = _loss_grad(X, y, log_mode, theta, keep, sizes, acts, grad, zbuf, abuf, dbuf)
        if not math.isfinite(loss):
            break
        if loss < best_loss:
            best_loss = loss
            best[:] = theta
        if t > epochs:
            break
        finite = True
        for q in range(grad.shape[0]):
            if not math.isfinite(grad[q]):
                finite = False
                break
        if not finite:
            break
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for q in range(theta.shape[0]):
            if keep[q] == 0.0:
                continue
            g = grad[q]
            m[q] = beta1 * m[q] + (1.0 - beta1) * g
            v[q] = beta2 * v[q] + (1.0 - beta2) * g * g
            theta[q] -= lr * (m[q] / bc1) / (math.sqrt(v[q] / bc2) + eps)
    return best, best_loss
