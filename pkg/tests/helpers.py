"""Shared fixtures-by-function for the test modules."""
import math

import numpy as np

from esrn.dimensional import PiGroup, candidate_set
from esrn.network import _forward, manual_network, random_network
from esrn.expression import EXP_CLAMP

W_D = PiGroup.from_map({"w": 1, "d": -1})
U_US = PiGroup.from_map({"U": 1, "Ustar": -1})
DL_DU = PiGroup.from_map({"Dl": 1, "d": -1, "U": -1}, output="Dl")
DL_DUS = PiGroup.from_map({"Dl": 1, "d": -1, "Ustar": -1}, output="Dl")
DL_WUS = PiGroup.from_map({"Dl": 1, "w": -1, "Ustar": -1}, output="Dl")
CANDIDATES = candidate_set()


def fig16_network(w_out=(1.0, -1.0), bias=2.63, w_hidden=(1.0, 1.0)):
    """ln|w/d| and ln|U/U*| hidden neurons feeding an exp output."""
    return manual_network(
        (W_D, U_US),
        DL_DU,
        [
            ([4, 4], [[w_hidden[0], 0.0], [0.0, w_hidden[1]]], [0.0, 0.0]),
            ([3], [list(w_out)], [bias]),
        ],
    )


def random_env(rng, n, ldc=False):
    """Positive raw columns; with ``ldc`` the Dl column follows 13.89*w*U*."""
    env = {
        "w": np.exp(rng.uniform(np.log(0.5), np.log(500.0), n)),
        "d": np.exp(rng.uniform(np.log(0.05), np.log(10.0), n)),
        "U": np.exp(rng.uniform(np.log(0.05), np.log(1.5), n)),
        "Ustar": np.exp(rng.uniform(np.log(0.005), np.log(0.5), n)),
    }
    env["Dl"] = 13.89 * env["w"] * env["Ustar"] if ldc else np.exp(rng.uniform(-3, 5, n))
    return env


def random_net(rng, topology=(5, 3, 1)):
    net = random_network(rng, CANDIDATES.inputs, CANDIDATES.outputs, topology)
    for layer in net.layers:
        layer.bias = rng.uniform(-1.0, 1.0, layer.size)
    return net


def away_from_guards(net, X, margin=1e-3):
    """True if no log argument is near 0 and no exp argument near its clamp."""
    with np.errstate(all="ignore"):
        _, cache = _forward(net, X)
    for layer, (_, Z, A) in zip(net.layers, cache):
        if not np.all(np.isfinite(A)):
            return False
        for j, code in enumerate(layer.activations):
            z = Z[:, j]
            if code == 4 and np.min(np.abs(z)) < margin:
                return False
            if code == 3 and np.max(np.abs(z)) > EXP_CLAMP - 10:
                return False
    return True


def rel_close(a, b, rtol):
    return abs(a - b) <= rtol * max(1.0, abs(a), abs(b)) or math.isclose(a, b, rel_tol=rtol)


def brute_quartiles(values):
    """Order statistics found by counting, halves by repeated extraction."""
    pool = list(values)
    n = len(pool)
    if n == 1:
        return pool[0], pool[0]
    h = n // 2
    rest = list(pool)
    low = []
    for _ in range(h):
        m = min(rest)
        rest.remove(m)
        low.append(m)
    rest = list(pool)
    high = []
    for _ in range(h):
        m = max(rest)
        rest.remove(m)
        high.append(m)

    def kth(xs, k):
        for x in xs:
            below = sum(1 for y in xs if y < x)
            equal = sum(1 for y in xs if y == x)
            if below <= k < below + equal:
                return x

    def med(xs):
        m = len(xs)
        if m % 2:
            return float(kth(xs, m // 2))
        return (kth(xs, m // 2 - 1) + kth(xs, m // 2)) / 2.0

    return med(low), med(high)


def loss_ld(net, X, y, theta=None):
    """Training loss recomputed in extended precision from a parameter vector.

    Written independently of the library so finite differences of it are
    not swamped by float64 cancellation when the loss itself is large.
    """
    ld = np.longdouble
    theta = np.asarray(net.get_vector() if theta is None else theta, dtype=ld)
    H = np.asarray(X, dtype=ld)
    pos = 0
    for layer in net.layers:
        m, k = layer.weights.shape
        flat = np.asarray(theta[pos:pos + m * k], dtype=ld).reshape(m, k) * layer.mask
        b = np.asarray(theta[pos + m * k:pos + m * k + m], dtype=ld)
        pos += m * k + m
        Z = H @ flat.T + b
        A = np.empty_like(Z)
        for j, code in enumerate(layer.activations):
            z = Z[:, j]
            if code == 1:
                A[:, j] = 1
            elif code == 2:
                A[:, j] = z
            elif code == 3:
                A[:, j] = np.exp(np.clip(z, -EXP_CLAMP, EXP_CLAMP))
            elif code == 4:
                A[:, j] = np.log(np.maximum(np.abs(z), ld(1e-12)))
            else:
                A[:, j] = 1 / (1 + np.exp(-z))
        H = A
    pred = H[:, 0]
    y = np.asarray(y, dtype=ld)
    if net.layers[-1].activations[0] == 3:
        resid = np.log(np.maximum(pred, ld(1e-12))) - np.log(y)
    else:
        resid = pred - y
    return np.mean(resid ** 2)


def fd_gradient(net, X, y, h=1e-5):
    """Central differences of ``loss_ld`` over the live parameters."""
    theta = net.get_vector().astype(np.longdouble)
    live = np.concatenate([np.concatenate([l.mask.ravel(), np.ones(l.size, bool)]) for l in net.layers])
    out = {}
    for i in np.flatnonzero(live):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        out[i] = float((loss_ld(net, X, y, up) - loss_ld(net, X, y, down)) / (2 * h))
    return out
