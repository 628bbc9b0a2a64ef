"""Layered networks whose activations are symbolic primitives.

A network reads a few dimensionless input groups (the input slots), passes
them through sparse layers of neurons and predicts one dimensionless output
group.  Each neuron computes ``act(sum(w_i * x_i) + b)`` with ``act`` drawn
from a five-entry table:

====  ===================
code  primitive
====  ===================
1     constant 1
2     identity
3     exp (argument clamped to [-60, 60])
4     ln|x| (floored at 1e-12)
5     logistic sigmoid
====  ===================

Because every primitive is elementary, a trained network decodes exactly
into a closed-form :class:`~esrn.expression.Expr`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dimensional import PiGroup, normalizer
try:
    from . import _kernels
except ImportError:  # pragma: no cover
    _kernels = None
from .expression import EXP_CLAMP, LOG_FLOOR, Expr, guarded_exp, guarded_log, sigmoid

ACTIVATIONS = {1: "one", 2: "identity", 3: "exp", 4: "log", 5: "sigmoid"}
ACTIVATION_CODES = tuple(ACTIVATIONS)


def activate(code: int, z):
    if code == 1:
        return np.ones_like(z)
    if code == 2:
        return z
    if code == 3:
        return guarded_exp(z)
    if code == 4:
        return guarded_log(z)
    if code == 5:
        return sigmoid(z)
    raise ValueError(f"unknown activation {code}")


def activate_grad(code: int, z, a):
    """Derivative of ``activate(code, z)`` given its value ``a``.

    Saturated guards (clamped exp, floored log) have zero slope.
    """
    if code == 1:
        return np.zeros_like(z)
    if code == 2:
        return np.ones_like(z)
    if code == 3:
        return np.where(np.abs(z) < EXP_CLAMP, a, 0.0)
    if code == 4:
        az = np.abs(z)
        return np.where(az > LOG_FLOOR, 1.0 / np.where(az > LOG_FLOOR, z, 1.0), 0.0)
    if code == 5:
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {code}")


@dataclass
class Layer:
    activations: np.ndarray  # (m,) int codes
    weights: np.ndarray  # (m, k); zero wherever mask is False
    mask: np.ndarray  # (m, k) bool connectivity
    bias: np.ndarray  # (m,)

    @property
    def size(self) -> int:
        return len(self.activations)

    def copy(self) -> "Layer":
        return Layer(self.activations.copy(), self.weights.copy(), self.mask.copy(), self.bias.copy())


@dataclass
class SymbolicNetwork:
    """Input slots -> hidden layers -> one output neuron.

    ``inputs`` are the dimensionless groups feeding the input slots and
    ``output`` the output group the network predicts (e.g. ``Dl/(d*U)``).
    ``trained``/``loss``/``fitness`` are bookkeeping for the evolution loop.
    """

    inputs: tuple
    output: PiGroup
    layers: list
    trained: bool = False
    loss: float = math.nan
    fitness: float = math.nan

    @property
    def topology(self) -> tuple:
        return (len(self.inputs),) + tuple(layer.size for layer in self.layers)

    @property
    def n_edges(self) -> int:
        return int(sum(layer.mask.sum() for layer in self.layers))

    @property
    def loss_mode(self) -> str:
        return "log" if self.layers[-1].activations[0] == 3 else "raw"

    def copy(self) -> "SymbolicNetwork":
        return SymbolicNetwork(
            tuple(self.inputs), self.output, [layer.copy() for layer in self.layers],
            self.trained, self.loss, self.fitness,
        )

    def offspring(self) -> "SymbolicNetwork":
        """A copy with the training bookkeeping reset."""
        child = self.copy()
        child.trained, child.loss, child.fitness = False, math.nan, math.nan
        return child

    def structure_key(self) -> tuple:
        return (
            self.inputs,
            self.output,
            tuple((tuple(l.activations), l.mask.tobytes(), l.mask.shape) for l in self.layers),
        )

    def params(self) -> list:
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out

    def get_vector(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_vector(self, vec: np.ndarray) -> None:
        i = 0
        for layer in self.layers:
            n = layer.weights.size
            layer.weights = vec[i:i + n].reshape(layer.weights.shape) * layer.mask
            i += n
            n = layer.bias.size
            layer.bias = vec[i:i + n].copy()
            i += n

    # -- serialisation -------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "inputs": [g.to_json() for g in self.inputs],
            "output": self.output.to_json(),
            "layers": [
                {
                    "activations": [int(a) for a in layer.activations],
                    "weights": layer.weights.tolist(),
                    "mask": layer.mask.astype(int).tolist(),
                    "bias": layer.bias.tolist(),
                }
                for layer in self.layers
            ],
            "loss": None if math.isnan(self.loss) else self.loss,
            "fitness": None if not math.isfinite(self.fitness) else self.fitness,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "SymbolicNetwork":
        inputs = tuple(PiGroup.from_json(g) for g in obj["inputs"])
        k = len(inputs)
        layers = []
        for spec in obj["layers"]:
            m = len(spec["activations"])
            mask = np.array(spec["mask"], dtype=bool).reshape(m, k)
            weights = np.array(spec["weights"], dtype=float).reshape(m, k)
            layers.append(Layer(np.array(spec["activations"], dtype=int), weights * mask, mask,
                                np.array(spec["bias"], dtype=float)))
            k = m
        net = cls(inputs, PiGroup.from_json(obj["output"]), layers)
        if obj.get("loss") is not None:
            net.loss = float(obj["loss"])
            net.trained = True
        if obj.get("fitness") is not None:
            net.fitness = float(obj["fitness"])
        return net


# -- construction ----------------------------------------------------------------

def make_layer(rng: np.random.Generator, size: int, fan_in: int, density: float = 0.5) -> Layer:
    """Random layer: uniform activations, weights on [-1, 1], zero bias.

    Every neuron gets at least one incoming edge and every upstream neuron at
    least one outgoing edge, so nothing is disconnected.
    """
    acts = rng.choice(ACTIVATION_CODES, size=size)
    mask = rng.random((size, fan_in)) < density
    for i in range(size):
        if fan_in and not mask[i].any():
            mask[i, rng.integers(fan_in)] = True
    for j in range(fan_in):
        if not mask[:, j].any():
            mask[rng.integers(size), j] = True
    weights = rng.uniform(-1.0, 1.0, (size, fan_in)) * mask
    return Layer(np.asarray(acts, dtype=int), weights, mask, np.zeros(size))


def random_network(
    rng: np.random.Generator,
    input_candidates: Sequence[PiGroup],
    output_candidates: Sequence[PiGroup],
    topology: Sequence[int],
) -> SymbolicNetwork:
    """Network with layer sizes drawn uniformly within ``topology`` bounds.

    ``topology[0]`` bounds the number of input slots (distinct groups, drawn
    without replacement); the remaining entries bound each neuron layer and
    the last must be 1.
    """
    if len(topology) < 2 or topology[-1] != 1:
        raise ValueError("topology needs at least two entries and must end with 1")
    n_in = int(rng.integers(1, min(topology[0], len(input_candidates)) + 1))
    picks = rng.choice(len(input_candidates), size=n_in, replace=False)
    inputs = tuple(input_candidates[i] for i in picks)
    output = output_candidates[int(rng.integers(len(output_candidates)))]
    layers = []
    fan_in = n_in
    for bound in topology[1:]:
        size = int(rng.integers(1, bound + 1))
        layers.append(make_layer(rng, size, fan_in))
        fan_in = size
    return SymbolicNetwork(inputs, output, layers)


def manual_network(inputs, output, layers) -> SymbolicNetwork:
    """Build a network from ``(activations, weights, bias)`` triples.

    Zero weights are treated as absent edges.
    """
    built = []
    for acts, weights, bias in layers:
        w = np.atleast_2d(np.asarray(weights, dtype=float))
        built.append(Layer(np.asarray(acts, dtype=int), w, w != 0, np.asarray(bias, dtype=float)))
    return SymbolicNetwork(tuple(inputs), output, built)


# -- evaluation ------------------------------------------------------------------

def design_matrix(net: SymbolicNetwork, env: Mapping[str, object]) -> np.ndarray:
    """Input-slot values, one column per slot, from raw column arrays."""
    n = len(np.atleast_1d(next(iter(env.values()))))
    cols = [np.broadcast_to(np.asarray(g.evaluate(env), dtype=float), (n,)) for g in net.inputs]
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def target_values(net: SymbolicNetwork, env: Mapping[str, object]) -> np.ndarray:
    """Dimensionless training target: ``Dl`` divided by the output normaliser."""
    return np.asarray(net.output.evaluate(env), dtype=float)


def _affine_exact(layer: Layer, H: np.ndarray) -> np.ndarray:
    # bias first, then edges in slot order: the summation order of decode()
    Z = np.empty((H.shape[0], layer.size))
    for i in range(layer.size):
        z = np.full(H.shape[0], layer.bias[i])
        for j in np.flatnonzero(layer.mask[i]):
            z = z + layer.weights[i, j] * H[:, j]
        Z[:, i] = z
    return Z


def _forward(net: SymbolicNetwork, X: np.ndarray, exact: bool = False):
    """Forward pass keeping pre-activations for back-propagation."""
    H = X
    cache = []
    for layer in net.layers:
        Z = _affine_exact(layer, H) if exact else H @ layer.weights.T + layer.bias
        A = np.empty_like(Z)
        for j, code in enumerate(layer.activations):
            A[:, j] = activate(code, Z[:, j])
        cache.append((H, Z, A))
        H = A
    return H[:, 0], cache


def forward_batch(net: SymbolicNetwork, X: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _forward(net, np.asarray(X, dtype=float), exact=True)[0]


def forward(net: SymbolicNetwork, sample) -> float:
    """Predicted dimensionless output for one sample."""
    env = {c: np.array([getattr(sample, c)], dtype=float) for c in _variables(net)}
    return float(forward_batch(net, design_matrix(net, env))[0])


def predict_dl(net: SymbolicNetwork, env: Mapping[str, object]) -> np.ndarray:
    """Dimensional prediction: network output times the output normaliser."""
    X = design_matrix(net, env)
    scale = np.asarray(normalizer(net.output).evaluate(env), dtype=float)
    return forward_batch(net, X) * scale


def _variables(net: SymbolicNetwork) -> set:
    names = {v for g in net.inputs for v, _ in g.exponents}
    return names


# -- training --------------------------------------------------------------------

def loss_and_grad(net: SymbolicNetwork, X: np.ndarray, y: np.ndarray, with_grad: bool = True):
    """Mean squared error and its gradient with respect to every weight/bias.

    With an exp output neuron the error is taken between ``ln y`` and
    ``ln(max(prediction, 1e-12))``; otherwise on raw values.
    """
    pred, cache = _forward(net, X)
    n = len(y)
    log_mode = net.loss_mode == "log"
    if log_mode:
        floored = pred > LOG_FLOOR
        resid = np.log(np.where(floored, pred, LOG_FLOOR)) - np.log(y)
    else:
        resid = pred - y
    loss = float(np.mean(resid ** 2))
    if not with_grad:
        return loss, None
    if log_mode:
        dpred = np.where(floored, 2.0 * resid / n / np.where(floored, pred, 1.0), 0.0)
    else:
        dpred = 2.0 * resid / n
    grads = [None] * (2 * len(net.layers))
    dA = dpred[:, None]
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        H, Z, A = cache[li]
        dZ = np.empty_like(Z)
        for j, code in enumerate(layer.activations):
            dZ[:, j] = dA[:, j] * activate_grad(code, Z[:, j], A[:, j])
        grads[2 * li] = (dZ.T @ H) * layer.mask
        grads[2 * li + 1] = dZ.sum(axis=0)
        if li:
            dA = dZ @ layer.weights
    return loss, grads


@dataclass
class AdamConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def train(
    net: SymbolicNetwork,
    X: np.ndarray,
    y: np.ndarray,
    epochs: int = 500,
    lr: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    backend: str = "auto",
    freeze: Sequence[int] = (),
) -> tuple[SymbolicNetwork, float]:
    """Full-batch Adam on a copy of ``net``; returns ``(trained, loss)``.

    The parameters with the lowest loss seen are kept, so the returned loss
    never exceeds the starting loss.  A non-finite loss marks the network
    dead (``loss = inf``).  ``backend`` is ``"numba"``, ``"numpy"`` or
    ``"auto"`` (numba when importable); both run the same update rule.
    Layers listed in ``freeze`` keep their weights and biases.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if backend == "auto":
        backend = "numba" if _kernels is not None else "numpy"
    if backend == "numba":
        return _train_compiled(net, X, y, epochs, lr, beta1, beta2, eps, freeze)
    if backend != "numpy":
        raise ValueError(f"unknown backend {backend!r}")
    out = net.copy()
    params = out.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    best_loss = math.inf
    best = [p.copy() for p in params]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for t in range(1, epochs + 2):
            loss, grads = loss_and_grad(out, X, y, with_grad=t <= epochs)
            if grads is not None:
                for li in freeze:
                    grads[2 * li] = np.zeros_like(grads[2 * li])
                    grads[2 * li + 1] = np.zeros_like(grads[2 * li + 1])
            if not math.isfinite(loss):
                break
            if loss < best_loss:
                best_loss = loss
                best = [p.copy() for p in params]
            if t > epochs or any(not np.all(np.isfinite(g)) for g in grads):
                break
            bc1 = 1.0 - beta1 ** t
            bc2 = 1.0 - beta2 ** t
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= beta1
                mi += (1.0 - beta1) * g
                vi *= beta2
                vi += (1.0 - beta2) * g * g
                p -= lr * (mi / bc1) / (np.sqrt(vi / bc2) + eps)
    for p, b in zip(params, best):
        p[...] = b
    for layer in out.layers:
        layer.weights *= layer.mask
    out.trained = True
    out.loss = best_loss if math.isfinite(best_loss) else math.inf
    return out, out.loss


def _train_compiled(net, X, y, epochs, lr, beta1, beta2, eps, freeze=()):
    if _kernels is None:
        raise RuntimeError("numba is not installed")
    out = net.copy()
    keep = np.concatenate([
        np.concatenate([l.mask.ravel(), np.ones(l.size, bool)]) & (li not in freeze)
        for li, l in enumerate(out.layers)
    ])
    sizes = np.array(out.topology, dtype=np.int64)
    acts = np.concatenate([l.activations for l in out.layers]).astype(np.int64)
    theta, loss = _kernels.adam_train(
        np.ascontiguousarray(X), y, out.loss_mode == "log", out.get_vector(), keep.astype(float),
        sizes, acts, int(epochs), float(lr), float(beta1), float(beta2), float(eps),
    )
    out.set_vector(theta)
    # re-score with the reference loss; summation order differs from numpy
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        loss, _ = loss_and_grad(out, X, y, with_grad=False)
        start, _ = loss_and_grad(net, X, y, with_grad=False)
    if not loss <= start and math.isfinite(start):
        out.set_vector(net.get_vector())
        loss = start
    out.trained = True
    out.loss = float(loss) if math.isfinite(loss) else math.inf
    return out, out.loss


# -- decoding ----------------------------------------------------------------------

def _neuron_expr(code: int, affine: Expr) -> Expr:
    if code == 1:
        return Expr.const(1.0)
    if code == 2:
        return affine
    return Expr.apply({3: "exp", 4: "log", 5: "sigmoid"}[code], affine)


def decode(net: SymbolicNetwork) -> Expr:
    """Exact symbolic transcription of the network output.

    Zero-weight edges are dropped and purely constant sub-expressions are
    folded, so a neuron with no live inputs becomes its constant value.
    """
    current = [Expr.var(g) for g in net.inputs]
    for layer in net.layers:
        nxt = []
        for i, code in enumerate(layer.activations):
            if code == 1:
                nxt.append(Expr.const(1.0))
                continue
            terms = [Expr.const(layer.bias[i])]
            for j in range(layer.weights.shape[1]):
                w = layer.weights[i, j]
                if layer.mask[i, j] and w != 0:
                    src = current[j]
                    terms.append(src if w == 1 else Expr.prod(Expr.const(w), src))
            const_terms = [t for t in terms if _is_constant_tree(t)]
            if len(const_terms) == len(terms):
                value = float(_neuron_expr(code, Expr.sum(*terms)).evaluate({}))
                nxt.append(Expr.const(value))
                continue
            if terms[0].value == 0:
                terms = terms[1:]
            affine = terms[0] if len(terms) == 1 else Expr.sum(*terms)
            nxt.append(_neuron_expr(code, affine))
        current = nxt
    return current[0]


def _is_constant_tree(e: Expr) -> bool:
    if e.op == "var":
        return e.value.is_constant
    if e.op == "const":
        return True
    return all(_is_constant_tree(c) for c in e.children)
