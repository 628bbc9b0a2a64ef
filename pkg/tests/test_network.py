import json
import math

import numpy as np
import pytest

from esrn.dataset import Sample
from esrn.dimensional import PiGroup
from esrn.expression import Expr
from esrn.network import (
    SymbolicNetwork,
    _kernels,
    decode,
    design_matrix,
    forward,
    forward_batch,
    loss_and_grad,
    manual_network,
    target_values,
    train,
)

from helpers import DL_DU, W_D, away_from_guards, fd_gradient, fig16_network, loss_ld, random_env, random_net

X_GROUP = PiGroup.from_map({"x": 1})
Y_GROUP = PiGroup.from_map({"y": 1}, output="y")


def identity_net(w=1.0, b=0.0):
    return manual_network((X_GROUP,), Y_GROUP, [([2], [[w]], [b])])


def test_identity_forward():
    net = manual_network((W_D,), DL_DU, [([2], [[1.0]], [0.0])])
    assert forward(net, Sample(w=7.0, d=1.0, U=1.0, Ustar=1.0, Dl=1.0)) == 7.0


def test_fig16_forward():
    sample = Sample(w=2.0, d=1.0, U=4.0, Ustar=1.0, Dl=1.0)
    assert forward(fig16_network(), sample) == pytest.approx(math.exp(2.63) * 2 / 4, rel=1e-12)
    assert forward(fig16_network(), sample) == pytest.approx(6.9369, abs=1e-4)


def test_constant_output():
    net = random_net(np.random.default_rng(0))
    net.layers[-1].activations[0] = 1
    env = random_env(np.random.default_rng(1), 20)
    assert np.all(forward_batch(net, design_matrix(net, env)) == 1.0)
    assert decode(net) == Expr.const(1.0)


def test_zero_epochs_is_noop():
    net = random_net(np.random.default_rng(3))
    env = random_env(np.random.default_rng(4), 30)
    for backend in ("numpy", "numba"):
        out, _ = train(net, design_matrix(net, env), target_values(net, env), epochs=0, backend=backend)
        assert np.array_equal(out.get_vector(), net.get_vector())


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_linear_recovery(backend):
    x = np.linspace(-2.0, 3.0, 40)
    out, loss = train(identity_net(0.3, 0.5), x[:, None], 2 * x, epochs=2000, lr=0.01, backend=backend)
    w, b = out.layers[0].weights[0, 0], out.layers[0].bias[0]
    assert abs(w - 2) < 0.01 and abs(b) < 0.01
    # closed-form least squares gives exactly (2, 0) on noiseless data
    assert np.allclose(np.polyfit(x, 2 * x, 1), [2, 0], atol=1e-12)


def test_fig16_recovery():
    rng = np.random.default_rng(7)
    env = random_env(rng, 200, ldc=True)
    start = fig16_network(w_out=tuple(rng.uniform(-1, 1, 2)), bias=0.0)
    X, y = design_matrix(start, env), target_values(start, env)
    out, loss = train(start, X, y, epochs=5000, lr=0.01, freeze=(0,))
    w = out.layers[1].weights[0]
    assert abs(w[0] - 1) < 0.05 and abs(w[1] + 1) < 0.05
    assert abs(out.layers[1].bias[0] - 2.63) < 0.05
    assert np.array_equal(out.layers[0].weights, start.layers[0].weights)


def test_final_loss_not_above_initial():
    rng = np.random.default_rng(9)
    env = random_env(rng, 50)
    for _ in range(10):
        net = random_net(rng)
        X, y = design_matrix(net, env), target_values(net, env)
        initial, _ = loss_and_grad(net, X, y, with_grad=False)
        _, final = train(net, X, y, epochs=100)
        if math.isfinite(initial):
            assert final <= initial


def test_gradient_against_finite_differences():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 15:
        net = random_net(rng)
        env = random_env(rng, 20)
        X, y = design_matrix(net, env), target_values(net, env)
        if not away_from_guards(net, X):
            continue
        _, grads = loss_and_grad(net, X, y)
        analytic = np.concatenate([g.ravel() for g in grads])
        for i, numeric in fd_gradient(net, X, y).items():
            assert abs(numeric - analytic[i]) <= 1e-4 * max(1.0, abs(numeric)), (i, numeric, analytic[i])
        checked += 1


def test_extended_loss_matches_library():
    rng = np.random.default_rng(12)
    for _ in range(20):
        net = random_net(rng)
        env = random_env(rng, 20)
        X, y = design_matrix(net, env), target_values(net, env)
        with np.errstate(all="ignore"):
            ref, _ = loss_and_grad(net, X, y, with_grad=False)
        if math.isfinite(ref):
            assert float(loss_ld(net, X, y)) == pytest.approx(ref, rel=1e-9)


def test_decode_identity_text():
    assert decode(identity_net()).to_text() == "x"


def test_decode_fig16_text():
    assert decode(fig16_network()).to_text() == "exp(2.63 + log|w/d| - log|U/Ustar|)"


def test_decode_folds_constant_neuron():
    # hidden a1 feeding weight 1.5 into an identity output with bias 0.25
    net = manual_network((X_GROUP,), Y_GROUP, [([1], [[0.7]], [0.0]), ([2], [[1.5]], [0.25])])
    assert decode(net) == Expr.const(1.75)


def test_decode_matches_forward():
    rng = np.random.default_rng(5)
    for _ in range(30):
        net = random_net(rng)
        env = random_env(rng, 25)
        f = forward_batch(net, design_matrix(net, env))
        e = np.broadcast_to(decode(net).evaluate(env), f.shape)
        assert np.all(np.abs(e - f) <= 1e-9 * (1 + np.abs(f)))


@pytest.mark.skipif(_kernels is None, reason="numba unavailable")
def test_backends_agree():
    rng = np.random.default_rng(13)
    env = random_env(rng, 40)
    for _ in range(5):
        net = random_net(rng)
        X, y = design_matrix(net, env), target_values(net, env)
        a, la = train(net, X, y, epochs=200, backend="numpy")
        b, lb = train(net, X, y, epochs=200, backend="numba")
        if math.isfinite(la) and la < 1e6:
            assert lb == pytest.approx(la, rel=1e-4, abs=1e-8)


def test_json_round_trip():
    net = random_net(np.random.default_rng(2))
    back = SymbolicNetwork.from_json(json.loads(json.dumps(net.to_json())))
    assert back.structure_key() == net.structure_key()
    assert np.array_equal(back.get_vector(), net.get_vector())


def test_unknown_backend():
    with pytest.raises(ValueError):
        train(identity_net(), np.ones((3, 1)), np.ones(3), backend="gpu")
