import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gbf.networks import (
    FnnSpec,
    Layer,
    NetworkFormatError,
    RnnSpec,
    dumps_network,
    fnn_eval,
    load_network,
    loads_network,
    rnn_derivative,
    rnn_output,
    rnn_update,
    save_network,
)


def random_fnn(rng, widths, acts=None):
    acts = acts or ["tanh"] * (len(widths) - 1)
    return FnnSpec(
        tuple(
            Layer(rng.normal(size=(widths[i], widths[i + 1])), rng.normal(size=widths[i + 1]), acts[i])
            for i in range(len(widths) - 1)
        )
    )


def linear_rnn():
    # x_nn' = -x_nn + u, y = x_nn
    return RnnSpec(1, FnnSpec((Layer([[-1.0], [1.0]], [0.0], "identity"),)), FnnSpec((Layer([[1.0]], [0.0], "identity"),)))


def test_zero_weights_give_zero():
    net = FnnSpec((Layer(np.zeros((3, 1)), [0.0], "tanh"),))
    assert fnn_eval(net, [1.0, -2.0, 5.0])[0] == 0.0


def test_single_tanh():
    net = FnnSpec((Layer([[1.0]], [0.0], "tanh"),))
    assert fnn_eval(net, [0.5])[0] == pytest.approx(0.46211715726, abs=1e-11)


def test_identity_composition():
    I = np.eye(3)
    net = FnnSpec((Layer(I, np.zeros(3), "identity"), Layer(I, np.zeros(3), "identity")))
    u = np.array([0.3, -1.0, 2.0])
    assert np.array_equal(fnn_eval(net, u), u)


def test_logistic_and_aliases():
    net = FnnSpec((Layer([[2.0]], [1.0], "logsig"),))
    assert net.layers[0].activation == "logistic"
    assert fnn_eval(net, [0.0])[0] == pytest.approx(1.0 / (1.0 + np.exp(-1.0)))


def test_dimension_checks():
    with pytest.raises(ValueError):
        FnnSpec((Layer(np.zeros((2, 3)), np.zeros(3)), Layer(np.zeros((2, 1)), np.zeros(1))))
    with pytest.raises(ValueError):
        fnn_eval(FnnSpec((Layer(np.zeros((2, 1)), [0.0]),)), [1.0])
    with pytest.raises(ValueError):
        Layer(np.zeros((2, 1)), [0.0], "relu")
    with pytest.raises(ValueError):
        Layer(np.zeros((2, 2)), [0.0])


def test_rnn_linear_fixture():
    net = linear_rnn()
    assert rnn_derivative(net, [0.0], [1.0])[0] == 1.0
    assert rnn_derivative(net, [0.7], [0.7])[0] == 0.0
    assert np.array_equal(net.initial_state, [0.0])


def test_rnn_output_maps():
    net = linear_rnn()
    assert rnn_output(net, [0.3])[0] == 0.3
    flat = RnnSpec(1, net.state_map, FnnSpec((Layer([[0.0]], [0.0], "tanh"),)))
    assert rnn_output(flat, [5.0])[0] == 0.0


def test_rnn_dimension_checks():
    net = linear_rnn()
    with pytest.raises(ValueError):
        rnn_derivative(net, [0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        rnn_output(net, [0.0, 0.0])
    with pytest.raises(ValueError):
        RnnSpec(2, net.state_map, net.output_map)


def test_discrete_rnn_uses_update():
    net = linear_rnn()
    disc = RnnSpec(1, net.state_map, net.output_map, discrete=True)
    assert rnn_update(disc, [0.5], [1.0])[0] == 0.5
    with pytest.raises(ValueError):
        rnn_derivative(disc, [0.5], [1.0])
    with pytest.raises(ValueError):
        rnn_update(net, [0.5], [1.0])


def test_rnn_converges_to_constant_input():
    # explicit RK4 on x' = -x + u over 10 time constants
    net = linear_rnn()
    x, h, u = np.zeros(1), 0.01, np.array([0.8])
    for _ in range(1000):
        k1 = rnn_derivative(net, x, u)
        k2 = rnn_derivative(net, x + h / 2 * k1, u)
        k3 = rnn_derivative(net, x + h / 2 * k2, u)
        k4 = rnn_derivative(net, x + h * k3, u)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert abs(x[0] - 0.8) < 0.8 * np.exp(-10) + 1e-6


@given(st.integers(0, 2**32 - 1))
def test_fnn_jacobian_central_differences_converge(seed):
    rng = np.random.default_rng(seed)
    net = random_fnn(rng, [3, 4, 2], ["tanh", "logistic"])
    u = rng.normal(size=3)

    def jac(eps):
        cols = []
        for j in range(3):
            e = np.zeros(3)
            e[j] = eps
            cols.append((fnn_eval(net, u + e) - fnn_eval(net, u - e)) / (2 * eps))
        return np.column_stack(cols)

    # exact Jacobian by the chain rule
    l1, l2 = net.layers
    h = np.tanh(l1.W.T @ u + l1.b)
    s = 1 / (1 + np.exp(-(l2.W.T @ h + l2.b)))
    exact = (s * (1 - s))[:, None] * l2.W.T @ ((1 - h**2)[:, None] * l1.W.T)
    e1 = np.abs(jac(1e-2) - exact).max()
    e2 = np.abs(jac(5e-3) - exact).max()
    if e1 > 1e-9:
        assert 3.0 < e1 / e2 < 5.0


def test_round_trip_bit_exact(tmp_path, rng):
    fnn = random_fnn(rng, [2, 5, 5, 1])
    rnn = RnnSpec(2, random_fnn(rng, [3, 2], ["identity"]), random_fnn(rng, [2, 1]))
    for net in (fnn, rnn):
        path = tmp_path / "net.net"
        save_network(net, path)
        back = load_network(path)
        assert back == net
        for a, b in zip((back.layers if isinstance(back, FnnSpec) else back.state_map.layers),
                        (net.layers if isinstance(net, FnnSpec) else net.state_map.layers)):
            assert a.W.tobytes() == b.W.tobytes()
            assert a.b.tobytes() == b.b.tobytes()


def test_five_layer_tanh_loads(rng):
    net = random_fnn(rng, [2, 8, 8, 8, 8, 1])
    back = loads_network(dumps_network(net))
    assert back.depth == 5
    assert all(layer.activation == "tanh" for layer in back.layers)


def test_load_rejects_mismatched_dims():
    text = dumps_network(FnnSpec((Layer(np.zeros((2, 3)), np.zeros(3)), Layer(np.zeros((3, 1)), [0.0]))))
    bad = text.replace("layer 3 1 tanh", "layer 4 1 tanh").replace("W\n0.0\n0.0\n0.0\nb", "W\n0.0\n0.0\n0.0\n0.0\nb")
    with pytest.raises(NetworkFormatError):
        loads_network(bad)


@pytest.mark.parametrize(
    "text",
    [
        "gbf-network 2\nkind fnn\n",
        "gbf-network 1\nkind cnn\n",
        "gbf-network 1\nkind fnn\nlayers 1\nlayer 1 1 relu\nW\n1.0\nb\n0.0\n",
        "gbf-network 1\nkind fnn\nlayers 1\nlayer 1 1 tanh\nW\n1.0 2.0\nb\n0.0\n",
        "gbf-network 1\nkind fnn\nlayers 1\nlayer 1 1 tanh\nW\nx\nb\n0.0\n",
        "gbf-network 1\nkind fnn\nlayers 1\nlayer 1 1 tanh\nW\n1.0\n",
    ],
)
def test_load_rejects_malformed(text):
    with pytest.raises(NetworkFormatError):
        loads_network(text)
