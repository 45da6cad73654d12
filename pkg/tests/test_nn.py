import numpy as np
import pytest

import oracles
from urbangan.errors import ShapeError, StateError
from urbangan.nn import (AdamState, BatchNorm, Conv2d, ConvTranspose2d, LayerSpec, LeakyReLU, Linear,
                         Network, Parameter, ReLU, Reshape, Sigmoid, Tanh, adam_step, grad_check,
                         grad_check_report, make_layer, squared_loss)


def _init(layer, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    for p in layer.params.values():
        p.data[...] = rng.normal(0.0, scale, p.shape)
    return layer


def _layer_grad_error(layer, x, seed=1):
    """Worst relative error over input and every parameter against full central differences."""
    rng = np.random.default_rng(seed)
    out, _ = layer.forward(x, train=True)
    proj = rng.normal(size=out.shape)

    def loss():
        return float(np.sum(layer.forward(x, train=True)[0] * proj))

    _, ctx = layer.forward(x, train=True)
    dx, grads = layer.backward(proj, ctx)
    errs = [oracles.max_rel_error(dx, oracles.finite_difference(loss, x))]
    for name, p in layer.params.items():
        errs.append(oracles.max_rel_error(grads[name], oracles.finite_difference(loss, p.data)))
    return max(errs)


LAYERS = [
    ("conv", lambda: _init(Conv2d(2, 3, 3, 2, 1)), (2, 2, 5, 5)),
    ("tconv", lambda: _init(ConvTranspose2d(2, 3, 4, 2, 1)), (2, 2, 3, 3)),
    ("batchnorm4d", lambda: _init(BatchNorm(3)), (4, 3, 2, 2)),
    ("batchnorm2d", lambda: _init(BatchNorm(5)), (6, 5)),
    ("relu", ReLU, (3, 7)),
    ("leaky", lambda: LeakyReLU(0.2), (3, 7)),
    ("tanh", Tanh, (3, 7)),
    ("sigmoid", Sigmoid, (3, 7)),
    ("linear", lambda: _init(Linear(12, 4)), (3, 3, 2, 2)),
    ("reshape", lambda: Reshape((2, 3)), (4, 6)),
]


@pytest.mark.parametrize("name,make,shape", LAYERS, ids=[n for n, _, _ in LAYERS])
def test_layer_gradients(name, make, shape):
    x = np.random.default_rng(7).normal(size=shape)
    if name in ("relu", "leaky"):
        x[np.abs(x) < 1e-3] = 0.5  # keep probes away from the kink
    assert _layer_grad_error(make(), x) < 1e-4


def test_tconv_shape():
    out, _ = ConvTranspose2d(1, 1, 4, 2, 1).forward(np.zeros((1, 1, 4, 4)))
    assert out.shape == (1, 1, 8, 8)


def test_identity_kernel():
    layer = Conv2d(1, 1, 1, 1, 0)
    layer.params["weight"].data[...] = 1.0
    x = np.random.default_rng(0).random((2, 1, 5, 5))
    assert np.array_equal(layer.forward(x)[0], x)


def test_conv_matches_six_loop_oracle():
    rng = np.random.default_rng(3)
    layer = _init(Conv2d(2, 3, 3, 2, 1), 4)
    x = rng.normal(size=(1, 2, 5, 5))
    want = oracles.conv2d(x, layer.params["weight"].data, layer.params["bias"].data, 2, 1)
    assert np.max(np.abs(layer.forward(x)[0] - want)) < 1e-12


def test_tconv_matches_scatter_oracle():
    rng = np.random.default_rng(5)
    layer = _init(ConvTranspose2d(3, 2, 4, 2, 1), 6)
    x = rng.normal(size=(2, 3, 4, 4))
    want = oracles.conv_transpose2d(x, layer.params["weight"].data, layer.params["bias"].data, 2, 1)
    assert np.max(np.abs(layer.forward(x)[0] - want)) < 1e-12


@pytest.mark.parametrize("cls,shape", [(Conv2d, (2, 2, 6, 6)), (ConvTranspose2d, (2, 2, 3, 3))])
def test_direct_method_agrees(cls, shape):
    a = _init(cls(2, 3, 4, 2, 1), 1)
    b = cls(2, 3, 4, 2, 1, method="direct")
    for k in a.params:
        b.params[k].data[...] = a.params[k].data
    x = np.random.default_rng(2).normal(size=shape)
    ya, ca = a.forward(x)
    yb, cb = b.forward(x)
    assert np.max(np.abs(ya - yb)) < 1e-12
    g = np.random.default_rng(3).normal(size=ya.shape)
    (da, ga), (db, gb) = a.backward(g, ca), b.backward(g, cb)
    assert np.max(np.abs(da - db)) < 1e-12
    assert all(np.max(np.abs(ga[k] - gb[k])) < 1e-12 for k in ga)


def test_relu_negative_zero_grad():
    x = np.array([[-1.0, 2.0, -3.0]])
    layer = ReLU()
    _, ctx = layer.forward(x)
    dx, _ = layer.backward(np.ones_like(x), ctx)
    assert dx.tolist() == [[0.0, 1.0, 0.0]]


def test_tanh_at_zero_passes_gradient():
    layer = Tanh()
    _, ctx = layer.forward(np.zeros((1, 3)))
    g = np.array([[0.3, -1.0, 2.0]])
    assert np.array_equal(layer.backward(g, ctx)[0], g)


def test_sigmoid_stable_at_extremes():
    y, _ = Sigmoid().forward(np.array([[-1000.0, 0.0, 1000.0]]))
    assert y.tolist() == [[0.0, 0.5, 1.0]]


def test_batchnorm_running_stats_and_eval():
    bn = BatchNorm(2, momentum=0.1)
    x = np.random.default_rng(0).normal(3.0, 2.0, size=(50, 2))
    bn.forward(x, train=True)
    assert np.allclose(bn.buffers["running_mean"], 0.1 * x.mean(axis=0))
    assert np.allclose(bn.buffers["running_var"], 0.9 + 0.1 * x.var(axis=0, ddof=1))
    y, _ = bn.forward(x, train=False)
    want = (x - bn.buffers["running_mean"]) / np.sqrt(bn.buffers["running_var"] + bn.eps)
    assert np.allclose(y, want)


def test_wrong_context():
    a, b = ReLU(), ReLU()
    _, ctx = a.forward(np.ones((1, 2)))
    with pytest.raises(StateError):
        b.backward(np.ones((1, 2)), ctx)
    with pytest.raises(StateError):
        a.backward(np.ones((1, 2)), None)


def test_shape_errors():
    with pytest.raises(ShapeError):
        Conv2d(2, 1).forward(np.zeros((1, 3, 4, 4)))
    with pytest.raises(ShapeError):
        Linear(3, 1).forward(np.zeros((2, 4)))


def test_spec_round_trip():
    net = Network([Linear(4, 8), Reshape((2, 2, 2)), BatchNorm(2), ReLU(), ConvTranspose2d(2, 1), Tanh()])
    specs = [LayerSpec.from_dict(s.to_dict()) for s in net.specs()]
    again = Network.from_specs(specs)
    assert [s.to_dict() for s in again.specs()] == [s.to_dict() for s in net.specs()]
    assert make_layer(LayerSpec("leaky_relu", {"slope": 0.3})).slope == 0.3


class TestAdam:
    def test_zero_gradient(self):
        p = {"w": Parameter(np.array([1.0, -2.0]))}
        st = AdamState()
        adam_step(p, {"w": np.zeros(2)}, st)
        assert p["w"].data.tolist() == [1.0, -2.0] and st.step == 1

    def test_first_step_closed_form(self):
        p = {"w": Parameter(np.array([0.5]))}
        st = AdamState(lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8)
        adam_step(p, {"w": np.array([1.0])}, st)
        # m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
        assert p["w"].data[0] == pytest.approx(0.5 - 0.001 / (1 + 1e-8), abs=1e-15)

    def test_deterministic_100_steps(self):
        def run():
            rng = np.random.default_rng(0)
            p = {"w": Parameter(rng.normal(size=(3, 3)))}
            st = AdamState()
            for _ in range(100):
                adam_step(p, {"w": rng.normal(size=(3, 3))}, st)
            return p["w"].data.tobytes()
        assert run() == run()

    def test_frozen_untouched(self):
        p = {"a": Parameter(np.ones(2), frozen=True), "b": Parameter(np.ones(2))}
        adam_step(p, {"a": np.ones(2), "b": np.ones(2)}, AdamState())
        assert p["a"].data.tolist() == [1.0, 1.0] and p["b"].data[0] < 1.0

    def test_bad_gradient_shape(self):
        with pytest.raises(ShapeError):
            adam_step({"a": Parameter(np.ones(2))}, {"a": np.ones(3)}, AdamState())


class TestGradCheck:
    def test_linear_squared(self):
        net = Network([_init(Linear(5, 3))])
        x = np.random.default_rng(0).normal(size=(4, 5))
        assert grad_check(net, squared_loss(np.zeros((4, 3))), x) < 1e-6

    def test_two_block_generator(self):
        net = Network([Linear(4, 2 * 16), Reshape((2, 4, 4)), BatchNorm(2), ReLU(),
                       ConvTranspose2d(2, 1, 4, 2, 1), Tanh()])
        net.init_params(np.random.default_rng(0))
        for _, p in net.named_parameters().items():
            p.data += np.random.default_rng(1).normal(0, 0.3, p.shape)
        x = np.random.default_rng(2).normal(size=(3, 4))
        out, _ = net.forward(x)
        assert out.shape == (3, 1, 8, 8)
        target = np.random.default_rng(3).normal(size=out.shape)
        assert grad_check(net, squared_loss(target), x) < 1e-4

    def test_frozen_excluded(self):
        net = Network([_init(Linear(3, 2)), Tanh()])
        net.layers[0].params["bias"].frozen = True
        report = grad_check_report(net, squared_loss(np.zeros((2, 2))), np.ones((2, 3)))
        assert "0.bias" not in report and "0.weight" in report
