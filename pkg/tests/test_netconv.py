import json
import math

import numpy as np
import pytest
import sympy as sp

from conftest import (THREE_LAYER_F, THREE_LAYER_G, THREE_LAYER_H, TWO_LAYER_G,
                      TWO_LAYER_H)
from volterrakit.algebra import composed_geometry
from volterrakit.conv import ConvGeometry, VolterraOperator, conv1, volterra_apply
from volterrakit.netconv import (Activation, Conv1D, FullyConnected, Inception, Network,
                                 Residual, activation_operator, activation_taylor,
                                 conv_act_conv, fc_as_conv, forward, inception_merge,
                                 load_network, network_from_dict, network_to_volterra,
                                 network_to_volterra_channels, residual_adjust)
from volterrakit.outer import outer_conv
from volterrakit.tensor import dirac, write_vten

SIGMOID = activation_taylor("sigmoid", 0.0, 5)


def unit(rng, n):
    x = rng.standard_normal(n)
    return x / np.linalg.norm(x)


def sympy_coefficients(kind, center, order, beta=10.0):
    t = sp.Symbol("t")
    f = {"sigmoid": 1 / (1 + sp.exp(-t)), "tanh": sp.tanh(t),
         "softplus_relu": sp.log(1 + sp.exp(sp.Float(beta) * t)) / sp.Float(beta)}[kind]
    c = sp.nsimplify(center) if center else 0
    return [float(sp.diff(f, t, k).subs(t, c) / sp.factorial(k)) for k in range(order + 1)]


class TestTaylor:
    def test_sigmoid_exact(self):
        assert SIGMOID.coefficients == (0.5, 0.25, 0.0, -1 / 48, 0.0, 1 / 480)

    def test_tanh(self):
        c = activation_taylor("tanh", 0.0, 3).coefficients
        np.testing.assert_allclose(c, [0, 1, 0, -1 / 3], atol=1e-15)

    @pytest.mark.parametrize("kind", ["sigmoid", "tanh", "softplus_relu"])
    @pytest.mark.parametrize("center", [0.0, 0.3, -1.2])
    def test_against_symbolic(self, kind, center):
        got = activation_taylor(kind, center, 7).coefficients
        want = sympy_coefficients(kind, center, 7)
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("kind,order", [("sigmoid", 5), ("tanh", 5), ("softplus_relu", 9)])
    def test_matches_function_near_centre(self, kind, order):
        act = activation_taylor(kind, 0.0, order)
        t = np.linspace(-0.1, 0.1, 201)
        assert np.max(np.abs(act.taylor(t) - act.function(t))) <= 1e-6

    def test_power_coefficients_same_polynomial(self):
        act = activation_taylor("sigmoid", 0.7, 4)
        t = np.linspace(-1, 2, 31)
        poly = sum(a * t ** k for k, a in enumerate(act.power_coefficients()))
        np.testing.assert_allclose(poly, act.taylor(t), atol=1e-13)

    def test_operator_is_pointwise_polynomial(self, rng):
        act = activation_taylor("tanh", 0.2, 4)
        x = rng.standard_normal(10)
        np.testing.assert_allclose(volterra_apply(activation_operator(act), x),
                                   act.taylor(x), atol=1e-13)

    def test_errors(self):
        with pytest.raises(ValueError):
            activation_taylor("relu")
        with pytest.raises(ValueError):
            activation_taylor("sigmoid", order=10)
        with pytest.raises(ValueError):
            activation_taylor("softplus_relu", alpha_relu=0)


class TestConvActConv:
    def test_two_layer_kernels(self):
        op = conv_act_conv(TWO_LAYER_G, TWO_LAYER_H, SIGMOID)
        assert float(op.kernels[0]) == pytest.approx(-0.410236, abs=5e-4)
        assert op.kernels[1].shape == (17,)
        np.testing.assert_allclose(op.kernels[1], 0.25 * np.convolve(TWO_LAYER_G, TWO_LAYER_H),
                                   atol=1e-15)
        assert not np.any(op.kernels[2]) and not np.any(op.kernels[4])

    def test_fidelity_random(self):
        for seed in range(100):
            r = np.random.default_rng(seed)
            g, h, x = unit(r, 5), unit(r, 9), unit(r, 64)
            op = conv_act_conv(g, h, SIGMOID)
            want = conv1(g, SIGMOID.function(conv1(h, x)))
            assert np.linalg.norm(volterra_apply(op, x) - want) <= 1e-4

    @pytest.mark.parametrize("center", [0.4, -0.8])
    def test_general_centre(self, center, rng, backend):
        # with the polynomial itself as the activation the conversion is exact
        act = activation_taylor("sigmoid", center, 4)
        g, h, x = unit(rng, 3), unit(rng, 4), rng.standard_normal(20)
        op = conv_act_conv(g, h, act)
        want = conv1(g, act.taylor(conv1(h, x)))
        np.testing.assert_allclose(volterra_apply(op, x), want, atol=1e-12)

    def test_strided_geometry(self, rng, backend):
        g, h, x = unit(rng, 3), unit(rng, 4), rng.standard_normal(31)
        op = conv_act_conv(g, h, SIGMOID, h_geometry=ConvGeometry(2), g_geometry=ConvGeometry(3))
        want = conv1(g, SIGMOID.taylor(conv1(h, x, ConvGeometry(2))), ConvGeometry(3))
        np.testing.assert_allclose(volterra_apply(op, x), want, atol=1e-12)

    def test_caps(self):
        with pytest.raises(ValueError):
            conv_act_conv([1.0], [1.0], activation_taylor("sigmoid", 0.0, 7))
        with pytest.raises(ValueError):
            conv_act_conv([1.0], [1.0], activation_taylor("sigmoid", 0.5, 5))


class TestResidual:
    def test_zero_operator(self):
        op = residual_adjust(VolterraOperator([np.asarray(0.0), np.zeros(1)]))
        np.testing.assert_array_equal(op.kernels[1], [1.0])

    def test_twice(self):
        op = VolterraOperator([np.asarray(0.0), np.zeros(3)], ConvGeometry(1, 1))
        np.testing.assert_array_equal(residual_adjust(residual_adjust(op)).kernels[1], [0, 2, 0])

    def test_adds_input(self, rng, backend):
        op = VolterraOperator([np.asarray(0.3), rng.standard_normal(5), rng.standard_normal((5, 5))],
                              ConvGeometry(1, 2))
        x = rng.standard_normal(16)
        np.testing.assert_allclose(volterra_apply(residual_adjust(op), x),
                                   volterra_apply(op, x) + x, atol=1e-13)

    def test_linear_block(self, rng, backend):
        net = Network([Conv1D(rng.standard_normal(3), padding=1),
                       Residual([Conv1D(rng.standard_normal(3), padding=1, bias=0.2)])])
        x = rng.standard_normal(12)
        op = network_to_volterra(net, 1)
        # the inner padding reads zeros where the fused kernel sees x; compare inside
        np.testing.assert_allclose(volterra_apply(op, x)[1:-1], forward(net, x)[0][1:-1],
                                   atol=1e-13)

    def test_nonlinear_block_valid_region(self, rng):
        net = Network([Residual([Conv1D(0.3 * unit(rng, 3), padding=1), Activation(SIGMOID),
                                 Conv1D(0.3 * unit(rng, 3), padding=1)])])
        x = unit(rng, 24)
        got = volterra_apply(network_to_volterra(net, 5), x)
        want = forward(net, x)[0]
        # zero padding of the hidden signal is not sigmoid(0); compare inside
        assert np.linalg.norm((got - want)[2:-2]) <= 1e-4

    def test_shape_change_rejected(self, rng):
        net = Network([Residual([Conv1D(np.ones(3))])])
        with pytest.raises(ValueError):
            network_to_volterra(net, 1)


class TestInception:
    def test_single_branch(self, rng):
        g, h = rng.standard_normal(3), rng.standard_normal(5)
        np.testing.assert_allclose(inception_merge(g, [h]), outer_conv(g, [h]), atol=1e-15)

    def test_cancelling_branches(self, rng):
        g, h = rng.standard_normal(3), rng.standard_normal(5)
        assert not np.any(inception_merge(g, [h, -h]))

    def test_random_branches(self, rng, backend):
        g = rng.standard_normal(3)
        hs = [rng.standard_normal(z) for z in (1, 3, 5)]
        x = rng.standard_normal(20)
        u = sum(conv1(h, x, ConvGeometry(padding=(len(h) - 1) // 2)) for h in hs)
        K = inception_merge(g, hs)
        np.testing.assert_allclose(conv1(K, x, ConvGeometry(padding=2)), conv1(g, u), atol=1e-12)

    def test_network_layer(self, rng, backend):
        net = Network([Inception(rng.standard_normal(3), [rng.standard_normal(z) for z in (3, 5)],
                                 stride=2, padding=1)])
        x = rng.standard_normal(17)
        got = volterra_apply(network_to_volterra(net, 1), x)
        want = forward(net, x)[0]
        assert got.shape == want.shape
        # the first and last windows of g reach into its zero padding
        np.testing.assert_allclose(got[1:-1], want[1:-1], atol=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            inception_merge([1.0], [])
        with pytest.raises(ValueError):
            inception_merge([1.0], [np.ones(2), np.ones(3)])


class TestFullyConnected:
    def test_identity(self, rng):
        x = rng.standard_normal(4)
        rows = fc_as_conv(np.eye(4))
        np.testing.assert_array_equal([conv1(k, x)[0] + b for k, b in rows], x)

    def test_ones_row(self, rng):
        x = rng.standard_normal(6)
        (k, b), = fc_as_conv(np.ones((1, 6)))
        assert conv1(k, x)[0] == pytest.approx(x.sum())

    def test_random(self, rng):
        W, bias, x = rng.standard_normal((3, 7)), rng.standard_normal(3), rng.standard_normal(7)
        got = [conv1(k, x)[0] + b for k, b in fc_as_conv(W, bias)]
        np.testing.assert_allclose(got, W @ x + bias, atol=1e-13)

    def test_network(self, rng, backend):
        net = Network([Conv1D(rng.standard_normal((2, 1, 3)), bias=[0.1, -0.2]),
                       FullyConnected(rng.standard_normal((2, 16)), [0.5, 0.0])])
        x = rng.standard_normal(10)
        ops = network_to_volterra_channels(net, 1, input_length=10)
        got = [volterra_apply(op, x)[0] for op in ops]
        np.testing.assert_allclose(got, forward(net, x)[:, 0], atol=1e-13)

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            network_to_volterra(Network([FullyConnected(np.ones((1, 4)))]), 1)
        with pytest.raises(ValueError):
            network_to_volterra(Network([FullyConnected(np.ones((1, 4)))]), 1, input_length=5)
        with pytest.raises(ValueError):
            network_to_volterra(Network([FullyConnected(np.ones((1, 4))), Conv1D([1.0])]), 1, 4)


class TestNetworks:
    def test_linear_layer(self, rng):
        k = rng.standard_normal(4)
        op = network_to_volterra(Network([Conv1D(k, bias=0.7)]), 3)
        assert float(op.kernels[0]) == 0.7
        np.testing.assert_array_equal(op.kernels[1], k)
        assert op.order == 1

    def test_two_layer_fidelity(self):
        net = Network([Conv1D(TWO_LAYER_H), Activation(SIGMOID), Conv1D(TWO_LAYER_G)])
        op = network_to_volterra(net, 5)
        rng = np.random.default_rng(7)
        for _ in range(100):
            x = unit(rng, 64)
            assert np.linalg.norm(volterra_apply(op, x) - forward(net, x)[0]) <= 1e-4

    def test_three_layer(self):
        net = Network([Conv1D(THREE_LAYER_H), Activation(SIGMOID), Conv1D(THREE_LAYER_G),
                       Activation(SIGMOID), Conv1D(THREE_LAYER_F)])
        op = network_to_volterra(net, 5)
        assert float(op.kernels[0]) == pytest.approx(-1.83091e-2, abs=1e-3)
        a = 0.5 * THREE_LAYER_G.sum()
        scale = 0.25 * (0.25 - 3 / 48 * a ** 2 + 5 / 480 * a ** 4)
        want = scale * outer_conv(THREE_LAYER_F, [outer_conv(THREE_LAYER_G, [THREE_LAYER_H])])
        np.testing.assert_allclose(op.kernels[1], want, atol=1e-12)
        rng = np.random.default_rng(11)
        for _ in range(100):
            x = unit(rng, 64)
            assert np.linalg.norm(volterra_apply(op, x) - forward(net, x)[0]) <= 1e-2

    @pytest.mark.parametrize("stages,N", [(1, 6), (2, 6), (3, 6), (2, 4), (1, 2)])
    def test_structural_order(self, stages, N, rng):
        act = activation_taylor("sigmoid", 0.3, 3)
        layers = [Conv1D(unit(rng, 2))]
        for _ in range(stages):
            layers += [Activation(act), Conv1D(unit(rng, 2))]
        op = network_to_volterra(Network(layers), N)
        assert op.order == min(3 ** stages, N)

    def test_geometry(self, rng):
        spec = [(3, 2, 1), (3, 1, 0), (2, 2, 0)]
        layers = []
        for i, (z, s, p) in enumerate(spec):
            if i:
                layers.append(Activation(activation_taylor("tanh", 0.0, 2)))
            layers.append(Conv1D(unit(rng, z), s, p))
        op = network_to_volterra(Network(layers), 4)
        z, s, p = composed_geometry(spec)
        assert (op.extent[0], op.geometry.stride, op.geometry.pads(op.extent)[0]) == (z, s, p)

    def test_multichannel(self, rng):
        net = Network([Conv1D(0.5 * rng.standard_normal((2, 1, 3)), bias=[0.1, -0.1]),
                       Activation(SIGMOID),
                       Conv1D(0.5 * rng.standard_normal((1, 2, 3)))])
        x = unit(rng, 32)
        got = volterra_apply(network_to_volterra(net, 5), x)
        assert np.linalg.norm(got - forward(net, x)[0]) <= 1e-4

    def test_caps(self, rng):
        deep = Network([Conv1D(unit(rng, 2)), Activation(SIGMOID), Conv1D(unit(rng, 2))])
        with pytest.raises(ValueError, match="cap"):
            network_to_volterra(Network(deep.layers + [Activation(SIGMOID)]), 7)
        wide = Network([Conv1D(unit(rng, 20)), Activation(SIGMOID), Conv1D(unit(rng, 20))])
        with pytest.raises(ValueError, match="cap"):
            network_to_volterra(wide, 3)

    def test_multiple_outputs_need_channels_api(self, rng):
        with pytest.raises(ValueError):
            network_to_volterra(Network([Conv1D(np.ones((2, 1, 3)))]), 1)


class TestJson:
    def test_load_with_reference(self, tmp_path, rng):
        k = rng.standard_normal(5)
        write_vten(tmp_path / "h.vten", k)
        spec = {"layers": [{"type": "conv1d", "kernel": "@h.vten", "stride": 2, "pad": 1},
                           {"type": "activation", "kind": "tanh", "order": 3},
                           {"type": "residual", "inner": [{"type": "conv1d", "kernel": [0, 1, 0],
                                                           "pad": 1}]},
                           {"type": "fc", "W": [[1.0] * 3], "bias": [0.5]}]}
        path = tmp_path / "net.json"
        path.write_text(json.dumps(spec))
        net = load_network(str(path))
        np.testing.assert_array_equal(net.layers[0].kernel[0, 0], k)
        assert net.layers[0].stride == 2 and net.layers[0].padding == 1
        assert net.layers[1].taylor.order == 3
        assert isinstance(net.layers[2], Residual)
        assert isinstance(net.layers[3], FullyConnected)

    @pytest.mark.parametrize("kind", ["batchnorm", "maxpool"])
    def test_dynamic_layers_rejected(self, kind):
        with pytest.raises(ValueError, match="dynamic"):
            network_from_dict({"layers": [{"type": kind}]})

    def test_unknown_type(self):
        with pytest.raises(ValueError):
            network_from_dict({"layers": [{"type": "lstm"}]})

    def test_bad_reference(self):
        with pytest.raises(ValueError):
            network_from_dict({"layers": [{"type": "conv1d", "kernel": "h.vten"}]})

    def test_inception(self):
        net = network_from_dict({"layers": [{"type": "inception", "g": [1, 2],
                                             "branches": [[1], [1, 2, 3]]}]})
        assert isinstance(net.layers[0], Inception)


def test_dirac_conv_is_identity_network():
    net = Network([Conv1D(dirac([3]), padding=1)])
    x = np.arange(5.0)
    np.testing.assert_array_equal(volterra_apply(network_to_volterra(net, 1), x), x)
    assert math.isclose(float(network_to_volterra(net, 1).kernels[0]), 0.0)
