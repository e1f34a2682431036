import numpy as np
import pytest

from conftest import THREE_LAYER_F, THREE_LAYER_G, THREE_LAYER_H, TWO_LAYER_G, TWO_LAYER_H
from volterrakit.conv import ConvGeometry, VolterraOperator, conv1, volterra_apply
from volterrakit.hacking import (as_oracle, design_matrix, fit_order_one, fit_report,
                                 sample_inputs)
from volterrakit.netconv import (Activation, Conv1D, Network, activation_taylor,
                                 network_to_volterra)

SIGMOID = activation_taylor("sigmoid", 0.0, 5)
TWO_LAYER = Network([Conv1D(TWO_LAYER_H), Activation(SIGMOID), Conv1D(TWO_LAYER_G)])


class TestSamples:
    def test_unit_norm(self):
        x = sample_inputs(20, 33, seed=4)
        np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)

    def test_deterministic(self):
        np.testing.assert_array_equal(sample_inputs(5, 8, 1), sample_inputs(5, 8, 1))
        assert not np.array_equal(sample_inputs(5, 8, 1), sample_inputs(5, 8, 2))

    def test_mean_near_zero(self):
        assert abs(sample_inputs(10_000, 16, 0)[:, 0].mean()) <= 0.05


class TestDesignMatrix:
    @pytest.mark.parametrize("s,p", [(1, 0), (2, 1), (3, 2)])
    def test_rows_reproduce_convolution(self, s, p, rng):
        w, x = rng.standard_normal(4), rng.standard_normal(19)
        D = design_matrix(x, 4, ConvGeometry(s, p))
        np.testing.assert_allclose(D @ np.append(w, 0.5), conv1(w, x, ConvGeometry(s, p)) + 0.5,
                                   atol=1e-13)


class TestFit:
    @pytest.mark.parametrize("z,s,p", [(1, 1, 0), (3, 1, 1), (5, 2, 0), (4, 3, 2), (9, 1, 4)])
    @pytest.mark.parametrize("method", ["closed", "iterative"])
    def test_recovers_linear_oracle(self, z, s, p, method, rng):
        w, b = rng.standard_normal(z), rng.standard_normal()
        geo = ConvGeometry(s, p)
        fit = fit_order_one(lambda x: conv1(w, x, geo) + b, z, geo, input_length=40,
                            method=method, tol=1e-15)
        np.testing.assert_allclose(fit.weights, w, atol=1e-10)
        assert fit.bias == pytest.approx(b, abs=1e-10)
        assert fit.residual_mse <= 1e-20
        assert not fit.rank_deficient

    def test_deterministic(self):
        a = fit_order_one(TWO_LAYER, 17, seed=3)
        b = fit_order_one(TWO_LAYER, 17, seed=3)
        np.testing.assert_array_equal(a.weights, b.weights)
        assert a.bias == b.bias

    def test_rank_deficient_warns(self):
        # constant inputs make every window identical
        with pytest.warns(RuntimeWarning):
            fit = fit_order_one(lambda x: conv1(np.ones(3), x), 3, samples=1, input_length=3)
        assert fit.rank_deficient

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fit_order_one(lambda x: x, 3, input_length=10)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            fit_order_one(lambda x: x, 1, method="sgd")

    def test_two_layer_network(self):
        fit = fit_order_one(TWO_LAYER, 17)
        direct = network_to_volterra(TWO_LAYER, 5)
        rep = fit_report(fit, direct.kernels[1], direct.kernels[0])
        assert rep.bias_error <= 1e-3
        assert rep.weight_error <= 2e-3

    def test_three_layer_network(self):
        net = Network([Conv1D(THREE_LAYER_H), Activation(SIGMOID), Conv1D(THREE_LAYER_G),
                       Activation(SIGMOID), Conv1D(THREE_LAYER_F)])
        direct = network_to_volterra(net, 5)
        fit = fit_order_one(net, 25)
        assert fit_report(fit, direct.kernels[1], direct.kernels[0]).weight_error <= 5e-3

    def test_residual_no_worse_than_truncation(self):
        # the best affine fit beats the order-0 + order-1 part of the expansion
        fit = fit_order_one(TWO_LAYER, 17, seed=5)
        direct = network_to_volterra(TWO_LAYER, 5)
        affine = VolterraOperator(direct.kernels[:2])
        oracle = as_oracle(TWO_LAYER)
        xs = sample_inputs(fit.samples, 128, seed=5)
        trunc = np.mean([np.mean((volterra_apply(affine, x) - oracle(x)) ** 2) for x in xs])
        assert fit.residual_mse <= trunc + 1e-6

    def test_network_oracle_multichannel_rejected(self):
        net = Network([Conv1D(np.ones((2, 1, 3)))])
        with pytest.raises(ValueError):
            as_oracle(net)(np.ones(5))


class TestReport:
    def test_exact(self, rng):
        w = rng.standard_normal(3)
        fit = fit_order_one(lambda x: conv1(w, x) + 1.0, 3)
        rep = fit_report(fit, fit.weights, fit.bias)
        assert rep.weight_error == 0 and rep.bias_error == 0

    def test_offset(self, rng):
        w, e = rng.standard_normal(3), rng.standard_normal(3)
        fit = fit_order_one(lambda x: conv1(w, x), 3)
        rep = fit_report(fit, fit.weights + e, fit.bias - 0.25)
        assert rep.weight_error == pytest.approx(np.linalg.norm(e))
        assert rep.bias_error == pytest.approx(0.25)

    def test_shape_mismatch(self):
        fit = fit_order_one(lambda x: conv1(np.ones(3), x), 3)
        with pytest.raises(ValueError):
            fit_report(fit, np.ones(4), 0.0)
