import numpy as np
import pytest

import shotvae.autodiff as ad
from shotvae.autodiff import DomainError, ShapeError, Tensor, backward, zero_grad
from shotvae.nets import (
    DecoderLikelihood,
    ModelParams,
    conditional_generate,
    decode,
    encode,
    recon_log_likelihood,
)
from shotvae.distributions import sample_gaussian_rt

from conftest import central_difference, max_rel_err


@pytest.fixture
def tiny_params(rng):
    return ModelParams.init(input_dim=5, z_dim=3, num_classes=3, hidden=8, rng=rng)


class TestEncode:
    def test_posterior_normalized(self, tiny_params, rng):
        out = encode(Tensor(rng.uniform(size=(4, 5))), tiny_params)
        np.testing.assert_allclose(out.y_posterior.probs.data.sum(axis=-1), 1.0, atol=1e-9)

    def test_zeroed_class_head_gives_uniform(self, tiny_params, rng):
        tiny_params["enc.y.w"].data[:] = 0.0
        tiny_params["enc.y.b"].data[:] = 0.0
        out = encode(Tensor(rng.uniform(size=(2, 5))), tiny_params)
        np.testing.assert_allclose(out.y_posterior.probs.data, 1 / 3, atol=1e-15)

    def test_identical_inputs_identical_outputs(self, tiny_params, rng):
        row = rng.uniform(size=5)
        out = encode(Tensor(np.stack([row, row])), tiny_params)
        np.testing.assert_array_equal(out.y_posterior.probs.data[0],
                                      out.y_posterior.probs.data[1])
        np.testing.assert_array_equal(out.z_posterior.mu.data[0], out.z_posterior.mu.data[1])

    def test_wrong_input_dim(self, tiny_params, rng):
        with pytest.raises(ShapeError):
            encode(Tensor(rng.uniform(size=(2, 7))), tiny_params)

    def test_non_finite_input(self, tiny_params):
        x = np.full((1, 5), np.nan)
        with pytest.raises(DomainError):
            encode(Tensor(x), tiny_params)

    def test_log_var_clamped(self, tiny_params, rng):
        tiny_params["enc.logvar.b"].data[:] = 99.0
        out = encode(Tensor(rng.uniform(size=(1, 5))), tiny_params)
        assert np.all(out.z_posterior.log_var.data <= 10.0)

    def test_class_head_permutation_equivariance(self, tiny_params, rng):
        x = Tensor(rng.uniform(size=(3, 5)))
        base = encode(x, tiny_params).y_posterior.probs.data.copy()
        perm = np.array([2, 0, 1])
        tiny_params["enc.y.w"].data = tiny_params["enc.y.w"].data[:, perm]
        tiny_params["enc.y.b"].data = tiny_params["enc.y.b"].data[perm]
        permuted = encode(x, tiny_params).y_posterior.probs.data
        np.testing.assert_allclose(permuted, base[:, perm], atol=1e-12)


class TestDecode:
    def test_zero_final_layer_constant_sigmoid_bias(self, tiny_params, rng):
        tiny_params["dec.out.w"].data[:] = 0.0
        tiny_params["dec.out.b"].data[:] = 0.3
        z = Tensor(rng.standard_normal((2, 3)))
        y = Tensor(np.full((2, 3), 1 / 3))
        out = decode(z, y, tiny_params)
        expected = 1 / (1 + np.exp(-0.3))
        np.testing.assert_allclose(out.mean.data, expected, atol=1e-12)

    def test_outputs_in_unit_interval(self, tiny_params, rng):
        z = Tensor(rng.standard_normal((8, 3)) * 5)
        y = Tensor(rng.dirichlet(np.ones(3), size=8))
        out = decode(z, y, tiny_params)
        assert np.all(out.mean.data > 0) and np.all(out.mean.data < 1)

    def test_shape_mismatch(self, tiny_params, rng):
        with pytest.raises(ShapeError):
            decode(Tensor(rng.standard_normal((2, 4))), Tensor(np.full((2, 3), 1 / 3)), tiny_params)

    def test_fixed_var_positive(self, rng):
        with pytest.raises(DomainError):
            DecoderLikelihood(Tensor(rng.uniform(size=(1, 4))), fixed_var=0.0)

    def test_encode_decode_roundtrip_differentiable(self, tiny_params, rng):
        """Gradient of the reconstruction through encoder sample and decoder."""
        x = Tensor(rng.uniform(size=(2, 5)))
        checked = [tiny_params["enc.l0.w"], tiny_params["enc.mu.w"],
                   tiny_params["enc.logvar.w"], tiny_params["dec.out.b"]]

        def loss():
            enc = encode(x, tiny_params)
            z = sample_gaussian_rt(enc.z_posterior, np.random.default_rng(99))
            lik = decode(z, enc.y_posterior.probs, tiny_params)
            return ad.scale(recon_log_likelihood(x, lik), -1.0)

        zero_grad(checked)
        backward(loss())
        numeric = central_difference(lambda: loss().item(), checked, step=1e-5)
        for t, num in zip(checked, numeric):
            assert max_rel_err(t.grad, num) < 1e-4


class TestReconLogLikelihood:
    def test_exact_match_is_zero(self, rng):
        x = rng.uniform(size=(1, 4))
        lik = DecoderLikelihood(Tensor(x.copy()), 1.0)
        assert recon_log_likelihood(Tensor(x), lik).item() == 0.0

    def test_unit_residual_value(self):
        x = Tensor(np.ones((1, 4)))
        lik = DecoderLikelihood(Tensor(np.zeros((1, 4))), 1.0)
        assert recon_log_likelihood(x, lik).item() == pytest.approx(-2.0, abs=1e-12)

    def test_gradient_wrt_mean_is_residual_over_var(self, rng):
        x = rng.uniform(size=(1, 4))
        mean = Tensor(rng.uniform(size=(1, 4)), requires_grad=True)
        lik = DecoderLikelihood(mean, 2.0)
        backward(recon_log_likelihood(Tensor(x), lik))
        np.testing.assert_allclose(mean.grad, (x - mean.data) / 2.0, atol=1e-12)

    def test_shape_mismatch(self, rng):
        lik = DecoderLikelihood(Tensor(rng.uniform(size=(1, 4))), 1.0)
        with pytest.raises(ShapeError):
            recon_log_likelihood(Tensor(rng.uniform(size=(1, 5))), lik)


class TestConditionalGenerate:
    def test_output_range_and_determinism(self, tiny_params, rng):
        x = Tensor(rng.uniform(size=(1, 5)))
        a = conditional_generate(x, 1, tiny_params, np.random.default_rng(5))
        b = conditional_generate(x, 1, tiny_params, np.random.default_rng(5))
        assert np.all(a > 0) and np.all(a < 1)
        np.testing.assert_array_equal(a, b)

    def test_invalid_class(self, tiny_params, rng):
        with pytest.raises(IndexError):
            conditional_generate(Tensor(rng.uniform(size=(1, 5))), 3, tiny_params,
                                 np.random.default_rng(0))


class TestModelParams:
    def test_all_require_grad_and_shapes_chain(self, tiny_params):
        for name, t in tiny_params.tensors.items():
            assert t.requires_grad, name
        assert tiny_params["enc.l0.w"].shape == (5, 8)
        assert tiny_params["enc.mu.w"].shape == (8, 3)
        assert tiny_params["dec.l0.w"].shape == (6, 8)
        assert tiny_params["dec.out.w"].shape == (8, 5)

    def test_biases_start_zero(self, tiny_params):
        for name, t in tiny_params.tensors.items():
            if name.endswith(".b"):
                assert np.all(t.data == 0.0), name

    def test_init_deterministic_per_seed(self):
        a = ModelParams.init(4, 2, 2, 6, np.random.default_rng(3))
        b = ModelParams.init(4, 2, 2, 6, np.random.default_rng(3))
        for name in a.tensors:
            np.testing.assert_array_equal(a[name].data, b[name].data)
