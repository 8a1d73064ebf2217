import numpy as np
import pytest

from mollipde.errors import ConfigurationError, InvalidArgumentError, NonFiniteParameterError
from mollipde.grids import GridField
from mollipde.kernels import KernelFamily, MollifierKernel, discretize
from mollipde.network import (
    DenseLayer,
    FourierEmbedding,
    NeuralField,
    build_network,
    load_checkpoint,
    save_checkpoint,
)


def tiny_net(seed=0, **kw):
    kw.setdefault("width", 8)
    kw.setdefault("depth", 2)
    kw.setdefault("fourier_count", 4)
    return NeuralField(input_dim=1, seed=seed, **kw)


class TestFourierEmbedding:
    def test_output_dimension(self):
        emb = FourierEmbedding(count=5, input_dim=2)
        assert emb.output_dim == 20
        out = emb(np.zeros((3, 2)))
        assert out.shape == (3, 20)

    def test_frequencies_symmetric(self):
        emb = FourierEmbedding(count=6, input_dim=1)
        np.testing.assert_allclose(emb.frequencies, -emb.frequencies[::-1])
        assert emb.frequencies.min() == -3.0 and emb.frequencies.max() == 3.0

    def test_bad_shape_rejected(self):
        with pytest.raises(InvalidArgumentError):
            FourierEmbedding(count=4, input_dim=1)(np.zeros((3, 2)))


class TestLayers:
    def test_residual_requires_matching_widths(self):
        with pytest.raises(ConfigurationError):
            DenseLayer(4, 8, use_residual=True)

    def test_residual_with_zero_weights_is_identity(self):
        layer = DenseLayer(6, 6, activation="tanh", use_residual=True,
                           rng=np.random.default_rng(0))
        layer.weights[:] = 0.0
        x = np.random.default_rng(1).standard_normal((5, 6))
        out, _ = layer.forward(x)
        np.testing.assert_array_equal(out, x)

    def test_layernorm_statistics(self):
        layer = DenseLayer(16, 16, activation="identity", use_layernorm=True,
                           rng=np.random.default_rng(2))
        x = np.random.default_rng(3).standard_normal((20, 16)) * 3 + 1
        z = x @ layer.weights + layer.bias
        mu = z.mean(axis=1, keepdims=True)
        var = z.var(axis=1, keepdims=True)
        z_hat = (z - mu) / np.sqrt(var + 1e-8)
        assert np.max(np.abs(z_hat.mean(axis=1))) <= 1e-9
        assert np.max(np.abs(z_hat.var(axis=1) - 1.0)) <= 1e-6


class TestForward:
    def test_zeroed_head_returns_bias(self):
        net = tiny_net()
        net.head_g.weights[:] = 0.0
        net.head_g.bias[:] = 1.25
        g, lam, _ = net.forward(np.linspace(0, 1, 7)[:, None])
        np.testing.assert_allclose(g, 1.25)

    def test_single_identity_layer_matches_hand_product(self):
        net = NeuralField(input_dim=1, width=6, depth=1, activation="identity",
                          fourier_count=2, use_residual=False,
                          use_layernorm=False, seed=4)
        coords = np.array([[0.0], [0.3], [0.9]])
        emb = net.embedding(coords)
        expected = (emb @ net.layers[0].weights + net.layers[0].bias) \
            @ net.head_g.weights + net.head_g.bias
        g, _, _ = net.forward(coords)
        np.testing.assert_allclose(g, expected[:, 0], rtol=1e-14)

    def test_deterministic_bit_identical(self):
        net = tiny_net(seed=5)
        coords = np.random.default_rng(6).uniform(size=(11, 1))
        g1, l1, _ = net.forward(coords)
        g2, l2, _ = net.forward(coords)
        assert np.array_equal(g1, g2) and np.array_equal(l1, l2)

    def test_nan_parameters_poison_state(self):
        net = tiny_net()
        net.layers[0].weights[0, 0] = np.nan
        with pytest.raises(NonFiniteParameterError):
            net.forward(np.zeros((3, 1)))


class TestBackward:
    @pytest.mark.parametrize("activation,use_ln", [("tanh", True), ("tanh", False),
                                                   ("relu", False), ("identity", True)])
    def test_gradients_match_finite_differences(self, activation, use_ln):
        net = tiny_net(seed=7, activation=activation, use_layernorm=use_ln)
        coords = np.linspace(0.05, 0.95, 5)[:, None]
        rng = np.random.default_rng(8)
        cg, cl = rng.standard_normal((2, 5))
        _, _, state = net.forward(coords)
        tape = net.backward(state, cg, cl)
        p0 = net.get_parameters()
        eps = 1e-5
        for i in range(0, p0.size, 7):
            p = p0.copy()
            p[i] += eps
            net.set_parameters(p)
            gp, lp, _ = net.forward(coords)
            p[i] -= 2 * eps
            net.set_parameters(p)
            gm, lm, _ = net.forward(coords)
            fd = ((gp @ cg + lp @ cl) - (gm @ cg + lm @ cl)) / (2 * eps)
            an = tape.values[i]
            assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an)) + 1e-8
        net.set_parameters(p0)

    def test_zero_cotangents_zero_tape(self):
        net = tiny_net()
        coords = np.zeros((4, 1))
        _, _, state = net.forward(coords)
        tape = net.backward(state, np.zeros(4), np.zeros(4))
        assert np.all(tape.values == 0.0)

    def test_tape_linearity(self):
        net = tiny_net(seed=9)
        coords = np.linspace(0, 1, 6)[:, None]
        rng = np.random.default_rng(10)
        cg, cl = rng.standard_normal((2, 6))
        _, _, state = net.forward(coords)
        t1 = net.backward(state, cg, cl).values
        t2 = net.backward(state, 2.5 * cg, 2.5 * cl).values
        np.testing.assert_allclose(t2, 2.5 * t1, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        net = tiny_net()
        _, _, state = net.forward(np.zeros((4, 1)))
        with pytest.raises(ConfigurationError):
            net.backward(state, np.zeros(3), np.zeros(4))


class TestGridApi:
    def test_predict_u_constant_head(self):
        net = tiny_net()
        net.head_g.weights[:] = 0.0
        net.head_g.bias[:] = 2.0
        grid = GridField(np.zeros(40), spacing=(0.01,))
        kernel = MollifierKernel(KernelFamily.EXP_BUMP, 0.05, dimension=1)
        u = net.predict_u(grid, kernel)
        np.testing.assert_allclose(u.interior_values(), 2.0, atol=1e-12)

    def test_predict_u_smaller_support_tracks_raw_field(self):
        net = tiny_net(seed=11)
        grid = GridField(np.zeros(60), spacing=(0.01,))
        g_field, _, _ = net.forward_on_grid(grid)
        errs = []
        for radius in (0.05, 0.015):
            kernel = MollifierKernel(KernelFamily.EXP_BUMP, radius, dimension=1)
            u = net.predict_u(grid, kernel)
            core = slice(6, 54)
            errs.append(np.max(np.abs(u.values[core] - g_field.values[core])))
        assert errs[1] < errs[0]

    def test_loss_gradient_through_mollifier_matches_fd(self):
        from mollipde.calculus import mollify, mollify_adjoint

        net = tiny_net(seed=12)
        grid = GridField(np.sin(np.linspace(0, 3, 30)), spacing=(0.01,))
        kernel = MollifierKernel(KernelFamily.EXP_BUMP, 0.04, dimension=1)
        stencil = discretize(kernel, 0.01, (0,))
        target = grid.values

        def loss_and_tape():
            g_field, lam_field, state = net.forward_on_grid(grid)
            u = mollify(g_field, stencil)
            diff = np.where(u.interior_mask().boolean, u.values - target, 0.0)
            loss = float(np.sum(diff ** 2))
            cot_u = u.with_values(2 * diff, margin=u.margin)
            cot_g = mollify_adjoint(cot_u, stencil)
            tape = net.backward_on_grid(
                state, cot_g, cot_g.with_values(np.zeros_like(cot_g.values)))
            return loss, tape

        _, tape = loss_and_tape()
        p0 = net.get_parameters()
        eps = 1e-5
        for i in range(0, p0.size, 11):
            p = p0.copy()
            p[i] += eps
            net.set_parameters(p)
            lp, _ = loss_and_tape()
            p[i] -= 2 * eps
            net.set_parameters(p)
            lm, _ = loss_and_tape()
            fd = (lp - lm) / (2 * eps)
            assert abs(fd - tape.values[i]) <= 1e-4 * max(abs(fd), abs(tape.values[i])) + 1e-8
        net.set_parameters(p0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = tiny_net(seed=13)
        path = tmp_path / "net.ckpt"
        save_checkpoint(net, path)
        other = tiny_net(seed=99)
        load_checkpoint(other, path)
        np.testing.assert_array_equal(other.get_parameters(), net.get_parameters())

    def test_layout_mismatch_rejected(self, tmp_path):
        net = tiny_net(seed=14)
        path = tmp_path / "net.ckpt"
        save_checkpoint(net, path)
        wider = NeuralField(input_dim=1, width=16, depth=2, fourier_count=4)
        with pytest.raises(ConfigurationError):
            load_checkpoint(wider, path)


class TestPresets:
    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigurationError):
            build_network("nope", input_dim=1)

    def test_benchmark_presets_shapes(self):
        net = build_network("langevin-bench", input_dim=1, width=12, depth=2)
        assert net.layers[0].activation == "relu"
        net2 = build_network("field-bench", input_dim=2, width=12, depth=2)
        assert net2.layers[0].activation == "tanh"
