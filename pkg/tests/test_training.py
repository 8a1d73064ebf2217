import numpy as np
import pytest

from mollipde.grids import GridField
from mollipde.kernels import KernelFamily, MollifierKernel
from mollipde.network import NeuralField
from mollipde.residuals import SampleMask, langevin_problem
from mollipde.training import forward_toy_solve, solve_field_head, train


def small_setup(n=30, seed=0):
    rng = np.random.default_rng(seed)
    data = GridField(np.sin(np.linspace(0, 2, n)) + 0.1 * rng.standard_normal(n),
                     spacing=(0.01,))
    kernel = MollifierKernel(KernelFamily.EXP_BUMP, 0.04, dimension=1)
    net = NeuralField(input_dim=1, width=8, depth=2, fourier_count=4, seed=seed)
    return data, kernel, net


class TestTrain:
    def test_loss_decreases(self):
        data, kernel, net = small_setup()
        result = train(langevin_problem("head"), data, SampleMask.full(data),
                       kernel, net, epochs=60, seed=0)
        assert result.final.mse_total < result.history[0].mse_total

    def test_history_has_one_record_per_epoch(self):
        data, kernel, net = small_setup()
        result = train(langevin_problem("head"), data, SampleMask.full(data),
                       kernel, net, epochs=7, seed=0)
        assert [r.epoch for r in result.history] == list(range(7))

    def test_minibatching_runs_and_converges(self):
        data, kernel, net = small_setup()
        result = train(langevin_problem("head"), data, SampleMask.full(data),
                       kernel, net, epochs=60, batch_size=16, seed=0)
        assert result.final.mse_total < result.history[0].mse_total

    def test_deterministic_given_seed(self):
        outs = []
        for _ in range(2):
            data, kernel, net = small_setup(seed=3)
            result = train(langevin_problem("head"), data, SampleMask.full(data),
                           kernel, net, epochs=25, batch_size=16, seed=3)
            outs.append(net.get_parameters())
        np.testing.assert_array_equal(outs[0], outs[1])

    def test_warm_start_sets_head_bias(self):
        data, kernel, net = small_setup()
        train(langevin_problem("head"), data, SampleMask.full(data), kernel,
              net, epochs=0, warm_start=True, seed=0)
        assert net.head_g.bias[0] == pytest.approx(float(data.values.mean()))

    def test_epochs_zero_evaluates_without_updates(self):
        data, kernel, net = small_setup()
        before = net.get_parameters().copy()
        result = train(langevin_problem("head"), data, SampleMask.full(data),
                       kernel, net, epochs=0, warm_start=False, seed=0)
        np.testing.assert_array_equal(net.get_parameters(), before)
        assert len(result.history) == 1


class TestHeadSolve:
    def test_interpolates_data_through_smoother(self):
        # needs a domain long enough that the embedding features decorrelate
        rng = np.random.default_rng(5)
        data = GridField(np.sin(np.linspace(0, 2, 101)) +
                         0.1 * rng.standard_normal(101), spacing=(0.01,))
        kernel = MollifierKernel(KernelFamily.EXP_BUMP, 0.04, dimension=1)
        wide = NeuralField(input_dim=1, width=256, depth=1, activation="relu",
                           fourier_count=64, use_layernorm=False, seed=1)
        mask = SampleMask.full(data)
        solve_field_head(wide, data, mask, kernel)
        result = train(langevin_problem("head"), data, mask, kernel, wide,
                       epochs=0, warm_start=False, seed=0)
        assert result.final.mse_u < 1e-12


class TestForwardToy:
    def test_matches_exponential_within_tolerance(self):
        u_hat, result = forward_toy_solve(epochs=2500, seed=0)
        sl = u_hat.interior_mask().slices
        xs = u_hat.axis_coordinates(0)[sl[0]]
        exact = np.exp(-xs)
        rel = np.max(np.abs(u_hat.values[sl] - exact) / exact)
        assert rel <= 0.02

    def test_zero_rate_constant_solution(self):
        # lam = 0 with the anchor u(0) = 1 admits the constant solution
        u_hat, _ = forward_toy_solve(epochs=800, lam=0.0, seed=1)
        sl = u_hat.interior_mask().slices
        np.testing.assert_allclose(u_hat.values[sl], 1.0, atol=0.02)

    def test_residual_training_beats_data_only_baseline(self):
        from mollipde.grids import GridField
        from mollipde.kernels import discretize
        from mollipde.residuals import forward_ode_problem, total_loss

        u_hat, with_residual = forward_toy_solve(epochs=1500, seed=2)
        # data-only ablation: same setup, residual excluded from the gradient
        kernel = MollifierKernel(KernelFamily.EXP_BUMP, 0.25, dimension=1)
        zeroth = discretize(kernel, 0.05, (0,))
        margin = zeroth.radius
        n = 21 + 2 * margin
        data_values = np.zeros(n)
        data_values[margin] = 1.0
        data = GridField(data_values, spacing=(0.05,), origin=(-margin * 0.05,))
        mask = SampleMask(indices=np.array([margin]))
        net = NeuralField(input_dim=1, width=64, depth=2, activation="tanh",
                          fourier_count=16, seed=2)
        train(forward_ode_problem(1.0), data, mask, kernel, net, epochs=1500,
              seed=2, include_residual=False)
        g_field, lam_field, _ = net.forward_on_grid(data)
        baseline, _, _ = total_loss(forward_ode_problem(1.0), g_field, lam_field,
                                    data, mask, kernel)
        assert with_residual.final.mse_f < baseline.mse_f
