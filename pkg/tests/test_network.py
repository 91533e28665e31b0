"""Network construction, forward evaluation, backprop, parameter
bookkeeping, and checkpoint round-trips."""

import numpy as np
import pytest

from bqrnet.network import (ArchitectureError, Gradients, QuantileNet,
                            ShapeError, TauGrid, apply_step,
                            backprop_from_outputs, flatten_grad,
                            flatten_params, forward, forward_cached, init_net,
                            load_checkpoint, param_count, save_checkpoint,
                            unflatten_params)


class TestTauGrid:
    def test_default_grid(self):
        grid = TauGrid.default()
        assert grid.levels == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
        assert len(grid) == 9
        assert grid.median_index == 4
        assert grid.is_symmetric()

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            TauGrid((0.0, 0.5))
        with pytest.raises(ValueError):
            TauGrid((0.5, 1.0))
        with pytest.raises(ValueError):
            TauGrid(())

    def test_rejects_non_increasing(self):
        with pytest.raises(ValueError):
            TauGrid((0.5, 0.5))
        with pytest.raises(ValueError):
            TauGrid((0.6, 0.4))

    def test_grid_without_median_allowed_but_median_index_raises(self):
        grid = TauGrid((0.4, 0.6))
        with pytest.raises(ValueError):
            grid.median_index

    def test_asymmetric_grid(self):
        assert not TauGrid((0.1, 0.5, 0.6)).is_symmetric()


class TestInitNet:
    def test_shapes(self):
        net = init_net(1, [32, 32], TauGrid.default(), seed=7)
        assert net.trunk_widths == [32, 32]
        assert net.head_w.shape == (9, 32)
        assert net.head_b.shape == (9,)
        assert net.n_heads == 9

    def test_deterministic(self):
        a = init_net(1, [32, 32], TauGrid.default(), seed=7)
        b = init_net(1, [32, 32], TauGrid.default(), seed=7)
        for wa, wb in zip(a.trunk_w, b.trunk_w):
            assert np.array_equal(wa, wb)
        assert np.array_equal(a.head_w, b.head_w)

    def test_seed_changes_weights(self):
        a = init_net(1, [8], TauGrid.default(), seed=7)
        b = init_net(1, [8], TauGrid.default(), seed=8)
        assert not np.array_equal(a.trunk_w[0], b.trunk_w[0])

    def test_empty_trunk_rejected(self):
        with pytest.raises(ArchitectureError):
            init_net(1, [], TauGrid.default(), seed=7)

    def test_zero_width_rejected(self):
        with pytest.raises(ArchitectureError):
            init_net(1, [4, 0], TauGrid.default(), seed=7)

    def test_zero_input_dim_rejected(self):
        with pytest.raises(ArchitectureError):
            init_net(0, [4], TauGrid.default(), seed=7)

    def test_biases_zero(self):
        net = init_net(2, [4, 4], TauGrid.default(), seed=3)
        for b in net.trunk_b:
            assert np.all(b == 0.0)
        assert np.all(net.head_b == 0.0)


class TestForward:
    def test_zero_weights_give_zero_outputs(self):
        net = init_net(1, [4], TauGrid.default(), seed=0)
        net.trunk_w[0][:] = 0.0
        net.head_w[:] = 0.0
        out = forward(net, np.array([[0.3], [-2.0]]))
        assert np.all(out == 0.0)

    def test_single_unit_composition(self):
        # one trunk unit w=2, b=0.5; head weight 1 => output = relu(2x + 0.5)
        grid = TauGrid((0.5,))
        net = init_net(1, [1], grid, seed=0)
        net.trunk_w[0][:] = 2.0
        net.trunk_b[0][:] = 0.5
        net.head_w[:] = 1.0
        net.head_b[:] = 0.0
        for x in (-1.0, 0.0, 0.3, 2.0):
            expected = max(2.0 * x + 0.5, 0.0)
            assert forward(net, np.array([x]))[0] == pytest.approx(expected)

    def test_single_and_batch_agree(self):
        net = init_net(3, [8, 8], TauGrid.default(), seed=5)
        x = np.random.default_rng(0).normal(size=(4, 3))
        batch = forward(net, x)
        assert batch.shape == (4, 9)
        for i in range(4):
            assert np.allclose(forward(net, x[i]), batch[i])

    def test_dimension_mismatch(self):
        net = init_net(2, [4], TauGrid.default(), seed=1)
        with pytest.raises(ShapeError):
            forward(net, np.zeros((3, 5)))

    def test_non_finite_rejected(self):
        net = init_net(1, [4], TauGrid.default(), seed=1)
        with pytest.raises(ValueError):
            forward(net, np.array([[np.nan]]))

    def test_forward_cached_consistent(self):
        net = init_net(2, [4, 3], TauGrid.default(), seed=2)
        x = np.random.default_rng(1).normal(size=(5, 2))
        z, acts, pres = forward_cached(net, x)
        assert np.allclose(z, forward(net, x))
        assert len(acts) == 3 and len(pres) == 2
        assert np.allclose(acts[-1], np.maximum(pres[-1], 0.0))


class TestBackprop:
    def test_matches_finite_difference(self):
        # d(sum of outputs)/d(params) against central differences
        net = init_net(2, [5, 4], TauGrid((0.3, 0.5, 0.7)), seed=9)
        x = np.random.default_rng(2).normal(size=(6, 2))
        z, acts, pres = forward_cached(net, x)
        dz = np.ones_like(z)
        grad = flatten_grad(backprop_from_outputs(net, acts, pres, dz))

        theta = flatten_params(net)
        eps = 1e-6
        fd = np.empty_like(theta)
        for k in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += eps
            tm[k] -= eps
            fp = forward(unflatten_params(net, tp), x).sum()
            fm = forward(unflatten_params(net, tm), x).sum()
            fd[k] = (fp - fm) / (2 * eps)
        assert np.allclose(grad, fd, atol=1e-5)

    def test_apply_step_moves_parameters(self):
        net = init_net(1, [3], TauGrid((0.5,)), seed=4)
        x = np.array([[0.7]])
        z, acts, pres = forward_cached(net, x)
        grads = backprop_from_outputs(net, acts, pres, np.ones_like(z))
        before = flatten_params(net)
        apply_step(net, grads, 0.1)
        after = flatten_params(net)
        assert np.allclose(after, before - 0.1 * flatten_grad(grads))


class TestParamCount:
    def test_small_examples(self):
        assert param_count(init_net(1, [2], TauGrid((0.5,)), seed=0)) == 7
        assert param_count(init_net(3, [4], TauGrid((0.4, 0.6)), seed=0)) == 26

    def test_matches_flatten_length(self):
        net = init_net(5, [7, 3], TauGrid.default(), seed=1)
        assert param_count(net) == flatten_params(net).size

    def test_unflatten_round_trip(self):
        net = init_net(2, [4, 3], TauGrid.default(), seed=6)
        flat = flatten_params(net)
        again = flatten_params(unflatten_params(net, flat))
        assert np.array_equal(flat, again)

    def test_unflatten_wrong_length(self):
        net = init_net(2, [4], TauGrid.default(), seed=6)
        with pytest.raises(ShapeError):
            unflatten_params(net, np.zeros(3))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = init_net(3, [6, 5], TauGrid.default(), seed=11)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(net, path)
        loaded = load_checkpoint(path)
        assert loaded.grid.levels == net.grid.levels
        assert loaded.trunk_widths == net.trunk_widths
        assert np.array_equal(flatten_params(loaded), flatten_params(net))
        x = np.random.default_rng(3).normal(size=(4, 3))
        assert np.array_equal(forward(loaded, x), forward(net, x))

    def test_version_check(self, tmp_path):
        path = tmp_path / "bad.npz"
        np.savez(path,
                 meta=np.frombuffer(b'{"version": "other"}', dtype=np.uint8),
                 grid=np.array([0.5]), params=np.zeros(7))
        with pytest.raises(ValueError):
            load_checkpoint(path)
