import numpy as np
import pytest

from nauction.core import AuctionSize, Rng, UNIFORM_UNIT, sample_bids, welfare
from nauction.mechanism import (
    ArchitectureMismatchError,
    CheckpointFormatError,
    MechanismNet,
    NetArchitecture,
    NoiseSpec,
    _forward_batch,
    _split_params,
    default_architecture,
    expected_outcome,
    finite_difference_check,
    forward,
    grad_inputs,
    grad_params,
    load_checkpoint,
    save_checkpoint,
)

SIZES = [AuctionSize(1, 2), AuctionSize(2, 2), AuctionSize(3, 3)]


def _net(size, seed=0, layers=2, width=12):
    arch = NetArchitecture(size, hidden_layers=layers, hidden_width=width)
    return MechanismNet.initialize(arch, Rng(seed).child("net"))


class TestArchitecture:
    def test_param_count_is_pure_function_of_arch(self):
        arch = NetArchitecture(AuctionSize(2, 2), 3, 100)
        dims = arch.layer_dims()
        assert dims[0] == (4, 100) and dims[-2] == (100, 6) and dims[-1] == (100, 2)
        assert arch.param_count == sum(fi * fo + fo for fi, fo in dims)

    def test_default_depths(self):
        assert default_architecture(AuctionSize(1, 2)).hidden_layers == 3
        assert default_architecture(AuctionSize(2, 2)).hidden_layers == 3
        assert default_architecture(AuctionSize(3, 2)).hidden_layers == 5
        assert default_architecture(AuctionSize(2, 3)).hidden_layers == 5
        assert default_architecture(AuctionSize(3, 3)).hidden_layers == 5

    def test_invalid(self):
        with pytest.raises(ValueError):
            NetArchitecture(AuctionSize(2, 2), hidden_layers=0)


class TestForward:
    @pytest.mark.parametrize("size", SIZES, ids=str)
    def test_outcome_invariants(self, size):
        net = _net(size, seed=3)
        for k in range(5):
            bids = sample_bids(UNIFORM_UNIT, size, 1, Rng(k).child("b"))[0]
            out, _ = forward(net, bids)
            out.validate(bids)
            assert np.all(out.allocation >= 0) and np.all(out.allocation <= 1)
            np.testing.assert_allclose(out.allocation.sum(axis=0), 1.0, atol=1e-6)
            for i in range(size.n_bidders):
                assert 0 <= out.payments[i] <= welfare(bids, out.allocation, i) + 1e-12

    def test_zero_bids_zero_payments(self):
        size = AuctionSize(2, 2)
        out, _ = forward(_net(size, seed=1), np.zeros((2, 2)))
        np.testing.assert_array_equal(out.payments, 0.0)

    def test_equal_logits_give_uniform_allocation(self):
        # zero weights and biases: every allocation logit is 0
        size = AuctionSize(2, 2)
        arch = NetArchitecture(size, 2, 8)
        net = MechanismNet(arch, np.zeros(arch.param_count))
        out, _ = forward(net, np.array([[0.3, 0.7], [0.2, 0.5]]))
        np.testing.assert_allclose(out.allocation, 1.0 / 3.0)

    def test_sigma_zero_deterministic(self, small_net, bids_2x2):
        a, _ = forward(small_net, bids_2x2)
        b, _ = forward(small_net, bids_2x2)
        assert np.array_equal(a.allocation, b.allocation)
        assert np.array_equal(a.payments, b.payments)

    def test_noise_determinism_and_simplex(self, small_net, bids_2x2):
        o1, _ = forward(small_net, bids_2x2, NoiseSpec(0.2, Rng(9).child("n")))
        o2, _ = forward(small_net, bids_2x2, NoiseSpec(0.2, Rng(9).child("n")))
        o3, _ = forward(small_net, bids_2x2, NoiseSpec(0.2, Rng(10).child("n")))
        assert np.array_equal(o1.allocation, o2.allocation)
        assert not np.array_equal(o1.allocation, o3.allocation)
        np.testing.assert_allclose(o3.allocation.sum(axis=0), 1.0, atol=1e-6)
        o3.validate(bids_2x2)

    def test_shape_mismatch_rejected(self, small_net):
        with pytest.raises(ValueError, match="shape"):
            forward(small_net, np.ones((3, 2)))

    def test_nonfinite_params_rejected(self, small_net):
        params = small_net.params.copy()
        params[0] = np.nan
        bad = MechanismNet(small_net.arch, params)
        with pytest.raises(ValueError, match="finite"):
            forward(bad, np.ones((2, 2)) * 0.5)


class TestGradients:
    def test_finite_difference_small(self):
        for size in SIZES:
            arch = NetArchitecture(size, hidden_layers=2, hidden_width=10)
            err = finite_difference_check(arch, seed=5, n_draws=3, n_param_coords=10)
            assert err <= 1e-4, f"{size}: {err}"

    def test_finite_difference_fixed_noise(self):
        arch = NetArchitecture(AuctionSize(2, 2), hidden_layers=2, hidden_width=10)
        err = finite_difference_check(arch, seed=6, sigma=0.3, n_draws=3, n_param_coords=10)
        assert err <= 1e-4

    def test_corrupt_hook_fails(self):
        arch = NetArchitecture(AuctionSize(2, 2), hidden_layers=2, hidden_width=8)
        err = finite_difference_check(arch, seed=7, n_draws=1, n_param_coords=5, corrupt=True)
        assert err > 1e-4

    def test_zero_upstream_zero_gradient(self, small_net, bids_2x2):
        _, tr = forward(small_net, bids_2x2)
        assert not grad_params(small_net, tr).any()
        assert not grad_inputs(small_net, tr).any()

    def test_upstream_linearity(self, small_net, bids_2x2):
        _, tr = forward(small_net, bids_2x2)
        da = Rng(3).child("da").normal(size=(3, 2))
        dp = Rng(3).child("dp").normal(size=2)
        g1 = grad_inputs(small_net, tr, da, dp)
        g2 = grad_inputs(small_net, tr, 2 * da, 2 * dp)
        np.testing.assert_allclose(g2, 2 * g1, rtol=1e-12)

    def test_frozen_rows_exact_zero(self, small_net, bids_2x2):
        _, tr = forward(small_net, bids_2x2)
        g = grad_inputs(small_net, tr, np.ones((3, 2)), np.ones(2), frozen_rows=[1])
        assert np.array_equal(g[1], np.zeros(2))
        assert g[0].any()

    def test_trace_net_mismatch(self, small_net, bids_2x2):
        _, tr = forward(small_net, bids_2x2)
        other = MechanismNet.initialize(small_net.arch, Rng(99).child("other"))
        with pytest.raises(ValueError, match="mismatch"):
            grad_params(other, tr)

    def test_payment_gradient_dead_for_zero_bid_item(self):
        # with item 1's bids all zero, payments cannot depend on item 1's
        # allocation logits: those head weights get exactly zero gradient
        size = AuctionSize(2, 2)
        net = _net(size, seed=8, layers=2, width=10)
        bids = np.array([[0.7, 0.0], [0.4, 0.0]])
        _, tr = forward(net, bids)
        g = grad_params(net, tr, d_payments=np.ones(2))
        views = _split_params(g, net.arch)
        gwa, gba = views[-2]  # allocation head: output j*(n+1)+i, item-major
        item1 = slice(1 * 3, 2 * 3)
        assert np.array_equal(gwa[:, item1], np.zeros_like(gwa[:, item1]))
        assert np.array_equal(gba[item1], np.zeros(3))
        assert gwa[:, 0:3].any()


class TestExpectedOutcome:
    def test_sigma_zero_equals_forward(self, small_net, bids_2x2):
        direct, _ = forward(small_net, bids_2x2)
        avg = expected_outcome(small_net, bids_2x2, NoiseSpec(0.0), 50)
        assert np.array_equal(direct.allocation, avg.allocation)
        assert np.array_equal(direct.payments, avg.payments)

    def test_simplex_preserved_exactly(self, small_net, bids_2x2):
        out = expected_outcome(small_net, bids_2x2, NoiseSpec(0.5, Rng(4).child("n")), 10_000)
        np.testing.assert_allclose(out.allocation.sum(axis=0), 1.0, atol=1e-6)
        out.validate(bids_2x2)

    def test_half_sample_averaging_identity(self, small_net, bids_2x2):
        # the 10k-draw estimate equals the average of its two 5k-draw halves
        size = small_net.arch.size
        eps = Rng(8).child("eps").normal(scale=0.5, size=(10_000, size.n_items, size.n_bidders + 1))
        x = bids_2x2.reshape(1, -1)
        w = small_net.layers()
        full = _forward_batch(w, size, x, eps, expected=True)
        h1 = _forward_batch(w, size, x, eps[:5000], expected=True)
        h2 = _forward_batch(w, size, x, eps[5000:], expected=True)
        np.testing.assert_allclose(full.alloc, (h1.alloc + h2.alloc) / 2, atol=1e-12)
        np.testing.assert_allclose(full.pay, (h1.pay + h2.pay) / 2, atol=1e-12)

    def test_monte_carlo_convergence(self, small_net, bids_2x2):
        # independent 10k-draw estimates agree to a few standard errors
        a = expected_outcome(small_net, bids_2x2, NoiseSpec(0.5, Rng(1).child("a")), 10_000)
        b = expected_outcome(small_net, bids_2x2, NoiseSpec(0.5, Rng(2).child("b")), 10_000)
        # per-entry std of a softmax sample is < 0.5, so 6 SE < 0.03
        assert np.abs(a.allocation - b.allocation).max() < 6 * 0.5 / np.sqrt(10_000)

    def test_n_samples_validation(self, small_net, bids_2x2):
        with pytest.raises(ValueError):
            expected_outcome(small_net, bids_2x2, NoiseSpec(0.0), 0)


class TestNoiseSpec:
    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            NoiseSpec(-0.1)

    def test_positive_sigma_needs_rng(self):
        with pytest.raises(ValueError):
            NoiseSpec(0.5)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, small_net, tmp_path):
        p = tmp_path / "net.nauc"
        save_checkpoint(small_net, p)
        loaded = load_checkpoint(p)
        assert np.array_equal(loaded.params, small_net.params)
        assert loaded.arch == small_net.arch

    def test_wrong_magic(self, small_net, tmp_path):
        p = tmp_path / "net.nauc"
        save_checkpoint(small_net, p)
        blob = bytearray(p.read_bytes())
        blob[:4] = b"XXXX"
        p.write_bytes(bytes(blob))
        with pytest.raises(CheckpointFormatError, match="magic"):
            load_checkpoint(p)

    def test_truncated(self, small_net, tmp_path):
        p = tmp_path / "net.nauc"
        save_checkpoint(small_net, p)
        p.write_bytes(p.read_bytes()[:-9])
        with pytest.raises(CheckpointFormatError, match="bytes"):
            load_checkpoint(p)

    def test_unknown_version(self, small_net, tmp_path):
        p = tmp_path / "net.nauc"
        save_checkpoint(small_net, p)
        blob = bytearray(p.read_bytes())
        blob[4] = 99
        p.write_bytes(bytes(blob))
        with pytest.raises(CheckpointFormatError, match="version"):
            load_checkpoint(p)

    def test_architecture_mismatch(self, small_net, tmp_path):
        p = tmp_path / "net.nauc"
        save_checkpoint(small_net, p)
        with pytest.raises(ArchitectureMismatchError):
            load_checkpoint(p, expected_size=AuctionSize(3, 3))

    def test_self_describing(self, small_net, tmp_path):
        p = tmp_path / "net.nauc"
        save_checkpoint(small_net, p)
        loaded = load_checkpoint(p, expected_size=AuctionSize(2, 2))
        assert loaded.arch.hidden_layers == small_net.arch.hidden_layers
        assert loaded.arch.hidden_width == small_net.arch.hidden_width


class TestWorkspaceConsistency:
    def test_workspace_reuse_matches_fresh(self, small_net):
        from nauction.mechanism import _Workspace

        size = small_net.arch.size
        ws = _Workspace(small_net.arch, 8)
        ws.set_weights(small_net.layers())
        x_big = Rng(5).child("x").uniform(size=(8, 4))
        ws.forward(x_big)
        big_alloc = ws.alloc[:8].copy()
        # smaller batch through the same workspace matches a fresh pass
        ws.forward(x_big[:3])
        fresh = _forward_batch(small_net.layers(), size, x_big[:3])
        np.testing.assert_array_equal(ws.alloc[:3], fresh.alloc)
        np.testing.assert_array_equal(ws.alloc[:3], big_alloc[:3])

    def test_capacity_enforced(self, small_net):
        from nauction.mechanism import _Workspace

        ws = _Workspace(small_net.arch, 2)
        ws.set_weights(small_net.layers())
        with pytest.raises(ValueError, match="capacity"):
            ws.forward(np.zeros((3, 4)))
