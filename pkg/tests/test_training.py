import numpy as np
import pytest

from nauction.core import AuctionSize, Rng, UNIFORM_UNIT, sample_bids
from nauction.mechanism import (
    MechanismNet,
    NetArchitecture,
    NoiseSpec,
    _split_params,
    forward,
)
from nauction.training import (
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    optimize_misreport,
    regret_of,
    train,
)

TINY = dict(epochs=2, n_train_samples=512, batch_size=64, misreport_iters=5, misreport_inits=2)


def _tiny_arch(size=AuctionSize(2, 2)):
    return NetArchitecture(size, hidden_layers=2, hidden_width=12)


def _dsic_free_lunch_net(size=AuctionSize(2, 2)):
    """Everything allocated to the bidders, nothing charged: reports are
    irrelevant to utility, so regret is zero."""
    arch = _tiny_arch(size)
    flat = np.zeros(arch.param_count)
    layers = _split_params(flat, arch)
    _, ba = layers[-2]
    ba.reshape(size.n_items, size.n_bidders + 1)[:, -1] = -50.0  # ghost never wins
    _, bp = layers[-1]
    bp[:] = -50.0  # payment fraction ~ 0
    return MechanismNet(arch, flat)


def _dsic_no_sale_net(size=AuctionSize(2, 2)):
    """Nothing allocated, nothing charged: the constant mechanism."""
    arch = _tiny_arch(size)
    flat = np.zeros(arch.param_count)
    layers = _split_params(flat, arch)
    _, ba = layers[-2]
    ba.reshape(size.n_items, size.n_bidders + 1)[:, -1] = 50.0  # ghost takes all
    _, bp = layers[-1]
    bp[:] = -50.0
    return MechanismNet(arch, flat)


class TestTrainConfig:
    @pytest.mark.parametrize(
        "n,m,epochs,period,rho0,inc,layers",
        [
            (1, 2, 10, 2, 1.0, 10.0, 3),
            (2, 2, 30, 2, 1.0, 5.0, 3),
            (3, 2, 20, 2, 1.0, 1.0, 5),
            (2, 3, 20, 2, 1.0, 1.0, 5),
            (3, 3, 30, 8, 0.0, 1.0, 5),
        ],
    )
    def test_published_defaults(self, n, m, epochs, period, rho0, inc, layers):
        from nauction.mechanism import default_architecture

        cfg = TrainConfig.for_size(AuctionSize(n, m))
        assert cfg.epochs == epochs
        assert cfg.rho_update_period_epochs == period
        assert cfg.rho_initial == rho0
        assert cfg.rho_increment == inc
        assert cfg.batch_size == 128
        assert cfg.learning_rate == 1e-3
        assert cfg.lagrange_weight_initial == 5.0
        assert cfg.lagrange_update_period_iters == 100
        assert cfg.misreport_lr == 0.1
        assert cfg.misreport_iters == 25
        assert cfg.misreport_inits == 10
        assert cfg.n_train_samples == 640_000
        assert default_architecture(AuctionSize(n, m)).hidden_layers == layers
        assert default_architecture(AuctionSize(n, m)).hidden_width == 100

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig.for_size(AuctionSize(2, 2), epochs=0).validate()
        with pytest.raises(ValueError):
            TrainConfig.for_size(AuctionSize(2, 2), learning_rate=0).validate()
        with pytest.raises(ValueError):
            TrainConfig.for_size(AuctionSize(2, 2), n_train_samples=16).validate()


class TestOptimizeMisreport:
    def test_constant_mechanism_has_no_profitable_misreport(self):
        net = _dsic_no_sale_net()
        truth = np.array([[0.6, 0.4], [0.3, 0.8]])
        row, best = optimize_misreport(net, truth, 0, iters=10, inits=3, rng=Rng(2))
        assert best == pytest.approx(0.0, abs=1e-6)
        rgt = regret_of(net, truth, TrainConfig.for_size(AuctionSize(2, 2), **TINY))
        np.testing.assert_allclose(rgt, 0.0, atol=1e-6)

    def test_free_lunch_mechanism_is_dsic(self):
        net = _dsic_free_lunch_net()
        truth = np.array([[0.6, 0.4], [0.3, 0.8]])
        rgt = regret_of(net, truth, TrainConfig.for_size(AuctionSize(2, 2), **TINY))
        np.testing.assert_allclose(rgt, 0.0, atol=1e-6)

    def test_more_restarts_never_worse(self, small_net):
        truth = np.array([[0.5, 0.9], [0.2, 0.4]])
        # shared seed prefix: the single restart is the first of the ten
        _, u1 = optimize_misreport(small_net, truth, 0, iters=8, inits=1, rng=Rng(7).child("mis"))
        _, u10 = optimize_misreport(small_net, truth, 0, iters=8, inits=10, rng=Rng(7).child("mis"))
        assert u10 >= u1 - 1e-12

    def test_best_at_least_truthful(self, small_net):
        truth = np.array([[0.9, 0.1], [0.5, 0.5]])
        out, _ = forward(small_net, truth)
        truthful_u = float(
            (out.allocation[0] * truth[0]).sum() - out.payments[0]
        )
        _, best = optimize_misreport(small_net, truth, 0, iters=5, inits=2, rng=Rng(1))
        assert best >= truthful_u - 1e-12

    def test_bad_bidder(self, small_net):
        with pytest.raises(IndexError):
            optimize_misreport(small_net, np.ones((2, 2)) * 0.5, 5)

    def test_regret_nonnegative_random_nets(self):
        cfg = TrainConfig.for_size(AuctionSize(2, 2), **TINY)
        for seed in range(4):
            net = MechanismNet.initialize(_tiny_arch(), Rng(seed).child("n"))
            profile = sample_bids(UNIFORM_UNIT, AuctionSize(2, 2), 1, Rng(seed).child("p"))[0]
            rgt = regret_of(net, profile, cfg, rng=Rng(seed).child("r"))
            assert np.all(rgt >= 0)


class TestTrain:
    def test_smoke_run_and_report(self):
        size = AuctionSize(2, 2)
        cfg = TrainConfig.for_size(size, **TINY)
        net, report = train(_tiny_arch(size), UNIFORM_UNIT, cfg)
        assert len(report.rows) == cfg.epochs
        rhos = [r.rho for r in report.rows]
        assert all(a <= b for a, b in zip(rhos, rhos[1:]))  # monotone nondecreasing
        assert np.all(np.isfinite(net.params))
        assert all(np.isfinite(r.revenue) and np.isfinite(r.regret) for r in report.rows)

    def test_bit_reproducible(self):
        size = AuctionSize(2, 2)
        cfg = TrainConfig.for_size(size, seed=11, **TINY)
        net1, _ = train(_tiny_arch(size), UNIFORM_UNIT, cfg)
        net2, _ = train(_tiny_arch(size), UNIFORM_UNIT, cfg)
        assert np.array_equal(net1.params, net2.params)

    def test_seed_changes_result(self):
        size = AuctionSize(2, 2)
        net1, _ = train(_tiny_arch(size), UNIFORM_UNIT, TrainConfig.for_size(size, seed=1, **TINY))
        net2, _ = train(_tiny_arch(size), UNIFORM_UNIT, TrainConfig.for_size(size, seed=2, **TINY))
        assert not np.array_equal(net1.params, net2.params)

    def test_user_data_accepted(self):
        size = AuctionSize(2, 2)
        cfg = TrainConfig.for_size(size, **TINY)
        data = sample_bids(UNIFORM_UNIT, size, cfg.n_train_samples, Rng(5).child("d"))
        net, _ = train(_tiny_arch(size), UNIFORM_UNIT, cfg, data=data)
        assert np.all(np.isfinite(net.params))
        with pytest.raises(ValueError, match="training data"):
            train(_tiny_arch(size), UNIFORM_UNIT, cfg, data=data[:10])

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_diagnostic(self):
        # outputs are bounded by construction, so the loss only goes
        # non-finite once activations genuinely overflow
        size = AuctionSize(2, 2)
        cfg = TrainConfig.for_size(size, learning_rate=1e120, **TINY)
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train(_tiny_arch(size), UNIFORM_UNIT, cfg)


class TestEvaluate:
    def test_sigma_zero_matches_direct_computation(self, small_net):
        cfg = TrainConfig.for_size(AuctionSize(2, 2), **TINY)
        res = evaluate(small_net, UNIFORM_UNIT, n_profiles=64, config=cfg, rng=Rng(3).child("e"))
        profiles = sample_bids(UNIFORM_UNIT, AuctionSize(2, 2), 64, Rng(3).child("e").child("profiles"))
        direct = np.mean([forward(small_net, p)[0].payments.sum() for p in profiles])
        assert res.revenue == pytest.approx(direct, abs=1e-12)

    def test_untrained_net_bounds(self, small_net):
        cfg = TrainConfig.for_size(AuctionSize(2, 2), **TINY)
        res = evaluate(small_net, UNIFORM_UNIT, n_profiles=128, config=cfg)
        assert 0.0 <= res.revenue <= 4.0  # n * m bound from IR and bounded support
        assert np.isfinite(res.regret) and res.regret >= 0

    def test_noisy_evaluation_runs(self, small_net):
        cfg = TrainConfig.for_size(AuctionSize(2, 2), **TINY)
        res = evaluate(
            small_net,
            UNIFORM_UNIT,
            NoiseSpec(0.5, Rng(1).child("n")),
            n_profiles=32,
            n_noise_samples=16,
            config=cfg,
        )
        assert res.sigma == 0.5
        assert 0.0 <= res.revenue <= 4.0
        assert res.regret >= 0

    def test_deterministic_given_rng(self, small_net):
        cfg = TrainConfig.for_size(AuctionSize(2, 2), **TINY)
        r1 = evaluate(small_net, UNIFORM_UNIT, n_profiles=32, config=cfg, rng=Rng(9).child("e"))
        r2 = evaluate(small_net, UNIFORM_UNIT, n_profiles=32, config=cfg, rng=Rng(9).child("e"))
        assert r1 == r2
