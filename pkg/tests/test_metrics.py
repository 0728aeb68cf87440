import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nauction.core import AuctionSize, Rng, UNIFORM_UNIT
from nauction.inversion import AttackConfig, ParticipatingBidder
from nauction.mechanism import MechanismNet, NetArchitecture, NoiseSpec
from nauction.metrics import PrivacyReport, mae, privacy_sweep_cell, recovery_rate
from nauction.training import TrainConfig, evaluate


class TestRecoveryRate:
    def test_exact_recovery(self):
        t = Rng(1).uniform(size=(5, 2, 2))
        rate, se = recovery_rate(t, t.copy())
        assert rate == 100.0 and se == 0.0

    def test_boundary_inclusive(self):
        # exactly-representable offset: |0.5 - 0.25| == 0.25 with no rounding
        t = np.full((3, 2, 2), 0.25)
        r = t + 0.25
        rate, _ = recovery_rate(t, r, tolerance=0.25)
        assert rate == 100.0

    def test_monotone_in_tolerance(self):
        rng = Rng(2)
        t = rng.uniform(size=(50, 2, 2))
        r = rng.uniform(size=(50, 2, 2))
        rates = [recovery_rate(t, r, tol)[0] for tol in (0.01, 0.05, 0.2, 0.5)]
        assert all(a <= b for a, b in zip(rates, rates[1:]))

    def test_permutation_invariance(self):
        rng = Rng(3)
        t = rng.uniform(size=(20, 2, 2))
        r = rng.uniform(size=(20, 2, 2))
        perm = Rng(4).permutation(20)
        assert recovery_rate(t, r)[0] == recovery_rate(t[perm], r[perm])[0]

    def test_exclude_rows(self):
        t = np.zeros((4, 2, 3))
        r = t.copy()
        r[:, 1, :] = 1.0  # ruin the excluded row only
        rate, _ = recovery_rate(t, r, exclude_rows=[1])
        assert rate == 100.0
        rate_all, _ = recovery_rate(t, r)
        assert rate_all == 50.0

    def test_single_outcome_se_is_none(self):
        t = Rng(5).uniform(size=(1, 2, 2))
        rate, se = recovery_rate(t, t)
        assert rate == 100.0 and se is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="misaligned"):
            recovery_rate(np.zeros((3, 2, 2)), np.zeros((4, 2, 2)))

    def test_validation(self):
        with pytest.raises(ValueError):
            recovery_rate(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), tolerance=0)
        with pytest.raises(IndexError):
            recovery_rate(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), exclude_rows=[5])

    def test_random_guess_baseline_small(self):
        rng = Rng(6)
        t = rng.uniform(size=(100, 1, 1000))
        g = rng.uniform(size=(100, 1, 1000))
        rate, _ = recovery_rate(t, g)
        assert rate == pytest.approx(3.96, abs=0.3)


class TestMae:
    def test_zero_at_truth(self):
        t = Rng(7).uniform(size=(3, 2, 2))
        err, se = mae(t, t.copy())
        assert err == 0.0 and se == 0.0

    def test_bounded_on_unit_box(self):
        rng = Rng(8)
        t = rng.uniform(size=(30, 2, 2))
        r = rng.uniform(size=(30, 2, 2))
        err, _ = mae(t, r)
        assert 0.0 <= err <= 1.0

    def test_random_baseline_small(self):
        rng = Rng(9)
        t = rng.uniform(size=(100, 1, 1000))
        g = rng.uniform(size=(100, 1, 1000))
        err, _ = mae(t, g)
        assert err == pytest.approx(1 / 3, abs=0.01)

    @given(shift=st.floats(0.01, 0.5))
    @settings(max_examples=20, deadline=None)
    def test_constant_shift(self, shift):
        t = np.full((2, 2, 2), 0.4)
        err, _ = mae(t, t + shift)
        assert err == pytest.approx(shift, abs=1e-12)


class TestPrivacySweepCell:
    @pytest.fixture
    def net(self):
        arch = NetArchitecture(AuctionSize(2, 2), hidden_layers=2, hidden_width=12)
        return MechanismNet.initialize(arch, Rng(31).child("net"))

    def _cell(self, net, sigma, rng_seed=41):
        rng = Rng(rng_seed)
        noise = NoiseSpec(sigma, rng.child("defense")) if sigma > 0 else NoiseSpec(0.0)
        cfg = TrainConfig.for_size(AuctionSize(2, 2), misreport_iters=4, misreport_inits=2)
        return privacy_sweep_cell(
            net,
            UNIFORM_UNIT,
            noise,
            attack_cfg=AttackConfig(iterations=60),
            n_outcomes=6,
            eval_cfg=cfg,
            n_eval_profiles=40,
            n_noise_samples=8,
            rng=rng.child("cell"),
        )

    def test_report_fields(self, net):
        rep = self._cell(net, 0.0)
        assert rep.sigma == 0.0 and rep.n_outcomes == 6
        assert 0 <= rep.recovery_rate <= 100
        assert rep.mae >= 0
        assert rep.recovery_rate_se is not None
        assert np.isfinite(rep.revenue) and np.isfinite(rep.regret)

    def test_sigma_zero_regret_matches_evaluate_exactly(self, net):
        rep = self._cell(net, 0.0)
        cfg = TrainConfig.for_size(AuctionSize(2, 2), misreport_iters=4, misreport_inits=2)
        ev = evaluate(
            net,
            UNIFORM_UNIT,
            n_profiles=40,
            n_noise_samples=8,
            config=cfg,
            rng=Rng(41).child("cell").child("eval"),
        )
        assert rep.regret == ev.regret
        assert rep.revenue == ev.revenue

    def test_participating_threat_excludes_own_row(self, net):
        rng = Rng(43)
        cfg = TrainConfig.for_size(AuctionSize(2, 2), misreport_iters=4, misreport_inits=2)
        rep = privacy_sweep_cell(
            net,
            UNIFORM_UNIT,
            NoiseSpec(0.0),
            threat=ParticipatingBidder(0),
            attack_cfg=AttackConfig(iterations=30),
            n_outcomes=4,
            eval_cfg=cfg,
            n_eval_profiles=20,
            rng=rng,
        )
        assert 0 <= rep.recovery_rate <= 100

    def test_csv_round(self, net, tmp_path):
        rep = self._cell(net, 0.0)
        path = tmp_path / "cell.csv"
        PrivacyReport.write_csv(path, [rep])
        lines = path.read_text().strip().splitlines()
        assert lines[0] == ",".join(PrivacyReport.CSV_FIELDS)
        assert len(lines) == 2

    def test_single_outcome_absent_se_marker(self, net, tmp_path):
        rng = Rng(44)
        cfg = TrainConfig.for_size(AuctionSize(2, 2), misreport_iters=2, misreport_inits=2)
        rep = privacy_sweep_cell(
            net,
            UNIFORM_UNIT,
            attack_cfg=AttackConfig(iterations=20),
            n_outcomes=1,
            eval_cfg=cfg,
            n_eval_profiles=10,
            rng=rng,
        )
        assert rep.recovery_rate_se is None and rep.mae_se is None
        path = tmp_path / "one.csv"
        PrivacyReport.write_csv(path, [rep])
        row = path.read_text().strip().splitlines()[1].split(",")
        assert row[3] == "" and row[5] == ""  # absent, not zero
