"""Privacy and performance metrics: recovery rate, reconstruction error,
revenue, and regret, bundled per (mechanism, attack, noise level) cell.

Recovery rate is the percentage of bid entries reconstructed within a
tolerance of the truth (0.02 by default, comparison inclusive); MAE is the
mean absolute reconstruction error. Both report standard errors across
per-outcome means rather than per-entry variance, since entries within one
outcome are correlated through the shared attack. A participating adversary's
own rows are excluded from both statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import Rng, ValuationDistribution, UNIFORM_UNIT, sample_bids
from .inversion import (
    AttackConfig,
    InitStrategy,
    OutsideObserver,
    ParticipatingBidder,
    SamplePrior,
    ThreatModel,
    invert_batch,
)
from .mechanism import MechanismNet, NoiseSpec, NO_NOISE, _forward_batch
from .core import AuctionOutcome
from .training import TrainConfig, evaluate

__all__ = [
    "PrivacyReport",
    "recovery_rate",
    "mae",
    "attack_outcomes",
    "privacy_sweep_cell",
    "DEFAULT_TOLERANCE",
]

DEFAULT_TOLERANCE = 0.02


@dataclass
class PrivacyReport:
    """All the numbers for one (mechanism, attack, sigma) cell.

    Standard errors are None when a single outcome makes them undefined.
    """

    sigma: float
    n_outcomes: int
    recovery_rate: float
    recovery_rate_se: float | None
    mae: float
    mae_se: float | None
    revenue: float
    revenue_se: float
    regret: float
    regret_se: float

    CSV_FIELDS = (
        "sigma",
        "n_outcomes",
        "recovery_rate",
        "recovery_rate_se",
        "mae",
        "mae_se",
        "revenue",
        "revenue_se",
        "regret",
        "regret_se",
    )

    def csv_row(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            return f"{v:.6f}" if isinstance(v, float) else str(v)

        return [fmt(getattr(self, f)) for f in self.CSV_FIELDS]

    @classmethod
    def write_csv(cls, path, reports: "list[PrivacyReport]") -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(cls.CSV_FIELDS)
            for r in reports:
                w.writerow(r.csv_row())


def _aligned(true_bids, recovered) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(true_bids, dtype=np.float64)
    r = np.asarray(recovered, dtype=np.float64)
    if t.ndim == 2:
        t = t[None]
    if r.ndim == 2:
        r = r[None]
    if t.shape != r.shape or t.ndim != 3:
        raise ValueError(f"true/recovered sequences misaligned: {t.shape} vs {r.shape}")
    return t, r


def _row_mask(shape, exclude_rows) -> np.ndarray:
    mask = np.ones((1, shape[1], 1), dtype=bool)
    if exclude_rows:
        for i in exclude_rows:
            if not 0 <= i < shape[1]:
                raise IndexError(f"excluded row {i} out of range")
            mask[0, i, 0] = False
        if not mask.any():
            raise ValueError("all rows excluded")
    return np.broadcast_to(mask, shape)


def _outcome_stats(per_outcome: np.ndarray) -> tuple[float, float | None]:
    mean = float(per_outcome.mean())
    if per_outcome.size < 2:
        return mean, None
    return mean, float(per_outcome.std(ddof=1) / np.sqrt(per_outcome.size))


def recovery_rate(
    true_bids,
    recovered,
    tolerance: float = DEFAULT_TOLERANCE,
    exclude_rows: list[int] | None = None,
) -> tuple[float, float | None]:
    """Percentage of bid entries with |true - recovered| <= tolerance, with
    standard error across outcome-level means."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    t, r = _aligned(true_bids, recovered)
    mask = _row_mask(t.shape, exclude_rows)
    hits = np.abs(t - r) <= tolerance
    per_outcome = hits.mean(axis=(1, 2), where=mask) * 100.0
    return _outcome_stats(per_outcome)


def mae(
    true_bids,
    recovered,
    exclude_rows: list[int] | None = None,
) -> tuple[float, float | None]:
    """Mean absolute reconstruction error, standard error across outcomes."""
    t, r = _aligned(true_bids, recovered)
    mask = _row_mask(t.shape, exclude_rows)
    per_outcome = np.abs(t - r).mean(axis=(1, 2), where=mask)
    return _outcome_stats(per_outcome)


def attack_outcomes(
    net: MechanismNet,
    dist: ValuationDistribution = UNIFORM_UNIT,
    noise: NoiseSpec = NO_NOISE,
    threat: ThreatModel = OutsideObserver(),
    init: InitStrategy = SamplePrior(),
    attack_cfg: AttackConfig = AttackConfig(),
    n_outcomes: int = 1000,
    rng: Rng | None = None,
):
    """Simulate ``n_outcomes`` auctions (one realized outcome each, noisy when
    sigma > 0) and attack every outcome.

    Returns (true profiles (N,n,m), inversion results, excluded row list for
    metrics; None when the adversary is an outside observer).
    """
    if n_outcomes < 1:
        raise ValueError("n_outcomes must be >= 1")
    rng = rng or Rng(attack_cfg.seed)
    size = net.arch.size
    n, m = size.n_bidders, size.n_items
    sigma = noise.sigma

    profiles = sample_bids(dist, size, n_outcomes, rng.child("attack-profiles"))
    eps = None
    if sigma > 0:
        eps = rng.child("defense-noise").normal(scale=sigma, size=(n_outcomes, m, n + 1))
    tr = _forward_batch(net.layers(), size, profiles.reshape(n_outcomes, -1), eps)
    outcomes = [
        AuctionOutcome(allocation=tr.alloc[k].T.copy(), payments=tr.pay[k].copy())
        for k in range(n_outcomes)
    ]

    known_rows = None
    exclude = None
    if isinstance(threat, ParticipatingBidder):
        known_rows = profiles[:, threat.bidder, :]
        exclude = [threat.bidder]

    results = invert_batch(
        net, outcomes, threat, init, attack_cfg, rng.child("attack"), known_rows=known_rows
    )
    return profiles, results, exclude


def privacy_sweep_cell(
    net: MechanismNet,
    dist: ValuationDistribution = UNIFORM_UNIT,
    noise: NoiseSpec = NO_NOISE,
    threat: ThreatModel = OutsideObserver(),
    init: InitStrategy = SamplePrior(),
    attack_cfg: AttackConfig = AttackConfig(),
    n_outcomes: int = 1000,
    eval_cfg: TrainConfig | None = None,
    n_eval_profiles: int = 10_000,
    n_noise_samples: int = 100,
    tolerance: float = DEFAULT_TOLERANCE,
    rng: Rng | None = None,
) -> PrivacyReport:
    """Attack ``n_outcomes`` fresh auctions at one noise level and bundle
    privacy metrics with the mechanism's revenue/regret at that level.

    Each auction publishes a single realized (noisy) outcome; the adversary
    inverts the noise-free mechanism against it. Revenue and regret come from
    ``training.evaluate`` on ``n_eval_profiles`` held-out profiles using
    expected outcomes with ``n_noise_samples`` draws.
    """
    rng = rng or Rng(attack_cfg.seed)
    sigma = noise.sigma
    profiles, results, exclude = attack_outcomes(
        net, dist, noise, threat, init, attack_cfg, n_outcomes, rng
    )
    recovered = np.stack([res.recovered for res in results])
    rr, rr_se = recovery_rate(profiles, recovered, tolerance, exclude_rows=exclude)
    err, err_se = mae(profiles, recovered, exclude_rows=exclude)

    ev = evaluate(
        net,
        dist,
        NoiseSpec(sigma, rng.child("eval-noise")) if sigma > 0 else NO_NOISE,
        n_profiles=n_eval_profiles,
        n_noise_samples=n_noise_samples,
        config=eval_cfg,
        rng=rng.child("eval"),
    )
    return PrivacyReport(
        sigma=sigma,
        n_outcomes=n_outcomes,
        recovery_rate=rr,
        recovery_rate_se=rr_se,
        mae=err,
        mae_se=err_se,
        revenue=ev.revenue,
        revenue_se=ev.revenue_se,
        regret=ev.regret,
        regret_se=ev.regret_se,
    )
