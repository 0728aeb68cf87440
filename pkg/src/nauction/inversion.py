"""Gradient-based model inversion: recover bids from published outcomes.

The adversary knows the mechanism's weights (standard in mechanism design:
participants know the rules) and observes one auction's allocation and
payments. It minimizes

    || g(x) - g_obs ||_2  +  || p(x) - p_obs ||_2

over candidate bid matrices x with projected Adam, where the allocation term
runs over the real bidder rows (the ghost row is determined by them). Two
threat models: an outside observer reconstructs every row; a participating
bidder knows its own row, which stays frozen and is excluded from recovery
statistics. Two initialization regimes: a draw from the valuation prior
(projection box [0,1]), or all zeros with only positivity enforced (box
capped far outside the support to prevent numeric escape).

Against a noise-defended mechanism the adversary still optimizes the
noise-free network: it observes the single published noisy outcome and cannot
sample the defender's noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .core import AuctionOutcome, Rng, ValuationDistribution, UNIFORM_UNIT
from .mechanism import MechanismNet, NoiseSpec, forward, _Workspace
from .validation import check_bid_matrix

__all__ = [
    "OutsideObserver",
    "ParticipatingBidder",
    "ThreatModel",
    "SamplePrior",
    "Zeros",
    "InitStrategy",
    "AttackConfig",
    "InversionResult",
    "attack_objective",
    "invert",
    "invert_batch",
    "attack_noisy",
]


@dataclass(frozen=True)
class OutsideObserver:
    """No bid knowledge; every row is reconstructed."""


@dataclass(frozen=True, eq=False)
class ParticipatingBidder:
    """The adversary bids too: its own row is known and held fixed.

    ``known_row`` may be None when a batch driver supplies per-outcome rows
    via ``invert_batch(known_rows=...)``.
    """

    bidder: int
    known_row: np.ndarray | None = None

    def __post_init__(self):
        if self.known_row is not None:
            object.__setattr__(self, "known_row", np.asarray(self.known_row, dtype=np.float64))
            if self.known_row.ndim != 1:
                raise ValueError("known_row must be a single bid row")
        if self.bidder < 0:
            raise ValueError("bidder index must be nonnegative")


ThreatModel = Union[OutsideObserver, ParticipatingBidder]


@dataclass(frozen=True)
class SamplePrior:
    """Initialize from the valuation prior; project onto its support."""

    dist: ValuationDistribution = UNIFORM_UNIT


@dataclass(frozen=True)
class Zeros:
    """No distributional knowledge: start at zero, enforce nonnegativity only."""


InitStrategy = Union[SamplePrior, Zeros]


@dataclass(frozen=True)
class AttackConfig:
    """Attack optimizer settings.

    ``zeros_cap`` bounds the projection box above under the Zeros strategy;
    it sits far outside the U[0,1] support and only prevents numeric escape.
    """

    learning_rate: float = 0.002
    iterations: int = 50_000
    seed: int = 0
    zeros_cap: float = 10.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.zeros_cap <= 1:
            raise ValueError("zeros_cap must exceed the valuation support")


@dataclass
class InversionResult:
    """Best iterate of one attack: the recovered bid matrix, its objective
    value, and how many gradient iterations ran."""

    recovered: np.ndarray
    objective: float
    iterations_used: int


def _observed_arrays(net: MechanismNet, outcomes) -> tuple[np.ndarray, np.ndarray]:
    size = net.arch.size
    n, m = size.n_bidders, size.n_items
    allocs = np.empty((len(outcomes), m, n))
    pays = np.empty((len(outcomes), n))
    for k, out in enumerate(outcomes):
        if out.allocation.shape != (n + 1, m) or out.payments.shape != (n,):
            raise ValueError(f"outcome {k} does not match a {size} mechanism")
        allocs[k] = out.allocation[:n].T  # item-major bidder rows; ghost row unused
        pays[k] = out.payments
    return allocs, pays


def attack_objective(net: MechanismNet, candidate: np.ndarray, observed: AuctionOutcome) -> float:
    """Distance between the noise-free outcome at ``candidate`` and the
    observed outcome: Frobenius norm over bidder allocation rows plus
    Euclidean norm over payments."""
    size = net.arch.size
    cand = check_bid_matrix(candidate, size)
    g_obs, p_obs = _observed_arrays(net, [observed])
    out, _ = forward(net, cand)
    da = out.allocation[: size.n_bidders].T[None] - g_obs
    dp = out.payments[None] - p_obs
    return float(np.sqrt((da**2).sum()) + np.sqrt((dp**2).sum()))


def _initial_guesses(
    init: InitStrategy, count: int, n: int, m: int, rng: Rng
) -> tuple[np.ndarray, float, float]:
    if isinstance(init, SamplePrior):
        x = rng.uniform(init.dist.low, init.dist.high, size=(count, n, m))
        return x, init.dist.low, init.dist.high
    if isinstance(init, Zeros):
        return np.zeros((count, n, m)), 0.0, np.inf
    raise TypeError(f"unknown init strategy {init!r}")


def invert_batch(
    net: MechanismNet,
    outcomes,
    threat: ThreatModel = OutsideObserver(),
    init: InitStrategy = SamplePrior(),
    cfg: AttackConfig = AttackConfig(),
    rng: Rng | None = None,
    known_rows: np.ndarray | None = None,
) -> list[InversionResult]:
    """Run independent attacks against many observed outcomes as one batch.

    Attacks share the iteration schedule but are numerically independent: the
    objective is separable across outcomes and Adam is elementwise. Each
    attack returns its best iterate. For a ParticipatingBidder threat,
    ``known_rows`` (N, m) supplies a per-outcome known row when the threat
    itself carries none.
    """
    size = net.arch.size
    n, m = size.n_bidders, size.n_items
    N = len(outcomes)
    if N == 0:
        return []
    if not np.all(np.isfinite(net.params)):
        raise ValueError("mechanism parameters contain non-finite values")
    rng = rng or Rng(cfg.seed)
    g_obs, p_obs = _observed_arrays(net, outcomes)

    x3, lo, hi = _initial_guesses(init, N, n, m, rng)
    hi = min(hi, cfg.zeros_cap) if isinstance(init, Zeros) else hi
    frozen_cols = None
    pinned = None
    if isinstance(threat, ParticipatingBidder):
        if not 0 <= threat.bidder < n:
            raise ValueError(f"adversary bidder {threat.bidder} out of range")
        if threat.known_row is not None:
            pinned = np.broadcast_to(threat.known_row, (N, m))
        elif known_rows is not None:
            pinned = np.asarray(known_rows, dtype=np.float64)
        else:
            raise ValueError("ParticipatingBidder needs known_row or known_rows")
        if pinned.shape != (N, m):
            raise ValueError(f"known rows must have shape ({N}, {m})")
        x3[:, threat.bidder, :] = pinned
        frozen_cols = slice(threat.bidder * m, (threat.bidder + 1) * m)

    x = x3.reshape(N, n * m)
    ws = _Workspace(net.arch, N)
    ws.set_weights(net.layers())

    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
    mom = np.zeros_like(x)
    vel = np.zeros_like(x)
    best_obj = np.full(N, np.inf)
    best_x = x.copy()
    d_alloc = np.zeros((N, m, n + 1))
    iterations_used = 0

    for t in range(cfg.iterations + 1):
        ws.forward(x)
        ra = ws.alloc[:N, :, :n] - g_obs
        rp = ws.pay[:N] - p_obs
        anorm = np.sqrt((ra * ra).sum(axis=(1, 2)))
        pnorm = np.sqrt((rp * rp).sum(axis=1))
        obj = anorm + pnorm
        better = obj < best_obj
        best_obj[better] = obj[better]
        best_x[better] = x[better]
        if t == cfg.iterations or not best_obj.any():
            iterations_used = t
            break

        # subgradient 0 at an exact match: leave the normalized residual at 0
        inv_a = np.divide(1.0, anorm, out=np.zeros_like(anorm), where=anorm > 0)
        inv_p = np.divide(1.0, pnorm, out=np.zeros_like(pnorm), where=pnorm > 0)
        d_alloc[:, :, :n] = ra * inv_a[:, None, None]
        d_pay = rp * inv_p[:, None]
        _, dx = ws.backward(d_alloc, d_pay, want_params=False)
        if frozen_cols is not None:
            dx[:, frozen_cols] = 0.0

        mom = beta1 * mom + (1 - beta1) * dx
        vel = beta2 * vel + (1 - beta2) * dx * dx
        mhat = mom / (1 - beta1 ** (t + 1))
        vhat = vel / (1 - beta2 ** (t + 1))
        x = np.clip(x - cfg.learning_rate * mhat / (np.sqrt(vhat) + eps_adam), lo, hi)
        if frozen_cols is not None:
            x[:, frozen_cols] = pinned
        iterations_used = t + 1

    return [
        InversionResult(best_x[k].reshape(n, m).copy(), float(best_obj[k]), iterations_used)
        for k in range(N)
    ]


def invert(
    net: MechanismNet,
    observed: AuctionOutcome,
    threat: ThreatModel = OutsideObserver(),
    init: InitStrategy = SamplePrior(),
    cfg: AttackConfig = AttackConfig(),
    rng: Rng | None = None,
) -> InversionResult:
    """Attack one observed outcome; see ``invert_batch``."""
    return invert_batch(net, [observed], threat, init, cfg, rng)[0]


def attack_noisy(
    net: MechanismNet,
    bids_true: np.ndarray,
    noise: NoiseSpec,
    threat: ThreatModel = OutsideObserver(),
    init: InitStrategy = SamplePrior(),
    cfg: AttackConfig = AttackConfig(),
    rng: Rng | None = None,
) -> InversionResult:
    """Publish one (possibly noisy) realized outcome for ``bids_true`` and
    attack it. The attack itself always runs the noise-free mechanism; the
    defender's realized noise is not available to the adversary."""
    observed, _ = forward(net, bids_true, noise)
    return invert(net, observed, threat, init, cfg, rng)
