"""Domain types, valuation sampling, and deterministic randomness.

Everything downstream (mechanism, training, attacks, baselines) builds on the
types here: auction sizes, bid matrices, outcomes, and a seeded random-stream
tree so that whole experiments are reproducible from a single integer.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "AuctionSize",
    "ValuationKind",
    "ValuationDistribution",
    "UNIFORM_UNIT",
    "AuctionOutcome",
    "Rng",
    "sample_bids",
    "welfare",
    "utility",
]


@dataclass(frozen=True)
class AuctionSize:
    """Number of bidders and items in an auction."""

    n_bidders: int
    n_items: int

    def __post_init__(self):
        if self.n_bidders < 1:
            raise ValueError(f"n_bidders must be >= 1, got {self.n_bidders}")
        if self.n_items < 1:
            raise ValueError(f"n_items must be >= 1, got {self.n_items}")

    @property
    def n_entries(self) -> int:
        """Bid-matrix entries: bidders times items."""
        return self.n_bidders * self.n_items

    def __str__(self) -> str:
        return f"{self.n_bidders}x{self.n_items}"


class ValuationKind(Enum):
    UNIFORM_UNIT = "uniform_unit"


@dataclass(frozen=True)
class ValuationDistribution:
    """Per-entry i.i.d. valuation prior.

    Only the uniform-unit prior is supported: every (bidder, item) value is an
    independent draw from U[low, high] with [low, high] = [0, 1].
    """

    kind: ValuationKind = ValuationKind.UNIFORM_UNIT
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind is ValuationKind.UNIFORM_UNIT and (self.low, self.high) != (0.0, 1.0):
            raise ValueError("uniform_unit support is fixed at [0, 1]")


UNIFORM_UNIT = ValuationDistribution()


@dataclass
class AuctionOutcome:
    """The public result of one auction: who got what, and who paid what.

    ``allocation`` has shape (n_bidders + 1, n_items); the final row is the
    ghost bidder holding any unallocated portion, so each item column sums to
    one. ``payments`` has one nonnegative entry per real bidder.
    """

    allocation: np.ndarray
    payments: np.ndarray

    @property
    def n_bidders(self) -> int:
        return self.allocation.shape[0] - 1

    @property
    def n_items(self) -> int:
        return self.allocation.shape[1]

    def bidder_allocation(self) -> np.ndarray:
        """Allocation rows for the real bidders (ghost row dropped)."""
        return self.allocation[:-1]

    def validate(self, bids: np.ndarray | None = None, tol: float = 1e-6) -> None:
        """Check simplex, nonnegativity, and (given bids) ex post IR."""
        if self.allocation.ndim != 2 or self.allocation.shape[0] < 2:
            raise ValueError("allocation must be (n_bidders + 1) x n_items")
        if self.payments.shape != (self.n_bidders,):
            raise ValueError(
                f"payments must have length {self.n_bidders}, got {self.payments.shape}"
            )
        if not np.all(np.isfinite(self.allocation)) or not np.all(np.isfinite(self.payments)):
            raise ValueError("outcome contains non-finite entries")
        if self.allocation.min() < -tol or self.allocation.max() > 1 + tol:
            raise ValueError("allocation entries must lie in [0, 1]")
        col_sums = self.allocation.sum(axis=0)
        if np.max(np.abs(col_sums - 1.0)) > tol:
            raise ValueError(f"item columns must sum to 1, max deviation {np.max(np.abs(col_sums - 1.0)):g}")
        if self.payments.min() < -tol:
            raise ValueError("payments must be nonnegative")
        if bids is not None:
            for i in range(self.n_bidders):
                w = welfare(bids, self.allocation, i)
                if self.payments[i] > w + tol:
                    raise ValueError(
                        f"bidder {i} pays {self.payments[i]:g} > welfare {w:g} (IR violation)"
                    )


def _philox_key(seed: int, path: tuple[str, ...]) -> int:
    """128-bit Philox key from a seed and a child-label path, via SHA-256.

    Labels are hashed rather than Python-hashed so streams are stable across
    processes and platforms regardless of PYTHONHASHSEED.
    """
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(16, "little", signed=True))
    for label in path:
        h.update(b"\x00")
        h.update(label.encode("utf-8"))
    return int.from_bytes(h.digest()[:16], "little")


@dataclass
class Rng:
    """Deterministic random stream with labeled child-stream derivation.

    Wraps numpy's Philox counter-based generator. The stream is a pure
    function of (seed, path): the same seed yields the same draws on every
    platform, and ``child(label)`` derives an independent stream whose key is
    SHA-256(seed, path + label). Instances are stateful and must not be shared
    across threads; derive a child per worker instead.
    """

    seed: int
    path: tuple[str, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._gen = np.random.Generator(np.random.Philox(key=_philox_key(self.seed, self.path)))

    def child(self, label) -> "Rng":
        """A fresh, statistically independent stream labeled by ``label``."""
        return Rng(self.seed, self.path + (str(label),))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def normal(self, scale=1.0, size=None) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def sample_bids(
    dist: ValuationDistribution, size: AuctionSize, count: int, rng: Rng
) -> np.ndarray:
    """Draw ``count`` i.i.d. bid profiles, shape (count, n_bidders, n_items)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return rng.uniform(dist.low, dist.high, size=(count, size.n_bidders, size.n_items))


def welfare(bids: np.ndarray, allocation: np.ndarray, bidder: int) -> float:
    """Value bidder ``bidder`` derives from ``allocation`` under additive valuations.

    ``allocation`` may include the ghost row; only the bidder's own row is read.
    """
    bids = np.asarray(bids, dtype=np.float64)
    n = bids.shape[0]
    if not 0 <= bidder < n:
        raise IndexError(f"bidder {bidder} out of range for {n} bidders")
    return float(np.dot(allocation[bidder], bids[bidder]))


def utility(bids_true: np.ndarray, outcome: AuctionOutcome, bidder: int) -> float:
    """Quasi-linear utility: welfare at the true values minus the payment."""
    n = outcome.n_bidders
    if not 0 <= bidder < n:
        raise IndexError(f"bidder {bidder} out of range for {n} bidders")
    return welfare(bids_true, outcome.allocation, bidder) - float(outcome.payments[bidder])
