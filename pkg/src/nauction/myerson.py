"""Item-wise second-price auctions with reserve, and the analytic guessing
adversaries that bound how much bidder information those auctions leak.

For i.i.d. U[0,1] valuations the revenue-optimal single-item auction is a
second-price auction with reserve 0.5; selling m items through m independent
such auctions is the standard baseline the learned mechanisms are compared
against, both on revenue and on privacy.

The adversaries observe each item's published result (winner and clearing
price) and guess the bid matrix. Three per-item regimes matter:

  (I)   no sale            -- every bid is below the reserve;
  (II)  price == reserve   -- exactly one bid clears the reserve;
  (III) price > reserve    -- the price is exactly the second-highest bid.

The naive adversary guesses every bid at the item's price (random draws when
nothing sold). The intelligent adversary additionally conditions on the case:
in (I) it draws guesses from U[0, r]; in (II) it draws the winner from U[r, 1]
and the losers from U[0, r]. A participating bidder knows its own row, and
when the price equals its own bid it also knows it set the clearing price, so
every other non-winner lies below the price.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import AuctionOutcome, AuctionSize, Rng, ValuationDistribution, UNIFORM_UNIT
from .validation import check_bid_matrix

__all__ = [
    "MyersonConfig",
    "Naive",
    "Intelligent",
    "IntelligentWithOwnBid",
    "GuessStrategy",
    "MyersonOutcome",
    "run_auction",
    "expected_revenue",
    "guess_bids",
    "guess_accuracy",
    "naive_second_bid_recovery",
    "lemma_bound",
]


@dataclass(frozen=True)
class MyersonConfig:
    """Auction size and reserve price; ties break uniformly at random."""

    size: AuctionSize
    reserve: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.reserve <= 1.0:
            raise ValueError(f"reserve must lie in [0, 1], got {self.reserve}")


@dataclass(frozen=True)
class Naive:
    """Guess every bid at the item's payment; random draws when unsold."""


@dataclass(frozen=True)
class Intelligent:
    """Naive plus case conditioning for no-sale and reserve-priced items."""


@dataclass(frozen=True)
class IntelligentWithOwnBid:
    """Intelligent adversary who participates as ``bidder`` and knows that row."""

    bidder: int

    def __post_init__(self):
        if self.bidder < 0:
            raise ValueError("bidder index must be nonnegative")


GuessStrategy = Union[Naive, Intelligent, IntelligentWithOwnBid]


@dataclass
class MyersonOutcome(AuctionOutcome):
    """Auction outcome plus the per-item published results.

    ``item_prices[j]`` is item j's clearing price (0 when unsold) and
    ``item_winners[j]`` the winning bidder (-1 when unsold). Per-bidder
    payments cannot be split back into per-item prices once a bidder wins
    several items, and the guessing adversaries reason per item, so the
    item-level view every real item-wise auction publishes is carried along.
    """

    item_prices: np.ndarray = None
    item_winners: np.ndarray = None


def _validate_strategy(config: MyersonConfig, strategy: GuessStrategy) -> None:
    if not isinstance(strategy, (Naive, Intelligent, IntelligentWithOwnBid)):
        raise TypeError(f"unknown guessing strategy {strategy!r}")
    if config.size.n_bidders < 2:
        raise ValueError("guessing strategies need at least 2 bidders (second-price structure)")
    if isinstance(strategy, IntelligentWithOwnBid) and strategy.bidder >= config.size.n_bidders:
        raise ValueError(
            f"adversary bidder {strategy.bidder} out of range for {config.size.n_bidders} bidders"
        )


def run_auction(config: MyersonConfig, bids: np.ndarray, rng: Rng | None = None) -> MyersonOutcome:
    """Run m independent second-price auctions with reserve on one bid profile.

    Per item: no sale when the top bid is below the reserve (the ghost row
    keeps the item); otherwise the top bidder wins one unit and pays
    max(second-highest bid, reserve). Ties break uniformly at random.
    """
    size = config.size
    b = check_bid_matrix(bids, size)
    n, m = size.n_bidders, size.n_items
    r = config.reserve

    allocation = np.zeros((n + 1, m))
    payments = np.zeros(n)
    prices = np.zeros(m)
    winners = np.full(m, -1, dtype=int)
    for j in range(m):
        col = b[:, j]
        top = col.max()
        if top < r:
            allocation[n, j] = 1.0
            continue
        contenders = np.flatnonzero(col == top)
        if len(contenders) == 1:
            w = int(contenders[0])
        else:
            rng = rng or Rng(0).child("ties")
            w = int(contenders[rng.integers(0, len(contenders))])
        second = np.partition(col, -2)[-2] if n >= 2 else 0.0
        price = max(second, r)
        allocation[w, j] = 1.0
        payments[w] += price
        prices[j] = price
        winners[j] = w
    out = MyersonOutcome(
        allocation=allocation, payments=payments, item_prices=prices, item_winners=winners
    )
    out.validate(b)
    return out


def _item_results(bids: np.ndarray, r: float):
    """Vectorized per-item auction results for (S, n, m) bid tensors.

    Returns (sold (S,m) bool, price (S,m), winner (S,m) int, second (S,m)).
    Ties are measure-zero under continuous valuations; argmax order breaks them.
    """
    n = bids.shape[1]
    top = bids.max(axis=1)
    winner = bids.argmax(axis=1)
    if n >= 2:
        second = np.partition(bids, n - 2, axis=1)[:, n - 2, :]
    else:
        second = np.zeros_like(top)
    sold = top >= r
    price = np.where(sold, np.maximum(second, r), 0.0)
    return sold, price, winner, second


def expected_revenue(
    config: MyersonConfig,
    dist: ValuationDistribution = UNIFORM_UNIT,
    n_samples: int = 1_000_000,
    rng: Rng | None = None,
    chunk: int = 250_000,
) -> tuple[float, float]:
    """Monte-Carlo mean total payment and its standard error."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = rng or Rng(0)
    size = config.size
    total = np.empty(n_samples)
    for s in range(0, n_samples, chunk):
        c = min(chunk, n_samples - s)
        bids = rng.uniform(dist.low, dist.high, size=(c, size.n_bidders, size.n_items))
        _, price, _, _ = _item_results(bids, config.reserve)
        total[s : s + c] = price.sum(axis=1)
    se = float(total.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("nan")
    return float(total.mean()), se


def _guess_items(
    strategy: GuessStrategy,
    r: float,
    bids: np.ndarray,
    sold: np.ndarray,
    price: np.ndarray,
    winner: np.ndarray,
    rng: Rng,
) -> np.ndarray:
    """Vectorized guesses for (S, n, m) simulated auctions, one per bid entry."""
    S, n, m = bids.shape
    u = rng.uniform(size=(S, n, m))
    is_winner = np.arange(n)[None, :, None] == winner[:, None, :]
    sold_e = np.broadcast_to(sold[:, None, :], (S, n, m))
    price_e = np.broadcast_to(price[:, None, :], (S, n, m))

    if isinstance(strategy, Naive):
        return np.where(sold_e, price_e, u)

    # intelligent base: case I -> U[0,r]; case II -> winner U[r,1], losers U[0,r];
    # case III -> everyone at the price (the second-highest bid is hit exactly)
    at_reserve = sold_e & (price_e == r)
    above = sold_e & (price_e > r)
    guess = u * r
    guess = np.where(at_reserve & is_winner, r + u * (1.0 - r), guess)
    guess = np.where(above, price_e, guess)

    if isinstance(strategy, IntelligentWithOwnBid):
        a = strategy.bidder
        own = np.zeros((S, n, m), dtype=bool)
        own[:, a, :] = True
        guess = np.where(own, bids, guess)
        # Price setter: the payment equals the adversary's own bid, so exactly
        # one bid (the winner's) lies above it and every other non-winner at
        # or below it. With residual losers to pin down (n >= 3) the adversary
        # re-solves that residual auction: winner from U[p, 1], other
        # non-winners from U[0, p]. With two bidders there is no residual
        # loser and the public outcome already said the winner cleared p, so
        # the setter learns nothing beyond the intelligent guess.
        if n >= 3:
            set_price = above[:, a, :] & (price == bids[:, a, :])
            setter_e = np.broadcast_to(set_price[:, None, :], (S, n, m))
            guess = np.where(setter_e & ~is_winner & ~own, u * price_e, guess)
            guess = np.where(setter_e & is_winner, price_e + u * (1.0 - price_e), guess)
    return guess


def guess_bids(
    config: MyersonConfig,
    strategy: GuessStrategy,
    outcome: MyersonOutcome,
    own_bids: np.ndarray | None = None,
    rng: Rng | None = None,
) -> np.ndarray:
    """Reconstruct a full bid matrix from one published auction outcome.

    ``own_bids`` (the adversary's true row) is required exactly when the
    strategy is IntelligentWithOwnBid.
    """
    _validate_strategy(config, strategy)
    if not isinstance(outcome, MyersonOutcome) or outcome.item_prices is None:
        raise TypeError("guess_bids needs the per-item view of a MyersonOutcome")
    if isinstance(strategy, IntelligentWithOwnBid):
        if own_bids is None:
            raise ValueError("IntelligentWithOwnBid requires the adversary's own bid row")
    elif own_bids is not None:
        raise ValueError("own_bids is only meaningful for IntelligentWithOwnBid")
    rng = rng or Rng(0)
    size = config.size
    n, m = size.n_bidders, size.n_items

    # embed the single outcome as a one-sample simulation; the adversary's own
    # row stands in for the true bids where the strategy may read them
    bids = np.zeros((1, n, m))
    if isinstance(strategy, IntelligentWithOwnBid):
        own = np.asarray(own_bids, dtype=np.float64).reshape(m)
        bids[0, strategy.bidder, :] = own
    sold = (outcome.item_winners >= 0)[None, :]
    price = outcome.item_prices[None, :]
    winner = outcome.item_winners[None, :]
    return _guess_items(strategy, config.reserve, bids, sold, price, winner, rng)[0]


def guess_accuracy(
    config: MyersonConfig,
    strategy: GuessStrategy,
    dist: ValuationDistribution = UNIFORM_UNIT,
    n_samples: int = 1_000_000,
    tolerance: float = 0.02,
    rng: Rng | None = None,
    chunk: int = 200_000,
) -> tuple[float, float]:
    """Simulated recovery rate (percent of bid entries within ``tolerance``)
    and its standard error across auctions.

    For the participating adversary, its own row is excluded from the count:
    accuracy measures what it learns about the other bidders.
    """
    _validate_strategy(config, strategy)
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = rng or Rng(0)
    size = config.size
    n, m = size.n_bidders, size.n_items
    r = config.reserve

    counted = np.ones((1, n, 1), dtype=bool)
    if isinstance(strategy, IntelligentWithOwnBid):
        counted = counted.copy()
        counted[0, strategy.bidder, 0] = False

    per_sample = np.empty(n_samples)
    draw = rng.child("bids")
    guess_rng = rng.child("guess")
    for s in range(0, n_samples, chunk):
        c = min(chunk, n_samples - s)
        bids = draw.uniform(dist.low, dist.high, size=(c, n, m))
        sold, price, winner, _ = _item_results(bids, r)
        guess = _guess_items(strategy, r, bids, sold, price, winner, guess_rng)
        hit = np.abs(guess - bids) <= tolerance
        mask = np.broadcast_to(counted, (c, n, m))
        per_sample[s : s + c] = hit.mean(axis=(1, 2), where=mask)
    pct = float(per_sample.mean() * 100.0)
    se = float(per_sample.std(ddof=1) / np.sqrt(n_samples) * 100.0) if n_samples > 1 else float("nan")
    return pct, se


def naive_second_bid_recovery(
    config: MyersonConfig,
    dist: ValuationDistribution = UNIFORM_UNIT,
    n_samples: int = 1_000_000,
    rng: Rng | None = None,
    chunk: int = 250_000,
) -> float:
    """Fraction of simulated items whose second-highest bid the naive guesser
    recovers exactly (bitwise equality, no tolerance).

    This is the quantity the analytic lower bound of ``lemma_bound`` controls:
    whenever at least two bids clear the reserve, the price is exactly the
    second-highest bid.
    """
    if config.size.n_bidders < 2:
        raise ValueError("needs at least 2 bidders")
    rng = rng or Rng(0)
    size = config.size
    n, m = size.n_bidders, size.n_items
    hits = 0
    total = 0
    draw = rng.child("bids")
    guess_rng = rng.child("guess")
    for s in range(0, n_samples, chunk):
        c = min(chunk, n_samples - s)
        bids = draw.uniform(dist.low, dist.high, size=(c, n, m))
        sold, price, winner, second = _item_results(bids, config.reserve)
        guess = _guess_items(Naive(), config.reserve, bids, sold, price, winner, guess_rng)
        # the price setter's entry: does any guess hit the second-highest bid exactly?
        recovered = (guess == second[:, None, :]) & (np.abs(bids - second[:, None, :]) == 0)
        hits += int(recovered.any(axis=1).sum())
        total += c * m
    return hits / total


def lemma_bound(n_bidders: int, reserve: float) -> float:
    """Analytic lower bound on the naive adversary's accuracy.

    1/n of the bids are recovered for sure whenever at least two bids clear
    the reserve, which happens with probability 1 - r^n - n r^(n-1) (1-r).
    """
    if n_bidders < 2:
        raise ValueError("bound requires n >= 2")
    if not 0.0 < reserve < 1.0:
        raise ValueError("reserve must lie in (0, 1)")
    n, r = n_bidders, reserve
    p_two_above = 1.0 - (r**n + n * r ** (n - 1) * (1.0 - r))
    return p_two_above / n
