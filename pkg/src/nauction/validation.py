"""Input validation helpers shared by the public API and the estimator facade."""

from __future__ import annotations

import numpy as np

from .core import AuctionSize

__all__ = ["check_bid_matrix", "check_bid_batch"]


def check_bid_matrix(bids, size: AuctionSize) -> np.ndarray:
    """Validate one bid profile and return it as a float64 (n, m) array.

    Accepts anything array-like. Raises ValueError on wrong shape, negative
    entries, or non-finite values.
    """
    arr = np.asarray(bids, dtype=np.float64)
    expected = (size.n_bidders, size.n_items)
    if arr.shape != expected:
        raise ValueError(f"bid matrix must have shape {expected}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("bid matrix contains non-finite entries")
    if arr.min() < 0:
        raise ValueError("bids must be nonnegative")
    return arr


def check_bid_batch(bids, size: AuctionSize) -> np.ndarray:
    """Validate a batch of bid profiles, returning float64 (count, n, m).

    A single (n, m) profile is promoted to a batch of one.
    """
    arr = np.asarray(bids, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    expected = (size.n_bidders, size.n_items)
    if arr.ndim != 3 or arr.shape[1:] != expected:
        raise ValueError(f"bid batch must have shape (count, {expected[0]}, {expected[1]}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("bid batch contains non-finite entries")
    if arr.min() < 0:
        raise ValueError("bids must be nonnegative")
    return arr
