"""Augmented-Lagrangian training of the mechanism toward revenue-optimal,
near-zero-regret auctions, plus held-out evaluation of revenue and regret.

Training minimizes, per batch,

    -sum_i p_i  +  sum_i lambda_i * rgt_i  +  (rho/2) * (sum_i rgt_i)^2

where rgt_i is the batch-mean regret of bidder i, estimated by an inner
projected-Adam loop that searches for utility-improving misreports. Lagrange
weights grow by rho * rgt_i on a fixed iteration cadence and rho itself is
incremented on an epoch cadence, so the regret constraint tightens as training
proceeds. Training always runs on the noise-free mechanism; noise is an
inference-time defense.

The misreport search runs in float32 (it only has to find good rows, not
score them); losses, gradients, and every reported number are float64.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import AuctionSize, Rng, ValuationDistribution, sample_bids
from .mechanism import (
    MechanismNet,
    NetArchitecture,
    NoiseSpec,
    NO_NOISE,
    _arch_for,
    _split_params,
    _Workspace,
)
from .validation import check_bid_matrix

__all__ = [
    "TrainConfig",
    "EpochStats",
    "TrainReport",
    "EvalResult",
    "TrainingDivergedError",
    "optimize_misreport",
    "regret_of",
    "train",
    "evaluate",
    "DEFAULT_EVAL_PROFILES",
]

DEFAULT_EVAL_PROFILES = 10_000

# (epochs, rho update period in epochs, initial rho, rho increment) per size,
# alongside the shared defaults below.
_SIZE_DEFAULTS = {
    (1, 2): (10, 2, 1.0, 10.0),
    (2, 2): (30, 2, 1.0, 5.0),
    (3, 2): (20, 2, 1.0, 1.0),
    (2, 3): (20, 2, 1.0, 1.0),
    (3, 3): (30, 8, 0.0, 1.0),
}


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run. ``for_size`` fills in the
    published per-size values; anything can be overridden afterwards."""

    epochs: int
    batch_size: int = 128
    learning_rate: float = 1e-3
    rho_initial: float = 1.0
    rho_increment: float = 1.0
    rho_update_period_epochs: int = 2
    lagrange_weight_initial: float = 5.0
    lagrange_update_period_iters: int = 100
    misreport_lr: float = 0.1
    misreport_iters: int = 25
    misreport_inits: int = 10
    n_train_samples: int = 640_000
    seed: int = 0

    @classmethod
    def for_size(cls, size: AuctionSize, **overrides) -> "TrainConfig":
        epochs, period, rho0, rho_inc = _SIZE_DEFAULTS.get(
            (size.n_bidders, size.n_items), (20, 2, 1.0, 1.0)
        )
        cfg = cls(
            epochs=epochs,
            rho_update_period_epochs=period,
            rho_initial=rho0,
            rho_increment=rho_inc,
        )
        return replace(cfg, **overrides) if overrides else cfg

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.rho_initial < 0 or self.rho_increment < 0:
            raise ValueError("rho values must be nonnegative")
        if self.rho_update_period_epochs < 1 or self.lagrange_update_period_iters < 1:
            raise ValueError("update periods must be >= 1")
        if self.misreport_lr <= 0 or self.misreport_iters < 1 or self.misreport_inits < 1:
            raise ValueError("misreport settings must be positive")
        if self.n_train_samples < self.batch_size:
            raise ValueError("n_train_samples must cover at least one batch")


@dataclass
class EpochStats:
    epoch: int
    revenue: float
    regret: float
    lambdas: np.ndarray
    rho: float
    wall_time_s: float


@dataclass
class TrainReport:
    """Per-epoch training diagnostics; one CSV row per epoch."""

    size: AuctionSize
    rows: list[EpochStats] = field(default_factory=list)

    CSV_FIELDS = ("epoch", "revenue", "regret", "rho", "lambda_mean", "wall_time_s")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.CSV_FIELDS)
            for r in self.rows:
                w.writerow(
                    [
                        r.epoch,
                        f"{r.revenue:.6f}",
                        f"{r.regret:.6f}",
                        f"{r.rho:g}",
                        f"{float(np.mean(r.lambdas)):.6f}",
                        f"{r.wall_time_s:.2f}",
                    ]
                )


class _Adam:
    """Plain adaptive-moment minimizer; ``step`` returns the update to add."""

    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8, dtype=np.float64):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = np.zeros(shape, dtype=dtype)
        self.v = np.zeros(shape, dtype=dtype)

    def step(self, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return -self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _cast_weights(weights, dtype):
    if dtype == np.float64:
        return weights
    return [(w.astype(dtype), b.astype(dtype)) for w, b in weights]


def _misreport_search(
    weights,
    size: AuctionSize,
    truth: np.ndarray,
    lr: float,
    iters: int,
    inits: int,
    rng: Rng,
    dtype=np.float64,
    noise: np.ndarray | None = None,
    ws: _Workspace | None = None,
):
    """Best misreport row per (profile, bidder) via projected Adam ascent.

    ``truth``: (B, n, m). Candidates for every bidder and every restart are
    optimized jointly as one batch; the best iterate over the whole trajectory
    (by utility against the true values) is kept. ``noise`` of shape
    (B, K, m, n+1) switches the objective to the K-draw expected mechanism.
    Returns (best_rows (B, n, m) float64, best_util (B, n) float64).
    """
    n, m = size.n_bidders, size.n_items
    B = truth.shape[0]
    K = inits
    R = n * K * B
    nm = n * m

    if ws is None:
        n_noise = 0 if noise is None else noise.shape[1]
        ws = _Workspace(_arch_for(weights, size), R, dtype=dtype, n_noise_samples=n_noise)
    ws.set_weights(weights)

    truth_flat = truth.reshape(B, nm).astype(dtype)
    x = np.empty((R, nm), dtype=dtype)
    x.reshape(n * K, B, nm)[:] = truth_flat  # row (i*K + k)*B + b <-> profile b
    y = rng.uniform(0.0, 1.0, size=(R, m)).astype(dtype)

    noise_cand = None
    if noise is not None:
        noise_cand = np.empty((R, *noise.shape[1:]), dtype=dtype)
        noise_cand.reshape(n * K, B, *noise.shape[1:])[:] = noise.astype(dtype)

    # constant cotangents: du/d_alloc is the bidder's true value row, du/d_pay is -1
    d_alloc = np.zeros((R, m, n + 1), dtype=dtype)
    d_pay = np.zeros((R, n), dtype=dtype)
    v_rows = []
    for i in range(n):
        blk = slice(i * K * B, (i + 1) * K * B)
        v_i = np.empty((K * B, m), dtype=dtype)
        v_i.reshape(K, B, m)[:] = truth[:, i, :]
        v_rows.append(v_i)
        d_alloc[blk, :, i] = v_i
        d_pay[blk, i] = -1.0

    col_slices = [slice(i * m, (i + 1) * m) for i in range(n)]
    row_blocks = [slice(i * K * B, (i + 1) * K * B) for i in range(n)]

    adam = _Adam((R, m), lr, dtype=dtype)
    best_u = np.full(R, -np.inf, dtype=dtype)
    best_y = y.copy()
    u = np.empty(R, dtype=dtype)

    for step in range(iters + 1):
        for i in range(n):
            x[row_blocks[i], col_slices[i]] = y[row_blocks[i]]
        ws.forward(x, noise_cand, expected=noise_cand is not None)
        for i in range(n):
            blk = row_blocks[i]
            u[blk] = (ws.alloc[blk, :, i] * v_rows[i]).sum(axis=1) - ws.pay[blk, i]
        improved = u > best_u
        best_u[improved] = u[improved]
        best_y[improved] = y[improved]
        if step == iters:
            break
        _, dx = ws.backward(d_alloc, d_pay, want_params=False)
        gy = np.empty_like(y)
        for i in range(n):
            gy[row_blocks[i]] = dx[row_blocks[i], col_slices[i]]
        y = np.clip(y + adam.step(-gy), 0.0, 1.0)

    # reduce over restarts: best init per (bidder, profile)
    bu = best_u.reshape(n, K, B)
    by = best_y.reshape(n, K, B, m)
    k_star = bu.argmax(axis=1)  # (n, B)
    ii, bb = np.meshgrid(np.arange(n), np.arange(B), indexing="ij")
    best_rows = by[ii, k_star, bb].transpose(1, 0, 2).astype(np.float64)  # (B, n, m)
    best_util = bu[ii, k_star, bb].T.astype(np.float64)
    return best_rows, best_util


def _score_candidates(weights, size: AuctionSize, truth: np.ndarray, best_rows: np.ndarray,
                      noise: np.ndarray | None = None, ws: _Workspace | None = None):
    """Float64 scoring pass: truthful profiles and each bidder's misreport
    profile forwarded as one batch of (1 + n) * B rows.

    Row layout: [0:B] truthful, then bidder-major misreport blocks. Returns
    (ws, u_t (B,n), u_m (B,n)); revenue and cotangent hooks read the workspace.
    """
    n, m = size.n_bidders, size.n_items
    B = truth.shape[0]
    nm = n * m
    R = (1 + n) * B
    x = np.empty((R, nm))
    x[:B] = truth.reshape(B, nm)
    for i in range(n):
        blk = x[(1 + i) * B : (2 + i) * B]
        blk[:] = truth.reshape(B, nm)
        blk[:, i * m : (i + 1) * m] = best_rows[:, i, :]
    noise_all = None
    if noise is not None:
        noise_all = np.empty((R, *noise.shape[1:]))
        noise_all.reshape(1 + n, B, *noise.shape[1:])[:] = noise
    if ws is None:
        n_noise = 0 if noise is None else noise.shape[1]
        ws = _Workspace(_arch_for(weights, size), R, n_noise_samples=n_noise)
    ws.set_weights(weights)
    ws.forward(x, noise_all, expected=noise_all is not None)

    u_t = ws.wvec[:B] - ws.pay[:B]  # reported bids are the true values here
    u_m = np.empty((B, n))
    for i in range(n):
        blk = slice((1 + i) * B, (2 + i) * B)
        u_m[:, i] = (ws.alloc[blk, :, i] * truth[:, i, :]).sum(axis=1) - ws.pay[blk, i]
    return ws, u_t.copy(), u_m


def optimize_misreport(
    net: MechanismNet,
    truthful: np.ndarray,
    bidder: int,
    lr: float = 0.1,
    iters: int = 25,
    inits: int = 10,
    rng: Rng | None = None,
) -> tuple[np.ndarray, float]:
    """Search for the utility-maximizing misreport row for one bidder, others
    bidding truthfully. The truthful row itself is always a candidate, so the
    returned utility is at least the truthful utility."""
    size = net.arch.size
    truth = check_bid_matrix(truthful, size)
    if not 0 <= bidder < size.n_bidders:
        raise IndexError(f"bidder {bidder} out of range")
    if lr <= 0 or iters < 1 or inits < 1:
        raise ValueError("lr, iters, and inits must be positive")
    rng = rng or Rng(0)
    weights = net.layers()
    best_rows, best_util = _misreport_search(
        weights, size, truth[None], lr, iters, inits, rng, dtype=np.float64
    )
    _, u_t, _ = _score_candidates(weights, size, truth[None], best_rows)
    if best_util[0, bidder] >= u_t[0, bidder]:
        return best_rows[0, bidder].copy(), float(best_util[0, bidder])
    return truth[bidder].copy(), float(u_t[0, bidder])


def regret_of(net: MechanismNet, profile: np.ndarray, config: TrainConfig, rng: Rng | None = None) -> np.ndarray:
    """Per-bidder regrets for one profile: best-misreport utility minus
    truthful utility, clamped at zero."""
    size = net.arch.size
    truth = check_bid_matrix(profile, size)
    rng = rng or Rng(config.seed).child("regret")
    weights = net.layers()
    best_rows, _ = _misreport_search(
        weights,
        size,
        truth[None],
        config.misreport_lr,
        config.misreport_iters,
        config.misreport_inits,
        rng,
        dtype=np.float64,
    )
    _, u_t, u_m = _score_candidates(weights, size, truth[None], best_rows)
    return np.maximum(u_m - u_t, 0.0)[0]


def train(
    arch: NetArchitecture,
    dist: ValuationDistribution,
    config: TrainConfig,
    progress=None,
    data: np.ndarray | None = None,
) -> tuple[MechanismNet, TrainReport]:
    """Train a mechanism from scratch; deterministic given ``config.seed``.

    ``progress``, if given, is called with each finished EpochStats. ``data``
    ((n_train_samples, n, m) valuation profiles) replaces the sampled
    training set when supplied.
    """
    config.validate()
    size = arch.size
    n, m = size.n_bidders, size.n_items
    rng = Rng(config.seed)

    if data is None:
        data = sample_bids(dist, size, config.n_train_samples, rng.child("train-data"))
    elif data.shape != (config.n_train_samples, n, m):
        raise ValueError(
            f"training data must be ({config.n_train_samples}, {n}, {m}), got {data.shape}"
        )
    params = MechanismNet.initialize(arch, rng.child("init")).params.copy()
    weights = _split_params(params, arch)
    adam = _Adam(params.shape, config.learning_rate)
    mis_rng = rng.child("misreport")

    B = config.batch_size
    ws32 = _Workspace(arch, n * config.misreport_inits * B, dtype=np.float32)
    ws64 = _Workspace(arch, (1 + n) * B)

    lam = np.full(n, config.lagrange_weight_initial)
    rho = config.rho_initial
    report = TrainReport(size)
    n_batches = config.n_train_samples // B
    it = 0
    t_start = time.perf_counter()
    d_alloc = np.empty(((1 + n) * B, m, n + 1))
    d_pay = np.empty(((1 + n) * B, n))

    for epoch in range(config.epochs):
        perm = rng.child(f"shuffle-{epoch}").permutation(config.n_train_samples)
        ep_revenue = 0.0
        ep_regret = 0.0
        for bi in range(n_batches):
            v = data[perm[bi * B : (bi + 1) * B]]
            w32 = _cast_weights(weights, np.float32)
            best_rows, _ = _misreport_search(
                w32,
                size,
                v,
                config.misreport_lr,
                config.misreport_iters,
                config.misreport_inits,
                mis_rng,
                dtype=np.float32,
                ws=ws32,
            )
            sc, u_t, u_m = _score_candidates(weights, size, v, best_rows, ws=ws64)
            rgt = np.maximum(u_m - u_t, 0.0)
            rgt_mean = rgt.mean(axis=0)
            revenue = sc.pay[:B].sum(axis=1).mean()
            loss = -revenue + float(lam @ rgt_mean) + 0.5 * rho * rgt_mean.sum() ** 2
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch + 1}, iteration {it + 1}: "
                    f"revenue={revenue:g}, regret={rgt_mean.sum():g}"
                )

            coef = (lam + rho * rgt_mean.sum()) / B  # per-bidder regret weight
            act = (rgt > 0).astype(np.float64) * coef[None, :]
            d_alloc[:] = 0.0
            d_pay[:B] = -1.0 / B
            d_pay[:B] += act
            d_pay[B:] = 0.0
            d_alloc[:B, :, :n] = -np.einsum("bi,bim->bmi", act, v)
            for i in range(n):
                blk = slice((1 + i) * B, (2 + i) * B)
                d_alloc[blk, :, i] = act[:, i, None] * v[:, i, :]
                d_pay[blk, i] = -act[:, i]

            g, _ = sc.backward(d_alloc, d_pay, want_params=True, want_inputs=False)
            params += adam.step(g)

            it += 1
            if it % config.lagrange_update_period_iters == 0:
                lam = lam + rho * rgt_mean
            ep_revenue += revenue
            ep_regret += rgt.mean()

        if (epoch + 1) % config.rho_update_period_epochs == 0:
            rho += config.rho_increment

        stats = EpochStats(
            epoch=epoch + 1,
            revenue=ep_revenue / n_batches,
            regret=ep_regret / n_batches,
            lambdas=lam.copy(),
            rho=rho,
            wall_time_s=time.perf_counter() - t_start,
        )
        report.rows.append(stats)
        if progress is not None:
            progress(stats)

    return MechanismNet(arch, params), report


@dataclass
class EvalResult:
    revenue: float
    revenue_se: float
    regret: float
    regret_se: float
    sigma: float
    n_profiles: int


def evaluate(
    net: MechanismNet,
    dist: ValuationDistribution,
    noise: NoiseSpec = NO_NOISE,
    n_profiles: int = DEFAULT_EVAL_PROFILES,
    n_noise_samples: int = 100,
    config: TrainConfig | None = None,
    rng: Rng | None = None,
) -> EvalResult:
    """Held-out revenue and regret, under expected outcomes when sigma > 0.

    Revenue is the mean total payment per profile; regret is the mean over
    bidders and profiles of the clamped misreport gain, with misreports
    optimized against the (expected) mechanism using the training inner-loop
    settings. Standard errors are across profiles.
    """
    if n_profiles < 1:
        raise ValueError("n_profiles must be >= 1")
    size = net.arch.size
    n = size.n_bidders
    config = config or TrainConfig.for_size(size)
    rng = rng or Rng(config.seed).child("eval")
    weights = net.layers()
    sigma = noise.sigma

    profiles = sample_bids(dist, size, n_profiles, rng.child("profiles"))
    noise_rng = rng.child("noise") if sigma > 0 else None
    mis_rng = rng.child("misreport")

    # keep the candidate batch (profiles x bidders x inits x noise draws) bounded
    rows_per_profile = n * config.misreport_inits
    if sigma == 0:
        chunk = max(1, min(n_profiles, 40_000 // rows_per_profile))
        K = 0
    else:
        K = n_noise_samples
        budget = 6_000_000 // max(1, K * (n + 1) * size.n_items)
        chunk = max(1, min(n_profiles, budget // rows_per_profile))

    ws32 = _Workspace(net.arch, rows_per_profile * chunk, dtype=np.float32, n_noise_samples=K)
    ws64 = _Workspace(net.arch, (1 + n) * chunk, n_noise_samples=K)

    rev = np.empty(n_profiles)
    rgt_profile = np.empty(n_profiles)
    for s in range(0, n_profiles, chunk):
        v = profiles[s : s + chunk]
        b = v.shape[0]
        eps = None
        if sigma > 0:
            eps = noise_rng.normal(scale=sigma, size=(b, K, size.n_items, n + 1))
        w32 = _cast_weights(weights, np.float32)
        eps32 = None if eps is None else eps.astype(np.float32)
        best_rows, _ = _misreport_search(
            w32,
            size,
            v,
            config.misreport_lr,
            config.misreport_iters,
            config.misreport_inits,
            mis_rng,
            dtype=np.float32,
            noise=eps32,
            ws=ws32,
        )
        sc, u_t, u_m = _score_candidates(weights, size, v, best_rows, noise=eps, ws=ws64)
        rgt = np.maximum(u_m - u_t, 0.0)
        rev[s : s + b] = sc.pay[:b].sum(axis=1)
        rgt_profile[s : s + b] = rgt.mean(axis=1)

    def _se(a):
        return float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else float("nan")

    return EvalResult(
        revenue=float(rev.mean()),
        revenue_se=_se(rev),
        regret=float(rgt_profile.mean()),
        regret_se=_se(rgt_profile),
        sigma=sigma,
        n_profiles=n_profiles,
    )
