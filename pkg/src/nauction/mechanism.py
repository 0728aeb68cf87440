"""The differentiable auction mechanism and its exact gradients.

An MLP backbone maps the flattened bid matrix to a feature vector. Two linear
heads produce (n_bidders + 1) x n_items allocation logits (the extra row is
the ghost bidder absorbing unsold portions) and one payment logit per bidder.
An item-wise softmax turns logits into allocations whose columns sum to one; a
sigmoid turns each payment logit into a fraction of the bidder's welfare, so
payments never exceed welfare and the mechanism is ex post individually
rational by construction.

Privacy noise, when enabled, is mean-zero Gaussian added to the allocation
logits before the softmax; perturbing pre-softmax keeps every realized
allocation on the simplex.

Forward passes record a trace; ``grad_params`` / ``grad_inputs`` replay it in
reverse for exact gradients (with sampled noise held fixed). The batched
kernels are module-private, shared by training, evaluation, and attacks, and
keep allocation tensors item-major -- (batch, item, bidder) -- so softmax
reductions run over the contiguous last axis. Public outcomes use the
(bidder, item) orientation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .core import AuctionOutcome, AuctionSize, Rng
from .validation import check_bid_matrix

__all__ = [
    "NetArchitecture",
    "MechanismNet",
    "NoiseSpec",
    "ForwardTrace",
    "NO_NOISE",
    "default_architecture",
    "forward",
    "grad_params",
    "grad_inputs",
    "expected_outcome",
    "finite_difference_check",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
    "CheckpointFormatError",
    "ArchitectureMismatchError",
]

CHECKPOINT_MAGIC = b"NAUC"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint I/O failures."""


class CheckpointFormatError(CheckpointError):
    """File is not a valid checkpoint (bad magic, version, or truncation)."""


class ArchitectureMismatchError(CheckpointError):
    """Checkpoint holds a different architecture than the caller expected."""


@dataclass(frozen=True)
class NetArchitecture:
    """MLP shape: auction size plus backbone depth and width."""

    size: AuctionSize
    hidden_layers: int = 3
    hidden_width: int = 100

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ValueError("hidden_layers must be >= 1")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")

    @property
    def input_dim(self) -> int:
        return self.size.n_entries

    @property
    def alloc_dim(self) -> int:
        return (self.size.n_bidders + 1) * self.size.n_items

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per linear layer: backbone, alloc head, payment head."""
        dims = []
        d = self.input_dim
        for _ in range(self.hidden_layers):
            dims.append((d, self.hidden_width))
            d = self.hidden_width
        dims.append((d, self.alloc_dim))
        dims.append((d, self.size.n_bidders))
        return dims

    @property
    def param_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims())


def default_architecture(size: AuctionSize, hidden_width: int = 100) -> NetArchitecture:
    """Depth convention used throughout: 3 hidden layers for nets with at most
    four inputs, 5 for larger ones."""
    layers = 3 if size.n_entries <= 4 else 5
    return NetArchitecture(size, hidden_layers=layers, hidden_width=hidden_width)


def _split_params(flat: np.ndarray, arch: NetArchitecture) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into the flat parameter vector; no copies."""
    layers = []
    off = 0
    for fi, fo in arch.layer_dims():
        w = flat[off : off + fi * fo].reshape(fi, fo)
        off += fi * fo
        b = flat[off : off + fo]
        off += fo
        layers.append((w, b))
    if off != flat.size:
        raise ValueError(f"parameter vector has {flat.size} entries, architecture needs {off}")
    return layers


@dataclass(frozen=True)
class MechanismNet:
    """An immutable trained (or initialized) mechanism: architecture + flat params.

    Parameter order matches the checkpoint layout: backbone layers first
    (weights row-major, then biases), then the allocation head (whose output
    is item-major: entry j*(n_bidders+1) + i scores bidder i for item j), then
    the payment head.
    """

    arch: NetArchitecture
    params: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.params, dtype=np.float64)
        if p.ndim != 1 or p.size != self.arch.param_count:
            raise ValueError(
                f"expected {self.arch.param_count} parameters for this architecture, got {p.size}"
            )
        object.__setattr__(self, "params", p)

    @classmethod
    def initialize(cls, arch: NetArchitecture, rng: Rng) -> "MechanismNet":
        """Glorot-uniform weights, zero biases."""
        flat = np.zeros(arch.param_count)
        layers = _split_params(flat, arch)
        for w, _b in layers:
            fi, fo = w.shape
            limit = np.sqrt(6.0 / (fi + fo))
            w[:] = rng.uniform(-limit, limit, size=(fi, fo))
        return cls(arch, flat)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return _split_params(self.params, self.arch)

    def fingerprint(self) -> int:
        """Cheap identity for trace/net consistency checks."""
        return hash(self.params.tobytes())


@dataclass
class NoiseSpec:
    """Gaussian allocation-logit noise: standard deviation plus its stream.

    sigma = 0 skips sampling entirely, so the deterministic mechanism is
    recovered exactly and the stream is not advanced.
    """

    sigma: float
    rng: Rng | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.sigma > 0 and self.rng is None:
            raise ValueError("sigma > 0 requires an rng")


NO_NOISE = NoiseSpec(0.0)


# ---------------------------------------------------------------------------
# Batched kernels. X rows are flattened bid matrices (bidder-major, matching
# the public bid layout); allocation tensors are item-major internally so
# softmax and its backward reduce over a contiguous axis. Everything follows
# the dtype of the workspace so callers can run float32 searches without
# touching the float64 public path.
#
# Hot loops (misreport search, inversion) run millions of small passes; the
# _Workspace below preallocates every intermediate once so repeated passes
# touch only warm memory.
# ---------------------------------------------------------------------------


def _sigmoid(q: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * q))


def _sigmoid_inplace(q: np.ndarray) -> np.ndarray:
    q *= 0.5
    np.tanh(q, out=q)
    q += 1.0
    q *= 0.5
    return q


class _Workspace:
    """Preallocated buffers for repeated forward/backward passes.

    Sized for up to ``capacity`` rows (and ``n_noise_samples`` draws per row
    in expected mode); each call may use any r <= capacity rows. Weights are
    plain (W, b) arrays of the workspace dtype, refreshed via ``set_weights``.
    """

    def __init__(self, arch: NetArchitecture, capacity: int, dtype=np.float64, n_noise_samples: int = 0):
        n, m = arch.size.n_bidders, arch.size.n_items
        H = arch.hidden_width
        L = arch.hidden_layers
        A = arch.alloc_dim
        R = capacity
        self.arch = arch
        self.capacity = R
        self.dtype = dtype
        self.n_noise = n_noise_samples
        self.weights = None

        self.acts = [np.empty((R, H), dtype=dtype) for _ in range(L)]
        self.masks = [np.empty((R, H), dtype=bool) for _ in range(L)]
        self.logits = np.empty((R, A), dtype=dtype)
        self.alloc = np.empty((R, m, n + 1), dtype=dtype)
        self.frac = np.empty((R, n), dtype=dtype)
        self.wvec = np.empty((R, n), dtype=dtype)
        self.pay = np.empty((R, n), dtype=dtype)
        self.red = np.empty((R, m, 1), dtype=dtype)
        self.tmpA = np.empty((R, m, n + 1), dtype=dtype)
        self.dG = np.empty((R, m, n + 1), dtype=dtype)
        self.dq = np.empty((R, n), dtype=dtype)
        self.dwv = np.empty((R, n), dtype=dtype)
        self.tmp_n = np.empty((R, n), dtype=dtype)
        self.ein_mi = np.empty((R, m, n), dtype=dtype)
        self.ein_im = np.empty((R, n, m), dtype=dtype)
        self.dh1 = np.empty((R, H), dtype=dtype)
        self.dh2 = np.empty((R, H), dtype=dtype)
        self.dx = np.empty((R, n * m), dtype=dtype)
        if n_noise_samples > 0:
            K = n_noise_samples
            self.samples = np.empty((R, K, m, n + 1), dtype=dtype)
            self.tmpK = np.empty((R, K, m, n + 1), dtype=dtype)
            self.redK = np.empty((R, K, m, 1), dtype=dtype)
        else:
            self.samples = self.tmpK = self.redK = None

        self.param_grads = np.empty(arch.param_count, dtype=dtype)
        self._grad_views = _split_params(self.param_grads, arch)
        self._X = None
        self._expected = False
        self._r = 0

    def set_weights(self, weights) -> None:
        self.weights = weights

    def forward(self, X: np.ndarray, noise: np.ndarray | None = None, expected: bool = False) -> None:
        """Fill alloc/frac/wvec/pay for the first ``len(X)`` rows.

        ``noise``: (r, m, n+1) realizes one noisy outcome per row when
        ``expected`` is false; (r, K, m, n+1) averages K draws per row when
        ``expected`` is true.
        """
        n, m = self.arch.size.n_bidders, self.arch.size.n_items
        r = X.shape[0]
        if r > self.capacity:
            raise ValueError(f"batch of {r} rows exceeds workspace capacity {self.capacity}")
        self._X = X
        self._r = r
        self._expected = expected and noise is not None

        h = X
        for li, (w, b) in enumerate(self.weights[:-2]):
            out = self.acts[li][:r]
            np.dot(h, w, out=out)
            out += b
            np.maximum(out, 0.0, out=out)
            h = out
        wa, ba = self.weights[-2]
        wp, bp = self.weights[-1]
        lg_flat = self.logits[:r]
        np.dot(h, wa, out=lg_flat)
        lg_flat += ba
        lg = lg_flat.reshape(r, m, n + 1)

        alloc = self.alloc[:r]
        if noise is None:
            np.copyto(alloc, lg)
            self._softmax_inplace(alloc, self.red[:r])
        elif not expected:
            np.add(lg, noise, out=alloc)
            self._softmax_inplace(alloc, self.red[:r])
        else:
            smp = self.samples[:r]
            np.add(lg[:, None], noise, out=smp)
            self._softmax_inplace(smp, self.redK[:r])
            np.mean(smp, axis=1, out=alloc)

        fr = self.frac[:r]
        np.dot(h, wp, out=fr)
        fr += bp
        _sigmoid_inplace(fr)
        np.einsum("rmi,rim->ri", alloc[:, :, :n], X.reshape(r, n, m), out=self.wvec[:r])
        np.multiply(fr, self.wvec[:r], out=self.pay[:r])

    @staticmethod
    def _softmax_inplace(z: np.ndarray, red: np.ndarray) -> None:
        np.max(z, axis=-1, keepdims=True, out=red)
        z -= red
        np.exp(z, out=z)
        np.sum(z, axis=-1, keepdims=True, out=red)
        z /= red

    def backward(
        self,
        d_alloc: np.ndarray,
        d_pay: np.ndarray,
        want_params: bool = False,
        want_inputs: bool = True,
    ) -> tuple[np.ndarray | None, np.ndarray | None]:
        """Reverse-mode pass for the rows of the last forward call.

        ``d_alloc`` is item-major (r, m, n+1). Sampled noise is held fixed
        (pathwise derivative). Payments feed back into both heads and directly
        into the bids through the welfare term. Returned arrays are views into
        workspace buffers, valid until the next call.
        """
        n, m = self.arch.size.n_bidders, self.arch.size.n_items
        r = self._r
        X = self._X
        xr = X.reshape(r, n, m)
        alloc = self.alloc[:r]
        fr = self.frac[:r]

        dq = self.dq[:r]
        np.multiply(d_pay, self.wvec[:r], out=dq)      # d_frac
        dq *= fr
        np.subtract(1.0, fr, out=self.tmp_n[:r])
        dq *= self.tmp_n[:r]                            # d_frac * frac * (1 - frac)

        dwv = self.dwv[:r]
        np.multiply(d_pay, fr, out=dwv)
        dG = self.dG[:r]
        np.copyto(dG, d_alloc)
        np.einsum("ri,rim->rmi", dwv, xr, out=self.ein_mi[:r])
        dG[:, :, :n] += self.ein_mi[:r]
        np.einsum("ri,rmi->rim", dwv, alloc[:, :, :n], out=self.ein_im[:r])

        if self._expected:
            smp = self.samples[:r]
            np.multiply(smp, dG[:, None], out=self.tmpK[:r])
            np.sum(self.tmpK[:r], axis=-1, keepdims=True, out=self.redK[:r])
            np.subtract(dG[:, None], self.redK[:r], out=self.tmpK[:r])
            self.tmpK[:r] *= smp
            np.mean(self.tmpK[:r], axis=1, out=dG)
        else:
            np.multiply(alloc, dG, out=self.tmpA[:r])
            np.sum(self.tmpA[:r], axis=-1, keepdims=True, out=self.red[:r])
            dG -= self.red[:r]
            dG *= alloc
        dS_flat = dG.reshape(r, m * (n + 1))

        wa, _ = self.weights[-2]
        wp, _ = self.weights[-1]
        L = self.arch.hidden_layers
        hL = self.acts[L - 1][:r]

        if want_params:
            gwa, gba = self._grad_views[-2]
            np.dot(hL.T, dS_flat, out=gwa)
            np.sum(dS_flat, axis=0, out=gba)
            gwp, gbp = self._grad_views[-1]
            np.dot(hL.T, dq, out=gwp)
            np.sum(dq, axis=0, out=gbp)

        dh = self.dh1[:r]
        spare = self.dh2[:r]
        np.dot(dS_flat, wa.T, out=dh)
        np.dot(dq, wp.T, out=spare)
        dh += spare
        for li in range(L - 1, -1, -1):
            mask = self.masks[li][:r]
            np.greater(self.acts[li][:r], 0.0, out=mask)
            dh *= mask
            if want_params:
                prev = self.acts[li - 1][:r] if li > 0 else X
                gw, gb = self._grad_views[li]
                np.dot(prev.T, dh, out=gw)
                np.sum(dh, axis=0, out=gb)
            if li > 0:
                np.dot(dh, self.weights[li][0].T, out=spare)
                dh, spare = spare, dh
            else:
                np.dot(dh, self.weights[0][0].T, out=self.dx[:r])

        dx = None
        if want_inputs:
            dx = self.dx[:r]
            dx += self.ein_im[:r].reshape(r, n * m)
        grads = self.param_grads if want_params else None
        return grads, dx


@dataclass
class _BatchTrace:
    """One batched forward pass plus the workspace holding its intermediates."""

    ws: _Workspace
    X: np.ndarray                      # (B, n*m) flattened bids
    noise: np.ndarray | None
    expected: bool
    alloc: np.ndarray                  # (B, m, n+1) view
    frac: np.ndarray                   # (B, n) view
    wvec: np.ndarray                   # (B, n) view
    pay: np.ndarray                    # (B, n) view


def _forward_batch(
    weights: list[tuple[np.ndarray, np.ndarray]],
    size: AuctionSize,
    X: np.ndarray,
    noise: np.ndarray | None = None,
    expected: bool = False,
) -> _BatchTrace:
    """Run the mechanism on a batch of flattened bid rows with a fresh
    workspace. ``noise``: (B, m, n+1) realized, or (K, m, n+1)/(B, K, m, n+1)
    with ``expected=True`` for the K-draw averaged mechanism."""
    arch = _arch_for(weights, size)
    B = X.shape[0]
    n_noise = 0
    if expected and noise is not None:
        if noise.ndim == 3:  # shared draws: broadcast to per-row
            noise = np.broadcast_to(noise[None], (B, *noise.shape))
        n_noise = noise.shape[1]
    elif noise is not None and noise.shape != (B, size.n_items, size.n_bidders + 1):
        raise ValueError(f"realized noise must be (B, m, n+1), got {noise.shape}")
    ws = _Workspace(arch, B, dtype=X.dtype, n_noise_samples=n_noise)
    ws.set_weights(weights)
    ws.forward(X, noise, expected=expected)
    return _BatchTrace(
        ws, X, noise, ws._expected, ws.alloc[:B], ws.frac[:B], ws.wvec[:B], ws.pay[:B]
    )


def _arch_for(weights, size: AuctionSize) -> NetArchitecture:
    return NetArchitecture(size, hidden_layers=len(weights) - 2, hidden_width=weights[0][0].shape[1])


def _backward_batch(
    weights,
    size: AuctionSize,
    tr: _BatchTrace,
    d_alloc: np.ndarray,
    d_pay: np.ndarray,
    want_params: bool = True,
    want_inputs: bool = True,
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Reverse-mode pass from outcome cotangents (item-major ``d_alloc``) to
    parameter and/or input gradients, replaying ``tr``."""
    grads, dx = tr.ws.backward(d_alloc, d_pay, want_params=want_params, want_inputs=want_inputs)
    if grads is not None:
        grads = grads.copy()
    return grads, dx


# ---------------------------------------------------------------------------
# Public single-profile operations (bidder-major allocation orientation).
# ---------------------------------------------------------------------------


@dataclass
class ForwardTrace:
    """Record of one forward pass, retained for exact backpropagation."""

    arch: NetArchitecture
    sigma: float
    _batch: _BatchTrace = field(repr=False)
    _fingerprint: int = field(repr=False)

    @property
    def noise(self) -> np.ndarray | None:
        """The sampled logit noise, if any: (n+1, m), or (K, n+1, m) when the
        trace came from an expected-outcome evaluation."""
        eps = self._batch.noise
        if eps is None:
            return None
        if self._batch.expected:
            return eps.swapaxes(-1, -2).copy()
        return eps[0].T.copy()


def _check_net(net: MechanismNet) -> None:
    if not np.all(np.isfinite(net.params)):
        raise ValueError("mechanism parameters contain non-finite values")


def _outcome_from_trace(tr: _BatchTrace) -> AuctionOutcome:
    return AuctionOutcome(allocation=tr.alloc[0].T.copy(), payments=tr.pay[0].copy())


def forward(
    net: MechanismNet, bids: np.ndarray, noise: NoiseSpec = NO_NOISE
) -> tuple[AuctionOutcome, ForwardTrace]:
    """Evaluate the mechanism on one bid profile.

    With sigma > 0 a single Gaussian draw perturbs the allocation logits; the
    resulting outcome is the realized (published) result of the auction and
    still satisfies every outcome invariant.
    """
    _check_net(net)
    size = net.arch.size
    b = check_bid_matrix(bids, size)
    eps = None
    if noise.sigma > 0:
        eps = noise.rng.normal(scale=noise.sigma, size=(1, size.n_items, size.n_bidders + 1))
    tr = _forward_batch(net.layers(), size, b.reshape(1, -1), eps)
    trace = ForwardTrace(net.arch, noise.sigma, tr, net.fingerprint())
    return _outcome_from_trace(tr), trace


def expected_outcome(
    net: MechanismNet, bids: np.ndarray, noise: NoiseSpec, n_samples: int
) -> AuctionOutcome:
    """Noise-averaged outcome: allocation is the mean over ``n_samples`` draws,
    payments are fraction times the welfare of that averaged allocation (equal
    to the expected payment, by linearity of welfare in the allocation)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    _check_net(net)
    size = net.arch.size
    b = check_bid_matrix(bids, size)
    if noise.sigma == 0:
        out, _ = forward(net, bids, NO_NOISE)
        return out
    eps = noise.rng.normal(
        scale=noise.sigma, size=(n_samples, size.n_items, size.n_bidders + 1)
    )
    tr = _forward_batch(net.layers(), size, b.reshape(1, -1), eps, expected=True)
    return _outcome_from_trace(tr)


def _check_trace(net: MechanismNet, trace: ForwardTrace) -> None:
    if trace._fingerprint != net.fingerprint():
        raise ValueError("trace was recorded with a different mechanism (parameter mismatch)")


def _upstream(trace: ForwardTrace, d_allocation, d_payments) -> tuple[np.ndarray, np.ndarray]:
    size = trace.arch.size
    n, m = size.n_bidders, size.n_items
    if d_allocation is None:
        da = np.zeros((1, m, n + 1))
    else:
        da = np.asarray(d_allocation, dtype=np.float64).reshape(n + 1, m).T[None]
    if d_payments is None:
        dp = np.zeros((1, n))
    else:
        dp = np.asarray(d_payments, dtype=np.float64).reshape(1, n)
    return da, dp


def grad_params(
    net: MechanismNet,
    trace: ForwardTrace,
    d_allocation: np.ndarray | None = None,
    d_payments: np.ndarray | None = None,
) -> np.ndarray:
    """Gradient w.r.t. the flat parameter vector of the scalar whose outcome
    cotangents are ``d_allocation`` ((n+1) x m) and ``d_payments`` (n,)."""
    _check_trace(net, trace)
    da, dp = _upstream(trace, d_allocation, d_payments)
    g, _ = _backward_batch(net.layers(), trace.arch.size, trace._batch, da, dp, want_inputs=False)
    return g


def grad_inputs(
    net: MechanismNet,
    trace: ForwardTrace,
    d_allocation: np.ndarray | None = None,
    d_payments: np.ndarray | None = None,
    frozen_rows: list[int] | None = None,
) -> np.ndarray:
    """Gradient w.r.t. the bid matrix; rows in ``frozen_rows`` get exact zeros."""
    _check_trace(net, trace)
    size = trace.arch.size
    da, dp = _upstream(trace, d_allocation, d_payments)
    _, dx = _backward_batch(net.layers(), size, trace._batch, da, dp, want_params=False)
    g = dx.reshape(size.n_bidders, size.n_items).copy()
    if frozen_rows:
        for r in frozen_rows:
            if not 0 <= r < size.n_bidders:
                raise IndexError(f"frozen row {r} out of range")
            g[r, :] = 0.0
    return g


def finite_difference_check(
    arch: NetArchitecture,
    seed: int,
    sigma: float = 0.0,
    n_draws: int = 50,
    n_param_coords: int = 20,
    step: float = 1e-5,
    corrupt: bool = False,
) -> float:
    """Central-finite-difference oracle for the analytic gradients.

    For each draw: a fresh Glorot net, a random bid profile, random outcome
    cotangents, and (with sigma > 0) one frozen noise realization. Compares
    grad_params on ``n_param_coords`` random coordinates and grad_inputs on
    every bid entry; returns the maximum relative error. ``corrupt`` perturbs
    the analytic gradient (negative-control hook for the harness).
    """
    rng = Rng(seed).child("gradcheck")
    size = arch.size
    n, m = size.n_bidders, size.n_items
    max_rel = 0.0
    for d in range(n_draws):
        net = MechanismNet.initialize(arch, rng.child(f"net-{d}"))
        bids = rng.child(f"bids-{d}").uniform(0.0, 1.0, size=(n, m))
        cot = rng.child(f"cot-{d}")
        d_alloc = cot.normal(size=(n + 1, m))
        d_pay = cot.normal(size=n)
        eps = None
        if sigma > 0:
            eps = rng.child(f"noise-{d}").normal(scale=sigma, size=(1, m, n + 1))

        def scalar(params: np.ndarray, b: np.ndarray) -> float:
            w = _split_params(params, arch)
            tr = _forward_batch(w, size, b.reshape(1, -1), eps)
            alloc = tr.alloc[0].T
            return float((d_alloc * alloc).sum() + (d_pay * tr.pay[0]).sum())

        tr = _forward_batch(net.layers(), size, bids.reshape(1, -1), eps)
        da_im = d_alloc.T[None]
        gp, gx = tr.ws.backward(da_im, d_pay[None], want_params=True, want_inputs=True)
        gp = gp.copy()
        gx = gx.reshape(n, m).copy()
        if corrupt:
            gp += 1e-2 * (np.abs(gp).max() + 1.0)

        coords = rng.child(f"coords-{d}").integers(0, arch.param_count, size=n_param_coords)
        for c in np.unique(coords):
            p = net.params.copy()
            p[c] += step
            f_hi = scalar(p, bids)
            p[c] -= 2 * step
            f_lo = scalar(p, bids)
            fd = (f_hi - f_lo) / (2 * step)
            max_rel = max(max_rel, abs(fd - gp[c]) / max(abs(fd), abs(gp[c]), 1e-6))
        for i in range(n):
            for j in range(m):
                b = bids.copy()
                b[i, j] += step
                f_hi = scalar(net.params, b)
                b[i, j] -= 2 * step
                f_lo = scalar(net.params, b)
                fd = (f_hi - f_lo) / (2 * step)
                max_rel = max(max_rel, abs(fd - gx[i, j]) / max(abs(fd), abs(gx[i, j]), 1e-6))
    return max_rel


# ---------------------------------------------------------------------------
# Checkpoints: little-endian binary, self-describing architecture.
# Layout: magic "NAUC" | u32 version | u32 n_bidders | u32 n_items
#         | u32 hidden_layers | u32 hidden_width | param_count * f64.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4s5I")


def save_checkpoint(net: MechanismNet, path) -> None:
    header = _HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        net.arch.size.n_bidders,
        net.arch.size.n_items,
        net.arch.hidden_layers,
        net.arch.hidden_width,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(net.params.astype("<f8").tobytes())


def load_checkpoint(path, expected_size: AuctionSize | None = None) -> MechanismNet:
    """Read a checkpoint; raises CheckpointFormatError on malformed files and
    ArchitectureMismatchError when ``expected_size`` disagrees with the file."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _HEADER.size:
        raise CheckpointFormatError(f"{path}: file too short to be a checkpoint")
    magic, version, n, m, layers, width = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported format version {version}")
    try:
        arch = NetArchitecture(AuctionSize(n, m), hidden_layers=layers, hidden_width=width)
    except ValueError as e:
        raise CheckpointFormatError(f"{path}: invalid architecture fields: {e}") from e
    body = blob[_HEADER.size :]
    expected_bytes = arch.param_count * 8
    if len(body) != expected_bytes:
        raise CheckpointFormatError(
            f"{path}: expected {expected_bytes} parameter bytes, found {len(body)}"
        )
    if expected_size is not None and arch.size != expected_size:
        raise ArchitectureMismatchError(
            f"{path}: checkpoint is {arch.size}, expected {expected_size}"
        )
    params = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return MechanismNet(arch, params)
