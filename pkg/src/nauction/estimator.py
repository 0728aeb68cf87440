"""Scikit-learn style estimator facade over the auction trainer and mechanism.

``NeuralAuction`` follows the estimator protocol — constructor parameters
stored verbatim, ``get_params``/``set_params``, ``fit`` returning self,
fitted attributes with trailing underscores — so the mechanism composes with
sklearn tooling (``sklearn.base.clone``, pipelines, grid search) without this
package depending on sklearn itself.
"""

from __future__ import annotations

import inspect

import numpy as np

from .core import AuctionSize, Rng, UNIFORM_UNIT
from .mechanism import (
    MechanismNet,
    NetArchitecture,
    NoiseSpec,
    NO_NOISE,
    default_architecture,
    _forward_batch,
)
from .training import TrainConfig, evaluate, train
from .validation import check_bid_batch

__all__ = ["NeuralAuction"]


class NeuralAuction:
    """Trainable revenue-maximizing auction with a near-zero-regret constraint.

    ``fit`` trains the mechanism (on provided valuation profiles or, by
    default, on freshly sampled U[0,1] profiles); ``predict`` returns the
    payments charged for a batch of bid profiles and ``predict_allocation``
    the allocation tensors. ``sigma`` adds Gaussian allocation-logit noise at
    prediction time, in which case predictions are noise-averaged (expected)
    outcomes.

    Parameters default to the published per-size training configuration when
    left at None.
    """

    def __init__(
        self,
        n_bidders: int = 2,
        n_items: int = 2,
        hidden_layers: int | None = None,
        hidden_width: int = 100,
        epochs: int | None = None,
        batch_size: int = 128,
        learning_rate: float = 1e-3,
        rho_initial: float | None = None,
        rho_increment: float | None = None,
        rho_update_period_epochs: int | None = None,
        lagrange_weight_initial: float = 5.0,
        lagrange_update_period_iters: int = 100,
        misreport_lr: float = 0.1,
        misreport_iters: int = 25,
        misreport_inits: int = 10,
        n_train_samples: int = 640_000,
        sigma: float = 0.0,
        n_noise_samples: int = 100,
        random_state: int = 0,
    ):
        self.n_bidders = n_bidders
        self.n_items = n_items
        self.hidden_layers = hidden_layers
        self.hidden_width = hidden_width
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.rho_initial = rho_initial
        self.rho_increment = rho_increment
        self.rho_update_period_epochs = rho_update_period_epochs
        self.lagrange_weight_initial = lagrange_weight_initial
        self.lagrange_update_period_iters = lagrange_update_period_iters
        self.misreport_lr = misreport_lr
        self.misreport_iters = misreport_iters
        self.misreport_inits = misreport_inits
        self.n_train_samples = n_train_samples
        self.sigma = sigma
        self.n_noise_samples = n_noise_samples
        self.random_state = random_state

    # --- sklearn estimator protocol -------------------------------------

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "NeuralAuction":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"invalid parameter {key!r} for NeuralAuction")
            setattr(self, key, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"NeuralAuction({args})"

    # --- fitting and prediction -----------------------------------------

    @property
    def size(self) -> AuctionSize:
        return AuctionSize(self.n_bidders, self.n_items)

    def _architecture(self) -> NetArchitecture:
        if self.hidden_layers is None:
            return default_architecture(self.size, hidden_width=self.hidden_width)
        return NetArchitecture(self.size, self.hidden_layers, self.hidden_width)

    def _train_config(self, n_samples: int | None = None) -> TrainConfig:
        overrides = dict(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lagrange_weight_initial=self.lagrange_weight_initial,
            lagrange_update_period_iters=self.lagrange_update_period_iters,
            misreport_lr=self.misreport_lr,
            misreport_iters=self.misreport_iters,
            misreport_inits=self.misreport_inits,
            n_train_samples=n_samples if n_samples is not None else self.n_train_samples,
            seed=self.random_state,
        )
        for name in ("epochs", "rho_initial", "rho_increment", "rho_update_period_epochs"):
            value = getattr(self, name)
            if value is not None:
                overrides[name] = value
        return TrainConfig.for_size(self.size, **overrides)

    def fit(self, X=None, y=None, progress=None) -> "NeuralAuction":
        """Train the mechanism. ``X`` may be an array of valuation profiles
        (count, n_bidders, n_items); by default profiles are sampled from the
        U[0,1] prior. ``y`` is ignored (present for API compatibility)."""
        data = None
        n_samples = None
        if X is not None:
            data = check_bid_batch(X, self.size)
            n_samples = data.shape[0]
        cfg = self._train_config(n_samples)
        self.net_, self.report_ = train(self._architecture(), UNIFORM_UNIT, cfg, progress=progress, data=data)
        return self

    def _check_fitted(self) -> MechanismNet:
        net = getattr(self, "net_", None)
        if net is None:
            raise RuntimeError("this NeuralAuction instance is not fitted yet; call fit first")
        return net

    def _outcome_batch(self, X: np.ndarray):
        net = self._check_fitted()
        batch = check_bid_batch(X, self.size)
        N = batch.shape[0]
        eps = None
        expected = False
        if self.sigma > 0:
            rng = Rng(self.random_state).child("predict-noise")
            eps = rng.normal(
                scale=self.sigma, size=(self.n_noise_samples, self.n_items, self.n_bidders + 1)
            )
            expected = True
        tr = _forward_batch(net.layers(), self.size, batch.reshape(N, -1), eps, expected=expected)
        return tr, N

    def predict(self, X) -> np.ndarray:
        """Payments (count, n_bidders) for a batch of bid profiles."""
        tr, N = self._outcome_batch(X)
        return tr.pay[:N].copy()

    def predict_allocation(self, X) -> np.ndarray:
        """Allocations (count, n_bidders + 1, n_items), ghost row last."""
        tr, N = self._outcome_batch(X)
        return np.ascontiguousarray(tr.alloc[:N].swapaxes(1, 2))

    def score(self, X=None, y=None) -> float:
        """Mean revenue (total payment per auction); on sampled profiles when
        ``X`` is None."""
        if X is not None:
            return float(self.predict(X).sum(axis=1).mean())
        net = self._check_fitted()
        noise = (
            NoiseSpec(self.sigma, Rng(self.random_state).child("score-noise"))
            if self.sigma > 0
            else NO_NOISE
        )
        res = evaluate(
            net,
            UNIFORM_UNIT,
            noise,
            n_noise_samples=self.n_noise_samples,
            config=self._train_config(),
        )
        return res.revenue
