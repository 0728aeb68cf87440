"""Experiment configuration: one YAML file fully describes a run.

Sections mirror the package modules: ``experiment`` (size, distribution,
seeds, output), ``trainer`` (training overrides), ``attack`` (inversion
settings and threat/init choice), ``noise`` (the sigma grid), ``eval``
(revenue/regret estimation scale), ``myerson`` (baseline settings). Unknown
keys and malformed values are rejected with the offending section and field
named, so a config typo cannot silently change an experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

import yaml

from .core import AuctionSize, UNIFORM_UNIT, ValuationDistribution
from .inversion import (
    AttackConfig,
    InitStrategy,
    OutsideObserver,
    ParticipatingBidder,
    SamplePrior,
    ThreatModel,
    Zeros,
)
from .training import TrainConfig

__all__ = ["ConfigError", "ExperimentConfig", "load_config"]


class ConfigError(ValueError):
    """Configuration file is unreadable or invalid; message names the field."""


_TRAINER_KEYS = {f.name for f in dc_fields(TrainConfig) if f.name != "seed"}
_ATTACK_KEYS = {
    "learning_rate",
    "iterations",
    "zeros_cap",
    "threat",
    "threat_bidder",
    "init",
    "n_outcomes",
    "tolerance",
    "sigma",
}
_EXPERIMENT_KEYS = {"size", "distribution", "seeds", "out_dir"}
_EVAL_KEYS = {"n_profiles", "n_noise_samples"}
_MYERSON_KEYS = {"reserve", "n_samples", "tolerance"}
_NOISE_KEYS = {"sigma_grid"}
_SECTIONS = {"experiment", "trainer", "attack", "noise", "eval", "myerson"}


def _check_keys(section: str, mapping: dict, allowed: set) -> None:
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}: unknown field (allowed: {sorted(allowed)})")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


@dataclass
class ExperimentConfig:
    """Validated, typed view of one experiment file."""

    size: AuctionSize
    distribution: ValuationDistribution = UNIFORM_UNIT
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "out"
    trainer_overrides: dict = field(default_factory=dict)
    attack_lr: float = 0.002
    attack_iterations: int = 50_000
    attack_zeros_cap: float = 10.0
    attack_sigma: float = 0.0
    threat: str = "outside"
    threat_bidder: int = 0
    init: str = "prior"
    n_outcomes: int = 1000
    tolerance: float = 0.02
    sigma_grid: list[float] = field(default_factory=lambda: [0.0, 0.2, 0.5, 1.0])
    eval_n_profiles: int = 10_000
    eval_n_noise_samples: int = 100
    myerson_reserve: float = 0.5
    myerson_n_samples: int = 1_000_000
    myerson_tolerance: float = 0.02

    def validate(self) -> None:
        _require(len(self.seeds) >= 1, "experiment.seeds: need at least one seed")
        _require(
            len(set(self.seeds)) == len(self.seeds), "experiment.seeds: duplicate seeds"
        )
        _require(len(self.sigma_grid) >= 1, "noise.sigma_grid: must be non-empty")
        _require(
            all(s >= 0 for s in self.sigma_grid),
            "noise.sigma_grid: entries must be nonnegative",
        )
        _require(
            all(a < b for a, b in zip(self.sigma_grid, self.sigma_grid[1:])),
            "noise.sigma_grid: entries must be strictly increasing",
        )
        _require(self.threat in ("outside", "participating"), "attack.threat: must be 'outside' or 'participating'")
        _require(self.init in ("prior", "zeros"), "attack.init: must be 'prior' or 'zeros'")
        _require(self.n_outcomes >= 1, "attack.n_outcomes: must be >= 1")
        _require(self.tolerance > 0, "attack.tolerance: must be positive")
        _require(self.attack_sigma >= 0, "attack.sigma: must be nonnegative")
        _require(0 <= self.threat_bidder < self.size.n_bidders, "attack.threat_bidder: out of range")
        _require(self.eval_n_profiles >= 1, "eval.n_profiles: must be >= 1")
        _require(self.eval_n_noise_samples >= 1, "eval.n_noise_samples: must be >= 1")
        _require(0 <= self.myerson_reserve <= 1, "myerson.reserve: must lie in [0, 1]")
        _require(self.myerson_n_samples >= 1, "myerson.n_samples: must be >= 1")
        _require(self.myerson_tolerance > 0, "myerson.tolerance: must be positive")
        try:
            self.train_config(self.seeds[0])
        except (ValueError, TypeError) as e:
            raise ConfigError(f"trainer: {e}") from e

    # --- factories used by the harness ----------------------------------

    def train_config(self, seed: int) -> TrainConfig:
        cfg = TrainConfig.for_size(self.size, seed=seed, **self.trainer_overrides)
        cfg.validate()
        return cfg

    def attack_config(self, seed: int) -> AttackConfig:
        return AttackConfig(
            learning_rate=self.attack_lr,
            iterations=self.attack_iterations,
            seed=seed,
            zeros_cap=self.attack_zeros_cap,
        )

    def threat_model(self) -> ThreatModel:
        if self.threat == "participating":
            return ParticipatingBidder(self.threat_bidder)  # rows supplied per outcome
        return OutsideObserver()

    def init_strategy(self) -> InitStrategy:
        return Zeros() if self.init == "zeros" else SamplePrior(self.distribution)


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment file; raises ConfigError with the
    YAML line or the offending section.field on any problem."""
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e}") from e
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"{path}: YAML error{where}: {e.problem}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: YAML error: {e}") from e

    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    for section in raw:
        if section not in _SECTIONS:
            raise ConfigError(f"{section}: unknown section (allowed: {sorted(_SECTIONS)})")

    exp = raw.get("experiment") or {}
    _check_keys("experiment", exp, _EXPERIMENT_KEYS)
    size_raw = exp.get("size")
    _require(
        isinstance(size_raw, (list, tuple)) and len(size_raw) == 2,
        "experiment.size: expected [n_bidders, n_items]",
    )
    try:
        size = AuctionSize(int(size_raw[0]), int(size_raw[1]))
    except (ValueError, TypeError) as e:
        raise ConfigError(f"experiment.size: {e}") from e
    dist_name = exp.get("distribution", "uniform_unit")
    _require(dist_name == "uniform_unit", "experiment.distribution: only 'uniform_unit' is supported")
    seeds = exp.get("seeds", [0])
    _require(
        isinstance(seeds, list) and all(isinstance(s, int) for s in seeds),
        "experiment.seeds: expected a list of integers",
    )

    trainer = raw.get("trainer") or {}
    _check_keys("trainer", trainer, _TRAINER_KEYS)

    attack = raw.get("attack") or {}
    _check_keys("attack", attack, _ATTACK_KEYS)
    noise = raw.get("noise") or {}
    _check_keys("noise", noise, _NOISE_KEYS)
    evl = raw.get("eval") or {}
    _check_keys("eval", evl, _EVAL_KEYS)
    mye = raw.get("myerson") or {}
    _check_keys("myerson", mye, _MYERSON_KEYS)

    def num(section, mapping, key, default, kind=float):
        value = mapping.get(key, default)
        try:
            return kind(value)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{section}.{key}: expected {kind.__name__}, got {value!r}") from e

    cfg = ExperimentConfig(
        size=size,
        distribution=UNIFORM_UNIT,
        seeds=list(seeds),
        out_dir=str(exp.get("out_dir", "out")),
        trainer_overrides=dict(trainer),
        attack_lr=num("attack", attack, "learning_rate", 0.002),
        attack_iterations=num("attack", attack, "iterations", 50_000, int),
        attack_zeros_cap=num("attack", attack, "zeros_cap", 10.0),
        attack_sigma=num("attack", attack, "sigma", 0.0),
        threat=str(attack.get("threat", "outside")),
        threat_bidder=num("attack", attack, "threat_bidder", 0, int),
        init=str(attack.get("init", "prior")),
        n_outcomes=num("attack", attack, "n_outcomes", 1000, int),
        tolerance=num("attack", attack, "tolerance", 0.02),
        sigma_grid=[float(s) for s in noise.get("sigma_grid", [0.0, 0.2, 0.5, 1.0])],
        eval_n_profiles=num("eval", evl, "n_profiles", 10_000, int),
        eval_n_noise_samples=num("eval", evl, "n_noise_samples", 100, int),
        myerson_reserve=num("myerson", mye, "reserve", 0.5),
        myerson_n_samples=num("myerson", mye, "n_samples", 1_000_000, int),
        myerson_tolerance=num("myerson", mye, "tolerance", 0.02),
    )
    cfg.validate()
    return cfg
