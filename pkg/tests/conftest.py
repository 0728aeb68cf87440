import os
import sys
from pathlib import Path

# BLAS knobs must be set before numpy loads: single-threaded OpenBLAS is
# fastest for this workload's small GEMMs and keeps results reproducible.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
import nauction  # noqa: E402,F401  (selects AVX-512 kernels when available)

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from nauction.core import AuctionSize, UNIFORM_UNIT, Rng  # noqa: E402
from nauction.mechanism import (  # noqa: E402
    MechanismNet,
    NetArchitecture,
    default_architecture,
    load_checkpoint,
    save_checkpoint,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
ARTIFACTS = Path(os.environ.get("NAUCTION_ARTIFACTS", REPO_ROOT / "artifacts"))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training/attack tests")


@pytest.fixture(scope="session")
def artifacts_dir() -> Path:
    ARTIFACTS.mkdir(parents=True, exist_ok=True)
    return ARTIFACTS


def _trained(artifacts_dir: Path, n: int, m: int, quarter: bool = False) -> MechanismNet:
    """Load a published-config checkpoint, training it first if absent.

    Training at the published scale takes CPU-hours; the artifacts directory
    caches the result, keyed by size and sample budget (runs are deterministic
    for a fixed config and seed, so the cache is sound).
    """
    tag = f"{n}x{m}" + ("_quarter" if quarter else "")
    path = artifacts_dir / f"{tag}.nauc"
    size = AuctionSize(n, m)
    if not path.exists():
        from nauction.training import TrainConfig, train

        overrides = {"n_train_samples": 160_000} if quarter else {}
        cfg = TrainConfig.for_size(size, **overrides)
        print(
            f"\n[conftest] no cached {tag} checkpoint; training at published scale "
            f"({cfg.epochs} epochs x {cfg.n_train_samples} samples) — this takes hours",
            file=sys.stderr,
            flush=True,
        )
        net, _ = train(default_architecture(size), UNIFORM_UNIT, cfg)
        save_checkpoint(net, path)
    return load_checkpoint(path, expected_size=size)


@pytest.fixture(scope="session")
def trained_2x2(artifacts_dir) -> MechanismNet:
    return _trained(artifacts_dir, 2, 2)


@pytest.fixture(scope="session")
def trained_1x2(artifacts_dir) -> MechanismNet:
    return _trained(artifacts_dir, 1, 2)


@pytest.fixture(scope="session")
def trained_3x3_quarter(artifacts_dir) -> MechanismNet:
    return _trained(artifacts_dir, 3, 3, quarter=True)


@pytest.fixture
def small_net() -> MechanismNet:
    arch = NetArchitecture(AuctionSize(2, 2), hidden_layers=2, hidden_width=16)
    return MechanismNet.initialize(arch, Rng(42).child("small-net"))


@pytest.fixture
def rng() -> Rng:
    return Rng(1234)


@pytest.fixture
def bids_2x2(rng) -> np.ndarray:
    return rng.child("bids").uniform(size=(2, 2))
