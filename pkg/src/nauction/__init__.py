"""Neural auctions, model-inversion attacks on their outputs, and a noise defense.

Submodules are imported lazily so the command-line front end can configure
BLAS threading before numpy is first loaded.
"""

import os
import sys
from importlib import import_module

__version__ = "0.1.0"


def _pick_blas_kernel():
    """scipy-openblas misdetects masked cloud CPUs and falls back to AVX2
    kernels; force the AVX-512 kernel family when the hardware supports it.
    Takes effect only if numpy has not been imported yet; purely a speed knob.
    """
    if "numpy" in sys.modules or "OPENBLAS_CORETYPE" in os.environ:
        return
    try:
        with open("/proc/cpuinfo") as f:
            flags = f.read()
        if " avx512f" in flags or "avx512f " in flags:
            os.environ["OPENBLAS_CORETYPE"] = "SKYLAKEX"
    except OSError:
        pass


_pick_blas_kernel()

_SUBMODULES = (
    "core",
    "validation",
    "mechanism",
    "training",
    "myerson",
    "inversion",
    "metrics",
    "estimator",
    "expconfig",
    "figures",
    "cli",
)

__all__ = list(_SUBMODULES)


def __getattr__(name):
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_SUBMODULES))
