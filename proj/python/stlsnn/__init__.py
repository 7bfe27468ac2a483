"""Spiking-network trainer with jointly learned weights and firing thresholds.

The heavy lifting lives in the compiled `_core` extension; this package
re-exports its full surface: the config-driven `Engine`, data preparation
(`synthetic_digits`, `load_idx`, `bernoulli_encode`, event slicing, noise
injection), and the gradient-checking and ensemble-evaluation helpers.
"""

try:
    from ._core import *  # noqa: F401,F403
    from ._core import Engine, Error, __version__  # noqa: F401
except ImportError:  # pragma: no cover - build-tree layout without a wheel
    from _core import *  # type: ignore  # noqa: F401,F403
    from _core import Engine, Error, __version__  # type: ignore  # noqa: F401
