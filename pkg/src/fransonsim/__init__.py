"""Monte Carlo simulator and analysis toolchain for a microring Franson experiment."""

from __future__ import annotations

__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
