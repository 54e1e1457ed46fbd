"""Dual-polarization sampled field container."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError

SYMBOL_RATE = 32e9


@dataclass(frozen=True)
class DualPolSignal:
    """Complex field samples of the X and Y polarizations.

    ``x`` and ``y`` are in sqrt(W) on the optical side and dimensionless
    once a receiver has normalized them.
    """

    x: np.ndarray
    y: np.ndarray
    sample_rate: float
    samples_per_symbol: int
    mean_power_dbm: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.complex128)
        y = np.asarray(self.y, dtype=np.complex128)
        if x.shape != y.shape or x.ndim != 1:
            raise ConfigurationError("polarizations must be equal-length 1-D arrays")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.x.size

    @property
    def fields(self) -> np.ndarray:
        """Stacked ``(2, n)`` view of both polarizations."""
        return np.stack([self.x, self.y])

    @property
    def symbol_rate(self) -> float:
        return self.sample_rate / self.samples_per_symbol

    def power(self) -> float:
        """Mean total power ``<|Ex|^2 + |Ey|^2>``."""
        return float(np.mean(np.abs(self.x) ** 2 + np.abs(self.y) ** 2))

    def with_fields(self, x, y, **changes) -> "DualPolSignal":
        return replace(self, x=x, y=y, **changes)

    def scaled(self, factor: complex) -> "DualPolSignal":
        return self.with_fields(self.x * factor, self.y * factor)
