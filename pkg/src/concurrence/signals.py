"""Paired multichannel time series and the dataset container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SignalPair", "Dataset"]


@dataclass
class SignalPair:
    """One (x, y) pair of synchronized signals, shapes (Kx, T) and (Ky, T)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=np.float64))
        if self.x.ndim != 2 or self.y.ndim != 2:
            raise ValueError("signals must be 2-D (channels, time)")
        if self.x.shape[1] != self.y.shape[1]:
            raise ValueError("x and y must share the time axis length")

    @property
    def length(self) -> int:
        return self.x.shape[1]


@dataclass
class Dataset:
    """A list of signal pairs with homogeneous shapes plus provenance."""

    pairs: list[SignalPair]
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("dataset must contain at least one pair")
        kx, ky, t = self.kx, self.ky, self.length
        for i, p in enumerate(self.pairs):
            if p.x.shape != (kx, t) or p.y.shape != (ky, t):
                raise ValueError(f"pair {i} shape differs from the rest")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def kx(self) -> int:
        return self.pairs[0].x.shape[0]

    @property
    def ky(self) -> int:
        return self.pairs[0].y.shape[0]

    @property
    def length(self) -> int:
        return self.pairs[0].length

    def subset(self, indices) -> "Dataset":
        manifest = dict(self.manifest)
        manifest["subset_of"] = manifest.get("generator", "unknown")
        manifest["subset_indices"] = [int(i) for i in indices]
        return Dataset([self.pairs[int(i)] for i in indices], manifest)
