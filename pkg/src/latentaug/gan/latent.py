"""Latent code container shared by every pipeline stage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPACES = ("Z", "W", "Wplus")


class LatentSpaceError(ValueError):
    """Raised when an operation receives a code from the wrong space."""


@dataclass
class LatentCode:
    """A point in Z (Gaussian prior), W (mapped style), or W+ (per-layer styles).

    Z and W codes are 1-D vectors of dimension D; Wplus codes are L x D with
    one row per synthesis style input.
    """

    space: str
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.space not in SPACES:
            raise LatentSpaceError(f"unknown latent space {self.space!r}")
        self.values = np.asarray(self.values)
        if self.values.dtype not in (np.float32, np.float64):
            self.values = self.values.astype(np.float32)
        expected_ndim = 2 if self.space == "Wplus" else 1
        if self.values.ndim != expected_ndim:
            raise LatentSpaceError(
                f"{self.space} code must be {expected_ndim}-D, got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise LatentSpaceError("latent values must be finite")

    @property
    def dim(self) -> int:
        return int(self.values.shape[-1])

    def require(self, *spaces: str) -> "LatentCode":
        if self.space not in spaces:
            raise LatentSpaceError(f"expected latent in {spaces}, got {self.space}")
        return self

    def copy(self) -> "LatentCode":
        return LatentCode(space=self.space, values=self.values.copy())
