"""Uniform box prior over the parameter space."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["BoxPrior"]


@dataclass(frozen=True)
class BoxPrior:
    """Uniform density over an axis-aligned box given as (p, 2) bounds."""

    bounds: np.ndarray

    def __post_init__(self):
        bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        object.__setattr__(self, "bounds", bounds)
        if bounds.shape[1] != 2 or np.any(bounds[:, 0] >= bounds[:, 1]):
            raise DomainError("bounds must be (p, 2) rows of low < high")

    @property
    def dim(self):
        return self.bounds.shape[0]

    @property
    def volume(self):
        return float(np.prod(self.bounds[:, 1] - self.bounds[:, 0]))

    def contains(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all(
            (points >= self.bounds[:, 0]) & (points <= self.bounds[:, 1]), axis=1
        )

    def density(self, points):
        inside = self.contains(points)
        return np.where(inside, 1.0 / self.volume, 0.0)

    def log_density(self, points):
        inside = self.contains(points)
        return np.where(inside, -np.log(self.volume), -np.inf)

    def sample(self, count, rng):
        low, high = self.bounds[:, 0], self.bounds[:, 1]
        return low + (high - low) * rng.random((count, self.dim))

    def clip(self, points):
        return np.clip(points, self.bounds[:, 0], self.bounds[:, 1])
