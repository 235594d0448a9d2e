"""Fit and distance configuration."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidArgument


def _check_k(k) -> None:
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise InvalidArgument(f"k must be a positive integer, got {k}")


@dataclass(frozen=True)
class LatentConfig:
    """Neighbour rank ``k`` and whether vectors are projected to the unit sphere."""

    k: int = 10
    normalize: bool = True

    def __post_init__(self):
        _check_k(self.k)


@dataclass(frozen=True)
class FitConfig:
    """Detector fit configuration.

    ``q`` is the quantile of the per-class distance sample used as the
    peaks-over-threshold threshold; ``pairwise`` also fits the cross-class
    minimum-distance models needed for adversarial bounds.
    """

    k: int = 10
    q: float = 0.9
    normalize: bool = True
    pairwise: bool = False
    distance: str = "euclidean"

    def __post_init__(self):
        _check_k(self.k)
        if not 0 < self.q < 1:
            raise InvalidArgument(f"threshold quantile q must be in (0, 1), got {self.q}")
        if self.distance != "euclidean":
            raise InvalidArgument(f"unsupported distance {self.distance!r}")

    @property
    def latent(self) -> LatentConfig:
        return LatentConfig(k=self.k, normalize=self.normalize)
