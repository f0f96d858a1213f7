"""Photon-number distributions, detector parameters and count histograms.

All containers are immutable: the underlying numpy arrays are flagged
read-only on construction. Truncated distributions keep their tail deficit
(``1 - probs.sum()``) unless :func:`renormalize` is called explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import InvariantError

#: Default slack on normalization for analytically built vectors.
NORM_TOL = 1e-9


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PhotonNumberDistribution:
    """Probability vector over photon numbers ``0..truncation``.

    ``probs`` may sum to less than one; the missing mass is the tail beyond
    the truncation and is exposed as :attr:`deficit`.
    """

    probs: np.ndarray
    tol: float = NORM_TOL

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 1 or probs.size == 0:
            raise InvariantError("probs must be a non-empty 1-D vector")
        if not np.all(np.isfinite(probs)):
            raise InvariantError("probs must be finite")
        if np.any(probs < 0):
            raise InvariantError(f"negative probability {probs.min():.3g}")
        total = float(probs.sum())
        if total > 1.0 + self.tol:
            raise InvariantError(f"probabilities sum to {total!r} > 1")
        object.__setattr__(self, "probs", probs)

    @property
    def truncation(self) -> int:
        return self.probs.size - 1

    @property
    def deficit(self) -> float:
        """Probability mass missing beyond the truncation."""
        return max(0.0, 1.0 - math.fsum(self.probs))

    def __len__(self):
        return self.probs.size

    def __getitem__(self, n):
        return self.probs[n]

    def __eq__(self, other):
        if not isinstance(other, PhotonNumberDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def to_json(self) -> dict:
        return {"truncation": self.truncation, "probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> PhotonNumberDistribution:
        probs = obj["probs"]
        if len(probs) != int(obj["truncation"]) + 1:
            raise InvariantError("len(probs) must equal truncation + 1")
        return cls(np.asarray(probs, dtype=float))


@dataclass(frozen=True)
class DetectorModel:
    """Quantum efficiency and mean dark count per counting window."""

    efficiency: float
    dark_mean: float = 0.0

    def __post_init__(self):
        eta = float(self.efficiency)
        dark = float(self.dark_mean)
        if not (math.isfinite(eta) and 0.0 <= eta <= 1.0):
            raise InvariantError(f"efficiency must lie in [0, 1], got {self.efficiency!r}")
        if not (math.isfinite(dark) and dark >= 0.0):
            raise InvariantError(f"dark_mean must be finite and >= 0, got {self.dark_mean!r}")
        object.__setattr__(self, "efficiency", eta)
        object.__setattr__(self, "dark_mean", dark)

    def to_json(self) -> dict:
        return {"efficiency": self.efficiency, "dark_mean": self.dark_mean}

    @classmethod
    def from_json(cls, obj: dict) -> DetectorModel:
        return cls(obj["efficiency"], obj.get("dark_mean", 0.0))


@dataclass(frozen=True, eq=False)
class CountHistogram:
    """Raw counts of detected photon numbers over repeated trials."""

    counts: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.counts)
        if raw.ndim != 1 or raw.size == 0:
            raise InvariantError("counts must be a non-empty 1-D vector")
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                raise InvariantError("counts must be integers")
        elif raw.dtype.kind not in "iu":
            raise InvariantError("counts must be integers")
        counts = _frozen(raw, dtype=np.int64)
        if np.any(counts < 0):
            raise InvariantError("counts must be non-negative")
        if counts.sum() < 1:
            raise InvariantError("histogram total must be >= 1")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __len__(self):
        return self.counts.size

    def __eq__(self, other):
        if not isinstance(other, CountHistogram):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash(self.counts.tobytes())

    def to_json(self) -> dict:
        return {"counts": self.counts.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> CountHistogram:
        return cls(np.asarray(obj["counts"]))


def poisson_pmf(mean: float, truncation: int) -> np.ndarray:
    """Poisson probabilities for ``0..truncation`` via log-Gamma (no factorial overflow)."""
    n = np.arange(truncation + 1)
    if mean == 0.0:
        out = np.zeros(truncation + 1)
        out[0] = 1.0
        return out
    return np.exp(special.xlogy(n, mean) - mean - special.gammaln(n + 1))


def poisson_tail(mean: float, truncation: int) -> float:
    """P(X > truncation) for X ~ Poisson(mean)."""
    return float(special.pdtrc(truncation, mean))


def coherent_source(mean: float, truncation: int) -> PhotonNumberDistribution:
    """Photon-number distribution of a coherent state: Poisson with the given mean.

    The result is *not* renormalized; its deficit is the Poisson upper tail.
    """
    mean = float(mean)
    if not math.isfinite(mean) or mean <= 0.0:
        raise InvariantError(f"coherent mean must be finite and positive, got {mean!r}")
    if truncation < 1:
        raise InvariantError("truncation must be >= 1")
    return PhotonNumberDistribution(poisson_pmf(mean, truncation))


def recommended_truncation(mean: float) -> int:
    """Cutoff ``ceil(mean + 10 sqrt(mean) + 10)``.

    Keeps the mean error of a truncated Poisson below 1e-9 for any mean; the
    ``+ 10`` matters below a mean of about 2.
    """
    return math.ceil(mean + 10.0 * math.sqrt(mean) + 10.0)


def fock_source(m: int, truncation: int) -> PhotonNumberDistribution:
    if m < 0 or m > truncation:
        raise InvariantError(f"Fock number {m} outside 0..{truncation}")
    probs = np.zeros(truncation + 1)
    probs[m] = 1.0
    return PhotonNumberDistribution(probs)


def renormalize(dist: PhotonNumberDistribution) -> PhotonNumberDistribution:
    total = math.fsum(dist.probs)
    if total <= 0:
        raise InvariantError("cannot renormalize a zero vector")
    return PhotonNumberDistribution(dist.probs / total)


def pad(dist: PhotonNumberDistribution, truncation: int) -> PhotonNumberDistribution:
    """Extend ``dist`` with zeros up to ``truncation`` (never shortens)."""
    if truncation < dist.truncation:
        raise InvariantError("pad cannot shorten a distribution")
    probs = np.zeros(truncation + 1)
    probs[: len(dist)] = dist.probs
    return PhotonNumberDistribution(probs, tol=dist.tol)


def mean(dist: PhotonNumberDistribution) -> float:
    return float(np.dot(np.arange(len(dist)), dist.probs))


def entropy(dist) -> float:
    """Shannon entropy in nats, with 0 ln 0 = 0."""
    probs = dist.probs if isinstance(dist, PhotonNumberDistribution) else np.asarray(dist)
    return float(-special.xlogy(probs, probs).sum())
