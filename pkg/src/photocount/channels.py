"""Detector transfer matrices: binomial loss, Poisson dark counts, and their composition.

Matrices are indexed ``entries[k, n]``: row = detected count, column = source
photon number. Entries are assembled in extended precision from exact integer
binomials and factorials, then rounded once to the output dtype; anything that
would overflow falls back to a log-space evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import special

from .distributions import DetectorModel, PhotonNumberDistribution, poisson_pmf
from .exceptions import InvariantError, TruncationMismatchError

#: Working precision for building matrix entries (80-bit on x86-64 Linux).
EXTENDED = np.longdouble
ROLES = ("loss", "dark", "composed", "loss_inverse", "dark_inverse", "composed_inverse")


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    entries: np.ndarray
    role: str
    detector: DetectorModel
    truncation: int

    def __post_init__(self):
        if self.role not in ROLES:
            raise InvariantError(f"unknown matrix role {self.role!r}")
        entries = np.array(self.entries, copy=True)
        if entries.dtype not in (np.float64, EXTENDED):
            entries = entries.astype(np.float64)
        size = self.truncation + 1
        if entries.shape != (size, size):
            raise InvariantError(f"entries must be {size}x{size}, got {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def __matmul__(self, other):
        if isinstance(other, TransferMatrix):
            return self.entries @ other.entries
        return self.entries @ other

    def column_deficits(self) -> np.ndarray:
        """``1 - sum_k entries[k, n]`` per column (zero for the loss channel)."""
        return 1.0 - self.entries.sum(axis=0)

    def to_json(self) -> dict:
        return {
            "role": self.role,
            "truncation": self.truncation,
            "efficiency": self.detector.efficiency,
            "dark_mean": self.detector.dark_mean,
            "entries": self.entries.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> TransferMatrix:
        detector = DetectorModel(obj["efficiency"], obj["dark_mean"])
        return cls(np.asarray(obj["entries"], dtype=float), obj["role"], detector, int(obj["truncation"]))


def log_binomial(n, k):
    """log C(n, k); -inf where k > n or k < 0."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    valid = (k >= 0) & (k <= n)
    with np.errstate(invalid="ignore"):
        out = special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)
    return np.where(valid, out, -np.inf)


@lru_cache(maxsize=32)
def binomial_table(size: int) -> np.ndarray:
    """``table[k, n] = C(n, k)`` from exact integers, rounded once to extended precision."""
    table = np.array(
        [[math.comb(n, k) for n in range(size)] for k in range(size)], dtype=object
    ).astype(EXTENDED)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=32)
def factorial_table(size: int) -> np.ndarray:
    table = np.array([math.factorial(j) for j in range(size)], dtype=object).astype(EXTENDED)
    table.setflags(write=False)
    return table


def finalize(direct: np.ndarray, fallback, dtype) -> np.ndarray:
    """Cast extended-precision entries to ``dtype``; entries that overflow use ``fallback()``."""
    out = direct.astype(dtype)
    bad = ~np.isfinite(out)
    if bad.any():
        out[bad] = np.asarray(fallback(), dtype=dtype)[bad]
    return out


def _loss_log_space(efficiency, truncation):
    k = np.arange(truncation + 1)[:, None]
    n = np.arange(truncation + 1)[None, :]
    upper = k <= n
    kk = np.where(upper, k, 0)
    log_p = log_binomial(n, kk) + special.xlogy(kk, efficiency) + special.xlog1py(n - kk, -efficiency)
    return np.where(upper, np.exp(log_p), 0.0)


def loss_entries(efficiency: float, truncation: int, dtype=np.float64) -> np.ndarray:
    size = truncation + 1
    k = np.arange(size, dtype=EXTENDED)[:, None]
    n = np.arange(size, dtype=EXTENDED)[None, :]
    upper = k <= n
    eta = EXTENDED(efficiency)
    with np.errstate(over="ignore", invalid="ignore"):
        direct = binomial_table(size) * eta ** np.where(upper, k, 0) * (1 - eta) ** np.where(upper, n - k, 0)
    direct = np.where(upper, direct, 0)
    return finalize(direct, lambda: _loss_log_space(efficiency, truncation), dtype)


def poisson_extended(mean: float, size: int) -> np.ndarray:
    """Poisson pmf ``0..size-1`` in extended precision."""
    j = np.arange(size, dtype=EXTENDED)
    lam = EXTENDED(mean)
    return np.exp(-lam) * lam ** j / factorial_table(size)


def dark_entries(dark_counts: Sequence[float] | np.ndarray, truncation: int, dtype=np.float64) -> np.ndarray:
    """Toeplitz lower-triangular matrix ``entries[k, d] = D(k - d)``."""
    dist = np.zeros(truncation + 1, dtype=EXTENDED)
    values = np.asarray(dark_counts)[: truncation + 1]
    dist[: values.size] = values
    lag = np.arange(truncation + 1)[:, None] - np.arange(truncation + 1)[None, :]
    return np.where(lag >= 0, dist[np.clip(lag, 0, None)], 0).astype(dtype)


def loss_matrix(detector: DetectorModel, truncation: int, dtype=np.float64) -> TransferMatrix:
    """Binomial survival channel ``P(k|n) = C(n,k) eta^k (1-eta)^(n-k)``; dark counts ignored.

    Entries use exact integer binomials and extended-precision powers, then are
    rounded to ``dtype`` (pass ``np.longdouble`` to keep the extra bits).
    """
    if truncation < 0:
        raise InvariantError("truncation must be >= 0")
    return TransferMatrix(loss_entries(detector.efficiency, truncation, dtype), "loss", detector, truncation)


def dark_matrix(detector: DetectorModel, truncation: int, dark_counts=None, dtype=np.float64) -> TransferMatrix:
    """Dark-count channel ``D[k, d] = D(k - d)``.

    ``dark_counts`` overrides the default Poisson(dark_mean) distribution with
    an arbitrary dark-count pmf.
    """
    if dark_counts is None:
        dark_counts = poisson_extended(detector.dark_mean, truncation + 1)
    else:
        dark_counts = np.asarray(dark_counts, dtype=float)
        if np.any(dark_counts < 0) or dark_counts.sum() > 1.0 + 1e-9:
            raise InvariantError("dark_counts must be a sub-probability vector")
    return TransferMatrix(dark_entries(dark_counts, truncation, dtype), "dark", detector, truncation)


def composed_matrix(detector: DetectorModel, truncation: int, dark_counts=None, dtype=np.float64) -> TransferMatrix:
    """Loss followed by dark counts, ``P_D = D @ P``.

    Truncating the product is exact: the inner index runs over ``d <= min(k, n)``.
    """
    dark = dark_matrix(detector, truncation, dark_counts, dtype=EXTENDED)
    loss = loss_matrix(detector, truncation, dtype=EXTENDED)
    return TransferMatrix((dark.entries @ loss.entries).astype(dtype), "composed", detector, truncation)


def apply_forward(channel: TransferMatrix, source: PhotonNumberDistribution) -> PhotonNumberDistribution:
    """Counting distribution ``P(k) = sum_n channel[k, n] S(n)``."""
    if source.truncation != channel.truncation:
        raise TruncationMismatchError(
            f"source truncation {source.truncation} != channel truncation {channel.truncation}"
        )
    out = channel.entries @ source.probs
    # rounding can leave -1e-18 style residue on exact zeros
    out = np.where(out < 0, 0.0, out)
    return PhotonNumberDistribution(out)


def coherent_counting_pmf(mean: float, efficiency: float, k: int) -> float:
    """Closed-form counting pmf for coherent input without dark counts: Poisson(mean * efficiency)."""
    if not mean > 0:
        raise InvariantError("mean must be positive")
    if not 0.0 <= efficiency <= 1.0:
        raise InvariantError("efficiency must lie in [0, 1]")
    if k < 0:
        return 0.0
    rate = mean * efficiency
    return math.exp(special.xlogy(k, rate) - rate - math.lgamma(k + 1))


def confidence(detector: DetectorModel, k: int) -> float:
    """Probability ``P_D(k|k)`` that ``k`` incident photons read as exactly ``k``.

    Equals ``efficiency**k`` without dark counts.
    """
    if k < 0:
        raise InvariantError("k must be >= 0")
    eta = detector.efficiency
    if detector.dark_mean == 0.0:
        return eta ** k
    d = np.arange(k + 1)
    dark = poisson_pmf(detector.dark_mean, k)
    # choose(k, k-d) eta^(k-d) (1-eta)^d
    survive = np.exp(
        log_binomial(k, k - d) + special.xlogy(k - d, eta) + special.xlog1py(d, -eta)
    )
    return float(np.dot(dark, survive))

