"""Explicit inverses of the detector channels and linear unfolding diagnostics.

The composed (loss + Poisson dark count) inverse is a full matrix. Its closed
form uses the confluent hypergeometric function with integer parameters and
argument ``z = (1 - eta) * dark_mean / eta``. The powers of ``z`` are folded
into the prefactor here so the expression stays finite at ``eta = 1``::

    k <= n:  (-1)^(k+n) e^lam C(n, k) (1-eta)^(n-k) eta^-n      1F1(n+1, n-k+1, z)
    k >  n:  (-1)^(k+n) e^lam lam^(k-n) / (k-n)!    eta^-k      1F1(k+1, k-n+1, z)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .channels import (
    EXTENDED,
    TransferMatrix,
    binomial_table,
    composed_matrix,
    factorial_table,
    finalize,
    log_binomial,
)
from .distributions import DetectorModel, PhotonNumberDistribution
from .exceptions import InvariantError, NonInvertibleChannelError

PHYSICALITY_TOL = 1e-8
SERIES_RTOL = 1e-15


@dataclass(frozen=True)
class InversionDiagnostics:
    min_entry: float
    condition_estimate: float
    physical: bool
    tail_sensitivity: float

    def to_json(self) -> dict:
        return {
            "min_entry": self.min_entry,
            "condition_estimate": self.condition_estimate,
            "physical": self.physical,
            "tail_sensitivity": self.tail_sensitivity,
        }


def _require_invertible(detector: DetectorModel):
    if detector.efficiency <= 0.0:
        raise NonInvertibleChannelError("efficiency 0: the loss channel has no inverse")


def _signed_exp(log_abs, negative):
    return np.where(negative, -1.0, 1.0) * np.exp(log_abs)


def _loss_inverse_log_space(efficiency, truncation):
    n = np.arange(truncation + 1)[:, None]
    m = np.arange(truncation + 1)[None, :]
    upper = m >= n
    nn = np.where(upper, n, 0)
    log_abs = log_binomial(m, nn) - m * math.log(efficiency) + special.xlog1py(m - nn, -efficiency)
    return np.where(upper, _signed_exp(log_abs, (m - nn) % 2 == 1), 0.0)


def loss_inverse_entries(efficiency: float, truncation: int, dtype=np.float64) -> np.ndarray:
    """``inv[n, m] = C(m, n) eta^-m (eta - 1)^(m - n)`` for ``m >= n``."""
    size = truncation + 1
    n = np.arange(size, dtype=EXTENDED)[:, None]
    m = np.arange(size, dtype=EXTENDED)[None, :]
    upper = m >= n
    eta = EXTENDED(efficiency)
    with np.errstate(over="ignore", invalid="ignore"):
        direct = binomial_table(size) * eta ** (-m) * (eta - 1) ** np.where(upper, m - n, 0)
    direct = np.where(upper, direct, 0)
    return finalize(direct, lambda: _loss_inverse_log_space(efficiency, truncation), dtype)


def loss_inverse(detector: DetectorModel, truncation: int, dtype=np.float64) -> TransferMatrix:
    """Upper-triangular inverse of the binomial loss channel (alternating signs for eta < 1)."""
    _require_invertible(detector)
    return TransferMatrix(
        loss_inverse_entries(detector.efficiency, truncation, dtype), "loss_inverse", detector, truncation
    )


def dark_inverse_entries(dark_mean: float, truncation: int, dtype=np.float64) -> np.ndarray:
    """``inv[i, j] = e^lam (-lam)^(i-j) / (i-j)!`` for ``i >= j``."""
    size = truncation + 1
    lam = EXTENDED(dark_mean)
    series = np.exp(lam) * (-lam) ** np.arange(size, dtype=EXTENDED) / factorial_table(size)
    lag = np.arange(size)[:, None] - np.arange(size)[None, :]
    return np.where(lag >= 0, series[np.clip(lag, 0, None)], 0).astype(dtype)


def dark_inverse(detector: DetectorModel, truncation: int, dtype=np.float64) -> TransferMatrix:
    """Lower-triangular inverse of the Poisson dark-count channel."""
    return TransferMatrix(
        dark_inverse_entries(detector.dark_mean, truncation, dtype), "dark_inverse", detector, truncation
    )


def hyp1f1(a: int, b: int, z: float) -> float:
    """Kummer's confluent hypergeometric function 1F1(a; b; z) for a, b >= 1 and z >= 0.

    Plain power series; every term is positive so there is no cancellation.
    Summation stops once a geometric bound on the remaining tail drops below
    ``SERIES_RTOL`` times the partial sum.
    """
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"hyp1f1 argument must be finite, got {z!r}")
    if a < 1 or b < 1:
        raise ValueError("hyp1f1 is implemented for positive integer a and b")
    if z < 0:
        raise ValueError("hyp1f1 is implemented for z >= 0")
    if z == 0.0:
        return 1.0
    term = 1.0
    total = 1.0
    i = 0
    while True:
        term *= (a + i) / (b + i) * z / (i + 1)
        total += term
        i += 1
        # later ratios (a+j)/(b+j) * z/(j+1), j >= i, are all bounded by rho
        rho = max(1.0, (a + i) / (b + i)) * z / (i + 1)
        if rho < 1.0 and term * rho / (1.0 - rho) <= SERIES_RTOL * total:
            break
        if not math.isfinite(total):
            raise OverflowError(f"1F1({a}, {b}, {z}) overflows double precision")
    return total


def composed_inverse_analytic(detector: DetectorModel, truncation: int) -> TransferMatrix:
    """Closed-form inverse of the loss + dark-count channel.

    Falls back to :func:`loss_inverse` when ``dark_mean == 0``.
    """
    _require_invertible(detector)
    lam = detector.dark_mean
    if lam == 0.0:
        inv = loss_inverse(detector, truncation)
        return TransferMatrix(inv.entries, "composed_inverse", detector, truncation)
    eta = detector.efficiency
    z = (1.0 - eta) * lam / eta
    size = truncation + 1
    out = np.empty((size, size))
    log_eta = math.log(eta)
    for k in range(size):
        for n in range(size):
            sign = -1.0 if (k + n) % 2 else 1.0
            if k <= n:
                log_pref = (
                    lam
                    + float(log_binomial(n, k))
                    + float(special.xlog1py(n - k, -eta))
                    - n * log_eta
                )
                series = hyp1f1(n + 1, n - k + 1, z)
            else:
                log_pref = lam + (k - n) * math.log(lam) - math.lgamma(k - n + 1) - k * log_eta
                series = hyp1f1(k + 1, k - n + 1, z)
            out[k, n] = sign * math.exp(log_pref) * series
    return TransferMatrix(out, "composed_inverse", detector, truncation)


def composed_inverse_series(detector: DetectorModel, truncation: int, rtol: float = 1e-17) -> np.ndarray:
    """Composed inverse by direct summation over the intermediate index.

    ``sum_{i >= max(k, n)} C(i,k) eta^-i (eta-1)^(i-k) e^lam (-lam)^(i-n) / (i-n)!``.
    Terms below ``max(k, n)`` vanish identically and are skipped. Used to
    cross-check :func:`composed_inverse_analytic`.
    """
    _require_invertible(detector)
    eta = detector.efficiency
    lam = detector.dark_mean
    size = truncation + 1
    out = np.empty((size, size))
    for k in range(size):
        for n in range(size):
            sign = -1.0 if (k + n) % 2 else 1.0
            total = 0.0
            i = max(k, n)
            prev = math.inf
            while True:
                log_t = (
                    float(log_binomial(i, k))
                    - i * math.log(eta)
                    + float(special.xlog1py(i - k, -eta))
                    + lam
                    + float(special.xlogy(i - n, lam))
                    - math.lgamma(i - n + 1)
                )
                term = math.exp(log_t)
                total += term
                # the terms are unimodal in i; stop on the decreasing side
                if term == 0.0 or (term <= prev and term <= rtol * total):
                    break
                prev = term
                i += 1
            out[k, n] = sign * total
    return out


def condition_estimate(forward: np.ndarray, inverse: np.ndarray) -> float:
    """Infinity-norm condition number ``|A| |A^-1|`` from the closed-form inverse."""
    return float(np.linalg.norm(forward, np.inf) * np.linalg.norm(inverse, np.inf))


def channel_diagnostics(detector: DetectorModel, truncation: int) -> tuple[float, float]:
    """(condition_estimate, tail_sensitivity) of the truncated channel."""
    forward = composed_matrix(detector, truncation).entries
    inverse = composed_inverse_analytic(detector, truncation).entries
    return condition_estimate(forward, inverse), float(np.abs(inverse[:, -1]).max())


def invert_counts(
    observed: PhotonNumberDistribution | np.ndarray,
    detector: DetectorModel,
    truncation: int,
    tol: float = PHYSICALITY_TOL,
) -> tuple[np.ndarray, InversionDiagnostics]:
    """Raw linear unfolding ``S = P_D^-1 P`` of a counting distribution.

    Negative entries are kept, not clipped; ``diagnostics.physical`` reports
    them. Counts beyond ``truncation`` in ``observed`` still enter the
    estimate of the first ``truncation + 1`` photon numbers.
    """
    _require_invertible(detector)
    probs = observed.probs if isinstance(observed, PhotonNumberDistribution) else np.asarray(observed, float)
    if probs.size < truncation + 1:
        raise InvariantError(
            f"observed truncation {probs.size - 1} is shorter than requested truncation {truncation}"
        )
    full = composed_inverse_analytic(detector, probs.size - 1).entries
    candidate = full[: truncation + 1] @ probs
    cond, tail = channel_diagnostics(detector, truncation)
    min_entry = float(candidate.min())
    diag = InversionDiagnostics(
        min_entry=min_entry,
        condition_estimate=cond,
        physical=bool(min_entry >= -tol),
        tail_sensitivity=tail,
    )
    return candidate, diag
