"""Posterior photon-number distribution given a detected count."""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .channels import TransferMatrix
from .distributions import PhotonNumberDistribution
from .exceptions import ImpossibleObservationError, InvariantError, TruncationMismatchError

#: Evidence below this is treated as an impossible observation.
MIN_EVIDENCE = 1e-300


def evidence(prior: PhotonNumberDistribution, channel: TransferMatrix, k: int) -> float:
    """Marginal probability ``P(k) = sum_i channel[k, i] prior[i]``."""
    if prior.truncation != channel.truncation:
        raise TruncationMismatchError("prior and channel truncations differ")
    if not 0 <= k <= channel.truncation:
        raise InvariantError(f"detected count {k} outside 0..{channel.truncation}")
    return math.fsum(channel.entries[k] * prior.probs)


def posterior(prior: PhotonNumberDistribution, channel: TransferMatrix, k: int) -> PhotonNumberDistribution:
    """Bayes posterior ``Q(n|k) = channel[k, n] prior[n] / P(k)``.

    Works for any forward role (``loss`` or ``composed``). With dark counts
    the posterior can put mass on ``n < k``.

    Raises
    ------
    ImpossibleObservationError
        If ``P(k)`` is zero (or below ``MIN_EVIDENCE``).
    """
    if channel.role not in ("loss", "dark", "composed"):
        raise InvariantError(f"posterior needs a forward channel, got role {channel.role!r}")
    p_k = evidence(prior, channel, k)
    if p_k < MIN_EVIDENCE:
        raise ImpossibleObservationError(f"P(k={k}) = {p_k:.3g}; observation is impossible under this prior")
    joint = channel.entries[k] * prior.probs
    return PhotonNumberDistribution(joint / p_k)


def coherent_posterior_pmf(mean: float, efficiency: float, k: int, n: int) -> float:
    """Closed-form posterior for a coherent prior without dark counts.

    ``n - k`` is Poisson with mean ``mean * (1 - efficiency)``, i.e. the
    photons that failed to register.
    """
    if n < k:
        return 0.0
    missed = mean * (1.0 - efficiency)
    lost = n - k
    return math.exp(special.xlogy(lost, missed) - missed - math.lgamma(lost + 1))
