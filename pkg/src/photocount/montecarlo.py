"""Direct simulation of photon counting with a counter-based SplitMix64 generator.

Random stream layout
--------------------
Every trial ``t`` owns an independent stream keyed by

    key_t = mix64(seed + (t + 1) * GAMMA)

and its ``j``-th uniform draw is ``mix64(key_t + (j + 1) * GAMMA) >> 11``
scaled by ``2**-53``. Slot 0 draws the incident photon number (inverse CDF of
the source), slot 1 the dark-count number (inverse CDF of the Poisson law),
and slots ``2 .. 1 + n`` decide the survival of each of the ``n`` photons
(photon survives when ``u < efficiency``). Because each draw depends only on
``(seed, t, j)``, any partition of the trials over workers yields the same
histogram.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distributions import CountHistogram, DetectorModel, PhotonNumberDistribution, poisson_pmf
from .exceptions import InvariantError

_GAMMA_INT = 0x9E3779B97F4A7C15
GAMMA = np.uint64(_GAMMA_INT)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_NEG_53 = 2.0 ** -53
MASK64 = (1 << 64) - 1

CHUNK = 1 << 16


def mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 output finalizer on a uint64 array (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64)
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def trial_keys(seed: int, start: int, stop: int) -> np.ndarray:
    t = np.arange(start, stop, dtype=np.uint64)
    return mix64(np.uint64(seed & MASK64) + (t + np.uint64(1)) * GAMMA)


def uniforms(keys: np.ndarray, slot: int) -> np.ndarray:
    bits = mix64(keys + np.uint64(((slot + 1) * _GAMMA_INT) & MASK64))
    return (bits >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53


@dataclass(frozen=True)
class SimulationSpec:
    source: PhotonNumberDistribution
    detector: DetectorModel
    trials: int
    seed: int = 0

    def __post_init__(self):
        if int(self.trials) < 1:
            raise InvariantError("trials must be >= 1")
        if not 0 <= int(self.seed) <= MASK64:
            raise InvariantError("seed must be an unsigned 64-bit integer")


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, cdf.size - 1)


def _dark_cdf(dark_mean: float) -> np.ndarray:
    if dark_mean == 0.0:
        return np.ones(1)
    kmax = int(dark_mean + 40.0 * np.sqrt(dark_mean) + 40)
    cdf = np.cumsum(poisson_pmf(dark_mean, kmax))
    return cdf / cdf[-1]


def _simulate_block(spec: SimulationSpec, source_cdf, dark_cdf, start: int, stop: int) -> np.ndarray:
    keys = trial_keys(spec.seed, start, stop)
    photons = _inverse_cdf(source_cdf, uniforms(keys, 0))
    darks = _inverse_cdf(dark_cdf, uniforms(keys, 1))
    eta = spec.detector.efficiency
    survivors = np.zeros(keys.size, dtype=np.int64)
    for j in range(int(photons.max(initial=0))):
        active = photons > j
        survivors += active & (uniforms(keys, 2 + j) < eta)
    return survivors + darks


def simulate(spec: SimulationSpec, workers: int = 1) -> CountHistogram:
    """Histogram of detected counts from ``spec.trials`` independent trials.

    The source pmf is renormalized before sampling, so a truncated source's
    tail deficit is spread proportionally over ``0..N``.
    """
    probs = spec.source.probs
    source_cdf = np.cumsum(probs) / probs.sum()
    dark_cdf = _dark_cdf(spec.detector.dark_mean)
    bounds = [(s, min(s + CHUNK, spec.trials)) for s in range(0, spec.trials, CHUNK)]

    def run(bound):
        return np.bincount(_simulate_block(spec, source_cdf, dark_cdf, *bound))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    width = max(p.size for p in parts)
    counts = np.zeros(width, dtype=np.int64)
    for p in parts:
        counts[: p.size] += p
    return CountHistogram(counts)


def empirical_pmf(hist: CountHistogram) -> PhotonNumberDistribution:
    return PhotonNumberDistribution(hist.counts / hist.total)
