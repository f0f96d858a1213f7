"""Maximum-entropy unfolding under a chi-squared goodness-of-fit gate.

Among all source distributions whose predicted counting distribution passes a
Pearson chi-squared test against the observed histogram, pick the one with
the largest Shannon entropy. The search is a genetic algorithm over softmax
logits, so every candidate is a valid probability vector by construction.

Fitness is lexicographic: first the excess ``max(0, chi2 - threshold)``, then
negative entropy. The best feasible candidate ever evaluated is kept, so the
returned entropy dominates every feasible candidate the search has seen.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .channels import apply_forward, composed_matrix
from .distributions import CountHistogram, DetectorModel, PhotonNumberDistribution, entropy
from .exceptions import InvariantError

#: Returned by :func:`chi_squared` when the model excludes an observed bin.
INFEASIBLE = math.inf
MIN_EXPECTED = 5.0
MIN_TOTAL = 100


@dataclass(frozen=True)
class MaxEntConfig:
    truncation: int = 60
    population_size: int = 64
    generations: int = 3000
    mutation_scale: float = 0.5
    crossover_rate: float = 0.7
    chi2_percentile: float = 0.95
    seed: int = 0
    tournament_size: int = 3
    elite: int = 4
    subtract_dof: int = 0

    def __post_init__(self):
        if self.truncation < 1:
            raise InvariantError("truncation must be >= 1")
        if self.population_size < 2:
            raise InvariantError("population_size must be >= 2")
        if self.generations < 0:
            raise InvariantError("generations must be >= 0")
        if not 0.0 < self.chi2_percentile < 1.0:
            raise InvariantError("chi2_percentile must lie in (0, 1)")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise InvariantError("crossover_rate must lie in [0, 1]")
        if not self.mutation_scale >= 0.0:
            raise InvariantError("mutation_scale must be >= 0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvariantError("seed must be an unsigned 64-bit integer")
        if not 0 <= self.elite < self.population_size:
            raise InvariantError("elite must be smaller than population_size")
        if self.tournament_size < 1:
            raise InvariantError("tournament_size must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> MaxEntConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise InvariantError(f"unknown MaxEntConfig fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class ReconstructionResult:
    distribution: PhotonNumberDistribution
    chi2: float
    chi2_threshold: float
    entropy: float
    iterations: int
    converged: bool
    seed: int
    dof: int = 0

    def to_json(self) -> dict:
        return {
            "distribution": self.distribution.to_json(),
            "chi2": self.chi2,
            "chi2_threshold": self.chi2_threshold,
            "entropy": self.entropy,
            "iterations": self.iterations,
            "converged": self.converged,
            "seed": self.seed,
            "dof": self.dof,
        }


def pool_bins(expected: np.ndarray, min_expected: float = MIN_EXPECTED) -> np.ndarray:
    """Start indices of pooled bins, grouping from the tail upward.

    Bins are accumulated from the last one toward zero and a group is closed
    as soon as its expected count reaches ``min_expected``. A leftover group
    at the low end that never reaches the bound is merged into its upper
    neighbour.
    """
    size = expected.size
    # fast path: one tail group, every other bin already large enough
    tail = np.cumsum(expected[::-1])
    reach = np.flatnonzero(tail >= min_expected)
    if reach.size == 0:
        return np.zeros(1, dtype=np.intp)
    cut = size - 1 - reach[0]
    if np.all(expected[:cut] >= min_expected):
        return np.arange(cut + 1)
    starts = []
    acc = 0.0
    for i in range(size - 1, -1, -1):
        acc += expected[i]
        if acc >= min_expected:
            starts.append(i)
            acc = 0.0
    if not starts:
        return np.zeros(1, dtype=np.intp)
    if starts[-1] != 0:
        starts[-1] = 0
    return np.array(starts[::-1], dtype=np.intp)


def _pooled_statistic(counts: np.ndarray, probs: np.ndarray, total: int) -> tuple[float, int]:
    size = max(counts.size, probs.size)
    c = np.zeros(size)
    c[: counts.size] = counts
    p = np.zeros(size)
    p[: probs.size] = probs
    if np.any((p <= 0.0) & (c > 0)):
        return INFEASIBLE, 0
    expected = total * p
    # mass the model puts beyond its truncation belongs to the open tail bin
    expected[-1] += total * max(0.0, 1.0 - p.sum())
    starts = pool_bins(expected)
    obs = np.add.reduceat(c, starts)
    exp = np.add.reduceat(expected, starts)
    if np.any((exp <= 0.0) & (obs > 0)):
        return INFEASIBLE, starts.size
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(exp > 0, (obs - exp) ** 2 / exp, 0.0)
    return float(terms.sum()), int(starts.size)


def pooled_chi_squared(observed: CountHistogram, model: PhotonNumberDistribution) -> tuple[float, int]:
    """Pearson statistic and the number of pooled bins it was computed over."""
    if model.truncation + 1 < len(observed):
        raise InvariantError("model truncation is shorter than the histogram")
    return _pooled_statistic(observed.counts, model.probs, observed.total)


def chi_squared(observed: CountHistogram, model: PhotonNumberDistribution) -> float:
    """Pearson chi-squared of ``observed`` against a predicted counting distribution.

    Bins are pooled from the tail upward until each pooled bin expects at
    least five counts. A model that gives zero probability to an observed
    count returns :data:`INFEASIBLE`.
    """
    return pooled_chi_squared(observed, model)[0]


@lru_cache(maxsize=256)
def chi2_threshold(dof: int, percentile: float) -> float:
    if dof < 1:
        return 0.0
    return float(stats.chi2.ppf(percentile, dof))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(shifted)
    return w / w.sum(axis=-1, keepdims=True)


class _Evaluator:
    def __init__(self, counts, channel, config: MaxEntConfig, workers: int):
        self.counts = counts
        self.total = int(counts.sum())
        self.channel = channel
        self.config = config
        self.workers = workers

    def _chunk(self, logits):
        # row by row: batched BLAS calls may round differently with batch shape,
        # which would tie results to the worker count
        chi2 = np.empty(len(logits))
        thresh = np.empty(len(logits))
        ent = np.empty(len(logits))
        for i, row in enumerate(logits):
            probs = _softmax(row)
            value, groups = _pooled_statistic(self.counts, self.channel @ probs, self.total)
            chi2[i] = value
            thresh[i] = chi2_threshold(groups - 1 - self.config.subtract_dof, self.config.chi2_percentile)
            ent[i] = -special.xlogy(probs, probs).sum()
        return chi2, thresh, ent

    def __call__(self, logits):
        if self.workers > 1 and len(logits) > 1:
            parts = np.array_split(np.arange(len(logits)), self.workers)
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                out = list(pool.map(lambda idx: self._chunk(logits[idx]), parts))
            return tuple(np.concatenate([o[j] for o in out]) for j in range(3))
        return self._chunk(logits)


def _log_poisson(mean, size):
    n = np.arange(size)
    return special.xlogy(n, mean) - special.gammaln(n + 1)


def _log_negbin(mean, shape, size):
    # Gamma-Poisson mixture with the given mean; larger shape means closer to Poisson
    n = np.arange(size)
    p = mean / (mean + shape)
    return special.gammaln(n + shape) - special.gammaln(n + 1) + n * math.log(p)


def _initial_population(counts, detector: DetectorModel, config: MaxEntConfig, rng) -> np.ndarray:
    size = config.truncation + 1
    pop = config.population_size
    k = np.arange(counts.size)
    detected_mean = float(np.dot(k, counts) / counts.sum())
    guess = (detected_mean - detector.dark_mean) / detector.efficiency
    guess = min(max(guess, 0.05), float(config.truncation))
    seeds = [np.zeros(size), _log_poisson(guess, size)]
    for shape in (50.0, 10.0, 3.0):
        seeds.append(_log_negbin(guess, shape, size))
    base = np.array(seeds[: pop])
    rest = pop - len(base)
    if rest > 0:
        picks = base[rng.integers(1, len(base), size=rest) if len(base) > 1 else np.zeros(rest, int)]
        noise = rng.normal(size=(rest, size)) * config.mutation_scale * 0.2
        base = np.vstack([base, picks + noise])
    return _normalize_logits(base)


def _normalize_logits(logits: np.ndarray) -> np.ndarray:
    logits = logits - logits.max(axis=-1, keepdims=True)
    return np.maximum(logits, -700.0)


def _order(excess: np.ndarray, ent: np.ndarray) -> np.ndarray:
    """Indices sorted best first: smallest excess, then largest entropy."""
    return np.lexsort((-ent, excess))


def reconstruct_maxent(
    observed: CountHistogram,
    detector: DetectorModel,
    config: MaxEntConfig | None = None,
    workers: int = 1,
    trace: list | None = None,
) -> ReconstructionResult:
    """Highest-entropy source distribution statistically consistent with ``observed``.

    The chi-squared threshold is the ``chi2_percentile`` quantile of a
    chi-squared law with ``pooled bins - 1`` degrees of freedom. If no
    candidate passes within ``generations`` the lowest-chi2 candidate is
    returned with ``converged=False``.

    ``trace``, if given, receives one ``(chi2, threshold, entropy)`` tuple of
    arrays per evaluated batch of candidates.
    """
    config = config or MaxEntConfig()
    if observed.total < MIN_TOTAL:
        raise InvariantError(f"need at least {MIN_TOTAL} counts for a chi-squared test, got {observed.total}")
    if detector.efficiency <= 0.0:
        raise InvariantError("efficiency must be positive for reconstruction")
    size = config.truncation + 1
    if len(observed) > size:
        raise InvariantError(f"histogram has {len(observed)} bins; truncation {config.truncation} is too small")
    counts = np.zeros(size)
    counts[: len(observed)] = observed.counts
    channel = composed_matrix(detector, config.truncation).entries
    evaluate = _Evaluator(counts, channel, config, workers)
    rng = np.random.default_rng(int(config.seed))

    pop = _initial_population(counts, detector, config, rng)
    chi2, thresh, ent = evaluate(pop)

    best_feasible = None  # (entropy, logits)
    best_any = None  # (chi2, logits)

    def record(pop, chi2, thresh, ent):
        nonlocal best_feasible, best_any
        if trace is not None:
            trace.append((chi2.copy(), thresh.copy(), ent.copy()))
        feasible = chi2 <= thresh
        if feasible.any():
            i = np.flatnonzero(feasible)[np.argmax(ent[feasible])]
            if best_feasible is None or ent[i] > best_feasible[0]:
                best_feasible = (float(ent[i]), pop[i].copy())
        j = int(np.argmin(chi2))
        if best_any is None or chi2[j] < best_any[0]:
            best_any = (float(chi2[j]), pop[j].copy())

    record(pop, chi2, thresh, ent)
    n_children = config.population_size - config.elite

    for _ in range(config.generations):
        excess = np.maximum(chi2 - thresh, 0.0)
        order = _order(excess, ent)
        rank = np.empty(len(pop), dtype=np.intp)
        rank[order] = np.arange(len(pop))

        contestants = rng.integers(0, len(pop), size=(n_children, 2, config.tournament_size))
        winners = np.take_along_axis(
            contestants, np.argmin(rank[contestants], axis=2)[..., None], axis=2
        )[..., 0]
        mother = pop[winners[:, 0]]
        father = pop[winners[:, 1]]

        # blend crossover: child = w * mother + (1 - w) * father, w in [-0.25, 1.25]
        w = rng.uniform(-0.25, 1.25, size=(n_children, 1))
        cross = rng.random(n_children) < config.crossover_rate
        children = np.where(cross[:, None], w * mother + (1 - w) * father, mother)

        # multiplicative mutation in probability space = additive in log space,
        # step sizes spread over three decades
        sigma = config.mutation_scale * 10.0 ** rng.uniform(-3.0, 0.0, size=(n_children, 1))
        mask = rng.random((n_children, size)) < rng.uniform(0.05, 1.0, size=(n_children, 1))
        children = children + sigma * mask * rng.normal(size=(n_children, size))
        children = _normalize_logits(children)

        c_chi2, c_thresh, c_ent = evaluate(children)
        record(children, c_chi2, c_thresh, c_ent)
        keep = order[: config.elite]
        pop = np.vstack([pop[keep], children])
        chi2 = np.concatenate([chi2[keep], c_chi2])
        thresh = np.concatenate([thresh[keep], c_thresh])
        ent = np.concatenate([ent[keep], c_ent])

    logits = best_feasible[1] if best_feasible is not None else best_any[1]
    dist = PhotonNumberDistribution(_softmax(logits))
    predicted = apply_forward(composed_matrix(detector, config.truncation), dist)
    stat, groups = _pooled_statistic(counts, predicted.probs, observed.total)
    dof = max(groups - 1 - config.subtract_dof, 0)
    threshold = chi2_threshold(dof, config.chi2_percentile)
    return ReconstructionResult(
        distribution=dist,
        chi2=stat,
        chi2_threshold=threshold,
        entropy=entropy(dist),
        iterations=config.generations,
        converged=bool(stat <= threshold),
        seed=int(config.seed),
        dof=dof,
    )
