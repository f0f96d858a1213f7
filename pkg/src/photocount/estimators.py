"""scikit-learn style wrappers around the channel models and reconstructions.

``DetectorChannel`` is a transformer mapping source photon-number
distributions (rows of ``X``) to counting distributions; its
``inverse_transform`` is the raw analytic unfolding. ``MaxEntReconstructor``
maps count histograms to maximum-entropy source distributions.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_detector_params, check_distributions, check_histograms
from .channels import composed_matrix
from .distributions import CountHistogram, DetectorModel
from .inversion import composed_inverse_analytic
from .maxent import MaxEntConfig, reconstruct_maxent


class DetectorChannel(TransformerMixin, BaseEstimator):
    """Loss plus dark-count channel as a fitted linear transformer.

    Parameters
    ----------
    efficiency : float
        Quantum efficiency in [0, 1].
    dark_mean : float
        Mean dark counts per counting window.
    truncation : int
        Largest photon number represented.

    Attributes
    ----------
    matrix_ : ndarray of shape (truncation + 1, truncation + 1)
        Forward channel, ``matrix_[k, n] = P_D(k|n)``.
    inverse_ : ndarray or None
        Closed-form inverse; ``None`` for a blind detector.
    """

    def __init__(self, efficiency=1.0, dark_mean=0.0, truncation=20):
        self.efficiency = efficiency
        self.dark_mean = dark_mean
        self.truncation = truncation

    def fit(self, X=None, y=None):
        check_detector_params(self.efficiency, self.dark_mean)
        self.detector_ = DetectorModel(self.efficiency, self.dark_mean)
        self.matrix_ = composed_matrix(self.detector_, self.truncation).entries
        self.inverse_ = (
            composed_inverse_analytic(self.detector_, self.truncation).entries
            if self.efficiency > 0
            else None
        )
        self.n_features_in_ = self.truncation + 1
        return self

    def transform(self, X):
        check_is_fitted(self, "matrix_")
        X = check_distributions(X, self.n_features_in_)
        return X @ self.matrix_.T

    def inverse_transform(self, X):
        """Unfold counting distributions; entries may come out negative."""
        check_is_fitted(self, "matrix_")
        if self.inverse_ is None:
            raise ValueError("a detector with zero efficiency cannot be inverted")
        X = check_distributions(X, self.n_features_in_, allow_negative=True)
        return X @ self.inverse_.T


class MaxEntReconstructor(TransformerMixin, BaseEstimator):
    """Chi-squared gated maximum-entropy reconstruction of the source distribution.

    Each row of ``X`` is a count histogram. ``fit`` reconstructs every row and
    keeps the results; ``transform`` returns one source distribution per row.
    Results are deterministic for a fixed ``seed`` regardless of ``n_jobs``.
    """

    def __init__(
        self,
        efficiency=1.0,
        dark_mean=0.0,
        truncation=60,
        population_size=64,
        generations=3000,
        mutation_scale=0.5,
        crossover_rate=0.7,
        chi2_percentile=0.95,
        seed=0,
        n_jobs=1,
    ):
        self.efficiency = efficiency
        self.dark_mean = dark_mean
        self.truncation = truncation
        self.population_size = population_size
        self.generations = generations
        self.mutation_scale = mutation_scale
        self.crossover_rate = crossover_rate
        self.chi2_percentile = chi2_percentile
        self.seed = seed
        self.n_jobs = n_jobs

    def _config(self):
        return MaxEntConfig(
            truncation=self.truncation,
            population_size=self.population_size,
            generations=self.generations,
            mutation_scale=self.mutation_scale,
            crossover_rate=self.crossover_rate,
            chi2_percentile=self.chi2_percentile,
            seed=self.seed,
        )

    def _reconstruct(self, X):
        check_detector_params(self.efficiency, self.dark_mean)
        detector = DetectorModel(self.efficiency, self.dark_mean)
        config = self._config()
        return [
            reconstruct_maxent(CountHistogram(row), detector, config, workers=self.n_jobs)
            for row in check_histograms(X)
        ]

    def fit(self, X, y=None):
        self.results_ = self._reconstruct(X)
        self.distribution_ = self.results_[0].distribution.probs
        self.chi2_ = self.results_[0].chi2
        self.chi2_threshold_ = self.results_[0].chi2_threshold
        self.entropy_ = self.results_[0].entropy
        self.converged_ = self.results_[0].converged
        return self

    def transform(self, X):
        check_is_fitted(self, "results_")
        return np.vstack([r.distribution.probs for r in self._reconstruct(X)])

    def fit_transform(self, X, y=None, **fit_params):
        self.fit(X)
        return np.vstack([r.distribution.probs for r in self.results_])
