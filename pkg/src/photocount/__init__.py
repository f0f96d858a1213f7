"""Photon-number detector models and photon-statistics reconstruction."""

__version__ = "0.1.0"

from .bayes import coherent_posterior_pmf, posterior
from .channels import (
    TransferMatrix,
    apply_forward,
    coherent_counting_pmf,
    composed_matrix,
    confidence,
    dark_matrix,
    loss_matrix,
)
from .distributions import (
    CountHistogram,
    DetectorModel,
    PhotonNumberDistribution,
    coherent_source,
    entropy,
    fock_source,
    mean,
    recommended_truncation,
    renormalize,
)
from .estimators import DetectorChannel, MaxEntReconstructor
from .exceptions import (
    ImpossibleObservationError,
    InvariantError,
    NonInvertibleChannelError,
    TruncationMismatchError,
)
from .inversion import (
    InversionDiagnostics,
    composed_inverse_analytic,
    dark_inverse,
    hyp1f1,
    invert_counts,
    loss_inverse,
)
from .maxent import MaxEntConfig, ReconstructionResult, chi_squared, reconstruct_maxent
from .montecarlo import SimulationSpec, empirical_pmf, simulate
