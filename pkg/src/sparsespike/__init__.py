"""Mutual information and MMSE of sparse spiked matrix models.

Scalar Gaussian channels, replica-symmetric potentials and their variational
solutions, phase-transition curves, and an exact small-n enumeration oracle.
"""

from .channel import ChannelPoint, ChannelSettings, channel_point, mmse, mutual_information
from .exceptions import (
    DomainError,
    NumericalError,
    ParameterError,
    ResourceError,
    SearchError,
    SparseSpikeError,
)
from .phase import (
    PhaseCurveRow,
    WishartMMSERow,
    lambda_critical,
    limiting_rescaled_mi,
    locate_threshold,
    theorem_rate_bound,
    wigner_curve,
    wishart_curve,
)
from .potential import Model, ScalingRegime, WignerSpec, WishartSpec
from .prior import Prior, PriorKind, bernoulli, bernoulli_rademacher, finite, standard_gaussian
from .varsolve import VariationalSolution, fixed_point_iterate, solve_wigner, solve_wishart

__version__ = "0.1.0"

__all__ = [
    "ChannelPoint", "ChannelSettings", "channel_point", "mmse", "mutual_information",
    "DomainError", "NumericalError", "ParameterError", "ResourceError", "SearchError",
    "SparseSpikeError",
    "PhaseCurveRow", "WishartMMSERow", "lambda_critical", "limiting_rescaled_mi",
    "locate_threshold", "theorem_rate_bound", "wigner_curve", "wishart_curve",
    "Model", "ScalingRegime", "WignerSpec", "WishartSpec",
    "Prior", "PriorKind", "bernoulli", "bernoulli_rademacher", "finite", "standard_gaussian",
    "VariationalSolution", "fixed_point_iterate", "solve_wigner", "solve_wishart",
    "__version__",
]
