"""Cone-field (indefinite quadratic form) certificates for flows.

Modules: ``matcore`` (small dense kernels), ``exterior`` (compounds and
bivectors), ``forms`` (feasible delta intervals and certificates), ``flow``
(models and RK4 with variational equations), ``domination`` (orbit-level
rates, trichotomy and cross-checks) and ``cli``.
"""

from .exterior import additive_compound, compound, induced_biform
from .flow import (integrate, lorenz_origin_spectrum, model_classic_lorenz,
                   model_geometric_lorenz, model_linear, model_linear_saddle)
from .forms import (QuadraticForm, SeparationCertificate, certify_point, delta_interval,
                    jprime, wedge_separation)
from .matcore import HyperconeError

__version__ = "0.1.0"

__all__ = [
    "HyperconeError", "QuadraticForm", "SeparationCertificate", "additive_compound",
    "certify_point", "compound", "delta_interval", "induced_biform", "integrate", "jprime",
    "lorenz_origin_spectrum", "model_classic_lorenz", "model_geometric_lorenz", "model_linear",
    "model_linear_saddle", "wedge_separation",
]
