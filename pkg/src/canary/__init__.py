"""Sampling efficiency between subpopulations for outbreak detection.

Exact binomial power and sample sizes, the relative-efficiency inequality
and its lemmas, Poisson CUSUM and negative-binomial GLR monitoring, and a
simulator for heterogeneous subpopulations.
"""

from ._accel import USE_NUMBA, backend_name
from .dist import BinomialLaw, NegBinLaw, PoissonLaw
from .errors import CanaryError
from .exact_test import efficiency_pair, make_plan, min_sample_size, power, power_curve

__version__ = "0.1.0"

__all__ = [
    "USE_NUMBA",
    "backend_name",
    "BinomialLaw",
    "NegBinLaw",
    "PoissonLaw",
    "CanaryError",
    "efficiency_pair",
    "make_plan",
    "min_sample_size",
    "power",
    "power_curve",
    "__version__",
]
