"""Testing k-wise uniformity on the Boolean cube: Fourier tools, special
polynomials, an LP solver, closeness bounds, constructions and testers."""

__version__ = "0.1.0"

from .cube_fourier import Density, SampleBatch, Spectrum, fourier_transform, inverse_transform
from .closeness import closeness_exact, mend_1wise, mend_min_weight, fourier_distance_bound
from .constructions import LowerBoundParams, PairwiseShiftParams, lower_bound_density
from .lp_solver import LinearProgram, solve
from .testers import DEFAULT_CONSTANTS, Constants, delta_statistic, kwise_test, overall_algorithm

__all__ = [
    "__version__",
    "Density",
    "SampleBatch",
    "Spectrum",
    "fourier_transform",
    "inverse_transform",
    "closeness_exact",
    "mend_1wise",
    "mend_min_weight",
    "fourier_distance_bound",
    "LowerBoundParams",
    "PairwiseShiftParams",
    "lower_bound_density",
    "LinearProgram",
    "solve",
    "DEFAULT_CONSTANTS",
    "Constants",
    "delta_statistic",
    "kwise_test",
    "overall_algorithm",
]
