"""Orthogonal-Cut relaxation, Gaussian rounding and the constants alpha(d)."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapacityError,
    DomainError,
    FeasibilityError,
    FormatError,
    InputError,
    OrthoCutError,
    ShapeError,
    UnsupportedError,
)
from .linalg import RngSeed, gaussian_matrix, polar, svd_thin  # noqa: E402
from .problem import (  # noqa: E402
    BlockPsdMatrix,
    GroupTuple,
    StiefelTuple,
    brute_force_opt,
    build_procrustes,
    build_random_psd,
    objective,
)
from .solver import SolveConfig, SolveReport, local_ascent_group, solve_relaxation  # noqa: E402
from .rounding import RoundingConfig, round_best_of, round_once  # noqa: E402
from .alpha import (  # noqa: E402
    AlphaEstimate,
    alpha_chi_1r,
    alpha_closed_form,
    alpha_complex_laguerre,
    alpha_lower_bounds,
    alpha_mc,
    alpha_star_probe,
    mp_limit,
    phi_rho,
)
from .gap import GapConfig, GapReport, build_gap_instance, measure_gap  # noqa: E402
