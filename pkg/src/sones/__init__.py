"""Second-order Newton-based extremum seeking for multivariable static maps."""

from .averaged import (
    AveragedSystem,
    averaged_equilibrium,
    averaged_rhs,
    demodulated_bias,
    is_hurwitz,
    jacobian_at,
    simulate_averaged,
    theorem_bias,
)
from .dynamics import (
    GainConfig,
    Grad2State,
    SonesState,
    Trajectory,
    grad2_rhs,
    integrate,
    simulate,
    sones_rhs,
)
from .estimation import (
    QuadratureSpec,
    estimate_hessian,
    estimate_hessian_column,
    estimate_third_slice,
    periodic_average,
)
from .filters import FilterGains, lowpass_rhs, riccati_rhs, washout_rhs
from .maps import DerivativeBundle, PolynomialMap, derivative_bundle, evaluate, fd_partial, paper_example_map, partial
from .probing import (
    FrequencyViolation,
    ProbingConfig,
    averaging_period,
    search_frequencies,
    validate_frequencies,
)
from .scenario import Scenario, load_scenario, parse_scenario, run_scenario

__version__ = "0.1.0"
