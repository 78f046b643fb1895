"""Optimal thresholds, value functions and smooth-fit diagnostics for
one-sided optimal stopping of one-dimensional diffusions."""

from . import catalog, diffusion, numerics, oracle, reward, smoothfit, solver
from .diffusion import (
    Diffusion,
    FundamentalPair,
    ScaleFunction,
    SpeedMeasure,
    StateInterval,
    apply_generator,
    green,
    hitting_laplace,
    reflect,
    resolvent,
)
from .errors import (
    DivergentIntegral,
    HypothesisViolated,
    NegativeReward,
    NoRoot,
    NonConvergent,
    OutOfDomain,
    ParameterOutOfRange,
    ParseError,
    StopsideError,
    Unsimulable,
)
from .numerics import (
    QuadratureOptions,
    RegionSpec,
    find_largest_root,
    integrate_against_measure,
    one_sided_derivative,
)
from .reward import Reward, RrcReport, check_rrc, generator_image, parse_reward
from .smoothfit import SmoothFitReport, diagnose, table_row
from .solver import (
    Problem,
    Solution,
    SolveOptions,
    expected_reward_of_threshold,
    solve_right_sided,
    solve_sufficient,
    threshold_residual,
    value_function,
)

__version__ = "0.1.0"
