"""Bayesian reversal of classical and quantum processes, and the fluctuation
relations it implies, checked as exact identities on finite alphabets."""
from .errors import RetrodictionError
from .prob_core import (
    TOL_FIX,
    TOL_NORM,
    Distribution,
    JointProcess,
    RatioTable,
    SteadyState,
    StochasticChannel,
    bayes_reverse_channel,
    forward_process,
    forward_reverse_ratio,
    jeffrey_update,
    make_channel,
    reverse_process,
    steady_state,
    validate_distribution,
)
from .fluctuation import (
    DiscreteMeasure,
    FFamily,
    crooks_residuals,
    evaluate_family,
    f_divergence,
    jarzynski_average,
    make_f_family,
    measure_of,
    omega_variables,
)

__version__ = "0.1.0"
