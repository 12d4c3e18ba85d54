"""Crowdcast: simulate and analyze forecast-driven coordination assistants.

A central assistant announces a congestion forecast, a simulated population
best-responds to it, and the resulting feedback loop is measured against
prediction-accuracy and equilibrium objectives.
"""

from .core import (
    CrowdcastError,
    DegenerateGainError,
    DiscreteDistribution,
    EmptyInputError,
    Forecast,
    InvalidConfigError,
    InvalidDistributionError,
    InvalidParameterError,
    JointProfile,
    NeedsInitialForecastError,
    NoFixedPointError,
    ParseError,
    PointForecast,
    ShapeError,
    StageRecord,
    TooLargeError,
    euclidean_distance,
    point_pred_loss,
    trajectory_mse,
    tv_distance,
)
from .engine import (
    MonteCarloSummary,
    SimConfig,
    Trajectory,
    closed_form_trajectory,
    monte_carlo,
    replay,
    run_dynamic,
)
from .environments import (
    BayesianCongestionGame,
    FiniteCongestionGame,
    LinearAggregateEnv,
    NonatomicPopulation,
    best_response,
    crowding_game,
    linear_step,
    nonatomic_response_closed,
    nonatomic_response_numeric,
    play_profile,
)
from .policies import (
    AverageState,
    ExpodampState,
    KalmanPolicyState,
    PartpredState,
    average_step,
    expodamp_step,
    kalman_init,
    kalman_step,
    naive_step,
    partpred_step,
    update_congestion,
    update_general,
)

__version__ = "0.1.0"
