"""The repeated forecast/response loop: wire one policy to one environment.

A run is fully determined by its SimConfig: all randomness flows from
generators derived from (seed, run_index), the policy sees only the history
through the previous stage, and losses are computed against the
environment's exact conditional outcome, which every simulated setting can
provide analytically.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import analysis, policies
from .core import (
    DiscreteDistribution,
    Forecast,
    InvalidConfigError,
    JointProfile,
    PointForecast,
    StageRecord,
    point_pred_loss,
    tv_distance,
)
from .environments import (
    BayesianCongestionGame,
    FiniteCongestionGame,
    LinearAggregateEnv,
    NonatomicPopulation,
    bayes_best_response,
    bayes_play_profile,
    bayes_response_distribution,
    linear_step,
    nonatomic_response_closed,
    play_profile,
)

SETTINGS = ("linear", "nonatomic", "finite-game")

POLICIES_BY_SETTING = {
    "linear": ("expodamp", "average", "naive", "kalman"),
    "nonatomic": ("expodamp", "average", "naive"),
    "finite-game": ("naive", "empirical", "partpred"),
}

DEFAULT_LOSSES = {
    "linear": ("point_pred",),
    "nonatomic": ("point_pred",),
    "finite-game": ("pred", "nash"),
}


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one run bit-exactly."""

    setting: str
    policy: str
    policy_params: Mapping[str, object]
    env_params: Mapping[str, object]
    stages: int
    seed: int
    covariate: str = "w0"
    log_losses: tuple[str, ...] | None = None

    def losses(self) -> tuple[str, ...]:
        if self.log_losses is not None:
            return self.log_losses
        return DEFAULT_LOSSES[self.setting]


@dataclass(frozen=True)
class Trajectory:
    records: tuple[StageRecord, ...]
    config_hash: str

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final(self) -> StageRecord:
        return self.records[-1]


def config_hash(config: SimConfig) -> str:
    payload = json.dumps(
        {
            "setting": config.setting,
            "policy": config.policy,
            "policy_params": config.policy_params,
            "env_params": config.env_params,
            "stages": config.stages,
            "seed": config.seed,
            "covariate": config.covariate,
            "log_losses": config.log_losses,
        },
        sort_keys=True,
        default=repr,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def closed_form_trajectory(
    gamma: float, alpha: float, a0: float, x: float, T: int
) -> list[float]:
    """Deterministic outcome sequence x + (1 - gamma) * (a0 - x) * (1 - alpha*gamma)^t.

    Valid for the noise-free linear environment with beta = 1 - gamma under
    the damped policy; the contraction holds iff 0 < alpha * gamma < 2.
    """
    rate = 1.0 - alpha * gamma
    return [x + (1.0 - gamma) * (a0 - x) * rate**t for t in range(T)]


# --- parameter access helpers --------------------------------------------------


def _need(params: Mapping[str, object], key: str, path: str) -> object:
    if key not in params:
        raise InvalidConfigError(f"{path}.{key}: required parameter missing")
    return params[key]


def _as_float(value: object, path: str) -> float:
    try:
        return float(value)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise InvalidConfigError(f"{path}: expected a real number, got {value!r}")


def _as_int(value: object, path: str) -> int:
    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        raise InvalidConfigError(f"{path}: expected an integer, got {value!r}")
    try:
        return int(value)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise InvalidConfigError(f"{path}: expected an integer, got {value!r}")


def _as_floats(value: object, path: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return (float(value),)
    if isinstance(value, (tuple, list)):
        return tuple(_as_float(v, path) for v in value)
    raise InvalidConfigError(f"{path}: expected a number or list of numbers")


def _as_profile(value: object, path: str) -> JointProfile:
    if isinstance(value, JointProfile):
        return value
    if isinstance(value, (tuple, list)):
        return JointProfile(tuple(_as_int(v, path) for v in value))
    raise InvalidConfigError(f"{path}: expected a list of slot indices")


# --- environment adapters ------------------------------------------------------


class _LinearEnv:
    kind = "point"

    def __init__(self, params: Mapping[str, object], rng: np.random.Generator):
        self.env = LinearAggregateEnv.create(
            beta=_as_float(_need(params, "beta", "environment"), "environment.beta"),
            gamma=_as_float(_need(params, "gamma", "environment"), "environment.gamma"),
            x0_mean=_as_float(_need(params, "x0_mean", "environment"), "environment.x0_mean"),
            x0_var=_as_float(params.get("x0_var", 0.0), "environment.x0_var"),
            var_ex=_as_float(params.get("var_ex", 0.0), "environment.var_ex"),
            var_ey=_as_float(params.get("var_ey", 0.0), "environment.var_ey"),
            rng=rng,
        )

    def respond(self, a: Forecast) -> PointForecast:
        if not isinstance(a, PointForecast):
            raise InvalidConfigError("linear setting needs point forecasts")
        return PointForecast((linear_step(self.env, a.scalar),))

    def stage_losses(self, names: Sequence[str], a: Forecast, y: object) -> dict[str, float]:
        out: dict[str, float] = {}
        for name in names:
            if name == "point_pred":
                out[name] = point_pred_loss(a, (self.env.last_mean,))
            else:
                raise InvalidConfigError(f"run.losses: {name!r} not available in the linear setting")
        return out


class _NonatomicEnv:
    kind = "point"

    def __init__(self, params: Mapping[str, object], rng: np.random.Generator):
        self.pop = NonatomicPopulation(
            phi=_as_float(_need(params, "phi", "environment"), "environment.phi"),
            chi=_as_float(_need(params, "chi", "environment"), "environment.chi"),
            delta=_as_float(_need(params, "delta", "environment"), "environment.delta"),
            x=_as_float(_need(params, "x", "environment"), "environment.x"),
            grid_n=_as_int(params.get("grid_n", 401), "environment.grid_n"),
        )
        self.last_mean = math.nan

    def respond(self, a: Forecast) -> PointForecast:
        if not isinstance(a, PointForecast):
            raise InvalidConfigError("nonatomic setting needs point forecasts")
        self.last_mean = nonatomic_response_closed(self.pop, a.scalar)
        return PointForecast((self.last_mean,))

    def stage_losses(self, names: Sequence[str], a: Forecast, y: object) -> dict[str, float]:
        out: dict[str, float] = {}
        for name in names:
            if name == "point_pred":
                out[name] = point_pred_loss(a, (self.last_mean,))
            else:
                raise InvalidConfigError(f"run.losses: {name!r} not available in the nonatomic setting")
        return out


def build_game(params: Mapping[str, object]) -> FiniteCongestionGame | BayesianCongestionGame:
    if "game" in params:
        game = params["game"]
        if not isinstance(game, (FiniteCongestionGame, BayesianCongestionGame)):
            raise InvalidConfigError("environment.game: not a congestion game object")
        return game
    n = _as_int(_need(params, "players", "environment"), "environment.players")
    d = _as_int(_need(params, "slots", "environment"), "environment.slots")
    rows = []
    for k in range(d):
        row = _as_floats(_need(params, f"slot_{k}", "environment"), f"environment.slot_{k}")
        if len(row) != n:
            raise InvalidConfigError(f"environment.slot_{k}: expected {n} utilities, got {len(row)}")
        rows.append(row)
    return FiniteCongestionGame(n=n, d=d, utility=tuple(rows))


class _FiniteGameEnv:
    kind = "profile"

    def __init__(self, params: Mapping[str, object], rng: np.random.Generator):
        self.game = build_game(params)
        self.bayesian = isinstance(self.game, BayesianCongestionGame)
        self.rng = rng
        self._response_cache: dict[DiscreteDistribution, DiscreteDistribution] = {}
        self._play_cache: dict[DiscreteDistribution, dict[tuple[int, ...], JointProfile]] = {}
        self._nash_cache: dict[DiscreteDistribution, float] = {}
        if self.bayesian:
            # cumulative type priors; inverse-cdf draws keep the stage loop cheap
            self._type_cums = [np.cumsum(probs) for probs in self.game.type_probs]

    def exact_response(self, a: DiscreteDistribution) -> DiscreteDistribution:
        dist = self._response_cache.get(a)
        if dist is None:
            if self.bayesian:
                dist = bayes_response_distribution(self.game, a)
            else:
                dist = DiscreteDistribution.dirac(play_profile(self.game, a))
            self._response_cache[a] = dist
        return dist

    def _play_map(self, a: DiscreteDistribution) -> dict[tuple[int, ...], JointProfile]:
        table = self._play_cache.get(a)
        if table is None:
            table = {
                combo: bayes_play_profile(self.game, a, combo)
                for combo, _ in self.game.type_combos()
            }
            self._play_cache[a] = table
        return table

    def respond(self, a: Forecast) -> JointProfile:
        if not isinstance(a, DiscreteDistribution):
            raise InvalidConfigError("finite-game setting needs distribution forecasts")
        if not self.bayesian:
            return self.exact_response(a).support[0]
        draws = self.rng.random(self.game.n)
        types = tuple(
            int(np.searchsorted(cum, u, side="right"))
            for cum, u in zip(self._type_cums, draws)
        )
        return self._play_map(a)[types]

    def _nash_loss(self, a: DiscreteDistribution) -> float:
        loss = self._nash_cache.get(a)
        if loss is None:
            if self.bayesian:
                strategy = tuple(
                    tuple(
                        bayes_best_response(self.game, i, theta, a)
                        for theta in range(len(self.game.type_probs[i]))
                    )
                    for i in range(self.game.n)
                )
                loss = 0.0 if analysis.is_bne(self.game, strategy) else 1.0
            else:
                loss = 0.0 if analysis.is_nash(self.game, play_profile(self.game, a)) else 1.0
            self._nash_cache[a] = loss
        return loss

    def stage_losses(self, names: Sequence[str], a: Forecast, y: object) -> dict[str, float]:
        out: dict[str, float] = {}
        for name in names:
            if name == "pred":
                out[name] = tv_distance(a, self.exact_response(a))
            elif name == "nash":
                out[name] = self._nash_loss(a)
            else:
                raise InvalidConfigError(f"run.losses: {name!r} not available in the finite-game setting")
        return out


_ENVS = {
    "linear": _LinearEnv,
    "nonatomic": _NonatomicEnv,
    "finite-game": _FiniteGameEnv,
}


# --- policy adapters ------------------------------------------------------------


class _ExpodampPolicy:
    def __init__(self, params: Mapping[str, object], rng: np.random.Generator):
        alpha = _as_float(_need(params, "alpha", "policy"), "policy.alpha")
        initial = _as_floats(params.get("initial", (0.0,)), "policy.initial")
        self.state = policies.ExpodampState(a=PointForecast(initial), alpha=alpha)

    def forecast(self, w: str, y_prev: object) -> Forecast:
        if y_prev is None:
            return self.state.a
        return policies.expodamp_step(self.state, y_prev.values)

    def summary(self) -> dict[str, object]:
        return {}


class _AveragePolicy:
    def __init__(self, params: Mapping[str, object], rng: np.random.Generator):
        prior = _as_floats(params.get("prior", (0.0,)), "policy.prior")
        self.state = policies.AverageState(prior=PointForecast(prior))

    def forecast(self, w: str, y_prev: object) -> Forecast:
        if y_prev is None:
            return self.state.prior
        return policies.average_step(self.state, y_prev.values)

    def summary(self) -> dict[str, object]:
        return {}


class _NaivePolicy:
    def __init__(self, params: Mapping[str, object], rng: np.random.Generator, kind: str):
        if kind == "profile":
            profile = _as_profile(
                _need(params, "initial_profile", "policy"), "policy.initial_profile"
            )
            self.initial: Forecast = DiscreteDistribution.dirac(profile)
        else:
            self.initial = PointForecast(
                _as_floats(_need(params, "initial", "policy"), "policy.initial")
            )

    def forecast(self, w: str, y_prev: object) -> Forecast:
        if y_prev is None:
            return self.initial
        return policies.naive_step(y_prev)

    def summary(self) -> dict[str, object]:
        return {}


class _KalmanPolicy:
    def __init__(self, params: Mapping[str, object], rng: np.random.Generator):
        self.state, a0 = policies.kalman_init(
            beta=_as_float(_need(params, "beta", "policy"), "policy.beta"),
            gamma=_as_float(_need(params, "gamma", "policy"), "policy.gamma"),
            var_ex=_as_float(params.get("var_ex", 0.0), "policy.var_ex"),
            var_ey=_as_float(params.get("var_ey", 0.0), "policy.var_ey"),
            x0_mean=_as_float(_need(params, "x0_mean", "policy"), "policy.x0_mean"),
            x0_var=_as_float(params.get("x0_var", 0.0), "policy.x0_var"),
        )
        self.a_prev = a0

    def forecast(self, w: str, y_prev: object) -> Forecast:
        if y_prev is not None:
            self.a_prev = policies.kalman_step(self.state, self.a_prev, y_prev.scalar)
        return PointForecast((self.a_prev,))

    def summary(self) -> dict[str, object]:
        return {"x_mean": self.state.x_mean, "x_var": self.state.x_var}


class _EmpiricalPolicy:
    def __init__(self, params: Mapping[str, object], rng: np.random.Generator):
        profile = _as_profile(
            _need(params, "initial_profile", "policy"), "policy.initial_profile"
        )
        self.state = policies.EmpiricalDistributionState(
            prior=DiscreteDistribution.dirac(profile)
        )

    def forecast(self, w: str, y_prev: object) -> Forecast:
        if y_prev is None:
            return self.state.prior
        return policies.empirical_step(self.state, y_prev)

    def summary(self) -> dict[str, object]:
        return {}


class _PartpredPolicy:
    def __init__(
        self,
        params: Mapping[str, object],
        rng: np.random.Generator,
        game: FiniteCongestionGame | BayesianCongestionGame,
    ):
        update = params.get("update", "congestion")
        if update not in policies.UPDATE_FNS:
            raise InvalidConfigError(
                f"policy.update: {update!r} is not one of {sorted(policies.UPDATE_FNS)}"
            )
        if update == "congestion" and isinstance(game, BayesianCongestionGame):
            raise InvalidConfigError(
                "policy.update: the congestion update needs a complete-information game"
            )
        candidates = list(analysis.candidate_set(game))
        initial_index = params.get("initial_index")
        self.state = policies.PartpredState(
            candidates=candidates,
            r=_as_int(_need(params, "r", "policy"), "policy.r"),
            update_fn=policies.UPDATE_FNS[update],
            rng=rng,
            initial_index=None if initial_index is None else _as_int(initial_index, "policy.initial_index"),
        )

    def forecast(self, w: str, y_prev: object) -> Forecast:
        return policies.partpred_step(self.state, w, y_prev)

    def summary(self) -> dict[str, object]:
        return {
            "converged": {str(w): s.converged for w, s in self.state.per_w.items()},
            "exploration_used": self.state.exploration_used_anywhere(),
        }


def _build_policy(config: SimConfig, rng: np.random.Generator, env) -> object:
    name = config.policy
    allowed = POLICIES_BY_SETTING[config.setting]
    if name not in allowed:
        raise InvalidConfigError(
            f"policy.name: {name!r} is not valid for setting {config.setting!r}; "
            f"valid names: {', '.join(allowed)}"
        )
    params = config.policy_params
    if name == "expodamp":
        return _ExpodampPolicy(params, rng)
    if name == "average":
        return _AveragePolicy(params, rng)
    if name == "naive":
        return _NaivePolicy(params, rng, env.kind)
    if name == "kalman":
        return _KalmanPolicy(params, rng)
    if name == "empirical":
        return _EmpiricalPolicy(params, rng)
    if name == "partpred":
        return _PartpredPolicy(params, rng, env.game)
    raise InvalidConfigError(f"policy.name: unknown policy {name!r}")


def _validate(config: SimConfig) -> None:
    if config.setting not in SETTINGS:
        raise InvalidConfigError(
            f"run.setting: {config.setting!r} is not one of {', '.join(SETTINGS)}"
        )
    if config.policy not in {n for names in POLICIES_BY_SETTING.values() for n in names}:
        valid = sorted({n for names in POLICIES_BY_SETTING.values() for n in names})
        raise InvalidConfigError(
            f"policy.name: unknown policy {config.policy!r}; valid names: {', '.join(valid)}"
        )
    if config.stages < 1:
        raise InvalidConfigError("run.stages: need at least one stage")


def run_dynamic(config: SimConfig, run_index: int = 0) -> Trajectory:
    """Run the repeated system for config.stages stages.

    The policy is asked for its forecast strictly before the environment
    responds, and only ever sees observations from earlier stages.
    """
    _validate(config)
    seq = np.random.SeedSequence(entropy=(config.seed, run_index))
    env_seed, policy_seed = seq.spawn(2)
    env = _ENVS[config.setting](config.env_params, np.random.default_rng(env_seed))
    policy = _build_policy(config, np.random.default_rng(policy_seed), env)
    loss_names = config.losses()

    records = []
    y_prev: object = None
    for t in range(config.stages):
        a = policy.forecast(config.covariate, y_prev)
        y = env.respond(a)
        losses = env.stage_losses(loss_names, a, y)
        records.append(StageRecord(t=t, w=config.covariate, a=a, y=y, losses=losses))
        y_prev = y
    return Trajectory(tuple(records), config_hash(config))


def policy_summary(config: SimConfig, run_index: int = 0) -> dict[str, object]:
    """Re-run and report the policy's final internal flags (cheap, deterministic)."""
    _validate(config)
    seq = np.random.SeedSequence(entropy=(config.seed, run_index))
    env_seed, policy_seed = seq.spawn(2)
    env = _ENVS[config.setting](config.env_params, np.random.default_rng(env_seed))
    policy = _build_policy(config, np.random.default_rng(policy_seed), env)
    y_prev: object = None
    for t in range(config.stages):
        a = policy.forecast(config.covariate, y_prev)
        y_prev = env.respond(a)
    return policy.summary()


def exact_response(config: SimConfig, forecast: DiscreteDistribution) -> DiscreteDistribution:
    """The environment's exact conditional outcome distribution for a forecast."""
    if config.setting != "finite-game":
        raise InvalidConfigError("exact_response is defined for the finite-game setting")
    env = _FiniteGameEnv(config.env_params, np.random.default_rng(0))
    return env.exact_response(forecast)


@dataclass(frozen=True)
class MonteCarloSummary:
    n_runs: int
    loss_means: Mapping[str, float]
    loss_vars: Mapping[str, float]
    self_fulfilling_fraction: float | None
    final_forecasts: tuple[Forecast, ...]


def monte_carlo(config: SimConfig, n_runs: int, sf_tol: float = 1e-9) -> MonteCarloSummary:
    """Independent seeded replications with per-loss statistics.

    Replication k draws its generators from (seed, k); results are merged in
    run order, so the summary is deterministic.
    """
    if n_runs < 1:
        raise InvalidConfigError("monte_carlo.n_runs: need at least one run")
    loss_names = config.losses()
    per_run: dict[str, list[float]] = {name: [] for name in loss_names}
    finals: list[Forecast] = []
    sf_hits = 0
    for k in range(n_runs):
        traj = run_dynamic(config, run_index=k)
        for name in loss_names:
            per_run[name].append(
                math.fsum(rec.losses[name] for rec in traj.records) / len(traj)
            )
        final = traj.final.a
        finals.append(final)
        if config.setting == "finite-game" and isinstance(final, DiscreteDistribution):
            if tv_distance(exact_response(config, final), final) <= sf_tol:
                sf_hits += 1
    means = {name: math.fsum(vals) / n_runs for name, vals in per_run.items()}
    variances = {}
    for name, vals in per_run.items():
        if all(v == vals[0] for v in vals):
            variances[name] = 0.0  # identical replications, exactly zero spread
        else:
            variances[name] = math.fsum((v - means[name]) ** 2 for v in vals) / n_runs
    sf_fraction = sf_hits / n_runs if config.setting == "finite-game" else None
    return MonteCarloSummary(
        n_runs=n_runs,
        loss_means=means,
        loss_vars=variances,
        self_fulfilling_fraction=sf_fraction,
        final_forecasts=tuple(finals),
    )


def replay(
    policy_name: str,
    policy_params: Mapping[str, object],
    observations: Sequence[Sequence[float]],
    covariate: str = "w0",
) -> Trajectory:
    """Feed a recorded observation stream to a point-forecast policy.

    The data is not influenced by the forecasts, so this evaluates forecasting
    accuracy only; squared errors against the recorded rows are logged as
    point_pred.
    """
    if len(observations) == 0:
        raise InvalidConfigError("replay: empty observation stream")
    width = len(observations[0])
    params = dict(policy_params)
    if policy_name == "expodamp":
        params.setdefault("initial", tuple(0.0 for _ in range(width)))
        adapter: object = _ExpodampPolicy(params, np.random.default_rng(0))
    elif policy_name == "average":
        params.setdefault("prior", tuple(0.0 for _ in range(width)))
        adapter = _AveragePolicy(params, np.random.default_rng(0))
    elif policy_name == "naive":
        params.setdefault("initial", tuple(0.0 for _ in range(width)))
        adapter = _NaivePolicy(params, np.random.default_rng(0), "point")
    else:
        raise InvalidConfigError(
            f"replay: policy {policy_name!r} not supported; valid names: average, expodamp, naive"
        )
    records = []
    y_prev: PointForecast | None = None
    for t, row in enumerate(observations):
        if len(row) != width:
            raise InvalidConfigError(f"replay: row {t} has {len(row)} cells, expected {width}")
        a = adapter.forecast(covariate, y_prev)
        y = PointForecast(tuple(float(v) for v in row))
        losses = {"point_pred": point_pred_loss(a, y.values)}
        records.append(StageRecord(t=t, w=covariate, a=a, y=y, losses=losses))
        y_prev = y
    return Trajectory(tuple(records), "replay")
