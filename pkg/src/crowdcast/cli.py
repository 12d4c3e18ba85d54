"""Command-line harness: simulate, evaluate, analyze, monte-carlo.

Config files are flat key-value INI sections (documented in the README); an
unknown key is an error, never silently ignored. All files are UTF-8 with
'\\n' line endings. Set CROWDCAST_LOG=DEBUG (or INFO/WARNING) for diagnostics.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from dataclasses import dataclass
from typing import Sequence

from . import analysis
from .core import (
    CrowdcastError,
    DiscreteDistribution,
    EmptyInputError,
    InvalidConfigError,
    ParseError,
    PointForecast,
    trajectory_mse,
)
from .engine import (
    SETTINGS,
    SimConfig,
    Trajectory,
    monte_carlo,
    policy_summary,
    replay,
    run_dynamic,
)
from .environments import FiniteCongestionGame

logger = logging.getLogger("crowdcast")

_RUN_KEYS = {"setting", "stages", "seed", "covariate", "losses"}
_POLICY_KEYS = {
    "expodamp": {"name", "alpha", "initial"},
    "average": {"name", "prior"},
    "naive": {"name", "initial", "initial_profile"},
    "kalman": {"name", "beta", "gamma", "var_ex", "var_ey", "x0_mean", "x0_var"},
    "empirical": {"name", "initial_profile"},
    "partpred": {"name", "r", "update", "initial_index"},
}
_ENV_KEYS = {
    "linear": {"beta", "gamma", "var_ex", "var_ey", "x0_mean", "x0_var"},
    "nonatomic": {"phi", "chi", "delta", "x", "grid_n"},
}


# --- day-matrix CSV ------------------------------------------------------------


@dataclass(frozen=True)
class DayMatrix:
    """Rectangular day x sample-time table of nonnegative occupancy values."""

    slot_labels: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]

    @property
    def n_days(self) -> int:
        return len(self.rows)


def parse_day_csv(path: str) -> DayMatrix:
    """Read a day matrix: header of slot labels, one day per row, no gaps."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EmptyInputError(f"{path}: empty file")
    labels = tuple(cell.strip() for cell in lines[0].split(","))
    if any(label == "" for label in labels):
        raise ParseError(f"{path}:1: empty column label")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(labels):
            raise ParseError(
                f"{path}:{lineno}: row has {len(cells)} cells, header has {len(labels)}"
            )
        values = []
        for col, cell in enumerate(cells):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: cell {col + 1} is not a number: {cell!r}")
            if not value >= 0.0:
                raise ParseError(f"{path}:{lineno}: cell {col + 1} is negative or NaN")
            values.append(value)
        rows.append(tuple(values))
    if not rows:
        raise EmptyInputError(f"{path}: header but no day rows")
    return DayMatrix(slot_labels=labels, rows=tuple(rows))


def serialize_day_csv(matrix: DayMatrix) -> str:
    """Canonical form: comma-separated, shortest round-trip floats, \\n endings."""
    lines = [",".join(matrix.slot_labels)]
    for row in matrix.rows:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


# --- INI config parsing ---------------------------------------------------------


def _read_ini(path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise InvalidConfigError(f"config file not found: {path}")
    except configparser.Error as exc:
        raise InvalidConfigError(f"{path}: {exc}")
    return parser

def _check_keys(path: str, section: str, present: Sequence[str], allowed: set[str]) -> None:
    for key in present:
        if key not in allowed:
            raise InvalidConfigError(
                f"{path}: [{section}] has unknown key {key!r}; allowed: {', '.join(sorted(allowed))}"
            )


def _floats_list(raw: str) -> tuple[float, ...]:
    parts = raw.replace(",", " ").split()
    return tuple(float(p) for p in parts)


def _ints_list(raw: str) -> tuple[int, ...]:
    parts = raw.replace(",", " ").split()
    return tuple(int(p) for p in parts)


def _game_section(path: str, parser: configparser.ConfigParser, section: str) -> FiniteCongestionGame:
    if not parser.has_section(section):
        raise InvalidConfigError(f"{path}: missing [{section}] section")
    sec = parser[section]
    raw_n, raw_d = sec.get("players"), sec.get("slots")
    if raw_n is None or raw_d is None:
        raise InvalidConfigError(f"{path}: [{section}] needs players and slots")
    try:
        n, d = int(raw_n), int(raw_d)
    except ValueError:
        raise InvalidConfigError(f"{path}: [{section}] players/slots must be integers")
    allowed = {"players", "slots"} | {f"slot_{k}" for k in range(d)}
    _check_keys(path, section, list(sec.keys()), allowed)
    rows = []
    for k in range(d):
        raw = sec.get(f"slot_{k}")
        if raw is None:
            raise InvalidConfigError(f"{path}: [{section}] missing slot_{k} utilities")
        row = _floats_list(raw)
        if len(row) != n:
            raise InvalidConfigError(
                f"{path}: [{section}] slot_{k} lists {len(row)} utilities, expected {n}"
            )
        rows.append(row)
    return FiniteCongestionGame(n=n, d=d, utility=tuple(rows))


def load_sim_config(path: str, seed_override: int | None = None) -> SimConfig:
    """Parse a [run]/[policy]/[environment] simulation config file."""
    parser = _read_ini(path)
    for section in ("run", "policy", "environment"):
        if not parser.has_section(section):
            raise InvalidConfigError(f"{path}: missing [{section}] section")
    run = parser["run"]
    _check_keys(path, "run", list(run.keys()), _RUN_KEYS)
    setting = run.get("setting")
    if setting not in SETTINGS:
        raise InvalidConfigError(
            f"{path}: run.setting must be one of {', '.join(SETTINGS)}, got {setting!r}"
        )
    raw_stages, raw_seed = run.get("stages"), run.get("seed")
    if raw_stages is None or raw_seed is None:
        raise InvalidConfigError(f"{path}: run.stages and run.seed are required")
    try:
        stages, seed = int(raw_stages), int(raw_seed)
    except ValueError:
        raise InvalidConfigError(f"{path}: run.stages and run.seed must be integers")
    losses = None
    if run.get("losses") is not None:
        losses = tuple(run.get("losses").replace(",", " ").split())

    pol = parser["policy"]
    name = pol.get("name")
    if name not in _POLICY_KEYS:
        raise InvalidConfigError(
            f"{path}: policy.name {name!r} unknown; valid names: {', '.join(sorted(_POLICY_KEYS))}"
        )
    _check_keys(path, "policy", list(pol.keys()), _POLICY_KEYS[name])
    policy_params: dict[str, object] = {}
    for key in pol:
        if key == "name":
            continue
        raw = pol.get(key)
        if key in {"initial", "prior"}:
            policy_params[key] = _floats_list(raw)
        elif key == "initial_profile":
            policy_params[key] = _ints_list(raw)
        elif key in {"r", "initial_index"}:
            policy_params[key] = int(raw)
        elif key == "update":
            policy_params[key] = raw.strip()
        else:
            policy_params[key] = float(raw)

    env_params: dict[str, object] = {}
    if setting == "finite-game":
        env_params["game"] = _game_section(path, parser, "environment")
    else:
        env = parser["environment"]
        _check_keys(path, "environment", list(env.keys()), _ENV_KEYS[setting])
        for key in env:
            env_params[key] = int(env.get(key)) if key == "grid_n" else float(env.get(key))

    return SimConfig(
        setting=setting,
        policy=name,
        policy_params=policy_params,
        env_params=env_params,
        stages=stages,
        seed=seed if seed_override is None else seed_override,
        covariate=run.get("covariate", "w0"),
        log_losses=losses,
    )


# --- trajectory serialization ---------------------------------------------------


def _cell(value: float | int) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _forecast_cells(a: object) -> list[str]:
    if isinstance(a, PointForecast):
        return [_cell(v) for v in a.values]
    if isinstance(a, DiscreteDistribution):
        mode = a.mode()
        return [_cell(int(v)) for v in mode.actions]
    raise InvalidConfigError(f"cannot serialize forecast {a!r}")


def _observation_cells(y: object) -> list[str]:
    if isinstance(y, PointForecast):
        return [_cell(v) for v in y.values]
    return [_cell(int(v)) for v in y.actions]


def trajectory_csv(traj: Trajectory, loss_names: Sequence[str]) -> str:
    """Columns: t, a_0.., y_0.., loss columns.

    Distribution forecasts are shown as the most likely action per player;
    point forecasts and observations are written verbatim.
    """
    first = traj.records[0]
    a_width = len(_forecast_cells(first.a))
    y_width = len(_observation_cells(first.y))
    header = (
        ["t"]
        + [f"a_{i}" for i in range(a_width)]
        + [f"y_{i}" for i in range(y_width)]
        + list(loss_names)
    )
    lines = [",".join(header)]
    for rec in traj.records:
        cells = [str(rec.t)]
        cells += _forecast_cells(rec.a)
        cells += _observation_cells(rec.y)
        cells += [_cell(rec.losses[name]) for name in loss_names]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def plot_data_csv(traj: Trajectory, loss_names: Sequence[str]) -> str:
    """Tidy long format (t, series, value) for external plotting."""
    lines = ["t,series,value"]
    for rec in traj.records:
        for i, cell in enumerate(_forecast_cells(rec.a)):
            lines.append(f"{rec.t},a_{i},{cell}")
        for i, cell in enumerate(_observation_cells(rec.y)):
            lines.append(f"{rec.t},y_{i},{cell}")
        for name in loss_names:
            lines.append(f"{rec.t},{name},{_cell(rec.losses[name])}")
    return "\n".join(lines) + "\n"


# --- subcommands -----------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_sim_config(args.config, seed_override=args.seed)
    traj = run_dynamic(config)
    loss_names = config.losses()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(trajectory_csv(traj, loss_names))
    if args.emit_plot_data:
        with open(args.emit_plot_data, "w", encoding="utf-8", newline="") as fh:
            fh.write(plot_data_csv(traj, loss_names))
    final = traj.final
    print(f"setting={config.setting} policy={config.policy} stages={config.stages} seed={config.seed}")
    print(f"config_hash={traj.config_hash}")
    print("final_forecast=" + " ".join(_forecast_cells(final.a)))
    print(
        "final_losses="
        + " ".join(f"{name}={final.losses[name]:.9g}" for name in loss_names)
    )
    for key, value in policy_summary(config).items():
        print(f"policy.{key}={value}")
    if args.out:
        print(f"wrote {args.out}")
    if args.emit_plot_data:
        print(f"wrote {args.emit_plot_data}")
    return 0


_EVAL_POLICY_KEYS = {
    "expodamp": {"alpha", "initial"},
    "average": {"prior"},
    "naive": {"initial"},
}


def _evaluate_specs(path: str | None) -> list[tuple[str, dict[str, object]]]:
    if path is None:
        return [("expodamp", {"alpha": 0.3}), ("average", {})]
    parser = _read_ini(path)
    if not parser.has_section("evaluate"):
        raise InvalidConfigError(f"{path}: missing [evaluate] section")
    _check_keys(path, "evaluate", list(parser["evaluate"].keys()), {"policies"})
    raw = parser["evaluate"].get("policies")
    if raw is None:
        raise InvalidConfigError(f"{path}: evaluate.policies is required")
    specs = []
    for name in raw.replace(",", " ").split():
        if name not in _EVAL_POLICY_KEYS:
            raise InvalidConfigError(
                f"{path}: evaluate policy {name!r} unknown; valid names: "
                f"{', '.join(sorted(_EVAL_POLICY_KEYS))}"
            )
        params: dict[str, object] = {}
        if parser.has_section(name):
            _check_keys(path, name, list(parser[name].keys()), _EVAL_POLICY_KEYS[name])
            for key in parser[name]:
                raw_val = parser[name].get(key)
                if key in {"initial", "prior"}:
                    params[key] = _floats_list(raw_val)
                else:
                    params[key] = float(raw_val)
        specs.append((name, params))
    return specs


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Replay recorded day data through point policies and compare MSE.

    Replay mode: the recorded observations are not influenced by the
    forecasts, so this measures forecasting accuracy only, not coordination.
    """
    matrix = parse_day_csv(args.data)
    specs = _evaluate_specs(args.config)
    results = []
    for name, params in specs:
        traj = replay(name, params, matrix.rows)
        results.append((name, trajectory_mse(traj.records)))
    width = max(len(name) for name, _ in results)
    print("replay mode: forecasts do not influence the recorded data")
    print(f"days={matrix.n_days} slots={len(matrix.slot_labels)}")
    print(f"{'method'.ljust(width)}  mean_squared_error")
    for name, mse in results:
        print(f"{name.ljust(width)}  {mse:.6f}")
    if args.out:
        lines = ["method,mean_squared_error"]
        lines += [f"{name},{repr(mse)}" for name, mse in results]
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {args.out}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    parser = _read_ini(args.config)
    section = "game" if parser.has_section("game") else "environment"
    game = _game_section(args.config, parser, section)
    report = analysis.prediction_equilibrium_report(game)
    candidates = analysis.candidate_set(game)
    print(f"game: {game.n} players, {game.d} slots")
    strict = set(report.strict_nash)
    ne_cells = [
        f"{c.actions}{' [strict]' if c in strict else ''}" for c in report.nash
    ]
    print(f"nash equilibria ({len(ne_cells)}): " + (", ".join(ne_cells) or "none"))
    print(f"candidate set size: {len(candidates)}")
    sf_cells = [str(c.actions) for c in report.self_fulfilling]
    print(f"self-fulfilling candidates ({len(sf_cells)}): " + (", ".join(sf_cells) or "none"))
    if report.ok:
        print("correspondence: OK (0 violations)")
    else:
        print(
            f"correspondence: VIOLATED (self-fulfilling but not NE: {report.sf_not_ne}; "
            f"strict NE not self-fulfilling: {report.strict_ne_not_sf})"
        )
    if not strict:
        print("note: no strict equilibrium, so the strict-NE direction is vacuous here")
    return 0


def cmd_monte_carlo(args: argparse.Namespace) -> int:
    config = load_sim_config(args.config, seed_override=args.seed)
    summary = monte_carlo(config, n_runs=args.runs)
    print(f"runs={summary.n_runs}")
    for name in sorted(summary.loss_means):
        print(
            f"loss.{name}: mean={summary.loss_means[name]:.9g} "
            f"var={summary.loss_vars[name]:.9g}"
        )
    if summary.self_fulfilling_fraction is not None:
        print(f"self_fulfilling_fraction={summary.self_fulfilling_fraction:.4f}")
    return 0


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdcast",
        description="Simulate and analyze forecast-driven coordination assistants.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one seeded trajectory")
    sim.add_argument("--config", required=True, help="simulation config (INI)")
    sim.add_argument("--out", help="trajectory CSV output path")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.add_argument("--emit-plot-data", help="tidy long-format CSV output path")
    sim.set_defaults(func=cmd_simulate)

    ev = sub.add_parser("evaluate", help="replay recorded day data through policies")
    ev.add_argument("--data", required=True, help="day matrix CSV")
    ev.add_argument("--config", help="evaluation config (INI); defaults to expodamp+average")
    ev.add_argument("--out", help="comparison table CSV output path")
    ev.set_defaults(func=cmd_evaluate)

    an = sub.add_parser("analyze", help="equilibrium / candidate analysis of a game file")
    an.add_argument("--config", required=True, help="game definition (INI)")
    an.set_defaults(func=cmd_analyze)

    mc = sub.add_parser("monte-carlo", help="independent seeded replications")
    mc.add_argument("--config", required=True, help="simulation config (INI)")
    mc.add_argument("--runs", type=int, required=True, help="number of replications")
    mc.add_argument("--seed", type=int, help="override the config seed")
    mc.set_defaults(func=cmd_monte_carlo)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("CROWDCAST_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CrowdcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
