"""Experiment configuration file: schema, defaults, validation.

The file is a YAML (or JSON) tree with the sections ``scenario``, ``cost``,
``quadrotor``, ``planner``, ``selection``, ``solver``, ``sweep``, ``output``.
Every field has a default except where noted; unknown keys and type
mismatches are rejected with the offending field path, e.g.
``selection.kappa``.

``selection.kappa`` is required whenever a barrier scheme (BF/CBF) is used
by the planner or appears in the sweep; for the other schemes the library
default applies.
"""

from __future__ import annotations

from dataclasses import dataclass

import yaml

from .dynamics import QuadrotorParams
from .harness import CostParams, ScenarioConfig
from .planner import PlannerConfig
from .selection import SelectionParams, SelectionScheme, parse_scheme
from .solver import SolverConfig


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig
    planner: PlannerConfig
    sweep_schemes: list
    sweep_p_values: list
    include_full_game: bool
    write_trajectories: bool
    raw: dict


_SCHEMAS = {
    "scenario": {
        "grid": (str, list),
        "spacing": (int, float),
        "dynamics": (str,),
        "runs": (int,),
        "steps": (int,),
        "base_seed": (int,),
        "start_jitter": (int, float),
        "dt": (int, float),
        "control_bound": (int, float, type(None)),
    },
    "cost": {
        "q_pos": (int, float),
        "q_vel": (int, float),
        "q_att": (int, float),
        "q_rate": (int, float),
        "r_ctrl": (int, float),
        "mu": (int, float),
        "r_rad": (int, float),
        "terminal_weight": (int, float),
        "r_min": (int, float),
    },
    "quadrotor": {
        "mass": (int, float),
        "inertia": (list,),
        "k_f": (int, float),
        "k_m": (int, float),
        "arm_length": (int, float),
        "gravity": (int, float),
        "motor_limit_factor": (int, float),
    },
    "planner": {
        "scheme": (str,),
        "p": (int,),
        "horizon": (int,),
        "replan_period": (int,),
        "warm_start": (bool,),
    },
    "selection": {
        "kappa": (int, float),
        "fd_step": (int, float),
    },
    "solver": {
        "tolerance": (int, float),
        "rho0": (int, float),
        "gamma": (int, float),
        "max_outer": (int,),
        "max_newton": (int,),
        "line_search_shrink": (int, float),
        "reg_floor": (int, float),
        "step_limit": (int, float),
        "stall_iterations": (int,),
    },
    "sweep": {
        "schemes": (list,),
        "p_values": (list,),
        "include_full_game": (bool,),
    },
    "output": {
        "write_trajectories": (bool,),
    },
}


def _check_section(raw, name):
    section = raw.get(name, {})
    if section is None:
        section = {}
    if not isinstance(section, dict):
        raise ConfigError(name, "must be a mapping")
    schema = _SCHEMAS[name]
    for key, value in section.items():
        if key not in schema:
            raise ConfigError(f"{name}.{key}", "unknown field")
        if not isinstance(value, schema[key]) or isinstance(value, bool) \
                and bool not in schema[key]:
            expected = "/".join(t.__name__ for t in schema[key])
            raise ConfigError(f"{name}.{key}",
                              f"expected {expected}, got {type(value).__name__}")
    return dict(section)


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    return raw


def validate_config(raw: dict) -> ExperimentConfig:
    for section in raw:
        if section not in _SCHEMAS:
            raise ConfigError(section, "unknown section")
    scen = _check_section(raw, "scenario")
    cost = _check_section(raw, "cost")
    quad = _check_section(raw, "quadrotor")
    planner = _check_section(raw, "planner")
    selection = _check_section(raw, "selection")
    solver = _check_section(raw, "solver")
    sweep = _check_section(raw, "sweep")
    output = _check_section(raw, "output")

    try:
        scheme = parse_scheme(planner.get("scheme", "NearestNeighbor"))
    except ValueError as exc:
        raise ConfigError("planner.scheme", str(exc)) from None

    sweep_schemes = []
    for i, name in enumerate(sweep.get("schemes", [])):
        try:
            sweep_schemes.append(parse_scheme(name))
        except ValueError as exc:
            raise ConfigError(f"sweep.schemes[{i}]", str(exc)) from None
    p_values = sweep.get("p_values", [])
    for i, p in enumerate(p_values):
        if not isinstance(p, int) or p < 0:
            raise ConfigError(f"sweep.p_values[{i}]",
                              "must be a nonnegative integer")

    barrier = {SelectionScheme.BF, SelectionScheme.CBF}
    uses_barrier = scheme in barrier or bool(barrier & set(sweep_schemes))
    if uses_barrier and "kappa" not in selection:
        raise ConfigError("selection.kappa",
                          "required when a BF/CBF scheme is used")

    if "inertia" in quad:
        inertia = quad.pop("inertia")
        if len(inertia) != 3 or any(not isinstance(v, (int, float))
                                    for v in inertia):
            raise ConfigError("quadrotor.inertia", "expected 3 numbers")
        quad["inertia_diag"] = tuple(float(v) for v in inertia)

    try:
        quad_params = QuadrotorParams(**quad)
    except (TypeError, ValueError) as exc:
        raise ConfigError("quadrotor", str(exc)) from None
    try:
        scenario = ScenarioConfig(cost=CostParams(**cost),
                                  quad_params=quad_params, **scen)
    except (TypeError, ValueError) as exc:
        raise ConfigError("scenario", str(exc)) from None
    try:
        planner_cfg = PlannerConfig(
            scheme=scheme,
            p=planner.get("p", 1),
            horizon=planner.get("horizon", 10),
            replan_period=planner.get("replan_period", 1),
            warm_start=planner.get("warm_start", True),
            solver=SolverConfig(**solver),
            selection=SelectionParams(
                kappa=float(selection.get("kappa", 5.0)),
                fd_step=float(selection.get("fd_step", 1e-4)),
                mu=scenario.cost.mu,
                r_rad=scenario.cost.r_rad,
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError("planner", str(exc)) from None

    return ExperimentConfig(
        scenario=scenario,
        planner=planner_cfg,
        sweep_schemes=sweep_schemes,
        sweep_p_values=list(p_values),
        include_full_game=bool(sweep.get("include_full_game", False)),
        write_trajectories=bool(output.get("write_trajectories", False)),
        raw=raw,
    )


def load_and_validate(path) -> ExperimentConfig:
    return validate_config(load_config(path))
