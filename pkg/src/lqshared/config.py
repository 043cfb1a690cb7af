"""JSON configuration loading with schema validation.

Configs are versioned and validated against the schemas shipped with the
package (also published under docs/schema/); unknown fields are rejected.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from jsonschema import Draft202012Validator

from .design import AdaptPolicy, DesignBounds, DesignProblem
from .errors import ConfigError
from .games import CostParams, GameSystem, GlobalObjective
from .scenario import (
    Excitation,
    HumanPhase,
    ReferenceProfile,
    ScenarioConfig,
    paper_system,
)


def _load_schema(name: str) -> dict:
    with resources.files("lqshared.schemas").joinpath(f"{name}.json").open() as fh:
        return json.load(fh)


def _rewrite_refs(node, mapping: dict[str, str]):
    """Rewrite cross-file $ref prefixes so the schema is self-contained."""
    if isinstance(node, dict):
        out = {}
        for key, value in node.items():
            if key == "$ref" and isinstance(value, str):
                for prefix, target in mapping.items():
                    if value == prefix:
                        value = target
                    elif value.startswith(prefix + "#"):
                        value = target if value == prefix + "#" else \
                            value.replace(prefix + "#", "#", 1)
                out[key] = value
            else:
                out[key] = _rewrite_refs(value, mapping)
        return out
    if isinstance(node, list):
        return [_rewrite_refs(v, mapping) for v in node]
    return node


def _resolved_schema(name: str) -> dict:
    """Schema with common (and scenario, for hil) defs inlined."""
    schema = dict(_load_schema(name))
    defs = dict(schema.get("$defs", {}))
    defs.update(_load_schema("common").get("$defs", {}))
    mapping = {"common.json": "#"}
    if name == "hil":
        scenario = _resolved_schema("scenario")
        scenario.pop("$schema", None)
        defs["scenario_config"] = scenario
        defs.update(scenario.pop("$defs", {}))
        mapping["scenario.json"] = "#/$defs/scenario_config"
    schema["$defs"] = defs
    return _rewrite_refs(schema, mapping)


def _validator(name: str) -> Draft202012Validator:
    return Draft202012Validator(_resolved_schema(name))


def load_config(path, kind: str) -> dict:
    """Read and validate a config file; raises ConfigError with the cause."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate_config(raw, kind)
    return raw


def validate_config(raw: dict, kind: str) -> None:
    errors = sorted(_validator(kind).iter_errors(raw), key=str)
    if errors:
        first = errors[0]
        loc = "/".join(str(p) for p in first.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {loc}: {first.message}")


def _system_from(raw: dict | None) -> GameSystem:
    if raw is None:
        return paper_system()
    return GameSystem(raw["a"], [raw["b_automation"], raw["b_human"]])


def _cost_from(raw: dict) -> CostParams:
    return CostParams(raw["q"], raw["r"], raw.get("r_cross"))


def _objective_from(raw: dict | None) -> GlobalObjective:
    if raw is None:
        return GlobalObjective([35.0, 1.0, 3.0], [[1.0], [1.0]])
    return GlobalObjective(raw["q"], [raw["r_automation"], raw["r_human"]])


def scenario_from_config(raw: dict, seed_override: int | None = None,
                         adaptive_override: bool | None = None) -> ScenarioConfig:
    kwargs: dict = {}
    if "system" in raw:
        kwargs["sys"] = _system_from(raw["system"])
    if "human_phases" in raw:
        kwargs["phases"] = tuple(
            HumanPhase(p["start"], _cost_from(p["cost"]))
            for p in raw["human_phases"])
    if "objective" in raw:
        kwargs["objective"] = _objective_from(raw["objective"])
    for key in ("duration", "control_rate_hz", "adapt_period", "lambda_f",
                "p0", "adaptive", "seed", "warmup", "cov_trace_gate",
                "innovation_gate", "reset_threshold", "offline_budget"):
        if key in raw:
            kwargs[key] = raw[key]
    if "excitation" in raw:
        exc = raw["excitation"]
        kwargs["excitation"] = Excitation(
            amplitudes=tuple(exc.get("amplitudes", (0.5, 0.3, 0.2))),
            frequencies_hz=tuple(exc.get("frequencies_hz", (0.1, 0.23, 0.41))),
            axes=tuple(exc.get("axes", (1, 2, 0))))
    if "reference" in raw:
        ref = raw["reference"]
        kwargs["reference"] = ReferenceProfile(
            kind=ref.get("kind", "sines"),
            amplitude=ref.get("amplitude", 2.0),
            period_s=ref.get("period_s", 20.0))
    if "x0" in raw:
        kwargs["x0"] = tuple(raw["x0"])
    if "policy" in raw:
        kwargs["policy"] = AdaptPolicy(**raw["policy"])
    if "theta_a_init" in raw:
        kwargs["theta_a_init"] = _cost_from(raw["theta_a_init"])
    if seed_override is not None:
        kwargs["seed"] = seed_override
    if adaptive_override is not None:
        kwargs["adaptive"] = adaptive_override
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def design_problem_from_config(raw: dict,
                               seed_override: int | None = None) -> DesignProblem:
    sys = _system_from(raw.get("system"))
    human = _cost_from(raw["human_cost"])
    objective = _objective_from(raw["objective"])
    init = (_cost_from(raw["theta_a_init"]) if "theta_a_init" in raw
            else CostParams(objective.qg, np.ones(sys.m[0])))
    bounds = DesignBounds(**raw.get("bounds", {}))
    return DesignProblem(
        sys=sys, human_cost=human, objective=objective, theta_a_init=init,
        bounds=bounds, budget=raw.get("budget", 3000),
        x0_weight=np.asarray(raw["x0_weight"], float) if "x0_weight" in raw else None,
        seed=raw.get("seed", 0) if seed_override is None else seed_override)


def bundled_config_path(name: str) -> Path:
    return Path(str(resources.files("lqshared.configs").joinpath(f"{name}.json")))
