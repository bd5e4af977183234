"""Run configuration: a single JSON document driving every subcommand.

Schema (see README for a walkthrough):

    {
      "model": {
        "profile": [{"interval": [a, b], "law": LAW}, ...],
        "marginal": LAW            # optional; derived from strata if absent
      },
      "n": 10000, "seed": 7, "horizon": 2.0,
      "checkpoints": [0.25, 1.0],
      "grid": {"y": [...], "t": [...], "exclusion": 0.05},
      "convergence": {"ns": [...], "replicas": 20, "slope_band": [lo, hi],
                      "flow_points": [[y, t], ...],
                      "boundary_tol": 1.5, "statistic_tol": 5.0},
      "verify": {"oracle_n": 200, "oracle_seeds": 10,
                 "oracle_checkpoints": 50, "oracle_horizon": 5.0,
                 "conditional_n": 100, "conditional_replicas": 2000},
      "initial_order": [3, 1, 2, 4],          # optional, ids front to back
      "event_override": [[t, id], ...],       # optional scripted jumps
      "out": "out"
    }

LAW is one of {"atoms": [[w, p], ...]}, {"gamma": {"alpha": a, "beta": b}},
or {"mixture": [{"weight": q, ...LAW}, ...]}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .measures import InitialProfile, JumpRateLaw


class ConfigError(Exception):
    """Invalid or unreadable run configuration."""


def parse_law(obj) -> JumpRateLaw:
    if not isinstance(obj, dict):
        raise ConfigError(f"law must be an object, got {type(obj).__name__}")
    kinds = [k for k in ("atoms", "gamma", "mixture") if k in obj]
    if len(kinds) != 1:
        raise ConfigError("law needs exactly one of: atoms, gamma, mixture")
    try:
        if kinds[0] == "atoms":
            return JumpRateLaw.from_atoms([(float(w), float(p)) for w, p in obj["atoms"]])
        if kinds[0] == "gamma":
            spec = obj["gamma"]
            return JumpRateLaw.gamma(float(spec["alpha"]), float(spec["beta"]))
        parts = []
        for part in obj["mixture"]:
            rest = {k: v for k, v in part.items() if k != "weight"}
            parts.append((float(part["weight"]), parse_law(rest)))
        return JumpRateLaw.mixture(parts)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad law spec: {exc}") from exc


def parse_profile(spec) -> InitialProfile:
    if not isinstance(spec, list) or not spec:
        raise ConfigError("model.profile must be a nonempty list of strata")
    strata = []
    for item in spec:
        try:
            a, b = (float(x) for x in item["interval"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad stratum interval: {exc}") from exc
        strata.append((a, b, parse_law(item.get("law", {}))))
    try:
        return InitialProfile(strata)
    except ValueError as exc:
        raise ConfigError(f"bad profile: {exc}") from exc


_LN2 = math.log(2.0)


@dataclass
class RunConfig:
    profile: InitialProfile
    marginal: JumpRateLaw | None
    n: int
    seed: int
    horizon: float
    checkpoints: list[float]
    grid_y: list[float]
    grid_t: list[float]
    exclusion: float
    ns: list[int]
    replicas: int
    slope_band: tuple[float, float]
    flow_points: list[tuple[float, float]]
    boundary_tol: float
    statistic_tol: float
    oracle_n: int
    oracle_seeds: int
    oracle_checkpoints: int
    oracle_horizon: float
    conditional_n: int
    conditional_replicas: int
    initial_order: list[int] | None
    event_override: list[tuple[float, int]] | None
    out_dir: Path
    model_id: str = "model"
    extras: dict = field(default_factory=dict)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, default_id=path.stem)


def parse_config(raw: dict, default_id: str = "model") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    model = raw.get("model")
    if not isinstance(model, dict):
        raise ConfigError("config needs a model object")
    profile = parse_profile(model.get("profile"))
    marginal = parse_law(model["marginal"]) if "marginal" in model else None
    if marginal is not None and not profile.matches_marginal(marginal):
        raise ConfigError("declared marginal does not match the profile average")

    n = int(raw.get("n", 10_000))
    if n < 1:
        raise ConfigError("n must be positive")
    seed = int(raw.get("seed", 0))
    horizon = float(raw.get("horizon", 2.0))
    if horizon < 0:
        raise ConfigError("horizon must be nonnegative")
    checkpoints = [float(t) for t in raw.get("checkpoints", [horizon])]
    if any(t < 0 for t in checkpoints) or any(
        b < a for a, b in zip(checkpoints, checkpoints[1:])
    ):
        raise ConfigError("checkpoints must be sorted and nonnegative")
    if checkpoints and checkpoints[-1] > horizon:
        raise ConfigError("checkpoints must not exceed the horizon")

    grid = raw.get("grid", {})
    grid_y = [float(y) for y in grid.get("y", [round(0.1 * k, 1) for k in range(1, 10)])]
    grid_t = [float(t) for t in grid.get("t", [0.25, _LN2, 1.0, 2.0])]
    if any(not 0.0 < y < 1.0 for y in grid_y):
        raise ConfigError("grid positions must lie strictly inside (0, 1)")
    if any(t < 0.0 for t in grid_t):
        raise ConfigError("grid times must be nonnegative")
    exclusion = float(grid.get("exclusion", 0.05))

    conv = raw.get("convergence", {})
    ns = [int(x) for x in conv.get("ns", [1_000, 10_000, 100_000])]
    replicas = int(conv.get("replicas", 20))
    if replicas < 1:
        raise ConfigError("convergence.replicas must be positive")
    band = conv.get("slope_band", [-0.65, -0.35])
    if len(band) != 2 or band[0] > band[1]:
        raise ConfigError("slope_band must be [lo, hi]")
    flow_points = [
        (float(y), float(t))
        for y, t in conv.get("flow_points", [[0.3, 0.5], [0.3, 1.0], [0.7, 0.5], [0.7, 1.0]])
    ]

    ver = raw.get("verify", {})

    order = raw.get("initial_order")
    if order is not None:
        order = [int(i) for i in order]
    override = raw.get("event_override")
    if override is not None:
        try:
            override = [(float(t), int(i)) for t, i in override]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad event_override: {exc}") from exc

    return RunConfig(
        profile=profile,
        marginal=marginal,
        n=n,
        seed=seed,
        horizon=horizon,
        checkpoints=checkpoints,
        grid_y=grid_y,
        grid_t=grid_t,
        exclusion=exclusion,
        ns=ns,
        replicas=replicas,
        slope_band=(float(band[0]), float(band[1])),
        flow_points=flow_points,
        boundary_tol=float(conv.get("boundary_tol", 1.5)),
        statistic_tol=float(conv.get("statistic_tol", 5.0)),
        oracle_n=int(ver.get("oracle_n", 200)),
        oracle_seeds=int(ver.get("oracle_seeds", 10)),
        oracle_checkpoints=int(ver.get("oracle_checkpoints", 50)),
        oracle_horizon=float(ver.get("oracle_horizon", 5.0)),
        conditional_n=int(ver.get("conditional_n", 100)),
        conditional_replicas=int(ver.get("conditional_replicas", 2000)),
        initial_order=order,
        event_override=override,
        out_dir=Path(raw.get("out", "out")),
        model_id=str(raw.get("model_id", default_id)),
        extras={k: v for k, v in raw.items() if k not in {
            "model", "n", "seed", "horizon", "checkpoints", "grid",
            "convergence", "verify", "initial_order", "event_override",
            "out", "model_id",
        }},
    )
