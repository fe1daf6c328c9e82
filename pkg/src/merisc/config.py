"""JSON run configuration with strict key checking.

Layout::

    {
      "scene":    {SceneConfig fields, "total_power_dbm", "noise_power_dbm",
                   "noise_sweep_dbm", "averaging"},
      "table":    {"path"} or {"bits", "amplitude", "phase_law",
                   "wall_eps_r", "wall_sigma", "wall_thickness"},
      "ga":       {GaParams fields},
      "scenario": {"kind", "C", "L", "period", "v_max", "dt", "path", "static_users"},
      "outputs":  {"directory", "include_ris_only", "footprint": {...}}
    }

Every section is optional; omitted fields take their defaults.  Powers
are given in dBm and converted to watts once, here.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

from .em import WALL_EPS_R, WALL_SIGMA, WALL_THICKNESS
from .ga import GaParams
from .qos import dbm_to_watt
from .scene import SceneConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class TableSpec:
    path: Optional[str] = None
    bits: int = 3
    amplitude: float = 0.9
    phase_law: object = "uniform"
    wall_eps_r: float = WALL_EPS_R
    wall_sigma: float = WALL_SIGMA
    wall_thickness: float = WALL_THICKNESS


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "aperiodic"
    C: int = 30
    L: int = 2
    period: Optional[int] = None
    v_max: float = 1.5
    dt: float = 1.0
    path: Optional[str] = None
    static_users: Tuple[Tuple[float, float], ...] = ()


@dataclass(frozen=True)
class FootprintSpec:
    nx: int = 41
    ny: int = 31
    steps: Tuple[int, ...] = (1,)
    beams: Tuple[int, ...] = (1,)
    variants: Tuple[str, ...] = ("me_risc",)


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    include_ris_only: bool = False
    footprint: FootprintSpec = field(default_factory=FootprintSpec)


@dataclass(frozen=True)
class RunConfig:
    scene: SceneConfig
    table: TableSpec
    ga: GaParams
    scenario: ScenarioSpec
    outputs: OutputSpec
    total_power: float  # W
    noise_power: float  # W
    noise_sweep_dbm: Tuple[float, ...]
    averaging: object = "incident"
    total_power_dbm: float = 46.0
    noise_power_dbm: float = -96.0
    base_dir: Path = Path(".")

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q


_SCENE_EXTRA = {"total_power_dbm": 46.0, "noise_power_dbm": -96.0,
                "noise_sweep_dbm": [-96.0, -76.0, -56.0], "averaging": "incident"}
_VECTOR_FIELDS = {"bs_position": 3, "origin": 3, "normal": 3, "up": 3, "polarization": 3,
                  "user_area": 4, "wall_offset": 2}
_VARIANTS = ("me_risc", "ga_risc", "no_ris", "ris_only")


def _check_keys(section: dict, allowed, path: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(repr(k) for k in unknown)}")


def _coerce(value, default, path):
    """Coerce a JSON value to the type of ``default``."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    return value


def _fields(cls):
    return {f.name: f for f in dataclasses.fields(cls)}


def _default(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return None


def _build(cls, data: dict, path: str, skip=()):
    fs = {k: v for k, v in _fields(cls).items() if k not in skip}
    kwargs = {}
    for key, value in data.items():
        if key not in fs:
            continue
        kwargs[key] = _coerce(value, _default(fs[key]), f"{path}.{key}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _vector(value, n, path):
    if (not isinstance(value, list) or len(value) != n
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)):
        raise ConfigError(f"{path}: expected a list of {n} numbers")
    return tuple(float(x) for x in value)


def _parse_scene(d: dict):
    allowed = set(_fields(SceneConfig)) | set(_SCENE_EXTRA)
    _check_keys(d, allowed, "scene")
    geo = {}
    for k, v in d.items():
        if k in _VECTOR_FIELDS:
            geo[k] = _vector(v, _VECTOR_FIELDS[k], f"scene.{k}")
        elif k == "bs_spacing" and v is not None:
            geo[k] = _coerce(v, 0.0, "scene.bs_spacing")
        elif k not in _SCENE_EXTRA:
            geo[k] = v
    scene = _build(SceneConfig, geo, "scene")
    extra = dict(_SCENE_EXTRA)
    for k in _SCENE_EXTRA:
        if k in d:
            extra[k] = d[k]
    for k in ("total_power_dbm", "noise_power_dbm"):
        extra[k] = _coerce(extra[k], 0.0, f"scene.{k}")
    sweep = extra["noise_sweep_dbm"]
    if not isinstance(sweep, list) or not sweep:
        raise ConfigError("scene.noise_sweep_dbm: expected a non-empty list of numbers")
    extra["noise_sweep_dbm"] = tuple(_coerce(x, 0.0, "scene.noise_sweep_dbm") for x in sweep)
    if not isinstance(extra["averaging"], (str, int, float)):
        raise ConfigError("scene.averaging: expected a string or a number")
    return scene, extra


def _parse_table(d: dict) -> TableSpec:
    _check_keys(d, _fields(TableSpec), "table")
    spec = _build(TableSpec, {k: v for k, v in d.items() if k != "phase_law"}, "table")
    if "phase_law" in d:
        law = d["phase_law"]
        if not (isinstance(law, str) or (isinstance(law, list) and
                                        all(isinstance(x, (int, float)) for x in law))):
            raise ConfigError("table.phase_law: expected \"uniform\" or a list of degrees")
        spec = dataclasses.replace(spec, phase_law=tuple(law) if isinstance(law, list) else law)
    if not 1 <= spec.bits <= 8:
        raise ConfigError("table.bits: must be in 1..8")
    if not 0 < spec.amplitude <= 1:
        raise ConfigError("table.amplitude: must be in (0, 1]")
    return spec


def _parse_scenario(d: dict) -> ScenarioSpec:
    _check_keys(d, _fields(ScenarioSpec), "scenario")
    static = d.get("static_users", [])
    if not isinstance(static, list):
        raise ConfigError("scenario.static_users: expected a list of [x, y] pairs")
    users = tuple(_vector(u, 2, f"scenario.static_users[{i}]") for i, u in enumerate(static))
    spec = _build(ScenarioSpec, {k: v for k, v in d.items() if k != "static_users"}, "scenario")
    spec = dataclasses.replace(spec, static_users=users)
    if spec.kind not in ("aperiodic", "periodic", "imported"):
        raise ConfigError("scenario.kind: must be aperiodic, periodic or imported")
    if spec.C < 1 or spec.L < 1:
        raise ConfigError("scenario: C and L must be >= 1")
    if len(users) > spec.L:
        raise ConfigError("scenario.static_users: more static users than L")
    if spec.kind == "periodic":
        if spec.period is None:
            raise ConfigError("scenario.period: required for periodic trajectories")
        if not 2 <= spec.period <= spec.C:
            raise ConfigError("scenario.period: must be in 2..C")
    if spec.kind == "imported" and not spec.path:
        raise ConfigError("scenario.path: required for imported trajectories")
    if spec.v_max < 0 or spec.dt <= 0:
        raise ConfigError("scenario: need v_max >= 0 and dt > 0")
    return spec


def _parse_outputs(d: dict) -> OutputSpec:
    _check_keys(d, _fields(OutputSpec), "outputs")
    fp = d.get("footprint", {})
    _check_keys(fp, _fields(FootprintSpec), "outputs.footprint")
    fkw = {}
    for k, v in fp.items():
        if k in ("steps", "beams", "variants"):
            if not isinstance(v, list) or not v:
                raise ConfigError(f"outputs.footprint.{k}: expected a non-empty list")
            fkw[k] = tuple(v)
        else:
            fkw[k] = _coerce(v, 0, f"outputs.footprint.{k}")
    foot = FootprintSpec(**fkw)
    if foot.nx < 2 or foot.ny < 2:
        raise ConfigError("outputs.footprint: nx and ny must be >= 2")
    if any(not isinstance(s, int) or s < 1 for s in foot.steps + foot.beams):
        raise ConfigError("outputs.footprint: steps and beams are 1-based integers")
    bad = [v for v in foot.variants if v not in _VARIANTS]
    if bad:
        raise ConfigError(f"outputs.footprint.variants: unknown variant(s) {bad}")
    out = _build(OutputSpec, {k: v for k, v in d.items() if k != "footprint"}, "outputs")
    return dataclasses.replace(out, footprint=foot)


def config_from_dict(data: dict, base_dir: Path = Path(".")) -> RunConfig:
    _check_keys(data, ("scene", "table", "ga", "scenario", "outputs"), "config")
    scene, extra = _parse_scene(data.get("scene", {}))
    table = _parse_table(data.get("table", {}))
    ga_d = data.get("ga", {})
    _check_keys(ga_d, _fields(GaParams), "ga")
    ga = _build(GaParams, ga_d, "ga")
    scenario = _parse_scenario(data.get("scenario", {}))
    outputs = _parse_outputs(data.get("outputs", {}))
    if scene.ris_rows * scene.ris_cols < 1 or scene.bs_rows * scene.bs_cols < scenario.L:
        raise ConfigError("scene: zero forcing needs at least L BS elements")
    return RunConfig(scene=scene, table=table, ga=ga, scenario=scenario, outputs=outputs,
                     total_power=dbm_to_watt(extra["total_power_dbm"]),
                     noise_power=dbm_to_watt(extra["noise_power_dbm"]),
                     noise_sweep_dbm=extra["noise_sweep_dbm"], averaging=extra["averaging"],
                     total_power_dbm=extra["total_power_dbm"],
                     noise_power_dbm=extra["noise_power_dbm"], base_dir=Path(base_dir))


def parse_config(path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: syntax error at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data, path.parent)
