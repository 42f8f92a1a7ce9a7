"""Experiment configuration: YAML sections with a typed schema.

Errors carry the line of the offending key. Powers are given in dBm and
PSD in dBm/Hz at the file boundary and converted to watts here, once.

Sections and keys (all optional; defaults in SCHEMA):

    seed: 0
    scenario:  num_aps, num_users, coverage_radius_m, path_loss_exponent,
               fading_shape, fading_spread, pilot_length, pilot_kind,
               pilot_power_dbm, user_power_dbm, noise_psd_dbm_hz,
               bandwidth_hz, pilot_noise, ideal_csi, topology_seed
    analysis:  thresholds_db, user, user_sweep, mc_runs, batch_size,
               receiver, num_clusters, cluster, gain_method, pdf_points,
               tolerance
    solver:    objective, weight_solver, grid_points, num_clusters,
               sic_sensitivity_dbm, instances, gain_method, sic, action_cap
    drl:       num_clusters, objectives, penalty, instances, checkpoint, hyper
    output:    directory
"""

import dataclasses
import hashlib
from dataclasses import dataclass, field

import yaml

from .channel import FadingConfig, ScenarioConfig, TopologyConfig
from .clustering import DEFAULT_ACTION_CAP
from .drl.agents import Hyperparams
from .montecarlo import DESK_RUNS, PAPER_RUNS, SCENARIOS
from .optimize import OBJECTIVES
from .units import dbm_to_watt

PRESETS = ("desk", "paper")
_REQUIRED = object()


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _int(v, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    if lo is not None and v < lo:
        raise ValueError(f"must be >= {lo}")
    return v


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return float(v)


def _pos(v):
    v = _float(v)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


def _choice(options):
    def check(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return check


def _opt(fn):
    return lambda v: None if v is None else fn(v)


def _floats(v, nonempty=True):
    if not isinstance(v, list):
        raise TypeError("expected a list")
    if nonempty and not v:
        raise ValueError("must not be empty")
    return [_float(x) for x in v]


def _ints(v):
    if not isinstance(v, list):
        raise TypeError("expected a list")
    return [_int(x, 1) for x in v]


def _objectives(v):
    if not isinstance(v, list) or not v:
        raise ValueError("expected a non-empty list")
    return [_choice(OBJECTIVES)(x) for x in v]


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


SCHEMA = {
    "scenario": {
        "num_aps": (8, lambda v: _int(v, 1)),
        "num_users": (2, lambda v: _int(v, 1)),
        "coverage_radius_m": (564.0, _pos),
        "path_loss_exponent": (2.0, _float),
        "fading_shape": (1.0, _pos),
        "fading_spread": (1.0, _pos),
        "pilot_length": (None, _opt(lambda v: _int(v, 1))),
        "pilot_kind": ("orthonormal", _choice(("orthonormal", "random"))),
        "pilot_power_dbm": (20.0, _float),
        "user_power_dbm": (20.0, _float),
        "noise_psd_dbm_hz": (-169.0, _float),
        "bandwidth_hz": (1.0, _pos),
        "pilot_noise": (False, _bool),
        "ideal_csi": (True, _bool),
        "topology_seed": (0, lambda v: _int(v, 0)),
    },
    "analysis": {
        "thresholds_db": ([-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0], _floats),
        "user": (0, lambda v: _int(v, 0)),
        "user_sweep": ([], _ints),
        "mc_runs": (None, _opt(lambda v: _int(v, 1))),
        "batch_size": (10_000, lambda v: _int(v, 1)),
        "receiver": ("static", _choice(SCENARIOS)),
        "num_clusters": (None, _opt(lambda v: _int(v, 1))),
        "cluster": (None, _opt(_str)),
        "gain_method": ("unit", _choice(("unit", "mrc", "wiener_hopf"))),
        "pdf_points": (20, lambda v: _int(v, 2)),
        "tolerance": (1e-6, _pos),
    },
    "solver": {
        "objective": ("sum_rate", _choice(OBJECTIVES)),
        "weight_solver": ("gradient", _choice(("gradient", "exhaustive"))),
        "grid_points": (11, lambda v: _int(v, 2)),
        "num_clusters": (2, lambda v: _int(v, 1)),
        "sic_sensitivity_dbm": (1.0, _float),
        "instances": (10, lambda v: _int(v, 1)),
        "gain_method": ("wiener_hopf", _choice(("unit", "mrc", "wiener_hopf"))),
        "sic": (True, _bool),
        "action_cap": (DEFAULT_ACTION_CAP, lambda v: _int(v, 1)),
    },
    "drl": {
        "num_clusters": (2, lambda v: _int(v, 1)),
        "objectives": (["sum_rate"], _objectives),
        "penalty": (1.0, _float),
        "instances": (100, lambda v: _int(v, 1)),
        "checkpoint": (None, _opt(_str)),
        "hyper": ({}, None),
    },
    "output": {
        "directory": ("out", _str),
    },
}

_HYPER_FIELDS = {f.name: f for f in dataclasses.fields(Hyperparams)}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    preset: str
    scenario: ScenarioConfig
    topology_seed: int
    analysis: dict
    solver: dict
    drl: dict
    hyper: Hyperparams
    output_dir: str
    sha256: str
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def mc_runs(self):
        runs = self.analysis["mc_runs"]
        if runs is not None:
            return runs
        return PAPER_RUNS if self.preset == "paper" else DESK_RUNS

    @property
    def sic_sensitivity(self):
        return float(dbm_to_watt(self.solver["sic_sensitivity_dbm"]))


def _line_map(node, path=(), out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
    return out


def _coerce_hyper(raw, lines, base):
    if not isinstance(raw, dict):
        raise ConfigError("drl.hyper must be a mapping", lines.get(("drl", "hyper")))
    values = {}
    for key, v in raw.items():
        line = lines.get(("drl", "hyper", key))
        if key not in _HYPER_FIELDS:
            raise ConfigError(f"unknown key drl.hyper.{key}", line)
        current = getattr(base, key)
        if isinstance(current, tuple):
            if not isinstance(v, list):
                raise ConfigError(f"drl.hyper.{key}: expected a list", line)
            v = tuple(v)
        elif isinstance(current, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"drl.hyper.{key}: expected true or false", line)
        elif isinstance(current, int):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"drl.hyper.{key}: expected an integer", line)
        elif isinstance(current, float) or current is None:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"drl.hyper.{key}: expected a number", line)
            v = float(v)
        values[key] = v
    try:
        return dataclasses.replace(base, **values)
    except ValueError as exc:
        raise ConfigError(f"drl.hyper: {exc}", lines.get(("drl", "hyper"))) from exc


def parse_config(text, preset="desk", seed=None):
    """Parse YAML text into an ExperimentConfig; raises ConfigError."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from exc
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", 1)
    lines = _line_map(node) if node is not None else {}
    sections = {}
    for key in data:
        if key != "seed" and key not in SCHEMA:
            raise ConfigError(f"unknown section {key!r}", lines.get((key,)))
    for name, keys in SCHEMA.items():
        raw = data.get(name) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"section {name} must be a mapping", lines.get((name,)))
        for key in raw:
            if key not in keys:
                raise ConfigError(f"unknown key {name}.{key}", lines.get((name, key)))
        sec = {}
        for key, (default, check) in keys.items():
            v = raw.get(key, default)
            if check is not None and key in raw:
                try:
                    v = check(v)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{name}.{key}: {exc}", lines.get((name, key))) from exc
            sec[key] = v
        sections[name] = sec
    file_seed = data.get("seed", 0)
    try:
        file_seed = _int(file_seed, 0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed: {exc}", lines.get(("seed",))) from exc

    sc = sections["scenario"]
    try:
        topo = TopologyConfig(sc["num_aps"], sc["num_users"], sc["coverage_radius_m"], sc["path_loss_exponent"])
        scenario = ScenarioConfig(
            topo, FadingConfig(sc["fading_shape"], sc["fading_spread"]), sc["pilot_length"],
            float(dbm_to_watt(sc["pilot_power_dbm"])), sc["pilot_kind"], user_power=float(dbm_to_watt(sc["user_power_dbm"])),
            noise_psd_dbm_hz=sc["noise_psd_dbm_hz"], bandwidth_hz=sc["bandwidth_hz"], pilot_noise=sc["pilot_noise"],
            ideal_csi=sc["ideal_csi"])
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}", lines.get(("scenario",))) from exc
    an = sections["analysis"]
    if an["user"] >= sc["num_users"]:
        raise ConfigError("analysis.user must index an existing user", lines.get(("analysis", "user")))
    if an["receiver"] != "static" and an["num_clusters"] is None and an["cluster"] is None:
        raise ConfigError("dynamic receivers need analysis.num_clusters or analysis.cluster",
                          lines.get(("analysis", "receiver")))
    base = Hyperparams.full_scale() if preset == "paper" else Hyperparams.desk()
    hyper = _coerce_hyper(sections["drl"]["hyper"], lines, base)
    return ExperimentConfig(
        seed=file_seed if seed is None else seed,
        preset=preset,
        scenario=scenario,
        topology_seed=sc["topology_seed"],
        analysis=an,
        solver=sections["solver"],
        drl=sections["drl"],
        hyper=hyper,
        output_dir=sections["output"]["directory"],
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        raw=data,
    )


def load_config(path, preset="desk", seed=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, preset, seed)
