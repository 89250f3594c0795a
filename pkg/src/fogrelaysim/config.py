"""Layered configuration: built-in defaults <- INI file <- CLI overrides.

The file format is flat typed key=value pairs grouped in sections; every
key is unique across sections so overrides can be addressed by name alone.
A fully commented example lives in configs/defaults.ini.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, fields

from .channel import ChannelParams
from .errors import ConfigurationError
from .world import EnergyModel

MODES = ("decentralized", "centralized")
DELTA_MODES = ("effective", "literal")
EPSILON_SCHEDULES = ("step", "episode")


@dataclass
class SimConfig:
    # environment
    space_size: float = 80.0
    p_i_min: float = 0.001
    p_i_max: float = 0.3
    p_r: float = 0.3
    delta: float = 0.25
    mobility_bound: float = 30.0
    noise_power: float = 2e-7
    path_loss_exponent: float = 3.0
    snr_threshold: float = 1.0
    # agent
    gamma: float = 0.9
    alpha: float = 0.1
    episodes: int = 100
    max_steps: int = 100_000
    epsilon_coefficient: float = 0.0015
    epsilon_schedule: str = "step"
    epsilon_floor: float = 0.05
    goal_threshold: float = 0.95
    reward_goal: float = 100.0
    # energy model
    battery_capacity: float = 5000.0
    cost_move_tx: float = 1.0
    cost_idle: float = 0.0
    cost_sync: float = 1.0
    # world construction
    sensor_count: int = 1
    relay_count: int = 3
    r_comm: float = 40.0
    delta_mode: str = "effective"
    stochastic_packets: bool = False
    packets_per_phase: int = 100
    relay_spawn_low: float = 0.3
    relay_spawn_high: float = 0.7
    reset_jitter: float = 2.0
    overlap_low: float = 0.05
    overlap_high: float = 0.4
    scenario: str = ""
    # coordination / reporting
    ema_weight: float = 0.3
    last_k: int = 40
    # run control
    seed: int = 0
    runs: int = 50
    mode: str = "decentralized"

    def channel_params(self) -> ChannelParams:
        return ChannelParams(noise_power=self.noise_power,
                             snr_threshold=self.snr_threshold,
                             path_loss_exponent=self.path_loss_exponent,
                             step_delta=self.delta)

    def energy_model(self) -> EnergyModel:
        return EnergyModel(cost_move_tx=self.cost_move_tx, cost_idle=self.cost_idle,
                           cost_sync=self.cost_sync, capacity=self.battery_capacity)

    def validate(self) -> None:
        problems = []

        def positive(name):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be > 0 (got {getattr(self, name)})")

        def non_negative(name):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0 (got {getattr(self, name)})")

        for name in ("space_size", "p_i_min", "p_i_max", "p_r", "delta",
                     "mobility_bound", "noise_power", "path_loss_exponent",
                     "snr_threshold", "battery_capacity", "r_comm", "alpha",
                     "reward_goal"):
            positive(name)
        for name in ("cost_move_tx", "cost_idle", "cost_sync", "reset_jitter"):
            non_negative(name)
        if self.p_i_min > self.p_i_max:
            problems.append("p_i_min must not exceed p_i_max")
        if not 0.0 <= self.gamma < 1.0:
            problems.append(f"gamma must be in [0, 1) (got {self.gamma})")
        if not 0.0 < self.alpha <= 1.0:
            problems.append(f"alpha must be in (0, 1] (got {self.alpha})")
        if self.episodes < 1:
            problems.append(f"episodes must be >= 1 (got {self.episodes})")
        if self.max_steps < 1:
            problems.append(f"max_steps must be >= 1 (got {self.max_steps})")
        if self.epsilon_coefficient < 0:
            problems.append("epsilon_coefficient must be >= 0")
        if not 0.0 <= self.epsilon_floor < 1.0:
            problems.append(f"epsilon_floor must be in [0, 1) (got {self.epsilon_floor})")
        if self.epsilon_schedule not in EPSILON_SCHEDULES:
            problems.append(f"epsilon_schedule must be one of {EPSILON_SCHEDULES}")
        if not 0.0 < self.goal_threshold <= 1.0:
            problems.append(f"goal_threshold must be in (0, 1] (got {self.goal_threshold})")
        if self.sensor_count < 1:
            problems.append("sensor_count must be >= 1")
        if self.relay_count < 1:
            problems.append("relay_count must be >= 1")
        if self.delta_mode not in DELTA_MODES:
            problems.append(f"delta_mode must be one of {DELTA_MODES}")
        if self.packets_per_phase < 1:
            problems.append("packets_per_phase must be >= 1")
        if not 0.0 <= self.relay_spawn_low <= self.relay_spawn_high <= 1.0:
            problems.append("relay spawn fractions must satisfy 0 <= low <= high <= 1")
        if not 0.0 < self.overlap_low <= self.overlap_high <= 1.0:
            problems.append("overlap fractions must satisfy 0 < low <= high <= 1")
        if not 0.0 < self.ema_weight <= 1.0:
            problems.append(f"ema_weight must be in (0, 1] (got {self.ema_weight})")
        if self.last_k < 1:
            problems.append(f"last_k must be >= 1 (got {self.last_k})")
        if self.runs < 1:
            problems.append("runs must be >= 1")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}")
        if problems:
            raise ConfigurationError("invalid configuration: " + "; ".join(problems))

    def resolved_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)!r}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.resolved_text().encode("utf-8")).hexdigest()


_FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}
_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw, problems: list[str]):
    ftype = _FIELD_TYPES[key]
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if ftype == "bool" or ftype is bool:
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if ftype == "int" or ftype is int:
            if isinstance(raw, float) and raw != int(raw):
                raise ValueError(f"not an integer: {raw!r}")
            return int(raw)
        if ftype == "float" or ftype is float:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        problems.append(f"{key}: {exc}")
        return None


def load_config(path: str | None = None, overrides: dict | None = None) -> SimConfig:
    """Resolve defaults <- optional INI file <- overrides, then validate."""
    cfg = SimConfig()
    problems: list[str] = []
    if path:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed config file {path}: {exc}") from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                if key not in _FIELD_TYPES:
                    problems.append(f"unknown key {key!r} in section [{section}]")
                    continue
                value = _coerce(key, raw, problems)
                if value is not None:
                    setattr(cfg, key, value)
    for key, raw in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            problems.append(f"unknown override key {key!r}")
            continue
        if raw is None:
            continue
        value = _coerce(key, raw, problems)
        if value is not None:
            setattr(cfg, key, value)
    if problems:
        raise ConfigurationError("invalid configuration: " + "; ".join(problems))
    cfg.validate()
    return cfg


def write_example_config(stream: io.TextIOBase | None = None) -> str:
    """Render the default configuration as a commented INI document."""
    cfg = SimConfig()
    doc = io.StringIO()
    doc.write("# fogrelaysim configuration; every key shown at its default.\n")
    sections = {
        "environment": ["space_size", "p_i_min", "p_i_max", "p_r", "delta",
                        "mobility_bound", "noise_power", "path_loss_exponent",
                        "snr_threshold"],
        "agent": ["gamma", "alpha", "episodes", "max_steps", "epsilon_coefficient",
                  "epsilon_schedule", "epsilon_floor", "goal_threshold", "reward_goal"],
        "energy": ["battery_capacity", "cost_move_tx", "cost_idle", "cost_sync"],
        "world": ["sensor_count", "relay_count", "r_comm", "delta_mode",
                  "stochastic_packets", "packets_per_phase", "relay_spawn_low",
                  "relay_spawn_high", "reset_jitter", "overlap_low",
                  "overlap_high", "scenario"],
        "run": ["ema_weight", "last_k", "seed", "runs", "mode"],
    }
    for section, keys in sections.items():
        doc.write(f"\n[{section}]\n")
        for key in keys:
            doc.write(f"{key} = {getattr(cfg, key)}\n")
    text = doc.getvalue()
    if stream is not None:
        stream.write(text)
    return text
