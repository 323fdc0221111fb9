"""Run configuration: INI-style ``key = value`` files with one section per module.

Every field has a default; unknown sections or keys are rejected by name.
``to_text`` writes every key, so parse -> serialize materializes defaults.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional

from .arbiter import ArbiterConfig
from .control import LandingConfig, TravelGains
from .env import EnvConfig
from .fuzzy import FuzzyConfig
from .planner import CheckerConfig, ExplorationSchedule
from .td3 import TD3Config
from .world import KinematicLimits, SensorConfig

ABLATIONS = ("none", "no_stability", "no_checker", "baseline_td3")
PRESETS = ("traj1", "traj2")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PERConfig:
    capacity: int = 50_000
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    priority_floor: float = 1e-3


@dataclass(frozen=True)
class RunSection:
    world: str = "traj1"  # bundled world name or path to a world JSON file
    preset: str = ""  # reward table; empty means "same as the bundled world name", else traj1
    seed: int = 7
    episode_cap: int = 2000
    success_target: int = 100
    ablation: str = "none"
    out_dir: str = "runs"
    checkpoint_every: int = 25


SECTIONS: Dict[str, type] = {
    "run": RunSection,
    "sensor": SensorConfig,
    "limits": KinematicLimits,
    "fuzzy": FuzzyConfig,
    "travel": TravelGains,
    "landing": LandingConfig,
    "arbiter": ArbiterConfig,
    "checker": CheckerConfig,
    "exploration": ExplorationSchedule,
    "td3": TD3Config,
    "per": PERConfig,
    "env": EnvConfig,
}

# fields that are runtime state rather than configuration
_SKIP = {("exploration", "episode_index")}


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    fuzzy: FuzzyConfig = field(default_factory=FuzzyConfig)
    travel: TravelGains = field(default_factory=TravelGains)
    landing: LandingConfig = field(default_factory=LandingConfig)
    arbiter: ArbiterConfig = field(default_factory=ArbiterConfig)
    checker: CheckerConfig = field(default_factory=CheckerConfig)
    exploration: ExplorationSchedule = field(default_factory=ExplorationSchedule)
    td3: TD3Config = field(default_factory=TD3Config)
    per: PERConfig = field(default_factory=PERConfig)
    env: EnvConfig = field(default_factory=EnvConfig)

    @property
    def preset(self) -> str:
        if self.run.preset:
            return self.run.preset
        return self.run.world if self.run.world in PRESETS else "traj1"

    def out_dir(self) -> Path:
        return Path(os.environ.get("SWIFTNAV_OUT") or self.run.out_dir)


def _fields(section: str, cls: type):
    return [f for f in fields(cls) if (section, f.name) not in _SKIP]


def _convert(section: str, key: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (S_thresh vs s_thresh)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    sections = {}
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{name}]")
        cls = SECTIONS[name]
        defaults = cls()
        known = {f.name for f in _fields(name, cls)}
        kwargs = {}
        for key, raw in cp.items(name):
            if key not in known:
                raise ConfigError(f"{source}: unknown key '{key}' in [{name}]")
            kwargs[key] = _convert(name, key, raw, getattr(defaults, key))
        try:
            sections[name] = replace(defaults, **kwargs)
        except ValueError as exc:
            raise ConfigError(f"{source}: [{name}] {exc}") from None
    cfg = RunConfig(**sections)
    if cfg.run.ablation not in ABLATIONS:
        raise ConfigError(f"{source}: [run] ablation: unknown value {cfg.run.ablation!r}; expected one of {ABLATIONS}")
    if cfg.preset not in PRESETS:
        raise ConfigError(f"{source}: [run] preset: unknown value {cfg.preset!r}; expected one of {PRESETS}")
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(), str(path))


def to_text(cfg: RunConfig) -> str:
    lines = []
    for name, cls in SECTIONS.items():
        sec = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in _fields(name, cls):
            lines.append(f"{f.name} = {_format(getattr(sec, f.name))}")
        lines.append("")
    return "\n".join(lines)


def with_ablation(cfg: RunConfig, ablation: Optional[str]) -> RunConfig:
    """Apply an ablation switch on top of a parsed config."""
    ablation = ablation or cfg.run.ablation
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {ablation!r}; expected one of {ABLATIONS}")
    cfg = replace(cfg, run=replace(cfg.run, ablation=ablation))
    if ablation == "no_stability":
        return replace(cfg, arbiter=replace(cfg.arbiter, stability_enabled=False))
    if ablation == "no_checker":
        return replace(cfg, checker=replace(cfg.checker, enabled=False))
    if ablation == "baseline_td3":
        return replace(
            cfg,
            arbiter=replace(cfg.arbiter, stability_enabled=False, force_rl=True),
            checker=replace(cfg.checker, enabled=False),
        )
    return cfg

