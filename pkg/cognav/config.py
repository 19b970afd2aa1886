# config.py
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml

from .errors import ConfigError
from .llm_backend import BACKEND_MODES, CompletionParams
from .memory_stream import MemoryStreamConfig
from .prompts import ROLES

logger = logging.getLogger(__name__)

FORGET_CADENCES = ("episode", "step")
COMPLETION_MODES = ("oracle", "llm")
DESCRIBER_MODES = ("oracle", "generative")


def _default_backends() -> Dict[str, str]:
    return {role: "scripted" for role in ROLES}


@dataclass
class RunConfig:
    K: int = 7
    delta: float = 3.0
    forget_fraction: float = 0.10
    retrieval_k: int = 3
    step_budget: int = 40
    observation_depth: int = 2
    visibility_radius: float = 2.0
    object_cap: int = 10
    prompt_char_cap: int = 6000
    temperature: float = 0.0
    max_tokens: int = 256
    planner_retries: int = 2
    planner_noise: float = 0.0
    forget_cadence: str = "episode"
    completion_mode: str = "oracle"
    describer_mode: str = "oracle"
    euclidean_ne: bool = False
    backends: Dict[str, str] = field(default_factory=_default_backends)
    oracle_hints: Optional[bool] = None  # None: on for scripted roles only
    no_reflection: bool = False
    no_rationalization: bool = False
    no_cognitive_map: bool = False
    fresh_memory_per_episode: bool = False
    seed: int = 0
    episodes_path: Optional[str] = None

    def validate(self) -> "RunConfig":
        checks = [
            (self.K >= 1, "K must be >= 1"),
            (self.delta > 0, "delta must be > 0"),
            (0 <= self.forget_fraction < 1, "forget_fraction must be in [0, 1)"),
            (self.retrieval_k >= 0, "retrieval_k must be >= 0"),
            (self.step_budget >= 1, "step_budget must be >= 1"),
            (self.observation_depth >= 0, "observation_depth must be >= 0"),
            (self.visibility_radius > 0, "visibility_radius must be > 0"),
            (self.object_cap >= 0, "object_cap must be >= 0"),
            (self.prompt_char_cap > 0, "prompt_char_cap must be > 0"),
            (self.temperature >= 0, "temperature must be >= 0"),
            (self.max_tokens >= 1, "max_tokens must be >= 1"),
            (self.planner_retries >= 0, "planner_retries must be >= 0"),
            (0 <= self.planner_noise <= 1, "planner_noise must be in [0, 1]"),
            (self.forget_cadence in FORGET_CADENCES, f"forget_cadence must be one of {FORGET_CADENCES}"),
            (self.completion_mode in COMPLETION_MODES, f"completion_mode must be one of {COMPLETION_MODES}"),
            (self.describer_mode in DESCRIBER_MODES, f"describer_mode must be one of {DESCRIBER_MODES}"),
            (self.seed >= 0, "seed must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        unknown_roles = set(self.backends) - set(ROLES)
        if unknown_roles:
            raise ConfigError(f"Unknown backend roles: {sorted(unknown_roles)}")
        for role, mode in self.backends.items():
            if mode not in BACKEND_MODES:
                raise ConfigError(f"Backend mode for {role} must be one of {BACKEND_MODES}, got {mode!r}")
        self.backends = {role: self.backends.get(role, "scripted") for role in ROLES}
        return self

    def hints_for(self, role: str) -> bool:
        if self.oracle_hints is not None:
            return self.oracle_hints
        return self.backends.get(role, "scripted") == "scripted"

    @property
    def memory(self) -> MemoryStreamConfig:
        return MemoryStreamConfig(self.delta, self.forget_fraction, self.retrieval_k)

    @property
    def params(self) -> CompletionParams:
        return CompletionParams(self.temperature, self.max_tokens)


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Read a YAML run config, apply non-None overrides and validate.
    Without a path the defaults are used.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                loaded = yaml.safe_load(f)
        except OSError as e:
            raise ConfigError(f"Could not read config {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in {path}: {e}") from e
        if loaded is None:
            logger.warning(f"⚠️ Config {path} is empty, using defaults")
        elif not isinstance(loaded, dict):
            raise ConfigError(f"Config {path} must be a mapping")
        else:
            data.update(loaded)
            logger.info(f"📂 Loaded run config from {path}")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown config keys: {unknown}")
    if "backends" in data:
        if isinstance(data["backends"], str):
            data["backends"] = {role: data["backends"] for role in ROLES}
        elif not isinstance(data["backends"], dict):
            raise ConfigError("backends must be a mode name or a role -> mode mapping")
        data["backends"] = {**_default_backends(), **data["backends"]}
    try:
        return RunConfig(**data).validate()
    except TypeError as e:
        raise ConfigError(f"Invalid config value: {e}") from e


def dump_run_config(config: RunConfig, path: Union[str, Path]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(asdict(config), f, sort_keys=True)
