"""
Configuration loading

Defaults live in config/default_config.json. A user file and CLI overrides
are merged on top, section by section, and the result is exposed as one
dataclass per section.
"""

import copy
import json
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional

from ..errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = Path(__file__).parent.parent.parent / 'config' / 'default_config.json'


@dataclass
class ProtocolConfig:
    max_frame_bytes: int = 64 * 1024 * 1024


@dataclass
class ControllerConfig:
    listen: str = '127.0.0.1:7700'
    min_workers: int = 1
    templates: bool = True
    max_patch_copies: int = 256
    max_variants_per_block: int = 4
    loop_closure: bool = True
    auto_rebalance: bool = False
    rebalance_factor: float = 1.5
    rebalance_windows: int = 2
    restore_on_fault: bool = True
    checkpoint_dir: str = 'output/checkpoints'
    status_port: int = 0


@dataclass
class WorkerConfig:
    controller: str = '127.0.0.1:7700'
    listen: str = '127.0.0.1:0'
    cores: int = 0
    recv_timeout_s: float = 30.0
    heartbeat_s: float = 1.0
    debug_guards: bool = False

    @property
    def compute_slots(self) -> int:
        return self.cores if self.cores > 0 else (os.cpu_count() or 1)


@dataclass
class DriverConfig:
    controller: str = '127.0.0.1:7700'
    templates: bool = True
    pipeline_depth: int = 4
    checkpoint_every: int = 0
    estimate_every: int = 5
    learning_rate: float = 1.0
    data_dir: str = 'output/data'
    reply_timeout_s: float = 120.0


@dataclass
class HarnessConfig:
    python: str = ''
    startup_timeout_s: float = 30.0
    poll_interval_s: float = 0.05
    output_dir: str = 'output/runs'
    float_digits: int = 6


@dataclass
class LoggingConfig:
    level: str = 'INFO'


@dataclass
class Settings:
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    worker: WorkerConfig = field(default_factory=WorkerConfig)
    driver: DriverConfig = field(default_factory=DriverConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)


def _load_json(path: Path) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    return data


def _merge(base: Dict[str, Any], update: Dict[str, Any], source: str) -> None:
    for section, values in update.items():
        if section == 'comment':
            continue
        if section not in base or not isinstance(values, dict):
            logger.warning("%s: ignoring unknown config section %r", source, section)
            continue
        for key, value in values.items():
            if key == 'comment' or value is None:
                continue
            if key not in base[section]:
                logger.warning("%s: ignoring unknown key %s.%s", source, section, key)
                continue
            base[section][key] = value


def _build(cls, values: Dict[str, Any]):
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for f in fields(cls):
        if f.name not in values:
            continue
        value = values[f.name]
        default = getattr(cls(), f.name)
        try:
            if isinstance(default, bool):
                value = value if isinstance(value, bool) else str(value).lower() in ('1', 'true', 'on', 'yes')
            elif isinstance(default, (int, float)) and not isinstance(default, bool):
                value = type(default)(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {cls.__name__}.{f.name}: {value!r}") from e
        kwargs[f.name] = value
    return cls(**{k: v for k, v in kwargs.items() if k in known})


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> Settings:
    """
    Load settings

    Args:
        path: optional user config file (JSON), merged over the defaults
        overrides: {section: {key: value}} applied last (CLI flags)

    Returns:
        Settings with one typed object per section
    """
    defaults = Settings()
    merged: Dict[str, Dict[str, Any]] = {
        f.name: {g.name: getattr(getattr(defaults, f.name), g.name) for g in fields(getattr(defaults, f.name))}
        for f in fields(Settings)
    }
    if DEFAULT_CONFIG.exists():
        _merge(merged, _load_json(DEFAULT_CONFIG), str(DEFAULT_CONFIG))
    if path:
        _merge(merged, _load_json(Path(path)), str(path))
    if overrides:
        _merge(merged, copy.deepcopy({k: v for k, v in overrides.items() if v}), 'overrides')

    return Settings(
        protocol=_build(ProtocolConfig, merged['protocol']),
        controller=_build(ControllerConfig, merged['controller']),
        worker=_build(WorkerConfig, merged['worker']),
        driver=_build(DriverConfig, merged['driver']),
        harness=_build(HarnessConfig, merged['harness']),
        logging=_build(LoggingConfig, merged['logging']),
    )
