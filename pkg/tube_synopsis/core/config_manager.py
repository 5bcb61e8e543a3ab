"""
Configuration Manager for the tube synopsis engine
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from pydantic import ValidationError as PydanticValidationError

from ..exceptions import ValidationError
from .blend_render import SolverConfig
from .tracker import TrackerConfig
from .tube_model import Params

logger = logging.getLogger(__name__)

PROJECT_CONFIG_FILE = "tube_synopsis_config.yaml"

# environment variable -> (section, key, type)
ENV_MAPPINGS = {
    "TUBE_SYNOPSIS_ALPHA": ("synopsis", "alpha", float),
    "TUBE_SYNOPSIS_BETA": ("synopsis", "beta", float),
    "TUBE_SYNOPSIS_BUDGET": ("synopsis", "collision_budget", float),
    "TUBE_SYNOPSIS_MODE": ("synopsis", "grouping_mode", str),
    "TUBE_SYNOPSIS_WORKERS": ("sweep", "workers", int),
    "TUBE_SYNOPSIS_LOG_LEVEL": ("logging", "level", str),
}


class ConfigManager:
    """Defaults, then a YAML/JSON file, then environment variables"""

    def __init__(self, config_path: Optional[Union[str, Path]] = None):
        self.config_path = str(config_path) if config_path else None
        self.config_data: Dict[str, Any] = {}
        self._load_config()

    def _load_config(self):
        self.config_data = self._get_default_config()
        if self.config_path:
            if not os.path.exists(self.config_path):
                raise ValidationError(f"configuration file {self.config_path} does not exist")
            self._load_from_file(self.config_path)
        self._load_from_environment()

    def _get_default_config(self) -> Dict[str, Any]:
        return {
            "synopsis": Params().model_dump(),
            "tracker": TrackerConfig().model_dump(),
            "solver": SolverConfig().model_dump(),
            "render": {"mode": "boxes", "label": True},
            "sweep": {"workers": 1},
            "plugins": {"enabled": ["continuity", "chronology", "compression"], "continuity": {"tolerance": 1}},
            "logging": {"level": "INFO", "file": None},
        }

    def _load_from_file(self, config_path: str):
        """Load configuration from file (JSON or YAML)"""
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                if config_path.endswith((".yaml", ".yml")):
                    file_config = yaml.safe_load(f) or {}
                else:
                    file_config = json.load(f)
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            raise ValidationError(f"failed to parse config {config_path}: {e}") from e
        if not isinstance(file_config, dict):
            raise ValidationError(f"config {config_path} must contain a mapping at the top level")
        unknown = sorted(set(file_config) - set(self.config_data))
        if unknown:
            raise ValidationError(f"config {config_path} has unknown sections {unknown}")

        self._deep_merge(self.config_data, file_config)
        logger.info(f"Configuration loaded from {config_path}")

    def _load_from_environment(self):
        for env_var, (section, key, kind) in ENV_MAPPINGS.items():
            value = os.getenv(env_var)
            if not value:
                continue
            try:
                self.config_data[section][key] = kind(value)
            except ValueError as e:
                raise ValidationError(f"{env_var}={value!r} is not a valid {kind.__name__}") from e

    def _deep_merge(self, base: Dict[str, Any], update: Dict[str, Any]):
        """Merge ``update`` into ``base`` section by section; nested mappings merge, anything else replaces"""
        for key, value in update.items():
            current = base.get(key)
            if isinstance(current, dict) and isinstance(value, dict):
                self._deep_merge(current, value)
                continue
            base[key] = value

    def _section_model(self, section: str, model):
        try:
            return model.model_validate(self.config_data.get(section, {}))
        except PydanticValidationError as e:
            raise ValidationError(f"invalid [{section}] configuration: {e}") from e

    def get_params(self) -> Params:
        return self._section_model("synopsis", Params)

    def get_tracker_config(self) -> TrackerConfig:
        return self._section_model("tracker", TrackerConfig)

    def get_solver_config(self) -> SolverConfig:
        return self._section_model("solver", SolverConfig)

    def get_render_config(self) -> Dict[str, Any]:
        return self.config_data.get("render", {})

    def get_plugin_config(self) -> Dict[str, Any]:
        return self.config_data.get("plugins", {})

    def get_config(self, section: str, key: Optional[str] = None) -> Any:
        """A whole section, or one value of it"""
        values = self.config_data.get(section, {})
        return values.get(key) if key else values

    def set_config(self, path: str, value: Any):
        """Set ``section.key`` (deeper keys allowed); the section must be a known one"""
        section, *keys = path.split(".")
        if section not in self.config_data:
            raise ValidationError(f"unknown configuration section {section!r} in {path!r}; expected one of {sorted(self.config_data)}")
        if not keys or not all(keys):
            raise ValidationError(f"{path!r} must name a setting inside [{section}]")
        target = self.config_data[section]
        for key in keys[:-1]:
            target = target.setdefault(key, {})
        target[keys[-1]] = value

    def save_config(self, output_path: Union[str, Path]):
        output_path = str(output_path)
        with open(output_path, "w", encoding="utf-8") as f:
            if output_path.endswith((".yaml", ".yml")):
                yaml.safe_dump(self.config_data, f, default_flow_style=False, indent=2)
            else:
                json.dump(self.config_data, f, indent=2)
        logger.info(f"Configuration saved to {output_path}")

    def create_project_config(self, template: str = "default", directory: Union[str, Path] = ".") -> Path:
        """Write tube_synopsis_config.yaml from a template"""
        config_templates = {
            "default": self._get_default_config,
            "minimal": self._get_minimal_config,
        }
        if template not in config_templates:
            raise ValidationError(f"unknown config template {template!r}; expected one of {sorted(config_templates)}")

        config_path = Path(directory) / PROJECT_CONFIG_FILE
        config_path.parent.mkdir(parents=True, exist_ok=True)
        with open(config_path, "w", encoding="utf-8") as f:
            yaml.safe_dump(config_templates[template](), f, default_flow_style=False, indent=2, sort_keys=True)
        logger.info(f"Project configuration created: {config_path}")
        return config_path

    def _get_minimal_config(self) -> Dict[str, Any]:
        return {
            "synopsis": {"alpha": 0.0, "beta": 0.0, "collision_budget": 0.0},
            "logging": {"level": "INFO"},
        }


def parse_override(assignment: str):
    """Split ``section.key=value``; the value is parsed as YAML so numbers and booleans keep their type"""
    if "=" not in assignment:
        raise ValidationError(f"override {assignment!r} must look like section.key=value")
    path, raw = assignment.split("=", 1)
    if not path.strip():
        raise ValidationError(f"override {assignment!r} has an empty key")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    return path.strip(), value
