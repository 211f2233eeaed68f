"""Configuration management for tierbench."""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import jsonschema
import yaml

from .measurements import EFFICIENCY_BASES
from .report import REPORT_FORMATS

CATALOG_ENV_VAR = "QUTIBENCH_CATALOG"
# Checked after CATALOG_ENV_VAR.
CATALOG_ENV_ALIAS = "TIERBENCH_CATALOG"

CONFIG_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "properties": {
        "output_dir": {"type": "string"},
        "catalog_path": {"type": ["string", "null"]},
        "models_dir": {"type": ["string", "null"]},
        "topology": {
            "type": "object",
            "properties": {"default_seq_len": {"type": "integer", "minimum": 1}},
        },
        "consistency": {
            "type": "object",
            "properties": {
                "threshold": {"type": "number", "exclusiveMinimum": 0},
                "threads_multiply": {"type": "boolean"},
            },
        },
        "efficiency": {
            "type": "object",
            "properties": {
                "basis": {"enum": list(EFFICIENCY_BASES)},
                "reported_tolerance": {"type": "number", "minimum": 0},
            },
        },
        "catalog": {
            "type": "object",
            "properties": {"ratio_tolerance": {"type": "number", "minimum": 0}},
        },
        "ingest": {
            "type": "object",
            "properties": {"max_workers": {"type": "integer", "minimum": 1}},
        },
        "report": {
            "type": "object",
            "properties": {"format": {"enum": list(REPORT_FORMATS)}},
        },
    },
}


class ConfigError(Exception):
    """Base exception for configuration errors."""
    pass


class ConfigurationManager:
    """Manage configuration settings for tierbench."""

    DEFAULT_CONFIG: Dict[str, Any] = {
        "output_dir": "./out",
        "catalog_path": None,
        "models_dir": None,
        "topology": {
            "default_seq_len": 3000,
        },
        "consistency": {
            "threshold": 0.02,
            "threads_multiply": False,
        },
        "efficiency": {
            "basis": "key",
            "reported_tolerance": 0.01,
        },
        "catalog": {
            "ratio_tolerance": 0.05,
        },
        "ingest": {
            "max_workers": 4,
        },
        "report": {
            "format": "text",
        },
    }

    def __init__(self, config_path: Optional[Union[str, Path]] = None) -> None:
        self.logger = logging.getLogger(__name__)
        self.config: Dict[str, Any] = copy.deepcopy(self.DEFAULT_CONFIG)
        self.source: Optional[Path] = None

        if config_path:
            self.load_config(config_path)

    def load_config(self, config_path: Union[str, Path]) -> None:
        """Load configuration from a YAML, JSON or key=value file."""
        config_path = Path(config_path)

        if not config_path.exists():
            raise ConfigError(f"Configuration file not found: {config_path}")

        try:
            with open(config_path, "r", encoding="utf-8") as f:
                suffix = config_path.suffix.lower()
                if suffix in [".yaml", ".yml"]:
                    user_config = yaml.safe_load(f)
                elif suffix == ".json":
                    user_config = json.load(f)
                else:
                    user_config = parse_key_values(f.read())

            if user_config is None:
                user_config = {}
            if not isinstance(user_config, dict):
                raise ConfigError("Configuration must be a dictionary/object")

            self._merge_config(user_config)
            self.source = config_path
            self.logger.info(f"Loaded configuration from {config_path}")

        except ConfigError:
            raise
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            raise ConfigError(f"Invalid configuration file format: {e}") from e
        except Exception as e:
            raise ConfigError(f"Failed to load configuration: {e}") from e

    def _merge_config(self, user_config: Dict[str, Any]) -> None:
        """Merge user configuration with defaults."""
        def merge_dicts(default: Dict[str, Any], user: Dict[str, Any]) -> Dict[str, Any]:
            result = default.copy()
            for key, value in user.items():
                if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                    result[key] = merge_dicts(result[key], value)
                else:
                    result[key] = value
            return result

        self.config = merge_dicts(self.config, user_config)

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by key (supports dot notation)."""
        keys = key.split(".")
        value = self.config

        try:
            for k in keys:
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key: str, value: Any) -> None:
        """Set configuration value by key (supports dot notation)."""
        keys = key.split(".")
        config = self.config

        for k in keys[:-1]:
            if k not in config or not isinstance(config[k], dict):
                config[k] = {}
            config = config[k]

        config[keys[-1]] = value

    def get_output_dir(self) -> str:
        """Get output directory setting."""
        return self.get("output_dir", "./out")

    def get_catalog_path(self) -> Optional[str]:
        """Catalog path from config, else the environment, else None for the bundled catalog."""
        configured = self.get("catalog_path")
        if configured:
            return configured
        return os.environ.get(CATALOG_ENV_VAR) or os.environ.get(CATALOG_ENV_ALIAS) or None

    def get_models_dir(self) -> Optional[str]:
        return self.get("models_dir")

    def get_default_seq_len(self) -> int:
        return self.get("topology.default_seq_len", 3000)

    def get_consistency_threshold(self) -> float:
        return self.get("consistency.threshold", 0.02)

    def should_multiply_threads(self) -> bool:
        return self.get("consistency.threads_multiply", False)

    def get_efficiency_basis(self) -> str:
        return self.get("efficiency.basis", "key")

    def get_reported_tolerance(self) -> float:
        return self.get("efficiency.reported_tolerance", 0.01)

    def get_ratio_tolerance(self) -> float:
        return self.get("catalog.ratio_tolerance", 0.05)

    def get_max_workers(self) -> int:
        return self.get("ingest.max_workers", 4)

    def get_report_format(self) -> str:
        return self.get("report.format", "text")

    def save_config(self, config_path: Union[str, Path]) -> None:
        """Save current configuration to file."""
        config_path = Path(config_path)

        try:
            with open(config_path, "w", encoding="utf-8") as f:
                suffix = config_path.suffix.lower()
                if suffix in [".yaml", ".yml"]:
                    yaml.dump(self.config, f, default_flow_style=False, indent=2)
                elif suffix == ".json":
                    json.dump(self.config, f, indent=2)
                else:
                    raise ConfigError(f"Unsupported configuration file format: {config_path.suffix}")

            self.logger.info(f"Configuration saved to {config_path}")

        except ConfigError:
            raise
        except Exception as e:
            raise ConfigError(f"Failed to save configuration: {e}") from e

    def validate_config(self) -> None:
        """Validate current configuration."""
        validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
        errors = []
        for error in sorted(validator.iter_errors(self.config), key=lambda e: list(e.path)):
            location = ".".join(str(part) for part in error.path) or "config"
            errors.append(f"{location}: {error.message}")

        output_dir = self.get("output_dir")
        if isinstance(output_dir, str) and not output_dir.strip():
            errors.append("output_dir must not be empty")

        if errors:
            raise ConfigError("Configuration validation failed: " + "; ".join(errors))

    def get_sample_config(self) -> str:
        """Get a sample configuration file content."""
        sample_config = """# tierbench configuration file
# YAML, JSON, or key=value text (dotted keys) are accepted

# Where artifacts are written
output_dir: "./out"

# Platform catalog; when unset, QUTIBENCH_CATALOG (or TIERBENCH_CATALOG)
# names it, else the bundled catalog is used
catalog_path: null

# Extra directory searched for <model>.topo files
models_dir: null

topology:
  default_seq_len: 3000

consistency:
  threshold: 0.02
  threads_multiply: false

efficiency:
  basis: key            # or platform_max
  reported_tolerance: 0.01

catalog:
  ratio_tolerance: 0.05

ingest:
  max_workers: 4

report:
  format: text
"""
        return sample_config.strip()


def parse_key_values(text: str) -> Dict[str, Any]:
    """Parse ``key = value`` lines with dotted keys into a nested dict."""
    result: Dict[str, Any] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {line_no}: expected key=value, got '{line}'")

        target = result
        parts = key.split(".")
        for part in parts[:-1]:
            node = target.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {line_no}: '{part}' is both a value and a section")
            target = node
        target[parts[-1]] = _coerce(value.strip())
    return result


def _coerce(value: str) -> Any:
    lowered = value.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if lowered in ("", "none", "null"):
        return None
    for caster in (int, float):
        try:
            return caster(value)
        except ValueError:
            continue
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value
