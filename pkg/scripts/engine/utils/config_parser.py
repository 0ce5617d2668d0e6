"""
Configuration Parser

Loads run configuration: configs/base_config.json overlaid with an optional
JSON or YAML file, validated against docs/schemas/run_config_schema.json.
"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema
import yaml

REPO_ROOT = Path(__file__).resolve().parents[3]
BASE_CONFIG_PATH = REPO_ROOT / "configs" / "base_config.json"
SCHEMA_DIR = REPO_ROOT / "docs" / "schemas"


def load_schema(name: str) -> Dict[str, Any]:
    """Load a JSON schema from docs/schemas by file name."""
    path = SCHEMA_DIR / name
    if not path.exists():
        raise FileNotFoundError(f"Schema not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def deep_merge(base: Dict[str, Any], overlay: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively overlay one mapping on another; overlay wins on leaves."""
    merged = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class ConfigParser:
    """
    Parses run configuration files.

    Handles:
    - JSON and YAML overlays on the base configuration
    - Schema validation of the merged document
    - Caching per overlay path
    """

    def __init__(self, base_path: Optional[str] = None):
        self.logger = logging.getLogger(__name__)
        self.base_path = Path(base_path) if base_path else BASE_CONFIG_PATH
        self.config_cache: Dict[str, Dict[str, Any]] = {}
        self._schema = load_schema("run_config_schema.json")

    def parse_config(self, config_path: Optional[str] = None) -> Dict[str, Any]:
        """
        Parse configuration, overlaying `config_path` on the base config.

        Args:
            config_path: Optional overlay file (.json, .yaml or .yml)

        Returns:
            Merged and validated configuration dictionary
        """
        cache_key = str(config_path or "")
        if cache_key in self.config_cache:
            self.logger.debug(f"Using cached config: {cache_key or self.base_path}")
            return copy.deepcopy(self.config_cache[cache_key])

        config = self._read(self.base_path)
        if config_path:
            config = deep_merge(config, self._read(Path(config_path)))

        errors = self.validate_config(config)
        if errors:
            raise ValueError(f"Invalid configuration: {'; '.join(errors)}")

        self.config_cache[cache_key] = config
        self.logger.debug(f"Configuration parsed: {config_path or self.base_path}")
        return copy.deepcopy(config)

    def _read(self, path: Path) -> Dict[str, Any]:
        if not os.path.exists(path):
            raise FileNotFoundError(f"Configuration file not found: {path}")
        with open(path, 'r', encoding='utf-8') as f:
            if path.suffix == '.json':
                data = json.load(f)
            elif path.suffix in ('.yaml', '.yml'):
                data = yaml.safe_load(f) or {}
            else:
                raise ValueError(f"Unsupported config file format: {path}")
        if not isinstance(data, dict):
            raise ValueError(f"Configuration root must be a mapping: {path}")
        return data

    def validate_config(self, config: Dict[str, Any]) -> List[str]:
        """
        Validate configuration against the run config schema.

        Returns:
            List of validation errors (empty if valid)
        """
        validator = jsonschema.Draft7Validator(self._schema)
        errors = []
        for error in sorted(validator.iter_errors(config), key=lambda e: list(e.path)):
            location = "/".join(str(p) for p in error.path) or "<root>"
            errors.append(f"{location}: {error.message}")
        return errors

    def get_config_summary(self, config: Dict[str, Any]) -> Dict[str, Any]:
        """Get configuration summary for logging."""
        return {
            'sections': sorted(config.keys()),
            'fuzz_count': config.get('fuzz', {}).get('count'),
            'pde_grid': (config.get('pde', {}).get('n_space'), config.get('pde', {}).get('n_time')),
            'mc_paths': config.get('monte_carlo', {}).get('n_paths'),
        }

    def clear_cache(self) -> None:
        self.config_cache.clear()
        self.logger.debug("Configuration cache cleared")
