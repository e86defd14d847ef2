"""Reading, validating and writing design configurations.

JSON is the canonical grammar; YAML files (``.yaml``/``.yml``) are accepted
with the same schema so configurations can carry comments.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from loguru import logger
from pydantic import ValidationError

from .exceptions import ConfigParseError, ConfigValidationError
from .models import DesignConfig

YAML_SUFFIXES = (".yaml", ".yml")


def _parse_document(text: str, path: Path) -> Any:
    """Parse JSON or YAML text, translating parser errors into ConfigParseError."""
    if path.suffix.lower() in YAML_SUFFIXES:
        try:
            return yaml.safe_load(text)
        except yaml.MarkedYAMLError as e:
            mark = e.problem_mark
            line = mark.line + 1 if mark is not None else None
            column = mark.column + 1 if mark is not None else None
            raise ConfigParseError(f"{path}: {e.problem}", line, column) from e
        except yaml.YAMLError as e:
            raise ConfigParseError(f"{path}: {e}") from e

    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(f"{path}: {e.msg}", e.lineno, e.colno) from e


def _validation_error(error: ValidationError) -> ConfigValidationError:
    """First pydantic error as 'dotted.field.path: constraint'."""
    first = error.errors()[0]
    field = ".".join(str(part) for part in first.get("loc", ()))
    message = str(first.get("msg", "invalid value"))
    if message.startswith("Value error, "):
        message = message[len("Value error, "):]
    return ConfigValidationError(field, message)


def validate_config(data: Any) -> DesignConfig:
    """Validate an already-parsed document.

    Raises:
        ConfigValidationError: If a field violates its constraint
    """
    if not isinstance(data, dict):
        raise ConfigValidationError("", "configuration must be a mapping at the top level")
    try:
        return DesignConfig.model_validate(data)
    except ValidationError as e:
        raise _validation_error(e) from e


def load_config(path: Union[str, Path]) -> DesignConfig:
    """Load and validate a design configuration file.

    Args:
        path: JSON or YAML file

    Returns:
        Fully validated DesignConfig with defaults filled in

    Raises:
        OSError: If the file cannot be read
        ConfigParseError: If the file is not well-formed
        ConfigValidationError: If a field violates its constraint
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    config = validate_config(_parse_document(text, path))
    logger.debug(f"Loaded configuration from {path}: {len(config.cases)} cases")
    return config


def config_to_dict(config: DesignConfig) -> Dict[str, Any]:
    """JSON-compatible mapping of a configuration."""
    return config.model_dump(mode="json")


def write_config(config: DesignConfig, path: Union[str, Path]) -> Path:
    """Write a configuration as sorted, indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def apply_overrides(
    config: DesignConfig,
    out: Optional[Path] = None,
    dt: Optional[float] = None,
) -> DesignConfig:
    """Replace the output directory and/or integration step, then re-validate."""
    if out is None and dt is None:
        return config
    data = config_to_dict(config)
    if out is not None:
        data["output"]["directory"] = str(out)
    if dt is not None:
        data["sim"]["dt"] = dt
    return validate_config(data)
