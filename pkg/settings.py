"""Process settings and run configuration loading.

Precedence, lowest first: field defaults, the ``key=value`` config file,
command-line flags. Process-level knobs come from the environment (``.env``).
"""
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from errors import ConfigError
from helpers import PathLike
from schemas import DataConfig, DecodeConfig, ModelConfig, PathConfig, RunConfig, TrainHyper

ROOT_DIR = Path(__file__).parent
load_dotenv(ROOT_DIR / ".env")

LOG_LEVEL = os.getenv("SBSG_LOG_LEVEL", "INFO").upper()
DEBUG_MODE = os.getenv("SBSG_DEBUG", "False").lower() in ("1", "true", "yes")
THREADS = os.getenv("SBSG_THREADS", "1")

SECTIONS = {
    "model": ModelConfig,
    "train": TrainHyper,
    "decode": DecodeConfig,
    "data": DataConfig,
    "paths": PathConfig,
}


def _key_routes() -> Dict[str, tuple]:
    routes = {"seed": (None, "seed")}
    for section, schema in SECTIONS.items():
        for name, field in schema.model_fields.items():
            if name == "seed":
                continue
            routes[name] = (section, name)
            if field.alias:
                routes[field.alias] = (section, name)
    return routes


KEY_ROUTES = _key_routes()


def valid_keys():
    return sorted(KEY_ROUTES)


def read_config_file(path: PathLike) -> Dict[str, str]:
    """Parse UTF-8 ``key=value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e.strerror or e}")

    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def build_run_config(*layers: Optional[Mapping[str, Any]]) -> RunConfig:
    """Merge flat key maps (later wins) into a validated RunConfig."""
    nested: Dict[str, Any] = {section: {} for section in SECTIONS}
    for layer in layers:
        for key, value in (layer or {}).items():
            if value is None:
                continue
            route = KEY_ROUTES.get(key.replace("-", "_"))
            if route is None:
                raise ConfigError(f"Unknown config key {key!r}; valid keys: {', '.join(valid_keys())}")
            section, name = route
            if section is None:
                nested[name] = value
            else:
                nested[section][name] = value
    try:
        return RunConfig.model_validate(nested)
    except ValidationError as e:
        raise ConfigError(_describe(e))


def load_run_config(path: Optional[PathLike] = None, **overrides) -> RunConfig:
    file_values = read_config_file(path) if path else {}
    return build_run_config(file_values, overrides)


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item["loc"])
        parts.append(f"{where}: {item['msg']}")
    return "Invalid configuration: " + "; ".join(parts)
