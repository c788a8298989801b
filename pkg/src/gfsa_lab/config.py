"""Flat ``key=value`` experiment configuration.

Blank lines and lines starting with ``#`` are ignored.  Keys are the
:class:`~gfsa_lab.model.ModelConfig` fields plus ``task``, ``epochs``,
``out_dir``, ``trials``, ``k_min`` and ``k_max``; anything else is
rejected.  Missing keys take the values in :data:`DEFAULTS`.
"""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .model import ModelConfig
from .tasks import TASKS


class ConfigError(ValueError):
    def __init__(self, message: str, line: int = 0, source: str = "<config>"):
        where = f"{source}: line {line}: " if line else f"{source}: "
        super().__init__(where + message)
        self.line = line


DEFAULTS: dict[str, object] = {
    **{f.name: f.default for f in fields(ModelConfig)},
    "task": "copy",
    "epochs": 200,
    "out_dir": "runs/default",
    "trials": 1000,
    "k_min": 2,
    "k_max": 10,
}

_STRING_KEYS = {"gfsa_placement", "task", "out_dir"}


def parse_config(text: str, source: str = "<config>") -> dict[str, object]:
    values = dict(DEFAULTS)
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw!r}", lineno, source)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        if key in lines:
            raise ConfigError(f"duplicate key {key!r}", lineno, source)
        lines[key] = lineno
        if key in _STRING_KEYS:
            values[key] = value
        else:
            try:
                values[key] = int(value)
            except ValueError:
                raise ConfigError(f"{key} must be an integer, got {value!r}", lineno, source) from None
    if values["task"] not in TASKS:
        raise ConfigError(f"unknown task {values['task']!r}", lines.get("task", 0), source)
    if values["filter_order"] < 1:
        raise ConfigError("invalid K: filter_order must be >= 1", lines.get("filter_order", 0), source)
    if not 1 <= values["k_min"] <= values["k_max"]:
        raise ConfigError("invalid K range: need 1 <= k_min <= k_max", lines.get("k_min", 0), source)
    return values


def read_config(path) -> dict[str, object]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))


def model_config(values: dict[str, object]) -> ModelConfig:
    try:
        return ModelConfig(**{f.name: values[f.name] for f in fields(ModelConfig)})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
