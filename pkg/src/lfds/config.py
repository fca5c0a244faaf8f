"""Flat ``key = value`` run configuration files.

Lines are ``key = value`` with ``#`` comments; nested keys use dots
(``head.kind = loop``).  Every key maps onto one :class:`RunConfig` field
and ``seed`` is mandatory.
"""

from __future__ import annotations

from dataclasses import fields

from .errors import FormatError, IngestionError, LfdsError
from .train import RunConfig

# config-file key -> RunConfig field
KEYS = {
    "seed": "seed",
    "dataset": "dataset",
    "head.kind": "head",
    "head.m": "m",
    "head.lambda": "lam",
    "head.fuse": "fuse",
    "head.u_init": "u_init",
    "train.epochs": "epochs",
    "train.batch_size": "batch_size",
    "train.lr_start": "lr_start",
    "train.lr_end": "lr_end",
    "train.folds": "fold_count",
    "train.fold_limit": "fold_limit",
    "dropout.hidden": "dropout_hidden",
    "dropout.node": "dropout_node",
    "dropout.element": "dropout_element",
    "model.hidden": "hidden",
    "model.layers": "num_layers",
    "model.classifier_hidden": "classifier_hidden",
    "model.normalize_adjacency": "normalize_adjacency",
}
ALIASES = {"head": "head.kind", "m": "head.m", "epochs": "train.epochs", "lambda": "head.lambda"}

_TYPES = {f.name: f.type for f in fields(RunConfig)}


class ConfigError(FormatError):
    """A config file or override that does not parse; carries the line and key."""

    def __init__(self, message, path=None, line=None, key=None):
        if key is not None:
            message = f"key {key!r}: {message}"
        super().__init__(message, path, line)
        self.key = key


def canonical_key(key: str) -> str:
    key = key.strip()
    key = ALIASES.get(key, key)
    if key not in KEYS:
        raise KeyError(key)
    return key


def _convert(field_name: str, text: str):
    kind = _TYPES[field_name]
    text = text.strip()
    if kind in ("bool", bool):
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind in ("int", int):
        return int(text)
    if kind in ("float", float):
        return float(text)
    if not text:
        raise ValueError("empty value")
    return text


def parse_config_text(text: str, path="<config>", overrides=()) -> RunConfig:
    """Parse config text plus ``key=value`` overrides (applied last)."""
    values: dict[str, object] = {}

    def assign(key, raw, line):
        try:
            ck = canonical_key(key)
        except KeyError:
            known = ", ".join(sorted(KEYS))
            raise ConfigError(f"unknown key; expected one of {known}", path, line, key.strip()) from None
        name = KEYS[ck]
        try:
            values[name] = _convert(name, raw)
        except ValueError as exc:
            raise ConfigError(str(exc), path, line, ck) from None

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", path, lineno)
        key, value = line.split("=", 1)
        assign(key, value, lineno)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}", "<override>")
        key, value = item.split("=", 1)
        assign(key, value, None)

    if "seed" not in values:
        raise ConfigError("missing mandatory key", path, None, "seed")
    try:
        return RunConfig(**values)
    except LfdsError as exc:
        raise ConfigError(str(exc), path) from None


def load_config(path, overrides=()) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise IngestionError(f"config file not found: {path}") from None
    return parse_config_text(text, path, overrides)


def format_config(config: RunConfig) -> str:
    """Serialise ``config`` back into the file format (round-trips through the parser)."""
    inverse = {v: k for k, v in KEYS.items()}
    lines = []
    for name, value in config.to_dict().items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{inverse[name]} = {value}")
    return "\n".join(lines) + "\n"
