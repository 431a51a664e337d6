"""Structured-text (YAML) config files and stable content hashes."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Mapping

import yaml

from .errors import ConfigInvalid


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def _default(o):
    if isinstance(o, tuple):
        return list(o)
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"not serializable: {type(o).__name__}")


def config_hash(obj: Any, length: int = 16) -> str:
    """Hex digest of the canonical JSON form; equal configs hash equal."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:length]


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path) -> Dict[str, Any]:
    """Read a YAML mapping. Missing file or malformed content raises ConfigInvalid."""
    p = Path(path)
    if not p.is_file():
        raise ConfigInvalid(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigInvalid(f"cannot parse {p}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{p}: top level must be a mapping")
    return data


def save_config(data: Mapping[str, Any], path) -> None:
    Path(path).write_text(yaml.safe_dump(json.loads(canonical_json(dict(data))), sort_keys=True))


def merge(base: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Shallow merge where ``None`` override values are ignored."""
    out = dict(base)
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out
