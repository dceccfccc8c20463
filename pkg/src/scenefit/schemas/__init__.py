"""Versioned JSON schemas for every artifact the pipeline writes."""

import json
from importlib import resources

import jsonschema

_NAMES = (
    "sim3_transform",
    "phase1_result",
    "cameras",
    "iou_report",
    "schedule_manifest",
    "checkpoint",
    "run_summary",
    "scene_manifest",
)

_cache: dict = {}


def schema(name: str) -> dict:
    if name not in _NAMES:
        raise KeyError(f"unknown schema {name!r}; have {_NAMES}")
    if name not in _cache:
        text = resources.files(__package__).joinpath(f"{name}.schema.json").read_text()
        _cache[name] = json.loads(text)
    return _cache[name]


def validate(name: str, obj) -> None:
    """Raise jsonschema.ValidationError when obj violates the named schema."""
    jsonschema.validate(obj, schema(name))
