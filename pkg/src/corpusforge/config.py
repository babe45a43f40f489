"""Pipeline configuration: nested JSON with strict key validation.

Every knob has an explicit default; unknown keys are rejected so typos
fail loudly instead of silently running with defaults. The config digest
goes into every run report for provenance.
"""

from __future__ import annotations

import copy
import hashlib
import json

from .generator import DEFAULT_PROMPT_TEMPLATES
from .model import Role
from .refinery import DEFAULT_TRIAGE_PROMPT

DEFAULTS: dict = {
    "rng_seed": 0,
    "endpoints": {
        "generator_url": None,
        "embed_url": None,
        "mlm_url": None,
    },
    "refine": {
        "flow": {
            "first_role": "human",
            "strict": True,
        },
        "dedup": {
            "fraction_threshold": 0.5,
        },
        "lang": {
            "min_confidence": 0.7,
        },
        "english_policy": "flag_only",
        "triage": {
            "prompt_template": DEFAULT_TRIAGE_PROMPT,
            "max_retries": 3,
        },
    },
    "embed": {
        "dimension": 512,
        "identity_epsilon": 1e-6,
    },
    "generate": {
        "n_seeds": 10,
        "target_length_min": 4,
        "target_length_max": 10,
        "similarity_threshold": 0.9,
        "max_retries_per_turn": 3,
        "model": "default",
        "temperature": 0.7,
        "max_tokens": 512,
        "prompt_templates": {
            "human": DEFAULT_PROMPT_TEMPLATES[Role.HUMAN],
            "assistant": DEFAULT_PROMPT_TEMPLATES[Role.ASSISTANT],
        },
    },
    "quality": {
        "aggregation": "mean",
        "threshold": 2.0,
        "broken_flow_policy": "drop_conversation",
        "histogram_bins": 50,
        "histogram_max": 10.0,
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict, path: str = "") -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and key != "prompt_templates":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where} must be an object")
            merged[key] = _merge(base[key], value, where)
        else:
            merged[key] = value
    return merged


def load_config(path: str | None = None) -> dict:
    """Defaults overlaid with the JSON file at path, strictly validated."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    with open(path, "r", encoding="utf-8") as f:
        try:
            override = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e}")
    if not isinstance(override, dict):
        raise ConfigError(f"config root in {path} must be an object")
    return _merge(DEFAULTS, override)


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
