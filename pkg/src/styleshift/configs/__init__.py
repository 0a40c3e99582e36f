"""Versioned, shipped configuration files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from ..network import NetworkConfig


@dataclass(frozen=True)
class PinnedConfig:
    name: str
    version: int
    network: NetworkConfig
    budget: dict


def _load(filename: str) -> PinnedConfig:
    text = resources.files(__package__).joinpath(filename).read_text()
    raw = json.loads(text)
    return PinnedConfig(
        name=raw["name"],
        version=raw["version"],
        network=NetworkConfig.from_dict(raw["network"]),
        budget=raw.get("budget", {}),
    )


def paper_scale() -> PinnedConfig:
    """The full-size default: 16-float styles, 3 blocks, budgeted accounting."""
    return _load("paper_scale.json")
