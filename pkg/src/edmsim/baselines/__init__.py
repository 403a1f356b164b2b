"""Comparison fabrics sharing the block-fabric's request/completion
bookkeeping, plus a registry for building any fabric by name."""

from __future__ import annotations

from ..core import ClusterConfig, ConfigError
from ..fabric import EdmFabric, FabricBase
from .base import (BaselineFabric, ByteLink, Flow, frame_payloads,
                   frame_wire_bytes, message_wire_bytes)
from .cxl import CxlFabric
from .fastpass import FastpassFabric
from .ird import IrdFabric
from .reactive import PfabricFabric, PfcFabric, ReactiveFabric

FABRICS: dict[str, type[FabricBase]] = {
    "edm": EdmFabric,
    "ird": IrdFabric,
    "dctcp": ReactiveFabric,
    "pfabric": PfabricFabric,
    "pfc": PfcFabric,
    "cxl": CxlFabric,
    "fastpass": FastpassFabric,
}


def build_fabric(name: str, cfg: ClusterConfig, **kwargs) -> FabricBase:
    """Instantiate a fabric model by registry name."""
    try:
        cls = FABRICS[name]
    except KeyError:
        raise ConfigError(
            f"unknown fabric {name!r}; choose from {sorted(FABRICS)}"
        ) from None
    return cls(cfg, **kwargs)


__all__ = [
    "BaselineFabric",
    "ByteLink",
    "CxlFabric",
    "FABRICS",
    "FastpassFabric",
    "Flow",
    "IrdFabric",
    "PfabricFabric",
    "PfcFabric",
    "ReactiveFabric",
    "build_fabric",
    "frame_payloads",
    "frame_wire_bytes",
    "message_wire_bytes",
]
