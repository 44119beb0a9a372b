"""Architecture and model configuration.

Every other module consumes the frozen dataclasses defined here. Configs are
validated once (``validate``) and then shared read-only.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

SCHEMA_VERSION = 1

MB = 1_000_000


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``errors`` holds one diagnostic string per violated invariant.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class PrecisionMode(str, enum.Enum):
    DENSE_8X8 = "Dense8x8"
    PROJ_8X4 = "Proj8x4"
    PROJ_8X2 = "Proj8x2"

    @property
    def ratio(self) -> int:
        """Acceleration ratio R: output tiles produced per activation tile."""
        return _RATIO[self]

    @property
    def weight_bits(self) -> int:
        return _WEIGHT_BITS[self]

    @classmethod
    def for_weight_bits(cls, bits: int) -> "PrecisionMode":
        for mode, wb in _WEIGHT_BITS.items():
            if wb == bits:
                return mode
        raise ConfigError([f"no precision mode for {bits}-bit weights"])


_RATIO = {PrecisionMode.DENSE_8X8: 1, PrecisionMode.PROJ_8X4: 2, PrecisionMode.PROJ_8X2: 4}
_WEIGHT_BITS = {PrecisionMode.DENSE_8X8: 8, PrecisionMode.PROJ_8X4: 4, PrecisionMode.PROJ_8X2: 2}

ARCHITECTURES = ("dlegion", "ws", "dip", "adip", "tpuv4i")


@dataclass(frozen=True)
class ArchConfig:
    """Machine description.

    For D-Legion machines ``legions`` is L and ``cores_per_legion`` is C. The
    single-array baselines use ``legions`` for the number of independent
    arrays (1 for WS/DiP/ADiP, 4 MXUs for TPUv4i) and ``cores_per_legion=1``.
    """

    legions: int
    cores_per_legion: int
    core_dim: int
    pipeline_stages: int = 4
    frequency: float = 1e9
    accumulators_per_legion: int = 4
    psum_bank_count: int = 4
    psum_bank_bytes: int = int(0.66 * MB)
    legion_link_bits: int = 1024
    psum_element_bits: int = 32
    architecture: str = "dlegion"
    name: str = ""
    # WS pipeline overheads; None means the standard 2(D-1) fill and D-1 drain.
    ws_fill_cycles: int | None = None
    ws_drain_cycles: int | None = None

    @property
    def total_pes(self) -> int:
        return self.legions * self.cores_per_legion * self.core_dim**2

    @property
    def supports_quantized(self) -> bool:
        return self.architecture in ("dlegion", "adip")

    def effective_mode(self, mode: PrecisionMode) -> PrecisionMode:
        """INT8-only machines run every workload in dense mode."""
        return mode if self.supports_quantized else PrecisionMode.DENSE_8X8

    def ws_fill(self) -> int:
        if self.ws_fill_cycles is not None:
            return self.ws_fill_cycles
        return 2 * (self.core_dim - 1)

    def ws_drain(self) -> int:
        if self.ws_drain_cycles is not None:
            return self.ws_drain_cycles
        return self.core_dim - 1

    def replace(self, **changes: Any) -> "ArchConfig":
        return dataclasses.replace(self, **changes)

    @property
    def label(self) -> str:
        return self.name or f"{self.architecture}-{self.legions}x{self.cores_per_legion}x{self.core_dim}"


@dataclass(frozen=True)
class ModelConfig:
    layers: int
    hidden_size: int
    num_heads: int
    num_kv_heads: int
    head_dim: int
    seq_len: int
    weight_bits: int = 2
    activation_bits: int = 8
    name: str = ""

    @property
    def attention_type(self) -> str:
        if self.num_kv_heads == self.num_heads:
            return "MHA"
        if self.num_kv_heads == 1:
            return "MQA"
        return "GQA"

    @property
    def group_size(self) -> int:
        """Query heads sharing one KV head (H / G)."""
        return self.num_heads // self.num_kv_heads

    @property
    def projection_mode(self) -> PrecisionMode:
        return PrecisionMode.for_weight_bits(self.weight_bits)

    def replace(self, **changes: Any) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


def _arch_errors(c: ArchConfig) -> list[str]:
    errs = []
    if c.legions < 1:
        errs.append("L >= 1 violated (legions)")
    if c.cores_per_legion < 1:
        errs.append("C >= 1 violated (cores_per_legion)")
    if c.core_dim < 1:
        errs.append("D >= 1 violated (core_dim)")
    if c.pipeline_stages < 0:
        errs.append("P >= 0 violated (pipeline_stages)")
    if c.frequency <= 0:
        errs.append("frequency > 0 violated")
    if c.accumulators_per_legion < 0:
        errs.append("accumulators_per_legion >= 0 violated")
    if c.psum_bank_count < 1:
        errs.append("psum_bank_count >= 1 violated")
    if c.psum_element_bits <= 0 or c.psum_element_bits % 8:
        errs.append("psum_element_bits must be a positive multiple of 8")
    if c.legion_link_bits <= 0 or c.legion_link_bits % 8:
        errs.append("legion_link_bits divisible by 8 violated")
    if c.architecture not in ARCHITECTURES:
        errs.append(f"architecture must be one of {ARCHITECTURES}")
    if c.core_dim >= 1 and c.psum_element_bits > 0:
        need = c.core_dim * 4 * c.core_dim * (c.psum_element_bits // 8)
        if c.psum_bank_bytes * c.psum_bank_count < need:
            errs.append(
                f"psum capacity {c.psum_bank_bytes * c.psum_bank_count} B < widest output tile {need} B"
            )
    for fname in ("ws_fill_cycles", "ws_drain_cycles"):
        v = getattr(c, fname)
        if v is not None and v < 0:
            errs.append(f"{fname} >= 0 violated")
    return errs


def _model_errors(m: ModelConfig) -> list[str]:
    errs = []
    for fname in ("layers", "hidden_size", "num_heads", "head_dim", "seq_len"):
        if getattr(m, fname) < 1:
            errs.append(f"{fname} >= 1 violated")
    if m.num_kv_heads < 1:
        errs.append("G >= 1 violated (num_kv_heads)")
    elif m.num_heads >= 1 and m.num_heads % m.num_kv_heads:
        errs.append(f"H mod G != 0 (H={m.num_heads}, G={m.num_kv_heads})")
    if m.weight_bits not in _WEIGHT_BITS.values():
        errs.append("weight_bits must be 2, 4 or 8")
    if m.activation_bits != 8:
        errs.append("activation_bits must be 8")
    return errs


def validate(config):
    """Check every invariant; return ``config`` unchanged or raise ConfigError."""
    if isinstance(config, ArchConfig):
        errs = _arch_errors(config)
    elif isinstance(config, ModelConfig):
        errs = _model_errors(config)
    else:
        raise TypeError(f"cannot validate {type(config).__name__}")
    if errs:
        raise ConfigError(errs)
    return config


def _dlegion(n: int) -> ArchConfig:
    return ArchConfig(legions=n, cores_per_legion=8, core_dim=16, name=f"dlegion-{n}")


def _single(arch: str) -> ArchConfig:
    return ArchConfig(
        legions=1, cores_per_legion=1, core_dim=64, accumulators_per_legion=0,
        legion_link_bits=64 * 8, architecture=arch, name=f"{arch}-64",
    )


_ARCH_PRESETS = {
    "dlegion-8": _dlegion(8),
    "dlegion-32": _dlegion(32),
    "dlegion-64": _dlegion(64),
    "ws-64": _single("ws"),
    "dip-64": _single("dip"),
    "adip-64": _single("adip"),
    "tpuv4i": ArchConfig(
        legions=4, cores_per_legion=1, core_dim=128, frequency=1.05e9,
        accumulators_per_legion=0, architecture="tpuv4i", name="tpuv4i",
    ),
}

_BITNET = ModelConfig(
    layers=32, hidden_size=2560, num_heads=16, num_kv_heads=16, head_dim=128,
    seq_len=2048, weight_bits=2, activation_bits=8, name="bitnet-1.58b",
)

_MODEL_PRESETS = {
    "bitnet-1.58b": _BITNET,
    "bitnet-1.58b-kv": _BITNET.replace(num_kv_heads=4, name="bitnet-1.58b-kv"),
}

PRESET_NAMES = tuple(_ARCH_PRESETS) + tuple(_MODEL_PRESETS)


def preset(name: str) -> tuple[ArchConfig | None, ModelConfig | None]:
    """Canonical configuration for ``name``; exactly one element is set."""
    if name in _ARCH_PRESETS:
        return _ARCH_PRESETS[name], None
    if name in _MODEL_PRESETS:
        return None, _MODEL_PRESETS[name]
    raise ConfigError([f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}"])


def arch_preset(name: str) -> ArchConfig:
    arch, _ = preset(name)
    if arch is None:
        raise ConfigError([f"{name!r} is a model preset, not an architecture"])
    return arch


def model_preset(name: str) -> ModelConfig:
    _, model = preset(name)
    if model is None:
        raise ConfigError([f"{name!r} is an architecture preset, not a model"])
    return model


# -- serialization -----------------------------------------------------------

def to_dict(config: ArchConfig | ModelConfig) -> dict:
    kind = "arch" if isinstance(config, ArchConfig) else "model"
    return {"schema_version": SCHEMA_VERSION, "kind": kind, **dataclasses.asdict(config)}


def from_dict(data: dict) -> ArchConfig | ModelConfig:
    """Parse a config dict. ``pipeline_stages`` is the only field with a silent default."""
    if not isinstance(data, dict):
        raise ConfigError(["config must be a JSON object"])
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError([f"schema_version must be {SCHEMA_VERSION}"])
    kind = data.get("kind")
    cls = {"arch": ArchConfig, "model": ModelConfig}.get(kind)
    if cls is None:
        raise ConfigError(["kind must be 'arch' or 'model'"])
    fields = {f.name: f for f in dataclasses.fields(cls)}
    optional = {"name", "ws_fill_cycles", "ws_drain_cycles", "pipeline_stages",
                "architecture", "psum_element_bits"}
    body = {k: v for k, v in data.items() if k not in ("schema_version", "kind")}
    errs = [f"unknown field {k!r}" for k in body if k not in fields]
    errs += [f"missing field {k!r}" for k in fields if k not in body and k not in optional]
    if errs:
        raise ConfigError(errs)
    return validate(cls(**body))


def load_config(path: str | Path) -> ArchConfig | ModelConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    return from_dict(data)


def dumps(config: ArchConfig | ModelConfig) -> str:
    return json.dumps(to_dict(config), indent=2, sort_keys=True) + "\n"


def resolve_arch(ref: str) -> ArchConfig:
    """Preset name or path to a JSON arch file."""
    if ref in _ARCH_PRESETS:
        return _ARCH_PRESETS[ref]
    cfg = load_config(ref)
    if not isinstance(cfg, ArchConfig):
        raise ConfigError([f"{ref}: expected an arch config"])
    return cfg


def resolve_model(ref: str) -> ModelConfig:
    if ref in _MODEL_PRESETS:
        return _MODEL_PRESETS[ref]
    cfg = load_config(ref)
    if not isinstance(cfg, ModelConfig):
        raise ConfigError([f"{ref}: expected a model config"])
    return cfg


def config_hash(*configs: ArchConfig | ModelConfig) -> str:
    blob = json.dumps([to_dict(c) for c in configs], sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


__all__ = [
    "ArchConfig", "ModelConfig", "PrecisionMode", "ConfigError", "validate", "preset",
    "arch_preset", "model_preset", "to_dict", "from_dict", "load_config", "dumps",
    "resolve_arch", "resolve_model", "config_hash", "PRESET_NAMES", "SCHEMA_VERSION",
]
