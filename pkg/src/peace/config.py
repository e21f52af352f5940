"""Merged run configuration: JSON file plus flag overrides, strictly validated.

Unknown keys are rejected so typos fail fast instead of silently falling
back to defaults.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .backends.base import BackendDescriptor
from .errors import ConfigError
from .policy import PolicyConfig
from .prompts import PromptConfig
from .sim import SimConfig

_TUPLE_FIELDS = {"seg_resolution"}


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"
    seed: int = 0
    embed_dim: int = 256
    seg_resolution: tuple[int, int] = (64, 64)
    model_dir: str | None = None
    embed_noise_sigma: float = 0.25
    seg_noise_sigma: float = 0.25

    def descriptor(self) -> BackendDescriptor:
        return BackendDescriptor(
            kind=self.kind,
            embed_dim=self.embed_dim,
            seg_resolution=tuple(self.seg_resolution),
            seed=self.seed,
            model_dir=self.model_dir,
            embed_noise_sigma=self.embed_noise_sigma,
            seg_noise_sigma=self.seg_noise_sigma,
        )


@dataclass(frozen=True)
class RunConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    vocab_path: str | None = None     # None -> packaged default vocabulary

    def validate(self) -> None:
        self.prompt.validate()
        self.policy.validate()
        self.sim.validate()
        self.backend.descriptor().validate()


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}; allowed: {sorted(known)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        if dataclasses.is_dataclass(f.type) or f.name in ("backend", "prompt", "policy", "sim"):
            sub_cls = {"backend": BackendConfig, "prompt": PromptConfig,
                       "policy": PolicyConfig, "sim": SimConfig}.get(name)
            kwargs[name] = _build(sub_cls, value, f"{path}.{name}")
        elif name in _TUPLE_FIELDS:
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    cfg = _build(RunConfig, data, "config")
    cfg.validate()
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Load JSON config (all keys optional) and apply nested flag overrides.

    ``overrides`` uses dotted keys, e.g. {"prompt.mode": "peace"}.
    """
    data: dict = {}
    if path is not None:
        try:
            data = json.load(open(path, "r", encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        node = data
        *parents, leaf = dotted.split(".")
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted}: {part} is not an object")
        node[leaf] = value
    return config_from_dict(data)
