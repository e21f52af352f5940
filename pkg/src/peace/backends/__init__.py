"""Inference backends: a deterministic mock and an exchange-format runtime."""
from __future__ import annotations

from .base import Backend, BackendDescriptor, EmbeddingVector, LogitMap, normalize
from .mock import MockBackend

__all__ = [
    "Backend",
    "BackendDescriptor",
    "EmbeddingVector",
    "LogitMap",
    "MockBackend",
    "create_backend",
    "normalize",
]


def create_backend(descriptor: BackendDescriptor) -> Backend:
    descriptor.validate()
    if descriptor.kind == "mock":
        return MockBackend(descriptor)
    from .portable import PortableGraphBackend
    return PortableGraphBackend(descriptor)
