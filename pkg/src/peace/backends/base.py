"""Backend-neutral types and the descriptor used to construct backends."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from ..errors import ComputationError, ValidationError


@dataclass(frozen=True)
class EmbeddingVector:
    """A joint text/image embedding; unit L2 norm after :func:`normalize`."""

    values: np.ndarray
    truncated: bool = False   # set when the backend had to cut the input text

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def normalize(values: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(values))
    if norm == 0.0 or not np.isfinite(norm):
        raise ComputationError("cannot normalize a zero or non-finite vector")
    return values / norm


@dataclass(frozen=True)
class LogitMap:
    """Raw, unbounded per-pixel scores for one prompt."""

    values: np.ndarray   # (H, W) float

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str                                   # "mock" | "portable_graph"
    embed_dim: int = 256
    seg_resolution: tuple[int, int] = (64, 64)  # (width, height)
    seed: int | None = None                     # required for mock
    model_dir: str | None = None                # required for portable_graph
    embed_noise_sigma: float = 0.25
    seg_noise_sigma: float = 0.25
    affinity: dict = field(default_factory=dict)  # mock: (class word, prompt word) -> logit

    def validate(self) -> None:
        if self.kind == "mock":
            if self.seed is None:
                raise ValidationError("mock backend requires a seed")
        elif self.kind == "portable_graph":
            if not self.model_dir:
                raise ValidationError("portable_graph backend requires model_dir")
        else:
            raise ValidationError(f"unknown backend kind {self.kind!r}")


@runtime_checkable
class Backend(Protocol):
    """Uniform interface over embedding, captioning, and segmentation models.

    Implementations are immutable after construction; every call is a pure
    function of (descriptor, inputs), so instances can be shared across
    concurrently running episodes.
    """

    descriptor: BackendDescriptor

    def embed_text(self, text: str) -> EmbeddingVector: ...

    def embed_image(self, image) -> EmbeddingVector: ...

    def segment(self, image, prompt: str) -> LogitMap: ...

    def caption(self, image) -> str | None: ...
