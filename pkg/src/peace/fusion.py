"""Per-prompt segmentation, softmax fusion, and the safety heatmap.

The image is segmented once per engineered prompt; channels are fused with a
per-pixel softmax; negative channels are then dropped (a slice, no
renormalization) and the positive channels collapse to one field. The sum
collapse reads as P(pixel belongs to any safe class), equivalently
1 - sum of negative-channel probabilities.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .backends.base import Backend
from .errors import BackendError, ComputationError, ContractError
from .imaging import write_pgm16
from .prompts import PromptSet

COLLAPSE_MODES = ("sum", "max")


@dataclass(frozen=True)
class LogitStack:
    """Raw logits, one channel per prompt, in prompt order."""

    values: np.ndarray          # (K, H, W)
    prompts: PromptSet

    @property
    def channel_count(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class FusedStack:
    """Per-pixel channel probabilities; each pixel sums to one."""

    values: np.ndarray          # (K, H, W)
    prompts: PromptSet


@dataclass(frozen=True)
class SafetyHeatmap:
    """Per-pixel probability in [0, 1] that the ground below is safe."""

    values: np.ndarray          # (H, W)
    prompts: PromptSet | None = None

    @property
    def center_value(self) -> float:
        h, w = self.values.shape
        return float(self.values[h // 2, w // 2])


def segment_all(image, prompts: PromptSet, backend: Backend) -> LogitStack:
    if len(prompts.prompts) == 0:
        raise ContractError("segment_all: empty prompt set")
    channels = []
    for i, prompt in enumerate(prompts.prompts):
        try:
            channels.append(backend.segment(image, prompt.text).values)
        except Exception as exc:
            raise BackendError(
                f"segmentation failed for prompt {i} ({prompt.text!r}): {exc}") from exc
        if channels[-1].shape != channels[0].shape:
            raise ContractError(
                f"channel {i} shape {channels[-1].shape} != {channels[0].shape}")
    return LogitStack(values=np.stack(channels).astype(np.float64), prompts=prompts)


def softmax_fuse(stack: LogitStack) -> FusedStack:
    """Per-pixel softmax across channels, stabilized by max subtraction."""
    logits = stack.values
    bad = ~np.isfinite(logits)
    if bad.any():
        c, y, x = np.argwhere(bad)[0]
        raise ComputationError(
            f"non-finite logit at channel {c}, pixel ({y}, {x}): {logits[c, y, x]}")
    shifted = logits - logits.max(axis=0, keepdims=True)
    expd = np.exp(shifted)
    return FusedStack(values=expd / expd.sum(axis=0, keepdims=True), prompts=stack.prompts)


def drop_negatives(fused: FusedStack, x_count: int, y_count: int) -> np.ndarray:
    """Keep exactly the first X (positive) channels; no renormalization."""
    if x_count + y_count != fused.values.shape[0]:
        raise ContractError(
            f"X+Y = {x_count + y_count} but stack has {fused.values.shape[0]} channels")
    if x_count < 1:
        raise ContractError("need at least one positive channel")
    return fused.values[:x_count]


def collapse(positive_channels: np.ndarray, mode: str = "sum",
             prompts: PromptSet | None = None) -> SafetyHeatmap:
    if mode not in COLLAPSE_MODES:
        raise ContractError(f"unknown collapse mode {mode!r}")
    if mode == "sum":
        values = positive_channels.sum(axis=0)
    else:
        values = positive_channels.max(axis=0)
    return SafetyHeatmap(values=np.clip(values, 0.0, 1.0), prompts=prompts)


def fuse_pipeline(image, prompts: PromptSet, backend: Backend,
                  collapse_mode: str = "sum") -> SafetyHeatmap:
    stack = segment_all(image, prompts, backend)
    fused = softmax_fuse(stack)
    positives = drop_negatives(fused, prompts.x_count, prompts.y_count)
    return collapse(positives, collapse_mode, prompts)


def dump_heatmap(heatmap: SafetyHeatmap, pgm_path, sidecar_path,
                 extra: dict | None = None) -> None:
    """Write the 16-bit PGM plus a JSON sidecar with prompt provenance."""
    write_pgm16(pgm_path, heatmap.values)
    doc = {
        "x_count": heatmap.prompts.x_count if heatmap.prompts else None,
        "y_count": heatmap.prompts.y_count if heatmap.prompts else None,
        "prompts": heatmap.prompts.texts() if heatmap.prompts else [],
        "mode": heatmap.prompts.mode if heatmap.prompts else None,
        "shape": list(heatmap.values.shape),
    }
    if extra:
        doc.update(extra)
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
