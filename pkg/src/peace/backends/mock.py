"""Deterministic mock backend for desk-scale verification.

No model weights are involved. The mock plants a known similarity structure
so the whole selection/fusion/landing stack can be tested end to end:

* ``embed_text(s)`` is a seeded-hash unit vector, so distinct words get
  near-orthogonal directions in high dimension.
* ``embed_image`` of a tagged frame blends the (normalized) sum of its tag
  word vectors with a small per-image identity component plus seeded noise.
  Each planted tag word is therefore the cosine argmax within its
  description type, by construction.
* ``segment`` reads the frame's synthetic label grid: pixels whose class
  word appears in the prompt score +2.0, related classes +0.5 (affinity
  table), everything else -2.0, plus Gaussian noise (sigma 0.25). The whole
  map is scaled by how well the prompt's decoration words match the frame's
  planted tags, which is what makes per-frame prompt adaptation measurably
  better than a static prompt in simulation.
"""
from __future__ import annotations

import hashlib
import re

import numpy as np

from ..errors import ValidationError
from ..imaging import Frame, nearest_resize
from .base import BackendDescriptor, EmbeddingVector, LogitMap, normalize

# Blend weights for tagged-image embeddings.
TAG_WEIGHT = 1.0
IDENTITY_WEIGHT = 0.1

# Label-affinity logits used by segment().
MATCH_LOGIT = 2.0
RELATED_LOGIT = 0.5
MISMATCH_LOGIT = -2.0

# Tag keys that describe content rather than rendering; they contribute to
# the image embedding but not to the prompt/tag match fraction.
NON_ROLE_TAGS = frozenset({"class_majority"})


def _seeded_rng(*parts) -> np.random.Generator:
    digest = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode("utf-8"),
                             digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def _word_pattern(word: str) -> re.Pattern:
    return re.compile(r"(?<!\w)" + re.escape(word) + r"(?!\w)", re.IGNORECASE)


class MockBackend:
    """See module docstring. Instances are immutable after construction."""

    def __init__(self, descriptor: BackendDescriptor):
        descriptor.validate()
        if descriptor.kind != "mock":
            raise ValidationError(f"MockBackend got descriptor kind {descriptor.kind!r}")
        self.descriptor = descriptor
        self._dim = descriptor.embed_dim
        self._seed = descriptor.seed

    # -- embeddings -------------------------------------------------------

    def _hash_unit(self, *parts) -> np.ndarray:
        rng = _seeded_rng(self._seed, *parts)
        return normalize(rng.standard_normal(self._dim))

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValidationError("embed_text: empty text")
        return EmbeddingVector(values=self._hash_unit("text", text))

    def embed_image(self, image) -> EmbeddingVector:
        frame = image if isinstance(image, Frame) else None
        if frame is None:
            arr = np.asarray(image)
            if arr.size == 0:
                raise ValidationError("embed_image: zero-sized image")
            content = hashlib.blake2b(arr.tobytes() + str(arr.shape).encode(),
                                      digest_size=8).hexdigest()
            return EmbeddingVector(values=self._hash_unit("img-content", content))
        if frame.rgb.size == 0:
            raise ValidationError("embed_image: zero-sized image")
        key = frame.key or hashlib.blake2b(frame.rgb.tobytes(), digest_size=8).hexdigest()
        if not frame.tags:
            return EmbeddingVector(values=self._hash_unit("img-content", key))
        tag_vecs = [self._hash_unit("text", word) for _, word in sorted(frame.tags.items())]
        signature = normalize(np.sum(tag_vecs, axis=0))
        identity = self._hash_unit("img-id", key)
        noise_rng = _seeded_rng(self._seed, "img-noise", key)
        noise = noise_rng.standard_normal(self._dim) * (
            self.descriptor.embed_noise_sigma / np.sqrt(self._dim))
        blended = TAG_WEIGHT * signature + IDENTITY_WEIGHT * identity + noise
        return EmbeddingVector(values=normalize(blended))

    # -- segmentation ------------------------------------------------------

    def _prompt_class(self, frame: Frame, prompt: str) -> int | None:
        """Class id whose word occurs in the prompt; longest word wins."""
        best_id, best_len = None, -1
        for cid, word in frame.class_words.items():
            if len(word) > best_len and _word_pattern(word).search(prompt):
                best_id, best_len = cid, len(word)
        return best_id

    def _tag_match_fraction(self, frame: Frame, prompt: str) -> float:
        role_tags = [w for k, w in frame.tags.items() if k not in NON_ROLE_TAGS]
        if not role_tags:
            return 1.0
        hits = sum(1 for w in role_tags if _word_pattern(w).search(prompt))
        return hits / len(role_tags)

    def segment(self, image, prompt: str) -> LogitMap:
        if not prompt:
            raise ValidationError("segment: empty prompt")
        frame = image if isinstance(image, Frame) else Frame(rgb=np.asarray(image))
        width, height = self.descriptor.seg_resolution
        if frame.labels is not None:
            labels = nearest_resize(frame.labels, height, width)
            target = self._prompt_class(frame, prompt)
            affinity = np.full((height, width), MISMATCH_LOGIT)
            if target is not None:
                affinity[labels == target] = MATCH_LOGIT
                target_word = frame.class_words[target]
                for cid, word in frame.class_words.items():
                    if cid == target:
                        continue
                    rel = self.descriptor.affinity.get(
                        (word, target_word), self.descriptor.affinity.get((target_word, word)))
                    if rel is not None:
                        affinity[labels == cid] = RELATED_LOGIT if rel is True else float(rel)
        else:
            affinity = np.zeros((height, width))
        gain = self._tag_match_fraction(frame, prompt)
        key = frame.key or hashlib.blake2b(frame.rgb.tobytes(), digest_size=8).hexdigest()
        noise = _seeded_rng(self._seed, "seg-noise", key, prompt).normal(
            0.0, self.descriptor.seg_noise_sigma, (height, width))
        return LogitMap(values=gain * affinity + noise)

    # -- captioning --------------------------------------------------------

    def caption(self, image) -> str | None:
        frame = image if isinstance(image, Frame) else None
        if frame is None or not frame.tags:
            return None
        majority = frame.tags.get("class_majority")
        environment = frame.tags.get("environment")
        if majority and environment:
            return f"an aerial scene of mostly {majority}, {environment}"
        if majority:
            return f"an aerial scene of mostly {majority}"
        if environment:
            return f"an aerial scene, {environment}"
        return None
