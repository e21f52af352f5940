"""Per-frame prompt engineering: word selection and prompt assembly.

Three prompt modes are supported everywhere:

* ``default`` - the plain dual-encoder baseline, "A photo of {}.".
* ``dovesei`` - the static hand-tuned aerial prompt.
* ``peace``   - automated: pick the best word per description type for the
  current image by cosine similarity, then fill the decorated template.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np

from .backends.base import EmbeddingVector
from .errors import ComputationError, ValidationError
from .vocab import REQUIRED_ROLES, DescriptionVocabulary, TargetLists

MODES = ("default", "dovesei", "peace")

PLAIN_TEMPLATE = "A photo of {}."
STATIC_AERIAL_TEMPLATE = (
    "Aerial view, drone footage photo of {}, shade, shadows, low resolution."
)


@dataclass(frozen=True)
class PromptConfig:
    mode: str = "peace"
    cadence: int = 10            # regenerate every N frames (and on state change)
    env_top_k: int = 1
    caption_fusion: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"prompt mode must be one of {MODES}, got {self.mode!r}")
        if self.cadence < 1:
            raise ValidationError(f"cadence must be >= 1, got {self.cadence}")
        if self.env_top_k < 1:
            raise ValidationError(f"env_top_k must be >= 1, got {self.env_top_k}")


@dataclass(frozen=True)
class WordSelection:
    """Chosen word(s) per description type, with cosine scores.

    Every entry holds at least one (word, score) pair in descending score;
    only the environment role keeps more than one (top-k).
    """

    entries: dict[str, tuple[tuple[str, float], ...]]

    def word(self, role: str) -> str:
        return self.entries[role][0][0]

    def words(self, role: str) -> tuple[str, ...]:
        return tuple(w for w, _ in self.entries[role])

    def score(self, role: str) -> float:
        return self.entries[role][0][1]

    def validate(self, vocab: DescriptionVocabulary) -> None:
        for role in REQUIRED_ROLES:
            if role not in self.entries:
                raise ValidationError(f"selection missing required role {role!r}")
        for role, pairs in self.entries.items():
            words = vocab.type_for(role).words
            for word, score in pairs:
                if word not in words:
                    raise ValidationError(f"{word!r} not in type {role!r}")
                if not -1.0 <= score <= 1.0:
                    raise ValidationError(f"cosine score out of range: {score}")


@dataclass(frozen=True)
class EngineeredPrompt:
    text: str
    class_word: str
    polarity: str   # "positive" | "negative"

    def validate(self) -> None:
        if self.polarity not in ("positive", "negative"):
            raise ValidationError(f"bad polarity {self.polarity!r}")
        pattern = re.compile(r"(?<!\w)" + re.escape(self.class_word) + r"(?!\w)")
        hits = len(pattern.findall(self.text))
        if hits != 1:
            raise ValidationError(
                f"prompt must contain class word exactly once, found {hits}: {self.text!r}")


@dataclass(frozen=True)
class PromptSet:
    """All engineered prompts for one frame: X positives then Y negatives."""

    prompts: tuple[EngineeredPrompt, ...]
    x_count: int
    y_count: int
    selection: WordSelection | None
    frame_index: int
    mode: str = "peace"

    def validate(self) -> None:
        if len(self.prompts) != self.x_count + self.y_count:
            raise ValidationError("prompt count != X + Y")
        for i, p in enumerate(self.prompts):
            expected = "positive" if i < self.x_count else "negative"
            if p.polarity != expected:
                raise ValidationError(f"prompt {i} polarity {p.polarity}, expected {expected}")

    def texts(self) -> list[str]:
        return [p.text for p in self.prompts]


def cosine_similarity(u, v) -> float:
    a = u.values if isinstance(u, EmbeddingVector) else np.asarray(u, dtype=np.float64)
    b = v.values if isinstance(v, EmbeddingVector) else np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise ComputationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ComputationError("cosine of zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def select_words(
    image_embedding: EmbeddingVector,
    vocab: DescriptionVocabulary,
    env_top_k: int = 1,
    word_embedder=None,
) -> WordSelection:
    """Argmax cosine word per type; ties go to the earlier word in file order.

    ``word_embedder`` overrides the vocabulary's precomputed embeddings (used
    for caption fusion, where the comparison text is "word, caption").
    """
    img = image_embedding.values.astype(np.float64)
    norm = float(np.linalg.norm(img))
    if norm == 0.0:
        raise ComputationError("zero image embedding")
    unit = img / norm

    entries: dict[str, tuple[tuple[str, float], ...]] = {}
    for t in vocab.types:
        if word_embedder is not None:
            rows = np.stack([word_embedder(w).values for w in t.words])
        else:
            if t.embeddings is None:
                raise ValidationError(f"type {t.role!r} has no embeddings")
            rows = t.embeddings
        if rows.shape[1] != unit.shape[0]:
            raise ComputationError(
                f"embedding dim mismatch: image {unit.shape[0]}, words {rows.shape[1]}")
        norms = np.linalg.norm(rows, axis=1)
        scores = np.clip(rows @ unit / norms, -1.0, 1.0)
        k = env_top_k if t.role == "environment" else 1
        k = max(1, min(k, len(t.words)))
        # stable: descending score, ascending file index on exact ties
        order = np.lexsort((np.arange(len(t.words)), -scores))[:k]
        entries[t.role] = tuple((t.words[i], float(scores[i])) for i in order)
    selection = WordSelection(entries=entries)
    selection.validate(vocab)
    return selection


def _fill(template: str, class_word: str, marker: str = "{}") -> str:
    if not class_word:
        raise ValidationError("empty class word")
    if template.count(marker) != 1:
        raise ValidationError(f"template must contain {marker!r} exactly once")
    return template.replace(marker, class_word)


def build_prompt(
    selection: WordSelection | None,
    class_word: str,
    polarity: str,
    mode: str = "peace",
    marker: str = "{}",
) -> EngineeredPrompt:
    """Render one prompt; polarity tags the channel but never alters text."""
    if mode == "default":
        text = _fill(PLAIN_TEMPLATE, class_word, "{}")
    elif mode == "dovesei":
        text = _fill(STATIC_AERIAL_TEMPLATE, class_word, "{}")
    elif mode == "peace":
        if selection is None:
            raise ValidationError("peace mode requires a word selection")
        environment = ", ".join(selection.words("environment"))
        template = f"A {selection.word('resolution')} {selection.word('frame')} of {marker} in {environment}."
        text = _fill(template, class_word, marker)
    else:
        raise ValidationError(f"unknown prompt mode {mode!r}")
    prompt = EngineeredPrompt(text=text, class_word=class_word, polarity=polarity)
    prompt.validate()
    return prompt


def generate_prompt_set(
    image,
    targets: TargetLists,
    vocab: DescriptionVocabulary,
    backend,
    frame_index: int,
    mode: str = "peace",
    env_top_k: int = 1,
    caption_fusion: bool = False,
) -> PromptSet:
    """Embed the image once, select words once, expand all X+Y prompts."""
    if mode not in MODES:
        raise ValidationError(f"unknown prompt mode {mode!r}")
    targets.validate()
    selection = None
    if mode == "peace":
        image_embedding = backend.embed_image(image)
        word_embedder = None
        if caption_fusion:
            caption = backend.caption(image)
            if caption:
                word_embedder = lambda w: backend.embed_text(f"{w}, {caption}")
        selection = select_words(image_embedding, vocab, env_top_k, word_embedder)
    prompts = [
        build_prompt(selection, w, "positive", mode, vocab.class_slot_marker)
        for w in targets.positives
    ] + [
        build_prompt(selection, w, "negative", mode, vocab.class_slot_marker)
        for w in targets.negatives
    ]
    prompt_set = PromptSet(
        prompts=tuple(prompts),
        x_count=targets.x_count,
        y_count=targets.y_count,
        selection=selection,
        frame_index=frame_index,
        mode=mode,
    )
    prompt_set.validate()
    return prompt_set


def maybe_regenerate(
    cache: PromptSet | None,
    image,
    targets: TargetLists,
    vocab: DescriptionVocabulary,
    backend,
    frame_index: int,
    cfg: PromptConfig,
    state_changed: bool = False,
) -> tuple[PromptSet, bool]:
    """Regenerate on the cadence grid or on a state-change signal.

    Prompt selection does not have to run every frame; between refreshes the
    cached set is reused with its frame index bumped. Returns
    (prompt_set, regenerated).
    """
    cfg.validate()
    due = cache is None or state_changed or frame_index % cfg.cadence == 0
    if due:
        fresh = generate_prompt_set(
            image, targets, vocab, backend, frame_index,
            cfg.mode, cfg.env_top_k, cfg.caption_fusion)
        return fresh, True
    return replace(cache, frame_index=frame_index), False
