"""Description-type vocabulary and landing-target word lists.

The vocabulary file is human-editable JSON so prompt behaviour can be tuned
without touching code:

    {
      "types": [{"role": "resolution", "words": ["rendered", ...]}, ...],
      "targets": {"positives": ["grass", ...], "negatives": ["water", ...]}
    }

Arrays are order-significant: file order is the canonical tie-break order for
word selection downstream.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .errors import ValidationError

REQUIRED_ROLES = ("resolution", "frame", "environment")
KNOWN_OPTIONAL_ROLES = ("aerial", "context_aware")

UNIT_NORM_TOL = 1e-4


@dataclass(frozen=True)
class DescriptionType:
    """One category of prompt decorations and its candidate words."""

    role: str
    words: tuple[str, ...]
    embeddings: np.ndarray | None = None   # (len(words), dim) unit rows once populated
    optional: bool = False

    def validate(self) -> None:
        if not self.role:
            raise ValidationError("description type with empty role")
        if len(self.words) < 1:
            raise ValidationError(f"type {self.role!r} has no words")
        if any(not w for w in self.words):
            raise ValidationError(f"type {self.role!r} contains an empty word")
        if len(set(self.words)) != len(self.words):
            dupes = sorted({w for w in self.words if self.words.count(w) > 1})
            raise ValidationError(f"type {self.role!r} repeats words: {dupes}")
        if self.embeddings is not None:
            if self.embeddings.shape[0] != len(self.words):
                raise ValidationError(
                    f"type {self.role!r}: {self.embeddings.shape[0]} embeddings "
                    f"for {len(self.words)} words")
            norms = np.linalg.norm(self.embeddings, axis=1)
            if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
                raise ValidationError(f"type {self.role!r}: non-unit embedding")


@dataclass(frozen=True)
class DescriptionVocabulary:
    types: tuple[DescriptionType, ...]
    class_slot_marker: str = "{}"

    def validate(self) -> None:
        if len(self.types) < 1:
            raise ValidationError("vocabulary must define at least one type")
        roles = [t.role for t in self.types]
        if len(set(roles)) != len(roles):
            raise ValidationError(f"duplicate type roles: {roles}")
        for t in self.types:
            t.validate()

    def require_template_roles(self) -> None:
        missing = [r for r in REQUIRED_ROLES if r not in {t.role for t in self.types}]
        if missing:
            raise ValidationError(f"vocabulary is missing required roles: {missing}")

    def type_for(self, role: str) -> DescriptionType:
        for t in self.types:
            if t.role == role:
                return t
        raise ValidationError(f"no description type with role {role!r}")

    @property
    def embedded(self) -> bool:
        return all(t.embeddings is not None for t in self.types)


@dataclass(frozen=True)
class TargetLists:
    """Positive (candidate landing zone) and negative (avoid) class words."""

    positives: tuple[str, ...]
    negatives: tuple[str, ...] = ()

    def validate(self) -> None:
        if len(self.positives) < 1:
            raise ValidationError("targets: positives must be non-empty")
        overlap = sorted(set(self.positives) & set(self.negatives))
        if overlap:
            raise ValidationError(f"targets appear in both lists: {overlap}")
        for word in (*self.positives, *self.negatives):
            if not word:
                raise ValidationError("targets: empty class word")

    @property
    def x_count(self) -> int:
        return len(self.positives)

    @property
    def y_count(self) -> int:
        return len(self.negatives)


def _parse_file(path) -> dict:
    try:
        text = open(path, "r", encoding="utf-8").read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}, col {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be an object")
    return doc


def _types_from_doc(doc: dict, path) -> tuple[DescriptionType, ...]:
    raw = doc.get("types")
    if not isinstance(raw, list) or not raw:
        raise ValidationError(f"{path}: 'types' must be a non-empty array")
    types = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "role" not in entry or "words" not in entry:
            raise ValidationError(f"{path}: types[{i}] needs 'role' and 'words'")
        role = str(entry["role"])
        words = tuple(str(w) for w in entry["words"])
        t = DescriptionType(role=role, words=words, optional=role not in REQUIRED_ROLES)
        t.validate()
        types.append(t)
    return tuple(types)


def load_vocabulary(path, backend, require_template_roles: bool = True) -> DescriptionVocabulary:
    """Load and embed the description vocabulary; word file order is kept.

    ``require_template_roles=False`` admits schema-valid files that cannot
    fill the decorated template (callers that only score words may not
    need all three template roles).
    """
    doc = _parse_file(path)
    vocab = DescriptionVocabulary(
        types=_types_from_doc(doc, path),
        class_slot_marker=str(doc.get("class_slot_marker", "{}")),
    )
    vocab.validate()
    if require_template_roles:
        vocab.require_template_roles()
    return embed_vocabulary(vocab, backend)


def embed_vocabulary(vocab: DescriptionVocabulary, backend) -> DescriptionVocabulary:
    embedded = []
    for t in vocab.types:
        rows = np.stack([backend.embed_text(w).values for w in t.words])
        embedded.append(replace(t, embeddings=rows))
        embedded[-1].validate()
    return replace(vocab, types=tuple(embedded))


def load_targets(path) -> TargetLists:
    doc = _parse_file(path)
    raw = doc.get("targets")
    if not isinstance(raw, dict) or "positives" not in raw:
        raise ValidationError(f"{path}: 'targets' must be an object with 'positives'")
    targets = TargetLists(
        positives=tuple(str(w) for w in raw["positives"]),
        negatives=tuple(str(w) for w in raw.get("negatives", [])),
    )
    targets.validate()
    return targets


def serialize_vocabulary(vocab: DescriptionVocabulary, targets: TargetLists | None = None) -> str:
    doc: dict = {
        "class_slot_marker": vocab.class_slot_marker,
        "types": [{"role": t.role, "words": list(t.words)} for t in vocab.types],
    }
    if targets is not None:
        doc["targets"] = {
            "positives": list(targets.positives),
            "negatives": list(targets.negatives),
        }
    return json.dumps(doc, indent=2) + "\n"


def default_vocab_path() -> str:
    """Path of the vocabulary shipped with the package.

    The negative list is a project default (common unsafe ground classes),
    not a published reference; edit the file to tune behaviour.
    """
    return str(resources.files("peace").joinpath("data/default_vocab.json"))
