"""Precompute the vocabulary embedding table for a variant.

Reads the runtime side's vocabulary JSON (description-type words plus
positive/negative targets, order preserved, deduplicated), embeds every
word with the variant's in-framework text encoder, and writes the binary
"PEAC" table. When a manifest from a prior graph export is present, the
table file and its hash are recorded there.
"""
from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .errors import ExportError
from .exporter import load_manifest
from .peac import write_table
from .variants import VariantBundle, build_variant


def vocabulary_words(vocab_path) -> list[str]:
    try:
        doc = json.load(open(vocab_path, "r", encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ExportError(f"cannot read vocabulary {vocab_path}: {exc}") from exc
    words: list[str] = []
    for entry in doc.get("types", []):
        words.extend(str(w) for w in entry.get("words", []))
    targets = doc.get("targets", {})
    words.extend(str(w) for w in targets.get("positives", []))
    words.extend(str(w) for w in targets.get("negatives", []))
    if not words:
        raise ExportError(f"{vocab_path}: no words to embed")
    seen = set()
    unique = []
    for w in words:
        if w not in seen:
            seen.add(w)
            unique.append(w)
    return unique


def precompute_embeddings(vocab_path, variant: str, out_path,
                          manifest_path=None,
                          bundle: VariantBundle | None = None) -> tuple[list[str], np.ndarray]:
    """Embed the vocabulary and write the table; returns (words, matrix)."""
    bundle = bundle or build_variant(variant)
    words = vocabulary_words(vocab_path)
    matrix = bundle.embed_words(words).numpy().astype(np.float32)

    if manifest_path is not None:
        manifest = load_manifest(manifest_path)
        if manifest.get("variant") != bundle.name:
            raise ExportError(
                f"manifest variant {manifest.get('variant')!r} != {bundle.name!r}")
        if int(manifest["embed_dim"]) != matrix.shape[1]:
            raise ExportError(
                f"manifest embed_dim {manifest['embed_dim']} != table dim {matrix.shape[1]}")

    write_table(out_path, words, matrix)

    if manifest_path is not None:
        manifest["embedding_table"] = os.path.basename(str(out_path))
        manifest["embedding_table_sha256"] = _sha256(out_path)
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return words, matrix


def _sha256(path) -> str:
    h = hashlib.sha256()
    h.update(open(path, "rb").read())
    return h.hexdigest()


def cosine_matrix(matrix: np.ndarray) -> np.ndarray:
    rows = matrix.astype(np.float64)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    unit = rows / norms
    return unit @ unit.T


def similarity_rankings(matrix: np.ndarray) -> np.ndarray:
    """Per word, the indices of all words ordered by descending similarity.

    Uses a stable sort so exact ties rank by word index on both sides of a
    parity comparison.
    """
    sims = cosine_matrix(matrix)
    order = np.argsort(-sims, axis=1, kind="stable")
    return order
