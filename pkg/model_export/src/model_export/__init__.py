"""Offline export tooling for the safe-landing runtime.

Converts dual-encoder / segmentation checkpoints into the portable graph
bundle (ONNX graphs + manifest + token table) and precomputes the binary
vocabulary embedding table the runtime can load directly.
"""

__version__ = "0.1.0"

from .embeddings import precompute_embeddings, similarity_rankings, vocabulary_words
from .errors import ExportError
from .exporter import ExportManifest, export_models
from .peac import read_table, write_table
from .variants import VARIANTS, build_variant

__all__ = [
    "VARIANTS",
    "ExportError",
    "ExportManifest",
    "build_variant",
    "export_models",
    "precompute_embeddings",
    "read_table",
    "similarity_rankings",
    "vocabulary_words",
    "write_table",
]
