"""Inference backend over exported exchange-format (ONNX) graphs.

Expects a model directory produced by the companion export tool:

    manifest.json        graph files, tensor I/O names, hashes, dims
    *.onnx               text encoder, image encoder, segmentation decoder
    <token table>        BPE merge table (sha256 pinned in the manifest)
    <embedding table>    optional precomputed "PEAC" word-embedding table

All failures (missing runtime, missing or inconsistent files) surface at
construction time, never at call time.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from ..errors import BackendError, ValidationError
from ..imaging import Frame
from .base import BackendDescriptor, EmbeddingVector, LogitMap, normalize
from .table import read_embedding_table
from .tokenizer import BpeTokenizer, file_sha256

MODEL_DIR_ENV = "PEACE_MODEL_DIR"

_REQUIRED_GRAPHS = ("text_encoder", "image_encoder", "seg_decoder")


@dataclass(frozen=True)
class GraphSpec:
    file: str
    inputs: tuple[str, ...]
    output: str


@dataclass(frozen=True)
class ExportManifest:
    variant: str
    embed_dim: int
    seg_resolution: tuple[int, int]
    image_size: int
    image_mean: tuple[float, float, float]
    image_std: tuple[float, float, float]
    graphs: dict[str, GraphSpec]
    token_table_file: str
    token_table_sha256: str
    context_length: int = 77
    embedding_table: str | None = None
    graph_sha256: dict[str, str] | None = None
    tool_versions: dict | None = None


def load_manifest(path) -> ExportManifest:
    try:
        doc = json.load(open(path, "r", encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot parse manifest {path}: {exc}") from exc
    try:
        graphs = {}
        for name in _REQUIRED_GRAPHS:
            g = doc["graphs"][name]
            inputs = g.get("inputs", [g["input"]] if "input" in g else None)
            graphs[name] = GraphSpec(file=g["file"], inputs=tuple(inputs), output=g["output"])
        return ExportManifest(
            variant=doc["variant"],
            embed_dim=int(doc["embed_dim"]),
            seg_resolution=tuple(doc["seg_resolution"]),
            image_size=int(doc["image_size"]),
            image_mean=tuple(doc["image_mean"]),
            image_std=tuple(doc["image_std"]),
            graphs=graphs,
            token_table_file=doc["token_table"]["file"],
            token_table_sha256=doc["token_table"]["sha256"],
            context_length=int(doc.get("context_length", 77)),
            embedding_table=doc.get("embedding_table"),
            graph_sha256=doc.get("graph_sha256"),
            tool_versions=doc.get("tool_versions"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"manifest {path}: missing or malformed field: {exc}") from exc


class PortableGraphBackend:
    def __init__(self, descriptor: BackendDescriptor):
        descriptor.validate()
        model_dir = descriptor.model_dir or os.environ.get(MODEL_DIR_ENV)
        if not model_dir or not os.path.isdir(model_dir):
            raise BackendError(f"portable_graph: model directory not found: {model_dir!r}")
        manifest_path = os.path.join(model_dir, "manifest.json")
        if not os.path.isfile(manifest_path):
            raise BackendError(f"portable_graph: no manifest.json in {model_dir}")
        try:
            self.manifest = load_manifest(manifest_path)
        except ValidationError as exc:
            raise BackendError(str(exc)) from exc
        self.descriptor = BackendDescriptor(
            kind="portable_graph",
            embed_dim=self.manifest.embed_dim,
            seg_resolution=self.manifest.seg_resolution,
            model_dir=model_dir,
        )

        try:
            import onnxruntime as ort
        except ImportError as exc:
            raise BackendError(
                "portable_graph backend requires the optional 'onnxruntime' "
                "dependency (pip install peace[portable])") from exc

        self._sessions = {}
        for name, spec in self.manifest.graphs.items():
            graph_path = os.path.join(model_dir, spec.file)
            if not os.path.isfile(graph_path):
                raise BackendError(f"portable_graph: missing graph file {graph_path}")
            if self.manifest.graph_sha256 and name in self.manifest.graph_sha256:
                actual = file_sha256(graph_path)
                if actual != self.manifest.graph_sha256[name]:
                    raise BackendError(f"portable_graph: {spec.file} hash mismatch")
            try:
                self._sessions[name] = ort.InferenceSession(
                    graph_path, providers=["CPUExecutionProvider"])
            except Exception as exc:
                raise BackendError(f"portable_graph: failed to load {spec.file}: {exc}") from exc

        table_path = os.path.join(model_dir, self.manifest.token_table_file)
        try:
            self.tokenizer = BpeTokenizer(table_path, self.manifest.token_table_sha256)
        except ValidationError as exc:
            raise BackendError(str(exc)) from exc

        self._table: dict[str, np.ndarray] = {}
        if self.manifest.embedding_table:
            words, matrix = read_embedding_table(
                os.path.join(model_dir, self.manifest.embedding_table))
            self._table = {w: matrix[i] for i, w in enumerate(words)}

    # -- operations ---------------------------------------------------------

    def _run(self, graph: str, feeds: dict[str, np.ndarray]) -> np.ndarray:
        spec = self.manifest.graphs[graph]
        try:
            out = self._sessions[graph].run([spec.output], feeds)
        except Exception as exc:
            raise BackendError(f"portable_graph: {graph} inference failed: {exc}") from exc
        return np.asarray(out[0])

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValidationError("embed_text: empty text")
        cached = self._table.get(text)
        if cached is not None:
            return EmbeddingVector(values=normalize(cached.astype(np.float64)))
        ids, truncated = self.tokenizer.encode(text, self.manifest.context_length)
        spec = self.manifest.graphs["text_encoder"]
        feeds = {spec.inputs[0]: np.asarray([ids], dtype=np.int64)}
        vec = self._run("text_encoder", feeds)[0].astype(np.float64)
        return EmbeddingVector(values=normalize(vec), truncated=truncated)

    def _pixels(self, image, size: int) -> np.ndarray:
        rgb = image.rgb if isinstance(image, Frame) else np.asarray(image)
        if rgb.size == 0:
            raise ValidationError("embed_image: zero-sized image")
        resized = np.asarray(
            Image.fromarray(rgb.astype(np.uint8)).resize((size, size), Image.BILINEAR),
            dtype=np.float32) / 255.0
        mean = np.asarray(self.manifest.image_mean, dtype=np.float32)
        std = np.asarray(self.manifest.image_std, dtype=np.float32)
        chw = ((resized - mean) / std).transpose(2, 0, 1)
        return chw[np.newaxis]

    def embed_image(self, image) -> EmbeddingVector:
        spec = self.manifest.graphs["image_encoder"]
        feeds = {spec.inputs[0]: self._pixels(image, self.manifest.image_size)}
        vec = self._run("image_encoder", feeds)[0].astype(np.float64)
        return EmbeddingVector(values=normalize(vec))

    def segment(self, image, prompt: str) -> LogitMap:
        if not prompt:
            raise ValidationError("segment: empty prompt")
        spec = self.manifest.graphs["seg_decoder"]
        cond = self.embed_text(prompt).values.astype(np.float32)[np.newaxis]
        feeds = {
            spec.inputs[0]: self._pixels(image, self.manifest.image_size),
            spec.inputs[1]: cond,
        }
        logits = self._run("seg_decoder", feeds).astype(np.float64)
        logits = logits.reshape(logits.shape[-2], logits.shape[-1])
        return LogitMap(values=logits)

    def caption(self, image) -> str | None:
        # Captioner graph export is optional and not part of the base bundle.
        return None
