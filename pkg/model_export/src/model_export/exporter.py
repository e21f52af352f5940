"""Graph export: checkpoint -> three ONNX graphs + manifest.

The manifest written here is exactly the runtime side's expected schema:
graph file names, tensor I/O names, preprocessing constants, token-table
hash, and embedding dimension (read back from the exported text encoder's
output, not assumed).

Export is offline tooling only; nothing at runtime depends on this package.
The manifest is written last, so a failed export never leaves a partial
manifest behind.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass

import torch

from .errors import ExportError
from .variants import VariantBundle, build_variant

OPSET = 14

GRAPH_IO = {
    "text_encoder": {"file": "text_encoder.onnx", "inputs": ("input_ids",),
                     "output": "text_embedding"},
    "image_encoder": {"file": "image_encoder.onnx", "inputs": ("pixel_values",),
                      "output": "image_embedding"},
    "seg_decoder": {"file": "seg_decoder.onnx",
                    "inputs": ("pixel_values", "cond_embedding"),
                    "output": "logits"},
}

TOKEN_TABLE_FILE = "token_table.txt"


@dataclass(frozen=True)
class ExportManifest:
    variant: str
    embed_dim: int
    seg_resolution: tuple[int, int]
    image_size: int
    image_mean: tuple[float, float, float]
    image_std: tuple[float, float, float]
    graphs: dict
    token_table: dict
    graph_sha256: dict
    context_length: int
    tool_versions: dict
    embedding_table: str | None = None


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _example_inputs(bundle: VariantBundle, graph: str, embed_dim: int):
    ids = torch.zeros((1, bundle.context_length), dtype=torch.int64)
    ids[0, 0] = 1
    pixels = torch.zeros((1, 3, bundle.image_size, bundle.image_size),
                         dtype=torch.float32)
    cond = torch.zeros((1, embed_dim), dtype=torch.float32)
    return {
        "text_encoder": (ids,),
        "image_encoder": (pixels,),
        "seg_decoder": (pixels, cond),
    }[graph]


def export_models(variant: str, out_dir) -> ExportManifest:
    """Export the variant's three graphs plus manifest into ``out_dir``."""
    bundle = build_variant(variant)

    try:
        import onnx
    except ImportError as exc:
        raise ExportError(
            "graph serialization requires the 'onnx' package "
            "(pip install peace-model-export[graphs]); nothing was written") from exc

    # embed dim comes from the model itself
    with torch.no_grad():
        probe = bundle.text_encoder(_example_inputs(bundle, "text_encoder", 0)[0])
    embed_dim = int(probe.shape[-1])

    os.makedirs(out_dir, exist_ok=True)
    modules = {
        "text_encoder": bundle.text_encoder,
        "image_encoder": bundle.image_encoder,
        "seg_decoder": bundle.seg_decoder,
    }
    graph_sha = {}
    for name, spec in GRAPH_IO.items():
        path = os.path.join(out_dir, spec["file"])
        try:
            torch.onnx.export(
                modules[name],
                _example_inputs(bundle, name, embed_dim),
                path,
                input_names=list(spec["inputs"]),
                output_names=[spec["output"]],
                opset_version=OPSET,
                do_constant_folding=True,
                dynamo=False,
            )
        except Exception as exc:
            raise ExportError(f"exporting {name} failed: {exc}") from exc
        model = onnx.load(path)
        onnx.checker.check_model(model)
        graph_sha[name] = _sha256(path)

    token_path = os.path.join(out_dir, TOKEN_TABLE_FILE)
    if bundle.token_table_text is not None:
        with open(token_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(bundle.token_table_text)
    elif bundle.token_table_source:
        with open(bundle.token_table_source, "rb") as src, open(token_path, "wb") as dst:
            dst.write(src.read())
    else:
        raise ExportError("variant provides no token table")

    manifest = ExportManifest(
        variant=bundle.name,
        embed_dim=embed_dim,
        seg_resolution=tuple(bundle.seg_resolution),
        image_size=bundle.image_size,
        image_mean=tuple(bundle.image_mean),
        image_std=tuple(bundle.image_std),
        graphs={name: {"file": spec["file"], "inputs": list(spec["inputs"]),
                       "output": spec["output"]}
                for name, spec in GRAPH_IO.items()},
        token_table={"file": TOKEN_TABLE_FILE, "sha256": _sha256(token_path)},
        graph_sha256=graph_sha,
        context_length=bundle.context_length,
        tool_versions={"torch": torch.__version__, "onnx": onnx.__version__},
    )
    write_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest


def write_manifest(manifest: ExportManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> dict:
    try:
        return json.load(open(path, "r", encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ExportError(f"cannot read manifest {path}: {exc}") from exc
