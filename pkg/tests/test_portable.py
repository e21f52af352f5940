import gzip
import json
import os

import numpy as np
import pytest

from peace.backends import BackendDescriptor, create_backend
from peace.backends.table import read_embedding_table, write_embedding_table
from peace.backends.tokenizer import BpeTokenizer, bytes_to_unicode, file_sha256
from peace.errors import BackendError, ValidationError


# -- embedding table -----------------------------------------------------------

def test_table_round_trip(tmp_path):
    words = ["grass", "open-field", "low resolution", "snow"]
    matrix = np.random.default_rng(0).standard_normal((4, 16)).astype(np.float32)
    path = tmp_path / "emb.peac"
    write_embedding_table(path, words, matrix)
    got_words, got = read_embedding_table(path)
    assert got_words == words
    np.testing.assert_array_equal(got, matrix)


def test_table_layout_bytes(tmp_path):
    path = tmp_path / "emb.peac"
    write_embedding_table(path, ["a"], np.asarray([[1.0, 2.0]], dtype=np.float32))
    blob = path.read_bytes()
    assert blob[:4] == b"PEAC"
    assert int.from_bytes(blob[4:8], "little") == 1      # version
    assert int.from_bytes(blob[8:12], "little") == 2     # dim
    assert int.from_bytes(blob[12:16], "little") == 1    # count
    assert np.frombuffer(blob[16:24], dtype="<f4").tolist() == [1.0, 2.0]
    assert blob[24:] == b"a\n"


def test_table_rejects_corruption(tmp_path):
    path = tmp_path / "emb.peac"
    write_embedding_table(path, ["a", "b"], np.zeros((2, 4), dtype=np.float32))
    blob = bytearray(path.read_bytes())
    blob[:4] = b"JUNK"
    bad = tmp_path / "bad.peac"
    bad.write_bytes(bytes(blob))
    with pytest.raises(ValidationError, match="magic"):
        read_embedding_table(bad)
    with pytest.raises(ValidationError, match="truncated"):
        short = tmp_path / "short.peac"
        short.write_bytes(path.read_bytes()[:10])
        read_embedding_table(short)


def test_table_word_count_must_match(tmp_path):
    path = tmp_path / "emb.peac"
    with pytest.raises(ValidationError):
        write_embedding_table(path, ["a", "b"], np.zeros((3, 4), dtype=np.float32))


# -- tokenizer -------------------------------------------------------------------

def _mini_merges(tmp_path, merges=("g r", "gr a", "gra s", "gras s</w>")):
    lines = ["#version: tiny"] + list(merges)
    path = tmp_path / "merges.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_bytes_to_unicode_reversible():
    table = bytes_to_unicode()
    assert len(table) == 256
    assert len(set(table.values())) == 256


def test_tokenizer_applies_merges_in_rank_order(tmp_path):
    tok = BpeTokenizer(_mini_merges(tmp_path))
    # 256 byte tokens + 256 </w> tokens + 4 merges + 2 specials
    assert tok.vocab_size == 518
    ids = tok.encode_tokens("grass")
    assert ids == [tok.encoder["grass</w>"]]
    partial = tok.encode_tokens("gras")
    assert partial == [tok.encoder["gras"], tok.encoder["s</w>"]] or len(partial) >= 1


def test_tokenizer_lowercases_and_collapses_whitespace(tmp_path):
    tok = BpeTokenizer(_mini_merges(tmp_path))
    assert tok.encode_tokens("  GRASS \n") == tok.encode_tokens("grass")


def test_tokenizer_encode_brackets_and_pads(tmp_path):
    tok = BpeTokenizer(_mini_merges(tmp_path))
    ids, truncated = tok.encode("grass", context_length=8)
    assert ids[0] == tok.sot
    assert tok.eot in ids
    assert len(ids) == 8
    assert not truncated
    assert ids[ids.index(tok.eot) + 1:] == [0] * (8 - ids.index(tok.eot) - 1)


def test_tokenizer_truncation_flagged(tmp_path):
    tok = BpeTokenizer(_mini_merges(tmp_path))
    ids, truncated = tok.encode("grass " * 50, context_length=16)
    assert truncated
    assert len(ids) == 16
    assert ids[-1] == tok.eot     # end token survives truncation


def test_tokenizer_gzip_and_hash_check(tmp_path):
    raw = _mini_merges(tmp_path).read_bytes()
    gz = tmp_path / "merges.txt.gz"
    with gzip.open(gz, "wb") as fh:
        fh.write(raw)
    digest = file_sha256(gz)
    tok = BpeTokenizer(gz, expected_sha256=digest)
    assert tok.encode_tokens("grass") == [tok.encoder["grass</w>"]]
    with pytest.raises(ValidationError, match="sha256"):
        BpeTokenizer(gz, expected_sha256="0" * 64)


def test_tokenizer_malformed_merges(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("#version\none two three\n")
    with pytest.raises(ValidationError, match="malformed"):
        BpeTokenizer(path)


# -- portable backend construction ------------------------------------------------

def test_portable_requires_model_dir():
    with pytest.raises(ValidationError, match="model_dir"):
        create_backend(BackendDescriptor(kind="portable_graph"))


def test_portable_missing_dir_is_backend_error(tmp_path):
    with pytest.raises(BackendError, match="not found"):
        create_backend(BackendDescriptor(kind="portable_graph",
                                         model_dir=str(tmp_path / "missing")))


def test_portable_missing_manifest(tmp_path):
    with pytest.raises(BackendError, match="manifest"):
        create_backend(BackendDescriptor(kind="portable_graph", model_dir=str(tmp_path)))


def _write_manifest(tmp_path, **overrides):
    doc = {
        "variant": "test",
        "embed_dim": 8,
        "seg_resolution": [16, 16],
        "image_size": 32,
        "image_mean": [0.5, 0.5, 0.5],
        "image_std": [0.5, 0.5, 0.5],
        "graphs": {
            "text_encoder": {"file": "text.onnx", "input": "ids", "output": "emb"},
            "image_encoder": {"file": "image.onnx", "input": "px", "output": "emb"},
            "seg_decoder": {"file": "seg.onnx", "inputs": ["px", "cond"],
                            "output": "logits"},
        },
        "token_table": {"file": "merges.txt", "sha256": "x"},
    }
    doc.update(overrides)
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


def test_portable_construction_fails_before_call_time(tmp_path):
    """Errors (missing graphs or runtime) surface at construction."""
    _write_manifest(tmp_path)
    with pytest.raises(BackendError):
        create_backend(BackendDescriptor(kind="portable_graph", model_dir=str(tmp_path)))


def test_manifest_missing_field_rejected(tmp_path):
    from peace.backends.portable import load_manifest
    path = _write_manifest(tmp_path)
    doc = json.loads(path.read_text())
    del doc["embed_dim"]
    path.write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="embed_dim"):
        load_manifest(path)


def test_manifest_loads(tmp_path):
    from peace.backends.portable import load_manifest
    manifest = load_manifest(_write_manifest(tmp_path))
    assert manifest.embed_dim == 8
    assert manifest.graphs["seg_decoder"].inputs == ("px", "cond")
    assert manifest.context_length == 77


# -- optional real-asset smoke ------------------------------------------------------

requires_assets = pytest.mark.skipif(
    not os.environ.get("PEACE_MODEL_DIR"),
    reason="PEACE_MODEL_DIR not set; real-model smoke test skipped")


@requires_assets
def test_real_model_grass_vs_road_smoke():
    backend = create_backend(BackendDescriptor(
        kind="portable_graph", model_dir=os.environ["PEACE_MODEL_DIR"]))
    fixture = os.path.join(os.environ["PEACE_MODEL_DIR"], "fixtures", "aerial.png")
    annotation = os.path.join(os.environ["PEACE_MODEL_DIR"], "fixtures", "aerial_regions.json")
    if not (os.path.isfile(fixture) and os.path.isfile(annotation)):
        pytest.skip("fixture photo/annotation not present in model dir")
    from peace.imaging import load_image
    rgb = load_image(fixture)
    regions = json.load(open(annotation))
    logits = backend.segment(rgb, "A photo of grass").values
    h, w = logits.shape

    def region_mean(name):
        x0, y0, x1, y1 = regions[name]   # fractions of width/height
        return logits[int(y0 * h): int(y1 * h), int(x0 * w): int(x1 * w)].mean()

    assert region_mean("grass") > region_mean("road")
