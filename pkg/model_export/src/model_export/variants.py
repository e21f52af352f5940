"""Model variants that can be exported.

``toy``     - a tiny, deterministically initialized dual encoder plus
              segmentation decoder. No downloads; exists so the whole
              export/precompute/parity pipeline can be exercised anywhere.
``clipseg`` - the pretrained CLIPSeg checkpoint via transformers; needs the
              checkpoint cached locally or downloadable.

Every variant yields three exportable torch modules (text encoder, image
encoder, segmentation decoder), a tokenizer, and preprocessing metadata.
"""
from __future__ import annotations

import html
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import regex as re
import torch
from torch import nn

from .errors import ExportError

CONTEXT_LENGTH = 77

_SPLIT = re.compile(
    r"""<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+""",
    re.IGNORECASE,
)


@lru_cache()
def _bytes_to_unicode() -> dict[int, str]:
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("\xa1"), ord("\xac") + 1)) \
        + list(range(ord("\xae"), ord("\xff") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, [chr(c) for c in cs]))


class ByteTokenizer:
    """Byte-level BPE with an empty merge table.

    Equivalent to the standard CLIP-style tokenizer loaded with zero merges:
    every split token becomes its byte symbols with ``</w>`` on the last.
    The vocabulary is 256 byte tokens, 256 end-of-word byte tokens, and the
    two specials (514 entries).
    """

    def __init__(self):
        self.byte_encoder = _bytes_to_unicode()
        vocab = list(self.byte_encoder.values())
        vocab += [v + "</w>" for v in vocab]
        vocab += ["<|startoftext|>", "<|endoftext|>"]
        self.encoder = {tok: i for i, tok in enumerate(vocab)}
        self.sot = self.encoder["<|startoftext|>"]
        self.eot = self.encoder["<|endoftext|>"]

    @property
    def vocab_size(self) -> int:
        return len(self.encoder)

    def table_text(self) -> str:
        return "#version: byte-level, no merges\n"

    def encode(self, text: str, context_length: int = CONTEXT_LENGTH) -> tuple[list[int], bool]:
        text = html.unescape(html.unescape(text))
        text = re.sub(r"\s+", " ", text).strip().lower()
        ids: list[int] = []
        for token in _SPLIT.findall(text):
            chars = [self.byte_encoder[b] for b in token.encode("utf-8")]
            chars[-1] = chars[-1] + "</w>"
            ids.extend(self.encoder[c] for c in chars)
        truncated = len(ids) > context_length - 2
        if truncated:
            ids = ids[: context_length - 2]
        ids = [self.sot] + ids + [self.eot]
        ids += [0] * (context_length - len(ids))
        return ids, truncated


# -- toy modules -----------------------------------------------------------------

class ToyTextEncoder(nn.Module):
    def __init__(self, vocab_size: int, dim: int):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, 64)
        self.proj = nn.Linear(64, dim)

    def forward(self, input_ids: torch.Tensor) -> torch.Tensor:
        emb = self.embedding(input_ids)
        mask = (input_ids != 0).unsqueeze(-1).to(emb.dtype)
        pooled = (emb * mask).sum(dim=1)
        out = self.proj(pooled)
        return out / out.norm(dim=-1, keepdim=True)


class ToyImageEncoder(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 8, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(8, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(4),
        )
        self.proj = nn.Linear(16 * 16, dim)

    def forward(self, pixel_values: torch.Tensor) -> torch.Tensor:
        feats = self.features(pixel_values).flatten(1)
        out = self.proj(feats)
        return out / out.norm(dim=-1, keepdim=True)


class ToySegDecoder(nn.Module):
    def __init__(self, dim: int, out_size: int):
        super().__init__()
        self.out_size = out_size
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(16, dim, 3, stride=2, padding=1),
        )

    def forward(self, pixel_values: torch.Tensor,
                cond_embedding: torch.Tensor) -> torch.Tensor:
        feats = self.features(pixel_values)                       # [B, D, h, w]
        logits = (feats * cond_embedding[:, :, None, None]).sum(1, keepdim=True)
        return nn.functional.interpolate(logits, size=(self.out_size, self.out_size),
                                         mode="nearest")


@dataclass(frozen=True)
class VariantBundle:
    name: str
    text_encoder: nn.Module
    image_encoder: nn.Module
    seg_decoder: nn.Module
    tokenizer: object                       # .encode(text, ctx) -> (ids, truncated)
    token_table_text: str | None            # written verbatim when set
    token_table_source: str | None          # or copied from this path
    image_size: int
    image_mean: tuple[float, float, float]
    image_std: tuple[float, float, float]
    seg_resolution: tuple[int, int]
    context_length: int = CONTEXT_LENGTH

    def embed_words(self, words: list[str]) -> torch.Tensor:
        """In-framework embeddings; rejects words over the token limit."""
        too_long = []
        rows = []
        for word in words:
            ids, truncated = self.tokenizer.encode(word, self.context_length)
            if truncated:
                too_long.append(word)
            rows.append(ids)
        if too_long:
            raise ExportError(f"words exceed the token limit: {too_long}")
        with torch.no_grad():
            return self.text_encoder(torch.tensor(rows, dtype=torch.int64))


def _build_toy(dim: int = 64) -> VariantBundle:
    tokenizer = ByteTokenizer()
    torch.manual_seed(1337)   # fixed weights: re-export must be identical
    text = ToyTextEncoder(tokenizer.vocab_size, dim).eval()
    image = ToyImageEncoder(dim).eval()
    seg = ToySegDecoder(dim, 64).eval()
    return VariantBundle(
        name="toy",
        text_encoder=text, image_encoder=image, seg_decoder=seg,
        tokenizer=tokenizer,
        token_table_text=tokenizer.table_text(),
        token_table_source=None,
        image_size=64,
        image_mean=(0.5, 0.5, 0.5),
        image_std=(0.5, 0.5, 0.5),
        seg_resolution=(64, 64),
    )


class _HfTokenizerAdapter:
    def __init__(self, tokenizer):
        self._tok = tokenizer

    def encode(self, text: str, context_length: int) -> tuple[list[int], bool]:
        ids = self._tok(text)["input_ids"]
        truncated = len(ids) > context_length
        ids = ids[:context_length]
        ids = ids + [0] * (context_length - len(ids))
        return ids, truncated


class _ClipSegText(nn.Module):
    def __init__(self, model):
        super().__init__()
        self.clip = model.clip

    def forward(self, input_ids):
        out = self.clip.get_text_features(input_ids=input_ids)
        return out / out.norm(dim=-1, keepdim=True)


class _ClipSegImage(nn.Module):
    def __init__(self, model):
        super().__init__()
        self.clip = model.clip

    def forward(self, pixel_values):
        out = self.clip.get_image_features(pixel_values=pixel_values)
        return out / out.norm(dim=-1, keepdim=True)


class _ClipSegDecoder(nn.Module):
    def __init__(self, model):
        super().__init__()
        self.model = model

    def forward(self, pixel_values, cond_embedding):
        out = self.model(pixel_values=pixel_values,
                         conditional_embeddings=cond_embedding)
        return out.logits.reshape(1, 1, *out.logits.shape[-2:])


def _build_clipseg(checkpoint: str = "CIDAS/clipseg-rd64-refined") -> VariantBundle:
    try:
        from transformers import CLIPSegForImageSegmentation, CLIPSegProcessor
    except ImportError as exc:
        raise ExportError(
            "clipseg variant needs the optional 'transformers' dependency "
            "(pip install peace-model-export[clipseg])") from exc
    try:
        model = CLIPSegForImageSegmentation.from_pretrained(checkpoint).eval()
        processor = CLIPSegProcessor.from_pretrained(checkpoint)
    except Exception as exc:
        raise ExportError(
            f"checkpoint {checkpoint!r} is not cached and could not be "
            f"downloaded: {exc}") from exc

    import tempfile
    tokenizer = processor.tokenizer
    with tempfile.TemporaryDirectory() as tmp:
        files = tokenizer.save_vocabulary(tmp)
        merges = [f for f in files if f.endswith("merges.txt")]
        if not merges:
            raise ExportError("tokenizer did not produce a merge table")
        table_text = open(merges[0], "r", encoding="utf-8").read()

    image_processor = processor.image_processor
    size = image_processor.size
    image_size = size.get("shortest_edge") or size.get("height")
    return VariantBundle(
        name="clipseg",
        text_encoder=_ClipSegText(model),
        image_encoder=_ClipSegImage(model),
        seg_decoder=_ClipSegDecoder(model),
        tokenizer=_HfTokenizerAdapter(tokenizer),
        token_table_text=table_text,
        token_table_source=None,
        image_size=int(image_size),
        image_mean=tuple(image_processor.image_mean),
        image_std=tuple(image_processor.image_std),
        seg_resolution=(352, 352),
        context_length=model.config.text_config.max_position_embeddings,
    )


VARIANTS: dict[str, Callable[[], VariantBundle]] = {
    "toy": _build_toy,
    "clipseg": _build_clipseg,
}


def build_variant(name: str) -> VariantBundle:
    if name not in VARIANTS:
        raise ExportError(f"unknown variant {name!r}; available: {sorted(VARIANTS)}")
    return VARIANTS[name]()
