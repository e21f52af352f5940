"""Byte-pair-encoding tokenizer for the portable text encoder.

Implements the standard 49,408-entry BPE scheme used by CLIP-style dual
encoders: 256 byte tokens, 256 end-of-word byte tokens, merged tokens from
the published merge table, and two special tokens. The merge table file
(plain text or gzip, one merge per line, first line a version header) is
referenced from the model manifest together with its SHA-256.

Unicode mojibake repair (ftfy) is intentionally not applied; inputs here
are plain ASCII prompt words, for which the published tokenizer is
equivalent.
"""
from __future__ import annotations

import gzip
import hashlib
import html
from functools import lru_cache

import regex as re

from ..errors import ValidationError

CONTEXT_LENGTH = 77

_SPLIT = re.compile(
    r"""<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+""",
    re.IGNORECASE,
)


@lru_cache()
def bytes_to_unicode() -> dict[int, str]:
    """Reversible byte -> printable-unicode map (the GPT-2/CLIP convention)."""
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


def _get_pairs(word: tuple[str, ...]) -> set[tuple[str, str]]:
    return set(zip(word[:-1], word[1:]))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class BpeTokenizer:
    def __init__(self, merges_path, expected_sha256: str | None = None):
        if expected_sha256 is not None:
            actual = file_sha256(merges_path)
            if actual != expected_sha256:
                raise ValidationError(
                    f"token table {merges_path}: sha256 {actual} != manifest {expected_sha256}")
        opener = gzip.open if str(merges_path).endswith(".gz") else open
        try:
            with opener(merges_path, "rt", encoding="utf-8") as fh:
                lines = fh.read().split("\n")
        except OSError as exc:
            raise ValidationError(f"cannot read token table {merges_path}: {exc}") from exc
        # First line is a version header; trailing blank lines are noise.
        merges = [tuple(line.split()) for line in lines[1:] if line.strip()]
        if any(len(m) != 2 for m in merges):
            raise ValidationError(f"token table {merges_path}: malformed merge line")

        self.byte_encoder = bytes_to_unicode()
        vocab = list(self.byte_encoder.values())
        vocab += [v + "</w>" for v in vocab]
        vocab += ["".join(m) for m in merges]
        vocab += ["<|startoftext|>", "<|endoftext|>"]
        self.encoder = {tok: i for i, tok in enumerate(vocab)}
        self.bpe_ranks = {m: i for i, m in enumerate(merges)}
        self.sot = self.encoder["<|startoftext|>"]
        self.eot = self.encoder["<|endoftext|>"]
        self._cache: dict[str, str] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.encoder)

    def _bpe(self, token: str) -> str:
        if token in self._cache:
            return self._cache[token]
        word = tuple(token[:-1]) + (token[-1] + "</w>",)
        pairs = _get_pairs(word)
        if not pairs:
            return token + "</w>"
        while True:
            bigram = min(pairs, key=lambda p: self.bpe_ranks.get(p, float("inf")))
            if bigram not in self.bpe_ranks:
                break
            first, second = bigram
            new_word: list[str] = []
            i = 0
            while i < len(word):
                try:
                    j = word.index(first, i)
                except ValueError:
                    new_word.extend(word[i:])
                    break
                new_word.extend(word[i:j])
                i = j
                if i < len(word) - 1 and word[i] == first and word[i + 1] == second:
                    new_word.append(first + second)
                    i += 2
                else:
                    new_word.append(word[i])
                    i += 1
            word = tuple(new_word)
            if len(word) == 1:
                break
            pairs = _get_pairs(word)
        out = " ".join(word)
        self._cache[token] = out
        return out

    def encode_tokens(self, text: str) -> list[int]:
        text = html.unescape(html.unescape(text))
        text = re.sub(r"\s+", " ", text).strip().lower()
        ids: list[int] = []
        for token in _SPLIT.findall(text):
            token = "".join(self.byte_encoder[b] for b in token.encode("utf-8"))
            ids.extend(self.encoder[t] for t in self._bpe(token).split(" "))
        return ids

    def encode(self, text: str, context_length: int = CONTEXT_LENGTH) -> tuple[list[int], bool]:
        """Bracket with start/end tokens, pad with zeros to context_length.

        Returns (ids, truncated); over-long inputs are cut, never silently.
        """
        body = self.encode_tokens(text)
        truncated = len(body) > context_length - 2
        if truncated:
            body = body[: context_length - 2]
        ids = [self.sot] + body + [self.eot]
        ids += [0] * (context_length - len(ids))
        return ids, truncated
