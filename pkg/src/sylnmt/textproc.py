"""Bangla text preprocessing: punctuation removal, stemming, tokenization,
vocabulary construction and fixed-length integer encoding.

Pipeline order is normalize -> stem (optional) -> tokenize -> encode; padding
happens at encoding time.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from . import BOS, EOS, PAD, UNK

RESERVED_TOKENS = ("<pad>", "<unk>", "<s>", "</s>")
_WS = re.compile(r"\s+")


class TextError(ValueError):
    pass


class CapTooSmall(TextError):
    pass


class MaxLenTooSmall(TextError):
    pass


class InvalidId(TextError):
    def __init__(self, id_: int):
        super().__init__(f"invalid vocabulary id {id_}")
        self.id = id_


def _read_table(name: str) -> list[str]:
    text = (resources.files("sylnmt") / "data" / name).read_text(encoding="utf-8")
    return [ln for ln in text.splitlines() if ln and not ln.startswith("#")]


@lru_cache(maxsize=None)
def punctuation_table() -> frozenset[str]:
    return frozenset(_read_table("punctuation.txt"))


def normalize_text(text: str, punctuation: Iterable[str] | None = None) -> str:
    """Strip punctuation characters, collapse whitespace runs, trim."""
    table = punctuation_table() if punctuation is None else frozenset(punctuation)
    kept = "".join(ch for ch in text if ch not in table)
    return _WS.sub(" ", kept).strip()


@dataclass(frozen=True)
class StemRules:
    suffixes: tuple[str, ...] = ()
    min_stem_len: int = 2

    def __post_init__(self):
        if self.min_stem_len < 2:
            raise ValueError("min_stem_len must be at least 2")
        ordered = tuple(sorted(self.suffixes, key=len, reverse=True))
        object.__setattr__(self, "suffixes", ordered)

    @classmethod
    def default(cls) -> "StemRules":
        return cls(tuple(_read_table("suffixes.txt")))


def stem_token(token: str, rules: StemRules) -> str:
    """Strip the longest matching suffix once, if the stem stays long enough."""
    for suf in rules.suffixes:
        if token.endswith(suf) and len(token) - len(suf) >= rules.min_stem_len:
            return token[: -len(suf)]
    return token


def tokenize(text: str) -> list[str]:
    return text.split()


def preprocess(text: str, stem: StemRules | None = None) -> list[str]:
    tokens = tokenize(normalize_text(text))
    if stem is not None:
        tokens = [stem_token(t, stem) for t in tokens]
    return tokens


@dataclass
class Vocab:
    id_to_token: list[str]
    cap: int = 10000
    token_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        if tuple(self.id_to_token[:4]) != RESERVED_TOKENS:
            raise TextError("vocabulary must start with the four reserved tokens")
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise TextError("vocabulary tokens must be unique")

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def token(self, id_: int) -> str:
        if not 0 <= id_ < len(self.id_to_token):
            raise InvalidId(id_)
        return self.id_to_token[id_]

    def save(self, path) -> None:
        lines = [f"{i}\t{t}" for i, t in enumerate(self.id_to_token)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, cap: int | None = None) -> "Vocab":
        tokens = []
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
            i, _, tok = line.partition("\t")
            if int(i) != n:
                raise TextError(f"{path}: ids must ascend from 0 (line {n + 1})")
            tokens.append(tok)
        return cls(tokens, cap if cap is not None else max(len(tokens), 5))


def build_vocab(token_seqs: Iterable[Sequence[str]], cap: int = 10000) -> Vocab:
    """Rank tokens by descending frequency, ties by first occurrence."""
    if cap < 5:
        raise CapTooSmall(f"cap must be at least 5, got {cap}")
    counts: Counter[str] = Counter()
    first: dict[str, int] = {}
    for seq in token_seqs:
        for tok in seq:
            counts[tok] += 1
            first.setdefault(tok, len(first))
    for tok in RESERVED_TOKENS:
        counts.pop(tok, None)
    ranked = sorted(counts, key=lambda t: (-counts[t], first[t]))
    return Vocab(list(RESERVED_TOKENS) + ranked[: cap - len(RESERVED_TOKENS)], cap)


def encode_sequence(vocab: Vocab, tokens: Sequence[str], max_len: int,
                    add_bos_eos: bool = False) -> list[int]:
    """Map tokens to ids and post-pad (or truncate) to exactly ``max_len``."""
    if max_len < (3 if add_bos_eos else 1):
        raise MaxLenTooSmall(f"max_len {max_len} too small")
    ids = [vocab.id(t) for t in tokens]
    if add_bos_eos:
        ids = [BOS] + ids[: max_len - 2] + [EOS]
    else:
        ids = ids[:max_len]
    return ids + [PAD] * (max_len - len(ids))


def decode_sequence(vocab: Vocab, ids: Iterable[int]) -> str:
    words = []
    for i in ids:
        i = int(i)
        tok = vocab.token(i)
        if i not in (PAD, BOS, EOS):
            words.append(tok)
    return " ".join(words)
