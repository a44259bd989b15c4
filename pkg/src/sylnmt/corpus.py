"""Parallel Modern Bangla / Sylheti corpora: loading, validation, splitting."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .numcore import make_rng

HEADER = "bangla\tsylheti"


class CorpusError(Exception):
    pass


class FileMissing(CorpusError):
    pass


class NotUtf8(CorpusError):
    def __init__(self, line: int):
        super().__init__(f"line {line}: not valid UTF-8")
        self.line = line


class MalformedRow(CorpusError):
    def __init__(self, line: int, detail: str = "expected 2 tab-separated columns"):
        super().__init__(f"line {line}: {detail}")
        self.line = line


class EmptyCorpus(CorpusError):
    pass


class CorpusTooSmall(CorpusError):
    pass


class Direction(enum.Enum):
    SylhetiToBangla = "syl2bn"
    BanglaToSylheti = "bn2syl"


@dataclass(frozen=True)
class SentencePair:
    bangla: str
    sylheti: str
    line_no: int

    def source(self, direction: Direction) -> str:
        return self.sylheti if direction is Direction.SylhetiToBangla else self.bangla

    def target(self, direction: Direction) -> str:
        return self.bangla if direction is Direction.SylhetiToBangla else self.sylheti


@dataclass(frozen=True)
class ParallelCorpus:
    pairs: tuple[SentencePair, ...]
    source_path: str = ""
    direction: Direction = Direction.SylhetiToBangla

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    def sources(self) -> list[str]:
        return [p.source(self.direction) for p in self.pairs]

    def targets(self) -> list[str]:
        return [p.target(self.direction) for p in self.pairs]

    def with_pairs(self, pairs) -> "ParallelCorpus":
        return ParallelCorpus(tuple(pairs), self.source_path, self.direction)


@dataclass(frozen=True)
class SplitResult:
    train: ParallelCorpus
    validation: ParallelCorpus
    seed: int
    ratio: float


@dataclass(frozen=True)
class Finding:
    line_no: int
    kind: str  # "NonBengaliChar" | "Duplicate"
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]
    cleaned: ParallelCorpus

    def count(self, kind: str) -> int:
        return sum(f.kind == kind for f in self.findings)


def load_corpus(path, format: str = "TSV", direction: Direction = Direction.SylhetiToBangla
                ) -> ParallelCorpus:
    if format.upper() != "TSV":
        raise ValueError(f"unsupported corpus format {format!r}")
    path = Path(path)
    if not path.is_file():
        raise FileMissing(f"corpus file not found: {path}")
    raw_lines = path.read_bytes().split(b"\n")
    if raw_lines and raw_lines[-1] == b"":
        raw_lines.pop()
    pairs = []
    for line_no, raw in enumerate(raw_lines, start=1):
        try:
            line = raw.decode("utf-8").rstrip("\r")
        except UnicodeDecodeError:
            raise NotUtf8(line_no) from None
        if line_no == 1:
            if line.lstrip("\ufeff") != HEADER:
                raise MalformedRow(1, f"header must be {HEADER!r}")
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise MalformedRow(line_no)
        bangla, sylheti = cols[0].strip(), cols[1].strip()
        if not bangla or not sylheti:
            raise MalformedRow(line_no, "empty field")
        pairs.append(SentencePair(bangla, sylheti, line_no))
    if not pairs:
        raise EmptyCorpus(f"{path}: no data rows")
    return ParallelCorpus(tuple(pairs), str(path), direction)


def save_corpus(corpus: ParallelCorpus, path) -> None:
    lines = [HEADER] + [f"{p.bangla}\t{p.sylheti}" for p in corpus.pairs]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def table1_path() -> Path:
    """The five sample sentence pairs shipped with the package."""
    return Path(str(resources.files("sylnmt") / "data" / "table1.tsv"))


def is_bengali_char(ch: str) -> bool:
    return "\u0980" <= ch <= "\u09ff" or ch == " " or "0" <= ch <= "9"


def validate_corpus(corpus: ParallelCorpus, dedup: bool = True) -> ValidationReport:
    findings = []
    seen = set()
    kept = []
    for pair in corpus.pairs:
        for name, text in (("bangla", pair.bangla), ("sylheti", pair.sylheti)):
            for pos, ch in enumerate(text):
                if not is_bengali_char(ch):
                    findings.append(Finding(
                        pair.line_no, "NonBengaliChar",
                        f"{name}[{pos}] U+{ord(ch):04X} {ch!r}",
                    ))
        key = (pair.bangla, pair.sylheti)
        if key in seen:
            findings.append(Finding(pair.line_no, "Duplicate", f"repeats {key!r}"))
            if dedup:
                continue
        seen.add(key)
        kept.append(pair)
    return ValidationReport(tuple(findings), corpus.with_pairs(kept))


def split_corpus(corpus: ParallelCorpus, ratio: float = 0.8, seed: int = 0) -> SplitResult:
    """Seeded shuffle then prefix split: ``floor(ratio * N)`` pairs go to train."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    n = len(corpus)
    # 0.29 * 100 evaluates to 28.999999999999996; round before flooring
    n_train = math.floor(round(ratio * n, 9))
    if n_train == 0 or n_train == n:
        raise CorpusTooSmall(f"{n} pairs at ratio {ratio} leaves one side empty")
    order = make_rng(seed).permutation(n)
    shuffled = [corpus.pairs[i] for i in order]
    return SplitResult(
        corpus.with_pairs(shuffled[:n_train]),
        corpus.with_pairs(shuffled[n_train:]),
        seed,
        ratio,
    )


_CONSONANTS = "কগচজটডতদনপবমরলসশহ"
_VOWEL_SIGNS = ["", "া", "ি", "ী", "ু", "ে", "ো"]
# a handful of regular Sylheti sound shifts (k->kh, p->ph, s/sh->h, t->th)
_SHIFT = str.maketrans({"ক": "খ", "প": "ফ", "স": "হ", "শ": "হ", "ত": "থ"})


def synthetic_corpus(n: int, seed: int = 0, lexicon_size: int = 60,
                     min_words: int = 3, max_words: int = 7) -> ParallelCorpus:
    """Deterministic word-substitution corpus of ``n`` distinct pairs.

    Bangla sentences are drawn from a random pseudo-word lexicon; the Sylheti
    side applies fixed consonant shifts word by word, so every target token
    is a function of the aligned source token.
    """
    rng = make_rng(seed)
    words = []
    seen_words = set()
    while len(words) < lexicon_size:
        syll = rng.integers(2, 4)
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))]
                    + _VOWEL_SIGNS[rng.integers(len(_VOWEL_SIGNS))] for _ in range(syll))
        if w not in seen_words:
            seen_words.add(w)
            words.append(w)
    pairs, seen = [], set()
    while len(pairs) < n:
        k = int(rng.integers(min_words, max_words + 1))
        bangla = " ".join(words[i] for i in rng.integers(lexicon_size, size=k))
        if bangla in seen:
            continue
        seen.add(bangla)
        pairs.append(SentencePair(bangla, bangla.translate(_SHIFT), len(pairs) + 2))
    return ParallelCorpus(tuple(pairs), f"<synthetic n={n} seed={seed}>")
