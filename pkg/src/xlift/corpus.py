"""Corpus loading, tokenization, sampling and document segmentation.

A corpus is a sequence of tokenized lines tagged with a language and a
domain.  Tokenization is deliberately simple: lowercase, isolate every
character that is neither a word character nor whitespace, split on
whitespace.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCorpusError, FormatError, SegmentationPolicyError

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

DEFAULT_BLOCK_LINES = 20


def tokenize(line: str) -> list[str]:
    """Lowercase ``line`` and split it into word and punctuation tokens.

    >>> tokenize("The cat, sat.")
    ['the', 'cat', ',', 'sat', '.']
    """
    return _TOKEN_RE.findall(line.lower())


@dataclass(frozen=True)
class Corpus:
    lines: tuple[tuple[str, ...], ...]
    lang: str
    domain: str
    doc_bounds: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(tuple(l) for l in self.lines))
        for i, line in enumerate(self.lines):
            for tok in line:
                if not tok or any(ch.isspace() for ch in tok):
                    raise ValueError(f"invalid token {tok!r} on line {i}")
        if self.doc_bounds is not None:
            bounds = tuple(int(b) for b in self.doc_bounds)
            _check_bounds(bounds, len(self.lines))
            object.__setattr__(self, "doc_bounds", bounds)

    def __len__(self):
        return len(self.lines)

    def token_count(self) -> int:
        return sum(len(l) for l in self.lines)

    def counts(self) -> Counter:
        c = Counter()
        for line in self.lines:
            c.update(line)
        return c

    def text(self) -> str:
        return "".join(" ".join(line) + "\n" for line in self.lines)


@dataclass(frozen=True)
class DocumentSet:
    """Bag-of-words documents cut from one corpus."""

    docs: tuple[Counter, ...]
    source_corpus: tuple[str, str]
    policy: str = "native"
    n: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "docs", tuple(self.docs))
        object.__setattr__(self, "n", len(self.docs))
        if self.n < 1:
            raise EmptyCorpusError("document set is empty")
        for i, d in enumerate(self.docs):
            if sum(d.values()) == 0:
                raise ValueError(f"document {i} is empty")

    @classmethod
    def from_token_lists(cls, docs: Iterable[Sequence[str]], lang="und", domain="und"):
        return cls(tuple(Counter(d) for d in docs), (lang, domain), "explicit")


def _check_bounds(bounds: Sequence[int], n_lines: int):
    if not bounds or bounds[0] != 0:
        raise FormatError("document bounds must start with 0")
    for a, b in zip(bounds, bounds[1:]):
        if b <= a:
            raise FormatError("document bounds must be strictly increasing")
    if bounds[-1] >= n_lines:
        raise FormatError(f"document bound {bounds[-1]} outside corpus of {n_lines} lines")


def load_doc_bounds(path) -> tuple[int, ...]:
    rows = [r.strip() for r in Path(path).read_text(encoding="utf-8").splitlines()]
    try:
        return tuple(int(r) for r in rows if r)
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer document bound") from exc


def load_corpus(path, lang: str, domain: str, bounds_path=None) -> Corpus:
    """Read a UTF-8 file with one sentence per line.

    Line numbering is kept intact (blank lines become empty token
    sequences) so that an optional boundary sidecar stays valid.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [tokenize(l) for l in text.splitlines()]
    if not any(lines):
        raise EmptyCorpusError(f"{path}: no non-empty lines")
    bounds = load_doc_bounds(bounds_path) if bounds_path is not None else None
    return Corpus(tuple(lines), lang, domain, bounds)


def save_corpus(c: Corpus, path) -> None:
    Path(path).write_text(c.text(), encoding="utf-8")


def corpus_from_text(text: str, lang="und", domain="und") -> Corpus:
    return Corpus(tuple(tokenize(l) for l in text.splitlines()), lang, domain)


def sample_lines(c: Corpus, n: int, seed: int) -> Corpus:
    """Uniformly sample ``min(n, len(c))`` lines without replacement, keeping order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n >= len(c):
        return Corpus(c.lines, c.lang, c.domain)
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(c), size=n, replace=False))
    return Corpus(tuple(c.lines[i] for i in keep), c.lang, c.domain)


def concat_shuffle(a: Corpus, b: Corpus, seed: int) -> Corpus:
    """Concatenate two corpora and shuffle the lines (joint training input)."""
    lines = a.lines + b.lines
    order = np.random.default_rng(seed).permutation(len(lines))
    return Corpus(
        tuple(lines[i] for i in order),
        f"{a.lang}+{b.lang}",
        f"{a.domain}+{b.domain}",
    )


def parse_policy(policy) -> tuple[str, int | None]:
    """Parse ``"native"`` or ``"block:L"`` (``"block"`` alone means L=20)."""
    if isinstance(policy, tuple):
        kind, size = policy
    else:
        kind, _, size = str(policy).partition(":")
        size = int(size) if size else None
    if kind == "native":
        return "native", None
    if kind == "block":
        size = DEFAULT_BLOCK_LINES if size is None else int(size)
        if size < 1:
            raise SegmentationPolicyError("block size must be >= 1")
        return "block", size
    raise SegmentationPolicyError(f"unknown segmentation policy {policy!r}")


def segment_documents(c: Corpus, policy="block:20") -> DocumentSet:
    """Cut ``c`` into bag-of-words documents.

    ``native`` uses the corpus' document boundaries; ``block:L`` takes
    consecutive L-line blocks, the last one possibly shorter.  Documents
    without any token (runs of blank lines) are dropped.
    """
    kind, size = parse_policy(policy)
    if kind == "native":
        if c.doc_bounds is None:
            raise SegmentationPolicyError("native segmentation needs document boundaries")
        starts = list(c.doc_bounds)
    else:
        starts = list(range(0, len(c), size))
    ends = starts[1:] + [len(c)]
    docs = []
    for s, e in zip(starts, ends):
        bag = Counter()
        for line in c.lines[s:e]:
            bag.update(line)
        if bag:
            docs.append(bag)
    label = "native" if kind == "native" else f"block:{size}"
    return DocumentSet(tuple(docs), (c.lang, c.domain), label)
