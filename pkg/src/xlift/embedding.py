"""Vocabularies, skip-gram negative sampling training and embedding I/O."""
from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _sgns
from .corpus import Corpus
from .errors import EmptyVocabularyError, FormatError, XliftError, ZeroVectorError

NORM_TOL = 1e-9


@dataclass(frozen=True)
class Vocabulary:
    """Tokens sorted by descending count, ties broken lexicographically."""

    tokens: tuple[str, ...]
    counts: tuple[int, ...]
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.tokens) != len(self.counts):
            raise ValueError("tokens and counts differ in length")
        index = {t: i for i, t in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")
        object.__setattr__(self, "index", index)

    @classmethod
    def from_counts(cls, counts: dict, min_count: int = 1) -> "Vocabulary":
        kept = sorted(((t, c) for t, c in counts.items() if c >= min_count),
                      key=lambda tc: (-tc[1], tc[0]))
        if not kept:
            raise EmptyVocabularyError(f"no token reaches min_count={min_count}")
        return cls(tuple(t for t, _ in kept), tuple(c for _, c in kept))

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def count(self, token) -> int:
        i = self.index.get(token)
        return 0 if i is None else self.counts[i]


def build_vocab(c: Corpus | Iterable[Corpus], min_count: int = 1) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    corpora = [c] if isinstance(c, Corpus) else list(c)
    counts = Counter()
    for corpus in corpora:
        counts.update(corpus.counts())
    return Vocabulary.from_counts(counts, min_count)


@dataclass(frozen=True)
class EmbeddingMatrix:
    vocab: Vocabulary
    rows: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(self.vocab):
            raise ValueError(f"expected {len(self.vocab)} rows, got shape {rows.shape}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if self.normalized:
            norms = np.linalg.norm(rows, axis=1)
            if np.max(np.abs(norms - 1.0)) > NORM_TOL:
                raise ValueError("rows are flagged normalized but are not unit length")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]

    def __getitem__(self, token) -> np.ndarray:
        return self.rows[self.vocab.index[token]]

    def __contains__(self, token):
        return token in self.vocab.index

    def subset(self, tokens: Sequence[str]) -> "EmbeddingMatrix":
        """Rows for ``tokens`` (in the given order) with their counts."""
        idx = [self.vocab.index[t] for t in tokens]
        vocab = Vocabulary(tuple(tokens), tuple(self.vocab.counts[i] for i in idx))
        return EmbeddingMatrix(vocab, self.rows[idx], self.normalized)


def normalize_rows(e: EmbeddingMatrix) -> EmbeddingMatrix:
    norms = np.linalg.norm(e.rows, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroVectorError(e.vocab.tokens[zero[0]])
    rows = e.rows / norms[:, None]
    return EmbeddingMatrix(e.vocab, rows, True)


@dataclass(frozen=True)
class SgnsParams:
    dim: int = 300
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    min_count: int = 5
    subsample_t: float = 1e-4
    subword: tuple[int, int, int] | None = None
    seed: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.dim < 2 or self.window < 1 or self.negatives < 1 or self.epochs < 1:
            raise ValueError("dim >= 2, window >= 1, negatives >= 1, epochs >= 1 required")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.subword is not None:
            minn, maxn, bucket = self.subword
            if not (1 <= minn <= maxn) or bucket < 1:
                raise ValueError("subword needs 1 <= minn <= maxn and bucket >= 1")

    @classmethod
    def desk(cls, **overrides) -> "SgnsParams":
        """Small-corpus defaults: d=50, keep every token."""
        return replace(cls(dim=50, min_count=1), **overrides)


SUBWORD_DEFAULT = (3, 6, 200_000)


def fnv1a(text: str) -> int:
    """32-bit FNV-1a hash of the UTF-8 bytes of ``text``."""
    h = 2166136261
    for b in text.encode("utf-8"):
        h ^= b
        h = (h * 16777619) & 0xFFFFFFFF
    return h


def char_ngrams(word: str, minn: int, maxn: int) -> list[str]:
    """Character n-grams of ``<word>``, excluding the bracketed word itself."""
    w = f"<{word}>"
    grams = []
    for n in range(minn, maxn + 1):
        for i in range(len(w) - n + 1):
            g = w[i:i + n]
            if g != w:
                grams.append(g)
    return grams


def unigram_cdf(counts: Sequence[int], power: float = 0.75) -> np.ndarray:
    p = np.asarray(counts, dtype=np.float64) ** power
    cdf = np.cumsum(p / p.sum())
    cdf[-1] = 1.0
    return cdf


def draw_negatives(counts: Sequence[int], n: int, seed: int) -> np.ndarray:
    """Draw ``n`` indices from the unigram^0.75 distribution, as the trainer does."""
    return _sgns.draw_many(unigram_cdf(counts), n, seed)


def _keep_probabilities(counts: np.ndarray, t: float) -> np.ndarray:
    if t <= 0:
        return np.ones(len(counts))
    f = counts / counts.sum()
    return np.minimum(1.0, (np.sqrt(f / t) + 1.0) * t / f)


def _components(vocab: Vocabulary, subword):
    n = len(vocab)
    if subword is None:
        return np.arange(n + 1, dtype=np.int64), np.arange(n, dtype=np.int64), n
    minn, maxn, bucket = subword
    offsets = [0]
    ids = []
    for i, tok in enumerate(vocab.tokens):
        ids.append(i)
        ids.extend(n + fnv1a(g) % bucket for g in char_ngrams(tok, minn, maxn))
        offsets.append(len(ids))
    return np.asarray(offsets, dtype=np.int64), np.asarray(ids, dtype=np.int64), n + bucket


def _encode(c: Corpus, vocab: Vocabulary):
    idx = vocab.index
    flat = []
    starts = [0]
    for line in c.lines:
        flat.extend(idx[t] for t in line if t in idx)
        starts.append(len(flat))
    return np.asarray(flat, dtype=np.int64), np.asarray(starts, dtype=np.int64)


def train_sgns(c: Corpus, v: Vocabulary, p: SgnsParams) -> EmbeddingMatrix:
    """Train skip-gram with negative sampling and return the input vectors.

    For a center word w and a context word c inside a randomly shrunk
    window, the update maximizes log s(u_w . v_c) + sum_k log s(-u_w . v_nk)
    with negatives drawn from unigram^(3/4).  Frequent words are
    subsampled, the learning rate decays linearly to zero.  With
    ``p.subword`` set, a word's input vector is the mean of its own row and
    its hashed character n-gram rows.

    With ``workers == 1`` the result is bit-identical for identical inputs.
    """
    tokens, starts = _encode(c, v)
    if tokens.size == 0:
        raise XliftError("corpus has no token from the vocabulary")
    counts = np.asarray(v.counts, dtype=np.float64)
    keep = _keep_probabilities(counts, p.subsample_t)
    cdf = unigram_cdf(v.counts)
    comp_off, comp_ids, n_rows = _components(v, p.subword)

    rng = np.random.default_rng(p.seed)
    w_in = (rng.random((n_rows, p.dim)) - 0.5) / p.dim
    w_out = np.zeros((len(v), p.dim))

    n_lines = len(starts) - 1
    workers = min(p.workers, max(1, n_lines))
    cuts = np.linspace(0, n_lines, workers + 1).astype(np.int64)
    args = (tokens, starts)
    tail = (keep, cdf, comp_off, comp_ids, w_in, w_out, p.window, p.negatives, p.epochs, p.lr)
    if workers == 1:
        _sgns.train_shard(*args, 0, n_lines, *tail, p.seed)
    else:
        threads = [
            threading.Thread(
                target=_sgns.train_shard,
                args=(*args, int(cuts[i]), int(cuts[i + 1]), *tail, p.seed * 1_000_003 + i),
            )
            for i in range(workers)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    vectors = _sgns.compose_vectors(w_in, comp_off, comp_ids, len(v))
    return EmbeddingMatrix(v, vectors)


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def save_embeddings(e: EmbeddingMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(e)} {e.dim}\n")
        for tok, row in zip(e.vocab.tokens, e.rows):
            fh.write(tok + " " + " ".join(_fmt(x) for x in row) + "\n")


def load_embeddings(path) -> EmbeddingMatrix:
    """Read the word-vector text format.

    Rows are assumed to be in descending frequency order; counts are
    synthesized from the row position so that the most-frequent-first
    convention survives a round trip.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FormatError(f"{path}: malformed header")
        try:
            n, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise FormatError(f"{path}: malformed header") from exc
        tokens = []
        rows = np.empty((n, dim))
        for i, line in enumerate(fh):
            parts = line.rstrip("\n").split(" ")
            if parts == [""]:
                continue
            if len(tokens) >= n:
                raise FormatError(f"{path}: more rows than the header's {n}")
            if len(parts) != dim + 1:
                raise FormatError(f"{path}: row {i + 1} has {len(parts) - 1} values, expected {dim}")
            try:
                rows[len(tokens)] = [float(x) for x in parts[1:]]
            except ValueError as exc:
                raise FormatError(f"{path}: non-numeric value in row {i + 1}") from exc
            tokens.append(parts[0])
    if len(tokens) != n:
        raise FormatError(f"{path}: header says {n} rows, found {len(tokens)}")
    if len(set(tokens)) != n:
        raise FormatError(f"{path}: duplicate token")
    vocab = Vocabulary(tuple(tokens), tuple(range(n, 0, -1)))
    return EmbeddingMatrix(vocab, rows)


def joint_split(e: EmbeddingMatrix, src_vocab: Vocabulary, tgt_vocab: Vocabulary):
    """Cut a jointly trained space into the source-side and target-side views.

    A token present in both vocabularies maps to the same row, so it gets
    the exact same vector on both sides.
    """
    def view(v):
        idx = [e.vocab.index[t] for t in v.tokens]
        return EmbeddingMatrix(v, e.rows[idx], e.normalized)

    return view(src_vocab), view(tgt_vocab)
