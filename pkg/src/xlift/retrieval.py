"""Nearest-neighbour and CSLS retrieval, BLI evaluation, model selection.

CSLS between a mapped source vector x and a target vector y is

    2 cos(x, y) - r_T(x) - r_S(y)

with r_T(x) the mean cosine of x to its k nearest targets and r_S(y) the
mean cosine of y to its k nearest mapped sources.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .embedding import EmbeddingMatrix
from .errors import EvaluationError, NotNormalizedError
from .mapping import Dictionary, MappingModel

DEFAULT_K = 10
UNIT_TOL = 1e-6
_CHUNK = 2048


def _check_unit(M: np.ndarray, what: str):
    norms = np.sqrt(np.einsum("ij,ij->i", M, M))
    if norms.size and np.max(np.abs(norms - 1.0)) > UNIT_TOL:
        raise NotNormalizedError(f"{what} rows must be unit-normalized")


@njit(cache=True)
def _dot_kernel(Q, BT):
    n, d = Q.shape
    m = BT.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        row = out[i]
        for k in range(d):
            q = Q[i, k]
            b = BT[k]
            for j in range(m):
                row[j] += q * b[j]
    return out


def similarity(Q: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Q @ B.T with every entry summed strictly left to right over the features.

    BLAS blocks and reorders the reduction, so its results depend on the
    shapes involved; a fixed order makes scores reproducible and
    comparable bit for bit with a plain double loop.
    """
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    BT = np.ascontiguousarray(np.asarray(B, dtype=np.float64).T)
    if Q.shape[1] != BT.shape[0]:
        raise ValueError(f"dimension mismatch: {Q.shape[1]} vs {BT.shape[0]}")
    return _dot_kernel(Q, BT)


def topk_mean(S: np.ndarray, k: int) -> np.ndarray:
    """Mean of the k largest entries of each row.

    The k values are summed from largest to smallest, one column at a time,
    which fixes the floating-point order of the reduction.
    """
    k = min(k, S.shape[1])
    top = -np.partition(-S, k - 1, axis=1)[:, :k]
    top = -np.sort(-top, axis=1)
    acc = top[:, 0].copy()
    for j in range(1, k):
        acc += top[:, j]
    return acc / k


def neighborhood_mean(Q: np.ndarray, B: np.ndarray, k: int) -> np.ndarray:
    """r(q): mean similarity of each row of Q to its k most similar rows of B."""
    out = np.empty(Q.shape[0])
    for s in range(0, Q.shape[0], _CHUNK):
        out[s:s + _CHUNK] = topk_mean(similarity(Q[s:s + _CHUNK], B), k)
    return out


def map_rows(model: MappingModel | None, X: EmbeddingMatrix) -> np.ndarray:
    """Apply ``model`` to the rows of X and renormalize them to unit length."""
    if model is None:
        return X.rows
    rows = model.apply(X.rows)
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def csls_matrix(Q: np.ndarray, sources: np.ndarray, Y: np.ndarray, k: int = DEFAULT_K,
                r_src: np.ndarray | None = None) -> np.ndarray:
    """CSLS scores of the query rows Q (mapped sources) against every row of Y.

    ``sources`` is the full mapped source set used for r_S; ``r_src`` may
    pass precomputed r_S values.
    """
    _check_unit(Q, "query")
    _check_unit(Y, "target")
    if r_src is None:
        _check_unit(sources, "source")
        r_src = neighborhood_mean(Y, sources, k)
    r_tgt = neighborhood_mean(Q, Y, k)
    return 2 * similarity(Q, Y) - r_tgt[:, None] - r_src[None, :]


def csls_score(x: np.ndarray, Y: EmbeddingMatrix | np.ndarray, k: int = DEFAULT_K,
               sources: np.ndarray | None = None) -> np.ndarray:
    """CSLS of one mapped source vector against every target.

    ``sources`` are the mapped source vectors that define r_S; by default
    the query alone.
    """
    Yr = Y.rows if isinstance(Y, EmbeddingMatrix) else np.asarray(Y)
    x = np.asarray(x, dtype=np.float64)[None, :]
    src = x if sources is None else np.asarray(sources)
    if not 1 <= k <= Yr.shape[0]:
        raise ValueError("k must be between 1 and the number of targets")
    return csls_matrix(x, src, Yr, k)[0]


@dataclass(frozen=True)
class RetrievalResult:
    source: str
    candidates: tuple[tuple[str, float], ...]
    method: str
    oov: bool = False

    def __post_init__(self):
        scores = [s for _, s in self.candidates]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise ValueError("candidate scores must be non-increasing")

    def top(self, n: int) -> list[str]:
        return [t for t, _ in self.candidates[:n]]


def top_indices(row: np.ndarray, n: int) -> np.ndarray:
    """Indices of the n best scores, ties going to the lower index."""
    if n < row.size:
        kth = np.partition(-row, n - 1)[n - 1]
        cand = np.flatnonzero(-row <= kth)
    else:
        cand = np.arange(row.size)
    order = np.lexsort((cand, -row[cand]))
    return cand[order[:n]]


def method_label(method: str, k: int) -> str:
    return "nn" if method == "nn" else f"csls({k})"


def score_rows(model, X: EmbeddingMatrix, Y: EmbeddingMatrix, rows: Sequence[int],
               method: str = "csls", k: int = DEFAULT_K) -> np.ndarray:
    Xm = map_rows(model, X)
    Q = Xm[np.asarray(rows, dtype=np.int64)]
    if method == "nn":
        _check_unit(Y.rows, "target")
        return similarity(Q, Y.rows)
    if method == "csls":
        return csls_matrix(Q, Xm, Y.rows, k)
    raise ValueError(f"unknown retrieval method {method!r}")


def retrieve(model: MappingModel | None, X: EmbeddingMatrix, Y: EmbeddingMatrix,
             queries: Sequence[str], method: str = "csls", top_n: int = 5,
             k: int = DEFAULT_K) -> list[RetrievalResult]:
    """Rank target words for each query; OOV queries get an empty, flagged result."""
    label = method_label(method, k)
    known = [q for q in dict.fromkeys(queries) if q in X.vocab]
    row_of = {q: X.vocab.index[q] for q in known}
    scores = {}
    if known:
        S = score_rows(model, X, Y, [row_of[q] for q in known], method, k)
        for q, row in zip(known, S):
            idx = top_indices(row, top_n)
            scores[q] = tuple((Y.vocab.tokens[j], float(row[j])) for j in idx)
    return [
        RetrievalResult(q, scores[q], label) if q in scores
        else RetrievalResult(q, (), label, oov=True)
        for q in queries
    ]


@dataclass(frozen=True)
class BliReport:
    accuracy_at: dict
    n_evaluated: int
    oov_count: int = 0
    method: str = ""

    def __post_init__(self):
        cut = sorted(self.accuracy_at)
        for a, b in zip(cut, cut[1:]):
            if self.accuracy_at[a] > self.accuracy_at[b]:
                raise ValueError("accuracy must not decrease with the cutoff")

    def acc(self, c: int = 1) -> float:
        return self.accuracy_at[c]

    def to_record(self, pair="", src_domain="", tgt_domain="", config=None) -> dict:
        rec = {"pair": pair, "src_domain": src_domain, "tgt_domain": tgt_domain,
               "method": self.method}
        for c in sorted(self.accuracy_at):
            rec[f"acc@{c}"] = self.accuracy_at[c]
        rec["oov"] = self.oov_count
        rec["n"] = self.n_evaluated
        rec["config"] = config or {}
        return rec

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_record(**kwargs), sort_keys=True)


def evaluate_bli(results: Sequence[RetrievalResult], gold: Dictionary,
                 cutoffs=(1, 5), target_vocab=None) -> BliReport:
    """Accuracy@c over the unique gold source words.

    A source word counts as correct at c when any of its top-c candidates is
    among its gold translations.  Sources missing from the source space, or
    whose translations are all missing from ``target_vocab``, are counted as
    OOV and left out of the denominator.
    """
    if len(gold) == 0:
        raise EvaluationError("gold dictionary is empty")
    by_source = {r.source: r for r in results}
    hits = {c: 0 for c in cutoffs}
    n = oov = 0
    method = ""
    for src, tgts in gold.translations().items():
        if target_vocab is not None:
            tgts = {t for t in tgts if t in target_vocab}
        res = by_source.get(src)
        if res is None:
            raise EvaluationError(f"no retrieval result for gold source {src!r}")
        method = res.method
        if res.oov or not tgts:
            oov += 1
            continue
        n += 1
        for c in cutoffs:
            if tgts.intersection(res.top(c)):
                hits[c] += 1
    if n == 0:
        raise EvaluationError("no evaluable source word")
    return BliReport({c: hits[c] / n for c in cutoffs}, n, oov, method)


def evaluate_mapping(model, X: EmbeddingMatrix, Y: EmbeddingMatrix, gold: Dictionary,
                     method="csls", k=DEFAULT_K, cutoffs=(1, 5)) -> BliReport:
    results = retrieve(model, X, Y, gold.sources(), method, max(cutoffs), k)
    return evaluate_bli(results, gold, cutoffs, target_vocab=Y.vocab)


def copying_baseline(gold: Dictionary, cutoffs=(1, 5)) -> BliReport:
    """Predict every source word as its own translation."""
    if len(gold) == 0:
        raise EvaluationError("gold dictionary is empty")
    trans = gold.translations()
    acc = sum(1 for s, t in trans.items() if s in t) / len(trans)
    return BliReport({c: acc for c in cutoffs}, len(trans), 0, "copy")


def csls_criterion(model: MappingModel | None, X: EmbeddingMatrix, Y: EmbeddingMatrix,
                   n_eval: int | None = None, k: int = DEFAULT_K) -> float:
    """Unsupervised selection score: mean top-1 CSLS over the most frequent sources.

    Takes no dictionary on purpose.
    """
    if n_eval is None:
        n_eval = min(10_000, len(X))
    if not 1 <= n_eval <= len(X):
        raise ValueError(f"n_eval must be in [1, {len(X)}]")
    S = score_rows(model, X, Y, range(n_eval), "csls", k)
    return float(np.mean(S.max(axis=1)))
