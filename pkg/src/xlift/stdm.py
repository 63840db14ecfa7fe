"""Source-target domain mismatch (STDM) between two same-language corpora.

Both corpora are cut into documents, TF-IDF weighted over their
concatenation, and projected with a truncated SVD.  With U_bar = U sqrt(S)
split into the rows of corpus 1 and corpus 2, the score is

    STDM = (s12 + s21) / (s11 + s22)

where s_AB is the mean dot product between rows of U_bar_A and U_bar_B.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

from .corpus import DocumentSet
from .errors import DocumentError, RankError

DEFAULT_RANK = 100
# dense LAPACK up to this many matrix entries, ARPACK beyond
_DENSE_LIMIT = 20_000_000


@dataclass(frozen=True)
class TfidfMatrix:
    rows: sp.csr_matrix
    n: int
    m: int
    vocab: tuple[str, ...]

    @property
    def shape(self):
        return self.rows.shape


@dataclass(frozen=True)
class TopicMatrix:
    u_bar: np.ndarray
    v_bar: np.ndarray
    singular_values: np.ndarray
    n: int
    m: int

    @property
    def rank(self) -> int:
        return self.u_bar.shape[1]

    @property
    def first(self) -> np.ndarray:
        return self.u_bar[:self.n]

    @property
    def second(self) -> np.ndarray:
        return self.u_bar[self.n:]

    def reconstruct(self) -> np.ndarray:
        return self.u_bar @ self.v_bar


@dataclass(frozen=True)
class StdmReport:
    s11: float
    s12: float
    s21: float
    s22: float
    stdm: float
    rank: int
    segmentation: str = ""
    similarity: str = "dot"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def summary(self) -> str:
        return (f"STDM={self.stdm:.4f} (s11={self.s11:.4g} s22={self.s22:.4g} "
                f"s12={self.s12:.4g}; rank {self.rank}, {self.segmentation})")


def build_tfidf(a: DocumentSet, b: DocumentSet) -> TfidfMatrix:
    """TF-IDF rows for the documents of ``a`` followed by those of ``b``.

    Entry = raw count * (ln((1 + N) / (1 + df)) + 1), rows L2-normalized.
    """
    docs = list(a.docs) + list(b.docs)
    for i, d in enumerate(docs):
        if sum(d.values()) == 0:
            raise DocumentError(i)
    vocab = tuple(sorted({t for d in docs for t in d}))
    col = {t: j for j, t in enumerate(vocab)}
    indptr, indices, data = [0], [], []
    for d in docs:
        for t in sorted(d, key=col.__getitem__):
            indices.append(col[t])
            data.append(float(d[t]))
        indptr.append(len(indices))
    tf = sp.csr_matrix((data, indices, indptr), shape=(len(docs), len(vocab)))
    N = len(docs)
    df = np.bincount(tf.indices, minlength=len(vocab))
    idf = np.log((1.0 + N) / (1.0 + df)) + 1.0
    w = tf.multiply(idf[None, :]).tocsr()
    norms = np.sqrt(np.asarray(w.multiply(w).sum(axis=1)).ravel())
    w = sp.diags(1.0 / norms) @ w
    return TfidfMatrix(w.tocsr(), a.n, b.n, vocab)


def truncated_svd(M: TfidfMatrix, r: int) -> TopicMatrix:
    """Rank-r SVD, returned as U_bar = U_r sqrt(S_r) and V_bar = sqrt(S_r) V_r.

    Each right singular vector is signed so its largest-magnitude entry is
    positive.
    """
    A = M.rows
    n_rows, n_cols = A.shape
    if not 1 <= r <= min(n_rows, n_cols):
        raise RankError(f"rank {r} outside [1, {min(n_rows, n_cols)}]")
    if n_rows * n_cols <= _DENSE_LIMIT or r >= min(n_rows, n_cols) - 1:
        U, s, Vt = np.linalg.svd(A.toarray() if sp.issparse(A) else A, full_matrices=False)
        U, s, Vt = U[:, :r], s[:r], Vt[:r]
    else:
        v0 = np.full(min(n_rows, n_cols), 1.0 / math.sqrt(min(n_rows, n_cols)))
        U, s, Vt = svds(A, k=r, v0=v0, tol=0)
        order = np.argsort(-s, kind="stable")
        U, s, Vt = U[:, order], s[order], Vt[order]
    pivot = np.argmax(np.abs(Vt), axis=1)
    signs = np.sign(Vt[np.arange(r), pivot])
    signs[signs == 0] = 1.0
    U = U * signs
    Vt = Vt * signs[:, None]
    root = np.sqrt(s)
    return TopicMatrix(U * root, root[:, None] * Vt, s, M.n, M.m)


def _unit_rows(u):
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return u / norms


def cross_similarity(ua: np.ndarray, ub: np.ndarray, cosine: bool = False) -> float:
    """Mean over all (i, j) of ua[i] . ub[j]; equals mean(ua) . mean(ub)."""
    if ua.shape[1] != ub.shape[1]:
        raise RankError("topic matrices differ in rank")
    if cosine:
        ua, ub = _unit_rows(ua), _unit_rows(ub)
    return float(np.dot(ua.mean(axis=0), ub.mean(axis=0)))


def stdm_from_topics(T: TopicMatrix, cosine: bool = False, segmentation: str = "") -> StdmReport:
    A, B = T.first, T.second
    s11 = cross_similarity(A, A, cosine)
    s12 = cross_similarity(A, B, cosine)
    s21 = cross_similarity(B, A, cosine)
    s22 = cross_similarity(B, B, cosine)
    return StdmReport(s11, s12, s21, s22, (s12 + s21) / (s11 + s22), T.rank,
                      segmentation, "cosine" if cosine else "dot")


def stdm_score(a: DocumentSet, b: DocumentSet, r: int = DEFAULT_RANK,
               cosine: bool = False) -> StdmReport:
    """STDM of two document sets; ``r`` is clamped to the matrix size."""
    M = build_tfidf(a, b)
    rank = max(1, min(r, *M.shape))
    seg = a.policy if a.policy == b.policy else f"{a.policy}|{b.policy}"
    return stdm_from_topics(truncated_svd(M, rank), cosine, seg)
