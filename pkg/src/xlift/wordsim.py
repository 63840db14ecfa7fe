"""Cross-lingual word similarity: cosine predictions scored against gold ratings."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .embedding import EmbeddingMatrix
from .errors import EvaluationError, FormatError
from .mapping import MappingModel

SCALE_MAX = 4.0
SCALE_STEP = 0.5


@dataclass(frozen=True)
class SimilarityDataset:
    """Word pairs (word_a, lang_a, word_b, lang_b, gold) rated on 0-4 in 0.5 steps."""

    pairs: tuple[tuple[str, str, str, str, float], ...]

    def __post_init__(self):
        pairs = tuple((a, la, b, lb, float(g)) for a, la, b, lb, g in self.pairs)
        for a, _, b, _, g in pairs:
            if not 0 <= g <= SCALE_MAX or (g / SCALE_STEP) != round(g / SCALE_STEP):
                raise ValueError(f"gold score {g} for ({a}, {b}) is off the 0-4 half-point scale")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self):
        return len(self.pairs)

    @property
    def gold(self) -> np.ndarray:
        return np.array([p[4] for p in self.pairs])


def load_dataset(path, lang_a: str, lang_b: str) -> SimilarityDataset:
    pairs = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{i + 1}: expected word_a<TAB>word_b<TAB>score")
        try:
            score = float(parts[2])
        except ValueError as exc:
            raise FormatError(f"{path}:{i + 1}: bad score {parts[2]!r}") from exc
        pairs.append((parts[0].strip(), lang_a, parts[1].strip(), lang_b, score))
    return SimilarityDataset(tuple(pairs))


def predict_pairs(emb_a: EmbeddingMatrix, emb_b: EmbeddingMatrix, ds: SimilarityDataset,
                  mapping: MappingModel | None = None) -> list[float | None]:
    """Cosine of (mapped) vector_a and vector_b per pair; None marks an OOV pair.

    Without a mapping both matrices must come from the same joint space.
    """
    if mapping is None and emb_a.vocab.tokens != emb_b.vocab.tokens:
        if any(a in emb_a and a in emb_b and not np.array_equal(emb_a[a], emb_b[a])
               for a in emb_a.vocab.tokens[:100]):
            raise ValueError("without a mapping both embeddings must share one space")
    preds: list[float | None] = []
    for a, _, b, _, _ in ds.pairs:
        if a not in emb_a or b not in emb_b:
            preds.append(None)
            continue
        va = emb_a[a]
        if mapping is not None:
            va = mapping.apply(va[None, :])[0]
        vb = emb_b[b]
        preds.append(float(np.dot(va, vb) / (np.linalg.norm(va) * np.linalg.norm(vb))))
    if all(p is None for p in preds):
        raise EvaluationError("every pair of the dataset is out of vocabulary")
    return preds


@dataclass(frozen=True)
class SimReport:
    pearson: float | None
    spearman: float | None
    harmonic: float | None
    n: int
    oov: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    if denom == 0:
        return None
    return float(np.clip(np.dot(dx, dy) / denom, -1.0, 1.0))


def spearman(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Pearson correlation of the average ranks."""
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def harmonic_mean(pr: float | None, sp: float | None) -> float | None:
    if pr is None or sp is None or pr + sp <= 0:
        return None
    return 2 * pr * sp / (pr + sp)


def score(predictions: Sequence[float | None], ds: SimilarityDataset) -> SimReport:
    """Pearson, Spearman and their harmonic mean over in-vocabulary pairs.

    Undefined correlations (fewer than two pairs, or a constant side) come
    back as None.
    """
    if len(predictions) != len(ds):
        raise ValueError("one prediction per dataset pair is required")
    keep = [i for i, p in enumerate(predictions) if p is not None]
    pred = [predictions[i] for i in keep]
    gold = [ds.pairs[i][4] for i in keep]
    oov = len(predictions) - len(keep)
    if len(keep) < 2:
        return SimReport(None, None, None, len(keep), oov)
    pr, sr = pearson(pred, gold), spearman(pred, gold)
    return SimReport(pr, sr, harmonic_mean(pr, sr), len(keep), oov)
