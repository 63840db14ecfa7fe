"""Bilingual dictionaries and linear mapping models."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import FormatError


@dataclass(frozen=True)
class Dictionary:
    """Ordered (source, target) pairs without duplicates; many-to-many allowed."""

    pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        seen = set()
        out = []
        for s, t in self.pairs:
            if (s, t) not in seen:
                seen.add((s, t))
                out.append((s, t))
        object.__setattr__(self, "pairs", tuple(out))

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def sources(self) -> list[str]:
        return list(dict.fromkeys(s for s, _ in self.pairs))

    def translations(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for s, t in self.pairs:
            out.setdefault(s, set()).add(t)
        return out

    def filter(self, src_vocab=None, tgt_vocab=None) -> "Dictionary":
        return Dictionary(tuple(
            (s, t) for s, t in self.pairs
            if (src_vocab is None or s in src_vocab) and (tgt_vocab is None or t in tgt_vocab)
        ))


def load_dictionary(path) -> Dictionary:
    pairs = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise FormatError(f"{path}:{i + 1}: expected two whitespace-separated words")
        pairs.append((parts[0], parts[1]))
    return Dictionary(tuple(pairs))


def save_dictionary(d: Dictionary, path) -> None:
    Path(path).write_text("".join(f"{s} {t}\n" for s, t in d.pairs), encoding="utf-8")


@dataclass(frozen=True)
class MappingModel:
    """Linear map ``y ~ W x`` from the source space to the target space."""

    W: np.ndarray
    method: str = "identity"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"W must be square, got {W.shape}")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @classmethod
    def identity(cls, dim: int) -> "MappingModel":
        return cls(np.eye(dim), "identity")

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    def apply(self, rows: np.ndarray) -> np.ndarray:
        """Map row vectors (one per row)."""
        return rows @ self.W.T

    def orthogonality_error(self) -> float:
        return float(np.max(np.abs(self.W.T @ self.W - np.eye(self.dim))))

    def to_json(self) -> str:
        return json.dumps({"method": self.method, "meta": self.meta,
                           "W": self.W.tolist()}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MappingModel":
        obj = json.loads(text)
        return cls(np.asarray(obj["W"]), obj.get("method", "identity"), obj.get("meta", {}))


def save_mapping(m: MappingModel, path) -> None:
    Path(path).write_text(m.to_json() + "\n", encoding="utf-8")


def load_mapping(path) -> MappingModel:
    try:
        return MappingModel.from_json(Path(path).read_text(encoding="utf-8"))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: not a mapping file") from exc


def dictionary_from_pairs(pairs: Iterable[tuple[str, str]]) -> Dictionary:
    return Dictionary(tuple(pairs))
