"""Grid search with unsupervised model selection, and condition comparisons.

The selection stage (``search_grid``) sees only the two embedding spaces;
gold dictionaries enter afterwards, in ``evaluate_selection``.
"""
from __future__ import annotations

import json
import os
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from statistics import median
from typing import Sequence

import numpy as np

from .alignment import AdversarialParams, adversarial_checkpoints, refine_checkpoints
from .corpus import Corpus, concat_shuffle, load_corpus
from .embedding import (EmbeddingMatrix, SgnsParams, build_vocab, joint_split, load_embeddings,
                        normalize_rows, train_sgns)
from .errors import AlignmentError, ConfigError, XliftError
from .mapping import Dictionary, MappingModel, load_dictionary
from .retrieval import DEFAULT_K, BliReport, csls_criterion, evaluate_mapping

DEFAULT_SEEDS = (123, 456, 789, 321)
DEFAULT_REFINEMENTS = (1, 3, 5)
DEFAULT_EPOCHS = (1, 3, 5)


def worker_count(default: int = 1) -> int:
    """Parallel run cap from XLIFT_WORKERS."""
    raw = os.environ.get("XLIFT_WORKERS")
    if raw is None:
        return default
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"XLIFT_WORKERS must be an integer, got {raw!r}") from exc
    return max(1, n)


@dataclass(frozen=True)
class Grid:
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    refinements: tuple[int, ...] = DEFAULT_REFINEMENTS
    epochs: tuple[int, ...] = DEFAULT_EPOCHS

    def __post_init__(self):
        for name in ("seeds", "refinements", "epochs"):
            vals = tuple(int(v) for v in getattr(self, name))
            if not vals:
                raise ConfigError(f"grid list {name!r} is empty")
            object.__setattr__(self, name, vals)
        if min(self.refinements) < 1 or min(self.epochs) < 1:
            raise ConfigError("refinement and epoch counts must be >= 1")

    def __len__(self):
        return len(self.seeds) * len(self.refinements) * len(self.epochs)


@dataclass
class GridEntry:
    seed: int
    refinement_iters: int
    epochs: int
    criterion: float | None = None
    status: str = "ok"
    error: str = ""
    model: MappingModel | None = field(default=None, repr=False, compare=False)

    def key(self) -> dict:
        return {"seed": self.seed, "refinement_iters": self.refinement_iters, "epochs": self.epochs}

    def record(self) -> dict:
        return {**self.key(), "criterion": self.criterion, "status": self.status, "error": self.error}


def _seed_job(args):
    X, Y, seed, grid, adv, n_eval, k = args
    p = replace(adv, seed=seed, epochs=max(grid.epochs))
    out = []
    try:
        checkpoints = adversarial_checkpoints(X, Y, p, grid.epochs)
    except XliftError as exc:
        return [GridEntry(seed, r, e, None, "failed", str(exc))
                for e in grid.epochs for r in grid.refinements]
    for e in grid.epochs:
        try:
            refined = refine_checkpoints(checkpoints[e], X, Y, grid.refinements, k, adv.refine_max_rank)
        except XliftError as exc:
            out += [GridEntry(seed, r, e, None, "failed", str(exc)) for r in grid.refinements]
            continue
        for r in grid.refinements:
            m = refined[r]
            m = MappingModel(m.W, m.method, {**m.meta, "seed": seed, "epochs": e})
            out.append(GridEntry(seed, r, e, csls_criterion(m, X, Y, n_eval, k), model=m))
    return out


@dataclass
class GridReport:
    entries: list[GridEntry]
    grid: Grid
    selected: GridEntry

    def ok(self) -> list[GridEntry]:
        return [e for e in self.entries if e.status == "ok"]

    def best(self, seed: int | None = None) -> GridEntry:
        """Highest criterion (among one seed's runs if given), ties by the grid order."""
        pool = [e for e in self.ok() if seed is None or e.seed == seed]
        if not pool:
            raise AlignmentError("no successful configuration to select from")
        order = {s: i for i, s in enumerate(self.grid.seeds)}
        return min(pool, key=lambda e: (-e.criterion, order[e.seed], e.refinement_iters, e.epochs))

    def records(self) -> list[dict]:
        return [e.record() for e in self.entries]


def search_grid(X: EmbeddingMatrix, Y: EmbeddingMatrix, grid: Grid = Grid(),
                adv: AdversarialParams | None = None, n_eval: int | None = None,
                k: int = DEFAULT_K, workers: int = 1) -> GridReport:
    """Train every configuration and select the one with the highest CSLS criterion.

    One adversarial run per seed yields all epoch checkpoints and one
    refinement chain per checkpoint yields all refinement counts.  Failed
    runs are recorded and excluded from selection.
    """
    adv = adv or AdversarialParams.desk()
    if n_eval is None:
        n_eval = min(2000, len(X))
    jobs = [(X, Y, s, grid, adv, n_eval, k) for s in grid.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(workers, len(jobs))) as pool:
            parts = list(pool.map(_seed_job, jobs))
    else:
        parts = [_seed_job(j) for j in jobs]
    order = {(s, e, r): i for i, (s, e, r) in enumerate(
        (s, e, r) for s in grid.seeds for e in grid.epochs for r in grid.refinements)}
    entries = sorted((x for part in parts for x in part),
                     key=lambda x: order[(x.seed, x.epochs, x.refinement_iters)])
    report = GridReport(entries, grid, None)
    report.selected = report.best()
    return report


def evaluate_selection(report: GridReport, X, Y, gold: Dictionary, method="csls",
                       k: int = DEFAULT_K, cutoffs=(1, 5), everything=False) -> dict:
    """BliReport for the selected configuration (or for every run) after selection."""
    pool = report.ok() if everything else [report.selected]
    return {(e.seed, e.refinement_iters, e.epochs): evaluate_mapping(e.model, X, Y, gold, method, k, cutoffs)
            for e in pool}


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class CorpusSpec:
    lang: str
    domain: str = "und"
    path: str | None = None
    embeddings: str | None = None

    def __post_init__(self):
        if (self.path is None) == (self.embeddings is None):
            raise ConfigError("each corpus needs exactly one of 'path' or 'embeddings'")


@dataclass(frozen=True)
class ExperimentConfig:
    corpora: tuple[CorpusSpec, ...]
    mode: str = "separate"
    sgns: SgnsParams = field(default_factory=SgnsParams.desk)
    adversarial: AdversarialParams = field(default_factory=AdversarialParams.desk)
    grid: Grid = field(default_factory=Grid)
    method: str = "csls"
    k: int = DEFAULT_K
    n_eval: int | None = None
    gold: str | None = None
    wordsim: str | None = None
    output: str | None = None
    name: str = "experiment"

    def __post_init__(self):
        if self.mode not in ("separate", "joint"):
            raise ConfigError(f"mode must be 'separate' or 'joint', got {self.mode!r}")
        if len(self.corpora) != 2:
            raise ConfigError("an experiment needs exactly two corpora (source, target)")
        if self.mode == "joint" and any(c.path is None for c in self.corpora):
            raise ConfigError("joint mode trains from text; corpus paths are required")
        if self.method not in ("csls", "nn"):
            raise ConfigError(f"unknown retrieval method {self.method!r}")

    @property
    def pair(self) -> str:
        return f"{self.corpora[0].lang}-{self.corpora[1].lang}"

    def describe(self) -> dict:
        return {"name": self.name, "mode": self.mode, "method": self.method, "k": self.k,
                "sgns": asdict(self.sgns), "grid": asdict(self.grid)}


CONFIG_KEYS = {"corpora", "mode", "sgns", "adversarial", "grid", "method", "k", "n_eval",
               "gold", "wordsim", "output", "name"}


def config_from_dict(raw: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = Path(base_dir)

    def rel(p):
        return None if p is None else str(base / p)

    try:
        corpora = tuple(CorpusSpec(c["lang"], c.get("domain", "und"), rel(c.get("path")),
                                   rel(c.get("embeddings"))) for c in raw.get("corpora", ()))
        sgns = dict(raw.get("sgns") or {})
        if "subword" in sgns and sgns["subword"] is not None:
            sgns["subword"] = tuple(sgns["subword"])
        g = raw.get("grid") or {}
        grid = Grid(tuple(g.get("seeds", DEFAULT_SEEDS)), tuple(g.get("refinements", DEFAULT_REFINEMENTS)),
                    tuple(g.get("epochs", DEFAULT_EPOCHS)))
        return ExperimentConfig(
            corpora=corpora, mode=raw.get("mode", "separate"), sgns=SgnsParams.desk(**sgns),
            adversarial=AdversarialParams.desk(**(raw.get("adversarial") or {})), grid=grid,
            method=raw.get("method", "csls"), k=int(raw.get("k", DEFAULT_K)),
            n_eval=raw.get("n_eval"), gold=rel(raw.get("gold")), wordsim=rel(raw.get("wordsim")),
            output=rel(raw.get("output")), name=raw.get("name", "experiment"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    import yaml

    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return config_from_dict(raw, Path(path).parent)


# ---------------------------------------------------------------------------
# spaces

def train_spaces(a: Corpus, b: Corpus, mode: str, p: SgnsParams, seed: int | None = None):
    """Normalized source and target spaces, trained separately or jointly."""
    va, vb = build_vocab(a, p.min_count), build_vocab(b, p.min_count)
    if mode == "separate":
        X = train_sgns(a, va, p)
        Y = train_sgns(b, vb, replace(p, seed=p.seed + 1))
    else:
        both = concat_shuffle(a, b, p.seed if seed is None else seed)
        E = train_sgns(both, build_vocab(both, p.min_count), p)
        X, Y = joint_split(E, va, vb)
    return normalize_rows(X), normalize_rows(Y)


def prepare_spaces(cfg: ExperimentConfig):
    src, tgt = cfg.corpora
    if src.embeddings is not None and tgt.embeddings is not None:
        return normalize_rows(load_embeddings(src.embeddings)), normalize_rows(load_embeddings(tgt.embeddings))
    a = load_corpus(src.path, src.lang, src.domain)
    b = load_corpus(tgt.path, tgt.lang, tgt.domain)
    return train_spaces(a, b, cfg.mode, cfg.sgns)


@dataclass
class GridOutcome:
    report: GridReport
    bli: BliReport | None
    config: ExperimentConfig
    all_bli: dict = field(default_factory=dict)

    def record(self) -> dict:
        sel = self.report.selected
        rec = {"name": self.config.name, "pair": self.config.pair,
               "src_domain": self.config.corpora[0].domain, "tgt_domain": self.config.corpora[1].domain,
               "selected": sel.record(), "grid": self.report.records()}
        if self.bli is not None:
            rec["bli"] = self.bli.to_record(self.config.pair, self.config.corpora[0].domain,
                                            self.config.corpora[1].domain, {**sel.key(), "mode": self.config.mode})
        return rec


def run_grid(cfg: ExperimentConfig, spaces=None, gold: Dictionary | None = None,
             workers: int | None = None, evaluate_all: bool = False) -> GridOutcome:
    """Select a configuration by the CSLS criterion, then score it against gold.

    Gold is loaded only after ``search_grid`` has returned.
    """
    X, Y = spaces if spaces is not None else prepare_spaces(cfg)
    report = search_grid(X, Y, cfg.grid, cfg.adversarial, cfg.n_eval, cfg.k,
                         worker_count() if workers is None else workers)
    if gold is None and cfg.gold is not None:
        gold = load_dictionary(cfg.gold)
    bli = None
    all_bli = {}
    if gold is not None:
        all_bli = evaluate_selection(report, X, Y, gold, cfg.method, cfg.k, everything=evaluate_all)
        sel = report.selected
        bli = all_bli[(sel.seed, sel.refinement_iters, sel.epochs)]
    return GridOutcome(report, bli, cfg, all_bli)


# ---------------------------------------------------------------------------
# comparisons and reports

@dataclass
class ComparisonTable:
    rows: list[tuple[str, dict]]
    delta: dict
    cutoffs: tuple[int, ...] = (1, 5)

    def to_tsv(self) -> str:
        head = "condition\t" + "\t".join(f"acc@{c}" for c in self.cutoffs)
        lines = [head]
        for name, acc in self.rows:
            lines.append(name + "\t" + "\t".join(f"{100 * acc[c]:.1f}" for c in self.cutoffs))
        lines.append("delta\t" + "\t".join(f"{100 * self.delta[c]:+.1f}" for c in self.cutoffs))
        return "\n".join(lines) + "\n"


def comparison_table(results: Sequence[tuple[str, BliReport]], cutoffs=(1, 5)) -> ComparisonTable:
    """Rows in the given order; the delta row is last minus second-to-last."""
    if len(results) < 2:
        raise ValueError("a comparison needs at least two conditions")
    rows = [(name, {c: r.acc(c) for c in cutoffs}) for name, r in results]
    delta = {c: rows[-1][1][c] - rows[-2][1][c] for c in cutoffs}
    return ComparisonTable(rows, delta, tuple(cutoffs))


def run_comparison(cfgs: Sequence[ExperimentConfig], gold: Dictionary | None = None,
                   spaces: Sequence | None = None, workers: int | None = None):
    """Matched, mismatched, mismatched+joint (in this order) over one gold dictionary."""
    outcomes = []
    for i, cfg in enumerate(cfgs):
        sp = spaces[i] if spaces is not None else None
        outcomes.append(run_grid(cfg, sp, gold, workers))
    if any(o.bli is None for o in outcomes):
        raise ConfigError("every condition needs a gold dictionary")
    return comparison_table([(o.config.name, o.bli) for o in outcomes]), outcomes


class ReportWriter:
    """Append-only JSON-lines file; appends from several threads are serialized."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, default=_json_default) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def median_accuracy(all_bli: dict, c: int = 1) -> float:
    return median(r.acc(c) for r in all_bli.values())
