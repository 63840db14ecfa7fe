"""Acceptance suite: one test per criterion, summarized as PASS/FAIL lines.

The rotation grid (criteria 6 and 9) and the three-condition corpus
experiment (criterion 5) are the slow parts, a few minutes each.
"""
import inspect
import json
import time
from collections import Counter

import numpy as np
import pytest

import oracles
from xlift import experiment
from xlift.alignment import AdversarialParams, procrustes
from xlift.corpus import Corpus, DocumentSet, concat_shuffle, sample_lines, segment_documents
from xlift.embedding import SgnsParams, build_vocab, save_embeddings, train_sgns
from xlift.experiment import (DEFAULT_EPOCHS, DEFAULT_REFINEMENTS, DEFAULT_SEEDS, ExperimentConfig,
                              CorpusSpec, Grid, comparison_table, evaluate_selection, median_accuracy,
                              run_grid, search_grid, train_spaces)
from xlift.mapping import Dictionary
from xlift.retrieval import (copying_baseline, csls_matrix, evaluate_mapping, map_rows, retrieve)
from xlift.stdm import stdm_score
from xlift.synth import (ConditionSpec, generate_topic_corpus, inject_noise, make_conditions,
                         make_rotation_instance, make_topic_language)
from xlift.wordsim import SimilarityDataset, score, spearman

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")


def detail(request, text):
    request.node.user_properties.append(("detail", text))


# ---------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_c1_procrustes_exactness(request):
    rng = np.random.default_rng(2024)
    t = time.perf_counter()
    worst, accs = 0.0, []
    for i in range(100):
        d = int(rng.integers(2, 51))
        n = int(rng.integers(d + 1, 2 * d + 40))
        X, Y, gold, R = make_rotation_instance(n, d, 0.0, seed=i)
        W = procrustes(X, Y, gold).W
        worst = max(worst, float(np.max(np.abs(W - R))))
        # exact images: plain nearest neighbour; CSLS can demote them on crowded low-d spheres
        accs.append(evaluate_mapping(procrustes(X, Y, gold), X, Y, gold, "nn").acc(1))
    dt = time.perf_counter() - t
    detail(request, f"max|W-R|={worst:.1e} min acc@1={min(accs)} time={dt:.1f}s")
    assert worst <= 1e-6 and min(accs) == 1.0 and dt < 10


@pytest.mark.criterion(2)
def test_c2_csls_oracle_equivalence(request):
    rng = np.random.default_rng(7)
    mismatches = 0
    for i in range(25):
        n, m, d = (int(x) for x in rng.integers(2, 51, 3))
        k = int(rng.integers(1, min(n, m) + 1))
        X, Y, _, _ = make_rotation_instance(max(n, m, d + 1), d, 0.3, seed=100 + i)
        Xr, Yr = X.rows[:n], Y.rows[:m]
        got = csls_matrix(Xr, Xr, Yr, k)
        want = np.array(oracles.csls_bruteforce(Xr, Xr, Yr, k))
        mismatches += int(not np.array_equal(got, want))
        # retrieval through the public entry point ranks like the oracle
        res = retrieve(None, X, Y, [X.vocab.tokens[0]], "csls", top_n=3, k=k)[0]
        full = oracles.csls_bruteforce(X.rows[:1], X.rows, Y.rows, k)[0]
        top = oracles.rank_bruteforce(full, 3)
        mismatches += int(res.candidates != tuple((Y.vocab.tokens[j], full[j]) for j in top))
    detail(request, f"{mismatches} mismatching instances of 25")
    assert mismatches == 0


def _bags(n, v, rng):
    return [Counter(f"w{j}" for j in rng.choice(v, rng.integers(1, 8))) for _ in range(n)]


@pytest.mark.criterion(3)
def test_c3_stdm_properties(request):
    rng = np.random.default_rng(3)
    lang = make_topic_language(seed=1)
    c0, _ = generate_topic_corpus(lang, 600, seed=2, topic_weights=(1, 0))
    c1, _ = generate_topic_corpus(lang, 600, seed=3, topic_weights=(0, 1))
    a, b = segment_documents(c0, "block:20"), segment_documents(c1, "block:20")
    self_err = abs(stdm_score(a, a).stdm - 1.0)
    sym_err = abs(stdm_score(a, b).stdm - stdm_score(b, a).stdm)

    lex0, lex1 = lang.lexicon(0), lang.lexicon(1)
    da = DocumentSet.from_token_lists([[t for t in l if t in lex0] for l in c0.lines if set(l) & lex0])
    db = DocumentSet.from_token_lists([[t for t in l if t in lex1] for l in c1.lines if set(l) & lex1])
    disjoint = stdm_score(da, db, r=200).stdm

    off = sorted(lex1)
    ladder = [stdm_score(a, segment_documents(inject_noise(c0, p, off, seed=6), "block:20")).stdm
              for p in (0.0, 0.25, 0.5, 0.75, 1.0)]
    monotone = all(x >= y for x, y in zip(ladder, ladder[1:]))

    from test_stdm import dense_pipeline
    from xlift.stdm import build_tfidf, truncated_svd
    oracle_err = 0.0
    for _ in range(20):
        n, m = (int(x) for x in rng.integers(2, 9, 2))
        bags = _bags(n + m, int(rng.integers(5, 40)), rng)
        A, B = DocumentSet(tuple(bags[:n]), ("x", "a")), DocumentSet(tuple(bags[n:]), ("x", "b"))
        M = build_tfidf(A, B)
        r = max(1, min(min(M.shape) - 1, 4))
        sv = truncated_svd(M, min(M.shape)).singular_values
        if r < len(sv) and abs(sv[r - 1] - sv[r]) < 1e-6:
            continue
        want = dense_pipeline([dict(x) for x in bags[:n]], [dict(x) for x in bags[n:]], r)
        oracle_err = max(oracle_err, abs(stdm_score(A, B, r).stdm - want))
    detail(request, f"self={self_err:.1e} sym={sym_err:.1e} disjoint={disjoint:.4f} "
                    f"ladder={[round(x, 3) for x in ladder]} oracle={oracle_err:.1e}")
    assert self_err <= 1e-9 and sym_err <= 1e-9 and disjoint <= 0.05 and monotone
    assert oracle_err <= 1e-8


@pytest.mark.criterion(4)
def test_c4_copying_baseline(request):
    words = [f"w{i}" for i in range(50)]
    ident = copying_baseline(Dictionary(tuple((w, w) for w in words))).acc(1)
    disjoint = copying_baseline(Dictionary(tuple((w, w.upper()) for w in words))).acc(1)
    hand = copying_baseline(Dictionary((("paris", "paris"), ("chat", "cat"), ("berlin", "berlin"),
                                        ("maison", "house")))).acc(1)
    # a word counts once, and is right if any of its translations is itself
    multi = copying_baseline(Dictionary((("bank", "banque"), ("bank", "bank"), ("rive", "shore")))).acc(1)
    detail(request, f"identity={ident} disjoint={disjoint} hand={hand} set-semantics={multi}")
    assert (ident, disjoint, hand, multi) == (1.0, 0.0, 0.5, 0.5)


# ---------------------------------------------------------------------------
# rotation grid shared by criteria 6 and 9

@pytest.fixture(scope="module")
def rotation_grid():
    X, Y, gold, _ = make_rotation_instance(2000, 50, 0.0, seed=0, decay=0.9, offset=1.0)
    t = time.perf_counter()
    report = search_grid(X, Y, Grid(DEFAULT_SEEDS, DEFAULT_REFINEMENTS, DEFAULT_EPOCHS),
                         AdversarialParams.desk(), workers=1)
    dt = time.perf_counter() - t
    return report, evaluate_selection(report, X, Y, gold, everything=True), dt


@pytest.mark.criterion(6)
def test_c6_adversarial_recovery(request, rotation_grid):
    report, all_bli, dt = rotation_grid
    per_seed = {}
    for s in DEFAULT_SEEDS:
        runs = [e for e in report.ok() if e.seed == s and e.refinement_iters == 5]
        best = max(runs, key=lambda e: e.criterion)
        per_seed[s] = (best.criterion, all_bli[(s, 5, best.epochs)].acc(1))
    # the winning seed is picked by the criterion, not by accuracy
    chosen = max(DEFAULT_SEEDS, key=lambda s: per_seed[s][0])
    acc = per_seed[chosen][1]
    detail(request, f"acc@1 per seed={ {s: a for s, (_, a) in per_seed.items()} } "
                    f"chosen seed={chosen} acc@1={acc} search time={dt:.0f}s")
    assert acc >= 0.95 and dt < 300


@pytest.mark.criterion(9)
def test_c9_selection_blindness(request, rotation_grid, monkeypatch):
    for fn in (search_grid, experiment._seed_job):
        assert not any("gold" in p or "dict" in p for p in inspect.signature(fn).parameters)
        names = fn.__code__.co_names + fn.__code__.co_varnames
        assert not any("gold" in n or "dictionary" in n or n == "evaluate_mapping" for n in names)
    # the grid runs with gold unavailable and still selects
    X, Y, _, _ = make_rotation_instance(300, 10, 0.0, seed=1, decay=0.9, offset=1.0)
    small = AdversarialParams.desk(disc_hidden=16, epoch_size=320, refine_max_rank=300)
    cfg = ExperimentConfig((CorpusSpec("s", embeddings="-"), CorpusSpec("t", embeddings="-")),
                           adversarial=small, grid=Grid((123, 456), (1,), (1,)))
    monkeypatch.setattr(experiment, "load_dictionary", lambda *a, **k: pytest.fail("gold was read"))
    assert run_grid(cfg, spaces=(X, Y)).report.selected is not None

    report, all_bli, _ = rotation_grid
    s = report.selected
    sel = all_bli[(s.seed, s.refinement_iters, s.epochs)].acc(1)
    med = median_accuracy(all_bli)
    detail(request, f"selected seed={s.seed} refine={s.refinement_iters} epochs={s.epochs} "
                    f"acc@1={sel} median={med}")
    assert sel >= med


# ---------------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_c5_domain_mismatch_and_joint_training(request):
    t = time.perf_counter()
    cond = make_conditions(ConditionSpec(n_lines=50_000, seed=0))
    p = SgnsParams.desk(epochs=20, min_count=3, lr=0.05)
    spaces = {"matched": train_spaces(cond.source, cond.matched, "separate", p),
              "mismatched": train_spaces(cond.source, cond.mismatched, "separate", p),
              "joint": train_spaces(cond.source, cond.mismatched, "joint", p)}
    gold = cond.gold
    for X, Y in spaces.values():
        gold = gold.filter(X.vocab, Y.vocab)
    grid = Grid(DEFAULT_SEEDS, DEFAULT_REFINEMENTS, DEFAULT_EPOCHS)
    acc, overall = {}, []
    for name, (X, Y) in spaces.items():
        rep = search_grid(X, Y, grid, AdversarialParams.desk(), workers=1)
        acc[name] = {s: evaluate_mapping(rep.best(seed=s).model, X, Y, gold).acc(1) for s in grid.seeds}
        overall.append((name, evaluate_mapping(rep.selected.model, X, Y, gold)))
    dt = time.perf_counter() - t
    ok = [s for s in grid.seeds
          if acc["joint"][s] - acc["mismatched"][s] >= 0.10 and acc["matched"][s] >= acc["mismatched"][s]]
    table = comparison_table(overall)
    print(table.to_tsv())
    per = " ".join(f"{s}:{acc['matched'][s]:.3f}/{acc['mismatched'][s]:.3f}/{acc['joint'][s]:.3f}"
                   for s in grid.seeds)
    detail(request, f"matched/mismatched/joint {per}; seeds passing={len(ok)}/4 "
                    f"gold={len(gold)} time={dt / 60:.1f}min")
    assert len(ok) >= 3 and dt < 1800


@pytest.mark.criterion(7)
def test_c7_word_similarity(request):
    def ds(golds):
        return SimilarityDataset(tuple((f"a{i}", "x", f"b{i}", "y", g) for i, g in enumerate(golds)))

    d = ds([0.0, 0.5, 1.5, 2.0, 3.5, 4.0])
    mono = score([-5.0, -1.0, 0.0, 0.2, 9.0, 10.0], d).spearman
    harm = score(list(d.gold), d).harmonic
    rng = np.random.default_rng(11)
    err = 0.0
    for _ in range(200):
        n = int(rng.integers(3, 30))
        g = list(rng.integers(0, 9, n) / 2)
        x = list(rng.integers(0, 5, n) / 4)
        if len(set(g)) < 2 or len(set(x)) < 2:
            continue
        err = max(err, abs(spearman(x, g) - oracles.spearman(x, g)))
    detail(request, f"spearman={mono} harmonic={harm} tie-oracle err={err:.1e}")
    assert mono == 1.0 and harm == 1.0 and err <= 1e-12


@pytest.mark.criterion(8)
def test_c8_determinism(request, tmp_path):
    lines = tuple(tuple(f"w{(i * 7 + j) % 23}" for j in range(6)) for i in range(300))
    c = Corpus(lines, "en", "d1")
    c2 = Corpus(lines[::-1], "fr", "d2")

    def serialize(run):
        return [run(i) for i in range(2)]

    outputs = {}
    outputs["sample_lines"] = serialize(lambda i: repr(sample_lines(c, 50, 123).lines))
    outputs["concat_shuffle"] = serialize(lambda i: repr(concat_shuffle(c, c2, 5).lines))

    def sgns(i):
        p = SgnsParams.desk(dim=10, epochs=2, workers=1, seed=3)
        path = tmp_path / f"e{i}.vec"
        save_embeddings(train_sgns(c, build_vocab(c), p), path)
        return path.read_bytes()
    outputs["sgns"] = serialize(sgns)

    da, db = segment_documents(c, "block:10"), segment_documents(c2, "block:10")
    outputs["stdm"] = serialize(lambda i: stdm_score(da, db, 5).to_json())

    X, Y, gold, _ = make_rotation_instance(300, 10, 0.05, seed=2, decay=0.9, offset=1.0)
    small = AdversarialParams.desk(disc_hidden=16, epoch_size=320, refine_max_rank=300)
    cfg = ExperimentConfig((CorpusSpec("s", embeddings="-"), CorpusSpec("t", embeddings="-")),
                           adversarial=small, grid=Grid((123, 456), (1, 3), (1, 2)))
    outputs["grid"] = serialize(lambda i: json.dumps(run_grid(cfg, (X, Y), gold, workers=1).record(),
                                                     sort_keys=True))
    outputs["bli"] = serialize(lambda i: evaluate_mapping(procrustes(X, Y, gold), X, Y, gold).to_json())
    mapped = map_rows(None, X)
    outputs["csls"] = serialize(lambda i: csls_matrix(mapped, mapped, Y.rows, 5).tobytes())
    d = SimilarityDataset(tuple((f"s{i}", "s", f"t{i}", "t", (i % 9) / 2) for i in range(40)))
    preds = [float(x) for x in np.cos(np.arange(40))]
    outputs["wordsim"] = serialize(lambda i: score(preds, d).to_json())
    differ = [k for k, (a, b) in outputs.items() if a != b]
    detail(request, f"{len(outputs)} operations rerun, differing: {differ or 'none'}")
    assert not differ
