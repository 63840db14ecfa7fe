import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from xlift.embedding import EmbeddingMatrix, Vocabulary
from xlift.errors import EvaluationError, NotNormalizedError
from xlift.mapping import Dictionary, MappingModel
from xlift.retrieval import (BliReport, RetrievalResult, copying_baseline, csls_criterion,
                             csls_matrix, csls_score, evaluate_bli, evaluate_mapping, retrieve,
                             score_rows, similarity, top_indices)
from xlift.synth import make_rotation_instance, random_orthogonal


def unit_rows(rng, n, d):
    M = rng.standard_normal((n, d))
    return M / np.linalg.norm(M, axis=1, keepdims=True)


def space(rows, prefix):
    n = len(rows)
    return EmbeddingMatrix(Vocabulary(tuple(f"{prefix}{i}" for i in range(n)), tuple(range(n, 0, -1))),
                           rows, True)


def test_two_point_instance():
    E = np.eye(2)
    s = csls_score(E[0], E, k=1, sources=E)
    assert s.tolist() == [0.0, -2.0]
    assert int(np.argmax(s)) == 0


def test_identical_targets_give_equal_scores():
    Y = np.tile([0.6, 0.8], (4, 1))
    s = csls_score(np.array([1.0, 0.0]), Y, k=4)
    assert np.all(s == s[0])


def test_csls_rejects_unnormalized():
    with pytest.raises(NotNormalizedError):
        csls_score(np.array([2.0, 0.0]), np.eye(2), k=1)


def test_csls_k_range():
    with pytest.raises(ValueError):
        csls_score(np.array([1.0, 0.0]), np.eye(2), k=3)


def test_similarity_matches_double_loop_bits():
    rng = np.random.default_rng(5)
    Q, B = rng.standard_normal((7, 13)), rng.standard_normal((9, 13))
    S = similarity(Q, B)
    for i in range(7):
        for j in range(9):
            assert S[i, j] == oracles.dot(Q[i], B[j])


def test_csls_matches_bruteforce_random_10():
    rng = np.random.default_rng(0)
    X, Y = unit_rows(rng, 10, 6), unit_rows(rng, 10, 6)
    got = csls_matrix(X, X, Y, k=3)
    want = np.array(oracles.csls_bruteforce(X, X, Y, 3))
    assert np.max(np.abs(got - want)) <= 1e-10


def test_retrieve_matches_bruteforce_ranking():
    rng = np.random.default_rng(1)
    X, Y = space(unit_rows(rng, 20, 5), "s"), space(unit_rows(rng, 20, 5), "t")
    res = retrieve(None, X, Y, list(X.vocab.tokens), "csls", top_n=5, k=4)
    S = oracles.csls_bruteforce(X.rows, X.rows, Y.rows, 4)
    for i, r in enumerate(res):
        assert r.top(5) == [f"t{j}" for j in oracles.rank_bruteforce(S[i], 5)]
    res = retrieve(None, X, Y, list(X.vocab.tokens), "nn", top_n=5)
    for i, r in enumerate(res):
        cos = [oracles.dot(X.rows[i], y) for y in Y.rows]
        assert r.top(5) == [f"t{j}" for j in oracles.rank_bruteforce(cos, 5)]


def test_identity_spaces_retrieve_themselves():
    rng = np.random.default_rng(2)
    X = space(unit_rows(rng, 30, 8), "w")
    for method in ("nn", "csls"):
        res = retrieve(None, X, X, list(X.vocab.tokens), method, top_n=1)
        assert all(r.top(1) == [r.source] for r in res)


def test_true_rotation_gives_perfect_accuracy():
    X, Y, gold, W = make_rotation_instance(300, 20, 0.0, 3)
    rep = evaluate_mapping(MappingModel(W), X, Y, gold)
    assert rep.acc(1) == 1.0


def test_oov_query_is_flagged():
    rng = np.random.default_rng(3)
    X = space(unit_rows(rng, 5, 3), "w")
    res = retrieve(None, X, X, ["w1", "zzz"], "nn", 2)
    assert not res[0].oov and res[1].oov and res[1].candidates == ()


def test_tie_break_lowest_index():
    row = np.array([0.5, 0.9, 0.9, 0.1, 0.9])
    assert top_indices(row, 2).tolist() == [1, 2]
    assert top_indices(row, 5).tolist() == [1, 2, 4, 0, 3]


def test_result_scores_must_not_increase():
    with pytest.raises(ValueError):
        RetrievalResult("a", (("x", 0.1), ("y", 0.2)), "nn")


def results(spec):
    return [RetrievalResult(s, tuple((t, -i) for i, t in enumerate(c)), "nn") for s, c in spec.items()]


def test_bli_all_correct():
    gold = Dictionary((("a", "x"), ("b", "y")))
    rep = evaluate_bli(results({"a": ["x"], "b": ["y"]}), gold)
    assert rep.acc(1) == 1.0 and rep.n_evaluated == 2


def test_bli_set_semantics():
    gold = Dictionary((("a", "x1"), ("a", "x2")))
    rep = evaluate_bli(results({"a": ["x2", "q"]}), gold)
    assert rep.acc(1) == 1.0 and rep.n_evaluated == 1


def test_bli_hand_instance():
    # 2 of 4 right at rank 1, a third one at rank 3
    gold = Dictionary((("a", "x"), ("b", "y"), ("c", "z"), ("d", "w")))
    res = results({"a": ["x", "p", "q", "r", "s"], "b": ["y", "p", "q", "r", "s"],
                   "c": ["p", "q", "z", "r", "s"], "d": ["p", "q", "r", "s", "t"]})
    rep = evaluate_bli(res, gold, (1, 5))
    assert rep.accuracy_at == {1: 0.5, 5: 0.75}


def test_bli_oov_excluded():
    gold = Dictionary((("a", "x"), ("b", "y")))
    res = [RetrievalResult("a", (("x", 1.0),), "nn"), RetrievalResult("b", (), "nn", oov=True)]
    rep = evaluate_bli(res, gold)
    assert rep.acc(1) == 1.0 and rep.oov_count == 1 and rep.n_evaluated == 1


def test_bli_errors():
    with pytest.raises(EvaluationError):
        evaluate_bli([], Dictionary())
    with pytest.raises(EvaluationError):
        evaluate_bli([RetrievalResult("a", (), "nn", oov=True)], Dictionary((("a", "x"),)))


def test_bli_report_monotone():
    with pytest.raises(ValueError):
        BliReport({1: 0.6, 5: 0.5}, 10)


def test_bli_record_fields():
    rep = BliReport({1: 0.25, 5: 0.5}, 4, 1, "csls(10)")
    rec = json.loads(rep.to_json(pair="en-fr", src_domain="wiki", tgt_domain="un", config={"seed": 1}))
    assert rec == {"pair": "en-fr", "src_domain": "wiki", "tgt_domain": "un", "method": "csls(10)",
                   "acc@1": 0.25, "acc@5": 0.5, "oov": 1, "n": 4, "config": {"seed": 1}}


def test_copying_baseline():
    ident = Dictionary((("a", "a"), ("b", "b")))
    assert copying_baseline(ident).acc(1) == 1.0
    assert copying_baseline(Dictionary((("a", "x"), ("b", "y")))).acc(1) == 0.0
    hand = Dictionary((("paris", "paris"), ("chat", "cat"), ("bus", "bus"), ("bus", "autobus"),
                       ("eau", "water")))
    assert copying_baseline(hand).acc(1) == 0.5
    with pytest.raises(EvaluationError):
        copying_baseline(Dictionary())


def test_criterion_prefers_true_map():
    X, Y, _, W = make_rotation_instance(400, 20, 0.0, 4)
    good = csls_criterion(MappingModel(W), X, Y, 200)
    bad = csls_criterion(MappingModel(random_orthogonal(20, np.random.default_rng(9))), X, Y, 200)
    assert good > bad


def test_criterion_identity_bruteforce():
    rng = np.random.default_rng(6)
    X = space(unit_rows(rng, 15, 4), "w")
    S = oracles.csls_bruteforce(X.rows, X.rows, X.rows, 10)
    want = sum(max(r) for r in S) / 15
    assert csls_criterion(None, X, X, 15) == pytest.approx(want, abs=1e-12)


def test_criterion_invariant_to_target_permutation():
    X, Y, _, W = make_rotation_instance(200, 10, 0.05, 5)
    perm = np.random.default_rng(0).permutation(len(Y))
    Yp = EmbeddingMatrix(Vocabulary(tuple(Y.vocab.tokens[i] for i in perm), Y.vocab.counts), Y.rows[perm], True)
    a = csls_criterion(MappingModel(W), X, Y, 100)
    b = csls_criterion(MappingModel(W), X, Yp, 100)
    assert a == pytest.approx(b, abs=1e-12)


def test_criterion_takes_no_dictionary():
    import inspect
    params = inspect.signature(csls_criterion).parameters
    assert not any("gold" in p or "dict" in p for p in params)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 50), st.integers(1, 50), st.integers(2, 50), st.integers(1, 12),
       st.integers(0, 2**31))
def test_csls_equals_bruteforce_exactly(n, m, d, k, seed):
    rng = np.random.default_rng(seed)
    X, Y = unit_rows(rng, n, d), unit_rows(rng, m, d)
    k = min(k, n, m)
    got = csls_matrix(X, X, Y, k)
    assert np.array_equal(got, np.array(oracles.csls_bruteforce(X, X, Y, k)))
    S = score_rows(None, space(X, "s"), space(Y, "t"), range(n), "nn")
    assert np.array_equal(S, np.array([[oracles.dot(x, y) for y in Y] for x in X]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=8))
def test_accuracy_monotone_in_cutoff(ranks):
    gold = Dictionary(tuple((f"s{i}", f"g{i}") for i in range(len(ranks))))
    res = []
    for i, r in enumerate(ranks):
        cands = [f"x{j}" for j in range(7)]
        if r < 7:
            cands[r] = f"g{i}"
        res.append(RetrievalResult(f"s{i}", tuple((c, -j) for j, c in enumerate(cands)), "nn"))
    rep = evaluate_bli(res, gold, (1, 3, 5, 7))
    vals = [rep.acc(c) for c in (1, 3, 5, 7)]
    assert vals == sorted(vals)
