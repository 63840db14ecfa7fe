"""Synthetic instances with known ground truth.

* cipher languages: a token-wise bijection of a corpus, with anchor tokens
  (digits, punctuation, chosen words) left as shared strings;
* topic corpora and lexicon-driven domain splits;
* rotated point clouds with the true rotation as oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import Corpus
from .embedding import EmbeddingMatrix, Vocabulary
from .errors import CipherError, DomainSplitError
from .mapping import Dictionary

ANCHOR_CLASSES = ("digits", "punct", "all")


def _is_digit_token(t: str) -> bool:
    return t.isdigit()


def _is_punct_token(t: str) -> bool:
    return not any(ch.isalnum() or ch == "_" for ch in t)


@dataclass(frozen=True)
class CipherSpec:
    """How to cipher a vocabulary.

    ``anchor_classes`` may hold "digits", "punct" or "all"; ``anchor_tokens``
    lists extra words kept verbatim.  Ciphered words become
    ``prefix + str(i)`` with i from a seeded permutation.
    """

    seed: int = 0
    anchor_classes: frozenset = frozenset({"digits", "punct"})
    anchor_tokens: frozenset = frozenset()
    prefix: str = "q"

    def __post_init__(self):
        object.__setattr__(self, "anchor_classes", frozenset(self.anchor_classes))
        object.__setattr__(self, "anchor_tokens", frozenset(self.anchor_tokens))
        bad = self.anchor_classes - set(ANCHOR_CLASSES)
        if bad:
            raise ValueError(f"unknown anchor classes {sorted(bad)}")
        if not self.prefix or any(ch.isspace() for ch in self.prefix):
            raise ValueError("prefix must be a non-empty token")

    def is_anchor(self, t: str) -> bool:
        if "all" in self.anchor_classes or t in self.anchor_tokens:
            return True
        if "digits" in self.anchor_classes and _is_digit_token(t):
            return True
        return "punct" in self.anchor_classes and _is_punct_token(t)


def cipher_mapping(tokens: Sequence[str], spec: CipherSpec) -> dict[str, str]:
    """Bijection over ``tokens``: anchors map to themselves, the rest to fresh strings."""
    tokens = sorted(set(tokens))
    plain = [t for t in tokens if not spec.is_anchor(t)]
    codes = np.random.default_rng(spec.seed).permutation(len(plain)) + 1
    mapping = {t: t for t in tokens if spec.is_anchor(t)}
    for t, c in zip(plain, codes):
        mapping[t] = f"{spec.prefix}{c}"
    ciphered = {mapping[t] for t in plain}
    clash = ciphered.intersection(tokens)
    if clash:
        raise CipherError(f"cipher strings collide with source tokens: {sorted(clash)[:5]}")
    return mapping


def apply_cipher(c: Corpus, mapping: dict[str, str], lang: str | None = None) -> Corpus:
    try:
        lines = tuple(tuple(mapping[t] for t in line) for line in c.lines)
    except KeyError as exc:
        raise CipherError(f"token {exc.args[0]!r} has no cipher entry") from exc
    return Corpus(lines, lang or f"{c.lang}~", c.domain, c.doc_bounds)


def make_cipher_language(c: Corpus, spec: CipherSpec, vocabulary: Sequence[str] | None = None,
                         lang: str | None = None) -> tuple[Corpus, Dictionary]:
    """Cipher ``c`` token by token and return the exact gold dictionary.

    ``vocabulary`` fixes the bijection's domain; pass the vocabulary of a
    larger corpus to cipher several of its parts consistently.  Gold pairs
    are ordered by descending frequency in ``c``.
    """
    counts = c.counts()
    mapping = cipher_mapping(vocabulary if vocabulary is not None else counts, spec)
    out = apply_cipher(c, mapping, lang)
    order = sorted(counts, key=lambda t: (-counts[t], t))
    return out, Dictionary(tuple((t, mapping[t]) for t in order))


def make_domain_split(c: Corpus, lexicons: tuple[set, set], purity: float = 1.0,
                      seed: int = 0, names=("d1", "d2")) -> tuple[Corpus, Corpus]:
    """Assign each line to the domain whose lexicon it overlaps most.

    A line follows that rule with probability ``purity`` and otherwise
    goes to a random side; overlap ties also go to a random side.
    """
    lex1, lex2 = (set(x) for x in lexicons)
    if lex1 & lex2:
        raise ValueError("topic lexicons must be disjoint")
    if not 0.5 < purity <= 1:
        raise ValueError("purity must be in (0.5, 1]")
    rng = np.random.default_rng(seed)
    coin = rng.random(len(c))
    side = rng.integers(0, 2, len(c))
    out = ([], [])
    for i, line in enumerate(c.lines):
        h1 = sum(t in lex1 for t in line)
        h2 = sum(t in lex2 for t in line)
        if coin[i] < purity and h1 != h2:
            out[0 if h1 > h2 else 1].append(line)
        else:
            out[side[i]].append(line)
    for name, lines in zip(names, out):
        if not lines:
            raise DomainSplitError(f"domain {name} received no lines")
    return (Corpus(tuple(out[0]), c.lang, names[0]),
            Corpus(tuple(out[1]), c.lang, names[1]))


def inject_noise(c: Corpus, p: float, off_topic: Sequence[str], seed: int = 0) -> Corpus:
    """Replace each token with probability ``p`` by a uniform draw from ``off_topic``."""
    if not 0 <= p <= 1:
        raise ValueError("p must be in [0, 1]")
    off = list(off_topic)
    rng = np.random.default_rng(seed)
    lines = []
    for line in c.lines:
        hit = rng.random(len(line)) < p
        pick = rng.integers(0, len(off), len(line))
        lines.append(tuple(off[pick[j]] if hit[j] else t for j, t in enumerate(line)))
    return Corpus(tuple(lines), c.lang, f"{c.domain}+noise{p:g}", c.doc_bounds)


class RotationInstance(NamedTuple):
    X: EmbeddingMatrix
    Y: EmbeddingMatrix
    dictionary: Dictionary
    W: np.ndarray


def random_orthogonal(d: int, rng) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def make_rotation_instance(n: int, d: int, noise: float = 0.0, seed: int = 0,
                           decay: float = 1.0, offset: float = 0.0) -> RotationInstance:
    """X: n unit vectors, Y = normalize(X W^T + noise), dictionary s_i -> t_i.

    With the defaults the points are isotropic.  ``decay`` < 1 scales axis j
    by decay**j and ``offset`` shifts every axis away from the origin; an
    adversarial aligner needs such structure, since an isotropic cloud
    looks the same under every rotation.
    """
    if not n > d >= 2:
        raise ValueError("need n > d >= 2")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    scales = decay ** np.arange(d)
    signs = rng.choice([-1.0, 1.0], d)
    Z = (rng.standard_normal((n, d)) + offset * signs) * scales
    X = Z / np.linalg.norm(Z, axis=1, keepdims=True)
    W = random_orthogonal(d, rng)
    Y = X @ W.T
    if noise > 0:
        Y = Y + noise * rng.standard_normal(Y.shape)
    Y = Y / np.linalg.norm(Y, axis=1, keepdims=True)
    ranks = tuple(range(n, 0, -1))
    vs = Vocabulary(tuple(f"s{i}" for i in range(n)), ranks)
    vt = Vocabulary(tuple(f"t{i}" for i in range(n)), ranks)
    gold = Dictionary(tuple((f"s{i}", f"t{i}") for i in range(n)))
    return RotationInstance(EmbeddingMatrix(vs, X, True), EmbeddingMatrix(vt, Y, True), gold, W)


# ---------------------------------------------------------------------------
# topic corpus generator

_ONSETS = ("b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t",
           "v", "w", "z", "br", "cr", "dr", "fl", "gr", "pl", "pr", "sk", "sl", "st", "tr")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ea", "ou")
_CODAS = ("", "", "", "n", "r", "s", "l", "m", "k", "t")


def make_words(n: int, rng, taken: set | None = None) -> list[str]:
    """``n`` distinct pronounceable lowercase words."""
    taken = set() if taken is None else taken
    out = []
    while len(out) < n:
        syl = rng.integers(2, 4)
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    + _CODAS[rng.integers(len(_CODAS))] for _ in range(syl))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


@dataclass(frozen=True)
class TopicLanguage:
    """Word inventory of the generator, grouped by role."""

    function: tuple[str, ...]
    general: tuple[str, ...]
    topics: tuple[tuple[tuple[str, ...], ...], ...]
    names: tuple[str, ...]
    numbers: tuple[str, ...]
    punct: tuple[str, ...] = (".", ",", ";")
    meta: dict = field(default_factory=dict)

    def lexicon(self, topic: int) -> set[str]:
        return {w for cluster in self.topics[topic] for w in cluster}

    def anchors(self) -> set[str]:
        return set(self.names) | set(self.numbers) | set(self.punct)


def make_topic_language(seed: int = 0, n_topics: int = 2, clusters: int = 12,
                        cluster_size: int = 40, n_general: int = 400, n_function: int = 30,
                        n_names: int = 40, n_numbers: int = 30) -> TopicLanguage:
    rng = np.random.default_rng(seed)
    taken: set = set()
    function = make_words(n_function, rng, taken)
    general = make_words(n_general, rng, taken)
    topics = tuple(tuple(tuple(make_words(cluster_size, rng, taken)) for _ in range(clusters))
                   for _ in range(n_topics))
    names = make_words(n_names, rng, taken)
    numbers = sorted({str(x) for x in rng.integers(0, 3000, 4 * n_numbers)}, key=int)[:n_numbers]
    return TopicLanguage(tuple(function), tuple(general), topics, tuple(names), tuple(numbers),
                         meta={"seed": seed})


def _zipf(n: int, rng, a: float = 1.0) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** a
    w = w[rng.permutation(n)]
    return w / w.sum()


def generate_topic_corpus(lang: TopicLanguage, n_lines: int, seed: int = 0,
                          topic_weights: Sequence[float] | None = None,
                          general_rate: float = 0.35, lang_tag: str = "src",
                          domain: str = "mixed") -> tuple[Corpus, np.ndarray]:
    """Lines from a small generative grammar; returns the corpus and per-line topic ids.

    Each line picks a topic and one of its word clusters, then fills a
    template of function words, content words (cluster words, or general
    words with probability ``general_rate``), optional names and numbers,
    and closing punctuation.  The parameters of the generator (Zipf
    frequencies, function-word bigrams) depend only on ``lang``, so two
    calls with different seeds sample the same language.
    """
    prng = np.random.default_rng(lang.meta.get("seed", 0) + 7919)
    n_topics = len(lang.topics)
    n_clusters = len(lang.topics[0])
    cl_size = len(lang.topics[0][0])
    cluster_p = [_zipf(n_clusters, prng, 0.5) for _ in range(n_topics)]
    word_p = _zipf(cl_size, prng)
    gen_p = _zipf(len(lang.general), prng)
    fun_p = _zipf(len(lang.function), prng, 1.2)
    name_p = _zipf(len(lang.names), prng)
    num_p = _zipf(len(lang.numbers), prng)
    # each cluster prefers a few function words, giving syntax-like contexts
    fun_pref = [[prng.choice(len(lang.function), 3, replace=False, p=fun_p)
                 for _ in range(n_clusters)] for _ in range(n_topics)]
    # general words are split into cluster-affine groups
    gen_group = prng.integers(0, n_clusters, len(lang.general))

    tw = np.full(n_topics, 1.0 / n_topics) if topic_weights is None else np.asarray(topic_weights, float)
    tw = tw / tw.sum()
    rng = np.random.default_rng(seed)
    topics = rng.choice(n_topics, n_lines, p=tw)
    lines = []
    for t in topics:
        k = rng.choice(n_clusters, p=cluster_p[t])
        cluster = lang.topics[t][k]
        pref = fun_pref[t][k]
        gmask = gen_group == k
        gp = gen_p * np.where(gmask, 4.0, 1.0)
        gp /= gp.sum()
        out = []
        for _ in range(rng.integers(1, 4)):
            if rng.random() < 0.7:
                out.append(lang.function[pref[rng.integers(3)]])
            else:
                out.append(lang.function[rng.choice(len(lang.function), p=fun_p)])
            for _ in range(rng.integers(1, 3)):
                if rng.random() < general_rate:
                    out.append(lang.general[rng.choice(len(lang.general), p=gp)])
                else:
                    out.append(cluster[rng.choice(cl_size, p=word_p)])
            r = rng.random()
            if r < 0.15:
                out.append(lang.names[rng.choice(len(lang.names), p=name_p)])
            elif r < 0.25:
                out.append(lang.numbers[rng.choice(len(lang.numbers), p=num_p)])
            if rng.random() < 0.3:
                out.append(",")
        out.append("." if rng.random() < 0.85 else ";")
        lines.append(tuple(out))
    return Corpus(tuple(lines), lang_tag, domain), topics


# ---------------------------------------------------------------------------
# latent-space language for the domain-mismatch experiment

@dataclass(frozen=True)
class LatentLanguage:
    """Words with per-domain latent vectors and log-frequency biases.

    A line draws a point z in the k-dim latent space and samples its tokens
    with probability proportional to exp(bias[w] + beta * z.v[w]), so words
    with close vectors share contexts.  Domains differ in two ways: each
    boosts its own topic lexicon and suppresses the other's, and a fraction
    of content words change sense (get a fresh vector) in the second domain.
    """

    words: tuple[str, ...]
    vectors: np.ndarray          # (n_domains, n_words, k)
    bias: np.ndarray             # (n_domains, n_words)
    anchors: frozenset
    beta: float
    lexicons: tuple[frozenset, frozenset] = (frozenset(), frozenset())
    shifted: frozenset = frozenset()

    @property
    def k(self) -> int:
        return self.vectors.shape[2]


def _centers(n, k, rng):
    # skewed, sign-asymmetric coordinates; a Gaussian cloud would leave an
    # adversarial aligner nothing to lock onto
    return rng.exponential(1.0, (n, k)) * np.sign(rng.standard_normal(k))


def _scaled(B, decay):
    V = B * decay ** np.arange(B.shape[1])
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def make_latent_language(n_words: int = 600, k: int = 6, decay: float = 0.7, n_anchors: int = 150,
                         lexicon_frac: float = 0.3, topic_gain: float = 2.0,
                         sense_shift: float = 0.3, beta: float = 30.0, clusters: int = 0,
                         spread: float = 0.5, layout_shift: float = 0.0,
                         seed: int = 0) -> LatentLanguage:
    """Anchors are numbers, punctuation and name-like words; the rest are content words.

    With clusters > 0 words sit around shared cluster centres. layout_shift
    moves the centres in the second domain (0 keeps them, 1 draws new ones)
    while every word keeps its cluster and its offset from the centre.
    """
    if not 0 <= lexicon_frac <= 0.5:
        raise ValueError("lexicon_frac must be in [0, 0.5]")
    if not 0 <= sense_shift <= 1:
        raise ValueError("sense_shift must be in [0, 1]")
    if not 0 <= layout_shift <= 1:
        raise ValueError("layout_shift must be in [0, 1]")
    punct = (".", ",", ";", ":", "!", "?")
    n_num = n_anchors // 3
    n_names = n_anchors - n_num - len(punct)
    if n_names < 0 or n_anchors >= n_words:
        raise ValueError("n_anchors out of range")
    rng = np.random.default_rng(seed)
    taken: set = set()
    names = make_words(n_names, rng, taken)
    anchors = [str(i) for i in range(n_num)] + list(punct) + names
    words = anchors + make_words(n_words - len(anchors), rng, taken)

    if clusters:
        C = _centers(clusters, k, rng)
        member = rng.integers(0, clusters, n_words)
        E = spread * rng.standard_normal((n_words, k))
        C2 = (1 - layout_shift) * C + layout_shift * _centers(clusters, k, rng)
        V, V2 = _scaled(C[member] + E, decay), _scaled(C2[member] + E, decay)
    else:
        V = _scaled(_centers(n_words, k, rng), decay)
        V2 = V.copy()
    bias = -np.log(rng.permutation(n_words) + 1.0)
    content = rng.permutation(np.arange(len(anchors), n_words))
    m = int(lexicon_frac * len(content))
    lex1, lex2 = content[:m], content[m:2 * m]
    topic = np.zeros(n_words)
    topic[lex1], topic[lex2] = 1.0, -1.0
    shifted = rng.permutation(np.arange(len(anchors), n_words))[:int(sense_shift * len(content))]
    # shifted words take a fresh position in the second domain
    if clusters:
        fresh = _centers(clusters, k, rng)[rng.integers(0, clusters, len(shifted))]
        V2[shifted] = _scaled(fresh + spread * rng.standard_normal((len(shifted), k)), decay)
    else:
        V2[shifted] = _scaled(_centers(len(shifted), k, rng), decay)
    return LatentLanguage(tuple(words), np.stack([V, V2]),
                          np.stack([bias + topic_gain * topic, bias - topic_gain * topic]),
                          frozenset(anchors), beta,
                          (frozenset(words[i] for i in lex1), frozenset(words[i] for i in lex2)),
                          frozenset(words[i] for i in shifted))


def generate_latent_corpus(lang: LatentLanguage, n_lines: int, domain: int = 0, seed: int = 0,
                           lang_tag: str = "src", length: tuple[int, int] = (5, 14)) -> Corpus:
    rng = np.random.default_rng(seed)
    V, b = lang.vectors[domain], lang.bias[domain]
    Z = rng.standard_normal((n_lines, lang.k)) / np.sqrt(lang.k)
    lens = rng.integers(length[0], length[1] + 1, n_lines)
    words = np.array(lang.words, dtype=object)
    lines = []
    for s in range(0, n_lines, 2000):
        logits = b + lang.beta * (Z[s:s + 2000] @ V.T)
        P = np.exp(logits - logits.max(axis=1, keepdims=True))
        cdf = np.cumsum(P, axis=1)
        for i in range(len(P)):
            u = rng.random(lens[s + i]) * cdf[i, -1]
            idx = np.minimum(np.searchsorted(cdf[i], u), len(words) - 1)
            lines.append(tuple(words[idx]))
    return Corpus(tuple(lines), lang_tag, f"d{domain + 1}")


@dataclass(frozen=True)
class ConditionSpec:
    n_lines: int = 50_000
    seed: int = 0
    cipher_seed: int = 7
    language: dict = field(default_factory=dict)   # extra make_latent_language kwargs


class Conditions(NamedTuple):
    source: Corpus          # domain d1, plain
    matched: Corpus         # domain d1, fresh sample, ciphered
    mismatched: Corpus      # domain d2, ciphered
    gold: Dictionary        # plain -> cipher for every non-anchor word
    language: LatentLanguage


def make_conditions(spec: ConditionSpec = ConditionSpec()) -> Conditions:
    """Source corpus plus matched- and mismatched-domain ciphered targets.

    Anchors keep their strings in the cipher, so a joint model trained on
    source + target shares their vectors.  They are left out of the gold
    dictionary: copying them would be trivially right.
    """
    lang = make_latent_language(seed=spec.seed, **spec.language)
    ss = np.random.SeedSequence(spec.seed).spawn(3)
    src = generate_latent_corpus(lang, spec.n_lines, 0, ss[0])
    same = generate_latent_corpus(lang, spec.n_lines, 0, ss[1])
    other = generate_latent_corpus(lang, spec.n_lines, 1, ss[2])
    cs = CipherSpec(seed=spec.cipher_seed, anchor_tokens=lang.anchors)
    mapping = cipher_mapping(lang.words, cs)
    gold = Dictionary(tuple((w, mapping[w]) for w in lang.words if w not in lang.anchors))
    return Conditions(src, apply_cipher(same, mapping, "tgt"), apply_cipher(other, mapping, "tgt"),
                      gold, lang)


def write_conditions(cond: Conditions, outdir) -> dict:
    """Corpora, gold dictionary and one grid config per condition."""
    from pathlib import Path

    import yaml

    from .mapping import save_dictionary

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, c in (("source", cond.source), ("matched", cond.matched), ("mismatched", cond.mismatched)):
        p = out / f"{name}.txt"
        p.write_text("".join(" ".join(line) + "\n" for line in c.lines), encoding="utf-8")
        paths[name] = p
    paths["gold"] = out / "gold.txt"
    save_dictionary(cond.gold, paths["gold"])
    runs = (("matched", "matched", "d1", "separate"), ("mismatched", "mismatched", "d2", "separate"),
            ("joint", "mismatched", "d2", "joint"))
    for name, tgt, dom, mode in runs:
        cfg = {"name": name, "mode": mode, "gold": "gold.txt", "output": f"runs/{name}",
               "corpora": [{"lang": "src", "domain": "d1", "path": "source.txt"},
                           {"lang": "tgt", "domain": dom, "path": f"{tgt}.txt"}],
               "sgns": {"epochs": 20, "min_count": 3, "lr": 0.05}}
        p = out / f"{name}.yaml"
        p.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
        paths[f"{name}.yaml"] = p
    return paths
