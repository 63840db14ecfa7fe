"""Learning a linear map between two embedding spaces.

Three routes are provided: identical-string seed dictionaries, orthogonal
Procrustes on a dictionary, and adversarial training of the map against a
discriminator.  ``refine`` alternates CSLS dictionary induction with
Procrustes.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .embedding import EmbeddingMatrix, Vocabulary
from .errors import AlignmentError, DivergenceError
from .mapping import Dictionary, MappingModel
from .retrieval import DEFAULT_K, _CHUNK, _check_unit, map_rows, neighborhood_mean, similarity


def extract_identical_seed(vs: Vocabulary, vt: Vocabulary) -> Dictionary:
    """(t, t) for every string in both vocabularies, most frequent first."""
    common = [t for t in vs.tokens if t in vt.index]
    common.sort(key=lambda t: (-(vs.count(t) + vt.count(t)), t))
    return Dictionary(tuple((t, t) for t in common))


def procrustes(X: EmbeddingMatrix, Y: EmbeddingMatrix, d: Dictionary) -> MappingModel:
    """Orthogonal W minimizing ||W Xs^T - Yt^T||_F over the dictionary pairs.

    With U S V^T the SVD of Yt^T Xs, the minimizer is W = U V^T.
    """
    if X.dim != Y.dim:
        raise AlignmentError(f"dimension mismatch: {X.dim} vs {Y.dim}")
    pairs = [(X.vocab.index[s], Y.vocab.index[t]) for s, t in d.pairs
             if s in X.vocab.index and t in Y.vocab.index]
    if not pairs:
        raise AlignmentError("no dictionary pair is in both vocabularies")
    src, tgt = np.asarray(pairs).T
    M = Y.rows[tgt].T @ X.rows[src]
    U, _, Vt = np.linalg.svd(M)
    return MappingModel(U @ Vt, "procrustes", {"pairs": len(pairs)})


def orthogonalize(W: np.ndarray, beta: float) -> np.ndarray:
    """One step of W <- (1 + beta) W - beta (W W^T) W."""
    return (1 + beta) * W - beta * (W @ W.T) @ W


def induce_dictionary(model: MappingModel | None, X: EmbeddingMatrix, Y: EmbeddingMatrix,
                      k: int = DEFAULT_K, max_rank: int = 10_000) -> Dictionary:
    """Mutual CSLS nearest neighbours among the ``max_rank`` most frequent words.

    Ties go to the lowest index (the more frequent word).
    """
    Xm = map_rows(model, X)
    Yr = Y.rows
    _check_unit(Yr, "target")
    ns, nt = min(max_rank, len(X)), min(max_rank, len(Y))
    r_src = neighborhood_mean(Yr[:nt], Xm, k)
    fwd = np.empty(ns, dtype=np.int64)
    col_best = np.full(nt, -np.inf)
    col_arg = np.zeros(nt, dtype=np.int64)
    for s in range(0, ns, _CHUNK):
        Q = Xm[s:min(s + _CHUNK, ns)]
        r_tgt = neighborhood_mean(Q, Yr, k)
        S = 2 * similarity(Q, Yr[:nt]) - r_tgt[:, None] - r_src[None, :]
        fwd[s:s + len(Q)] = np.argmax(S, axis=1)
        arg = np.argmax(S, axis=0)
        best = S[arg, np.arange(nt)]
        better = best > col_best
        col_best[better] = best[better]
        col_arg[better] = arg[better] + s
    pairs = tuple((X.vocab.tokens[i], Y.vocab.tokens[j])
                  for i, j in enumerate(fwd) if col_arg[j] == i)
    return Dictionary(pairs)


def refine(model: MappingModel | None, X: EmbeddingMatrix, Y: EmbeddingMatrix, iters: int,
           k: int = DEFAULT_K, max_rank: int = 10_000) -> MappingModel:
    """Alternate dictionary induction and Procrustes ``iters`` times."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    start = dict(model.meta) if model is not None else {}
    for _ in range(iters):
        d = induce_dictionary(model, X, Y, k, max_rank)
        if len(d) == 0:
            raise AlignmentError("induced dictionary is empty")
        model = procrustes(X, Y, d)
    return MappingModel(model.W, "procrustes",
                        {**start, **model.meta, "refinement_iters": start.get("refinement_iters", 0) + iters})


def refine_checkpoints(model, X, Y, at, k=DEFAULT_K, max_rank=10_000) -> dict:
    """Models after each iteration count in ``at``; one chain serves them all."""
    out = {}
    done = 0
    for n in sorted(set(at)):
        model = refine(model, X, Y, n - done, k, max_rank)
        done = n
        out[n] = model
    return out


@dataclass(frozen=True)
class AdversarialParams:
    """Adversarial mapping hyperparameters (full-scale defaults).

    ``epoch_size`` counts sampled source words per epoch; each iteration
    draws ``batch_size`` words per side, runs ``dis_steps`` discriminator
    updates and one mapping update.
    """

    epochs: int = 5
    seed: int = 123
    refinement_iters: int = 5
    disc_hidden: int = 2048
    disc_dropout: float = 0.1
    smoothing: float = 0.2
    map_beta: float = 0.001
    batch_size: int = 32
    lr: float = 0.1
    lr_decay: float = 0.98
    min_lr: float = 1e-6
    dis_steps: int = 5
    epoch_size: int = 1_000_000
    most_frequent: int = 75_000
    leaky_slope: float = 0.2
    k: int = DEFAULT_K
    refine_max_rank: int = 10_000

    def __post_init__(self):
        counts = (self.epochs, self.refinement_iters, self.disc_hidden, self.batch_size,
                  self.dis_steps, self.epoch_size, self.most_frequent, self.k, self.refine_max_rank)
        if min(counts) < 1:
            raise ValueError("all counts must be >= 1")
        if not 0 <= self.smoothing < 0.5:
            raise ValueError("smoothing must be in [0, 0.5)")
        if not self.map_beta > 0:
            raise ValueError("map_beta must be positive")
        if not 0 <= self.disc_dropout < 1:
            raise ValueError("disc_dropout must be in [0, 1)")

    @classmethod
    def desk(cls, **overrides) -> "AdversarialParams":
        """Settings sized for a few thousand words and a single CPU."""
        return replace(cls(disc_hidden=256, epoch_size=57_600, most_frequent=75_000,
                           refine_max_rank=2_000), **overrides)


class _Discriminator:
    """Two-hidden-layer MLP with leaky ReLU, input dropout and a sigmoid output."""

    def __init__(self, dim, hidden, dropout, slope, rng, dtype=np.float32):
        def linear(fan_in, fan_out):
            bound = 1.0 / np.sqrt(fan_in)
            return (rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype),
                    rng.uniform(-bound, bound, fan_out).astype(dtype))

        self.params = [*linear(dim, hidden), *linear(hidden, hidden), *linear(hidden, 1)]
        self.dropout = dropout
        self.slope = slope
        self.rng = rng

    def _leaky(self, h):
        # max(h, s*h) equals the leaky ReLU for 0 <= s < 1
        return np.maximum(h, h.dtype.type(self.slope) * h)

    def _leaky_grad(self, h):
        t = h.dtype.type
        return np.where(h > 0, t(1.0), t(self.slope))

    def forward(self, x, train):
        W1, b1, W2, b2, W3, b3 = self.params
        x = x.astype(W1.dtype)
        mask = None
        if train and self.dropout > 0:
            mask = ((self.rng.random(x.shape) >= self.dropout) / (1 - self.dropout)).astype(W1.dtype)
            x = x * mask
        h1 = x @ W1 + b1
        a1 = self._leaky(h1)
        h2 = a1 @ W2 + b2
        a2 = self._leaky(h2)
        z = (a2 @ W3 + b3)[:, 0]
        return z, (x, mask, h1, a1, h2, a2)

    def backward(self, dz, cache, params=True):
        """Gradients of the parameters (None if not ``params``) and of the pre-dropout input."""
        W1, b1, W2, b2, W3, b3 = self.params
        x, mask, h1, a1, h2, a2 = cache
        dz = dz.astype(W1.dtype)[:, None]
        dh2 = (dz @ W3.T) * self._leaky_grad(h2)
        dh1 = (dh2 @ W2.T) * self._leaky_grad(h1)
        dx = dh1 @ W1.T
        if mask is not None:
            dx = dx * mask
        if not params:
            return None, dx
        grads = [x.T @ dh1, dh1.sum(0), a1.T @ dh2, dh2.sum(0), a2.T @ dz, dz.sum(0)]
        return grads, dx

    def sgd(self, grads, lr):
        for p, g in zip(self.params, grads):
            p -= p.dtype.type(lr) * g


def _bce(z, y):
    """Mean binary cross-entropy on logits and its gradient wrt the logits."""
    z = z.astype(np.float64)
    loss = np.mean(np.logaddexp(0, z) - y * z)
    p = 0.5 * (1 + np.tanh(0.5 * z))
    return loss, (p - y) / z.shape[0]


def adversarial_checkpoints(X: EmbeddingMatrix, Y: EmbeddingMatrix, p: AdversarialParams,
                            at=None, init: MappingModel | None = None) -> dict:
    """Run adversarial training and return the mapping after each epoch in ``at``.

    The learning rate decays per epoch independently of the total epoch
    count, so the checkpoint after epoch e equals a run with ``epochs=e``.
    """
    _check_unit(X.rows, "source")
    _check_unit(Y.rows, "target")
    if X.dim != Y.dim:
        raise AlignmentError(f"dimension mismatch: {X.dim} vs {Y.dim}")
    at = sorted(set(at or (p.epochs,)))
    rng = np.random.default_rng(p.seed)
    disc = _Discriminator(X.dim, p.disc_hidden, p.disc_dropout, p.leaky_slope, rng)
    W = np.eye(X.dim) if init is None else init.W.copy()
    bs = p.batch_size
    ns, nt = min(p.most_frequent, len(X)), min(p.most_frequent, len(Y))
    y_dis = np.concatenate([np.full(bs, 1 - p.smoothing), np.full(bs, p.smoothing)])
    y_map = 1 - y_dis
    lr = p.lr
    last_good = W.copy()
    out = {}
    n_iter = p.epoch_size // bs
    # non-finite values are caught below and raised as DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, at[-1] + 1):
            for _ in range(n_iter):
                for _ in range(p.dis_steps):
                    src = X.rows[rng.integers(0, ns, bs)] @ W.T
                    tgt = Y.rows[rng.integers(0, nt, bs)]
                    z, cache = disc.forward(np.vstack([src, tgt]), train=True)
                    loss, dz = _bce(z, y_dis)
                    if not np.isfinite(loss):
                        raise DivergenceError(f"discriminator loss diverged in epoch {epoch}", last_good)
                    grads, _ = disc.backward(dz, cache)
                    disc.sgd(grads, lr)
                s_rows = X.rows[rng.integers(0, ns, bs)]
                tgt = Y.rows[rng.integers(0, nt, bs)]
                z, cache = disc.forward(np.vstack([s_rows @ W.T, tgt]), train=False)
                loss, dz = _bce(z, y_map)
                if not np.isfinite(loss):
                    raise DivergenceError(f"mapping loss diverged in epoch {epoch}", last_good)
                _, dx = disc.backward(dz, cache, params=False)
                W = W - lr * (dx[:bs].astype(np.float64).T @ s_rows)
                W = orthogonalize(W, p.map_beta)
                if not np.all(np.isfinite(W)):
                    raise DivergenceError(f"mapping diverged in epoch {epoch}", last_good)
                last_good = W
            if epoch in at:
                out[epoch] = MappingModel(W.copy(), "adversarial", {"seed": p.seed, "epochs": epoch})
            lr = max(p.min_lr, lr * p.lr_decay)
    return out


def adversarial_train(X: EmbeddingMatrix, Y: EmbeddingMatrix, p: AdversarialParams,
                      init: MappingModel | None = None) -> MappingModel:
    """Adversarially learn W so that {W x} is indistinguishable from {y}.

    The discriminator learns to tell mapped sources (label 1 - smoothing)
    from targets (label smoothing); the mapping step descends the loss with
    flipped labels and is followed by W <- (1 + b) W - b (W W^T) W.
    """
    return adversarial_checkpoints(X, Y, p, (p.epochs,), init)[p.epochs]
