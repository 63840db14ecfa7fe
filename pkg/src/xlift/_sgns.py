"""Numba kernels for skip-gram negative sampling.

All randomness comes from a per-worker xorshift64* stream so a single
worker run is bit-reproducible.  Several workers share ``w_in``/``w_out``
without locks (Hogwild-style).
"""
import math

import numpy as np
from numba import njit

_MULT = np.uint64(2685821657736338717)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def _next(state):
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return x * _MULT


@njit(cache=True, nogil=True)
def _uniform(state):
    return float(_next(state) >> np.uint64(11)) * _INV53


@njit(cache=True, nogil=True)
def _draw(state, cdf):
    i = np.searchsorted(cdf, _uniform(state), side="right")
    if i >= cdf.shape[0]:
        i = cdf.shape[0] - 1
    return i


@njit(cache=True, nogil=True)
def seed_state(seed):
    state = np.empty(1, dtype=np.uint64)
    # splitmix64 scramble so that nearby seeds give unrelated streams
    z = np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    if z == np.uint64(0):
        z = np.uint64(1)
    state[0] = z
    return state


@njit(cache=True, nogil=True)
def draw_many(cdf, n, seed):
    state = seed_state(seed)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = _draw(state, cdf)
    return out


@njit(cache=True, nogil=True)
def train_shard(tokens, line_starts, lo, hi, keep_prob, cdf, comp_off, comp_ids,
                w_in, w_out, window, negatives, epochs, lr0, seed):
    dim = w_in.shape[1]
    state = seed_state(seed)
    shard_words = line_starts[hi] - line_starts[lo]
    total = epochs * shard_words + 1
    done = 0
    max_len = 0
    for li in range(lo, hi):
        n = line_starts[li + 1] - line_starts[li]
        if n > max_len:
            max_len = n
    buf = np.empty(max_len, dtype=np.int64)
    hidden = np.empty(dim)
    grad = np.empty(dim)
    for _ in range(epochs):
        for li in range(lo, hi):
            s = line_starts[li]
            e = line_starts[li + 1]
            n_kept = 0
            for p in range(s, e):
                w = tokens[p]
                if keep_prob[w] >= 1.0 or _uniform(state) < keep_prob[w]:
                    buf[n_kept] = w
                    n_kept += 1
            lr = lr0 * (1.0 - done / total)
            done += e - s
            for pos in range(n_kept):
                center = buf[pos]
                reach = window - int(_next(state) % np.uint64(window))
                c0 = comp_off[center]
                c1 = comp_off[center + 1]
                inv = 1.0 / (c1 - c0)
                for cpos in range(max(0, pos - reach), min(n_kept, pos + reach + 1)):
                    if cpos == pos:
                        continue
                    context = buf[cpos]
                    for j in range(dim):
                        hidden[j] = 0.0
                        grad[j] = 0.0
                    for c in range(c0, c1):
                        row = comp_ids[c]
                        for j in range(dim):
                            hidden[j] += w_in[row, j]
                    for j in range(dim):
                        hidden[j] *= inv
                    for k in range(negatives + 1):
                        if k == 0:
                            target = context
                            label = 1.0
                        else:
                            target = _draw(state, cdf)
                            if target == context:
                                continue
                            label = 0.0
                        f = 0.0
                        for j in range(dim):
                            f += hidden[j] * w_out[target, j]
                        if f > 30.0:
                            f = 30.0
                        elif f < -30.0:
                            f = -30.0
                        g = (label - 1.0 / (1.0 + math.exp(-f))) * lr
                        for j in range(dim):
                            grad[j] += g * w_out[target, j]
                            w_out[target, j] += g * hidden[j]
                    for c in range(c0, c1):
                        row = comp_ids[c]
                        for j in range(dim):
                            w_in[row, j] += grad[j]
    return done


@njit(cache=True, nogil=True)
def compose_vectors(w_in, comp_off, comp_ids, n_words):
    dim = w_in.shape[1]
    out = np.zeros((n_words, dim))
    for w in range(n_words):
        c0 = comp_off[w]
        c1 = comp_off[w + 1]
        for c in range(c0, c1):
            row = comp_ids[c]
            for j in range(dim):
                out[w, j] += w_in[row, j]
        for j in range(dim):
            out[w, j] /= c1 - c0
    return out
