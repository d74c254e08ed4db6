"""Hot inner-loop kernels: numba-jitted with pure NumPy/Python fallbacks.

The sequential scans here (conditional-automaton sampling, DDG-trie walks)
dominate the runtime of the million-bit experiments.  Each kernel has two
implementations selected at call time:

* the ``@njit`` version (default when numba imports), and
* a fallback using NumPy vectorization where the data flow allows it and a
  plain Python loop where it does not.

Set ``RANDEXT_NO_NUMBA=1`` to force the fallback path; both paths produce
bit-identical results (see tests/test_kernels.py and benchmarks/).

Exact rational arithmetic (interval conversion, cylinder masses) is *not*
here: those loops are big-integer bound and gain nothing from numba.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(f):
            return f

        return deco if not (args and callable(args[0])) else args[0]


# child[s, b] encoding for tree walks: >= 0 internal successor state;
# OVERFLOW means the walk left the expanded portion of a lazy tree;
# any other negative value is a terminal emitting label -(v+1).
OVERFLOW = np.int32(np.iinfo(np.int32).min)

WALK_OK = 0  # consumed every bit offered
WALK_DONE = 1  # emitted the requested number of symbols
WALK_DEEP = 2  # needs a deeper trie expansion (lazy trees only)


def use_numba() -> bool:
    return HAVE_NUMBA and os.environ.get("RANDEXT_NO_NUMBA", "") not in ("1", "true")


# ---------------------------------------------------------------------------
# Conditional-automaton bit sampling.
# u[i] is a uniform variate; the emitted bit is 1 iff u[i] >= cond0[state]
# (cond0 = P(bit=0 | state) as float64), then state advances via nxt.


@njit(cache=True)
def _sample_njit(u, cond0, nxt, start):
    n = u.shape[0]
    out = np.empty(n, dtype=np.uint8)
    s = start
    for i in range(n):
        b = np.uint8(0) if u[i] < cond0[s] else np.uint8(1)
        out[i] = b
        s = nxt[s, b]
    return out, s


def _sample_py(u, cond0, nxt, start):
    n = u.shape[0]
    if cond0.shape[0] == 1:
        # stateless source: a single vectorized compare
        out = (u >= cond0[0]).astype(np.uint8)
        return out, start
    out = np.empty(n, dtype=np.uint8)
    s = int(start)
    c = cond0
    nx = nxt
    for i in range(n):
        b = 0 if u[i] < c[s] else 1
        out[i] = b
        s = nx[s, b]
    return out, s


def sample_automaton(u, cond0, nxt, start):
    """Turn uniforms into bits via a finite conditional automaton.

    Returns (bits, end_state).  One uniform is consumed per bit, so prefixes
    of the uniform sequence determine prefixes of the output.
    """
    if use_numba():
        return _sample_njit(u, cond0, nxt, np.int32(start))
    return _sample_py(u, cond0, nxt, np.int32(start))


# ---------------------------------------------------------------------------
# DDG-trie walk over a single bit sequence.


@njit(cache=True)
def _walk_njit(bits, child, state, labels, bounds, base, want):
    emitted = 0
    n = bits.shape[0]
    s = state
    for i in range(n):
        v = child[s, bits[i]]
        if v == OVERFLOW:
            return emitted, i, s, WALK_DEEP
        if v < 0:
            labels[emitted] = -v - 1
            bounds[emitted] = base + i + 1
            emitted += 1
            s = 0
            if emitted == want:
                return emitted, i + 1, s, WALK_DONE
        else:
            s = v
    return emitted, n, s, WALK_OK


def _walk_py(bits, child, state, labels, bounds, base, want):
    emitted = 0
    s = int(state)
    ch = child
    for i, b in enumerate(bits):
        v = ch[s, b]
        if v == OVERFLOW:
            return emitted, i, s, WALK_DEEP
        if v < 0:
            labels[emitted] = -v - 1
            bounds[emitted] = base + i + 1
            emitted += 1
            s = 0
            if emitted == want:
                return emitted, i + 1, s, WALK_DONE
        else:
            s = int(v)
    return emitted, bits.shape[0], s, WALK_OK


def walk_tree(bits, child, state, labels, bounds, base, want):
    """Walk `bits` through the trie table `child` starting at `state`.

    Emits label indices and absolute block boundaries (offset by `base`)
    into the provided output arrays; stops after `want` symbols.  Returns
    (emitted, consumed, end_state, status).
    """
    if use_numba():
        return _walk_njit(
            bits, child, np.int32(state), labels, bounds, np.int64(base), np.int64(want)
        )
    return _walk_py(bits, child, state, labels, bounds, base, want)


# ---------------------------------------------------------------------------
# Batched symbol counting: one independent walk per row (used by Monte-Carlo
# average-ratio estimation).  Rows that leave a lazy expansion get count -1;
# the caller recounts those exactly.


@njit(cache=True)
def _count_batch_njit(rows, child):
    m, n = rows.shape
    counts = np.zeros(m, dtype=np.int64)
    for r in range(m):
        s = np.int32(0)
        c = np.int64(0)
        for j in range(n):
            v = child[s, rows[r, j]]
            if v == OVERFLOW:
                c = -1
                break
            if v < 0:
                c += 1
                s = np.int32(0)
            else:
                s = v
        counts[r] = c
    return counts


def _count_batch_py(rows, child):
    m, n = rows.shape
    counts = np.zeros(m, dtype=np.int64)
    states = np.zeros(m, dtype=np.int32)
    alive = np.ones(m, dtype=bool)
    # lock-step across rows: one fancy-indexed transition per bit position
    for j in range(n):
        v = child[states, rows[:, j]]
        deep = alive & (v == OVERFLOW)
        if deep.any():
            counts[deep] = -1
            alive &= ~deep
        term = alive & (v < 0)
        counts[term] += 1
        states = np.where(term, np.int32(0), np.where(alive, v, states)).astype(
            np.int32
        )
    return counts


def count_blocks_batch(rows, child):
    """Per-row count of complete DDG blocks; -1 marks rows needing the exact path."""
    if use_numba():
        return _count_batch_njit(rows, child)
    return _count_batch_py(rows, child)


def warmup() -> None:
    """Compile the jitted kernels on tiny inputs (no-op on the fallback path)."""
    if not use_numba():
        return
    u = np.array([0.3, 0.7])
    cond0 = np.array([0.5])
    nxt = np.zeros((1, 2), dtype=np.int32)
    _sample_njit(u, cond0, nxt, np.int32(0))
    bits = np.array([0, 1], dtype=np.uint8)
    child = np.array([[-1, -2]], dtype=np.int32)
    labels = np.empty(4, dtype=np.int32)
    bounds = np.empty(4, dtype=np.int64)
    _walk_njit(bits, child, np.int32(0), labels, bounds, np.int64(0), np.int64(4))
    _count_batch_njit(bits.reshape(1, 2), child)
