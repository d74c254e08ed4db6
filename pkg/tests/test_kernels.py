"""The jitted kernels and their fallbacks must agree bit for bit."""

import numpy as np
import pytest

from randext import _kernels
from randext.bundles import bundled_measures, bundled_trees


@pytest.fixture(autouse=True)
def _warm():
    _kernels.warmup()


def _sampler_cases():
    for name, mu in bundled_measures().items():
        yield name, mu.sampler_tables()


def test_sample_automaton_paths_agree():
    rng = np.random.default_rng(0)
    u = rng.random(10_000)
    for name, (cond0, nxt, start) in _sampler_cases():
        a, sa = _kernels._sample_njit(u, cond0, nxt, np.int32(start))
        b, sb = _kernels._sample_py(u, cond0, nxt, np.int32(start))
        assert np.array_equal(a, b), name
        assert sa == sb


def test_walk_paths_agree():
    rng = np.random.default_rng(1)
    bits = (rng.random(20_000) < 0.5).astype(np.uint8)
    for name, tree in bundled_trees().items():
        child = tree.child_table(64)
        la = np.empty(bits.size, dtype=np.int32)
        ba = np.empty(bits.size, dtype=np.int64)
        lb = np.empty(bits.size, dtype=np.int32)
        bb = np.empty(bits.size, dtype=np.int64)
        ra = _kernels._walk_njit(bits, child, np.int32(0), la, ba, np.int64(0), np.int64(bits.size))
        rb = _kernels._walk_py(bits, child, 0, lb, bb, 0, bits.size)
        assert ra == rb, name
        n = ra[0]
        assert np.array_equal(la[:n], lb[:n])
        assert np.array_equal(ba[:n], bb[:n])


def test_walk_want_limit_and_state_resume():
    tree = bundled_trees()["half_quarter"]
    child = tree.child_table(8)
    bits = np.array([1, 1, 0, 1, 0, 0], dtype=np.uint8)
    labels = np.empty(8, dtype=np.int32)
    bounds = np.empty(8, dtype=np.int64)
    emitted, consumed, state, status = _kernels.walk_tree(
        bits, child, 0, labels, bounds, 0, 2
    )
    assert (emitted, consumed, status) == (2, 3, _kernels.WALK_DONE)
    emitted2, consumed2, state2, status2 = _kernels.walk_tree(
        bits[consumed:], child, state, labels, bounds, consumed, 8
    )
    # remaining "100" holds two more complete blocks: "10" then "0"
    assert emitted2 == 2
    assert list(bounds[:2]) == [5, 6]


def test_walk_overflow_surfaces():
    tree = bundled_trees()["ky_thirds"]
    child = tree.child_table(64)
    bits = np.ones(100, dtype=np.uint8)  # never reaches a terminal
    labels = np.empty(4, dtype=np.int32)
    bounds = np.empty(4, dtype=np.int64)
    emitted, consumed, state, status = _kernels.walk_tree(
        bits, child, 0, labels, bounds, 0, 4
    )
    assert emitted == 0
    assert status == _kernels.WALK_DEEP
    assert consumed < 100


def test_count_batch_paths_agree():
    rng = np.random.default_rng(2)
    rows = (rng.random((64, 257)) < 0.5).astype(np.uint8)
    for name, tree in bundled_trees().items():
        child = tree.child_table(64)
        a = _kernels._count_batch_njit(rows, child)
        b = _kernels._count_batch_py(rows, child)
        assert np.array_equal(a, b), name


def test_env_flag_switches_path(monkeypatch):
    monkeypatch.setenv("RANDEXT_NO_NUMBA", "1")
    assert not _kernels.use_numba()
    monkeypatch.delenv("RANDEXT_NO_NUMBA")
    assert _kernels.use_numba() == _kernels.HAVE_NUMBA


def test_dispatch_identical_results_under_flag(monkeypatch):
    mu = bundled_measures()["markov"]
    fast = mu.sample_bits(3, 5000)
    monkeypatch.setenv("RANDEXT_NO_NUMBA", "1")
    slow = mu.sample_bits(3, 5000)
    assert np.array_equal(fast, slow)
