import math
from fractions import Fraction

import numpy as np
import pytest

from randext import (
    Bernoulli,
    BitString,
    Lebesgue,
    StallError,
    StepBernoulli,
    ValidationError,
    avg_oi,
    block_rate,
    load_block_table,
    make_block_map,
    minimal_block_length,
    n_shift,
    peres,
    peres_expected_length,
    save_block_table,
    von_neumann,
)
from randext.bitseq import ArrayStream


def random_positive_step(rng, n):
    """Random positive n-step Bernoulli from small integer weights."""
    weights = rng.integers(1, 10, size=1 << n)
    total = int(weights.sum())
    return StepBernoulli(n, [Fraction(int(w), total) for w in weights])


def random_block_map(rng, n):
    outputs = []
    while True:
        outputs = [
            BitString(rng.integers(0, 2, int(rng.integers(0, 4))).astype(np.uint8))
            for _ in range(1 << n)
        ]
        if any(len(o) for o in outputs):
            return make_block_map(
                n, {BitString.from_int(v, n): o for v, o in enumerate(outputs)}
            )


# ---------------------------------------------------------------------------
# construction and evaluation


def test_von_neumann_table():
    vn = von_neumann()
    assert vn.eval(BitString("10")) == BitString("0")
    assert vn.eval(BitString("01")) == BitString("1")
    assert vn.eval(BitString("00")) == BitString()
    assert vn.eval(BitString("0111")) == BitString("1")
    assert vn.eval(BitString("1")) == BitString()


def test_make_block_map_equals_vn():
    bm = make_block_map(2, {"10": "0", "01": "1", "00": "", "11": ""})
    vn = von_neumann()
    for v in range(4):
        s = BitString.from_int(v, 2)
        assert bm.eval(s) == vn.eval(s)


def test_identity_one_block():
    bm = make_block_map(1, {"0": "0", "1": "1"})
    for v in range(16):
        s = BitString.from_int(v, 4)
        assert bm.eval(s) == s
    assert block_rate(bm, Bernoulli(Fraction(2, 7))) == 1


def test_block_map_validation():
    with pytest.raises(ValidationError, match="trivial"):
        make_block_map(2, {"00": "", "01": "", "10": "", "11": ""})
    with pytest.raises(ValidationError, match="partial"):
        make_block_map(2, {"00": "0", "01": "1"})
    with pytest.raises(ValidationError):
        make_block_map(2, {"000": "0"})


def test_block_decomposition_uniqueness():
    rng = np.random.default_rng(5)
    bm = random_block_map(rng, 3)
    for _ in range(200):
        a = BitString(rng.integers(0, 2, 9).astype(np.uint8))  # multiple of 3
        b = BitString(rng.integers(0, 2, int(rng.integers(0, 3))).astype(np.uint8))
        assert bm.eval(a + b) == bm.eval(a)  # incomplete tail contributes nothing
        c = BitString(rng.integers(0, 2, 6).astype(np.uint8))
        assert bm.eval(a + c) == bm.eval(a) + bm.eval(c)


# ---------------------------------------------------------------------------
# exact rates


def test_block_rate_examples():
    vn = von_neumann()
    assert block_rate(vn, Bernoulli(Fraction(1, 2))) == Fraction(1, 4)
    for p in (Fraction(1, 4), Fraction(3, 10), Fraction(2, 7)):
        assert block_rate(vn, Bernoulli(p)) == p * (1 - p)


def test_block_rate_rejects_incompatible_step():
    vn = von_neumann()
    mu3 = random_positive_step(np.random.default_rng(0), 3)
    with pytest.raises(ValidationError, match="incompatible"):
        block_rate(vn, mu3)
    zero = StepBernoulli(2, [Fraction(1, 2), Fraction(1, 2), 0, 0])
    with pytest.raises(ValidationError, match="positive"):
        block_rate(vn, zero)


def test_rate_equals_avg_at_multiples():
    # the exact extraction-rate identity, by exhaustive enumeration
    rng = np.random.default_rng(42)
    cases = [(von_neumann(), Bernoulli(Fraction(3, 10)))]
    for n in (2, 3):
        bm = random_block_map(rng, n)
        cases.append((bm, random_positive_step(rng, n)))
    for bm, mu in cases:
        base = avg_oi(bm, mu, bm.n)
        assert base == block_rate(bm, mu)
        for k in (2, 3, 4):
            assert avg_oi(bm, mu, bm.n * k) == base
            for i in range(1, bm.n):
                assert avg_oi(bm, mu, bm.n * k + i) <= base


# ---------------------------------------------------------------------------
# the iterated extractor family


def test_peres_level_one_is_von_neumann():
    phi1 = peres(1)
    vn = von_neumann()
    for v in range(1 << 10):
        s = BitString.from_int(v, 10)
        assert phi1.apply(s) == vn.eval(s)


def test_peres_hand_example():
    assert peres(2).apply(BitString("1100")) == BitString("0")


def test_peres_odd_bit_ignored():
    phi2 = peres(2)
    for v in range(1 << 7):
        s = BitString.from_int(v, 7)
        assert phi2.apply(s) == phi2.apply(s[:6])


def test_peres_output_never_longer_than_input():
    rng = np.random.default_rng(8)
    for k in (1, 2, 3, 4):
        pk = peres(k)
        for _ in range(100):
            m = int(rng.integers(0, 17))
            s = BitString(rng.integers(0, 2, m).astype(np.uint8))
            assert len(pk.apply(s)) <= m


def test_peres_lengths_table_matches_apply():
    from randext.blockmap import peres_output_lengths

    for k in (1, 2, 3):
        lens = peres_output_lengths(k, 8)
        pk = peres(k)
        for v in range(1 << 8):
            assert lens[v] == len(pk.apply(BitString.from_int(v, 8)))


def test_peres_expected_monotone_and_entropy_bounded():
    m = 12
    for p in (Fraction(1, 2), Fraction(1, 4)):
        pf = float(p)
        H = -(pf * math.log2(pf) + (1 - pf) * math.log2(1 - pf))
        rates = [peres_expected_length(k, m, p) / m for k in (1, 2, 3, 4)]
        assert all(b >= a for a, b in zip(rates, rates[1:]))
        assert all(float(r) <= H + 1e-12 for r in rates)


def test_peres_exact_vn_rate_on_pairs():
    # level 1 on even-length input: expected output = pairs * 2p(1-p)
    p = Fraction(1, 4)
    assert peres_expected_length(1, 10, p) == 5 * 2 * p * (1 - p)


# ---------------------------------------------------------------------------
# the n-shift


def test_n_shift_examples():
    base = ArrayStream([0, 1, 1, 0, 1, 0, 1, 1])
    assert list(n_shift(2, base).take(4)) == [1, 0, 1, 0]
    base.reset()
    assert list(n_shift(1, base).take(3)) == [1, 1, 0]


def test_n_shift_composition():
    mu = Lebesgue()
    x = mu.stream(3)
    ref = x.take(20).copy()
    x.reset()
    shifted = n_shift(3, n_shift(3, x))  # two applications drop 6 bits
    assert np.array_equal(shifted.take(10), ref[6:16])
    shifted.reset()
    assert np.array_equal(shifted.take(10), ref[6:16])


# ---------------------------------------------------------------------------
# minimality and files


def test_minimal_block_length():
    assert minimal_block_length(von_neumann()) == 2
    # a 2-block map that is really the identity 1-block map in disguise
    fake = make_block_map(2, {"00": "00", "01": "01", "10": "10", "11": "11"})
    assert minimal_block_length(fake) == 1
    rng = np.random.default_rng(2)
    assert minimal_block_length(random_block_map(rng, 3)) in (1, 3)


def test_table_file_roundtrip(tmp_path):
    path = tmp_path / "vn.tsv"
    vn = von_neumann()
    save_block_table(path, vn)
    text = path.read_text()
    assert "10\t0" in text and "00\t-" in text
    back = load_block_table(path)
    for v in range(4):
        s = BitString.from_int(v, 2)
        assert back.eval(s) == vn.eval(s)


def test_table_file_validation(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("00\t0\n01\t1\n")
    with pytest.raises(ValidationError, match="partial"):
        load_block_table(path)
    path.write_text("00\t-\n01\t-\n10\t-\n11\t-\n")
    with pytest.raises(ValidationError, match="trivial"):
        load_block_table(path)
