import math
from fractions import Fraction

import numpy as np
import pytest

from randext import (
    Bernoulli,
    BitString,
    Lebesgue,
    Markov,
    StepBernoulli,
    ValidationError,
    cylinder_mass,
    dyadic_interval,
    entropy_rate,
    measure_from_config,
    measure_interval,
    pattern_mass,
    positivity_delta,
    smb_entropy_estimate,
)
from randext.bundles import bundled_measures

H_QUARTER = 0.8112781244591328  # binary entropy of 1/4


def all_strings(max_len, min_len=0):
    for ln in range(min_len, max_len + 1):
        for v in range(1 << ln):
            yield BitString.from_int(v, ln)


# ---------------------------------------------------------------------------
# cylinder masses


def test_mass_examples():
    assert cylinder_mass(Lebesgue(), BitString("010")) == Fraction(1, 8)
    assert cylinder_mass(Bernoulli(Fraction(1, 3)), BitString("01")) == Fraction(2, 9)
    for mu in bundled_measures().values():
        assert cylinder_mass(mu, BitString()) == 1


def test_additivity_exhaustive():
    # mass(sigma) = mass(sigma 0) + mass(sigma 1), all sigma to length 12,
    # checked along one incremental traversal per measure
    for mu in bundled_measures().values():
        stack = [(0, Fraction(1), 0)]  # (state, mass, depth)
        while stack:
            state, mass, depth = stack.pop()
            if depth == 12:
                continue
            p0 = mu.cond_zero(state)
            m0, m1 = mass * p0, mass * (1 - p0)
            assert m0 + m1 == mass
            stack.append((mu.next_state(state, 0), m0, depth + 1))
            stack.append((mu.next_state(state, 1), m1, depth + 1))


def test_shift_invariance_exact():
    # summing over one measure step of prefixes returns the cylinder mass
    for mu in bundled_measures().values():
        step = mu.step_len()
        for tau in all_strings(6):
            total = sum(
                cylinder_mass(mu, rho + tau) for rho in all_strings(step, step)
            )
            assert total == cylinder_mass(mu, tau)


# ---------------------------------------------------------------------------
# measure intervals


def test_interval_examples():
    for sigma in all_strings(6):
        assert measure_interval(Lebesgue(), sigma) == dyadic_interval(sigma)
    b13 = Bernoulli(Fraction(1, 3))  # P(0) = 2/3
    iv = measure_interval(b13, BitString("1"))
    assert iv.lo == Fraction(2, 3) and iv.hi == 1
    for mu in bundled_measures().values():
        if not mu.is_positive:
            continue
        for sigma in all_strings(5):
            assert measure_interval(mu, sigma).width == cylinder_mass(mu, sigma)


def test_interval_children_partition():
    for mu in bundled_measures().values():
        for sigma in all_strings(4):
            parent = measure_interval(mu, sigma)
            left = measure_interval(mu, sigma + BitString([0]))
            right = measure_interval(mu, sigma + BitString([1]))
            assert left.lo == parent.lo
            assert left.hi == right.lo
            assert right.hi == parent.hi
            assert left.width + right.width == parent.width


# ---------------------------------------------------------------------------
# entropy rate and the empirical estimator


def test_entropy_closed_forms():
    assert entropy_rate(Lebesgue()) == 1.0
    assert entropy_rate(Bernoulli(Fraction(1, 2))) == 1.0
    assert abs(entropy_rate(Bernoulli(Fraction(1, 4))) - H_QUARTER) < 1e-12
    flat = Markov([["1/2", "1/2"], ["1/2", "1/2"]])
    assert entropy_rate(flat) == 1.0
    step = StepBernoulli(1, [Fraction(3, 4), Fraction(1, 4)])
    assert abs(entropy_rate(step) - H_QUARTER) < 1e-12


def test_markov_stationary_exact():
    mk = Markov([["9/10", "1/10"], ["1/2", "1/2"]])
    pi = mk.stationary
    assert pi == (Fraction(5, 6), Fraction(1, 6))
    # stationarity: pi P = pi
    assert pi[0] * mk.transition[0][0] + pi[1] * mk.transition[1][0] == pi[0]


def test_smb_lebesgue_exact():
    x = Lebesgue().stream(3)
    assert smb_entropy_estimate(Lebesgue(), x, 1000) == 1.0


def test_smb_all_zeros_closed_form():
    mu = Bernoulli(Fraction(1, 4))  # P(0) = 3/4
    est = smb_entropy_estimate(mu, np.zeros(100, dtype=np.uint8), 100)
    assert abs(est - (-math.log2(3 / 4))) < 1e-12


def test_smb_converges_on_samples():
    for name, mu in bundled_measures().items():
        if not mu.is_positive:
            continue
        est = smb_entropy_estimate(mu, mu.stream(1), 10**5)
        assert abs(est - entropy_rate(mu)) <= 0.02, name


# ---------------------------------------------------------------------------
# positivity


def test_positivity_delta():
    assert positivity_delta(Lebesgue()) == Fraction(1, 2)
    assert positivity_delta(Bernoulli(Fraction(1, 4))) == Fraction(1, 4)
    zero_entry = StepBernoulli(2, [Fraction(1, 2), Fraction(1, 2), 0, 0])
    assert positivity_delta(zero_entry) is None
    assert not zero_entry.is_positive
    with pytest.raises(ValidationError):
        zero_entry.measure_interval(BitString("01"))


def test_markov_delta_is_min_entry():
    mk = Markov([["9/10", "1/10"], ["1/2", "1/2"]])
    assert positivity_delta(mk) == Fraction(1, 10)


# ---------------------------------------------------------------------------
# sampling


def test_sample_deterministic_and_prefix():
    mu = Bernoulli(Fraction(1, 3))
    a = mu.sample(7, 500)
    b = mu.sample(7, 500)
    c = mu.sample(7, 200)
    assert a == b
    assert c == a[:200]
    assert mu.sample(7, 0) == BitString()


def test_sample_bernoulli_mean():
    bits = Bernoulli(Fraction(1, 2)).sample_bits(7, 10**6)
    assert abs(bits.mean() - 0.5) < 0.002


def test_sample_markov_transition_frequencies():
    mk = Markov([["9/10", "1/10"], ["1/2", "1/2"]])
    bits = mk.sample_bits(11, 10**6)
    prev, cur = bits[:-1], bits[1:]
    for i in range(2):
        for j in range(2):
            num = np.count_nonzero((prev == i) & (cur == j))
            den = np.count_nonzero(prev == i)
            assert abs(num / den - float(mk.transition[i][j])) < 0.01


def test_sample_step_block_frequencies():
    mu = bundled_measures()["step2"]
    bits = mu.sample_bits(5, 10**6)
    vals = bits.reshape(-1, 2) @ np.array([2, 1])
    freq = np.bincount(vals, minlength=4) / (10**6 / 2)
    for v in range(4):
        assert abs(freq[v] - float(mu.table[v])) < 0.01


# ---------------------------------------------------------------------------
# pattern masses (used by the mixing checks)


def test_pattern_mass_matches_enumeration():
    mu = bundled_measures()["step2"]
    pattern = [1, -1, 0, -1, -1]
    brute = Fraction(0)
    for v in range(1 << 5):
        sigma = BitString.from_int(v, 5)
        if sigma[0] == 1 and sigma[2] == 0:
            brute += cylinder_mass(mu, sigma)
    assert pattern_mass(mu, pattern) == brute


def test_pattern_mass_contradiction_free():
    mu = Lebesgue()
    assert pattern_mass(mu, [-1] * 6) == 1
    assert pattern_mass(mu, [0, 1, -1]) == Fraction(1, 4)


# ---------------------------------------------------------------------------
# config parsing


def test_config_roundtrip():
    for mu in bundled_measures().values():
        again = measure_from_config(mu.config())
        assert again == mu
        assert measure_from_config(mu.name()) == mu


def test_config_inline_forms():
    assert isinstance(measure_from_config("lebesgue"), Lebesgue)
    assert measure_from_config("bernoulli:1/4").p == Fraction(1, 4)
    mk = measure_from_config("markov:9/10,1/10;1/2,1/2")
    assert mk.transition[0][1] == Fraction(1, 10)
    st = measure_from_config("step:2:1/2,1/6,1/6,1/6")
    assert st.n == 2 and st.table[0] == Fraction(1, 2)


def test_config_json_file(tmp_path):
    import json

    path = tmp_path / "m.json"
    path.write_text(json.dumps({"kind": "bernoulli", "p": "3/10"}))
    mu = measure_from_config(f"@{path}")
    assert mu.p == Fraction(3, 10)


def test_validation_errors():
    with pytest.raises(ValidationError):
        Bernoulli(Fraction(0))
    with pytest.raises(ValidationError):
        Bernoulli(Fraction(5, 4))
    with pytest.raises(ValidationError):
        StepBernoulli(2, [Fraction(1, 2)] * 3)  # wrong table size
    with pytest.raises(ValidationError):
        StepBernoulli(2, [Fraction(1, 2)] * 4)  # sums to 2
    with pytest.raises(ValidationError):
        Markov([["1/2", "1/2"], ["1/3", "1/3"]])  # row sum != 1
    with pytest.raises(ValidationError):
        Markov([["1", "0"], ["1/2", "1/2"]])  # entries must be in (0,1)
    with pytest.raises(ValidationError):
        measure_from_config("unknown:1/2")
