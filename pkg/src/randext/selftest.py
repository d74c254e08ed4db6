"""Exact-arithmetic invariant suites, runnable from the CLI.

Each check is pure integer/rational arithmetic (no tolerances, no floats
in any comparison) and small enough to finish in well under a second.
`run` prints one line per check and returns the number of failures.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from . import bundles
from .bitseq import BitString, dyadic_interval, lex_rank
from .blockmap import block_rate, peres, peres_expected_length, von_neumann
from .ddg import avg_rt, ddg_extract, knuth_yao
from .ergodic import NShift, TreeShift, mixing_average, mixing_threshold
from .generators import avg_oi, oscillating_alpha
from .levinkautz import g_of_prefix, kautz_check, lk_convert, lk_roundtrip
from .measures import Bernoulli, Lebesgue


def _all_strings(max_len: int, min_len: int = 0):
    for ln in range(min_len, max_len + 1):
        for v in range(1 << ln):
            yield BitString.from_int(v, ln)


def check_bitseq_rank_interval() -> None:
    # rank/interval cross-identity and child nesting, all strings to length 8
    for sigma in _all_strings(8):
        n, r = len(sigma), lex_rank(sigma)
        iv = dyadic_interval(sigma)
        assert iv.lo == Fraction(r, 1 << n) and iv.hi == Fraction(r + 1, 1 << n)
        if n < 8:
            left = dyadic_interval(sigma + BitString([0]))
            right = dyadic_interval(sigma + BitString([1]))
            assert iv.contains_interval(left) and iv.contains_interval(right)
            assert left.hi == right.lo and left.lo == iv.lo and right.hi == iv.hi


def check_measure_additivity() -> None:
    for mu in bundles.bundled_measures().values():
        for sigma in _all_strings(6):
            m = mu.cylinder_mass(sigma)
            m0 = mu.cylinder_mass(sigma + BitString([0]))
            m1 = mu.cylinder_mass(sigma + BitString([1]))
            assert m == m0 + m1


def check_measure_interval_partition() -> None:
    for mu in bundles.bundled_measures().values():
        if not mu.is_positive:
            continue
        for sigma in _all_strings(5):
            iv = mu.measure_interval(sigma)
            assert iv.width == mu.cylinder_mass(sigma)
            if len(sigma) < 5:
                l = mu.measure_interval(sigma + BitString([0]))
                r = mu.measure_interval(sigma + BitString([1]))
                assert l.lo == iv.lo and l.hi == r.lo and r.hi == iv.hi


def check_shift_invariance() -> None:
    for mu in bundles.bundled_measures().values():
        step = mu.step_len()
        for tau in _all_strings(5):
            total = sum(
                mu.cylinder_mass(rho + tau) for rho in _all_strings(step, step)
            )
            assert total == mu.cylinder_mass(tau)


def check_vn_exact_rate() -> None:
    vn = von_neumann()
    for p in (Fraction(1, 2), Fraction(3, 10), Fraction(1, 4)):
        assert block_rate(vn, Bernoulli(p)) == p * (1 - p)
        assert avg_oi(vn, Bernoulli(p), 2) == p * (1 - p)


def check_oscillating_trace() -> None:
    osc = oscillating_alpha()
    values = [Fraction(osc.out_len_of_length(n), n) for n in range(1, 1 << 10)]
    assert max(values) == 2
    for n in range(1, 1 << 10):
        if n & (n - 1) == 0:
            assert values[n - 1] == 2
        else:
            assert values[n - 1] < 2
        assert values[n - 1] > Fraction(3, 2)


def check_block_rate_stability() -> None:
    vn = von_neumann()
    mu = Bernoulli(Fraction(3, 10))
    base = avg_oi(vn, mu, 2)
    for k in (2, 3, 4):
        assert avg_oi(vn, mu, 2 * k) == base
        assert avg_oi(vn, mu, 2 * k + 1) <= base


def check_peres_base() -> None:
    vn = von_neumann()
    phi1 = peres(1)
    for v in range(1 << 8):
        sigma = BitString.from_int(v, 8)
        assert phi1.apply(sigma) == vn.eval(sigma)
    e1 = peres_expected_length(1, 8, Fraction(1, 2))
    e2 = peres_expected_length(2, 8, Fraction(1, 2))
    assert e1 == 2  # 4 pairs, half produce a bit
    assert e2 >= e1 and e2 <= 8


def check_ddg_exact() -> None:
    tree = bundles.bundled_trees()["half_quarter"]
    assert tree.avg_rt() == Fraction(3, 2)
    assert sorted(tree.distribution()) == [Fraction(1, 4), Fraction(1, 4), Fraction(1, 2)]
    res = ddg_extract(tree, np.array([1, 1, 0, 1, 0, 0], dtype=np.uint8), 3)
    assert res.consumed == 5 and list(res.boundaries) == [2, 3, 5]
    ky = bundles.bundled_trees()["ky_thirds"]
    rt = ky.avg_rt_partial(40)
    assert abs(rt.value - 2) <= rt.remainder_bound


def check_lk_identity_and_oracle() -> None:
    leb = Lebesgue()
    stream = leb.stream(12345)
    res = lk_convert(leb, leb, stream, out_len=512, input_cap=2048)
    stream.reset()
    first = stream.take(512)
    assert np.array_equal(res.output.bits, first)
    # incremental g equals the from-scratch containment definition
    mu, nu = Bernoulli(Fraction(1, 4)), leb
    stream = mu.stream(7)
    res = lk_convert(mu, nu, stream, out_len=None, input_cap=400)
    stream.reset()
    prefix_bits = stream.take(400)
    rng = np.random.default_rng(0)
    for n in sorted(rng.integers(1, 401, size=12).tolist()):
        assert res.g(n) == g_of_prefix(mu, nu, BitString(prefix_bits[:n]))


def check_kautz_small() -> None:
    mu, nu = Bernoulli(Fraction(1, 4)), Lebesgue()
    rep = kautz_check(mu, nu, mu.stream(1), N=500)
    assert rep.violations == 0
    assert rep.witness_count >= 1


def check_roundtrip_small() -> None:
    mu, nu = Bernoulli(Fraction(1, 4)), Lebesgue()
    agreement = lk_roundtrip(mu, nu, mu.stream(3), n=200, input_cap=10**4, out_cap=10**4)
    assert agreement >= 200


def check_mixing_exact() -> None:
    meas = bundles.bundled_measures()
    shift = NShift(2)
    mu = meas["step2"]
    for sigma, tau in itertools.product(_all_strings(3, 1), repeat=2):
        thr = mixing_threshold(shift, tau)
        seq = mixing_average(shift, mu, sigma, tau, thr + 1)
        target = mu.cylinder_mass(sigma) * mu.cylinder_mass(tau)
        assert all(v == target for v in seq[thr:])
    tree = bundles.bundled_trees()["half_quarter"]
    leb = meas["lebesgue"]
    tshift = TreeShift(tree)
    for sigma, tau in itertools.product(_all_strings(3, 1), repeat=2):
        thr = mixing_threshold(tshift, tau)
        seq = mixing_average(tshift, leb, sigma, tau, thr + 1)
        target = leb.cylinder_mass(sigma) * leb.cylinder_mass(tau)
        assert all(v == target for v in seq[thr:])


CHECKS = [
    ("bitseq/rank-interval", check_bitseq_rank_interval),
    ("measures/additivity", check_measure_additivity),
    ("measures/interval-partition", check_measure_interval_partition),
    ("measures/shift-invariance", check_shift_invariance),
    ("generators/vn-exact-rate", check_vn_exact_rate),
    ("generators/oscillating-trace", check_oscillating_trace),
    ("blockmap/rate-stability", check_block_rate_stability),
    ("blockmap/peres-base", check_peres_base),
    ("ddg/exact", check_ddg_exact),
    ("levinkautz/identity-oracle", check_lk_identity_and_oracle),
    ("levinkautz/kautz-bounds", check_kautz_small),
    ("levinkautz/roundtrip", check_roundtrip_small),
    ("ergodic/mixing-exact", check_mixing_exact),
]


def run(verbose: bool = True) -> int:
    failures = 0
    for name, fn in CHECKS:
        try:
            fn()
            if verbose:
                print(f"ok   {name}")
        except Exception as e:  # a selftest must report, not crash
            failures += 1
            if verbose:
                print(f"FAIL {name}: {e}")
    if verbose:
        print(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
