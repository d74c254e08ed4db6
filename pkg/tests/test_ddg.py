from fractions import Fraction

import numpy as np
import pytest

from randext import (
    BitString,
    DdgTree,
    KnuthYaoTree,
    Lebesgue,
    StallError,
    ValidationError,
    avg_rt,
    ddg_extract,
    knuth_yao,
    load_tree,
    make_ddg,
    save_tree,
    tree_from_config,
    tree_shift,
)
from randext.bitseq import ArrayStream
from randext.bundles import bundled_trees


# ---------------------------------------------------------------------------
# construction


def test_make_ddg_fair_coin():
    t = make_ddg([("0", "a"), ("1", "b")])
    assert t.distribution() == [Fraction(1, 2), Fraction(1, 2)]
    assert t.avg_rt() == 1


def test_make_ddg_half_quarter():
    t = make_ddg([("0", "a"), ("10", "b"), ("11", "c")])
    assert t.distribution() == [Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)]
    assert t.avg_rt() == Fraction(3, 2)


def test_make_ddg_prefix_violation():
    with pytest.raises(ValidationError, match="prefix"):
        make_ddg([("0", "a"), ("01", "b")])


def test_make_ddg_mass_errors():
    with pytest.raises(ValidationError, match="deficit"):
        make_ddg([("0", "a"), ("10", "b")])  # mass 3/4
    with pytest.raises(ValidationError, match="degenerate"):
        make_ddg([("", "a")])


def test_knuth_yao_dyadic_is_finite():
    t = knuth_yao(["1/2", "1/4", "1/4"])
    assert isinstance(t, DdgTree)
    layout = {node.to01(): t.labels[lab] for node, lab in t.terminals}
    assert layout == {"0": "a0", "10": "a1", "11": "a2"}


def test_knuth_yao_thirds_alternates():
    t = knuth_yao(["2/3", "1/3"])
    assert isinstance(t, KnuthYaoTree)
    # one terminal per level: odd levels carry the 2/3 label, even the 1/3
    for level in range(1, 12):
        assert t.level_terminal_count(level) == 1
        assert t.level_terminal_labels(level) == ([0] if level % 2 else [1])


def test_knuth_yao_rejects_degenerate():
    with pytest.raises(ValidationError, match="degenerate"):
        knuth_yao(["1"])
    with pytest.raises(ValidationError):
        knuth_yao(["1/2", "1/3"])  # sums to 5/6


def test_lazy_partial_distribution_converges():
    t = knuth_yao(["2/3", "1/3"])
    partial = t.distribution_partial(40)
    assert abs(partial[0] - Fraction(2, 3)) < Fraction(1, 1 << 38)
    assert abs(partial[1] - Fraction(1, 3)) < Fraction(1, 1 << 38)


# ---------------------------------------------------------------------------
# running time


def test_avg_rt_examples():
    assert make_ddg([("0", "a"), ("1", "b")]).avg_rt() == 1
    assert bundled_trees()["half_quarter"].avg_rt() == Fraction(3, 2)
    ky = bundled_trees()["ky_thirds"]
    rt = ky.avg_rt_partial(40)
    assert abs(rt.value - 2) <= rt.remainder_bound
    assert rt.remainder_bound < Fraction(1, 10**9)


def test_avg_rt_dispatcher():
    assert avg_rt(bundled_trees()["half_quarter"]) == Fraction(3, 2)
    res = avg_rt(bundled_trees()["ky_thirds"], tail_tol=Fraction(1, 10**9))
    assert res.remainder_bound <= Fraction(1, 10**9)
    assert abs(res.value - 2) <= res.remainder_bound


# ---------------------------------------------------------------------------
# extraction


def test_extract_fair_coin_identity():
    t = make_ddg([("0", "a"), ("1", "b")])
    bits = np.array([1, 0, 0, 1, 1], dtype=np.uint8)
    res = ddg_extract(t, bits, 5)
    assert res.label_names(t) == ["b", "a", "a", "b", "b"]
    assert res.consumed == 5
    assert list(res.boundaries) == [1, 2, 3, 4, 5]


def test_extract_hand_walk():
    t = bundled_trees()["half_quarter"]
    res = ddg_extract(t, np.array([1, 1, 0, 1, 0, 0], dtype=np.uint8), 3)
    assert res.label_names(t) == ["a2", "a0", "a1"]
    assert res.consumed == 5
    assert list(res.boundaries) == [2, 3, 5]


def test_extract_zero_symbols():
    t = bundled_trees()["half_quarter"]
    res = ddg_extract(t, Lebesgue().stream(1), 0)
    assert len(res.labels) == 0 and res.consumed == 0 and len(res.boundaries) == 0


def test_extract_stall_carries_partials():
    t = bundled_trees()["half_quarter"]
    with pytest.raises(StallError) as ei:
        ddg_extract(t, np.array([1, 1, 0], dtype=np.uint8), 5)
    partial = ei.value.partial
    assert partial.label_names(t) == ["a2", "a0"]
    assert partial.consumed == 3


def test_extract_input_cap_mid_symbol():
    t = bundled_trees()["half_quarter"]
    x = Lebesgue().stream(4)
    with pytest.raises(StallError):
        ddg_extract(t, x, 10**6, input_cap=100)


def test_extract_adversarial_lazy_overflow():
    # all-ones input never reaches a terminal of the thirds tree; the walk
    # must keep expanding and finally stall honestly at the cap
    ky = bundled_trees()["ky_thirds"]
    bits = np.ones(300, dtype=np.uint8)
    with pytest.raises(StallError) as ei:
        ddg_extract(ky, bits, 1, input_cap=300)
    assert ei.value.partial.consumed == 300
    assert len(ei.value.partial.labels) == 0


def test_extract_frequencies_and_rate():
    for name, tree in bundled_trees().items():
        dist = [float(q) for q in tree.distribution()]
        res = ddg_extract(tree, Lebesgue().stream(11), 200_000)
        freqs = np.bincount(res.labels, minlength=len(dist)) / 200_000
        for j, p in enumerate(dist):
            assert abs(freqs[j] - p) < 0.01, name
        rt = (
            float(tree.avg_rt())
            if isinstance(tree, DdgTree)
            else float(tree.avg_rt_partial(60).value)
        )
        assert abs(res.consumed / 200_000 - rt) < 0.02 * rt, name


# ---------------------------------------------------------------------------
# the tree shift


def test_tree_shift_fair_coin_is_one_shift():
    t = make_ddg([("0", "a"), ("1", "b")])
    x = Lebesgue().stream(9)
    ref = x.take(10).copy()
    x.reset()
    assert np.array_equal(tree_shift(t, x).take(9), ref[1:])


def test_tree_shift_drops_leading_block():
    t = bundled_trees()["half_quarter"]
    shifted = tree_shift(t, ArrayStream([1, 1, 0, 1, 0]))
    assert list(shifted.take(3)) == [0, 1, 0]


def test_tree_shift_iteration_matches_boundaries():
    t = bundled_trees()["half_quarter"]
    x = Lebesgue().stream(21)
    bits = x.take(64).copy()
    res = ddg_extract(t, bits, 5)
    for k in range(1, 6):
        x.reset()
        stream = x
        for _ in range(k):
            stream = tree_shift(t, stream)
        start = int(res.boundaries[k - 1])
        assert np.array_equal(stream.take(8), bits[start : start + 8]), k
        stream.reset()
        # a reset must reproduce the same suffix
        assert np.array_equal(stream.take(8), bits[start : start + 8])


def test_tree_shift_stall_on_cap():
    ky = bundled_trees()["ky_thirds"]
    shifted = tree_shift(ky, ArrayStream(np.ones(64, dtype=np.uint8)), cap=32)
    with pytest.raises(StallError):
        shifted.take(1)


def test_tree_shift_invariance_mass_sums():
    # summing the measure of (block + tau) over all terminal blocks
    # reproduces the measure of tau, exactly
    t = bundled_trees()["half_quarter"]
    leb = Lebesgue()
    for ln in range(0, 9):
        for v in range(min(1 << ln, 64)):
            tau = BitString.from_int(v, ln)
            total = sum(
                leb.cylinder_mass(node + tau) for node, _ in t.terminals
            )
            assert total == leb.cylinder_mass(tau)


# ---------------------------------------------------------------------------
# optimality spot check


def _split_terminal(terminals, idx):
    node, label = terminals[idx]
    return (
        terminals[:idx]
        + [(node + BitString([0]), label), (node + BitString([1]), label)]
        + terminals[idx + 1 :]
    )


def test_knuth_yao_minimality_spot_check():
    base = bundled_trees()["half_quarter"]
    ky_rt = base.avg_rt()
    rng = np.random.default_rng(33)
    labels = base.labels
    for _ in range(20):
        terms = [(node, labels[lab]) for node, lab in base.terminals]
        for _ in range(int(rng.integers(1, 4))):
            terms = _split_terminal(terms, int(rng.integers(0, len(terms))))
        other = make_ddg(terms)
        assert other.distribution() == base.distribution()
        assert other.avg_rt() >= ky_rt


# ---------------------------------------------------------------------------
# files and configs


def test_tree_file_roundtrip(tmp_path):
    t = bundled_trees()["half_quarter"]
    path = tmp_path / "tree.tsv"
    save_tree(path, t)
    assert "10\ta1" in path.read_text()
    back = load_tree(path)
    assert back.avg_rt() == t.avg_rt()
    assert back.distribution() == t.distribution()


def test_tree_from_config():
    t = tree_from_config("ky:2/3,1/3")
    assert isinstance(t, KnuthYaoTree)
    t2 = tree_from_config("dist:1/2,1/4,1/4")
    assert isinstance(t2, DdgTree)


def test_generator_trailing_block_is_empty():
    gen = bundled_trees()["half_quarter"].generator()
    assert gen.eval(BitString("1")) == ()
    assert gen.eval(BitString("11")) == (2,)
    assert gen.eval(BitString("111")) == (2,)  # trailing "1" incomplete
    assert gen.eval(BitString("110")) == (2, 0)
