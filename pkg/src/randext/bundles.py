"""Bundled measures, trees, and generators used by the self-test suite,
the ergodicity checks, and the acceptance experiments."""

from __future__ import annotations

from fractions import Fraction

from .blockmap import von_neumann
from .ddg import BaseDdgTree, knuth_yao
from .generators import Generator, duplication, identity, oscillating_alpha
from .measures import Bernoulli, Lebesgue, Markov, Measure, StepBernoulli


def bundled_measures() -> dict[str, Measure]:
    return {
        "lebesgue": Lebesgue(),
        "bernoulli_half": Bernoulli(Fraction(1, 2)),
        "bernoulli_quarter": Bernoulli(Fraction(1, 4)),
        "bernoulli_3_10": Bernoulli(Fraction(3, 10)),
        "step2": StepBernoulli(
            2, [Fraction(1, 2), Fraction(1, 6), Fraction(1, 6), Fraction(1, 6)]
        ),
        "markov": Markov([["9/10", "1/10"], ["1/2", "1/2"]]),
    }


def bundled_lk_pairs() -> list[tuple[Measure, Measure]]:
    """Measure pairs exercised by the conversion experiments."""
    m = bundled_measures()
    return [
        (m["bernoulli_quarter"], m["lebesgue"]),
        (m["lebesgue"], m["bernoulli_quarter"]),
        (m["markov"], m["lebesgue"]),
    ]


def bundled_trees() -> dict[str, BaseDdgTree]:
    return {
        # dyadic: a finite tree with terminals 0, 10, 11
        "half_quarter": knuth_yao(["1/2", "1/4", "1/4"], name="half_quarter"),
        # non-dyadic: one terminal per level, alternating labels
        "ky_thirds": knuth_yao(["2/3", "1/3"], name="ky_thirds"),
    }


def bundled_generators() -> dict[str, Generator]:
    return {
        "identity": identity(),
        "duplication": duplication(),
        "vn": von_neumann(),
        "oscillating": oscillating_alpha(),
    }
