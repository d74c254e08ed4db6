"""Exact mixing checks and empirical ergodic averages for the two shifts.

The block shift (drop n bits) and the tree shift (drop one terminal block)
are the transformations whose ergodicity underlies every rate theorem in
this package.  ``mixing_average`` computes the correlation sequence
mu(T^-i [sigma] intersect [tau]) exactly; ``birkhoff_average`` estimates
time averages of bounded observables along sampled streams.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import ceil
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .bitseq import BitStream, BitString, as_stream
from .blockmap import BlockMap, _powers
from .ddg import BaseDdgTree, DdgTree, ddg_extract
from .errors import StallError, ValidationError
from .measures import Measure, pattern_mass

MAX_PATTERN_BITS = 12
MAX_SHIFT_STEPS = 8
MAX_TREE_TUPLES = 200_000


@dataclass(frozen=True)
class NShift:
    """Drop the first n bits."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("shift step must be >= 1")


@dataclass(frozen=True)
class TreeShift:
    """Drop the leading terminal block of a DDG tree."""

    tree: BaseDdgTree


ShiftSpec = Union[NShift, TreeShift]


def mixing_threshold(shift: ShiftSpec, tau: BitString) -> int:
    """Index from which the mixing sequence is provably constant at
    mu(sigma) mu(tau).

    For the n-shift: ceil(|tau|/n) + 1 (the preimage blocks clear tau).
    For a tree shift: ceil(|tau| / min block length) — after that many
    shifts every compatible block composition extends tau, which is what
    the product identity needs.  (At smaller indices the identity can
    genuinely fail: with terminals {0,10,11}, sigma=0, tau=00, a single
    shift gives mass 1/4, not 1/8, because every sequence in [00] has
    first block 0.)
    """
    if isinstance(shift, NShift):
        return ceil(len(tau) / shift.n) + 1
    tree = shift.tree
    if isinstance(tree, DdgTree):
        min_block = min(len(node) for node, _ in tree.terminals)
    else:
        min_block = next(
            i for i in range(1, 64) if tree.level_terminal_count(i) > 0
        )
    return ceil(len(tau) / min_block)


def mixing_average(
    shift: ShiftSpec,
    mu: Measure,
    sigma: BitString,
    tau: BitString,
    K: int,
) -> list[Fraction]:
    """Exact masses mu(T^-i [sigma] intersect [tau]) for i = 0..K.

    The preimage T^-i [sigma] is expanded as a union of cylinders: every
    length-(n i) word prepended to sigma for the n-shift, every i-tuple of
    terminal blocks for the tree shift.  Feasibility is bounded; oversize
    requests are refused.
    """
    if K < 0:
        raise ValidationError("K must be nonnegative")
    if isinstance(shift, NShift):
        if len(sigma) + len(tau) > MAX_PATTERN_BITS or K > MAX_SHIFT_STEPS:
            raise ValidationError(
                "infeasible expansion: need |sigma|+|tau| <= "
                f"{MAX_PATTERN_BITS} and K <= {MAX_SHIFT_STEPS}"
            )
        out = []
        for i in range(K + 1):
            offset = shift.n * i
            L = max(len(tau), offset + len(sigma))
            pattern = np.full(L, -1, dtype=np.int64)
            pattern[: len(tau)] = tau.bits
            ok = True
            for j, b in enumerate(sigma.bits):
                pos = offset + j
                if pattern[pos] >= 0 and pattern[pos] != b:
                    ok = False
                    break
                pattern[pos] = b
            out.append(pattern_mass(mu, pattern) if ok else Fraction(0))
        return out
    if isinstance(shift, TreeShift):
        tree = shift.tree
        if not isinstance(tree, DdgTree):
            raise ValidationError("infeasible expansion: tree-shift mixing needs a finite tree")
        blocks = [node for node, _ in tree.terminals]
        if len(blocks) ** K > MAX_TREE_TUPLES:
            raise ValidationError(
                f"infeasible expansion: {len(blocks)}^{K} block tuples"
            )
        out = []
        for i in range(K + 1):
            total = Fraction(0)
            for combo in itertools.product(blocks, repeat=i):
                w = BitString(np.concatenate([c.bits for c in combo] + [sigma.bits]))
                total += _cylinder_intersection_mass(mu, w, tau)
            out.append(total)
        return out
    raise ValidationError(f"unknown shift spec {shift!r}")


def _cylinder_intersection_mass(mu: Measure, w: BitString, tau: BitString) -> Fraction:
    """mu([w] intersect [tau]): mass of the longer word if compatible, else 0."""
    shorter, longer = (w, tau) if len(w) <= len(tau) else (tau, w)
    if not shorter.is_prefix_of(longer):
        return Fraction(0)
    return mu.cylinder_mass(longer)


# ---------------------------------------------------------------------------
# Observables and Birkhoff averages


@dataclass
class Observable:
    """A bounded function of a stream suffix.

    ``prefix_need`` is how many leading bits determine the value; None
    means terminal-delimited (the value is determined once a DDG block
    completes).  ``eval_many`` optionally vectorizes evaluation over many
    suffix start positions of one bit array.
    """

    name: str
    eval: Callable[[np.ndarray], float]
    bound: float
    prefix_need: Optional[int] = None
    eval_many: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None


def constant_observable(c: float) -> Observable:
    return Observable(
        name=f"const({c})",
        eval=lambda view: c,
        bound=abs(c),
        prefix_need=0,
        eval_many=lambda bits, starts: np.full(starts.size, c, dtype=np.float64),
    )


def block_oi_observable(bm: BlockMap) -> Observable:
    """F(X) = |table(first block of X)| / n for a block map."""
    n = bm.n
    lens = bm.out_lens

    def ev(view: np.ndarray) -> float:
        v = int(view[:n] @ _powers(n))
        return lens[v] / n

    def ev_many(bits: np.ndarray, starts: np.ndarray) -> np.ndarray:
        windows = bits[starts[:, None] + np.arange(n)]
        vals = windows @ _powers(n)
        return lens[vals] / n

    return Observable(
        name=f"block_oi({bm.name})",
        eval=ev,
        bound=float(lens.max()) / n,
        prefix_need=n,
        eval_many=ev_many,
    )


def block_len_observable(tree: BaseDdgTree) -> Observable:
    """F(X) = number of bits in the leading terminal block of X."""

    def ev(view: np.ndarray) -> float:
        got = tree.first_block_len(view)
        if got is None:
            raise StallError("no terminal block within the available bits")
        return float(got)

    obs = Observable(
        name="block_len",
        eval=ev,
        bound=float("inf"),  # unbounded for lazy trees; finite per finite tree
        prefix_need=None,
    )
    obs.tree = tree  # used by the tree-shift fast path
    return obs


def birkhoff_average(
    shift: ShiftSpec,
    f: Observable,
    x: BitStream,
    K: int,
    input_cap: Optional[int] = None,
) -> float:
    """(1/K) sum of f over the first K shift iterates of x."""
    if K < 1:
        raise ValidationError("K must be >= 1")
    x = as_stream(x)
    x.reset()
    if isinstance(shift, NShift):
        need = K * shift.n + (f.prefix_need or 0)
        if input_cap is not None and need > input_cap:
            raise StallError(f"need {need} bits, cap is {input_cap}")
        bits = x.take(need)
        starts = np.arange(K, dtype=np.int64) * shift.n
        if f.eval_many is not None:
            return float(np.mean(f.eval_many(bits, starts)))
        return float(np.mean([f.eval(bits[s:]) for s in starts]))
    if isinstance(shift, TreeShift):
        tree = shift.tree
        bits, bounds = _collect_blocks(tree, x, K, input_cap)
        starts = np.concatenate([[0], bounds[: K - 1]])
        if getattr(f, "tree", None) is tree and f.name == "block_len":
            lens = np.diff(np.concatenate([[0], bounds[:K]]))
            return float(np.mean(lens))
        return float(np.mean([f.eval(bits[int(s) :]) for s in starts]))
    raise ValidationError(f"unknown shift spec {shift!r}")


def _collect_blocks(tree: BaseDdgTree, x: BitStream, K: int, input_cap: Optional[int]):
    """Bits and block boundaries covering K complete blocks of x."""
    cap = input_cap if input_cap is not None else 1 << 62
    size = min(cap, 8 * K + 4096)
    while True:
        x.reset()
        bits = x.take(size)
        try:
            res = ddg_extract(tree, bits, count=K, input_cap=size)
            return bits, res.boundaries
        except StallError:
            if size >= cap:
                raise StallError(
                    f"tree-shift stalled: fewer than {K} blocks within {cap} bits"
                ) from None
            size = min(cap, 2 * size)
