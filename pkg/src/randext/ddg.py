"""Discrete distribution generating trees.

A DDG tree is a prefix-free set of labelled terminal bit strings; walking
fair coin flips from the root and emitting the label of each terminal
reached samples the induced distribution.  Finite trees are explicit;
non-dyadic distributions get the lazily-expanded binary-expansion tree
(one terminal per label per level wherever the label's probability has a
1-bit), whose truncations carry certified tail bounds.

Sibling layout within a level: terminals occupy the lexicographically
smallest slots in label order, remaining slots stay internal.  The induced
distribution and average running time are invariant under this choice.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .bitseq import BitStream, BitString, as_stream
from .errors import StallError, ValidationError
from .generators import Generator
from .measures import parse_rational

DEFAULT_EXPAND_DEPTH = 64
_WALK_CHUNK = 1 << 16


class BaseDdgTree:
    """Shared interface: label alphabet, trie tables, walks, running time."""

    labels: list[str]

    def alphabet_size(self) -> int:
        return len(self.labels)

    def child_table(self, min_depth: int) -> np.ndarray:
        """int32 (S,2) trie transitions covering at least `min_depth` levels.

        Encoding: >= 0 internal state; negative v is a terminal with label
        -(v+1); the OVERFLOW sentinel marks the expansion boundary of lazy
        trees.  State indices are stable across deeper expansions.
        """
        raise NotImplementedError

    def table_depth(self) -> int:
        raise NotImplementedError

    def distribution(self) -> list[Fraction]:
        """Exact induced label masses (sum to 1)."""
        raise NotImplementedError

    def level_terminal_count(self, i: int) -> int:
        raise NotImplementedError

    def is_finite(self) -> bool:
        raise NotImplementedError

    def first_block_len(self, bits: np.ndarray) -> Optional[int]:
        """Length of the leading terminal block of `bits`, if one completes."""
        child = self.child_table(DEFAULT_EXPAND_DEPTH)
        s = 0
        for i, b in enumerate(bits):
            v = child[s, b]
            if v == _kernels.OVERFLOW:
                child = self.child_table(2 * self.table_depth())
                v = child[s, b]
            if v < 0:
                return i + 1
            s = int(v)
        return None

    def generator(self) -> "DdgGenerator":
        return DdgGenerator(self)


class DdgTree(BaseDdgTree):
    """A finite DDG tree given by explicit labelled terminals."""

    def __init__(self, terminals: Sequence[tuple[BitString, str]], name: str = "ddg"):
        if not terminals:
            raise ValidationError("tree needs at least one terminal")
        self.name = name
        seen: dict[BitString, str] = {}
        label_names: list[str] = []
        for node, label in terminals:
            node = node if isinstance(node, BitString) else BitString(node)
            if len(node) == 0:
                raise ValidationError(
                    "degenerate tree: a length-0 terminal would emit symbols "
                    "without consuming bits"
                )
            if node in seen:
                raise ValidationError(f"duplicate terminal {node.to01()!r}")
            seen[node] = label
            if label not in label_names:
                label_names.append(label)
        self.labels = label_names
        self.terminals = [
            (node, label_names.index(lab)) for node, lab in seen.items()
        ]
        # prefix-freeness: no terminal may be a proper prefix of another
        term_set = set(seen)
        for node in term_set:
            for i in range(1, len(node)):
                if node[:i] in term_set:
                    raise ValidationError(
                        f"not prefix-free: {node[:i].to01()!r} is a prefix of "
                        f"{node.to01()!r}"
                    )
        mass = sum(Fraction(1, 1 << len(node)) for node, _ in self.terminals)
        if mass != 1:
            gap = 1 - mass
            kind = "deficit" if gap > 0 else "excess"
            raise ValidationError(
                f"terminal mass {kind}: total {mass}, gap {gap} "
                "(terminals must carry Lebesgue mass exactly 1)"
            )
        self.max_depth = max(len(node) for node, _ in self.terminals)
        self._child = self._build_trie()

    def _build_trie(self) -> np.ndarray:
        term = {node: lab for node, lab in self.terminals}
        index: dict[BitString, int] = {BitString(): 0}
        order = [BitString()]
        # internal nodes are exactly the proper prefixes of terminals
        for node, _ in self.terminals:
            for i in range(1, len(node)):
                p = node[:i]
                if p not in index and p not in term:
                    index[p] = len(order)
                    order.append(p)
        child = np.zeros((len(order), 2), dtype=np.int32)
        for p, idx in index.items():
            for b in (0, 1):
                q = p + BitString([b])
                if q in term:
                    child[idx, b] = -(term[q] + 1)
                else:
                    child[idx, b] = index[q]
        return child

    def child_table(self, min_depth: int = 0) -> np.ndarray:
        return self._child

    def table_depth(self) -> int:
        return self.max_depth

    def is_finite(self) -> bool:
        return True

    def level_terminal_count(self, i: int) -> int:
        return sum(1 for node, _ in self.terminals if len(node) == i)

    def distribution(self) -> list[Fraction]:
        dist = [Fraction(0)] * len(self.labels)
        for node, lab in self.terminals:
            dist[lab] += Fraction(1, 1 << len(node))
        return dist

    def avg_rt(self) -> Fraction:
        """Exact expected bits consumed per emitted symbol."""
        return sum(
            (Fraction(len(node), 1 << len(node)) for node, _ in self.terminals),
            Fraction(0),
        )

    def __repr__(self):
        return f"<DdgTree {self.name}: {len(self.terminals)} terminals>"


class KnuthYaoTree(BaseDdgTree):
    """Lazily expanded binary-expansion tree for a rational distribution.

    Level i holds one terminal labelled j exactly when bit i of p_j is 1.
    Internal node counts stay bounded for rational probabilities, so the
    trie is effectively a finite automaton unrolled by level.
    """

    def __init__(
        self,
        dist: Sequence[Fraction],
        labels: Optional[Sequence[str]] = None,
        name: str = "ky",
    ):
        self.dist = list(dist)
        self.labels = list(labels) if labels else [f"a{j}" for j in range(len(dist))]
        self.name = name
        self._tables: dict = {"depth": 0, "child": None, "offsets": [0], "internal": [1]}
        self._ensure_depth(DEFAULT_EXPAND_DEPTH)

    def _prob_bit(self, j: int, i: int) -> int:
        p = self.dist[j]
        return (p.numerator << i) // p.denominator & 1

    def level_terminal_count(self, i: int) -> int:
        if i < 1:
            return 0
        return sum(self._prob_bit(j, i) for j in range(len(self.dist)))

    def level_terminal_labels(self, i: int) -> list[int]:
        return [j for j in range(len(self.dist)) if self._prob_bit(j, i)]

    def _ensure_depth(self, depth: int) -> None:
        if self._tables["depth"] >= depth and self._tables["child"] is not None:
            return
        internal = [1]  # internal node count per level, starting at the root
        offsets = [0]
        for i in range(1, depth + 1):
            t = self.level_terminal_count(i)
            slots = 2 * internal[-1]
            if t > slots:
                raise ValidationError("invalid distribution: more terminals than slots")
            offsets.append(offsets[-1] + internal[-1])
            internal.append(slots - t)
        total_states = offsets[-1] + internal[-1]
        child = np.full((max(total_states, 1), 2), _kernels.OVERFLOW, dtype=np.int32)
        for i in range(1, depth + 1):
            t = self.level_terminal_count(i)
            term_labels = self.level_terminal_labels(i)
            for q in range(internal[i - 1]):
                parent = offsets[i - 1] + q
                for b in (0, 1):
                    s = 2 * q + b
                    if s < t:
                        child[parent, b] = -(term_labels[s] + 1)
                    elif i < depth or internal[i] == 0:
                        child[parent, b] = offsets[i] + (s - t)
                    # else: leave OVERFLOW at the expansion frontier
        self._tables = {
            "depth": depth,
            "child": child,
            "offsets": offsets,
            "internal": internal,
        }

    def child_table(self, min_depth: int = 0) -> np.ndarray:
        self._ensure_depth(max(min_depth, DEFAULT_EXPAND_DEPTH))
        return self._tables["child"]

    def table_depth(self) -> int:
        return self._tables["depth"]

    def is_finite(self) -> bool:
        return False

    def distribution(self) -> list[Fraction]:
        return list(self.dist)

    def distribution_partial(self, levels: int) -> list[Fraction]:
        """Mass per label from terminals within the first `levels` levels."""
        out = [Fraction(0)] * len(self.dist)
        for i in range(1, levels + 1):
            for j in self.level_terminal_labels(i):
                out[j] += Fraction(1, 1 << i)
        return out

    def avg_rt_partial(self, levels: int) -> "AvgRt":
        """Truncated running-time sum with a certified geometric tail bound.

        At most one terminal per label per level, so the remainder is at
        most k * sum_{i>L} i 2^-i = k (L+2) 2^-L.
        """
        value = Fraction(0)
        for i in range(1, levels + 1):
            value += Fraction(i * self.level_terminal_count(i), 1 << i)
        k = len(self.dist)
        bound = Fraction(k * (levels + 2), 1 << levels)
        return AvgRt(value=value, remainder_bound=bound, levels=levels)

    def __repr__(self):
        return f"<KnuthYaoTree {self.name}: {self.dist}>"


@dataclass
class AvgRt:
    """A running-time value with a certified truncation remainder."""

    value: Fraction
    remainder_bound: Fraction
    levels: Optional[int] = None

    def __float__(self) -> float:
        return float(self.value)


def make_ddg(
    terminals: Sequence[tuple[Union[str, BitString], str]], name: str = "ddg"
) -> DdgTree:
    """Validate an explicit terminal list and build the finite tree."""
    return DdgTree([(BitString(n) if not isinstance(n, BitString) else n, l)
                    for n, l in terminals], name=name)


def knuth_yao(
    dist: Sequence, tail_tol: Fraction = Fraction(1, 10**9), name: str = "ky"
) -> BaseDdgTree:
    """The binary-expansion tree of a rational distribution.

    Dyadic distributions produce a finite tree; anything else produces the
    lazy tree whose reports are truncated at mass 1 - tail_tol with
    certified bounds.  Single-outcome distributions are rejected (they
    would emit symbols without consuming bits).
    """
    probs = [parse_rational(q) for q in dist]
    if len(probs) < 2:
        raise ValidationError("degenerate distribution: need at least two outcomes")
    if any(not (0 < q <= 1) for q in probs):
        raise ValidationError("probabilities must lie in (0,1]")
    if sum(probs) != 1:
        raise ValidationError(f"probabilities sum to {sum(probs)}, not 1")
    tail_tol = parse_rational(tail_tol)
    if all((q.denominator & (q.denominator - 1)) == 0 for q in probs):
        # dyadic: the expansion terminates, enumerate terminals explicitly
        lazy = KnuthYaoTree(probs, name=name)
        max_level = max(q.denominator.bit_length() - 1 for q in probs)
        terminals = _enumerate_terminals(lazy, max_level)
        return DdgTree(
            [(node, f"a{j}") for node, j in terminals], name=name
        )
    return KnuthYaoTree(probs, name=name)


def _enumerate_terminals(tree: KnuthYaoTree, max_level: int) -> list[tuple[BitString, int]]:
    """Walk the slot layout level by level, materializing terminal paths."""
    internal_paths = [BitString()]
    out: list[tuple[BitString, int]] = []
    for i in range(1, max_level + 1):
        slots = [p + BitString([b]) for p in internal_paths for b in (0, 1)]
        term_labels = tree.level_terminal_labels(i)
        for s, j in enumerate(term_labels):
            out.append((slots[s], j))
        internal_paths = slots[len(term_labels) :]
        if not internal_paths:
            break
    if internal_paths:
        raise ValidationError("expansion did not terminate at the claimed level")
    return out


def avg_rt(tree: BaseDdgTree, tail_tol: Fraction = Fraction(1, 10**9)):
    """Average bits consumed per symbol: exact Fraction for finite trees,
    an AvgRt with certified remainder for lazy ones."""
    if isinstance(tree, DdgTree):
        return tree.avg_rt()
    tail_tol = parse_rational(tail_tol)
    k = tree.alphabet_size()
    levels = 1
    while Fraction(k * (levels + 2), 1 << levels) > tail_tol:
        levels += 1
        if levels > 4096:
            raise ValidationError("tail tolerance unreachably small")
    return tree.avg_rt_partial(levels)


# ---------------------------------------------------------------------------
# Extraction


@dataclass
class ExtractResult:
    labels: np.ndarray  # int32 label indices, one per emitted symbol
    consumed: int  # total input bits consumed (including a trailing partial block)
    boundaries: np.ndarray  # int64 absolute positions where blocks completed

    def label_names(self, tree: BaseDdgTree) -> list[str]:
        return [tree.labels[i] for i in self.labels]


def ddg_extract(
    tree: BaseDdgTree,
    x: BitStream,
    count: int,
    input_cap: Optional[int] = None,
) -> ExtractResult:
    """Emit `count` symbols by repeated root-to-terminal walks from x.

    Returns the labels, the total bits consumed, and the block boundaries.
    Raises a "stalled" StallError holding the partial ExtractResult when
    the input cap (or the stream) is exhausted mid-extraction.
    """
    if count < 0:
        raise ValidationError("count must be nonnegative")
    x = as_stream(x)
    x.reset()
    if input_cap is None:
        input_cap = 1 << 62
    labels = np.empty(count, dtype=np.int32)
    bounds = np.empty(count, dtype=np.int64)
    child = tree.child_table(DEFAULT_EXPAND_DEPTH)
    emitted = 0
    consumed = 0
    state = 0
    pending = np.empty(0, dtype=np.uint8)
    exhausted = False
    while emitted < count:
        if pending.size == 0:
            room = input_cap - consumed
            if room <= 0 or exhausted:
                raise StallError(
                    f"stalled after {emitted}/{count} symbols, {consumed} bits in",
                    partial=ExtractResult(labels[:emitted], consumed, bounds[:emitted]),
                )
            try:
                pending = x.take(min(_WALK_CHUNK, room))
            except StallError as e:
                pending = e.partial
                exhausted = True
                continue
        n_emit, n_cons, state, status = _kernels.walk_tree(
            pending, child, state, labels[emitted:], bounds[emitted:],
            consumed, count - emitted,
        )
        emitted += n_emit
        consumed += n_cons
        pending = pending[n_cons:]
        if status == _kernels.WALK_DEEP:
            child = tree.child_table(2 * tree.table_depth())
    return ExtractResult(labels[:count], consumed, bounds[:count])


class TreeShiftStream(BitStream):
    """The parent stream with its leading terminal block removed."""

    def __init__(self, tree: BaseDdgTree, parent: BitStream, cap: int = 1 << 16):
        super().__init__(stream_id=f"treeshift({parent.stream_id})")
        self.tree = tree
        self.cap = cap
        self._parent = parent
        self._skipped = False

    def _skip_block(self) -> None:
        child = self.tree.child_table(DEFAULT_EXPAND_DEPTH)
        s = 0
        for i in range(self.cap):
            b = self._parent.next()
            v = child[s, b]
            if v == _kernels.OVERFLOW:
                child = self.tree.child_table(2 * self.tree.table_depth())
                v = child[s, b]
            if v < 0:
                self._skipped = True
                return
            s = int(v)
        raise StallError(
            f"stalled: no terminal block within {self.cap} bits", partial=None
        )

    def _fill(self, k: int) -> np.ndarray:
        if not self._skipped:
            self._skip_block()
        try:
            return self._parent.take(k)
        except StallError as e:
            return e.partial

    def _rewind(self) -> None:
        self._parent.reset()
        self._skipped = False


def tree_shift(tree: BaseDdgTree, x: BitStream, cap: int = 1 << 16) -> TreeShiftStream:
    """Remove the leading terminal block; iterating removes one block each."""
    return TreeShiftStream(tree, as_stream(x), cap=cap)


# ---------------------------------------------------------------------------
# The induced generator: emits one symbol per complete terminal block, with
# a trailing incomplete block contributing nothing.


class DdgGenerator(Generator):
    def __init__(self, tree: BaseDdgTree):
        self.tree = tree
        self.name = f"ddg({getattr(tree, 'name', 'tree')})"

    def eval(self, sigma: BitString) -> tuple:
        bits = sigma.bits
        labels = np.empty(bits.size, dtype=np.int32)
        bounds = np.empty(bits.size, dtype=np.int64)
        child = self.tree.child_table(DEFAULT_EXPAND_DEPTH)
        emitted = 0
        offset = 0
        state = 0
        pending = bits
        while True:
            n_emit, n_cons, state, status = _kernels.walk_tree(
                pending, child, state, labels[emitted:], bounds[emitted:],
                offset, bits.size,
            )
            emitted += n_emit
            offset += n_cons
            pending = pending[n_cons:]
            if status == _kernels.WALK_DEEP:
                child = self.tree.child_table(2 * self.tree.table_depth())
                continue
            break
        return tuple(int(l) for l in labels[:emitted])

    def out_len(self, sigma: BitString) -> int:
        return len(self.eval(sigma))

    def out_len_trace(self, bits: np.ndarray, ns: Sequence[int]) -> list[int]:
        try:
            res = ddg_extract(self.tree, bits, count=bits.size, input_cap=bits.size)
            bounds = res.boundaries
        except StallError as e:
            bounds = e.partial.boundaries
        return [int(np.searchsorted(bounds, n, side="right")) for n in ns]

    def out_len_batch(self, rows: np.ndarray) -> np.ndarray:
        child = self.tree.child_table(DEFAULT_EXPAND_DEPTH)
        counts = _kernels.count_blocks_batch(np.ascontiguousarray(rows), child)
        for i in np.nonzero(counts < 0)[0]:
            counts[i] = self.out_len(BitString(rows[i]))
        return counts


# ---------------------------------------------------------------------------
# Tree files: one line per terminal, "node<TAB>label".  Lazy trees are
# configured by distribution instead ("ky:2/3,1/3").


def save_tree(path, tree: DdgTree) -> None:
    if not isinstance(tree, DdgTree):
        raise ValidationError("only finite trees have a terminal-list file form")
    with open(path, "w") as fh:
        for node, lab in tree.terminals:
            fh.write(f"{node.to01()}\t{tree.labels[lab]}\n")


def load_tree(path, name: Optional[str] = None) -> DdgTree:
    terminals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'node<TAB>label'")
            terminals.append((parts[0], parts[1]))
    return make_ddg(terminals, name=name or f"tree:{path}")


def tree_from_config(cfg: str, tail_tol=Fraction(1, 10**9)) -> BaseDdgTree:
    """Parse 'ky:2/3,1/3', 'dist:1/2,1/4,1/4', or a terminal-list file path."""
    text = cfg.strip()
    head, _, rest = text.partition(":")
    if head.lower() in ("ky", "dist"):
        return knuth_yao(rest.split(","), tail_tol=tail_tol, name=text)
    return load_tree(text)
