"""Block maps and block extractors.

An n-block map applies a fixed table to consecutive length-n blocks of the
input and concatenates the results, ignoring a trailing incomplete block;
the classic example is the two-block coin unbiasing table (10 -> 0,
01 -> 1, 00 and 11 discarded).  The iterated-reuse family built on that
table (``peres``) is also here, along with the exact block extraction rate
and the n-shift.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .bitseq import BitStream, BitString, as_stream
from .errors import ValidationError
from .generators import Generator
from .measures import Bernoulli, Lebesgue, Measure, StepBernoulli

TableLike = Mapping[Union[str, BitString], Union[str, BitString]]


def _powers(n: int) -> np.ndarray:
    return 1 << np.arange(n - 1, -1, -1, dtype=np.int64)


class BlockMap(Generator):
    """Generator acting independently on consecutive length-n blocks."""

    def __init__(self, n: int, outputs: Sequence[BitString], name: str = "block"):
        if n < 1:
            raise ValidationError("block length must be >= 1")
        if len(outputs) != (1 << n):
            raise ValidationError(
                f"need outputs for all {1 << n} blocks, got {len(outputs)}"
            )
        self.n = n
        self.block_size = n
        self.outputs = [BitString(o) for o in outputs]
        self.out_lens = np.array([len(o) for o in self.outputs], dtype=np.int64)
        if not self.out_lens.any():
            raise ValidationError("trivial block map: every block maps to the empty string")
        self.name = name

    def table(self) -> dict[BitString, BitString]:
        return {
            BitString.from_int(v, self.n): out for v, out in enumerate(self.outputs)
        }

    def _block_values(self, bits: np.ndarray) -> np.ndarray:
        k = bits.size // self.n
        if k == 0:
            return np.empty(0, dtype=np.int64)
        return bits[: k * self.n].reshape(k, self.n) @ _powers(self.n)

    def eval(self, sigma: BitString) -> BitString:
        vals = self._block_values(sigma.bits)
        if vals.size == 0:
            return BitString()
        parts = [self.outputs[int(v)].bits for v in vals]
        return BitString(np.concatenate(parts) if parts else ())

    def out_len(self, sigma: BitString) -> int:
        return int(self.out_lens[self._block_values(sigma.bits)].sum())

    def out_len_trace(self, bits: np.ndarray, ns: Sequence[int]) -> list[int]:
        vals = self._block_values(bits)
        cum = np.concatenate([[0], np.cumsum(self.out_lens[vals])])
        return [int(cum[min(n // self.n, vals.size)]) for n in ns]

    def out_len_batch(self, rows: np.ndarray) -> np.ndarray:
        m, width = rows.shape
        k = width // self.n
        if k == 0:
            return np.zeros(m, dtype=np.int64)
        vals = rows[:, : k * self.n].reshape(m, k, self.n) @ _powers(self.n)
        return self.out_lens[vals].sum(axis=1)

    def exact_avg(self, mu: Measure, n: int) -> Optional[Fraction]:
        return _exact_avg_vectorized(self, mu, n)

    def closed_form_avg(self, mu: Measure, m: int) -> Optional[Fraction]:
        """E|phi| over length-m input is (full blocks) x (per-block mean)."""
        try:
            rate = block_rate(self, mu)
        except ValidationError:
            return None
        return Fraction((m // self.n) * self.n, m) * rate


def make_block_map(n: int, table: TableLike, name: str = "block") -> BlockMap:
    """Validate a full table on length-n inputs and build the block map.

    Rejects tables with missing entries and the all-empty table.
    """
    outputs: list[Optional[BitString]] = [None] * (1 << n)
    for key, val in table.items():
        key_bs = key if isinstance(key, BitString) else BitString(key)
        if len(key_bs) != n:
            raise ValidationError(f"table key {key_bs!r} does not have length {n}")
        outputs[key_bs.lex_rank()] = val if isinstance(val, BitString) else BitString(val)
    missing = sum(1 for o in outputs if o is None)
    if missing:
        raise ValidationError(f"partial table: {missing} of {1 << n} entries missing")
    return BlockMap(n, outputs, name=name)


def von_neumann() -> BlockMap:
    """The two-block unbiasing map: 10 -> 0, 01 -> 1, 00 and 11 discarded."""
    return make_block_map(
        2, {"10": "0", "01": "1", "00": "", "11": ""}, name="vn"
    )


def _exact_avg_vectorized(bm: BlockMap, mu: Measure, m: int) -> Optional[Fraction]:
    """Exact Avg over all 2^m strings via integer-weight enumeration.

    Works for i.i.d.-structured measures (Bernoulli / Lebesgue / n-step);
    the mass of each string is an integer over a common power denominator,
    so the whole expectation is two integer dot products.  Returns None
    when the measure has no such structure or the enumeration would be
    too large.
    """
    if m > 22:
        return None
    if isinstance(mu, (Lebesgue, Bernoulli)):
        if isinstance(mu, Bernoulli):
            a, b = mu.p.numerator, mu.p.denominator
            bit_nums = (b - a, a)  # integer weights of bit 0 / bit 1
            den_base = b
        else:
            bit_nums, den_base = (1, 1), 2
        if max(bit_nums) ** m > (1 << 62):
            return None
        values = np.arange(1 << m, dtype=np.int64)
        ones = np.zeros(1 << m, dtype=np.int64)
        for i in range(m):
            ones += (values >> i) & 1
        mass_num = np.int64(bit_nums[1]) ** ones * np.int64(bit_nums[0]) ** (m - ones)
        lens = _lens_for_all(bm, m)
        total = sum(int(a) * int(b) for a, b in zip(mass_num, lens))
        return Fraction(total, den_base**m * m)
    if isinstance(mu, StepBernoulli):
        if not mu.is_positive:
            return None
        s = mu.n
        den = np.lcm.reduce(
            np.array([q.denominator for q in mu.table], dtype=object)
        )
        den = int(den)
        t_nums = [int(q * den) for q in mu.table]
        k, r = divmod(m, s)
        # remainder marginal numerators over the same denominator
        marg_nums = [int(mu.marginal_mass(r, v) * den) for v in range(1 << r)]
        if max(t_nums, default=1) ** k * max(marg_nums, default=1) > (1 << 62):
            return None
        values = np.arange(1 << m, dtype=np.int64)
        mass_num = np.ones(1 << m, dtype=np.int64)
        for j in range(k):
            shift = m - (j + 1) * s
            block_vals = (values >> shift) & ((1 << s) - 1)
            mass_num *= np.array(t_nums, dtype=np.int64)[block_vals]
        if r:
            tail_vals = values & ((1 << r) - 1)
            mass_num *= np.array(marg_nums, dtype=np.int64)[tail_vals]
        else:
            mass_num *= den
        lens = _lens_for_all(bm, m)
        total = sum(int(a) * int(b) for a, b in zip(mass_num, lens))
        return Fraction(total, den ** (k + 1) * m)
    return None


def _lens_for_all(bm: BlockMap, m: int) -> np.ndarray:
    """|bm(sigma)| for every length-m string, indexed by lexicographic rank."""
    values = np.arange(1 << m, dtype=np.int64)
    k = m // bm.n
    lens = np.zeros(1 << m, dtype=np.int64)
    for j in range(k):
        shift = m - (j + 1) * bm.n
        block_vals = (values >> shift) & ((1 << bm.n) - 1)
        lens += bm.out_lens[block_vals]
    return lens


def block_rate(bm: BlockMap, mu: Measure) -> Fraction:
    """Exact extraction rate of a block map under a compatible i.i.d. measure.

    The measure's step must be 1 (plain Bernoulli / Lebesgue) or equal the
    block length; anything else is rejected rather than silently re-blocked.
    The rate equals the exact average ratio at one block length.
    """
    if isinstance(mu, (Lebesgue, Bernoulli)):
        pass
    elif isinstance(mu, StepBernoulli):
        if not mu.is_positive:
            raise ValidationError("block rate requires a positive measure")
        if mu.n != bm.n and mu.n != 1:
            raise ValidationError(
                f"measure step {mu.n} incompatible with block length {bm.n}"
            )
    else:
        raise ValidationError(f"block rate undefined for measure {mu.name()}")
    total = Fraction(0)
    for v in range(1 << bm.n):
        total += mu.cylinder_mass(BitString.from_int(v, bm.n)) * int(bm.out_lens[v])
    return total / bm.n


def minimal_block_length(bm: BlockMap) -> int:
    """Smallest m dividing n such that the table factors as an m-block map.

    Exhaustive check, supported for n <= 8 only.
    """
    if bm.n > 8:
        raise ValidationError("minimality check supported for block length <= 8 only")
    for m in range(1, bm.n):
        if bm.n % m:
            continue
        reps = bm.n // m
        # candidate sub-table forced by evaluating on rho repeated
        cand = []
        ok = True
        for v in range(1 << m):
            rep_val = 0
            for _ in range(reps):
                rep_val = (rep_val << m) | v
            out = bm.outputs[rep_val]
            if len(out) % reps:
                ok = False
                break
            cand.append(out[: len(out) // reps])
        if not ok:
            continue
        sub = BlockMap(m, cand, name=f"{bm.name}/min") if any(
            len(c) for c in cand
        ) else None
        if sub is None:
            continue
        if all(
            sub.eval(BitString.from_int(v, bm.n)) == bm.outputs[v]
            for v in range(1 << bm.n)
        ):
            return m
    return bm.n


# ---------------------------------------------------------------------------
# The iterated-reuse family of extractors.
#
# Level 1 is the two-block unbiasing map applied pairwise.  Level k+1 applies
# level 1 to the input, then recursively applies level k to the pairwise-XOR
# string u and to the string v of second elements of the agreeing pairs,
# concatenating in that order.  The final bit of odd-length input is
# ignored.  These maps are *not* monotone generators (the level-1 segment
# grows in place), so they are exposed as plain string functions; all rate
# statements are about expected output length at a fixed input length.


class PeresMap:
    """The level-k iterated extractor as a function on finite strings."""

    def __init__(self, k: int):
        if k < 1:
            raise ValidationError("iteration depth must be >= 1")
        self.k = k

    def __call__(self, sigma: BitString) -> BitString:
        return self.apply(sigma)

    def apply(self, sigma: BitString) -> BitString:
        return BitString(_peres_bits(self.k, sigma.bits))

    def expected_output_length(self, m: int, p) -> Fraction:
        """Exact expected |phi_k| over all length-m inputs, Bernoulli(p) weights."""
        return peres_expected_length(self.k, m, p)

    def expected_rate(self, m: int, p) -> Fraction:
        return self.expected_output_length(m, p) / m

    def __repr__(self):
        return f"<PeresMap k={self.k}>"


def peres(k: int) -> PeresMap:
    return PeresMap(k)


def _peres_split(bits: np.ndarray):
    """(level-1 output, u, v) for one input; trailing odd bit dropped."""
    m = bits.size - (bits.size % 2)
    a, b = bits[0:m:2], bits[1:m:2]
    u = a ^ b
    disagree = u.astype(bool)
    vn_out = b[disagree]  # 10 -> 0, 01 -> 1: the second bit of each unequal pair
    v = b[~disagree]
    return vn_out, u, v


def _peres_bits(k: int, bits: np.ndarray) -> np.ndarray:
    vn_out, u, v = _peres_split(bits)
    if k == 1:
        return vn_out
    return np.concatenate([vn_out, _peres_bits(k - 1, u), _peres_bits(k - 1, v)])


def peres_output_lengths(k: int, m: int) -> np.ndarray:
    """|phi_k(sigma)| for every length-m string, indexed by lexicographic rank.

    Vectorized over all 2^m inputs: the pairwise-XOR word and the
    agreeing-pair subsequence are extracted with bit arithmetic, and
    lengths for shorter words are built up by dynamic programming.
    """
    if m > 20:
        raise ValidationError("exhaustive length table supported for m <= 20")
    # lens[kk][length] = int64 array over all values of that length
    lens: list[list[Optional[np.ndarray]]] = [
        [None] * (m + 1) for _ in range(k + 1)
    ]
    _peres_len_fill(lens, k, m)
    return lens[k][m]


def _peres_structure(length: int):
    """(vn_len, u_val, v_val, v_len) arrays over all values of `length`."""
    values = np.arange(1 << length, dtype=np.int64)
    pairs = length // 2
    vn_len = np.zeros(values.size, dtype=np.int64)
    u_val = np.zeros(values.size, dtype=np.int64)
    v_val = np.zeros(values.size, dtype=np.int64)
    v_len = np.zeros(values.size, dtype=np.int64)
    for i in range(pairs):
        # MSB-first: pair i occupies bit positions length-1-2i, length-2-2i
        a = (values >> (length - 1 - 2 * i)) & 1
        b = (values >> (length - 2 - 2 * i)) & 1
        x = a ^ b
        vn_len += x
        u_val = (u_val << 1) | x
        agree = 1 - x
        v_val = np.where(agree, (v_val << 1) | b, v_val)
        v_len += agree
    return vn_len, u_val, v_val, v_len


_PERES_STRUCT_CACHE: dict[int, tuple] = {}


def _peres_len_fill(lens, kk: int, length: int) -> None:
    if lens[kk][length] is not None:
        return
    if length < 2:
        lens[kk][length] = np.zeros(1 << length, dtype=np.int64)
        return
    if length not in _PERES_STRUCT_CACHE:
        _PERES_STRUCT_CACHE[length] = _peres_structure(length)
    vn_len, u_val, v_val, v_len = _PERES_STRUCT_CACHE[length]
    if kk == 1:
        lens[kk][length] = vn_len.copy()
        return
    pairs = length // 2
    _peres_len_fill(lens, kk - 1, pairs)
    out = vn_len + lens[kk - 1][pairs][u_val]
    for l2 in range(0, pairs + 1):
        mask = v_len == l2
        if mask.any():
            _peres_len_fill(lens, kk - 1, l2)
            out[mask] += lens[kk - 1][l2][v_val[mask]]
    lens[kk][length] = out


def peres_expected_length(k: int, m: int, p) -> Fraction:
    """Exact E|phi_k| on length-m input with i.i.d. Bernoulli(p) bits."""
    p = Fraction(p)
    lens = peres_output_lengths(k, m)
    a, b = p.numerator, p.denominator
    values = np.arange(1 << m, dtype=np.int64)
    ones = np.zeros(values.size, dtype=np.int64)
    for i in range(m):
        ones += (values >> i) & 1
    if max(a, b - a) ** m > (1 << 62):
        raise ValidationError("weights too large for exact enumeration")
    weights = np.int64(a) ** ones * np.int64(b - a) ** (m - ones)
    total = sum(int(w) * int(l) for w, l in zip(weights, lens))
    return Fraction(total, b**m)


# ---------------------------------------------------------------------------
# The n-shift


class NShiftStream(BitStream):
    """The parent stream with its first n bits dropped (single application)."""

    def __init__(self, n: int, parent: BitStream):
        if n < 1:
            raise ValidationError("shift step must be >= 1")
        super().__init__(stream_id=f"shift{n}({parent.stream_id})")
        self.n = n
        self._parent = parent
        self._skipped = False

    def _fill(self, k: int) -> np.ndarray:
        if not self._skipped:
            self._parent.take(self.n)
            self._skipped = True
        return self._parent.take(k)

    def _rewind(self) -> None:
        self._parent.reset()
        self._skipped = False


def n_shift(n: int, x: BitStream) -> NShiftStream:
    """Drop the first n bits; iterating drops multiples of n."""
    return NShiftStream(n, as_stream(x))


# ---------------------------------------------------------------------------
# Block-map table files: one line per length-n input, "input<TAB>output",
# with the empty output written as "-".


def save_block_table(path, bm: BlockMap) -> None:
    with open(path, "w") as fh:
        for v in range(1 << bm.n):
            key = BitString.from_int(v, bm.n).to01()
            out = bm.outputs[v].to01() or "-"
            fh.write(f"{key}\t{out}\n")


def load_block_table(path, name: Optional[str] = None) -> BlockMap:
    table: dict[str, str] = {}
    n = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'input<TAB>output'")
            key, out = parts
            if n is None:
                n = len(key)
            elif len(key) != n:
                raise ValidationError(
                    f"{path}:{lineno}: key length {len(key)} != {n}"
                )
            table[key] = "" if out == "-" else out
    if n is None:
        raise ValidationError(f"{path}: empty table")
    return make_block_map(n, table, name=name or f"block:{path}")
