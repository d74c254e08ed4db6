"""Computable measures on the space of infinite bit sequences.

Every supported measure (Lebesgue, Bernoulli, n-step Bernoulli, stationary
two-state Markov) has exact rational parameters, so every cylinder mass is
an exact ``Fraction``.  Internally each measure is a finite *conditional
automaton*: a state per conditioning context, with P(next bit = 0 | state)
exact.  That single interface powers cylinder masses, the measure-interval
map, constrained pattern masses, sampling, and the interval-conversion
engine.

Convention: ``Bernoulli(p)`` takes p as the probability of the bit 1, so
mu(sigma) = p^{#ones} (1-p)^{#zeros}.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .bitseq import BitsLike, BitStream, BitString, FunctionStream, RatInterval, _coerce_bits
from .errors import ValidationError

RationalLike = Union[Fraction, int, str]


def parse_rational(x: RationalLike) -> Fraction:
    """Parse 'num/den' strings (and ints/Fractions) into an exact Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x)
        except (ValueError, ZeroDivisionError):
            raise ValidationError(f"not a rational: {x!r}")
    raise ValidationError(f"not a rational: {x!r}")


def format_rational(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


class Measure:
    """Base class; subclasses define the conditional automaton."""

    kind = "abstract"

    # -- conditional automaton ------------------------------------------------
    # States are integers 0..S-1; state 0 is the start state.

    def num_states(self) -> int:
        raise NotImplementedError

    def cond_zero(self, state: int) -> Fraction:
        """P(next bit = 0 | conditioning state), exact."""
        raise NotImplementedError

    def next_state(self, state: int, bit: int) -> int:
        raise NotImplementedError

    def step_len(self) -> int:
        """Shift step under which the measure is invariant (1 unless n-step)."""
        return 1

    @property
    def is_positive(self) -> bool:
        """True when every cylinder has strictly positive mass."""
        return True

    # -- derived quantities ---------------------------------------------------

    def cylinder_mass(self, sigma: BitsLike) -> Fraction:
        """Exact mass mu(sigma) of the cylinder of sigma."""
        bits = _coerce_bits(sigma)
        mass = Fraction(1)
        s = 0
        for b in bits:
            p0 = self.cond_zero(s)
            mass *= p0 if b == 0 else 1 - p0
            s = self.next_state(s, int(b))
        return mass

    def measure_interval(self, sigma: BitsLike) -> RatInterval:
        """The interval (sigma)_mu: left mass of lexicographic predecessors,
        width exactly mu(sigma).

        Computed incrementally: the empty string maps to [0,1], appending 0
        keeps the left subinterval of width mu(sigma 0), appending 1 the
        right remainder.
        """
        if not self.is_positive:
            raise ValidationError(f"{self.name()}: measure interval requires positivity")
        bits = _coerce_bits(sigma)
        lo, hi = Fraction(0), Fraction(1)
        s = 0
        for b in bits:
            split = lo + (hi - lo) * self.cond_zero(s)
            if b == 0:
                hi = split
            else:
                lo = split
            s = self.next_state(s, int(b))
        return RatInterval(lo, hi)

    def entropy_rate(self) -> float:
        """Closed-form entropy rate in bits per symbol."""
        raise ValidationError(f"{self.name()}: no closed-form entropy")

    def positivity_delta(self) -> Optional[Fraction]:
        """Largest delta with every conditional in [delta, 1-delta], or None."""
        best = Fraction(1, 2)
        for s in range(self.num_states()):
            p0 = self.cond_zero(s)
            if p0 <= 0 or p0 >= 1:
                return None
            best = min(best, p0, 1 - p0)
        return best

    # -- sampling ---------------------------------------------------------------

    def sampler_tables(self):
        """(cond0 float64[S], nxt int32[S,2], start) for the sampling kernel."""
        S = self.num_states()
        cond0 = np.array([float(self.cond_zero(s)) for s in range(S)])
        nxt = np.array(
            [[self.next_state(s, b) for b in (0, 1)] for s in range(S)],
            dtype=np.int32,
        )
        return cond0, nxt, 0

    def exact_conditionals(self):
        """Per-state (numerator of P(0), denominator) plus transitions.

        Used by the exact interval-conversion engine, which tracks scaled
        integer endpoints and needs small-integer conditionals.
        """
        S = self.num_states()
        pairs = []
        for s in range(S):
            p0 = self.cond_zero(s)
            pairs.append((p0.numerator, p0.denominator))
        nxt = np.array(
            [[self.next_state(s, b) for b in (0, 1)] for s in range(S)],
            dtype=np.int32,
        )
        return pairs, nxt, 0

    def sample_bits(self, seed: int, n: int) -> np.ndarray:
        """n bits by sequential conditional sampling from a seeded PRNG.

        One uniform variate is drawn per bit, so outputs for the same seed
        are prefixes of each other across different n.
        """
        if n < 0:
            raise ValidationError("n must be nonnegative")
        cond0, nxt, start = self.sampler_tables()
        u = np.random.default_rng(seed).random(n)
        bits, _ = _kernels.sample_automaton(u, cond0, nxt, start)
        return bits

    def sample(self, seed: int, n: int) -> BitString:
        return BitString._wrap(self.sample_bits(seed, n))

    def stream(self, seed: int, chunk: int = 1 << 16) -> BitStream:
        """An endless, resettable stream of mu-distributed bits."""
        cond0, nxt, start = self.sampler_tables()

        def make_source():
            rng = np.random.default_rng(seed)
            state = start

            def source(k: int) -> np.ndarray:
                nonlocal state
                u = rng.random(min(k, chunk) if k > 0 else 0)
                bits, state = _kernels.sample_automaton(u, cond0, nxt, state)
                return bits

            return source

        return FunctionStream(make_source, stream_id=f"{self.name()}#seed={seed}")

    # -- config -----------------------------------------------------------------

    def config(self) -> dict:
        raise NotImplementedError

    def name(self) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<Measure {self.name()}>"

    def __eq__(self, other) -> bool:
        return isinstance(other, Measure) and self.config() == other.config()

    def __hash__(self):
        return hash(self.name())


class Lebesgue(Measure):
    """The uniform (fair-coin) measure; every cylinder of length n has mass 2^-n."""

    kind = "lebesgue"

    def num_states(self) -> int:
        return 1

    def cond_zero(self, state: int) -> Fraction:
        return Fraction(1, 2)

    def next_state(self, state: int, bit: int) -> int:
        return 0

    def entropy_rate(self) -> float:
        return 1.0

    def config(self) -> dict:
        return {"kind": "lebesgue"}

    def name(self) -> str:
        return "lebesgue"


class Bernoulli(Measure):
    """I.i.d. biased bits; p is the probability of the bit 1."""

    kind = "bernoulli"

    def __init__(self, p: RationalLike):
        p = parse_rational(p)
        if not (0 < p < 1):
            raise ValidationError(f"bernoulli parameter must be in (0,1), got {p}")
        self.p = p

    def num_states(self) -> int:
        return 1

    def cond_zero(self, state: int) -> Fraction:
        return 1 - self.p

    def next_state(self, state: int, bit: int) -> int:
        return 0

    def entropy_rate(self) -> float:
        p = float(self.p)
        return -(p * math.log2(p) + (1 - p) * math.log2(1 - p))

    def config(self) -> dict:
        return {"kind": "bernoulli", "p": format_rational(self.p)}

    def name(self) -> str:
        return f"bernoulli:{self.p}"


class StepBernoulli(Measure):
    """I.i.d. blocks of length n with an explicit distribution on 2^n.

    ``table`` maps length-n strings (by lexicographic rank) to exact masses.
    Zero entries are allowed at construction, but operations that require a
    positive measure reject such tables.
    """

    kind = "step_bernoulli"

    def __init__(self, n: int, table: Sequence[RationalLike]):
        if n < 1:
            raise ValidationError("block length must be >= 1")
        if n > 12:
            raise ValidationError(f"block length {n} too large (max 12)")
        if len(table) != (1 << n):
            raise ValidationError(
                f"table must have {1 << n} entries for block length {n}, got {len(table)}"
            )
        self.n = n
        self.table = [parse_rational(q) for q in table]
        if any(q < 0 for q in self.table):
            raise ValidationError("table entries must be nonnegative")
        total = sum(self.table)
        if total != 1:
            raise ValidationError(f"table masses must sum to 1, got {total}")
        if all(q == 0 for q in self.table):
            raise ValidationError("table must give positive mass somewhere")
        # marginals[i][v] = mass of the set of blocks whose length-i prefix is v
        self._marg = [None] * (n + 1)
        self._marg[n] = list(self.table)
        for i in range(n - 1, -1, -1):
            self._marg[i] = [
                self._marg[i + 1][2 * v] + self._marg[i + 1][2 * v + 1]
                for v in range(1 << i)
            ]
        # states: block prefixes, indexed by (i, v) -> offset; (0,0) is state 0
        self._state_base = [0] * n
        for i in range(1, n):
            self._state_base[i] = self._state_base[i - 1] + (1 << (i - 1))

    def _state_iv(self, state: int) -> tuple[int, int]:
        i = self.n - 1
        while self._state_base[i] > state:
            i -= 1
        return i, state - self._state_base[i]

    def num_states(self) -> int:
        return (1 << self.n) - 1

    def step_len(self) -> int:
        return self.n

    @property
    def is_positive(self) -> bool:
        return all(q > 0 for q in self.table)

    def cond_zero(self, state: int) -> Fraction:
        i, v = self._state_iv(state)
        denom = self._marg[i][v]
        if denom == 0:
            # unreachable context; the conditional is arbitrary but fixed
            return Fraction(1, 2)
        return self._marg[i + 1][2 * v] / denom

    def next_state(self, state: int, bit: int) -> int:
        i, v = self._state_iv(state)
        if i + 1 == self.n:
            return 0
        return self._state_base[i + 1] + (2 * v + bit)

    def block_mass(self, value: int) -> Fraction:
        return self.table[value]

    def marginal_mass(self, length: int, value: int) -> Fraction:
        """Mass of blocks whose length-`length` prefix has rank `value`."""
        return self._marg[length][value]

    def entropy_rate(self) -> float:
        h = 0.0
        for q in self.table:
            if q > 0:
                h -= float(q) * math.log2(float(q))
        return h / self.n

    def config(self) -> dict:
        return {
            "kind": "step_bernoulli",
            "n": self.n,
            "table": [format_rational(q) for q in self.table],
        }

    def name(self) -> str:
        return f"step:{self.n}:" + ",".join(str(q) for q in self.table)


class Markov(Measure):
    """Stationary two-state Markov chain over bits.

    ``transition[i][j]`` is P(next=j | prev=i); rows must sum to 1 with all
    entries strictly inside (0,1).  The initial distribution is always the
    exact stationary vector, so the measure is shift-invariant.
    """

    kind = "markov"

    def __init__(self, transition: Sequence[Sequence[RationalLike]]):
        rows = [[parse_rational(q) for q in row] for row in transition]
        if len(rows) != 2 or any(len(r) != 2 for r in rows):
            raise ValidationError("transition must be a 2x2 matrix")
        for r in rows:
            if r[0] + r[1] != 1:
                raise ValidationError(f"transition row {r} does not sum to 1")
            if not all(0 < q < 1 for q in r):
                raise ValidationError("transition entries must be in (0,1)")
        self.transition = rows
        p01, p10 = rows[0][1], rows[1][0]
        pi0 = p10 / (p01 + p10)  # exact stationary vector for two states
        self.stationary = (pi0, 1 - pi0)

    def num_states(self) -> int:
        return 3  # 0: start (stationary), 1: after a 0, 2: after a 1

    def cond_zero(self, state: int) -> Fraction:
        if state == 0:
            return self.stationary[0]
        return self.transition[state - 1][0]

    def next_state(self, state: int, bit: int) -> int:
        return bit + 1

    def entropy_rate(self) -> float:
        h = 0.0
        for i in range(2):
            row_h = 0.0
            for q in self.transition[i]:
                row_h -= float(q) * math.log2(float(q))
            h += float(self.stationary[i]) * row_h
        return h

    def positivity_delta(self) -> Optional[Fraction]:
        # the stationary probabilities are bounded by the transition entries,
        # so the extremal conditional is always a matrix entry
        return min(q for row in self.transition for q in row)

    def config(self) -> dict:
        return {
            "kind": "markov",
            "transition": [[format_rational(q) for q in row] for row in self.transition],
        }

    def name(self) -> str:
        rows = ";".join(",".join(str(q) for q in row) for row in self.transition)
        return f"markov:{rows}"


# ---------------------------------------------------------------------------
# Module-level operation wrappers (the dominant call style in the test suite).


def cylinder_mass(mu: Measure, sigma: BitsLike) -> Fraction:
    return mu.cylinder_mass(sigma)


def measure_interval(mu: Measure, sigma: BitsLike) -> RatInterval:
    return mu.measure_interval(sigma)


def entropy_rate(mu: Measure) -> float:
    return mu.entropy_rate()


def positivity_delta(mu: Measure) -> Optional[Fraction]:
    return mu.positivity_delta()


def sample(mu: Measure, seed: int, n: int) -> BitString:
    return mu.sample(seed, n)


def smb_entropy_estimate(mu: Measure, x, n: int) -> float:
    """Empirical entropy -log2(mu(x restricted to n)) / n.

    The log of the mass is accumulated as a float sum of per-context
    surprisals (counted per conditioning state), which matches the exact
    mass to double precision without building a huge rational.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if isinstance(x, BitStream):
        bits = x.prefix(n).bits
    else:
        bits = _coerce_bits(x)[:n]
        if bits.size < n:
            raise ValidationError(f"need {n} bits, got {bits.size}")
    if isinstance(mu, Lebesgue):
        return 1.0
    if isinstance(mu, Bernoulli):
        ones = int(bits.sum())
        p = float(mu.p)
        return -(ones * math.log2(p) + (n - ones) * math.log2(1 - p)) / n
    if isinstance(mu, Markov):
        b0 = int(bits[0])
        log_mass = math.log2(float(mu.stationary[b0]))
        prev, cur = bits[:-1], bits[1:]
        for i in range(2):
            for j in range(2):
                c = int(np.count_nonzero((prev == i) & (cur == j)))
                if c:
                    log_mass += c * math.log2(float(mu.transition[i][j]))
        return -log_mass / n
    if isinstance(mu, StepBernoulli):
        if not mu.is_positive:
            raise ValidationError("smb estimate requires a positive measure")
        k, r = divmod(n, mu.n)
        log_mass = 0.0
        if k:
            blocks = bits[: k * mu.n].reshape(k, mu.n)
            vals = blocks @ (1 << np.arange(mu.n - 1, -1, -1, dtype=np.int64))
            counts = np.bincount(vals, minlength=1 << mu.n)
            for v, c in enumerate(counts):
                if c:
                    log_mass += int(c) * math.log2(float(mu.table[v]))
        if r:
            tail = bits[k * mu.n :]
            v = int(tail @ (1 << np.arange(r - 1, -1, -1, dtype=np.int64)))
            log_mass += math.log2(float(mu.marginal_mass(r, v)))
        return -log_mass / n
    # generic fallback: walk the conditional automaton
    log_mass = 0.0
    s = 0
    for b in bits:
        p0 = float(mu.cond_zero(s))
        log_mass += math.log2(p0 if b == 0 else 1.0 - p0)
        s = mu.next_state(s, int(b))
    return -log_mass / n


def pattern_mass(mu: Measure, constraints: Sequence[int]) -> Fraction:
    """Exact mass of {X : X[i] = c_i at every constrained position}.

    ``constraints`` uses -1 for free positions.  Computed by an exact
    forward sum over the conditional automaton (a sum of cylinder masses
    over all completions of the pattern, organized position by position).
    """
    states = {0: Fraction(1)}
    for c in constraints:
        new: dict[int, Fraction] = {}
        for s, w in states.items():
            p0 = mu.cond_zero(s)
            for b in (0, 1) if c < 0 else (int(c),):
                pb = p0 if b == 0 else 1 - p0
                if pb == 0:
                    continue
                ns = mu.next_state(s, b)
                new[ns] = new.get(ns, Fraction(0)) + w * pb
        states = new
        if not states:
            return Fraction(0)
    return sum(states.values(), Fraction(0))


# ---------------------------------------------------------------------------
# Config parsing: compact inline strings and JSON records.


def measure_from_config(cfg) -> Measure:
    """Build a measure from an inline string, a JSON record, or a dict.

    Inline forms: ``lebesgue``, ``bernoulli:1/4``,
    ``markov:9/10,1/10;1/2,1/2``, ``step:2:1/4,1/4,1/4,1/4``.
    A leading ``@`` names a JSON file holding the record form.
    """
    if isinstance(cfg, Measure):
        return cfg
    if isinstance(cfg, dict):
        return _measure_from_record(cfg)
    if not isinstance(cfg, str):
        raise ValidationError(f"cannot parse measure config: {cfg!r}")
    text = cfg.strip()
    if text.startswith("@"):
        with open(text[1:]) as fh:
            return _measure_from_record(json.load(fh))
    if text.startswith("{"):
        return _measure_from_record(json.loads(text))
    head, _, rest = text.partition(":")
    head = head.lower()
    if head in ("lebesgue", "uniform", "lambda"):
        return Lebesgue()
    if head == "bernoulli":
        return Bernoulli(rest)
    if head == "markov":
        rows = [row.split(",") for row in rest.split(";")]
        return Markov(rows)
    if head in ("step", "step_bernoulli"):
        n_str, _, table_str = rest.partition(":")
        try:
            n = int(n_str)
        except ValueError:
            raise ValidationError(f"bad step-Bernoulli config: {text!r}")
        return StepBernoulli(n, table_str.split(","))
    raise ValidationError(f"unknown measure kind: {head!r}")


def _measure_from_record(rec: dict) -> Measure:
    kind = rec.get("kind")
    if kind == "lebesgue":
        return Lebesgue()
    if kind == "bernoulli":
        return Bernoulli(rec["p"])
    if kind == "step_bernoulli":
        table = rec["table"]
        if isinstance(table, dict):
            n = rec["n"]
            ordered = [None] * (1 << n)
            for key, val in table.items():
                ordered[BitString(key).lex_rank()] = val
            if any(v is None for v in ordered):
                raise ValidationError("step-Bernoulli table has missing entries")
            table = ordered
        return StepBernoulli(rec["n"], table)
    if kind == "markov":
        return Markov(rec["transition"])
    raise ValidationError(f"unknown measure kind in record: {kind!r}")
