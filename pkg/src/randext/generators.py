"""Monotone generators of Turing functionals, with rate instrumentation.

A ``Generator`` maps finite bit strings to finite outputs monotonically
(extending the input never rewrites emitted output).  On top of that one
contract this module builds the use function, exact output/input ratios,
exact and Monte-Carlo average ratios, rate reports with limsup/liminf
estimates, and derivation of canonical generators from non-canonical ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .bitseq import BitStream, BitString, as_stream, common_prefix
from .errors import ComputationError, StallError, ValidationError
from .measures import Measure, format_rational


def output_len(out) -> int:
    return len(out)


def output_is_prefix(a, b) -> bool:
    """Prefix test that works for BitString and plain-sequence outputs."""
    if isinstance(a, BitString) and isinstance(b, BitString):
        return a.is_prefix_of(b)
    if len(a) > len(b):
        return False
    return tuple(a) == tuple(b[: len(a)])


class Generator:
    """A total monotone map from bit strings to output strings.

    Subclasses implement ``eval``.  The optional hooks let structured
    generators (block maps, tree extractors, length-determined maps) expose
    fast paths without changing any caller-visible semantics.
    """

    name = "generator"
    block_size: Optional[int] = None

    def eval(self, sigma: BitString):
        raise NotImplementedError

    def out_len(self, sigma: BitString) -> int:
        return output_len(self.eval(sigma))

    def out_len_of_length(self, n: int) -> Optional[int]:
        """|eval(sigma)| when it depends only on |sigma|=n, else None."""
        return None

    def out_len_trace(self, bits: np.ndarray, ns: Sequence[int]) -> list[int]:
        """|eval(bits[:n])| for each n in ns (ns increasing)."""
        out = []
        for n in ns:
            m = self.out_len_of_length(n)
            if m is None:
                m = self.out_len(BitString(bits[:n]))
            out.append(m)
        return out

    def out_len_batch(self, rows: np.ndarray) -> np.ndarray:
        """|eval(row)| per row of a 0/1 matrix."""
        n = rows.shape[1]
        m = self.out_len_of_length(n)
        if m is not None:
            return np.full(rows.shape[0], m, dtype=np.int64)
        return np.array(
            [self.out_len(BitString(r)) for r in rows], dtype=np.int64
        )

    def exact_avg(self, mu: Measure, n: int) -> Optional[Fraction]:
        """Exact average ratio by structured *enumeration*, when available.

        Must still visit every length-n string; used by avg_oi, so the
        block-rate theorems can be verified against it without circularity.
        """
        return None

    def closed_form_avg(self, mu: Measure, n: int) -> Optional[Fraction]:
        """Exact average ratio in closed form (no enumeration), when the
        generator's structure provides one.  Used by rate reports for n
        beyond enumeration range; never used to *verify* the closed form."""
        return None

    def __repr__(self):
        return f"<Generator {self.name}>"


class IdentityGenerator(Generator):
    name = "identity"

    def eval(self, sigma: BitString) -> BitString:
        return sigma

    def out_len_of_length(self, n: int) -> int:
        return n


class FnGenerator(Generator):
    """Wrap an arbitrary string function as a generator (used in tests)."""

    def __init__(self, fn: Callable[[BitString], BitString], name: str = "fn"):
        self._fn = fn
        self.name = name

    def eval(self, sigma: BitString):
        return self._fn(sigma)


class AlphaFunctional(Generator):
    """The repetition functional: bit i of the input is emitted alpha(i) times.

    The output on a length-n prefix always has length sum(alpha(i), i<n),
    independent of the bit values, which makes every average ratio exact.
    """

    def __init__(self, alpha: Callable[[int], int], name: str = "alpha"):
        self._alpha = alpha
        self._partial = [0]  # partial[n] = sum of alpha(i) for i < n
        self.name = name

    def _alpha_at(self, i: int) -> int:
        a = self._alpha(i)
        if a < 1:
            raise ValidationError(f"alpha({i}) = {a}; repetition counts must be >= 1")
        return a

    def alpha_star(self, n: int) -> int:
        while len(self._partial) <= n:
            i = len(self._partial) - 1
            self._partial.append(self._partial[-1] + self._alpha_at(i))
        return self._partial[n]

    def eval(self, sigma: BitString) -> BitString:
        reps = np.array([self._alpha_at(i) for i in range(len(sigma))], dtype=np.int64)
        return BitString(np.repeat(sigma.bits, reps))

    def out_len_of_length(self, n: int) -> int:
        return self.alpha_star(n)


def duplication() -> AlphaFunctional:
    """The generator sigma -> sigma interleaved with itself (each bit twice)."""
    return AlphaFunctional(lambda i: 2, name="duplication")


def identity() -> IdentityGenerator:
    return IdentityGenerator()


def alpha_functional(alpha: Callable[[int], int], name: str = "alpha") -> AlphaFunctional:
    return AlphaFunctional(alpha, name=name)


def oscillating_alpha() -> AlphaFunctional:
    """The repetition functional whose cumulative output length is
    beta(2^k + i) = 2^(k+1) + i: the ratio trace hits 2 exactly at powers
    of two and sags toward 3/2 just below them."""

    def beta(n: int) -> int:
        if n == 0:
            return 0
        k = n.bit_length() - 1  # n = 2^k + i with 0 <= i < 2^k
        return (1 << (k + 1)) + (n - (1 << k))

    return AlphaFunctional(lambda i: beta(i + 1) - beta(i), name="oscillating")


# ---------------------------------------------------------------------------
# Use function and ratios


def use_function(
    phi: Generator, x: BitStream, n: int, input_cap: Optional[int] = None
) -> int:
    """Least m such that |phi(x restricted to m)| >= n.

    Reads from the start of the stream.  Raises a "output stalled"
    StallError carrying (input consumed, output reached) when the cap is
    hit first.
    """
    if n <= 0:
        return 0
    x = as_stream(x)
    if input_cap is None:
        input_cap = max(4096, 64 * n)
    x.reset()
    bits = np.empty(0, dtype=np.uint8)
    exhausted = False
    m = min(max(n, 16), input_cap)
    while True:
        if m > bits.size and not exhausted:
            try:
                bits = np.concatenate([bits, x.take(m - bits.size)])
            except StallError as e:
                bits = np.concatenate([bits, e.partial])
                exhausted = True
        avail = min(m, bits.size)
        reached = phi.out_len(BitString(bits[:avail]))
        if reached >= n:
            m = avail
            break
        if avail >= input_cap or exhausted:
            raise StallError(
                f"output stalled: |phi(x[:{avail}])| = {reached} < {n}",
                partial=(avail, reached),
            )
        m = min(2 * m, input_cap)
    # binary search for the least such m (monotone in m)
    lo, hi = 0, m
    while lo < hi:
        mid = (lo + hi) // 2
        if phi.out_len(BitString(bits[:mid])) >= n:
            hi = mid
        else:
            lo = mid + 1
    return lo


def oi_ratio(phi: Generator, sigma: BitString) -> Fraction:
    """Exact output/input ratio |phi(sigma)| / |sigma|."""
    if len(sigma) == 0:
        raise ValidationError("output/input ratio undefined on the empty string")
    return Fraction(phi.out_len(sigma), len(sigma))


MAX_EXHAUSTIVE_N = 24


def avg_oi(phi: Generator, mu: Measure, n: int, max_n: int = MAX_EXHAUSTIVE_N) -> Fraction:
    """Exact mu-average output/input ratio over all strings of length n."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    m = phi.out_len_of_length(n)
    if m is not None:
        return Fraction(m, n)
    structured = phi.exact_avg(mu, n)
    if structured is not None:
        return structured
    if n > max_n:
        raise ValidationError(
            f"exhaustive enumeration refused: 2^{n} strings (limit n <= {max_n})"
        )
    total = Fraction(0)
    buf = np.zeros(n, dtype=np.uint8)

    # depth-first over the trie, threading the automaton state and mass down
    def rec(state: int, depth: int, mass: Fraction) -> None:
        nonlocal total
        if depth == n:
            total += mass * phi.out_len(BitString(buf))
            return
        p0 = mu.cond_zero(state)
        for b in (0, 1):
            pb = p0 if b == 0 else 1 - p0
            if pb == 0:
                continue
            buf[depth] = b
            rec(mu.next_state(state, b), depth + 1, mass * pb)

    rec(0, 0, Fraction(1))
    return total / n


# ---------------------------------------------------------------------------
# Rate reports


@dataclass
class AvgPoint:
    n: int
    value: Fraction
    exact: bool
    samples: Optional[int] = None


@dataclass
class RateReport:
    """Recorded average-ratio and along-stream ratio traces for one run."""

    generator: str
    measure: str
    avg_by_n: list[AvgPoint] = field(default_factory=list)
    oi_trace: list[tuple[int, float]] = field(default_factory=list)
    limsup_est: float = float("nan")
    liminf_est: float = float("nan")
    theoretical: Optional[float] = None
    seed: Optional[int] = None
    stream_id: Optional[str] = None

    def finalize(self) -> "RateReport":
        """Estimate limsup/liminf as max/min over the tail half of the
        schedule (the average trace when present, else the stream trace)."""
        if self.avg_by_n:
            vals = [float(p.value) for p in self.avg_by_n]
        else:
            vals = [v for _, v in self.oi_trace]
        if vals:
            tail = vals[len(vals) // 2 :]
            self.limsup_est = max(tail)
            self.liminf_est = min(tail)
        return self

    def to_json_dict(self) -> dict:
        return {
            "generator": self.generator,
            "measure": self.measure,
            "avg_by_n": [
                {
                    "n": p.n,
                    "value": format_rational(p.value)
                    if isinstance(p.value, Fraction)
                    else float(p.value),
                    "exact": p.exact,
                    **({"samples": p.samples} if p.samples is not None else {}),
                }
                for p in self.avg_by_n
            ],
            "oi_trace": [[n, v] for n, v in self.oi_trace],
            "limsup_est": self.limsup_est,
            "liminf_est": self.liminf_est,
            "theoretical": self.theoretical,
            "seed": self.seed,
            "stream_id": self.stream_id,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def _sample_rows(mu: Measure, seed: int, count: int, n: int) -> np.ndarray:
    """`count` independent length-n samples from mu as a 0/1 matrix."""
    cond0, nxt, start = mu.sampler_tables()
    rng = np.random.default_rng(seed)
    if cond0.shape[0] == 1:
        return (rng.random((count, n)) >= cond0[0]).astype(np.uint8)
    from . import _kernels

    rows = np.empty((count, n), dtype=np.uint8)
    for i in range(count):
        rows[i], _ = _kernels.sample_automaton(rng.random(n), cond0, nxt, start)
    return rows


def rate_report(
    phi: Generator,
    mu: Measure,
    n_schedule: Sequence[int],
    x: Optional[BitStream] = None,
    seed: int = 0,
    mc_samples: int = 256,
    exact_limit: int = 16,
    theoretical: Optional[float] = None,
) -> RateReport:
    """Record Avg(phi, mu, n) over a schedule, plus the ratio trace along x.

    Each scheduled n is computed exactly when feasible (length-determined
    generators, structured block averages, or exhaustive enumeration up to
    ``exact_limit``); otherwise by Monte Carlo over ``mc_samples`` sampled
    strings, with the sample count recorded.
    """
    schedule = list(n_schedule)
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValidationError("schedule must be nonempty and strictly increasing")
    report = RateReport(
        generator=phi.name,
        measure=mu.name(),
        seed=seed,
        theoretical=theoretical,
        stream_id=getattr(x, "stream_id", None) if x is not None else None,
    )
    for n in schedule:
        m = phi.out_len_of_length(n)
        if m is not None:
            report.avg_by_n.append(AvgPoint(n, Fraction(m, n), exact=True))
            continue
        closed = phi.closed_form_avg(mu, n)
        if closed is not None:
            report.avg_by_n.append(AvgPoint(n, closed, exact=True))
            continue
        structured = phi.exact_avg(mu, n)
        if structured is not None:
            report.avg_by_n.append(AvgPoint(n, structured, exact=True))
            continue
        if n <= exact_limit:
            report.avg_by_n.append(AvgPoint(n, avg_oi(phi, mu, n), exact=True))
            continue
        rows = _sample_rows(mu, seed ^ (n * 0x9E3779B1), mc_samples, n)
        lens = phi.out_len_batch(rows)
        value = Fraction(int(lens.sum()), mc_samples * n)
        report.avg_by_n.append(AvgPoint(n, value, exact=False, samples=mc_samples))
    if x is not None:
        x = as_stream(x)
        x.reset()
        bits = x.take(schedule[-1])
        lens = phi.out_len_trace(bits, schedule)
        report.oi_trace = [(n, ln / n) for n, ln in zip(schedule, lens)]
    return report.finalize()


# ---------------------------------------------------------------------------
# Canonical generators


class CanonicalizedGenerator(Generator):
    """Canonical generator derived from an arbitrary monotone generator.

    phi(sigma) is the longest common prefix of psi over all depth-d
    extensions of sigma, accepted once it is unchanged for two consecutive
    depths *and* every extension's output is strictly longer than it (a
    heuristic stabilization certificate; see ``canonicalize``).
    """

    def __init__(self, psi: Generator, depth_cap: int, name: Optional[str] = None):
        if depth_cap < 2:
            raise ValidationError("depth_cap must be >= 2")
        self._psi = psi
        self._cap = depth_cap
        self._memo: dict[BitString, BitString] = {}
        self.name = name or f"canonical({psi.name})"

    def eval(self, sigma: BitString) -> BitString:
        got = self._memo.get(sigma)
        if got is not None:
            return got
        prev = None
        for d in range(1, self._cap + 1):
            lcp = None
            min_len = None
            for v in range(1 << d):
                out = self._psi.eval(sigma + BitString.from_int(v, d))
                lcp = out if lcp is None else common_prefix(lcp, out)
                ol = output_len(out)
                min_len = ol if min_len is None else min(min_len, ol)
            if prev is not None and lcp == prev and min_len > len(lcp):
                self._memo[sigma] = lcp
                return lcp
            prev = lcp
        raise ComputationError(
            f"canonicalization depth exceeded at {sigma!r}: common prefix "
            f"still unstable after depth {self._cap} (constant functional, "
            f"or the cap is too small)"
        )


def canonicalize(psi: Generator, depth_cap: int = 8) -> CanonicalizedGenerator:
    """Derive the canonical generator of the functional induced by psi.

    Caller promises the induced functional is total and nowhere constant
    within the searched depth; violations surface as a depth-exceeded
    error rather than a wrong answer.  The stabilization certificate is
    heuristic: unchanged common prefix across two consecutive depths with
    all outputs strictly longer than the candidate.
    """
    return CanonicalizedGenerator(psi, depth_cap)
