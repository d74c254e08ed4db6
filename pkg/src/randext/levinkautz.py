"""Interval conversion between computable measures (the arithmetic-coding map).

An input sequence A is read as the nested chain of its mu-intervals; output
bits are certified greedily whenever the current input interval fits inside
a child of the current output nu-interval.  g(n) is the number of output
bits certified after n input bits; along random inputs g(n)/n converges to
the entropy ratio h(mu)/h(nu).

Two implementations share the greedy containment semantics:

* ``lk_step`` / ``LkState``: a pure, Fraction-exact single-step reference
  used by the tests as one side of every cross-check;
* ``_Converter``: the production engine, which renormalizes the input
  interval into the current output cylinder and tracks the endpoints as
  unreduced big integers over a running denominator (every step touches
  only big-by-small products, so n = 1e5 bit conversions stay exact and
  fast).

No floats and no rounding appear anywhere in either path.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .bitseq import BitStream, BitString, RatInterval, UNIT, as_stream
from .errors import ComputationError, StallError, ValidationError
from .generators import RateReport
from .measures import Measure, format_rational


def _require_positive(*measures: Measure) -> None:
    for m in measures:
        if not m.is_positive:
            raise ValidationError(f"{m.name()}: conversion requires a positive measure")


# ---------------------------------------------------------------------------
# Reference single-step semantics


@dataclass(frozen=True)
class LkState:
    """Full conversion state after n input bits (reference implementation)."""

    mu: Measure
    nu: Measure
    input_bits: BitString
    output_bits: BitString
    input_interval: RatInterval
    output_interval: RatInterval
    n: int
    g_trace: tuple  # (n, g) pairs, appended whenever either grows
    mu_state: int = 0
    nu_state: int = 0

    @classmethod
    def start(cls, mu: Measure, nu: Measure) -> "LkState":
        _require_positive(mu, nu)
        return cls(
            mu=mu,
            nu=nu,
            input_bits=BitString(),
            output_bits=BitString(),
            input_interval=UNIT,
            output_interval=UNIT,
            n=0,
            g_trace=((0, 0),),
        )

    @property
    def g(self) -> int:
        return len(self.output_bits)

    def check_invariants(self) -> None:
        assert self.output_interval.contains_interval(self.input_interval)
        assert self.input_interval.width == self.mu.cylinder_mass(self.input_bits)
        assert self.output_interval.width == self.nu.cylinder_mass(self.output_bits)
        gs = [g for _, g in self.g_trace]
        ns = [n for n, _ in self.g_trace]
        assert gs == sorted(gs) and ns == sorted(ns)


def lk_step(state: LkState, bit: int) -> LkState:
    """Refine the input interval by one bit, then greedily certify output bits.

    The output extends by b exactly when the refined input interval lies
    inside the b-child of the output interval; if the input interval
    straddles the split point, the output does not move.
    """
    if bit not in (0, 1):
        raise ValidationError("bit must be 0 or 1")
    mu, nu = state.mu, state.nu
    lo, hi = state.input_interval.lo, state.input_interval.hi
    split = lo + (hi - lo) * mu.cond_zero(state.mu_state)
    if bit == 0:
        hi = split
    else:
        lo = split
    mu_state = mu.next_state(state.mu_state, bit)
    out_lo, out_hi = state.output_interval.lo, state.output_interval.hi
    out_bits = state.output_bits
    nu_state = state.nu_state
    while True:
        osplit = out_lo + (out_hi - out_lo) * nu.cond_zero(nu_state)
        if hi <= osplit:
            out_hi = osplit
            out_bits = out_bits + BitString([0])
            nu_state = nu.next_state(nu_state, 0)
        elif lo >= osplit:
            out_lo = osplit
            out_bits = out_bits + BitString([1])
            nu_state = nu.next_state(nu_state, 1)
        else:
            break
    n = state.n + 1
    trace = state.g_trace + ((n, len(out_bits)),)
    return replace(
        state,
        input_bits=state.input_bits + BitString([bit]),
        output_bits=out_bits,
        input_interval=RatInterval(lo, hi),
        output_interval=RatInterval(out_lo, out_hi),
        n=n,
        g_trace=trace,
        mu_state=mu_state,
        nu_state=nu_state,
    )


# ---------------------------------------------------------------------------
# Production engine


class _Converter:
    """Renormalized exact-integer conversion state.

    The input interval, mapped affinely onto the current output cylinder,
    is [A/D, B/D] with 0 <= A <= B <= D as plain integers.  Consuming an
    input bit splits [A,B] at the exact conditional of mu; certifying an
    output bit compares against the exact conditional of nu and rescales.
    All updates multiply big integers by single-word conditionals.
    """

    def __init__(self, mu: Measure, nu: Measure, track_masses: bool = False):
        _require_positive(mu, nu)
        self.mu, self.nu = mu, nu
        mu_pairs, mu_nxt, _ = mu.exact_conditionals()
        nu_pairs, nu_nxt, _ = nu.exact_conditionals()
        self._mu_pairs = mu_pairs
        self._nu_pairs = nu_pairs
        self._mu_nxt = [tuple(int(v) for v in row) for row in mu_nxt]
        self._nu_nxt = [tuple(int(v) for v in row) for row in nu_nxt]
        self.A, self.B, self.D = 0, 1, 1
        self.mu_s, self.nu_s = 0, 0
        self.n = 0
        self.out: list[int] = []
        self.g_by_n: list[int] = []  # g_by_n[i] = g(i+1)
        self.track_masses = track_masses
        # unreduced masses of the consumed input / certified output prefixes
        self.mu_num, self.mu_den = 1, 1
        self.nu_num, self.nu_den = 1, 1

    @property
    def g(self) -> int:
        return len(self.out)

    def feed_chunk(self, bits: np.ndarray, out_target: Optional[int] = None) -> Optional[int]:
        """Consume bits until exhausted or `out_target` output bits certified.

        Returns the number of bits consumed from this chunk if the target
        stopped consumption early, else None.
        """
        A, B, D = self.A, self.B, self.D
        mu_s, nu_s = self.mu_s, self.nu_s
        mu_pairs, nu_pairs = self._mu_pairs, self._nu_pairs
        mu_nxt, nu_nxt = self._mu_nxt, self._nu_nxt
        out = self.out
        g_by_n = self.g_by_n
        track = self.track_masses
        mu_num, mu_den = self.mu_num, self.mu_den
        nu_num, nu_den = self.nu_num, self.nu_den
        consumed = None
        for idx in range(bits.shape[0]):
            bit = bits[idx]
            c0, d = mu_pairs[mu_s]
            w = B - A
            Ad = A * d
            if bit == 0:
                B = Ad + c0 * w
                A = Ad
                if track:
                    mu_num *= c0
            else:
                A = Ad + c0 * w
                B = B * d
                if track:
                    mu_num *= d - c0
            D = D * d
            if track:
                mu_den *= d
            mu_s = mu_nxt[mu_s][bit]
            while True:
                oc0, od = nu_pairs[nu_s]
                P = D * oc0
                Bd = B * od
                if Bd <= P:
                    A = A * od
                    B = Bd
                    D = P
                    nu_s = nu_nxt[nu_s][0]
                    out.append(0)
                    if track:
                        nu_num *= oc0
                        nu_den *= od
                else:
                    Ad2 = A * od
                    if Ad2 >= P:
                        A = Ad2 - P
                        B = Bd - P
                        D = D * (od - oc0)
                        nu_s = nu_nxt[nu_s][1]
                        out.append(1)
                        if track:
                            nu_num *= od - oc0
                            nu_den *= od
                    else:
                        break
            g_by_n.append(len(out))
            if out_target is not None and len(out) >= out_target:
                consumed = idx + 1
                break
        self.A, self.B, self.D = A, B, D
        self.mu_s, self.nu_s = mu_s, nu_s
        self.n += consumed if consumed is not None else bits.shape[0]
        self.mu_num, self.mu_den = mu_num, mu_den
        self.nu_num, self.nu_den = nu_num, nu_den
        return consumed

    def masses(self) -> tuple[Fraction, Fraction]:
        """(mu(A|n), nu(B|g)) as reduced fractions (tracking must be on)."""
        if not self.track_masses:
            raise ComputationError("mass tracking was not enabled")
        return Fraction(self.mu_num, self.mu_den), Fraction(self.nu_num, self.nu_den)


@dataclass
class LkResult:
    """Outcome of one conversion run."""

    output: BitString  # certified output, truncated to the requested length
    g_by_n: list[int]  # g(n) for n = 1..consumed
    consumed: int
    certified: int  # total output bits certified (may exceed len(output))
    mu_name: str = ""
    nu_name: str = ""
    stream_id: Optional[str] = None
    mass_trace: Optional[list[dict]] = None

    @property
    def g_trace(self) -> list[tuple[int, int]]:
        return [(n + 1, g) for n, g in enumerate(self.g_by_n)]

    def g(self, n: int) -> int:
        if n == 0:
            return 0
        return self.g_by_n[n - 1]


_CHUNK = 4096


def lk_convert(
    mu: Measure,
    nu: Measure,
    a: BitStream,
    out_len: Optional[int],
    input_cap: int,
    mass_checkpoints: Optional[Sequence[int]] = None,
) -> LkResult:
    """Convert a mu-stream prefix into certified nu-output bits.

    Runs until `out_len` output bits are certified or `input_cap` input
    bits are consumed; hitting the cap first raises a "conversion stalled"
    StallError carrying the partial LkResult.  With ``out_len=None`` the
    run is input-driven: it consumes exactly `input_cap` bits and returns
    whatever output that certifies.  When `mass_checkpoints` is given, the
    exact masses mu(A|n) and nu(B|g(n)) are recorded at those n.
    """
    if (out_len is not None and out_len < 0) or input_cap <= 0:
        raise ValidationError("out_len must be >= 0 and input_cap positive")
    a = as_stream(a)
    a.reset()
    checkpoints = sorted(c for c in set(mass_checkpoints or []) if c >= 1)
    conv = _Converter(mu, nu, track_masses=bool(checkpoints))
    mass_trace: list[dict] = []
    next_cp = 0
    exhausted = False
    while (out_len is None or conv.g < out_len) and conv.n < input_cap:
        want = min(_CHUNK, input_cap - conv.n)
        if next_cp < len(checkpoints):
            want = min(want, checkpoints[next_cp] - conv.n)
        try:
            bits = a.take(want)
        except StallError as e:
            bits = e.partial
            exhausted = True
        conv.feed_chunk(bits, out_target=out_len)
        while next_cp < len(checkpoints) and checkpoints[next_cp] <= conv.n:
            if checkpoints[next_cp] == conv.n:
                m_mass, n_mass = conv.masses()
                mass_trace.append(
                    {
                        "n": conv.n,
                        "g": conv.g,
                        "mu_mass": format_rational(m_mass),
                        "nu_mass": format_rational(n_mass),
                    }
                )
            next_cp += 1
        if exhausted:
            break
    certified = conv.g
    result = LkResult(
        output=BitString(conv.out if out_len is None else conv.out[:out_len]),
        g_by_n=conv.g_by_n,
        consumed=conv.n,
        certified=certified,
        mu_name=mu.name(),
        nu_name=nu.name(),
        stream_id=a.stream_id,
        mass_trace=mass_trace or None,
    )
    short_of_target = out_len is not None and certified < out_len
    if short_of_target or (out_len is None and exhausted and conv.n < input_cap):
        raise StallError(
            f"conversion stalled: {certified} output bits, {conv.n} input bits"
            + (" (stream exhausted)" if exhausted else " (input cap reached)"),
            partial=result,
        )
    return result


def g_of_prefix(mu: Measure, nu: Measure, a_prefix: BitString, k_cap: Optional[int] = None) -> int:
    """Independent definition of g(n): max k with (A|n)_mu inside (B|k)_nu.

    Recomputed from scratch via global measure intervals; serves as the
    oracle cross-check for the incremental engine.
    """
    _require_positive(mu, nu)
    inside = mu.measure_interval(a_prefix)
    lo, hi = Fraction(0), Fraction(1)
    nu_state = 0
    out_bits: list[int] = []
    k_cap = k_cap if k_cap is not None else 4 * len(a_prefix) + 64
    while len(out_bits) < k_cap:
        split = lo + (hi - lo) * nu.cond_zero(nu_state)
        if inside.hi <= split:
            hi = split
            out_bits.append(0)
        elif inside.lo >= split:
            lo = split
            out_bits.append(1)
        else:
            break
        nu_state = nu.next_state(nu_state, out_bits[-1])
    return len(out_bits)


# ---------------------------------------------------------------------------
# Runtime bound checks


@dataclass
class KautzReport:
    """Exact verification of the conversion mass bounds along one run."""

    n_checked: int
    delta: Fraction
    violations: int  # of the upper bound mu(A|n) <= nu(B|g(n)); must be 0
    witness_count: int  # of the lower bound delta^2 nu(B|g(n)) <= mu(A|n)
    largest_witness_gap: int
    warning: Optional[str] = None

    def to_json_dict(self) -> dict:
        return {
            "n_checked": self.n_checked,
            "delta": format_rational(self.delta),
            "violations": self.violations,
            "witness_count": self.witness_count,
            "largest_witness_gap": self.largest_witness_gap,
            "warning": self.warning,
        }


def kautz_check(mu: Measure, nu: Measure, a: BitStream, N: int) -> KautzReport:
    """Check the conversion mass bounds exactly at every n <= N.

    The upper bound mu(A|n) <= nu(B|g(n)) must hold at every step (its
    failure is an implementation bug and raises).  The lower bound
    delta^2 nu(B|g(n)) <= mu(A|n) only holds infinitely often; its
    occurrences are counted and a zero count is reported as a warning,
    never a failure.
    """
    d_mu, d_nu = mu.positivity_delta(), nu.positivity_delta()
    if d_mu is None or d_nu is None:
        raise ValidationError("kautz check requires strongly positive measures")
    delta = min(d_mu, d_nu)
    d2 = delta * delta
    d2n, d2d = d2.numerator, d2.denominator
    a = as_stream(a)
    a.reset()
    conv = _Converter(mu, nu, track_masses=True)
    witnesses = []
    violations = 0
    checked = 0
    while conv.n < N:
        bits = a.take(min(_CHUNK, N - conv.n))
        base = conv.n
        # feed bit by bit so masses are observed at every n
        for i in range(bits.shape[0]):
            conv.feed_chunk(bits[i : i + 1])
            checked += 1
            # mu(A|n) <= nu(B|g(n))  <=>  mu_num*nu_den <= nu_num*mu_den
            lhs = conv.mu_num * conv.nu_den
            rhs = conv.nu_num * conv.mu_den
            if lhs > rhs:
                violations += 1
                raise ComputationError(
                    f"kautz upper bound violated at n={conv.n}: "
                    f"mu(A|n) > nu(B|g(n)) (implementation bug)"
                )
            # delta^2 * nu(B|g) <= mu(A|n)
            if d2n * rhs <= d2d * lhs:
                witnesses.append(conv.n)
    gap = 0
    prev = 0
    for w in witnesses:
        gap = max(gap, w - prev)
        prev = w
    if witnesses:
        gap = max(gap, 0)
    warning = None if witnesses else (
        f"no witnesses of the lower bound within n <= {N} "
        "(the bound only guarantees infinitely many overall)"
    )
    return KautzReport(
        n_checked=checked,
        delta=delta,
        violations=violations,
        witness_count=len(witnesses),
        largest_witness_gap=gap if witnesses else N,
        warning=warning,
    )


def lk_roundtrip(
    mu: Measure,
    nu: Measure,
    a: BitStream,
    n: int,
    input_cap: int = 10**5,
    out_cap: int = 10**5,
) -> int:
    """Convert forward, convert the certified output back, and return the
    number of leading bits on which the reconstruction agrees with a.

    Agreement >= n is the contract when the caps are generous; stalls in
    either direction propagate.
    """
    ratio = mu.entropy_rate() / nu.entropy_rate()
    fwd_target = min(out_cap, int((n + 256) * max(ratio, 0.01) * 1.25) + 256)
    fwd = lk_convert(mu, nu, a, out_len=fwd_target, input_cap=input_cap)
    back_stream = as_stream(fwd.output.bits)
    try:
        back = lk_convert(
            nu, mu, back_stream, out_len=min(out_cap, n + 256), input_cap=len(fwd.output)
        )
        recon = back.output
    except StallError as e:
        if e.partial is None or not isinstance(e.partial, LkResult):
            raise
        recon = e.partial.output
    a.reset()
    want = min(len(recon), input_cap)
    original = a.take(want)
    recon_bits = recon.bits[:want]
    diff = np.nonzero(original[: recon_bits.size] != recon_bits)[0]
    return int(diff[0]) if diff.size else recon_bits.size


def lk_rate(
    mu: Measure,
    nu: Measure,
    a: BitStream,
    N: int,
    n_points: int = 48,
) -> RateReport:
    """Record g(n)/n at a geometric schedule up to N, with the entropy-ratio
    target attached."""
    if N < 2:
        raise ValidationError("N must be >= 2")
    conv_result = lk_convert(mu, nu, a, out_len=None, input_cap=N)
    return _rate_report_from_result(mu, nu, conv_result, N, n_points)


def _rate_report_from_result(
    mu: Measure, nu: Measure, result, N: int, n_points: int
) -> RateReport:
    sched = np.unique(np.geomspace(min(16, N), N, n_points).astype(np.int64))
    report = RateReport(
        generator=f"lk({result.mu_name}->{result.nu_name})",
        measure=result.mu_name,
        theoretical=mu.entropy_rate() / nu.entropy_rate(),
        stream_id=result.stream_id,
    )
    for n in sched:
        n = int(n)
        if n <= len(result.g_by_n):
            report.oi_trace.append((n, result.g(n) / n))
    return report.finalize()
