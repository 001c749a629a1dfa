"""Counter-CA factors built from eventually periodic central traces.

The pipeline: find a point whose central window trace repeats at two
positions, splice copies of the gap to reach a shift-periodic point, read off
the temporal cycle of its central window (the phase set), and map every cell
of an arbitrary configuration to the phase its local trace locks onto, or to
a sink letter when it locks onto none. The counter CA advances phases mod p
and fixes the sink.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ._parallel import pmap
from .blocking import check_global_equicontinuity
from .core import (
    DEFAULT_COMPOSE_BUDGET,
    Config,
    CyclicConfig,
    InsufficientWindowError,
    RuleTable,
    WindowConfig,
    Word,
    _compose_pair,
    as_word,
    evolve_rows,
    eventual_period,
    identity_rule,
    orbit,
    pad_rule,
    step_cyclic,
    step_window,
    word_str,
)


@dataclass(frozen=True)
class PeriodicPoint:
    """(uw)^infinity, stored with the period word u.w starting at index 0."""

    u: Word
    w: Word

    def __post_init__(self):
        object.__setattr__(self, "u", as_word(self.u))
        object.__setattr__(self, "w", as_word(self.w))
        if not self.u and not self.w:
            raise ValueError("uw must be nonempty")

    @property
    def config(self) -> CyclicConfig:
        return CyclicConfig(self.u + self.w)

    @property
    def center(self) -> int:
        """Index of the middle cell of w."""
        return len(self.u) + len(self.w) // 2


def splice(y_left, w, u, y_right, copies: int) -> WindowConfig:
    """y_left . w . (u w)^copies . u . w . y_right, first w centred at 0."""
    if copies < 0:
        raise ValueError("copies must be nonnegative")
    y_left, w, u, y_right = (as_word(v) for v in (y_left, w, u, y_right))
    word = y_left + w + (u + w) * copies + u + w + y_right
    return WindowConfig(-len(y_left) - len(w) // 2, word)


def splice_limit(u, w) -> PeriodicPoint:
    return PeriodicPoint(u, w)


@dataclass(frozen=True)
class TraceRepeat:
    w: Word
    u: Word
    distance: int


def find_trace_repeat(
    rule: RuleTable, y: CyclicConfig, horizon: int
) -> Optional[TraceRepeat]:
    """Smallest distance p >= 2r+1 at which the central window trace recurs.

    Compares the width-(2r+1) traces at 0 and at p up to ``horizon``; the gap
    word u sits between the two occurrences of w = y(-r, r).
    """
    r = rule.radius
    width = 2 * r + 1
    n = y.period
    rows = evolve_rows(rule, y, 0, n, horizon)
    cols = lambda start: rows[:, np.arange(start - r, start + r + 1) % n]
    base = cols(0)
    for p in range(width, n):
        if np.array_equal(cols(p), base):
            return TraceRepeat(y.segment(-r, width), y.segment(r + 1, p - width), p)
    return None


@dataclass(frozen=True)
class PhaseSet:
    """Temporal cycle P[0..p-1] of a central window, entered at time p0."""

    preperiod: int
    period: int
    rows: tuple[Word, ...]
    source: CyclicConfig
    center: int = 0

    def to_json(self) -> dict:
        return {
            "p0": self.preperiod, "p": self.period,
            "rows": [word_str(w) for w in self.rows],
            "source": word_str(self.source.word), "center": self.center,
        }


def _window_sequence(rule: RuleTable, z: CyclicConfig, center: int):
    states, p0, p = orbit(rule, z)
    r = rule.radius
    seq = [CyclicConfig(s).segment(center - r, 2 * r + 1) for s in states]
    return seq, p0, p


def build_phase_set(
    rule: RuleTable, z: Union[PeriodicPoint, CyclicConfig], center: Optional[int] = None
) -> PhaseSet:
    """Phase set of the central window of a shift-periodic point.

    A PeriodicPoint is centred on its w; a bare CyclicConfig on cell 0 unless
    ``center`` says otherwise.
    """
    if isinstance(z, PeriodicPoint):
        if len(z.w) != rule.neighborhood_size:
            raise ValueError(f"w must have length 2r+1 = {rule.neighborhood_size}")
        config, c = z.config, z.center
    else:
        config, c = z, 0
    if center is not None:
        c = center
    seq, P0, P = _window_sequence(rule, config, c)
    p0, p = eventual_period(seq, P0, P)
    return PhaseSet(p0, p, tuple(seq[p0 : p0 + p]), config, c)


@dataclass(frozen=True)
class CounterCA:
    """Radius-0 CA on {0..p}: letters below p advance mod p, p is a sink."""

    modulus: int

    def __post_init__(self):
        if self.modulus < 1:
            raise ValueError("counter modulus must be at least 1")

    @property
    def sink(self) -> int:
        return self.modulus

    @property
    def rule(self) -> RuleTable:
        p = self.modulus
        return RuleTable(p + 1, 0, tuple((a + 1) % p for a in range(p)) + (p,))

    def apply(self, word: Sequence[int]) -> Word:
        p = self.modulus
        return tuple(a if a == p else (a + 1) % p for a in word)


@dataclass(frozen=True)
class FactorMap:
    """Phase read-out pi: cell i gets the phase its local trace locks onto.

    pi(x)_i = k when the trace of the width-(2r+1) window at i satisfies
    row p0 + j == P[(k + j) mod p] for 0 <= j < span, and the sink p otherwise.
    ``span`` defaults to p; the topological construction may widen it to the
    global period of the rule.
    """

    rule: RuleTable
    phases: PhaseSet
    span: int = 0

    def __post_init__(self):
        if self.span == 0:
            object.__setattr__(self, "span", self.phases.period)
        if self.span < self.phases.period:
            raise ValueError("span must cover at least one full phase cycle")

    @property
    def period(self) -> int:
        return self.phases.period

    @property
    def horizon(self) -> int:
        return self.phases.preperiod + self.span

    @property
    def counter(self) -> CounterCA:
        return CounterCA(self.period)

    def to_json(self) -> dict:
        return {
            "p0": self.phases.preperiod, "p": self.period,
            "rows": [word_str(w) for w in self.phases.rows],
            "horizon": self.horizon, "span": self.span,
            "rule_hash": self.rule.digest,
        }


def _codes(rows: np.ndarray, width: int, q: int) -> np.ndarray:
    """Horner codes of every width-``width`` window in each row."""
    n_out = rows.shape[1] - width + 1
    acc = np.zeros((rows.shape[0], n_out), dtype=np.int64)
    for k in range(width):
        acc = acc * q + rows[:, k : k + n_out]
    return acc


def apply_factor_map(
    fmap: FactorMap, x: Config, interval: Optional[tuple[int, int]] = None
) -> Word:
    """pi(x) on [start, start + width); cyclic inputs default to one period."""
    rule, ph = fmap.rule, fmap.phases
    r = rule.radius
    if interval is None:
        if not isinstance(x, CyclicConfig):
            raise ValueError("windows need an explicit interval")
        interval = (0, x.period)
    start, width = interval
    if width == 0:
        return ()
    rows = evolve_rows(rule, x, start - r, width + 2 * r, fmap.horizon)
    codes = _codes(rows, 2 * r + 1, rule.q)
    target = np.array([rule.index(w) for w in ph.rows], dtype=np.int64)
    p, p0 = ph.period, ph.preperiod
    out = np.full(width, p, dtype=np.int64)
    for k in range(p - 1, -1, -1):
        want = target[(k + np.arange(fmap.span)) % p]
        hit = np.all(codes[p0 : p0 + fmap.span] == want[:, None], axis=0)
        out[hit] = k
    return tuple(int(v) for v in out)


def verifiable_interval(fmap: FactorMap, x: WindowConfig) -> tuple[int, int]:
    """Positions where both pi(x) and pi(F(x)) are determined by the window."""
    r = fmap.rule.radius
    reach = r + fmap.horizon * r
    lo, hi = x.offset + r + reach, x.end - r - reach
    return lo, max(0, hi - lo)


@dataclass(frozen=True)
class Mismatch:
    input_index: int
    position: int
    factor_x: int
    factor_fx: int
    expected: int
    context: str

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CommutationReport:
    checked: int = 0
    mismatches: list[Mismatch] = field(default_factory=list)
    locked_mismatches: int = 0
    sink_mismatches: int = 0

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def to_json(self, limit: int = 50) -> dict:
        return {
            "checked": self.checked,
            "mismatch_count": len(self.mismatches),
            "locked_mismatches": self.locked_mismatches,
            "sink_mismatches": self.sink_mismatches,
            "passed": self.passed,
            "mismatches": [m.to_json() for m in self.mismatches[:limit]],
        }


def _commutation_one(rule, fmap, counter, x):
    if isinstance(x, CyclicConfig):
        a = apply_factor_map(fmap, x)
        b = apply_factor_map(fmap, step_cyclic(rule, x))
        start = 0
    else:
        start, width = verifiable_interval(fmap, x)
        a = apply_factor_map(fmap, x, (start, width))
        b = apply_factor_map(fmap, step_window(rule, x), (start, width))
    return start, a, b, counter.apply(a)


def verify_commutation(
    rule: RuleTable,
    fmap: FactorMap,
    counter: CounterCA,
    inputs: Sequence[Config],
    threads: Optional[int] = None,
) -> CommutationReport:
    """Check pi(F(x))_i == C(pi(x))_i wherever both sides are computable.

    Mismatches are split by origin: ``locked`` when pi(x)_i was a phase,
    ``sink`` when a sink cell locks onto a phase one step later.
    """
    results = pmap(lambda x: _commutation_one(rule, fmap, counter, x), inputs, threads)
    report = CommutationReport()
    for idx, (x, (start, a, b, expect)) in enumerate(zip(inputs, results)):
        report.checked += len(a)
        for i, (ai, bi, ei) in enumerate(zip(a, b, expect)):
            if bi == ei:
                continue
            if ai == counter.sink:
                report.sink_mismatches += 1
            else:
                report.locked_mismatches += 1
            report.mismatches.append(Mismatch(idx, start + i, ai, bi, ei, str(x)))
    return report


def _validate_witness(rule: RuleTable, p0: int, p: int, budget: int) -> None:
    powers = [identity_rule(rule.q), rule]
    while len(powers) <= p0 + p:
        powers.append(_compose_pair(powers[-1], rule, budget))
    hi = powers[p0 + p]
    if pad_rule(powers[p0], hi.radius).table != hi.table:
        raise ValueError(f"witness ({p0}, {p}) is invalid: F^{p0 + p} != F^{p0}")


def build_topological_factor(
    rule: RuleTable,
    witness: Optional[tuple[int, int]] = None,
    search_period: int = 8,
    budget: int = DEFAULT_COMPOSE_BUDGET,
) -> tuple[FactorMap, CounterCA]:
    """Counter-CA factor of a globally eventually periodic rule.

    With F^(p0+p) = F^p0, every local trace is periodic from time p0 with a
    period dividing p. The phase rows come from the first cyclic configuration
    (by period, then lexicographically) whose central window realizes the full
    period p; if none up to ``search_period`` does, the all-zero point is used
    and the map matches over the full span p so commutation still holds.
    """
    if witness is None:
        witness = check_global_equicontinuity(rule, budget=budget)
        if witness is None:
            raise ValueError("rule is not globally equicontinuous within default budgets")
    p0, p = witness
    _validate_witness(rule, p0, p, budget)
    r = rule.radius
    chosen = None
    for n in range(1, search_period + 1):
        for word in np.ndindex(*(rule.q,) * n):
            z = CyclicConfig(word)
            rows = evolve_rows(rule, z, -r, 2 * r + 1, p0 + p)
            seq = [tuple(int(v) for v in row) for row in rows]
            _, own = eventual_period(seq, p0, p)
            if own == p:
                chosen = (z, seq)
                break
        if chosen:
            break
    if chosen is None:
        z = CyclicConfig((0,))
        rows = evolve_rows(rule, z, -r, 2 * r + 1, p0 + p)
        seq = [tuple(int(v) for v in row) for row in rows]
        _, own = eventual_period(seq, p0, p)
        phases = PhaseSet(p0, own, tuple(seq[p0 : p0 + own]), z, 0)
        fmap = FactorMap(rule, phases, span=p)
    else:
        z, seq = chosen
        phases = PhaseSet(p0, p, tuple(seq[p0 : p0 + p]), z, 0)
        fmap = FactorMap(rule, phases)
    return fmap, fmap.counter


def build_measurable_factor(
    rule: RuleTable, z: Union[PeriodicPoint, CyclicConfig]
) -> tuple[FactorMap, CounterCA]:
    """Factor map read off the phase set of a single shift-periodic point."""
    fmap = FactorMap(rule, build_phase_set(rule, z))
    return fmap, fmap.counter
