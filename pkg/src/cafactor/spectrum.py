"""Spectral probes: cylinder correlations, mixing checks, eigenvalue frequencies.

All measures here are uniform. Correlations are centred,
c_n = nu(U & F^-n V) - nu(U) nu(V), so mixing shows up as decay to zero and an
eigenvalue exp(2 pi i alpha) shows up as a persistent oscillation at
frequency alpha.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ._parallel import pmap
from .core import (
    BudgetExceededError,
    RuleTable,
    Word,
    all_words,
    apply_rule,
    as_word,
    cell_dtype,
    shift_rule,
    step_cyclic_array,
    successor_table,
    word_str,
)

DEFAULT_ENUMERATION_BUDGET = 2**22
DEFAULT_QMAX = 64
PEAK_FACTOR = 4.0
_ZERO_PAD = 16
_CHUNK = 2**15

FINITE_MODEL_NOTE = (
    "finite cyclic model: a heuristic probe, not a decision about the measurable spectrum"
)
ERGODIC_NOTE = (
    "ergodic surjective CA admit no irrational eigenvalue; a persistent UNRESOLVED "
    "peak on a rule that passes the mixing screen would contradict this"
)


@dataclass(frozen=True)
class Cylinder:
    word: Word
    offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "word", as_word(self.word))
        if not self.word:
            raise ValueError("cylinder word must be nonempty")

    @classmethod
    def parse(cls, text: str) -> "Cylinder":
        """``"101@-1"`` is the word 101 placed at position -1; ``@0`` may be omitted."""
        word, _, off = text.partition("@")
        return cls(as_word(word), int(off) if off else 0)

    def __str__(self) -> str:
        return f"{word_str(self.word)}@{self.offset}"

    def hits(self, cells: np.ndarray, first: int, n: Optional[int] = None) -> np.ndarray:
        """Indicator over a batch whose column 0 is position ``first``.

        With ``n`` given the batch is cyclic of period n.
        """
        pos = np.arange(self.offset, self.offset + len(self.word)) - first
        if n is not None:
            pos %= n
        return np.all(cells[:, pos] == np.asarray(self.word), axis=1)


@dataclass(frozen=True)
class CorrelationSeries:
    values: tuple[float, ...]
    u: Cylinder
    v: Cylinder
    method: str
    period: Optional[int] = None
    samples: Optional[int] = None
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.values)

    @property
    def standard_error(self) -> float:
        """Worst-case standard error of a sampled indicator mean (0 if exact)."""
        return 0.5 / np.sqrt(self.samples) if self.method == "monte_carlo" else 0.0

    def to_json(self) -> dict:
        return {
            "u": str(self.u), "v": str(self.v), "method": self.method,
            "period": self.period, "samples": self.samples, "seed": self.seed,
            "values": list(self.values),
        }


def correlation(
    rule: RuleTable,
    u: Cylinder,
    v: Cylinder,
    horizon: int,
    method: str = "exact_cyclic",
    period: Optional[int] = None,
    samples: int = 10_000,
    seed: int = 0,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
    threads: Optional[int] = None,
) -> CorrelationSeries:
    """c_n for n = 0..horizon under the uniform measure.

    ``exact_cyclic`` enumerates every configuration of the given spatial
    period (uniform on that finite model); counts are integers, so the result
    is independent of chunking. ``monte_carlo`` samples uniform windows wide
    enough to hold V's light cone.
    """
    q, r = rule.q, rule.radius
    base = q ** -len(u.word) * q ** -len(v.word)
    if method == "exact_cyclic":
        if period is None:
            raise ValueError("exact_cyclic needs a period")
        span = max(u.offset + len(u.word), v.offset + len(v.word)) - min(u.offset, v.offset)
        if period < span:
            raise ValueError(f"period {period} does not cover both cylinders (span {span})")
        if q**period > budget:
            raise BudgetExceededError(f"{q}^{period} configurations exceed budget {budget}")
        total = q**period
        starts = range(0, total, _CHUNK)

        def run(lo):
            codes = np.arange(lo, min(total, lo + _CHUNK), dtype=np.int64)
            powers = q ** np.arange(period - 1, -1, -1, dtype=np.int64)
            cells = ((codes[:, None] // powers[None, :]) % q).astype(cell_dtype(q))
            in_u = u.hits(cells, 0, period)
            counts = []
            for n in range(horizon + 1):
                if n:
                    cells = step_cyclic_array(rule, cells)
                counts.append(int(np.count_nonzero(in_u & v.hits(cells, 0, period))))
            return counts

        counts = np.sum(np.array(pmap(run, starts, threads), dtype=np.int64), axis=0)
        values = tuple(float(Fraction(int(c), total) - Fraction(1, q ** (len(u.word) + len(v.word))))
                       for c in counts)
        return CorrelationSeries(values, u, v, method, period=period)
    if method == "monte_carlo":
        if samples < 1:
            raise ValueError("need at least one sample")
        lo = min(u.offset, v.offset - horizon * r)
        hi = max(u.offset + len(u.word), v.offset + len(v.word) + horizon * r)
        width = hi - lo
        chunks = [(c, min(_CHUNK, samples - c * _CHUNK)) for c in range(-(-samples // _CHUNK))]

        def run_mc(chunk):
            idx, count = chunk
            rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
            cells = rng.integers(0, q, size=(count, width)).astype(cell_dtype(q))
            in_u = u.hits(cells, lo)
            counts = []
            for n in range(horizon + 1):
                if n:
                    cells = apply_rule(rule, cells)
                counts.append(int(np.count_nonzero(in_u & v.hits(cells, lo + n * r))))
            return counts

        counts = np.sum(np.array(pmap(run_mc, chunks, threads), dtype=np.int64), axis=0)
        values = tuple(float(c) / samples - base for c in counts)
        return CorrelationSeries(values, u, v, method, samples=samples, seed=seed)
    raise ValueError(f"unknown method {method!r}")


class MixingVerdict(str, Enum):
    MIXING_CONSISTENT = "MIXING_CONSISTENT"
    NOT_MIXING = "NOT_MIXING"
    INCONCLUSIVE = "INCONCLUSIVE"


def mixing_test(
    series: CorrelationSeries | Sequence[float],
    tail_fraction: float = 0.5,
    tolerance: float = 1e-3,
) -> MixingVerdict:
    values = np.asarray(series.values if isinstance(series, CorrelationSeries) else series)
    if len(values) < 8:
        raise ValueError("series too short for a mixing test (need >= 8 terms)")
    if isinstance(series, CorrelationSeries) and tolerance <= series.standard_error:
        raise ValueError(
            f"tolerance {tolerance} does not exceed the sampling error {series.standard_error:.3g}"
        )
    k = max(1, int(np.ceil(tail_fraction * len(values))))
    tail = np.abs(values[-k:])
    if np.count_nonzero(tail > tolerance) > k / 2:
        return MixingVerdict.NOT_MIXING
    if tail.max() <= tolerance:
        return MixingVerdict.MIXING_CONSISTENT
    return MixingVerdict.INCONCLUSIVE


def rational_approximation(
    alpha: float | Fraction, q_max: int, tolerance: float
) -> tuple[Fraction, bool]:
    """Closest p/q to ``alpha`` with q <= q_max, and whether it is within ``tolerance``.

    ``Fraction.limit_denominator`` walks the continued-fraction expansion and
    its semiconvergents, which yields the best approximation for the bound.
    """
    exact = Fraction(alpha)
    best = exact.limit_denominator(q_max)
    return best, abs(exact - best) <= tolerance


class PeakVerdict(str, Enum):
    RATIONAL = "RATIONAL"
    UNRESOLVED = "UNRESOLVED"


@dataclass(frozen=True)
class SpectralPeak:
    frequency: float
    magnitude: float
    approximation: Fraction
    error: float
    verdict: PeakVerdict

    def to_json(self) -> dict:
        return {
            "frequency": self.frequency, "magnitude": self.magnitude,
            "rational": f"{self.approximation.numerator}/{self.approximation.denominator}",
            "error": self.error, "verdict": self.verdict.value,
        }


@dataclass(frozen=True)
class SpectralReport:
    peaks: tuple[SpectralPeak, ...]
    q_max: int
    tolerance: float
    energy: float
    spectral_energy: float
    note: str = ERGODIC_NOTE

    @property
    def unresolved(self) -> list[SpectralPeak]:
        return [pk for pk in self.peaks if pk.verdict is PeakVerdict.UNRESOLVED]

    def to_json(self) -> dict:
        return {
            "peaks": [pk.to_json() for pk in self.peaks], "q_max": self.q_max,
            "tolerance": self.tolerance, "energy": self.energy,
            "spectral_energy": self.spectral_energy, "note": self.note,
        }


def eigenvalue_scan(
    series: CorrelationSeries | Sequence[float],
    q_max: int = DEFAULT_QMAX,
    tolerance: Optional[float] = None,
    peak_factor: float = PEAK_FACTOR,
) -> SpectralReport:
    """Frequencies of spectral peaks and their rational approximations.

    Peaks are local maxima of the DFT magnitude over [0, 1/2] (conjugate
    frequencies are folded) exceeding ``peak_factor`` times the median
    magnitude. A peak whose neighbouring bins show leakage has its frequency
    refined on a zero-padded DFT before it is matched to a rational. ``tolerance`` defaults to the bin width 1/N.
    """
    values = np.asarray(series.values if isinstance(series, CorrelationSeries) else series,
                        dtype=float)
    n = len(values)
    if n < 16:
        raise ValueError("series too short for a spectral scan (need >= 16 terms)")
    tol = 1.0 / n if tolerance is None else tolerance
    spec = np.fft.fft(values, norm="ortho")
    mag = np.abs(spec)
    floor = 1e-9 * float(mag.max())
    threshold = max(peak_factor * float(np.median(mag)), floor)
    fine = np.abs(np.fft.fft(values, n=_ZERO_PAD * n))
    peaks = []
    for k in range(n // 2 + 1):
        if mag[k] <= threshold:
            continue
        if mag[k] < mag[(k - 1) % n] or mag[k] < mag[(k + 1) % n]:
            continue
        if max(mag[(k - 1) % n], mag[(k + 1) % n]) <= floor:
            # no leakage: the line sits exactly on the grid, and refining would only
            # pick up sidelobes of other lines
            j = _ZERO_PAD * k
        else:
            lo, hi = _ZERO_PAD * k - _ZERO_PAD // 2, _ZERO_PAD * k + _ZERO_PAD // 2
            idx = np.arange(lo, hi + 1)
            j = idx[np.argmax(fine[idx % (_ZERO_PAD * n)])]
        alpha = Fraction(int(j) % (_ZERO_PAD * n), _ZERO_PAD * n)
        alpha = min(alpha, 1 - alpha)
        approx, ok = rational_approximation(alpha, q_max, tol)
        peaks.append(SpectralPeak(
            float(alpha), float(mag[k]), approx, float(abs(alpha - approx)),
            PeakVerdict.RATIONAL if ok else PeakVerdict.UNRESOLVED,
        ))
    peaks.sort(key=lambda pk: (-pk.magnitude, pk.frequency))
    return SpectralReport(
        tuple(peaks), q_max, tol, float(np.sum(values**2)), float(np.sum(mag**2))
    )


@dataclass(frozen=True)
class OrbitSpectrum:
    period: int
    cycle_lengths: tuple[int, ...]
    frequencies: tuple[Fraction, ...]

    @property
    def frequency_set(self) -> frozenset:
        return frozenset(self.frequencies)

    def to_json(self) -> dict:
        return {
            "period": self.period,
            "cycle_lengths": list(self.cycle_lengths),
            "frequencies": sorted({str(f) for f in self.frequencies},
                                  key=lambda s: Fraction(s)),
        }


def attractor_cycles(succ: np.ndarray) -> list[list[int]]:
    """Cycles of a functional graph, each listed from its smallest node."""
    n = len(succ)
    succ_list = succ.tolist()
    state = [0] * n  # 0 new, 1 on current path, 2 done
    cycles = []
    for start in range(n):
        if state[start]:
            continue
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = succ_list[node]
        if state[node] == 1:
            cyc = path[path.index(node):]
            i = cyc.index(min(cyc))
            cycles.append(cyc[i:] + cyc[:i])
        for v in path:
            state[v] = 2
    return cycles


def orbit_spectrum_cyclic(
    rule: RuleTable, n: int, budget: int = DEFAULT_ENUMERATION_BUDGET
) -> OrbitSpectrum:
    """Root-of-unity spectrum of F on the q^n cyclic configurations of period n.

    A cycle of length l contributes k/l for k = 0..l-1.
    """
    if rule.q**n > budget:
        raise BudgetExceededError(f"{rule.q}^{n} configurations exceed budget {budget}")
    cycles = attractor_cycles(successor_table(rule, n))
    lengths = tuple(sorted(len(c) for c in cycles))
    freqs = tuple(Fraction(k, ell) for ell in lengths for k in range(ell))
    return OrbitSpectrum(n, lengths, freqs)


@dataclass(frozen=True)
class ShiftComparison:
    period: int
    shift_frequencies: tuple[Fraction, ...]
    rule_frequencies: tuple[Fraction, ...]
    contained: bool
    missing: tuple[Fraction, ...]
    note: str = FINITE_MODEL_NOTE

    def to_json(self) -> dict:
        fmt = lambda fs: [str(f) for f in fs]
        return {
            "period": self.period, "shift_frequencies": fmt(self.shift_frequencies),
            "rule_frequencies": fmt(self.rule_frequencies), "contained": self.contained,
            "missing": fmt(self.missing), "note": self.note,
        }


def compare_shift_spectrum(
    rule: RuleTable, n: int, budget: int = DEFAULT_ENUMERATION_BUDGET
) -> ShiftComparison:
    shift = orbit_spectrum_cyclic(shift_rule(rule.q), n, budget).frequency_set
    own = orbit_spectrum_cyclic(rule, n, budget).frequency_set
    missing = tuple(sorted(shift - own))
    return ShiftComparison(n, tuple(sorted(shift)), tuple(sorted(own)), not missing, missing)
