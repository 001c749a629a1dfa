"""Blocking words: sound certification, randomized refutation, Kurka classes.

Certification runs the rule on a Cartesian abstraction: each cell holds the
set of letters it may carry, and cells outside the tracked window are pinned
to the full alphabet forever. Every concrete extension of the cylinder [w] is
covered by the abstract run, so a window that stays a singleton along the
whole (eventually periodic) abstract orbit is a proof of blocking. The
converse fails, and such words are reported as inconclusive.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ._parallel import pmap
from .core import (
    DEFAULT_COMPOSE_BUDGET,
    BudgetExceededError,
    RuleTable,
    WindowConfig,
    Word,
    _compose_pair,
    apply_rule,
    as_word,
    cell_dtype,
    identity_rule,
    pad_rule,
    word_str,
)

DEFAULT_MAX_STEPS = 4096


def _full_mask(q: int) -> int:
    return (1 << q) - 1


def _mask_letters(mask: int) -> tuple[int, ...]:
    return tuple(a for a in range(mask.bit_length()) if mask >> a & 1)


@dataclass(frozen=True)
class SetWord:
    """Per-cell letter sets on [offset, offset + len(cells)).

    Every cell outside the window is taken to hold the full alphabet at every
    time step.
    """

    offset: int
    cells: tuple[frozenset, ...]

    def __post_init__(self):
        cells = tuple(frozenset(int(a) for a in c) for c in self.cells)
        if any(not c for c in cells):
            raise ValueError("SetWord cells must be nonempty")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_masks(cls, offset: int, masks: Sequence[int]) -> "SetWord":
        return cls(offset, tuple(frozenset(_mask_letters(m)) for m in masks))

    @classmethod
    def cylinder(cls, word: Sequence[int], margin: int, q: int) -> "SetWord":
        """[word] at position 0, flanked by ``margin`` full cells per side."""
        full = frozenset(range(q))
        cells = (full,) * margin + tuple(frozenset((a,)) for a in word) + (full,) * margin
        return cls(-margin, cells)

    @property
    def masks(self) -> tuple[int, ...]:
        return tuple(sum(1 << a for a in c) for c in self.cells)

    @property
    def is_singleton(self) -> bool:
        return all(len(c) == 1 for c in self.cells)

    def to_window(self) -> WindowConfig:
        if not self.is_singleton:
            raise ValueError("only singleton SetWords denote a single window")
        return WindowConfig(self.offset, tuple(next(iter(c)) for c in self.cells))


def _abstract_cell(rule: RuleTable, key: tuple[int, ...]) -> int:
    memo = rule.memo.setdefault("abstract", {})
    out = memo.get(key)
    if out is None:
        out = 0
        for nb in itertools.product(*(_mask_letters(m) for m in key)):
            out |= 1 << rule.table[rule.index(nb)]
        memo[key] = out
    return out


def _abstract_step_masks(rule: RuleTable, masks: tuple[int, ...]) -> tuple[int, ...]:
    r = rule.radius
    full = _full_mask(rule.q)
    padded = (full,) * r + masks + (full,) * r
    w = rule.neighborhood_size
    return tuple(_abstract_cell(rule, padded[i : i + w]) for i in range(len(masks)))


def abstract_step(rule: RuleTable, s: SetWord) -> SetWord:
    """Image of every cell's possible letters; the window itself does not move."""
    return SetWord.from_masks(s.offset, _abstract_step_masks(rule, s.masks))


@dataclass(frozen=True)
class BlockingCertificate:
    word: Word
    s: int
    p: int
    margin: int
    preperiod: int
    period: int
    witness: tuple[Word, ...]
    rule_digest: str

    @property
    def steps(self) -> int:
        return self.preperiod + self.period

    def replay(self, rule: RuleTable) -> bool:
        """Re-run the abstract orbit and check it reproduces this certificate."""
        if rule.digest != self.rule_digest:
            return False
        masks = SetWord.cylinder(self.word, self.margin, rule.q).masks
        lo = self.margin + self.p
        states = []
        for _ in range(self.steps + 1):
            states.append(masks)
            masks = _abstract_step_masks(rule, masks)
        if states[self.steps] != states[self.preperiod]:
            return False
        for t in range(self.steps):
            window = states[t][lo : lo + self.s]
            if any(m & (m - 1) for m in window):
                return False
            if tuple(m.bit_length() - 1 for m in window) != self.witness[t]:
                return False
        return True

    def replay_hash(self) -> str:
        payload = json.dumps(
            [self.rule_digest, list(self.word), self.s, self.p, self.margin,
             self.preperiod, self.period, [list(w) for w in self.witness]],
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    def to_json(self) -> dict:
        return {
            "word": word_str(self.word),
            "s": self.s,
            "p": self.p,
            "W": self.margin,
            "preperiod": self.preperiod,
            "period": self.period,
            "steps": self.steps,
            "witness": [word_str(w) for w in self.witness],
            "replay_hash": self.replay_hash(),
        }


def certify_blocking(
    rule: RuleTable,
    word,
    s: int,
    margin: Optional[int] = None,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> Optional[BlockingCertificate]:
    """Prove ``word`` is s-blocking, or return None (inconclusive).

    None never means "not blocking": the Cartesian abstraction loses
    correlations between cells and can fail on genuine blocking words.
    """
    w = as_word(word)
    margin = 2 * rule.radius if margin is None else margin
    if len(w) < s or s < 1:
        raise ValueError("need 1 <= s <= |w|")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    masks = SetWord.cylinder(w, margin, rule.q).masks
    seen: dict[tuple[int, ...], int] = {}
    states: list[tuple[int, ...]] = []
    while masks not in seen:
        if len(states) > max_steps:
            return None
        seen[masks] = len(states)
        states.append(masks)
        masks = _abstract_step_masks(rule, masks)
    t0 = seen[masks]
    period = len(states) - t0
    for p in range(len(w) - s + 1):
        lo = margin + p
        windows = [st[lo : lo + s] for st in states]
        if all(not (m & (m - 1)) for win in windows for m in win):
            witness = tuple(tuple(m.bit_length() - 1 for m in win) for win in windows)
            return BlockingCertificate(w, s, p, margin, t0, period, witness, rule.digest)
    return None


@dataclass(frozen=True)
class CounterexamplePair:
    """Two points of [w] whose s-columns at offset p split at ``time``."""

    x: WindowConfig
    y: WindowConfig
    time: int
    interval: tuple[int, int]

    def to_json(self) -> dict:
        return {
            "x": word_str(self.x.word),
            "y": word_str(self.y.word),
            "offset": self.x.offset,
            "time": self.time,
            "interval": list(self.interval),
        }


@dataclass(frozen=True)
class Refutation:
    word: Word
    s: int
    pairs: tuple[CounterexamplePair, ...]

    def to_json(self) -> dict:
        return {"word": word_str(self.word), "s": self.s,
                "pairs": [pr.to_json() for pr in self.pairs]}


def falsify_blocking(
    rule: RuleTable,
    word,
    s: int,
    horizon: int,
    samples: int = 500,
    seed: int = 0,
) -> Optional[Refutation]:
    """Search for pairs in [w] whose s-column traces differ, for every offset.

    Returns a Refutation bundling one pair per offset p in [0, |w|-s] only
    when all offsets are refuted; the pair kept for an offset is the sampled
    one that diverges earliest. None means "not refuted within budget".
    """
    w = as_word(word)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if len(w) < s or s < 1:
        raise ValueError("need 1 <= s <= |w|")
    r = rule.radius
    reach = horizon * r
    length = len(w) + 2 * reach
    rng = np.random.default_rng(seed)
    dtype = cell_dtype(rule.q)
    xs = rng.integers(0, rule.q, size=(samples, length)).astype(dtype)
    ys = rng.integers(0, rule.q, size=(samples, length)).astype(dtype)
    xs[:, reach : reach + len(w)] = w
    ys[:, reach : reach + len(w)] = w
    offsets = range(len(w) - s + 1)
    first = np.full((len(offsets), samples), -1, dtype=np.int64)
    cx, cy = xs, ys
    for t in range(horizon + 1):
        if t:
            cx, cy = apply_rule(rule, cx), apply_rule(rule, cy)
        shift = reach - t * r
        for p in offsets:
            col = slice(p + shift, p + shift + s)
            differ = np.any(cx[:, col] != cy[:, col], axis=1)
            fresh = differ & (first[p] < 0)
            first[p][fresh] = t
    pairs = []
    for p in offsets:
        hit = np.flatnonzero(first[p] >= 0)
        if hit.size == 0:
            return None
        best = hit[np.argmin(first[p][hit])]
        pairs.append(
            CounterexamplePair(
                WindowConfig(-reach, tuple(int(v) for v in xs[best])),
                WindowConfig(-reach, tuple(int(v) for v in ys[best])),
                int(first[p][best]),
                (p, s),
            )
        )
    return Refutation(w, s, tuple(pairs))


def _contains_factor(word: Word, found: set[Word]) -> bool:
    n = len(word)
    return any(word[i:j] in found for i in range(n) for j in range(i + 1, n + 1))


def search_blocking_words(
    rule: RuleTable,
    s: int,
    lmax: int,
    margin: Optional[int] = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    dedupe: bool = False,
    threads: Optional[int] = None,
) -> list[tuple[Word, BlockingCertificate]]:
    """Certified words of length s..lmax in length-then-lexicographic order."""
    if lmax < s:
        raise ValueError("lmax must be at least s")
    out: list[tuple[Word, BlockingCertificate]] = []
    found: set[Word] = set()
    for length in range(s, lmax + 1):
        candidates = [
            w for w in itertools.product(range(rule.q), repeat=length)
            if not (dedupe and _contains_factor(w, found))
        ]
        certs = pmap(
            lambda w: certify_blocking(rule, w, s, margin, max_steps), candidates, threads
        )
        for w, cert in zip(candidates, certs):
            if cert is not None:
                out.append((w, cert))
                found.add(w)
    return out


def check_global_equicontinuity(
    rule: RuleTable,
    max_preperiod: int = 4,
    max_period: int = 4,
    budget: int = DEFAULT_COMPOSE_BUDGET,
) -> Optional[tuple[int, int]]:
    """Lexicographically least (p0, p) with F^(p0+p) = F^p0 as maps, or None.

    Raises BudgetExceededError up front if F^(max_preperiod+max_period) would
    not fit the table budget, so "none found" always means a complete search.
    """
    kmax = max_preperiod + max_period
    size = rule.q ** (2 * kmax * rule.radius + 1)
    if size > budget:
        raise BudgetExceededError(
            f"global check needs tables of {size} entries, budget is {budget}"
        )
    powers = [identity_rule(rule.q), rule]
    for _ in range(2, kmax + 1):
        powers.append(_compose_pair(powers[-1], rule, budget))
    for p0 in range(max_preperiod + 1):
        for p in range(1, max_period + 1):
            hi = powers[p0 + p]
            if pad_rule(powers[p0], hi.radius).table == hi.table:
                return p0, p
    return None


class KurkaVerdict(str, Enum):
    GLOBALLY_EQUICONTINUOUS = "GLOBALLY_EQUICONTINUOUS"
    HAS_EQUICONTINUOUS_POINTS = "HAS_EQUICONTINUOUS_POINTS"
    SENSITIVITY_EVIDENCE = "SENSITIVITY_EVIDENCE"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class KurkaReport:
    verdict: KurkaVerdict
    witness: Optional[tuple[int, int]] = None
    certificate: Optional[BlockingCertificate] = None
    global_check: str = "not run"
    words_tested: int = 0
    words_refuted: int = 0
    params: dict = field(default_factory=dict)

    @property
    def is_proof(self) -> bool:
        return self.verdict in (
            KurkaVerdict.GLOBALLY_EQUICONTINUOUS,
            KurkaVerdict.HAS_EQUICONTINUOUS_POINTS,
        )

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "proof": self.is_proof,
            "witness": list(self.witness) if self.witness else None,
            "certificate": self.certificate.to_json() if self.certificate else None,
            "global_check": self.global_check,
            "words_tested": self.words_tested,
            "words_refuted": self.words_refuted,
            "params": self.params,
        }


def classify_kurka(
    rule: RuleTable,
    lmax: int = 5,
    margin: Optional[int] = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    max_preperiod: int = 4,
    max_period: int = 4,
    budget: int = DEFAULT_COMPOSE_BUDGET,
    horizon: int = 32,
    samples: int = 200,
    seed: int = 0,
    threads: Optional[int] = None,
) -> KurkaReport:
    """Topological class of a rule: global equicontinuity, blocking word, or neither.

    Blocking words are searched at width s = r (s = 1 for radius 0). The
    sensitivity verdict only records that every candidate word up to ``lmax``
    was refuted by sampling; it is evidence, not proof.
    """
    s = max(rule.radius, 1)
    margin = 2 * rule.radius if margin is None else margin
    params = {
        "lmax": lmax, "s": s, "margin": margin, "max_steps": max_steps,
        "max_preperiod": max_preperiod, "max_period": max_period, "budget": budget,
        "horizon": horizon, "samples": samples, "seed": seed,
    }
    report = KurkaReport(KurkaVerdict.INCONCLUSIVE, params=params)
    try:
        witness = check_global_equicontinuity(rule, max_preperiod, max_period, budget)
        report.global_check = "found" if witness else "none found"
    except BudgetExceededError:
        witness = None
        report.global_check = "budget exceeded"
    if witness is not None:
        report.verdict = KurkaVerdict.GLOBALLY_EQUICONTINUOUS
        report.witness = witness
        return report

    for length in range(s, lmax + 1):
        for w in itertools.product(range(rule.q), repeat=length):
            cert = certify_blocking(rule, w, s, margin, max_steps)
            if cert is not None:
                report.verdict = KurkaVerdict.HAS_EQUICONTINUOUS_POINTS
                report.certificate = cert
                return report

    candidates = [
        w for length in range(s, lmax + 1)
        for w in itertools.product(range(rule.q), repeat=length)
    ]
    refuted = pmap(
        lambda w: falsify_blocking(rule, w, s, horizon, samples, seed) is not None,
        candidates,
        threads,
    )
    report.words_tested = len(candidates)
    report.words_refuted = sum(refuted)
    if all(refuted):
        report.verdict = KurkaVerdict.SENSITIVITY_EVIDENCE
    return report
