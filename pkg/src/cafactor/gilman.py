"""Monte Carlo estimates of mu-equicontinuity under Bernoulli measures.

For a base point x and half-widths m <= n, the quantity of interest is the
conditional probability that a point agreeing with x on [-n, n] also shares
x's column trace on [-m, m]. Membership is tested to a finite horizon T, so
every estimate over-approximates the all-times condition, and T is reported
alongside each number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ._parallel import pmap
from .blocking import BlockingCertificate, search_blocking_words
from .core import (
    CyclicConfig,
    RuleTable,
    WindowConfig,
    apply_rule,
    cell_dtype,
    evolve_rows,
    word_str,
)

WILSON_Z = 1.959963984540054
CHUNK = 256


@dataclass(frozen=True)
class BernoulliSpec:
    """Independent cells, letter a drawn with probability probs[a]."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if not probs or any(p < 0 for p in probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {sum(probs)!r}, not 1")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, q: int) -> "BernoulliSpec":
        return cls((1.0 / q,) * q)

    @classmethod
    def point_mass(cls, q: int, letter: int) -> "BernoulliSpec":
        return cls(tuple(1.0 if a == letter else 0.0 for a in range(q)))

    @classmethod
    def parse(cls, text: str, q: int) -> "BernoulliSpec":
        if text.strip().lower() == "uniform":
            return cls.uniform(q)
        spec = cls(tuple(float(t) for t in text.replace(",", " ").split()))
        if spec.q != q:
            raise ValueError(f"spec has {spec.q} letters, rule alphabet has {q}")
        return spec

    @property
    def q(self) -> int:
        return len(self.probs)

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.choice(self.q, size=shape, p=self.probs).astype(cell_dtype(self.q))


def _window_offset(width: int) -> int:
    return -((width - 1) // 2)


def _conditioned_batch(
    spec: BernoulliSpec, x: CyclicConfig, n: int, width: int,
    rng: np.random.Generator, count: int,
) -> np.ndarray:
    offset = _window_offset(width)
    cells = spec.sample(rng, (count, width))
    lo = -n - offset
    cells[:, lo : lo + 2 * n + 1] = x.segment(-n, 2 * n + 1)
    return cells


def sample_conditioned(
    spec: BernoulliSpec, x: CyclicConfig, n: int, width: int, seed: int = 0
) -> WindowConfig:
    """A window agreeing with x on [-n, n], spec-distributed elsewhere.

    The window is centred: it spans [-(width-1)//2, width - (width-1)//2).
    """
    if width < 2 * n + 1:
        raise ValueError(f"width {width} is too small to hold [-{n}, {n}]")
    rng = np.random.default_rng(seed)
    cells = _conditioned_batch(spec, x, n, width, rng, 1)[0]
    return WindowConfig(_window_offset(width), tuple(int(v) for v in cells))


def membership_B(
    rule: RuleTable, x: CyclicConfig, y: WindowConfig, m: int, horizon: int
) -> bool:
    """Whether F^j(y) and F^j(x) agree on [-m, m] for all j <= horizon."""
    ry = evolve_rows(rule, y, -m, 2 * m + 1, horizon)
    rx = evolve_rows(rule, x, -m, 2 * m + 1, horizon)
    return bool(np.array_equal(rx, ry))


def _batch_membership(
    rule: RuleTable, base_rows: np.ndarray, cells: np.ndarray, m: int, horizon: int
) -> np.ndarray:
    """Membership flags for a (count, width) batch of centred windows."""
    offset = _window_offset(cells.shape[1])
    r = rule.radius
    ok = np.ones(cells.shape[0], dtype=bool)
    cur = cells
    for j in range(horizon + 1):
        if j:
            cur = apply_rule(rule, cur)
        lo = -m - (offset + j * r)
        ok &= np.all(cur[:, lo : lo + 2 * m + 1] == base_rows[j], axis=1)
    return ok


def wilson_interval(hits: int, total: int, z: float = WILSON_Z) -> tuple[float, float]:
    if total <= 0:
        return 0.0, 1.0
    phat = hits / total
    denom = 1 + z * z / total
    centre = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total)) / denom
    # rounding can push an endpoint past phat when phat is 0 or 1
    return max(0.0, min(phat, centre - half)), min(1.0, max(phat, centre + half))


@dataclass(frozen=True)
class EquicontinuityEstimate:
    base: str
    m: int
    n: int
    horizon: int
    samples: int
    hits: int
    seed: int

    @property
    def ratio(self) -> float:
        return self.hits / self.samples

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.hits, self.samples)

    def to_json(self) -> dict:
        lo, hi = self.ci
        return {
            "base": self.base, "m": self.m, "n": self.n, "horizon": self.horizon,
            "samples": self.samples, "hits": self.hits, "ratio": self.ratio,
            "ci": [lo, hi], "seed": self.seed,
        }


def estimate_mu_equicontinuity(
    rule: RuleTable,
    spec: BernoulliSpec,
    x: CyclicConfig,
    m: int,
    n_list: Sequence[int],
    horizon: int,
    samples: int,
    seed: int = 0,
    threads: Optional[int] = None,
) -> list[EquicontinuityEstimate]:
    """Membership frequency of B_[-m,m](x) given [x(-n, n)], for each n.

    Samples are drawn in fixed chunks of 256, each chunk seeded from
    (seed, n, chunk index), so results do not depend on the thread count.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    if spec.q != rule.q:
        raise ValueError("spec and rule alphabets differ")
    base_rows = evolve_rows(rule, x, -m, 2 * m + 1, horizon)
    out = []
    for n in n_list:
        if n < m:
            raise ValueError(f"n = {n} is smaller than m = {m}")
        width = 2 * max(n, m + horizon * rule.radius) + 1
        chunks = [(c, min(CHUNK, samples - c * CHUNK)) for c in range(-(-samples // CHUNK))]

        def run(chunk, n=n, width=width):
            idx, count = chunk
            rng = np.random.default_rng(np.random.SeedSequence([seed, n, idx]))
            cells = _conditioned_batch(spec, x, n, width, rng, count)
            return int(_batch_membership(rule, base_rows, cells, m, horizon).sum())

        hits = sum(pmap(run, chunks, threads))
        out.append(EquicontinuityEstimate(word_str(x.word), m, n, horizon, samples, hits, seed))
    return out


class GilmanVerdict(str, Enum):
    A = "A"
    B_EVIDENCE = "B-EVIDENCE"
    C_EVIDENCE = "C-EVIDENCE"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class GilmanReport:
    verdict: GilmanVerdict
    provenance: str
    certificate: Optional[BlockingCertificate] = None
    estimates: list[EquicontinuityEstimate] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "proof": self.verdict is GilmanVerdict.A,
            "provenance": self.provenance,
            "certificate": self.certificate.to_json() if self.certificate else None,
            "estimates": [e.to_json() for e in self.estimates],
            "params": self.params,
        }


def _trending_to_one(ests: list[EquicontinuityEstimate], threshold: float) -> bool:
    if not ests or ests[-1].ratio < threshold:
        return False
    for a, b in zip(ests, ests[1:]):
        if b.ratio < a.ratio and b.ci[1] < a.ci[0]:
            return False
    return True


def classify_gilman(
    rule: RuleTable,
    spec: BernoulliSpec,
    base_points: Sequence[CyclicConfig],
    m_list: Sequence[int] = (1, 2),
    n_list: Sequence[int] = (2, 4, 8, 16),
    horizon: int = 64,
    samples: int = 500,
    seed: int = 0,
    lmax: int = 4,
    b_threshold: float = 0.9,
    c_threshold: float = 0.1,
    threads: Optional[int] = None,
) -> GilmanReport:
    """Empirical Gilman class.

    A is backed by an r-blocking certificate and is a proof. B-EVIDENCE needs
    one base point whose ratios climb to ``b_threshold`` at every m;
    C-EVIDENCE needs some m at which every base point stays below
    ``c_threshold`` at the largest n. Both are evidence only.
    """
    if not base_points:
        raise ValueError("need at least one base point")
    params = {
        "spec": list(spec.probs), "base_points": [word_str(b.word) for b in base_points],
        "m": list(m_list), "n": list(n_list), "horizon": horizon, "samples": samples,
        "seed": seed, "lmax": lmax, "b_threshold": b_threshold, "c_threshold": c_threshold,
    }
    s = max(rule.radius, 1)
    found = search_blocking_words(rule, s, max(lmax, s), threads=threads)
    if found:
        return GilmanReport(
            GilmanVerdict.A, f"{s}-blocking certificate for {word_str(found[0][0])}",
            found[0][1], params=params,
        )

    table: dict[tuple[int, int], list[EquicontinuityEstimate]] = {}
    estimates = []
    for bi, x in enumerate(base_points):
        for m in m_list:
            ns = [n for n in n_list if n >= m]
            ests = estimate_mu_equicontinuity(rule, spec, x, m, ns, horizon, samples, seed, threads)
            table[bi, m] = ests
            estimates.extend(ests)

    for bi, x in enumerate(base_points):
        if all(_trending_to_one(table[bi, m], b_threshold) for m in m_list):
            return GilmanReport(
                GilmanVerdict.B_EVIDENCE,
                f"ratios at base point {word_str(x.word)} rise to >= {b_threshold} for every m",
                estimates=estimates, params=params,
            )
    for m in m_list:
        if all(table[bi, m] and table[bi, m][-1].ratio < c_threshold
               for bi in range(len(base_points))):
            return GilmanReport(
                GilmanVerdict.C_EVIDENCE,
                f"every base point stays below {c_threshold} at m = {m}, largest n",
                estimates=estimates, params=params,
            )
    return GilmanReport(GilmanVerdict.INCONCLUSIVE, "no threshold met",
                        estimates=estimates, params=params)
