"""Exact simulation of one-dimensional cellular automata.

Two configuration models are supported. A :class:`CyclicConfig` stands for the
spatially periodic bi-infinite configuration obtained by repeating its word, so
every step is exact. A :class:`WindowConfig` is a finite stretch of known cells
with an unknown exterior; each step shrinks it by the radius on both sides,
which keeps every reported cell exact for every extension (light cone).

Words are tuples of integer letters ``0..q-1``. Neighborhoods are indexed by
Horner encoding with the leftmost cell most significant, which makes the rule
table order lexicographic.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

Word = tuple[int, ...]

DEFAULT_COMPOSE_BUDGET = 2**24
_SUCCESSOR_TABLE_LIMIT = 2**16


class AlphabetMismatchError(ValueError):
    """A configuration carries letters outside the rule's alphabet."""


class InsufficientWindowError(ValueError):
    """A window does not cover the light cone a computation needs."""

    def __init__(self, need: tuple[int, int], have: tuple[int, int]):
        self.need = need
        self.have = have
        super().__init__(
            f"insufficient window: need [{need[0]}, {need[1]}), have [{have[0]}, {have[1]})"
        )


class BudgetExceededError(RuntimeError):
    """A table or enumeration would exceed its configured size budget."""


def as_word(value: Union[str, Iterable[int]]) -> Word:
    """Coerce ``"0110"`` or any iterable of ints to a word tuple.

    Strings use base-36 digits, so alphabets up to 36 letters can be written
    compactly.
    """
    if isinstance(value, str):
        return tuple(int(ch, 36) for ch in value if not ch.isspace())
    return tuple(int(v) for v in value)


def word_str(word: Sequence[int]) -> str:
    return "".join(np.base_repr(int(v), 36).lower() for v in word)


def cell_dtype(q: int) -> type:
    return np.uint8 if q <= 256 else np.int32


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("alphabet size must be positive")

    @property
    def letters(self) -> range:
        return range(self.size)


@dataclass(frozen=True, eq=True)
class RuleTable:
    """Local rule of radius ``radius`` over ``q`` letters, as a full lookup table."""

    q: int
    radius: int
    table: Word

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(int(v) for v in self.table))
        if self.q < 1:
            raise ValueError("alphabet size must be positive")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        expected = self.q**self.neighborhood_size
        if len(self.table) != expected:
            raise ValueError(f"table must have {expected} entries, got {len(self.table)}")
        if any(not 0 <= v < self.q for v in self.table):
            raise ValueError("table entries must be letters of the alphabet")

    def __hash__(self) -> int:
        return hash(self.digest)

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(self.q)

    @property
    def neighborhood_size(self) -> int:
        return 2 * self.radius + 1

    @cached_property
    def lut(self) -> np.ndarray:
        return np.asarray(self.table, dtype=cell_dtype(self.q))

    @cached_property
    def digest(self) -> str:
        payload = json.dumps([self.q, self.radius, list(self.table)], separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    @cached_property
    def memo(self) -> dict:
        # derived per-rule data (successor tables, abstract transfer functions)
        return {}

    def index(self, neighborhood: Sequence[int]) -> int:
        idx = 0
        for a in neighborhood:
            idx = idx * self.q + a
        return idx

    def __call__(self, *neighborhood: int) -> int:
        if len(neighborhood) == 1 and not isinstance(neighborhood[0], int):
            neighborhood = tuple(neighborhood[0])
        if len(neighborhood) != self.neighborhood_size:
            raise ValueError("neighborhood has the wrong width")
        return self.table[self.index(neighborhood)]

    def to_json(self) -> dict:
        return {"alphabet_size": self.q, "radius": self.radius, "table": list(self.table)}


def eca(number: int) -> RuleTable:
    """Elementary CA with the usual numbering: f(a, b, c) is bit 4a+2b+c."""
    if not isinstance(number, (int, np.integer)) or not 0 <= number <= 255:
        raise ValueError(f"elementary rule number must be in 0..255, got {number!r}")
    return RuleTable(2, 1, tuple((int(number) >> i) & 1 for i in range(8)))


def identity_rule(q: int) -> RuleTable:
    return RuleTable(q, 0, tuple(range(q)))


def shift_rule(q: int) -> RuleTable:
    """Left shift F(x)_i = x_{i+1} as a radius-1 rule (ECA 170 when q = 2)."""
    return RuleTable(q, 1, tuple(c for _a in range(q) for _b in range(q) for c in range(q)))


def rule_from_json(data: dict) -> RuleTable:
    if "eca" in data:
        return eca(int(data["eca"]))
    try:
        return RuleTable(int(data["alphabet_size"]), int(data["radius"]), tuple(data["table"]))
    except KeyError as exc:
        raise ValueError(f"rule JSON is missing key {exc.args[0]!r}") from None


def load_rule(path: Union[str, Path]) -> RuleTable:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"rule file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed rule JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValueError(f"malformed rule JSON in {path}: expected an object")
    return rule_from_json(data)


def _check_letters(rule: RuleTable, word: Sequence[int]) -> None:
    if any(not 0 <= a < rule.q for a in word):
        raise AlphabetMismatchError(
            f"configuration has letters outside the {rule.q}-letter alphabet"
        )


@dataclass(frozen=True)
class CyclicConfig:
    """The bi-infinite configuration x with x_i = word[i mod period]."""

    word: Word

    def __post_init__(self):
        object.__setattr__(self, "word", as_word(self.word))
        if not self.word:
            raise ValueError("cyclic configuration needs a nonempty word")

    @property
    def period(self) -> int:
        return len(self.word)

    def at(self, i: int) -> int:
        return self.word[i % self.period]

    def segment(self, start: int, width: int) -> Word:
        return tuple(self.at(i) for i in range(start, start + width))

    def rotate(self, k: int) -> "CyclicConfig":
        """sigma^k: the result holds x_{i+k} at position i."""
        k %= self.period
        return CyclicConfig(self.word[k:] + self.word[:k])

    def window(self, start: int, width: int) -> "WindowConfig":
        return WindowConfig(start, self.segment(start, width))

    def __str__(self) -> str:
        return word_str(self.word)


@dataclass(frozen=True)
class WindowConfig:
    """Cells known exactly on [offset, offset + len(word)), unknown elsewhere."""

    offset: int
    word: Word

    def __post_init__(self):
        object.__setattr__(self, "word", as_word(self.word))

    @property
    def length(self) -> int:
        return len(self.word)

    @property
    def end(self) -> int:
        return self.offset + len(self.word)

    @property
    def is_empty(self) -> bool:
        return not self.word

    def covers(self, start: int, stop: int) -> bool:
        return self.offset <= start and stop <= self.end

    def restrict(self, start: int, stop: int) -> "WindowConfig":
        if not self.covers(start, stop):
            raise InsufficientWindowError((start, stop), (self.offset, self.end))
        return WindowConfig(start, self.word[start - self.offset : stop - self.offset])

    def __str__(self) -> str:
        return f"{word_str(self.word)}@{self.offset}"


Config = Union[CyclicConfig, WindowConfig]


@dataclass(frozen=True)
class Trace:
    """Rows F^j(x) restricted to [start, start + width) for j = 0..horizon."""

    start: int
    width: int
    horizon: int
    rows: tuple[Word, ...]
    q: int = 2

    def column(self, i: int) -> Word:
        return tuple(row[i - self.start] for row in self.rows)


@dataclass(frozen=True)
class TemporalCycle:
    preperiod: int
    period: int


# -- array kernels ---------------------------------------------------------


def apply_rule(rule: RuleTable, cells: np.ndarray) -> np.ndarray:
    """One step on a batch of windows: (..., L) -> (..., L - 2r)."""
    w = rule.neighborhood_size
    out_len = cells.shape[-1] - w + 1
    if out_len <= 0:
        return np.zeros(cells.shape[:-1] + (0,), dtype=rule.lut.dtype)
    idx = np.zeros(cells.shape[:-1] + (out_len,), dtype=np.int64)
    for k in range(w):
        idx *= rule.q
        idx += cells[..., k : k + out_len]
    return rule.lut[idx]


def step_cyclic_array(rule: RuleTable, cells: np.ndarray) -> np.ndarray:
    """One step on a batch of cyclic words of common period: (..., n) -> (..., n)."""
    n = cells.shape[-1]
    r = rule.radius
    padded = cells[..., np.arange(-r, n + r) % n]
    return apply_rule(rule, padded)


# -- single-configuration operations ---------------------------------------


def step_cyclic(rule: RuleTable, x: CyclicConfig) -> CyclicConfig:
    _check_letters(rule, x.word)
    cells = np.asarray(x.word, dtype=np.int64)
    return CyclicConfig(tuple(int(v) for v in step_cyclic_array(rule, cells)))


def step_window(rule: RuleTable, x: WindowConfig) -> WindowConfig:
    """Exact image of a window; empty once the window is no wider than 2r."""
    _check_letters(rule, x.word)
    r = rule.radius
    if x.length <= 2 * r:
        return WindowConfig(x.offset + r, ())
    cells = np.asarray(x.word, dtype=np.int64)
    return WindowConfig(x.offset + r, tuple(int(v) for v in apply_rule(rule, cells)))


def light_cone(rule: RuleTable, start: int, width: int, horizon: int) -> tuple[int, int]:
    """Cells of x that determine F^j(x) on [start, start+width) for all j <= horizon."""
    reach = horizon * rule.radius
    return start - reach, start + width + reach


def trace(
    rule: RuleTable, x: Config, interval: tuple[int, int], horizon: int
) -> Trace:
    start, width = interval
    if horizon < 0 or width < 0:
        raise ValueError("horizon and width must be nonnegative")
    rows = evolve_rows(rule, x, start, width, horizon)
    return Trace(start, width, horizon, tuple(tuple(int(v) for v in row) for row in rows), rule.q)


def evolve_rows(
    rule: RuleTable, x: Config, start: int, width: int, horizon: int
) -> np.ndarray:
    """Trace rows as a (horizon + 1, width) array."""
    _check_letters(rule, x.word)
    out = np.empty((horizon + 1, width), dtype=rule.lut.dtype)
    r = rule.radius
    if isinstance(x, CyclicConfig):
        cells = np.asarray(x.word, dtype=rule.lut.dtype)
        pos = np.arange(start, start + width) % x.period
        for j in range(horizon + 1):
            if j:
                cells = step_cyclic_array(rule, cells)
            out[j] = cells[pos]
        return out
    lo, hi = light_cone(rule, start, width, horizon)
    if not x.covers(lo, hi):
        raise InsufficientWindowError((lo, hi), (x.offset, x.end))
    cells = np.asarray(x.word[lo - x.offset : hi - x.offset], dtype=rule.lut.dtype)
    for j in range(horizon + 1):
        if j:
            cells = apply_rule(rule, cells)
        skip = (horizon - j) * r
        out[j] = cells[skip : skip + width]
    return out


# -- temporal cycles -------------------------------------------------------


def _encode(word: Sequence[int], q: int) -> int:
    code = 0
    for a in word:
        code = code * q + a
    return code


def _decode(code: int, q: int, n: int) -> Word:
    digits = [0] * n
    for i in range(n - 1, -1, -1):
        code, digits[i] = divmod(code, q)
    return tuple(digits)


def all_words(q: int, n: int) -> np.ndarray:
    """Every word of length n in lexicographic order, as a (q**n, n) array."""
    codes = np.arange(q**n, dtype=np.int64)
    powers = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] // powers[None, :]) % q).astype(cell_dtype(q))


def successor_table(rule: RuleTable, n: int) -> np.ndarray:
    """Functional graph of F on all q**n cyclic configurations of period n.

    Entry c is the code of F(x) where x is the configuration with code c.
    """
    key = ("succ", n)
    table = rule.memo.get(key)
    if table is None:
        words = all_words(rule.q, n)
        image = step_cyclic_array(rule, words).astype(np.int64)
        powers = rule.q ** np.arange(n - 1, -1, -1, dtype=np.int64)
        table = image @ powers
        rule.memo[key] = table
    return table


def orbit(rule: RuleTable, x: CyclicConfig) -> tuple[list[Word], int, int]:
    """States F^0(x) .. F^(p0+p-1)(x) and the minimal (p0, p)."""
    _check_letters(rule, x.word)
    n = x.period
    if rule.q**n <= _SUCCESSOR_TABLE_LIMIT:
        succ = successor_table(rule, n)
        code = _encode(x.word, rule.q)
        seen: dict[int, int] = {}
        codes: list[int] = []
        while code not in seen:
            seen[code] = len(codes)
            codes.append(code)
            code = int(succ[code])
        p0 = seen[code]
        return [_decode(c, rule.q, n) for c in codes], p0, len(codes) - p0
    seen_w: dict[Word, int] = {}
    states: list[Word] = []
    cur = x
    while cur.word not in seen_w:
        seen_w[cur.word] = len(states)
        states.append(cur.word)
        cur = step_cyclic(rule, cur)
    p0 = seen_w[cur.word]
    return states, p0, len(states) - p0


def detect_temporal_cycle(
    rule: RuleTable, x: CyclicConfig
) -> tuple[TemporalCycle, tuple[CyclicConfig, ...]]:
    """Minimal preperiod and period of the orbit of a cyclic configuration.

    The first repeated state closes the cycle, so (p0, p) is minimal by
    construction. The p states on the cycle are returned in orbit order.
    """
    states, p0, p = orbit(rule, x)
    return TemporalCycle(p0, p), tuple(CyclicConfig(s) for s in states[p0:])


def eventual_period(seq: Sequence, p0: int, p: int) -> tuple[int, int]:
    """Minimize (p0, p) for a sequence known to satisfy s(k+p) = s(k) for k >= p0.

    ``seq`` must hold at least the entries s(0) .. s(p0+p-1).
    """
    cycle = seq[p0 : p0 + p]
    best = p
    for d in range(1, p + 1):
        if p % d == 0 and all(cycle[i] == cycle[(i + d) % p] for i in range(p)):
            best = d
            break

    def at(k: int):
        return seq[k] if k < p0 + p else cycle[(k - p0) % p]

    start = p0
    while start > 0 and at(start - 1) == at(start - 1 + best):
        start -= 1
    return start, best


# -- composition -----------------------------------------------------------


def pad_rule(rule: RuleTable, radius: int) -> RuleTable:
    """The same map written as a rule of larger radius."""
    if radius < rule.radius:
        raise ValueError("cannot pad to a smaller radius")
    if radius == rule.radius:
        return rule
    q, extra = rule.q, radius - rule.radius
    width = 2 * radius + 1
    idx = np.arange(q**width, dtype=np.int64)
    inner = (idx // q**extra) % q ** rule.neighborhood_size
    return RuleTable(q, radius, tuple(rule.lut[inner].tolist()))


def _compose_pair(outer: RuleTable, inner: RuleTable, budget: int) -> RuleTable:
    """Table of outer o inner, of radius outer.radius + inner.radius."""
    q = inner.q
    radius = outer.radius + inner.radius
    width = 2 * radius + 1
    if q**width > budget:
        raise BudgetExceededError(
            f"composed table would have {q**width} entries, budget is {budget}"
        )
    idx = np.arange(q**width, dtype=np.int64)
    wi = inner.neighborhood_size
    block = q**wi
    acc = np.zeros_like(idx)
    for j in range(outer.neighborhood_size):
        sub = (idx // q ** (width - wi - j)) % block
        acc *= q
        acc += inner.lut[sub]
    return RuleTable(q, radius, tuple(outer.lut[acc].tolist()))


def compose_rule(
    rule: RuleTable, k: int, budget: int = DEFAULT_COMPOSE_BUDGET
) -> RuleTable:
    """F^k as a single rule of radius k*r."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if rule.q ** (2 * k * rule.radius + 1) > budget:
        raise BudgetExceededError(
            f"F^{k} table would have {rule.q ** (2 * k * rule.radius + 1)} entries, "
            f"budget is {budget}"
        )
    out = rule
    for _ in range(k - 1):
        out = _compose_pair(out, rule, budget)
    return out


# -- surjectivity ----------------------------------------------------------


@dataclass(frozen=True)
class SurjectivityResult:
    surjective: bool
    balanced: bool
    orphan: Word | None = None

    def __bool__(self) -> bool:
        return self.surjective


def _preimage_automaton(rule: RuleTable) -> tuple[int, list[list[int]]]:
    """Subset automaton on the de Bruijn graph of width-2r words.

    Returns the full node mask and trans[c][u], the mask of nodes reachable
    from node u while emitting letter c.
    """
    key = ("debruijn",)
    cached = rule.memo.get(key)
    if cached is not None:
        return cached
    q, r = rule.q, rule.radius
    nodes = q ** (2 * r)
    trans = [[0] * nodes for _ in range(q)]
    for u in range(nodes):
        for b in range(q):
            nb = u * q + b
            v = nb % nodes
            trans[rule.table[nb]][u] |= 1 << v
    result = ((1 << nodes) - 1, trans)
    rule.memo[key] = result
    return result


def _advance(mask: int, letter_trans: list[int]) -> int:
    out = 0
    u = 0
    while mask:
        if mask & 1:
            out |= letter_trans[u]
        mask >>= 1
        u += 1
    return out


def has_preimage(rule: RuleTable, word: Sequence[int]) -> bool:
    """Whether some word of length |word| + 2r maps onto ``word``."""
    full, trans = _preimage_automaton(rule)
    mask = full
    for c in word:
        mask = _advance(mask, trans[c])
        if not mask:
            return False
    return True


def is_balanced(rule: RuleTable) -> bool:
    counts = np.bincount(rule.lut.astype(np.int64), minlength=rule.q)
    return bool(np.all(counts == rule.q ** (2 * rule.radius)))


def is_surjective(rule: RuleTable) -> SurjectivityResult:
    """Decide surjectivity; a non-surjective rule comes with a shortest orphan word.

    Breadth-first search over subsets of de Bruijn nodes, reading output
    letters in increasing order, so the orphan is the lexicographically first
    among the shortest.
    """
    balanced = is_balanced(rule)
    full, trans = _preimage_automaton(rule)
    parent: dict[int, tuple[int, int] | None] = {full: None}
    queue = deque([full])
    while queue:
        mask = queue.popleft()
        for c in range(rule.q):
            nxt = _advance(mask, trans[c])
            if nxt in parent:
                continue
            parent[nxt] = (mask, c)
            if nxt == 0:
                letters = []
                cur = nxt
                while parent[cur] is not None:
                    prev, letter = parent[cur]
                    letters.append(letter)
                    cur = prev
                return SurjectivityResult(False, balanced, tuple(reversed(letters)))
            queue.append(nxt)
    return SurjectivityResult(True, balanced, None)


# -- rendering -------------------------------------------------------------

_GLYPHS = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def render_spacetime(tr: Trace, fmt: str = "ascii") -> bytes:
    """Space-time diagram, one image row per trace row."""
    if not tr.rows or tr.width == 0:
        return b""
    if fmt == "ascii":
        if tr.q > len(_GLYPHS):
            raise ValueError(f"unsupported alphabet size for ascii: {tr.q}")
        return "".join("".join(_GLYPHS[a] for a in row) + "\n" for row in tr.rows).encode()
    if fmt == "pgm":
        if tr.q > 256:
            raise ValueError(f"unsupported alphabet size for pgm: {tr.q}")
        scale = 255 // (tr.q - 1) if tr.q > 1 else 0
        header = f"P5\n{tr.width} {len(tr.rows)}\n255\n".encode()
        body = bytes(a * scale for row in tr.rows for a in row)
        return header + body
    raise ValueError(f"unknown format {fmt!r}")


def words(q: int, length: int) -> Iterable[Word]:
    return itertools.product(range(q), repeat=length)
