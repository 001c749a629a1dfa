import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cafactor.blocking import (
    KurkaVerdict,
    SetWord,
    abstract_step,
    certify_blocking,
    check_global_equicontinuity,
    classify_kurka,
    falsify_blocking,
    search_blocking_words,
)
from cafactor.core import (
    BudgetExceededError,
    CyclicConfig,
    WindowConfig,
    all_words,
    detect_temporal_cycle,
    eca,
    trace,
)

import oracles


class TestSetWord:
    def test_empty_cell_rejected(self):
        with pytest.raises(ValueError):
            SetWord(0, (frozenset(),))

    def test_cylinder_layout(self):
        sw = SetWord.cylinder((1, 0), 2, 2)
        assert sw.offset == -2
        assert sw.masks == (3, 3, 2, 1, 3, 3)

    def test_singleton_roundtrip(self):
        sw = SetWord.cylinder((1, 0, 1), 0, 2)
        assert sw.to_window() == WindowConfig(0, (1, 0, 1))

    def test_non_singleton_has_no_window(self):
        with pytest.raises(ValueError):
            SetWord.cylinder((1,), 1, 2).to_window()


class TestAbstractStep:
    def test_rule4_zero_stays(self):
        assert abstract_step(eca(4), SetWord(0, ({0},))).cells == (frozenset({0}),)

    def test_shift_floods(self):
        assert abstract_step(eca(170), SetWord(0, ({0},))).cells == (frozenset({0, 1}),)

    @pytest.mark.parametrize("n", [0, 4, 30, 90, 232, 255])
    def test_full_window_is_rule_image(self, n):
        rule = eca(n)
        image = frozenset(rule.table)
        out = abstract_step(rule, SetWord(3, ({0, 1},) * 4))
        assert out.offset == 3 and all(c == image for c in out.cells)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 255), st.lists(st.integers(0, 1), min_size=1, max_size=4),
           st.integers(0, 2), st.integers(0, 2**32 - 1))
    def test_over_approximation(self, n, word, margin, seed):
        """Abstract sets contain every sampled concrete value, up to 8 steps."""
        rule = eca(n)
        steps = 8
        sw = SetWord.cylinder(word, margin, 2)
        rng = np.random.default_rng(seed)
        reach = steps + margin
        for _ in range(200 // 8):
            cells = rng.integers(0, 2, size=len(word) + 2 * reach).tolist()
            cells[reach : reach + len(word)] = word
            x = WindowConfig(-reach, cells)
            tr = trace(rule, x, (sw.offset, len(sw.cells)), steps)
            cur = sw
            for t in range(steps + 1):
                for i, letter in enumerate(tr.rows[t]):
                    assert letter in cur.cells[i]
                cur = abstract_step(rule, cur)


class TestCertify:
    def test_rule4_zero(self):
        cert = certify_blocking(eca(4), "0", 1, margin=0)
        assert cert is not None and cert.p == 0
        assert (cert.preperiod, cert.period) == (0, 1)
        assert cert.witness == ((0,),)

    def test_complement_cycles(self):
        cert = certify_blocking(eca(51), "0", 1, margin=0)
        assert cert is not None and cert.p == 0
        assert (cert.preperiod, cert.period) == (0, 2)
        assert cert.witness == ((0,), (1,))

    @pytest.mark.parametrize("margin", [0, 1, 2, 5])
    def test_shift_inconclusive(self, margin):
        assert certify_blocking(eca(170), "00", 1, margin=margin) is None

    def test_preconditions(self):
        with pytest.raises(ValueError):
            certify_blocking(eca(4), "0", 2)
        with pytest.raises(ValueError):
            certify_blocking(eca(4), "00", 1, margin=-1)

    def test_replay(self):
        cert = certify_blocking(eca(232), "00", 1)
        assert cert is not None and cert.replay(eca(232))
        assert not cert.replay(eca(4))

    def test_json_fields(self):
        js = certify_blocking(eca(4), "0", 1).to_json()
        assert {"word", "s", "p", "W", "preperiod", "period", "steps", "replay_hash"} <= set(js)
        assert js["W"] == 2 and js["word"] == "0"

    def test_replay_hash_stable(self):
        a = certify_blocking(eca(51), "0", 1).replay_hash()
        b = certify_blocking(eca(51), "0", 1).replay_hash()
        assert a == b and len(a) == 64

    def test_margin_monotone(self):
        """Words certified at margin W stay certified at W + 1."""
        for n in range(256):
            rule = eca(n)
            for w in all_words(2, 3):
                for margin in range(3):
                    if certify_blocking(rule, w, 1, margin) is not None:
                        assert certify_blocking(rule, w, 1, margin + 1) is not None, (n, w, margin)


class TestFalsify:
    def test_shift_refuted_on_both_offsets(self):
        ref = falsify_blocking(eca(170), "00", 1, horizon=4, samples=200, seed=0)
        assert ref is not None and len(ref.pairs) == 2
        for p, pair in enumerate(ref.pairs):
            assert pair.interval == (p, 1)
            # the pair really diverges on its column at the claimed time
            rx = trace(eca(170), pair.x, (p, 1), pair.time).rows[-1]
            ry = trace(eca(170), pair.y, (p, 1), pair.time).rows[-1]
            assert rx != ry
            # and agrees on the word
            assert pair.x.restrict(0, 2).word == pair.y.restrict(0, 2).word == (0, 0)

    def test_shift_earliest_divergence(self):
        ref = falsify_blocking(eca(170), "00", 1, horizon=4, samples=500, seed=0)
        # offset p first sees the cell at position 2 after 2 - p steps
        assert [pr.time for pr in ref.pairs] == [2, 1]

    @pytest.mark.parametrize("samples", [1, 50, 500])
    def test_rule4_never_refuted(self, samples):
        assert falsify_blocking(eca(4), "0", 1, horizon=16, samples=samples, seed=3) is None

    @pytest.mark.parametrize("w", ["0", "01", "110", "1011"])
    def test_identity_never_refuted(self, w):
        assert falsify_blocking(eca(204), w, len(w), horizon=8, samples=100) is None

    def test_horizon_precondition(self):
        with pytest.raises(ValueError):
            falsify_blocking(eca(4), "0", 1, horizon=0)

    def test_seed_determinism(self):
        a = falsify_blocking(eca(30), "010", 1, horizon=8, samples=50, seed=7)
        b = falsify_blocking(eca(30), "010", 1, horizon=8, samples=50, seed=7)
        assert a == b


class TestSearch:
    def test_rule4(self):
        found = search_blocking_words(eca(4), 1, 1)
        assert [w for w, _ in found] == [(0,)]

    def test_shift_none(self):
        assert search_blocking_words(eca(170), 1, 4) == []

    def test_identity(self):
        found = search_blocking_words(eca(204), 1, 1)
        assert [w for w, _ in found] == [(0,), (1,)]

    def test_order_and_dedupe(self):
        full = search_blocking_words(eca(204), 1, 2)
        assert [w for w, _ in full] == [(0,), (1,), (0, 0), (0, 1), (1, 0), (1, 1)]
        assert [w for w, _ in search_blocking_words(eca(204), 1, 2, dedupe=True)] == [(0,), (1,)]

    def test_thread_invariance(self):
        a = search_blocking_words(eca(232), 1, 4, threads=1)
        b = search_blocking_words(eca(232), 1, 4, threads=4)
        assert a == b


class TestGlobal:
    @pytest.mark.parametrize("n, expected", [(204, (0, 1)), (51, (0, 2)), (4, (1, 1)), (0, (1, 1))])
    def test_examples(self, n, expected):
        assert check_global_equicontinuity(eca(n)) == expected

    def test_shift_not_found(self):
        assert check_global_equicontinuity(eca(170)) is None

    def test_budget_reported(self):
        with pytest.raises(BudgetExceededError):
            check_global_equicontinuity(eca(4), budget=2**10)

    def test_witness_bounds_orbits(self):
        """A global witness (p0, p) bounds every observed orbit."""
        for n in range(256):
            rule = eca(n)
            witness = check_global_equicontinuity(rule, 3, 3)
            if witness is None:
                continue
            p0, p = witness
            for length in range(1, 7):
                for w in all_words(2, length):
                    cyc, _ = detect_temporal_cycle(rule, CyclicConfig(w))
                    assert cyc.preperiod <= p0 and p % cyc.period == 0

    def test_witness_matches_naive_iteration(self):
        for n in range(256):
            rule = eca(n)
            witness = check_global_equicontinuity(rule, 2, 2)
            if witness is None:
                continue
            p0, p = witness
            k = p0 + p
            for nb in itertools.product((0, 1), repeat=2 * k + 1):
                hi = oracles.iterate_window(rule, nb, k)[0]
                lo = oracles.iterate_window(rule, nb[p : len(nb) - p], p0)[0]
                assert hi == lo


class TestClassify:
    def test_rule4(self):
        rep = classify_kurka(eca(4))
        assert rep.verdict == KurkaVerdict.GLOBALLY_EQUICONTINUOUS
        assert rep.witness == (1, 1) and rep.is_proof

    def test_shift(self):
        rep = classify_kurka(eca(170), lmax=4)
        assert rep.verdict == KurkaVerdict.SENSITIVITY_EVIDENCE
        assert rep.certificate is None and not rep.is_proof
        assert rep.words_refuted == rep.words_tested == 2 + 4 + 8 + 16

    def test_majority(self):
        rep = classify_kurka(eca(232))
        assert rep.verdict == KurkaVerdict.HAS_EQUICONTINUOUS_POINTS
        assert rep.certificate.word == (0, 0)

    def test_json(self):
        js = classify_kurka(eca(4)).to_json()
        assert js["verdict"] == "GLOBALLY_EQUICONTINUOUS" and js["witness"] == [1, 1]

    def test_exclusive_verdicts(self):
        for n in (0, 4, 51, 90, 170, 204, 232):
            for budget in (2**6, 2**24):
                rep = classify_kurka(eca(n), lmax=3, budget=budget, horizon=16, samples=100)
                if rep.verdict == KurkaVerdict.SENSITIVITY_EVIDENCE:
                    assert check_global_equicontinuity(eca(n)) is None
