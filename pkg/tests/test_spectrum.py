import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cafactor.core import BudgetExceededError, eca, shift_rule
from cafactor.spectrum import (
    Cylinder,
    MixingVerdict,
    PeakVerdict,
    attractor_cycles,
    compare_shift_spectrum,
    correlation,
    eigenvalue_scan,
    mixing_test,
    orbit_spectrum_cyclic,
    rational_approximation,
)

ONE = Cylinder((1,), 0)
PHI = (math.sqrt(5) - 1) / 2


class TestCylinder:
    def test_parse(self):
        assert Cylinder.parse("101@-1") == Cylinder((1, 0, 1), -1)
        assert Cylinder.parse("1") == Cylinder((1,), 0)

    def test_empty(self):
        with pytest.raises(ValueError):
            Cylinder(())

    def test_hits_cyclic_wraps(self):
        cells = np.array([[1, 0, 0, 1], [0, 0, 0, 1]])
        assert Cylinder((1, 1), -1).hits(cells, 0, 4).tolist() == [True, False]


class TestCorrelation:
    def test_identity_quarter(self):
        s = correlation(eca(204), ONE, ONE, 10, period=8)
        assert s.values == (0.25,) * 11

    def test_shift_decorrelates(self):
        s = correlation(eca(170), ONE, ONE, 10, period=12)
        assert s.values[0] == 0.25
        assert all(abs(v) < 1e-12 for v in s.values[1:])

    def test_complement_alternates(self):
        s = correlation(eca(51), ONE, ONE, 9, period=6)
        assert s.values == tuple(0.25 if n % 2 == 0 else -0.25 for n in range(10))

    def test_bruteforce_oracle(self):
        """Exact correlations agree with direct enumeration of cyclic configurations."""
        import itertools
        import oracles

        for n_rule in (30, 90, 110, 232):
            rule = eca(n_rule)
            u, v = Cylinder((1, 0), 0), Cylinder((1,), 1)
            s = correlation(rule, u, v, 4, period=6)
            for t in range(5):
                hits = 0
                for w in itertools.product((0, 1), repeat=6):
                    cur = w
                    for _ in range(t):
                        cur = oracles.step_cyclic(rule, cur)
                    hits += w[0] == 1 and w[1] == 0 and cur[1] == 1
                assert s.values[t] == pytest.approx(hits / 64 - 1 / 8, abs=1e-15)

    def test_period_must_cover(self):
        with pytest.raises(ValueError):
            correlation(eca(170), Cylinder((1, 1, 1), 0), ONE, 3, period=2)

    def test_budget(self):
        with pytest.raises(BudgetExceededError):
            correlation(eca(170), ONE, ONE, 3, period=30)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            correlation(eca(170), ONE, ONE, 3, method="magic", period=4)

    @pytest.mark.parametrize("samples", [1000, 10000])
    def test_monte_carlo_shift(self, samples):
        s = correlation(eca(170), ONE, ONE, 12, method="monte_carlo", samples=samples, seed=2)
        assert all(abs(v) <= 4 / math.sqrt(samples) for v in s.values[1:])

    def test_monte_carlo_thread_invariance(self):
        kw = dict(method="monte_carlo", samples=70000, seed=5)
        a = correlation(eca(30), ONE, ONE, 6, threads=1, **kw)
        b = correlation(eca(30), ONE, ONE, 6, threads=4, **kw)
        assert a == b

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 255), st.integers(4, 9))
    def test_bounded_and_c0(self, n, period):
        s = correlation(eca(n), ONE, ONE, 4, period=period)
        assert s.values[0] == 0.25
        assert all(abs(v) <= 1 for v in s.values)


class TestMixing:
    def test_shift_mixing(self):
        s = correlation(eca(170), ONE, ONE, 16, period=17)
        assert mixing_test(s) == MixingVerdict.MIXING_CONSISTENT

    def test_complement_not_mixing(self):
        s = correlation(eca(51), ONE, ONE, 16, period=4)
        assert mixing_test(s) == MixingVerdict.NOT_MIXING

    def test_identity_not_mixing(self):
        s = correlation(eca(204), ONE, ONE, 16, period=4)
        assert mixing_test(s) == MixingVerdict.NOT_MIXING

    def test_inconclusive(self):
        assert mixing_test([0.2] * 8 + [0, 0, 0, 0.1, 0, 0, 0, 0]) == MixingVerdict.INCONCLUSIVE

    def test_too_short(self):
        with pytest.raises(ValueError):
            mixing_test([0.0] * 7)

    def test_tolerance_below_standard_error(self):
        s = correlation(eca(170), ONE, ONE, 10, method="monte_carlo", samples=100)
        with pytest.raises(ValueError):
            mixing_test(s, tolerance=0.01)


def brute_best(alpha, q_max):
    return min(abs(alpha - round(alpha * q) / q) for q in range(1, q_max + 1))


class TestRational:
    def test_simple(self):
        assert rational_approximation(1 / 3, 64, 1e-9) == (Fraction(1, 3), True)

    def test_golden_unresolved(self):
        frac, ok = rational_approximation(PHI, 16, 1e-3)
        assert not ok and frac.denominator <= 16

    @settings(max_examples=200)
    @given(st.floats(0, 0.5), st.integers(1, 40), st.floats(1e-6, 0.05))
    def test_matches_brute_force(self, alpha, q_max, tol):
        frac, ok = rational_approximation(alpha, q_max, tol)
        assert frac.denominator <= q_max
        err = abs(Fraction(alpha) - frac)
        # the returned fraction is a closest one among all p/q with q <= q_max
        assert float(err) == pytest.approx(brute_best(alpha, q_max), abs=1e-12)
        assert ok == (err <= tol)

    def test_semiconvergent(self):
        # with q <= 5 the candidates near 7/20 are 1/3 (off by 1/60) and 2/5 (off by 1/20)
        assert rational_approximation(Fraction(7, 20), 5, 1)[0] == Fraction(1, 3)
        assert rational_approximation(Fraction(7, 20), 20, 0)[0] == Fraction(7, 20)


class TestScan:
    def test_cos_third(self):
        rep = eigenvalue_scan([math.cos(2 * math.pi * n / 3) for n in range(96)])
        assert len(rep.peaks) == 1
        assert rep.peaks[0].verdict == PeakVerdict.RATIONAL
        assert rep.peaks[0].approximation == Fraction(1, 3)

    def test_complement_half(self):
        s = correlation(eca(51), ONE, ONE, 31, period=4)
        rep = eigenvalue_scan(s)
        assert rep.peaks[0].approximation == Fraction(1, 2)
        assert rep.peaks[0].verdict == PeakVerdict.RATIONAL

    def test_golden_unresolved(self):
        rep = eigenvalue_scan([math.cos(2 * math.pi * n * PHI) for n in range(96)],
                              q_max=16, tolerance=1e-3)
        assert rep.peaks and rep.peaks[0].verdict == PeakVerdict.UNRESOLVED
        assert abs(rep.peaks[0].frequency - (1 - PHI)) < 1 / 96

    def test_too_short(self):
        with pytest.raises(ValueError):
            eigenvalue_scan([0.0] * 15)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=16, max_size=200))
    def test_parseval(self, values):
        rep = eigenvalue_scan(values)
        assert rep.spectral_energy == pytest.approx(rep.energy, abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 8), st.integers(2, 12), st.integers(0, 2**32 - 1))
    def test_periodic_series_resolved(self, ell, reps, seed):
        """Series with exact period ell never give UNRESOLVED peaks at Q_max = ell."""
        reps = max(reps, -(-16 // ell))
        rng = np.random.default_rng(seed)
        block = rng.uniform(-1, 1, ell)
        rep = eigenvalue_scan(np.tile(block, reps), q_max=ell)
        assert rep.unresolved == []
        for pk in rep.peaks:
            assert ell % pk.approximation.denominator == 0


class TestOrbits:
    def test_complement(self):
        spec = orbit_spectrum_cyclic(eca(51), 2)
        assert spec.cycle_lengths == (2, 2)
        assert sorted(spec.frequencies) == [0, 0, Fraction(1, 2), Fraction(1, 2)]

    @pytest.mark.parametrize("n", [1, 3, 6])
    def test_identity(self, n):
        spec = orbit_spectrum_cyclic(eca(204), n)
        assert spec.cycle_lengths == (1,) * 2**n and spec.frequency_set == {0}

    def test_shift_n3(self):
        spec = orbit_spectrum_cyclic(eca(170), 3)
        assert spec.cycle_lengths == (1, 1, 3, 3)
        assert spec.frequency_set == {0, Fraction(1, 3), Fraction(2, 3)}

    def test_budget(self):
        with pytest.raises(BudgetExceededError):
            orbit_spectrum_cyclic(eca(30), 12, budget=1000)

    def test_attractor_cycles(self):
        succ = np.array([1, 2, 0, 0, 4, 4])
        assert attractor_cycles(succ) == [[0, 1, 2], [4]]

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 19), min_size=20, max_size=20))
    def test_attractor_cycles_oracle(self, succ):
        """Every node on a found cycle returns to itself; every node reaches one."""
        cycles = attractor_cycles(np.array(succ))
        on_cycle = {v for c in cycles for v in c}
        for c in cycles:
            for i, v in enumerate(c):
                assert succ[v] == c[(i + 1) % len(c)]
        for v in range(20):
            seen = []
            while v not in seen:
                seen.append(v)
                v = succ[v]
            assert v in on_cycle


class TestCompareShift:
    def test_shift_itself(self):
        assert compare_shift_spectrum(shift_rule(2), 5).contained

    def test_identity_fails(self):
        cmp = compare_shift_spectrum(eca(204), 3)
        assert not cmp.contained
        assert set(cmp.missing) == {Fraction(1, 3), Fraction(2, 3)}
        assert "heuristic" in cmp.note

    def test_complement_holds(self):
        cmp = compare_shift_spectrum(eca(51), 2)
        assert cmp.contained and set(cmp.shift_frequencies) == {0, Fraction(1, 2)}
