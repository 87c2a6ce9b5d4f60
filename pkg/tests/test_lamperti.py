import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growthfrag.lamperti import CEMETERY, levy_to_real_time, self_similar_path, time_change
from growthfrag.levy import PathSkeleton, SnlpCharacteristics, sample_snlp_path
from growthfrag.rng import RandomStream

from conftest import LOG4, atom_chars


def linear_skeleton(c, horizon=5.0, tail=True, kill=math.inf):
    return PathSkeleton(0.0, horizon, c, np.empty(0), np.empty(0), kill_time=kill,
                        tail_slope=c if tail else None)


def quad_lamperti(skeleton, alpha, r, n=20_001):
    """Independent oracle: trapezoid rule for int_0^r exp(-alpha*xi), split at the jumps."""
    cuts = np.concatenate(([0.0], skeleton.event_times[skeleton.event_times < r], [r]))
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        s = np.linspace(a, b, n)
        vals = np.exp(-alpha * skeleton.value(s))
        vals[-1] = math.exp(-alpha * float(skeleton.left_value(b)))
        total += float(np.sum((vals[1:] + vals[:-1]) * np.diff(s)) / 2)
    return total


class TestTimeChange:
    def test_homogeneous_identity(self):
        sk = sample_snlp_path(atom_chars([(-1.0, 2.0)], c=0.3), 5.0, None, RandomStream(1))
        for t in (0.0, 0.3, 2.2, 4.9):
            assert time_change(sk, 0.0, t) == t

    @pytest.mark.parametrize("t", [0.1, 0.5, 0.9, 0.999])
    def test_deterministic_drift(self, t):
        assert time_change(linear_skeleton(1.0), 1.0, t) == pytest.approx(-math.log1p(-t), rel=1e-12)

    @pytest.mark.parametrize("t", [1.0, 1.5])
    def test_deterministic_drift_beyond_total(self, t):
        assert time_change(linear_skeleton(1.0), 1.0, t) == math.inf

    def test_killed_skeleton(self):
        sk = linear_skeleton(0.0, horizon=10.0, tail=False, kill=2.0)
        # integrand is 1 up to the kill time, then zero
        assert time_change(sk, 1.0, 1.5) == pytest.approx(1.5)
        assert time_change(sk, 1.0, 2.0) == math.inf
        assert time_change(sk, 1.0, 2.5) == math.inf

    def test_matches_quadrature_with_jumps(self):
        sk = PathSkeleton(0.0, 3.0, 0.4, np.array([0.5, 1.7]), np.array([-1.0, -0.3]))
        for alpha in (-0.7, 0.5, 1.3):
            for r in (0.3, 1.0, 2.5):
                t = quad_lamperti(sk, alpha, r)
                assert time_change(sk, alpha, t) == pytest.approx(r, rel=1e-7)

    def test_monotone(self):
        sk = sample_snlp_path(atom_chars([(-0.5, 3.0)], c=1.0), 20.0, None, RandomStream(4))
        ts = np.linspace(0.0, 0.6, 200)
        taus = np.array([time_change(sk, 0.8, t) for t in ts])
        fin = taus[np.isfinite(taus)]
        assert np.all(np.diff(fin) > 0)

    def test_negative_t(self):
        with pytest.raises(ValueError):
            time_change(linear_skeleton(1.0), 1.0, -0.1)


class TestSelfSimilarPath:
    def test_homogeneous_scaling(self):
        chars = atom_chars([(-LOG4, 1.0), (-0.2, 2.0)], c=0.5)
        sk = sample_snlp_path(chars, 4.0, None, RandomStream(2))
        path = self_similar_path(sk, 0.0, 2.0, 4.0)
        t = np.linspace(0.0, 3.99, 57)
        np.testing.assert_allclose(path.size_at(t), 2.0 * np.exp(sk.value(t)), rtol=1e-12)

    def test_homogeneous_event_round_trip(self):
        sk = sample_snlp_path(atom_chars([(-0.7, 3.0)], c=0.2), 3.0, None, RandomStream(5))
        path = self_similar_path(sk, 0.0, 1.0, 3.0)
        t, before, after = path.jumps()
        np.testing.assert_array_equal(t, sk.event_times)
        np.testing.assert_allclose(np.log(after), sk.value(sk.event_times), atol=1e-12)
        np.testing.assert_allclose(np.log(before), sk.left_value(sk.event_times), atol=1e-12)

    def test_explosion_to_death(self):
        path = self_similar_path(linear_skeleton(1.0), 1.0, 1.0, 2.0)
        assert path.death_time == pytest.approx(1.0, rel=1e-12)
        for t in (0.0, 0.25, 0.5, 0.9):
            assert float(path.size_at(t)) == pytest.approx(1.0 / (1.0 - t), rel=1e-12)
        assert float(path.size_at(1.5)) == CEMETERY

    def test_death_time_scaling(self):
        # death at x^-alpha * int_0^inf e^{-alpha xi} = x^-alpha / c for xi = c s
        for x, c, a in [(2.0, 1.0, 1.0), (0.5, 3.0, 0.5), (4.0, -1.0, -1.0)]:
            path = self_similar_path(linear_skeleton(c), a, x, 100.0)
            assert path.death_time == pytest.approx(x ** -a / (a * c), rel=1e-12)

    def test_jump_ratio(self):
        sk = PathSkeleton(0.0, 4.0, 0.3, np.array([0.7, 2.0]), np.array([-0.9, -LOG4]))
        path = self_similar_path(sk, 0.6, 1.5, 1.0)
        t, before, after = path.jumps()
        assert t.size >= 1
        np.testing.assert_allclose(after / before, np.exp(sk.event_sizes[: t.size]), rtol=1e-12)
        # jump times are the Lamperti images of the Lévy jump times
        for j, s in enumerate(sk.event_times[: t.size]):
            assert t[j] == pytest.approx(levy_to_real_time(path, sk, s), rel=1e-12)
            tj = quad_lamperti(sk, 0.6, s) * 1.5 ** -0.6
            assert t[j] == pytest.approx(tj, rel=1e-7)

    def test_values_match_time_change(self):
        sk = PathSkeleton(0.0, 10.0, -0.4, np.array([0.7, 2.0, 3.1]), np.array([-0.9, -0.2, -1.1]))
        x, a = 2.0, 0.7
        path = self_similar_path(sk, a, x, 2.0)
        for t in np.linspace(0.01, 1.99, 23):
            r = time_change(sk, a, t * x ** a)
            assert float(path.size_at(t)) == pytest.approx(x * math.exp(float(sk.value(r))), rel=1e-10)

    def test_sizes_positive_before_death(self):
        chars = atom_chars([(-1.0, 2.0)], c=-0.5)
        for i in range(20):
            sk = sample_snlp_path(chars, 50.0, None, RandomStream(9, (i,)))
            path = self_similar_path(sk, -0.5, 1.0, 2.0)
            ts = np.linspace(0.0, path.coverage, 100, endpoint=False)
            assert np.all(path.size_at(ts) > 0)
            _, before, after = path.jumps()
            assert np.all(after < before)

    def test_integrate_power_matches_quadrature(self):
        sk = PathSkeleton(0.0, 10.0, -0.4, np.array([0.7, 2.0]), np.array([-0.9, -0.2]))
        for a in (0.0, 0.5, -0.5):
            path = self_similar_path(sk, a, 1.3, 2.0)
            cuts = np.concatenate(([0.0], path.jumps()[0], [2.0]))
            trap = 0.0
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                ts = np.linspace(lo, hi, 20_001)
                vals = path.size_at(ts) ** 1.7
                vals[-1] = float(path.left_size_at(hi)) ** 1.7
                trap += float(np.sum((vals[1:] + vals[:-1]) * np.diff(ts)) / 2)
            assert path.integrate_power(1.7, 0.0, 2.0) == pytest.approx(trap, rel=1e-6)

    @pytest.mark.parametrize("x", [0.0, -1.0])
    def test_rejects_nonpositive_start(self, x):
        with pytest.raises(ValueError):
            self_similar_path(linear_skeleton(1.0), 1.0, x, 1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-2.0, 2.0), st.floats(0.1, 5.0), st.floats(-1.0, 1.0))
    def test_drift_only_closed_form(self, alpha, x, c):
        path = self_similar_path(linear_skeleton(c, horizon=1.0), alpha, x, 1.0)
        t = 0.5 * min(1.0, path.death_time)
        if alpha == 0:
            expected = x * math.exp(c * t)
        else:
            base = 1.0 - alpha * c * x ** alpha * t
            expected = x * base ** (-1.0 / alpha)
        assert float(path.size_at(t)) == pytest.approx(expected, rel=1e-10)
