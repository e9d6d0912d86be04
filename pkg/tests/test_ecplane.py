"""Tests for ordinal patterns, the entropy-complexity plane and its boundaries."""

import math

import numpy as np
import pytest

from spotbot.corpus import DocLabel
from spotbot.ecplane import (ECPoint, OrdinalDistribution, boundary_curves, boundary_curves_for,
                             chaotic_area_test, ec_points, ec_values, entropy_complexity, multidim_distribution,
                             ordinal_pattern, parameter_sweep)
from spotbot.embed import SemanticPath
from spotbot.errors import ValidationError

from .conftest import PROPERTY_CASES


def dense_ec(p, alphabet):
    """Direct evaluation of H and C over the full alphabet."""
    probs = np.zeros(alphabet)
    probs[:len(p)] = p
    uniform = np.full(alphabet, 1.0 / alphabet)

    def entropy(q):
        q = q[q > 0]
        return float(-np.sum(q * np.log(q)))

    log_n = math.log(alphabet)
    h = entropy(probs) / log_n
    js = entropy((probs + uniform) / 2) - entropy(probs) / 2 - entropy(uniform) / 2
    q0 = -2.0 / ((alphabet + 1) / alphabet * math.log(alphabet + 1) - 2 * math.log(2 * alphabet) + log_n)
    return h, q0 * js * h


def logistic_orbit(length, x=0.3141, skip=1000):
    values = np.empty(length)
    for i in range(length + skip):
        x = 4.0 * x * (1.0 - x)
        if i >= skip:
            values[i - skip] = x
    return values


def random_distributions(rng, alphabet, count):
    alpha = float(rng.uniform(0.05, 2.0))
    support = int(rng.integers(1, alphabet + 1))
    rows = np.zeros((count, alphabet))
    rows[:, :support] = rng.dirichlet(np.full(support, alpha), size=count)
    return rows


class TestOrdinalPattern:
    def test_argsort(self):
        assert ordinal_pattern([1.2, 3.4, 2.2]) == (0, 2, 1)

    def test_decreasing(self):
        assert ordinal_pattern([3, 2, 1]) == (2, 1, 0)

    def test_ties_keep_position(self):
        assert ordinal_pattern([1, 1]) == (0, 1)

    def test_nan(self):
        with pytest.raises(ValidationError):
            ordinal_pattern([1.0, float('nan')])


class TestDistribution:
    def test_monotone_series(self):
        dist = multidim_distribution(np.arange(20.0), n=4)
        assert dist.probs == {((0, 1, 2, 3),): 1.0}

    def test_alternating_series(self):
        dist = multidim_distribution([0.0, 1.0, 0.0, 1.0], n=2)
        assert dist.total_windows == 3
        assert dist.probs[((0, 1),)] == pytest.approx(2 / 3)
        assert dist.probs[((1, 0),)] == pytest.approx(1 / 3)

    def test_identical_components(self, rng):
        x = rng.normal(size=50)
        dist = multidim_distribution(np.column_stack([x, x]), n=3)
        assert all(key[0] == key[1] for key in dist.probs)

    def test_leading_components(self, rng):
        X = rng.normal(size=(40, 5))
        assert multidim_distribution(X, n=3, m=2).probs == multidim_distribution(X[:, :2], n=3).probs

    def test_window_count_law(self, rng):
        x = rng.normal(size=30)
        counts = [multidim_distribution(x, n=n).total_windows for n in range(2, 8)]
        assert np.all(np.diff(counts) == -1)

    def test_stride(self):
        assert multidim_distribution(np.arange(10.0), n=3, stride=3).total_windows == 3

    def test_too_short(self):
        with pytest.raises(ValidationError):
            multidim_distribution([1.0, 2.0], n=3)

    def test_keys_and_mass(self, rng):
        for _ in range(PROPERTY_CASES):
            n, m = int(rng.integers(2, 6)), int(rng.integers(1, 3))
            dist = multidim_distribution(rng.normal(size=(int(rng.integers(n, 60)), m)), n=n)
            assert len(dist.probs) <= math.factorial(n) ** m
            assert math.fsum(dist.probs.values()) == pytest.approx(1.0, abs=1e-12)
            assert all(sorted(perm) == list(range(n)) for key in dist.probs for perm in key)


class TestEntropyComplexity:
    def test_uniform(self):
        dist = OrdinalDistribution(n=3, m=1, probs={(p,): 1 / 6 for p in range(6)}, total_windows=6)
        point = entropy_complexity(dist)
        assert point.h == pytest.approx(1.0, abs=1e-12)
        assert point.c == pytest.approx(0.0, abs=1e-9)

    def test_degenerate(self):
        point = entropy_complexity(OrdinalDistribution(n=4, m=2, probs={'only': 1.0}, total_windows=9))
        assert point.h == 0.0 and point.c == 0.0

    def test_two_patterns(self):
        point = entropy_complexity(OrdinalDistribution(n=2, m=1, probs={'a': 0.75, 'b': 0.25}, total_windows=4))
        expected_h, expected_c = dense_ec([0.75, 0.25], 2)
        assert point.h == pytest.approx(0.8112781245, abs=1e-9)
        assert point.h == pytest.approx(expected_h, abs=1e-12)
        assert point.c == pytest.approx(expected_c, abs=1e-12)

    def test_sparse_matches_dense(self, rng):
        for _ in range(PROPERTY_CASES):
            alphabet = int(rng.choice([2, 6, 24, 120]))
            p = random_distributions(rng, alphabet, 1)[0]
            h, c = ec_values(p[p > 0], math.log(alphabet))
            expected = dense_ec(p, alphabet)
            assert h[0] == pytest.approx(expected[0], abs=1e-9)
            assert c[0] == pytest.approx(expected[1], abs=1e-9)

    def test_bad_distribution(self):
        with pytest.raises(ValidationError):
            entropy_complexity(OrdinalDistribution(n=2, m=1, probs={'a': 0.5}, total_windows=2))

    def test_monotone_transform_keeps_entropy(self, rng):
        for _ in range(PROPERTY_CASES):
            x = rng.normal(size=int(rng.integers(10, 80)))
            n = int(rng.integers(2, 6))
            if x.size < n:
                continue
            base = entropy_complexity(multidim_distribution(x, n)).h
            for transform in (np.exp, np.arctan, lambda v: v ** 3 + 2 * v):
                assert entropy_complexity(multidim_distribution(transform(x), n)).h == base

    def test_reversal_keeps_entropy(self, rng):
        for _ in range(PROPERTY_CASES):
            x = rng.normal(size=int(rng.integers(6, 80)))
            n = int(rng.integers(2, 6))
            forward = multidim_distribution(x, n)
            backward = multidim_distribution(x[::-1], n)
            assert len(forward.probs) == len(backward.probs)
            assert entropy_complexity(backward).h == pytest.approx(entropy_complexity(forward).h, abs=1e-12)

    def test_complexity_vanishes_at_extremes(self, rng):
        for _ in range(PROPERTY_CASES):
            alphabet = int(rng.integers(2, 50))
            log_n = math.log(alphabet)
            one_hot = np.zeros((1, alphabet))
            one_hot[0, int(rng.integers(alphabet))] = 1.0
            assert ec_values(one_hot, log_n)[1][0] == pytest.approx(0.0, abs=1e-9)
            assert ec_values(np.full((1, alphabet), 1.0 / alphabet), log_n)[1][0] == pytest.approx(0.0, abs=1e-9)


class TestBoundaries:
    def test_endpoints(self):
        for alphabet in (2, 6, 720):
            curves = boundary_curves(alphabet, samples=200)
            for polyline in (curves.lower, curves.upper):
                assert tuple(polyline[0]) == (0.0, 0.0)
                assert tuple(polyline[-1]) == (1.0, 0.0)
                assert np.all(np.diff(polyline[:, 0]) > 0)

    def test_upper_dominates_lower(self):
        curves = boundary_curves(6, samples=500)
        np.testing.assert_array_equal(curves.lower[:, 0], curves.upper[:, 0])
        assert np.all(curves.upper[:, 1] >= curves.lower[:, 1] - 1e-12)
        vertex = np.argmax(curves.upper[:, 1])
        assert curves.upper[vertex, 1] > curves.lower[vertex, 1]

    def test_family_points_lie_on_curves(self):
        curves = boundary_curves(6)
        for p in (0.3, 0.5, 0.9):
            h, c = dense_ec([p] + [(1 - p) / 5] * 5, 6)
            assert float(curves.lower_at(h)) == pytest.approx(c, abs=1e-9)
        for q in (0.05, 0.15, 0.3):
            h, c = dense_ec([q] + [(1 - q) / 2] * 2, 6)
            assert float(curves.upper_at(h)) == pytest.approx(c, abs=1e-9)

    def test_random_distributions_inside(self, rng):
        curves = boundary_curves(6)
        log_n = math.log(6)
        for _ in range(PROPERTY_CASES):
            h, c = ec_values(random_distributions(rng, 6, 20), log_n)
            assert np.all(c <= curves.upper_at(h) + 1e-9)
            assert np.all(c >= curves.lower_at(h) - 1e-9)

    def test_points_from_series_inside(self, rng):
        cache = {}
        for _ in range(PROPERTY_CASES):
            n, m = int(rng.integers(2, 5)), int(rng.integers(1, 3))
            X = np.cumsum(rng.normal(size=(int(rng.integers(n, 120)), m)), axis=0)
            point = entropy_complexity(multidim_distribution(X, n))
            curves = cache.setdefault((n, m), boundary_curves_for(n, m, samples=50))
            assert point.c <= float(curves.upper_at(point.h)) + 1e-6
            assert point.c >= float(curves.lower_at(point.h)) - 1e-6

    def test_small_alphabet(self):
        with pytest.raises(ValidationError):
            boundary_curves(1)


class TestChaoticArea:
    def test_point_on_upper_curve(self):
        curves = boundary_curves(24)
        point = ECPoint(h=0.6, c=float(curves.upper_at(0.6)), n=4, m=1, alphabet=24)
        assert chaotic_area_test(point, curves, delta=0.0).chaotic

    def test_white_noise_corner(self):
        curves = boundary_curves(24)
        result = chaotic_area_test(ECPoint(h=1.0, c=0.0, n=4, m=1, alphabet=24), curves)
        assert not result.chaotic
        assert result.distance == pytest.approx(0.0, abs=1e-9)

    def test_far_below_upper(self):
        curves = boundary_curves(24)
        result = chaotic_area_test(ECPoint(h=0.5, c=float(curves.lower_at(0.5)), n=4, m=1, alphabet=24), curves)
        assert not result.chaotic and result.distance > 0

    def test_entropy_out_of_range(self):
        with pytest.raises(ValidationError):
            chaotic_area_test(ECPoint(h=1.2, c=0.0, n=4, m=1, alphabet=24), boundary_curves(24))

    def test_alphabet_mismatch(self):
        with pytest.raises(ValidationError):
            chaotic_area_test(ECPoint(h=0.5, c=0.1, n=3, m=1, alphabet=6), boundary_curves(24))


class TestSweep:
    def paths(self, rng, lengths=(300, 300, 2)):
        return [SemanticPath(doc_id=f"t{i}", n=1, points=rng.uniform(size=(length, 3)),
                             label=DocLabel.HUMAN if i % 2 else DocLabel.BOT_SIMPLE)
                for i, length in enumerate(lengths)]

    def test_noise_corpus_not_chaotic(self, rng):
        result = parameter_sweep(self.paths(rng, (3000, 3000)), [1, 2], [3, 4])
        assert all(row.chaotic_fraction == 0.0 for row in result.rows)

    def test_budget_skips_cells(self, rng):
        result = parameter_sweep(self.paths(rng), [1, 3], [3], budget=100)
        skipped = [row for row in result.rows if row.skipped_reason]
        assert [(row.m, row.n) for row in skipped] == [(3, 3)]
        assert skipped[0].n_texts == 0

    def test_short_texts_counted(self, rng):
        result = parameter_sweep(self.paths(rng), [1], [3])
        assert result.skipped_texts == 1
        assert result.rows[0].n_texts == 2
        assert set(result.rows[0].mean_c_by_label) == {'human', 'bot-simple'}

    def test_single_text_fraction(self, rng):
        result = parameter_sweep([SemanticPath('a', 1, np.cumsum(rng.normal(size=(200, 2)), axis=0))],
                                 [1, 2], [3, 4, 5])
        assert all(row.chaotic_fraction in (0.0, 1.0) for row in result.rows)

    def test_ec_points_rows(self, rng):
        rows, skipped = ec_points(self.paths(rng), m=2, n=3, jobs=2)
        assert [r.doc_id for r in rows] == ['t0', 't1'] and skipped == 1
        assert all(0.0 <= r.h <= 1.0 for r in rows)

    def test_empty_grid(self, rng):
        with pytest.raises(ValidationError):
            parameter_sweep(self.paths(rng), [], [3])


@pytest.mark.slow
class TestCanonicalPlacements:
    LENGTH = 100_000

    def test_logistic_map_is_chaotic(self):
        curves = boundary_curves_for(6, 1)
        point = entropy_complexity(multidim_distribution(logistic_orbit(self.LENGTH), 6))
        assert chaotic_area_test(point, curves, delta=0.05 * curves.c_max).chaotic

    def test_uniform_noise(self, rng):
        point = entropy_complexity(multidim_distribution(rng.uniform(size=self.LENGTH), 6))
        assert point.h >= 0.97
        assert point.c <= 0.07

    def test_monotone_ramp(self):
        point = entropy_complexity(multidim_distribution(np.arange(float(self.LENGTH)), 6))
        assert point.h == 0.0 and point.c == 0.0


@pytest.mark.slow
@pytest.mark.parametrize('alphabet', [6, 24, 720])
def test_boundary_containment(rng, alphabet):
    curves = boundary_curves(alphabet)
    log_n = math.log(alphabet)
    for _ in range(10):
        h, c = ec_values(random_distributions(rng, alphabet, 10_000), log_n)
        assert np.all(c <= curves.upper_at(h) + 1e-9)
        assert np.all(c >= curves.lower_at(h) - 1e-9)
