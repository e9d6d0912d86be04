"""Tests for trapezoidal fuzzification and alpha-cut distances."""

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from spotbot.corpus import TokenDoc, normalized_frequencies
from spotbot.embed import EmbeddingSource, EmbeddingTable, build_path
from spotbot.errors import ValidationError
from spotbot.fuzzy import (FuzzyDataset, FuzzyParams, TrapFuzzyNumber, TrapFuzzyVector, fuzzify,
                           fuzzify_doc, fuzzify_paths, fuzzy_distance, fuzzy_distance_matrix, join_ngram,
                           resolve_params, token_heights)

from .conftest import PROPERTY_CASES


def random_vector(rng, dim, crisp=False):
    x = rng.normal(size=dim)
    if crisp:
        return fuzzify(x, 1.0, FuzzyParams())
    return TrapFuzzyVector(m1=x, m2=x + rng.uniform(0, 1, dim), l=rng.uniform(0, 1, dim),
                           r=rng.uniform(0, 1, dim), height=np.full(dim, rng.uniform(0.05, 1.0)))


class TestTrapezoid:
    def test_fuzzify_centered_core(self):
        vector = fuzzify([1.0], 0.5, FuzzyParams(delta_c=0.2, l=0.1, r=0.1))
        number = vector.components[0]
        assert number.m1 == pytest.approx(0.9)
        assert number.m2 == pytest.approx(1.1)
        assert number.support == pytest.approx((0.8, 1.2))
        assert number.height == 0.5

    def test_degenerate_is_crisp_singleton(self):
        number = fuzzify([2.5], 1.0, FuzzyParams()).components[0]
        assert (number.m1, number.m2, number.l, number.r) == (2.5, 2.5, 0.0, 0.0)
        assert number.membership(2.5) == 1.0
        assert number.membership(2.6) == 0.0

    def test_membership_shape(self):
        number = TrapFuzzyNumber(m1=0.0, m2=1.0, l=1.0, r=2.0, height=0.8)
        assert number.membership(-0.5) == pytest.approx(0.4)
        assert number.membership(0.5) == pytest.approx(0.8)
        assert number.membership(2.0) == pytest.approx(0.4)
        assert number.membership(3.5) == 0.0

    def test_alpha_cut(self):
        number = TrapFuzzyNumber(m1=0.0, m2=1.0, l=1.0, r=1.0, height=0.5)
        assert number.alpha_cut(0.0) == (-1.0, 2.0)
        assert number.alpha_cut(0.5) == (0.0, 1.0)
        assert number.alpha_cut(0.25) == (-0.5, 1.5)
        with pytest.raises(ValidationError):
            number.alpha_cut(0.6)

    def test_invalid_height(self):
        with pytest.raises(ValidationError):
            fuzzify([1.0], 0.0, FuzzyParams())
        with pytest.raises(ValidationError):
            fuzzify([1.0], 1.5, FuzzyParams())

    def test_negative_widths_rejected(self):
        with pytest.raises(ValidationError):
            FuzzyParams(delta_c=-0.1)

    def test_from_data_uses_spread(self):
        params = FuzzyParams.from_data(np.array([[0.0, 0.0], [2.0, 4.0]]), factor=0.1)
        np.testing.assert_allclose(params.delta_c, [0.1, 0.2])
        np.testing.assert_allclose(params.l, params.r)


class TestJoin:
    def test_min_height_and_length(self):
        a = fuzzify([1.0, 2.0], 0.8, FuzzyParams())
        b = fuzzify([3.0, 4.0], 0.5, FuzzyParams())
        joined = join_ngram([a, b])
        assert len(joined) == 4
        assert np.all(joined.height == 0.5)
        np.testing.assert_array_equal(joined.m1, [1, 2, 3, 4])

    def test_single_word_unchanged(self):
        a = fuzzify([1.0, 2.0], 0.7, FuzzyParams(0.1, 0.2, 0.3))
        joined = join_ngram([a])
        for name in ('m1', 'm2', 'l', 'r', 'height'):
            np.testing.assert_array_equal(getattr(joined, name), getattr(a, name))

    def test_full_heights_stay(self):
        joined = join_ngram([fuzzify([1.0], 1.0, FuzzyParams()), fuzzify([2.0], 1.0, FuzzyParams())])
        assert np.all(joined.height == 1.0)

    def test_empty(self):
        with pytest.raises(ValidationError):
            join_ngram([])

    def test_height_is_exact_minimum(self, rng):
        for _ in range(PROPERTY_CASES):
            heights = rng.uniform(0.01, 1.0, size=rng.integers(1, 5))
            words = [fuzzify(rng.normal(size=3), float(h), FuzzyParams(0.1, 0.1, 0.1)) for h in heights]
            assert np.all(join_ngram(words).height == heights.min())


class TestDistance:
    def test_identical(self, rng):
        v = random_vector(rng, 4)
        assert fuzzy_distance(v, v) == 0.0

    def test_crisp_scalars(self):
        a = fuzzify([1.0], 1.0, FuzzyParams())
        b = fuzzify([4.0], 1.0, FuzzyParams())
        assert fuzzy_distance(a, b) == pytest.approx(3.0, abs=1e-12)

    def test_shifted_trapezoid(self):
        a = TrapFuzzyVector(m1=[0.0], m2=[1.0], l=[1.0], r=[1.0], height=[1.0])
        b = TrapFuzzyVector(m1=[2.0], m2=[3.0], l=[1.0], r=[1.0], height=[1.0])
        assert fuzzy_distance(a, b) == pytest.approx(2.0, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            fuzzy_distance(fuzzify([1.0], 1.0, FuzzyParams()), fuzzify([1.0, 2.0], 1.0, FuzzyParams()))

    def test_too_few_levels(self):
        v = fuzzify([1.0], 1.0, FuzzyParams())
        with pytest.raises(ValidationError):
            fuzzy_distance(v, v, levels=1)

    def test_crisp_limit_is_euclidean(self, rng):
        for _ in range(PROPERTY_CASES):
            dim = int(rng.integers(1, 7))
            a, b = random_vector(rng, dim, crisp=True), random_vector(rng, dim, crisp=True)
            assert fuzzy_distance(a, b) == pytest.approx(np.linalg.norm(a.m1 - b.m1), abs=1e-12)

    def test_symmetric_and_non_negative(self, rng):
        for _ in range(PROPERTY_CASES):
            dim = int(rng.integers(1, 7))
            a, b = random_vector(rng, dim), random_vector(rng, dim)
            d = fuzzy_distance(a, b)
            assert d >= 0
            assert d == pytest.approx(fuzzy_distance(b, a), abs=1e-12)

    def test_translation_equivariance(self, rng):
        for _ in range(PROPERTY_CASES):
            dim = int(rng.integers(1, 7))
            a, b = random_vector(rng, dim), random_vector(rng, dim)
            shift = rng.normal(size=dim)
            moved_a = TrapFuzzyVector(a.m1 + shift, a.m2 + shift, a.l, a.r, a.height)
            moved_b = TrapFuzzyVector(b.m1 + shift, b.m2 + shift, b.l, b.r, b.height)
            assert fuzzy_distance(moved_a, moved_b) == pytest.approx(fuzzy_distance(a, b), abs=1e-12)

    def test_matrix_matches_pairwise_and_blocks(self, rng):
        dataset = FuzzyDataset.from_vectors([random_vector(rng, 3) for _ in range(9)])
        full = fuzzy_distance_matrix(dataset)
        blocked = fuzzy_distance_matrix(dataset, jobs=3, block_elements=50)
        np.testing.assert_allclose(full, blocked, atol=1e-12)
        assert np.array_equal(full, full.T)
        assert np.all(np.diag(full) == 0)
        assert full[2, 5] == pytest.approx(fuzzy_distance(dataset[2], dataset[5]), abs=1e-12)


class TestPaths:
    table = EmbeddingTable(vectors=np.array([[0.0, 1.0], [2.0, -1.0], [4.0, 0.5]]), terms=['a', 'b', 'c'],
                           source=EmbeddingSource.EXTERNAL)

    def test_token_heights(self):
        heights = token_heights(TokenDoc(id='d', tokens=(0, 0, 1, 2, 0)))
        np.testing.assert_allclose(heights, [1, 1, 1 / 3, 1 / 3, 1])

    def test_heights_are_relative_normalized_frequencies(self, rng):
        for _ in range(PROPERTY_CASES):
            doc = TokenDoc(id='d', tokens=tuple(int(t) for t in rng.integers(0, 6, size=int(rng.integers(1, 30)))))
            freqs = normalized_frequencies(doc)
            top = max(freqs.values())
            np.testing.assert_allclose(token_heights(doc), [freqs[t] / top for t in doc.tokens], rtol=0, atol=1e-12)
            assert token_heights(doc).max() == 1.0

    def test_given_widths_replace_defaults_one_by_one(self):
        docs = [TokenDoc(id='d', tokens=(0, 1, 0))]
        params = resolve_params(docs, self.table, 0.1, delta_c=0.5)
        np.testing.assert_allclose(params.delta_c, 0.5)
        np.testing.assert_allclose(params.l, [0.1, 0.1])
        np.testing.assert_allclose(params.r, [0.1, 0.1])

    def test_default_widths_come_from_used_vectors(self):
        params = resolve_params([TokenDoc(id='d', tokens=(0, 1))], self.table, 0.1)
        for name in ('delta_c', 'l', 'r'):
            np.testing.assert_allclose(getattr(params, name), [0.1, 0.1])

    def test_uniform_frequency_gives_full_heights(self):
        dataset = fuzzify_doc(TokenDoc(id='d', tokens=(0, 1, 2)), self.table, 2, 1, FuzzyParams(0.1, 0.1, 0.1))
        assert np.all(dataset.height == 1.0)

    def test_bigram_of_frequent_and_half_frequent(self):
        dataset = fuzzify_doc(TokenDoc(id='d', tokens=(0, 1, 0)), self.table, 2, 1, FuzzyParams())
        np.testing.assert_allclose(dataset.height, 0.5)

    def test_rows_equal_join_of_word_fuzzifications(self):
        doc = TokenDoc(id='d', tokens=(0, 1, 1, 2))
        params = FuzzyParams(0.2, 0.1, 0.3)
        dataset = fuzzify_doc(doc, self.table, 2, 1, params)
        heights = token_heights(doc)
        words = [fuzzify(self.table.vectors[t], float(h), params) for t, h in zip(doc.tokens, heights)]
        for row in range(3):
            expected = join_ngram(words[row:row + 2])
            got = dataset[row]
            for name in ('m1', 'm2', 'l', 'r', 'height'):
                np.testing.assert_allclose(getattr(got, name), getattr(expected, name))

    def test_crisp_params_reproduce_euclidean_matrix(self, rng):
        doc = TokenDoc(id='d', tokens=tuple(int(t) for t in rng.integers(0, 3, size=12)))
        [dataset] = fuzzify_paths([doc], self.table, n=2, params=FuzzyParams())
        points = build_path(doc, self.table, 2).points
        np.testing.assert_allclose(fuzzy_distance_matrix(dataset), cdist(points, points), atol=1e-12)

    def test_default_widths_from_used_vectors(self):
        docs = [TokenDoc(id='d', tokens=(0, 1))]
        [dataset] = fuzzify_paths(docs, self.table, n=1)
        np.testing.assert_allclose(dataset.l[0], 0.1 * self.table.vectors[[0, 1]].std(axis=0))
        np.testing.assert_allclose(dataset.centers(), self.table.vectors[[0, 1]])
