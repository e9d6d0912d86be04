"""Tests for the plot-ready CSV writers."""

import numpy as np
import pandas as pd
import pytest

from spotbot.errors import ValidationError
from spotbot.plotdata import emit_plot_data, write_csv

STATS = pd.DataFrame({
    'doc_id': ['a', 'b', 'c', 'd', 'e', 'f'],
    'label': ['human', 'human', 'bot-simple', 'bot-simple', 'bot-advanced', 'bot-advanced'],
    'algo': ['wishart'] * 6,
    'noise_ratio': [0.1, 0.3, 0.5, 0.7, 0.2, 0.2]
})

SWEEP = pd.DataFrame({
    'm': [2, 1, 1], 'n': [3, 4, 3], 'mean_H': [0.5, 0.6, 0.7], 'mean_C': [0.2, 0.3, 0.4],
    'mean_C_human': [0.25, 0.35, 0.45], 'mean_C_bot-simple': [0.15, 0.25, 0.35]
})


class TestEmit:
    def test_noise_ratio_per_corpus(self, tmp_path):
        path = emit_plot_data('noise-ratio', tmp_path / 'noise.csv', STATS)
        table = pd.read_csv(path)
        assert list(table.columns) == ['corpus', 'noise_ratio']
        assert table['corpus'].tolist() == ['bot-advanced', 'bot-simple', 'human']
        np.testing.assert_allclose(table['noise_ratio'], [0.2, 0.6, 0.2])

    def test_sweep_heatmap(self, tmp_path):
        table = pd.read_csv(emit_plot_data('sweep-heatmap', tmp_path / 'heat.csv', SWEEP))
        assert list(table.columns) == ['m', 'n', 'mean_C', 'mean_C_bot-simple', 'mean_C_human']
        assert list(zip(table['m'], table['n'])) == [(1, 3), (1, 4), (2, 3)]

    def test_boundaries_sorted(self, tmp_path):
        table = pd.read_csv(emit_plot_data('boundaries', tmp_path / 'b.csv', alphabet=720, samples=200))
        assert list(table.columns) == ['h', 'c_lower', 'c_upper']
        assert np.all(np.diff(table['h']) > 0)
        assert (table['c_upper'] >= table['c_lower'] - 1e-9).all()

    def test_ec_scatter_cell(self, tmp_path):
        ec = pd.DataFrame({'doc_id': ['b', 'a', 'a'], 'label': ['human', 'bot-simple', 'bot-simple'],
                           'm': [1, 1, 2], 'n': [3, 3, 3], 'H': [0.4, 0.5, 0.6], 'C': [0.1, 0.2, 0.3]})
        table = pd.read_csv(emit_plot_data('ec-scatter', tmp_path / 'ec.csv', ec, m=1, n=3))
        assert table['doc_id'].tolist() == ['a', 'b']

    def test_missing_column_named(self, tmp_path):
        with pytest.raises(ValidationError, match='noise_ratio'):
            emit_plot_data('noise-ratio', tmp_path / 'x.csv', STATS.drop(columns=['noise_ratio']))

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(ValidationError):
            emit_plot_data('histogram', tmp_path / 'x.csv', STATS)

    def test_table_required(self, tmp_path):
        with pytest.raises(ValidationError):
            emit_plot_data('sweep-heatmap', tmp_path / 'x.csv')

    def test_alphabet_required(self, tmp_path):
        with pytest.raises(ValidationError):
            emit_plot_data('boundaries', tmp_path / 'x.csv')


def test_write_csv_is_byte_stable(tmp_path):
    frame = pd.DataFrame({'x': [1 / 3, 2.5e-12], 'y': ['a', 'b']})
    first = write_csv(frame, tmp_path / 'a.csv').read_bytes()
    assert first == write_csv(frame, tmp_path / 'b.csv').read_bytes()
    assert first == b'x,y\n0.3333333333,a\n2.5e-12,b\n'
