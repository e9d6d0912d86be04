"""Tests for loading, overriding and validating pipeline configs."""

from pathlib import Path

import pytest

from spotbot.config import PipelineConfig
from spotbot.errors import ValidationError
from spotbot.pipeline import cluster_param_grid

from .conftest import FIXTURES, MINI_CORPUS, load_fixture

CONFIGS = FIXTURES / 'config'


def mini_config() -> PipelineConfig:
    return PipelineConfig.load(CONFIGS / 'mini_pipeline.json')


class TestLoad:
    def test_relative_inputs_resolved(self):
        config = mini_config()
        path = Path(config.corpus.inputs[0].path)
        assert path.is_absolute()
        assert path.resolve() == (MINI_CORPUS / 'manifest.json').resolve()

    def test_values_and_defaults(self):
        config = mini_config()
        assert config.seed == 7
        assert config.clustering.algorithms == ['kmeans', 'wishart']
        assert config.clustering.fuzzifier == 2.0
        assert config.ecplane.budget == 10 ** 7
        assert config.corpus_level.enabled is False

    def test_wishart_grid_defaults(self):
        config = PipelineConfig.from_dict({})
        assert config.clustering.k_neighbors == [4, 8, 16]
        assert config.clustering.h == [0.0, 0.1, 0.2]
        wishart_cells = [p for p in cluster_param_grid(config) if p.algo == 'wishart']
        assert len(wishart_cells) == 9

    def test_valid(self):
        mini_config().validate()

    def test_unknown_key(self):
        with pytest.raises(ValidationError, match='embeddings'):
            PipelineConfig.load(CONFIGS / 'unknown_key.json')

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            PipelineConfig.load(tmp_path / 'nope.json')

    def test_not_an_object(self):
        with pytest.raises(ValidationError, match='config.paths'):
            PipelineConfig.from_dict({'paths': [2]})

    def test_dict_round_trip(self):
        config = mini_config()
        assert PipelineConfig.from_dict(config.to_dict()) == config

    def test_fixture_matches_loader(self):
        raw = load_fixture('config', 'mini_pipeline.json')
        assert mini_config().classifier.lambda_grid == raw['classifier']['lambda_grid']


class TestOverrides:
    def test_flags_win(self):
        config = mini_config().apply_overrides(seed=99, jobs=3, out='elsewhere')
        assert (config.seed, config.jobs, config.out) == (99, 3, 'elsewhere')

    def test_none_keeps_file_values(self):
        config = mini_config().apply_overrides()
        assert (config.seed, config.jobs, config.out) == (7, 2, 'runs/mini')


class TestValidate:
    def test_unknown_algorithm(self):
        with pytest.raises(ValidationError, match='clustering.algorithms'):
            PipelineConfig.load(CONFIGS / 'unknown_algorithm.json').validate()

    def test_bad_ngram_length(self):
        with pytest.raises(ValidationError, match='paths.n'):
            PipelineConfig.load(CONFIGS / 'bad_ranges.json').validate()

    def test_missing_input(self, tmp_path):
        config = PipelineConfig.from_dict({'corpus': {'inputs': [{'path': str(tmp_path / 'absent')}]}})
        with pytest.raises(ValidationError, match='not found'):
            config.validate()

    def test_no_inputs(self):
        with pytest.raises(ValidationError, match='corpus.inputs'):
            PipelineConfig().validate()

    @pytest.mark.parametrize('section, values, key', [
        ('embedding', {'method': 'word2vec'}, 'embedding.method'),
        ('embedding', {'method': 'file'}, 'embedding.vectors'),
        ('embedding', {'method': 'load'}, 'embedding.vectors'),
        ('clustering', {'h': [-1.0]}, 'clustering.h'),
        ('clustering', {'fuzzifier': 1.0}, 'clustering.fuzzifier'),
        ('clustering', {'linkage': 'ward'}, 'clustering.linkage'),
        ('ecplane', {'m_grid': [9]}, 'ecplane.m_grid'),
        ('ecplane', {'n_grid': [1]}, 'ecplane.n_grid'),
        ('classifier', {'folds': 1}, 'classifier.folds'),
        ('classifier', {'lambda_grid': [0.0]}, 'classifier.lambda_grid'),
        ('classifier', {'bot_types': ['gpt']}, 'classifier.bot_types'),
        ('corpus', {'min_count': 0}, 'corpus.min_count'),
    ])
    def test_rejects(self, section, values, key):
        data = load_fixture('config', 'mini_pipeline.json')
        data[section].update(values)
        config = PipelineConfig.from_dict(data, base_dir=CONFIGS)
        with pytest.raises(ValidationError, match=key.replace('.', r'\.')):
            config.validate()

    def test_file_method_is_an_alias_of_load(self, tmp_path):
        vectors = tmp_path / 'v.txt'
        vectors.write_text('1 2\nthe 0.1 0.2\n', encoding='utf-8')
        data = load_fixture('config', 'mini_pipeline.json')
        data['embedding'].update({'method': 'file', 'vectors': str(vectors)})
        config = PipelineConfig.from_dict(data, base_dir=CONFIGS).validate()
        assert config.embedding.method == 'load'

    def test_booleans_are_not_integers(self):
        data = load_fixture('config', 'mini_pipeline.json')
        data['jobs'] = True
        with pytest.raises(ValidationError, match='jobs'):
            PipelineConfig.from_dict(data, base_dir=CONFIGS).validate()

    def test_log_level(self):
        data = load_fixture('config', 'mini_pipeline.json')
        data['log_level'] = 'chatty'
        with pytest.raises(ValidationError, match='log_level'):
            PipelineConfig.from_dict(data, base_dir=CONFIGS).validate()
