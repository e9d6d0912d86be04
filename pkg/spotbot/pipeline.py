"""
End-to-end pipeline: ingest -> embed -> paths -> cluster statistics and
entropy-complexity sweep -> classifiers, with plot data and a run report.

Intermediates are cached under <out>/cache, keyed by an md5 of the stage
name, its parameters and the keys (or file hashes) of its inputs.
"""

import hashlib
import json
import logging
import time
from contextlib import contextmanager
from datetime import datetime
from itertools import product
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .classify import build_features, cross_validate
from .cluster import ClusterParams, ClusterRunner, cluster_points, pool_ngrams, wishart_points
from .config import PipelineConfig
from .corpus import Corpus, CorpusIngester, DocLabel
from .ecplane import SweepResult, alphabet_size, parameter_sweep
from .embed import (EmbeddingTable, SemanticPath, build_paths, load_embeddings, load_paths,
                    save_embeddings, save_paths, svd_embed)
from .errors import SpotBotError, StageError, ValidationError
from .fuzzy import fuzzify_paths
from .markov import generate_corpus
from .metrics import cluster_stats, wilcoxon_ranksum
from .plotdata import emit_plot_data, write_csv

logger = logging.getLogger(__name__)

STATS_COLUMNS = ['doc_id', 'label', 'algo', 'params', 'rmsstd', 'rs', 'noise_ratio',
                 'inter_avg', 'inter_min', 'inter_max', 'k_found']
EC_COLUMNS = ['doc_id', 'label', 'm', 'n', 'H', 'C', 'dist_to_upper', 'chaotic']


def content_hash(payload) -> str:
    """12-character md5 of a JSON-serializable payload."""
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.md5(text.encode('utf-8')).hexdigest()[:12]


def file_md5(path: Path) -> str:
    digest = hashlib.md5()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


class StageCache:
    """Content-addressed intermediates under <out>/cache."""

    def __init__(self, root: Path):
        self.root = Path(root) / 'cache'
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits: List[str] = []

    def key(self, stage: str, params: Dict, inputs: Sequence[str]) -> str:
        return content_hash({'stage': stage, 'params': params, 'inputs': list(inputs)})

    def path(self, stage: str, key: str, suffix: str = '') -> Path:
        return self.root / f"{stage}-{key}{suffix}"

    def hit(self, stage: str, path: Path) -> bool:
        if path.exists():
            self.hits.append(stage)
            logger.info(f"Cache hit for stage {stage}: {path.name}")
            return True
        return False


def cluster_param_grid(config: PipelineConfig) -> List[ClusterParams]:
    """One ClusterParams per algorithm and parameter combination."""
    c = config.clustering
    grid = []
    for algo in c.algorithms:
        if algo in ('kmeans', 'cmeans'):
            grid.append(ClusterParams(algo=algo, k=c.k, fuzzifier=c.fuzzifier, seed=config.seed))
        else:
            for k_neighbors, h in product(c.k_neighbors, c.h):
                grid.append(ClusterParams(algo=algo, k_neighbors=k_neighbors, h=h,
                                          alpha_levels=c.alpha_levels, seed=config.seed))
    return grid


def stats_table(paths: Sequence[SemanticPath], clusterings: Dict, params: ClusterParams,
                linkage: str = 'centroid') -> pd.DataFrame:
    """stats.csv rows for one clustering run."""
    rows = []
    for path in paths:
        clustering = clusterings.get(path.doc_id)
        if clustering is None:
            continue
        stats = cluster_stats(path.points, clustering.labels, linkage)
        rows.append({'doc_id': path.doc_id, 'label': path.label.value, 'algo': params.algo,
                     'params': params.describe(), 'rmsstd': stats.rmsstd, 'rs': stats.rs,
                     'noise_ratio': stats.noise_ratio, 'inter_avg': stats.inter_avg,
                     'inter_min': stats.inter_min, 'inter_max': stats.inter_max,
                     'k_found': stats.k_found})
    return pd.DataFrame(rows, columns=STATS_COLUMNS)


def sweep_tables(result: SweepResult) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """(ec.csv, sweep.csv) frames of a parameter sweep."""
    ec = pd.DataFrame([{'doc_id': r.doc_id, 'label': r.label, 'm': r.m, 'n': r.n, 'H': r.h, 'C': r.c,
                        'dist_to_upper': r.dist_to_upper, 'chaotic': r.chaotic} for r in result.points],
                      columns=EC_COLUMNS)
    ec = ec.sort_values(['m', 'n', 'doc_id'], kind='stable').reset_index(drop=True)

    labels = sorted({label for row in result.rows for label in row.mean_c_by_label})
    rows = []
    for row in result.rows:
        entry = {'m': row.m, 'n': row.n, 'mean_H': row.mean_h, 'mean_C': row.mean_c,
                 'chaotic_fraction': row.chaotic_fraction, 'n_texts': row.n_texts,
                 'skipped_reason': row.skipped_reason}
        entry.update({f"mean_C_{label}": row.mean_c_by_label.get(label, np.nan) for label in labels})
        rows.append(entry)
    sweep = pd.DataFrame(rows).sort_values(['m', 'n'], kind='stable').reset_index(drop=True)
    return ec, sweep


def wilcoxon_table(stats: pd.DataFrame, column: str = 'rmsstd', mode: str = 'auto') -> pd.DataFrame:
    """Human vs. bot rank-sum test of ``column`` for every clustering run."""
    rows = []
    for (algo, params), group in stats.groupby(['algo', 'params'], sort=True):
        values = group.dropna(subset=[column])
        human = values.loc[values['label'] == DocLabel.HUMAN.value, column].to_numpy()
        bot = values.loc[values['label'].isin([DocLabel.BOT_SIMPLE.value, DocLabel.BOT_ADVANCED.value]),
                         column].to_numpy()
        if human.size == 0 or bot.size == 0:
            logger.warning(f"Skipping Wilcoxon for {algo} ({params}): needs both human and bot values")
            continue
        result = wilcoxon_ranksum(human, bot, mode)
        rows.append({'algo': algo, 'params': params, 'column': column, 'U': result.statistic,
                     'p': result.pvalue, 'mode': result.mode, 'n_human': result.n_a, 'n_bot': result.n_b,
                     'direction': result.direction.replace('a', 'human', 1).replace('b', 'bot', 1)})
    return pd.DataFrame(rows, columns=['algo', 'params', 'column', 'U', 'p', 'mode', 'n_human', 'n_bot',
                                       'direction'])


class Pipeline:
    """Runs every configured stage in dependency order."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cache = StageCache(self.out)
        self.timings: Dict[str, float] = {}
        self.outputs: Dict[str, Path] = {}
        self.metrics: Dict = {}
        self.stats = {
            'documents': 0,
            'labels': {},
            'skipped_texts': {},
            'failed_configurations': []
        }

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        logger.info(f"Stage {name} started")
        try:
            yield
        except ValidationError as e:
            raise ValidationError(f"stage '{name}': {e}") from e
        except SpotBotError:
            raise
        except Exception as e:
            raise StageError(name, e) from e
        finally:
            self.timings[name] = round(time.perf_counter() - start, 3)
        logger.info(f"Stage {name} finished in {self.timings[name]:.2f}s")

    def _entries(self, ingester: CorpusIngester):
        entries = []
        for spec in self.config.corpus.inputs:
            path = Path(spec.path)
            if path.is_dir():
                entries.extend(ingester.directory_entries(path, DocLabel(spec.label or 'unlabeled')))
            else:
                found = ingester.manifest_entries(path)
                if spec.label:
                    found = [(doc_id, p, DocLabel(spec.label)) for doc_id, p, _ in found]
                entries.extend(found)
        return entries

    def ingest(self) -> Tuple[Corpus, str]:
        c = self.config.corpus
        ingester = CorpusIngester(min_count=c.min_count, jobs=self.config.jobs, strict=c.strict)
        entries = self._entries(ingester)
        sources = [[doc_id, label.value, file_md5(p) if p.exists() else 'missing'] for doc_id, p, label in entries]
        params = {'min_count': c.min_count, 'strict': c.strict}
        if self.config.markov.enabled:
            params.update({'markov': vars(self.config.markov), 'seed': self.config.seed})
        key = self.cache.key('ingest', params, [content_hash(sources)])
        target = self.cache.path('corpus', key, '.json')
        if self.cache.hit('ingest', target):
            return Corpus.load(target), key

        if self.config.markov.enabled:
            human = ingester.ingest([e for e in entries if e[2] == DocLabel.HUMAN])
            m = self.config.markov
            bot_dir = self.cache.path('markov', key)
            generate_corpus([(d.id, human.decode(d)) for d in human.docs], bot_dir, order=m.order,
                            seed=self.config.seed, prompt_every=m.prompt_every, length=m.length)
            entries = entries + ingester.manifest_entries(bot_dir / 'manifest.json')
            ingester = CorpusIngester(min_count=c.min_count, jobs=self.config.jobs, strict=c.strict)

        corpus = ingester.ingest(entries)
        if not corpus.docs:
            raise ValidationError("no documents could be loaded")
        corpus.save(target)
        return corpus, key

    def embed(self, corpus: Corpus, corpus_key: str) -> Tuple[EmbeddingTable, str]:
        e = self.config.embedding
        params = {'method': e.method, 'dim': e.dim, 'weighting': e.weighting, 'seed': self.config.seed}
        inputs = [corpus_key] + ([file_md5(Path(e.vectors))] if e.method == 'load' else [])
        key = self.cache.key('embed', params, inputs)
        target = self.cache.path('vectors', key, '.txt')
        if self.cache.hit('embed', target):
            return load_embeddings(target, corpus.terms, expected_dim=None), key

        if e.method == 'svd':
            table = svd_embed(corpus.counts, rank=e.dim, weighting=e.weighting, seed=self.config.seed,
                              terms=corpus.terms)
        else:
            table = load_embeddings(e.vectors, corpus.terms)
            self.metrics['embedding_coverage'] = table.coverage
        save_embeddings(table, target)
        return load_embeddings(target, corpus.terms), key

    def semantic_paths(self, corpus: Corpus, table: EmbeddingTable, embed_key: str) -> List[SemanticPath]:
        p = self.config.paths
        key = self.cache.key('paths', {'n': p.n, 'stride': p.stride}, [embed_key])
        target = self.cache.path('paths', key)
        if self.cache.hit('paths', target / 'paths.json'):
            return load_paths(target)
        paths = build_paths(corpus, table, p.n, p.stride, jobs=self.config.jobs)
        save_paths(paths, target, metadata={'n': p.n, 'stride': p.stride, 'dim': table.dim})
        return paths

    def cluster(self, corpus: Corpus, table: EmbeddingTable, paths: List[SemanticPath]) -> pd.DataFrame:
        c = self.config.clustering
        fuzzy_sets = None
        frames = []
        for params in cluster_param_grid(self.config):
            if params.algo == 'wishart-fuzzy' and fuzzy_sets is None:
                fuzzy_sets = fuzzify_paths(corpus.docs, table, self.config.paths.n, self.config.paths.stride,
                                           spread_factor=c.spread_factor)
            runner = ClusterRunner(params, jobs=self.config.jobs)
            clusterings = runner.run(paths, fuzzy_sets if params.algo == 'wishart-fuzzy' else None)
            self.stats['skipped_texts'][f"{params.algo}:{params.describe()}"] = len(runner.stats['skipped_texts'])
            frames.append(stats_table(paths, clusterings, params, c.linkage))
        stats = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=STATS_COLUMNS)
        return stats.sort_values(['algo', 'params', 'doc_id'], kind='stable').reset_index(drop=True)

    def sweep(self, paths: List[SemanticPath]) -> Tuple[pd.DataFrame, pd.DataFrame]:
        e = self.config.ecplane
        result = parameter_sweep(paths, e.m_grid, e.n_grid, stride=e.stride, budget=e.budget,
                                 delta_fraction=e.delta_fraction, jobs=self.config.jobs)
        return sweep_tables(result)

    def _cv_row(self, features: str, bot_type: str, table, **where) -> Optional[Dict]:
        k = self.config.classifier
        tags = [key if value is True else f"{key}{value}" for key, value in where.items()]
        name = '_'.join([features, bot_type] + tags)
        try:
            rows = build_features(features, table, bot_type=bot_type, **where)
            report = cross_validate(rows.X, rows.y, folds=k.folds, lambda_grid=k.lambda_grid,
                                    seed=self.config.seed, test_size=k.test_size, epochs=k.epochs,
                                    feature_names=rows.feature_names)
        except ValidationError as e:
            logger.warning(f"Classifier {name} not trained: {str(e)}")
            self.stats['failed_configurations'].append({'name': name, 'error': str(e)})
            return None
        report.model.save(self.out / 'models' / f"{name.replace('/', '-')}.json",
                          metadata={'features': features, 'bot_type': bot_type, **where})
        return {'features': features, 'bot_type': bot_type, 'algo': where.get('algo', ''),
                'params': where.get('params', 'pooled' if where.get('pooled') else ''),
                'm': where.get('m', np.nan), 'n': where.get('n', np.nan),
                'best_lambda': report.best_lambda, 'cv_mean': report.mean_accuracy, 'cv_std': report.std_accuracy,
                'train_accuracy': report.train_accuracy, 'test_accuracy': report.test_accuracy,
                'n_train': report.n_train, 'n_test': report.n_test}

    def classify(self, stats: Optional[pd.DataFrame], ec: Optional[pd.DataFrame]) -> pd.DataFrame:
        k = self.config.classifier
        rows = []
        for bot_type in k.bot_types:
            if 'cluster' in k.features and stats is not None and not stats.empty:
                for algo, params in stats[['algo', 'params']].drop_duplicates().itertuples(index=False):
                    rows.append(self._cv_row('cluster', bot_type, stats, algo=algo, params=params))
            if 'ec' in k.features and ec is not None and not ec.empty:
                for m, n in ec[['m', 'n']].drop_duplicates().itertuples(index=False):
                    rows.append(self._cv_row('ec', bot_type, ec, m=int(m), n=int(n)))
                if k.pooled_ec:
                    rows.append(self._cv_row('ec', bot_type, ec, pooled=True))
        table = pd.DataFrame([r for r in rows if r is not None],
                             columns=['features', 'bot_type', 'algo', 'params', 'm', 'n', 'best_lambda',
                                      'cv_mean', 'cv_std', 'train_accuracy', 'test_accuracy', 'n_train',
                                      'n_test'])
        return table.sort_values(['features', 'bot_type', 'algo', 'params', 'm', 'n'], kind='stable')

    def corpus_level(self, paths: List[SemanticPath]) -> pd.DataFrame:
        """Pooled n-gram clustering per label, compared across corpora."""
        cl = self.config.corpus_level
        c = self.config.clustering
        rows = []
        for label in sorted({p.label.value for p in paths}):
            points = pool_ngrams([p for p in paths if p.label.value == label], cl.sample, self.config.seed)
            params = ClusterParams(algo=cl.algorithm, k=c.k, k_neighbors=c.k_neighbors[0], h=c.h[0],
                                   fuzzifier=c.fuzzifier, seed=self.config.seed)
            if points.shape[0] < params.min_points():
                logger.warning(f"Corpus {label}: only {points.shape[0]} pooled n-grams, skipped")
                continue
            if cl.algorithm == 'wishart':
                clustering = wishart_points(points, params.k_neighbors, params.h)
            else:
                clustering = cluster_points(points, params)
            stats = cluster_stats(points, clustering.labels, c.linkage)
            rows.append({'corpus': label, 'algo': cl.algorithm, 'params': params.describe(),
                         'n_points': points.shape[0], **stats.to_dict()})
        return pd.DataFrame(rows)

    def _write(self, name: str, frame: pd.DataFrame):
        self.outputs[name] = write_csv(frame, self.out / name)

    def emit_plots(self, stats: Optional[pd.DataFrame], ec: Optional[pd.DataFrame], sweep: Optional[pd.DataFrame]):
        plots = self.out / 'plots'
        if ec is not None and not ec.empty:
            self.outputs['plots/ec_scatter.csv'] = emit_plot_data('ec-scatter', plots / 'ec_scatter.csv', ec)
        if sweep is not None and not sweep.empty:
            self.outputs['plots/sweep_heatmap.csv'] = emit_plot_data('sweep-heatmap', plots / 'sweep_heatmap.csv',
                                                                     sweep)
            for m, n in sweep.loc[sweep['n_texts'] > 0, ['m', 'n']].itertuples(index=False):
                name = f"plots/boundaries_m{m}_n{n}.csv"
                self.outputs[name] = emit_plot_data('boundaries', self.out / name, alphabet=alphabet_size(int(n), int(m)))
        if stats is not None and not stats.empty:
            for algo in sorted(a for a in stats['algo'].unique() if a.startswith('wishart')):
                name = f"plots/noise_ratio_{algo}.csv"
                self.outputs[name] = emit_plot_data('noise-ratio', self.out / name, stats, algo=algo)

    def run(self) -> Dict:
        """Execute all stages and write run_report.json."""
        config = self.config
        stats = ec = sweep = None

        with self.stage('ingest'):
            corpus, corpus_key = self.ingest()
            self.stats['documents'] = len(corpus.docs)
            self.stats['labels'] = dict(sorted(pd.Series([d.label.value for d in corpus.docs]).value_counts().items()))
        with self.stage('embed'):
            table, embed_key = self.embed(corpus, corpus_key)
        with self.stage('paths'):
            paths = self.semantic_paths(corpus, table, embed_key)

        if config.clustering.enabled and config.clustering.algorithms:
            with self.stage('cluster'):
                stats = self.cluster(corpus, table, paths)
                self._write('stats.csv', stats)
            with self.stage('wilcoxon'):
                wilcoxon = wilcoxon_table(stats)
                self._write('wilcoxon.csv', wilcoxon)
                self.metrics['wilcoxon'] = wilcoxon.to_dict(orient='records')

        if config.ecplane.enabled:
            with self.stage('ecplane'):
                ec, sweep = self.sweep(paths)
                self._write('ec.csv', ec)
                self._write('sweep.csv', sweep)

        if config.classifier.enabled:
            with self.stage('classify'):
                classification = self.classify(stats, ec)
                self._write('classification.csv', classification)
                self.metrics['classification'] = classification.to_dict(orient='records')

        if config.corpus_level.enabled:
            with self.stage('corpus_level'):
                self._write('corpus_level.csv', self.corpus_level(paths))

        with self.stage('plots'):
            self.emit_plots(stats, ec, sweep)

        return self.write_report()

    def write_report(self) -> Dict:
        report = {
            'metadata': {
                'created': datetime.now().isoformat(),
                'seed': self.config.seed,
                'config': self.config.to_dict(),
                'cache_hits': self.cache.hits,
                'stats': self.stats
            },
            'stage_timings': self.timings,
            'outputs': {name: file_md5(path) for name, path in sorted(self.outputs.items())},
            'metrics': self.metrics
        }
        with open(self.out / 'run_report.json', 'w', encoding='utf-8') as f:
            json.dump(report, f, indent=2, default=_json_default)
        logger.info(f"Run report written to {self.out / 'run_report.json'}")
        return report


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return None if np.isnan(value) else float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return str(value)


def run_pipeline(config: PipelineConfig) -> Dict:
    """Validate ``config`` and run the whole pipeline; returns the run report."""
    config.validate()
    return Pipeline(config).run()
