#!/usr/bin/env python3
"""
spotbot command line.

Every stage of the pipeline is a subcommand reading and writing plain files;
``run`` executes the whole pipeline from a JSON config.
Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .classify import (BOT_TYPES, FEATURE_SETS, FeatureTable, LinearModel, build_features,
                       cross_validate, predict)
from .cluster import ALGORITHMS, ClusterParams, ClusterRunner, Clustering
from .config import LOG_LEVELS, PipelineConfig
from .corpus import Corpus, CorpusIngester, DocLabel
from .ecplane import DEFAULT_PATTERN_BUDGET, alphabet_size, parameter_sweep
from .embed import (EMBED_METHODS, METHOD_ALIASES, build_paths, embedding_method, load_embeddings, load_paths,
                    save_embeddings, save_paths, svd_embed)
from .errors import ValidationError
from .fuzzy import DEFAULT_ALPHA_LEVELS, DEFAULT_SPREAD_FACTOR, fuzzify_paths, resolve_params
from .log import setup_logging
from .markov import generate_corpus
from .metrics import LINKAGES, WILCOXON_MODES, wilcoxon_ranksum, wilcoxon_signedrank
from .pipeline import run_pipeline, stats_table, sweep_tables
from .plotdata import PLOT_KINDS, emit_plot_data, write_csv

logger = logging.getLogger(__name__)


def parse_int_range(text: str) -> List[int]:
    """'2..5' -> [2, 3, 4, 5]; '1,3' -> [1, 3]."""
    try:
        if '..' in text:
            start, stop = text.split('..', 1)
            values = list(range(int(start), int(stop) + 1))
        else:
            values = [int(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        raise ValidationError(f"invalid integer range '{text}'") from e
    if not values:
        raise ValidationError(f"empty range '{text}'")
    return values


def parse_float_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        raise ValidationError(f"invalid number list '{text}'") from e
    if not values:
        raise ValidationError(f"empty list '{text}'")
    return values


def read_table(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ValidationError(f"cannot read table {path}: {e}") from e


def write_json(payload: Dict, path: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, ensure_ascii=False)


def cmd_ingest(args) -> int:
    ingester = CorpusIngester(min_count=args.min_count, jobs=args.jobs, strict=args.strict)
    if args.manifest:
        corpus = ingester.ingest_manifest(args.manifest)
    else:
        corpus = ingester.ingest_directory(args.input, DocLabel(args.label))
    corpus.save(args.out)

    print(f"\n=== Ingestion Complete ===")
    print(f"Documents: {len(corpus.docs)} of {ingester.stats['documents_found']}")
    print(f"Vocabulary: {corpus.vocab_size} terms")
    print(f"Failed documents: {len(ingester.stats['failed_documents'])}")
    print(f"Output saved to: {args.out}")
    return 0


def cmd_embed(args) -> int:
    corpus = Corpus.load(args.corpus)
    if embedding_method(args.method) == 'svd':
        table = svd_embed(corpus.counts, rank=args.dim, weighting=args.weighting, seed=args.seed,
                          terms=corpus.terms)
    else:
        if not args.vectors:
            raise ValidationError("--vectors is required with --method load")
        table = load_embeddings(args.vectors, corpus.terms, expected_dim=args.dim)
        print(f"Coverage: {table.coverage['coverage']:.1%} ({table.coverage['missing']} missing)")
    save_embeddings(table, args.out)
    print(f"Embedded {len(table.terms)} terms in {table.dim} dimensions -> {args.out}")
    if table.rank_deficient:
        print(f"Warning: matrix rank below requested dimension {args.dim}")
    return 0


def cmd_path(args) -> int:
    corpus = Corpus.load(args.corpus)
    table = load_embeddings(args.vectors, corpus.terms)
    paths = build_paths(corpus, table, args.n, args.stride, jobs=args.jobs)
    save_paths(paths, args.out, metadata={'n': args.n, 'stride': args.stride, 'dim': table.dim})
    print(f"Wrote {len(paths)} semantic paths ({sum(len(p) for p in paths)} n-grams) to {args.out}")
    return 0


def cmd_cluster(args) -> int:
    paths = load_paths(args.paths)
    params = ClusterParams(algo=args.algo, k=args.k, k_neighbors=args.k_neighbors, h=args.h,
                           fuzzifier=args.fuzzifier, alpha_levels=args.alpha_levels, seed=args.seed)
    fuzzy_sets = fuzzy_widths = None
    if args.algo == 'wishart-fuzzy':
        if not args.corpus or not args.vectors:
            raise ValidationError("wishart-fuzzy needs --corpus and --vectors for membership heights")
        corpus = Corpus.load(args.corpus)
        table = load_embeddings(args.vectors, corpus.terms)
        docs = {d.id: d for d in corpus.docs}
        missing = [p.doc_id for p in paths if p.doc_id not in docs]
        if missing:
            raise ValidationError(f"paths not found in corpus: {missing[:5]}")
        texts = [docs[p.doc_id] for p in paths]
        widths = resolve_params(texts, table, args.spread_factor, delta_c=args.delta_c, l=args.l, r=args.r)
        fuzzy_sets = fuzzify_paths(texts, table, paths[0].n, stride=args.stride, params=widths)
        fuzzy_widths = {name: np.atleast_1d(getattr(widths, name)).tolist() for name in ('delta_c', 'l', 'r')}

    runner = ClusterRunner(params, jobs=args.jobs)
    clusterings = runner.run(paths, fuzzy_sets)
    payload = {
        'metadata': {'algo': args.algo, 'params': params.to_dict(), 'stats': runner.stats},
        'texts': {doc_id: c.to_dict() for doc_id, c in sorted(clusterings.items())}
    }
    if fuzzy_widths is not None:
        payload['metadata']['fuzzy_widths'] = fuzzy_widths
    write_json(payload, args.out)
    noise = [c.noise_ratio for c in clusterings.values()]
    print(f"Clustered {len(clusterings)} texts with {args.algo}; "
          f"mean noise ratio {np.mean(noise) if noise else 0.0:.3f} -> {args.out}")
    return 0


def cmd_stats(args) -> int:
    with open(args.labels, 'r', encoding='utf-8') as f:
        payload = json.load(f)
    paths = load_paths(args.paths)
    try:
        params = ClusterParams(**payload['metadata']['params'])
        clusterings = {doc_id: Clustering(labels=np.asarray(t['labels'], dtype=np.int64), k_found=int(t['k_found']),
                                          algorithm=params.algo)
                       for doc_id, t in payload['texts'].items()}
    except (KeyError, TypeError) as e:
        raise ValidationError(f"malformed labels file {args.labels}: {e}") from e
    for path in paths:
        if path.doc_id in clusterings and len(clusterings[path.doc_id].labels) != len(path):
            raise ValidationError(f"labels for {path.doc_id} do not match its path length")
    table = stats_table(paths, clusterings, params, args.linkage)
    write_csv(table.sort_values('doc_id', kind='stable'), args.out)
    print(f"Wrote statistics for {len(table)} texts to {args.out}")
    return 0


def cmd_wilcoxon(args) -> int:
    a, b = read_table(args.a), read_table(args.b)
    for name, frame in (('--a', a), ('--b', b)):
        if args.column not in frame.columns:
            raise ValidationError(f"{name} table has no column '{args.column}'")
    values_a = a[args.column].dropna().to_numpy()
    values_b = b[args.column].dropna().to_numpy()
    if args.paired:
        result = wilcoxon_signedrank(values_a, values_b)
    else:
        result = wilcoxon_ranksum(values_a, values_b, args.mode)
    summary = {'column': args.column, 'statistic': result.statistic, 'p': result.pvalue, 'mode': result.mode,
               'n_a': result.n_a, 'n_b': result.n_b, 'direction': result.direction}
    print(json.dumps(summary, indent=2))
    if args.out:
        write_json(summary, args.out)
    return 0


def cmd_ecplane(args) -> int:
    paths = load_paths(args.paths)
    result = parameter_sweep(paths, parse_int_range(args.m), parse_int_range(args.n), stride=args.stride,
                             budget=args.budget, delta_fraction=args.delta_fraction, jobs=args.jobs)
    ec, sweep = sweep_tables(result)
    write_csv(ec, args.out)
    if args.sweep_out:
        write_csv(sweep, args.sweep_out)
    for row in result.rows:
        status = row.skipped_reason or f"mean H {row.mean_h:.3f}, mean C {row.mean_c:.3f}, chaotic {row.chaotic_fraction:.2f}"
        print(f"  m={row.m} n={row.n}: {status}")
    print(f"Wrote {len(ec)} entropy-complexity points to {args.out}")
    return 0


def cmd_boundaries(args) -> int:
    emit_plot_data('boundaries', args.out, alphabet=alphabet_size(args.n, args.m), samples=args.samples)
    print(f"Wrote boundary curves for N={alphabet_size(args.n, args.m)} to {args.out}")
    return 0


def cmd_features(args) -> int:
    table = build_features(args.kind, read_table(args.input), bot_type=args.bot_type, m=args.m, n=args.n,
                           algo=args.algo, params=args.params, pooled=args.pooled)
    write_csv(table.to_frame(), args.out)
    print(f"Wrote {len(table)} feature rows ({', '.join(table.feature_names)}) to {args.out}")
    return 0


def cmd_train(args) -> int:
    table = FeatureTable.from_frame(read_table(args.features))
    report = cross_validate(table.X, table.y, folds=args.folds, lambda_grid=parse_float_list(args.lambda_grid),
                            seed=args.seed, test_size=args.test_size, epochs=args.epochs,
                            feature_names=table.feature_names)
    report.model.save(args.out, metadata={'features': args.features, 'seed': args.seed,
                                          'report': report.to_dict()})
    print(f"Best lambda: {report.best_lambda:g}")
    print(f"CV accuracy: {report.mean_accuracy:.3f} +/- {report.std_accuracy:.3f} "
          f"(folds: {', '.join(f'{a:.3f}' for a in report.fold_accuracies)})")
    print(f"Train accuracy: {report.train_accuracy:.3f}; test accuracy: {report.test_accuracy:.3f}")
    print(f"Model saved to: {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = LinearModel.load(args.model)
    table = FeatureTable.from_frame(read_table(args.features))
    if model.feature_names and model.feature_names != table.feature_names:
        raise ValidationError(f"model expects features {model.feature_names}, got {table.feature_names}")
    prediction = predict(model, table.X)
    accuracy = float(np.mean(prediction.labels == table.y))
    print(f"Accuracy: {accuracy:.3f} on {len(table)} rows")
    if args.out:
        frame = pd.DataFrame({'doc_id': table.doc_ids, 'label': table.y, 'predicted': prediction.labels,
                              'margin': prediction.margins})
        write_csv(frame, args.out)
    return 0


def cmd_run(args) -> int:
    config = PipelineConfig.load(args.config).apply_overrides(seed=args.seed, jobs=args.jobs, out=args.out)
    report = run_pipeline(config)
    print(f"\n=== Pipeline Complete ===")
    for name, seconds in report['stage_timings'].items():
        print(f"  {name}: {seconds:.2f}s")
    print(f"Outputs: {len(report['outputs'])} files in {config.out}")
    return 0


def cmd_gen_markov(args) -> int:
    corpus = Corpus.load(args.corpus)
    human = [(d.id, corpus.decode(d)) for d in corpus.docs if d.label in (DocLabel.HUMAN, DocLabel.UNLABELED)]
    entries = generate_corpus(human, args.out, order=args.order, seed=args.seed,
                              prompt_every=args.prompt_every, length=args.length)
    print(f"Generated {len(entries)} texts in {args.out} (manifest.json)")
    return 0


def cmd_plot(args) -> int:
    options = {}
    if args.kind == 'boundaries':
        if args.n is None:
            raise ValidationError("boundaries need --n (and optionally --m)")
        emit_plot_data(args.kind, args.out, alphabet=alphabet_size(args.n, args.m or 1))
        return 0
    if not args.input:
        raise ValidationError(f"{args.kind} needs --input")
    if args.kind == 'ec-scatter':
        options = {'m': args.m, 'n': args.n}
    elif args.kind == 'noise-ratio' and args.algo:
        options = {'algo': args.algo}
    emit_plot_data(args.kind, args.out, read_table(args.input), **options)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--log-level', default='INFO', choices=list(LOG_LEVELS))
    common.add_argument('--jobs', type=int, default=1, help='Worker threads')

    parser = argparse.ArgumentParser(prog='spotbot', description='Human vs. bot text detection toolkit')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('ingest', parents=[common], help='Tokenize texts into a corpus cache')
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--input', help='Directory of .txt/.tok/.pdf files')
    source.add_argument('--manifest', help='JSON manifest of {id, path, label}')
    p.add_argument('--label', default='unlabeled', choices=[l.value for l in DocLabel])
    p.add_argument('--min-count', type=int, default=1)
    p.add_argument('--strict', action='store_true', help='Fail on the first unreadable document')
    p.add_argument('--out', required=True, help='Output corpus JSON')
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser('embed', parents=[common], help='Word vectors by SVD or from a vector file')
    p.add_argument('--corpus', required=True)
    p.add_argument('--method', default='svd', choices=list(EMBED_METHODS + tuple(METHOD_ALIASES)),
                   help="'svd' or 'load' ('file' is accepted for 'load')")
    p.add_argument('--dim', type=int, default=8)
    p.add_argument('--weighting', default='log', choices=['log', 'raw'])
    p.add_argument('--vectors', help='Plain-text vector file for --method load')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True, help='Output vector file')
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser('path', parents=[common], help='Build semantic paths')
    p.add_argument('--corpus', required=True)
    p.add_argument('--vectors', required=True)
    p.add_argument('--n', type=int, default=2, help='n-gram length')
    p.add_argument('--stride', type=int, default=1)
    p.add_argument('--out', required=True, help='Output directory')
    p.set_defaults(handler=cmd_path)

    p = sub.add_parser('cluster', parents=[common], help='Cluster every semantic path')
    p.add_argument('--paths', required=True)
    p.add_argument('--algo', required=True, choices=list(ALGORITHMS))
    p.add_argument('--k', type=int, default=4)
    p.add_argument('--k-neighbors', type=int, default=8)
    p.add_argument('--h', type=float, default=0.0, help='Significance threshold (log-density units)')
    p.add_argument('--fuzzifier', type=float, default=2.0)
    p.add_argument('--alpha-levels', type=int, default=DEFAULT_ALPHA_LEVELS)
    p.add_argument('--spread-factor', type=float, default=DEFAULT_SPREAD_FACTOR)
    p.add_argument('--delta-c', type=float, help='Trapezoid core width (overrides --spread-factor)')
    p.add_argument('--l', type=float, help='Left flank width')
    p.add_argument('--r', type=float, help='Right flank width')
    p.add_argument('--corpus', help='Corpus cache, needed by wishart-fuzzy')
    p.add_argument('--vectors', help='Vector file, needed by wishart-fuzzy')
    p.add_argument('--stride', type=int, default=1, help='Stride the paths were built with')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True, help='Output labels JSON')
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser('stats', parents=[common], help='Cluster statistics per text')
    p.add_argument('--labels', required=True)
    p.add_argument('--paths', required=True)
    p.add_argument('--linkage', default='centroid', choices=list(LINKAGES))
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser('wilcoxon', parents=[common], help='Compare a statistic between two tables')
    p.add_argument('--a', required=True)
    p.add_argument('--b', required=True)
    p.add_argument('--column', default='rmsstd')
    p.add_argument('--mode', default='auto', choices=list(WILCOXON_MODES))
    p.add_argument('--paired', action='store_true', help='Signed-rank test on matched rows')
    p.add_argument('--out', help='Optional JSON result')
    p.set_defaults(handler=cmd_wilcoxon)

    p = sub.add_parser('ecplane', parents=[common], help='Entropy-complexity sweep over (m, n)')
    p.add_argument('--paths', required=True)
    p.add_argument('--m', default='1', help="Grid such as '1..3' or '1,2'")
    p.add_argument('--n', default='3..6', help="Grid such as '2..14'")
    p.add_argument('--stride', type=int, default=1)
    p.add_argument('--budget', type=int, default=DEFAULT_PATTERN_BUDGET)
    p.add_argument('--delta-fraction', type=float, default=0.05)
    p.add_argument('--out', required=True)
    p.add_argument('--sweep-out', help='Optional per-cell summary CSV')
    p.set_defaults(handler=cmd_ecplane)

    p = sub.add_parser('boundaries', parents=[common], help='Boundary curves as CSV')
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--m', type=int, default=1)
    p.add_argument('--samples', type=int, default=1000)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_boundaries)

    p = sub.add_parser('features', parents=[common], help='Classifier features from stats or ec tables')
    p.add_argument('--kind', required=True, choices=sorted(FEATURE_SETS))
    p.add_argument('--input', required=True)
    p.add_argument('--bot-type', default='bot', choices=sorted(BOT_TYPES))
    p.add_argument('--m', type=int)
    p.add_argument('--n', type=int)
    p.add_argument('--algo')
    p.add_argument('--params')
    p.add_argument('--pooled', action='store_true',
                   help='ec only: one row per text and (m, n) cell, with m and n as features')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_features)

    p = sub.add_parser('train', parents=[common], help='Cross-validate and fit a linear SVC')
    p.add_argument('--features', required=True)
    p.add_argument('--lambda-grid', default='1e-4,1e-3,1e-2')
    p.add_argument('--folds', type=int, default=5)
    p.add_argument('--epochs', type=int, default=200)
    p.add_argument('--test-size', type=float, default=0.2)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser('eval', parents=[common], help='Evaluate a model on a features table')
    p.add_argument('--model', required=True)
    p.add_argument('--features', required=True)
    p.add_argument('--out', help='Optional predictions CSV')
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('run', help='Run the full pipeline from a JSON config')
    p.add_argument('--config', required=True)
    p.add_argument('--seed', type=int)
    p.add_argument('--jobs', type=int)
    p.add_argument('--out')
    p.add_argument('--log-level', default=None, choices=list(LOG_LEVELS))
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser('gen-markov', parents=[common], help='Order-k Markov bot texts')
    p.add_argument('--corpus', required=True)
    p.add_argument('--order', type=int, default=2)
    p.add_argument('--prompt-every', type=int)
    p.add_argument('--length', type=int)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True, help='Output directory')
    p.set_defaults(handler=cmd_gen_markov)

    p = sub.add_parser('plot', parents=[common], help='Plot-ready CSV for one figure')
    p.add_argument('--kind', required=True, choices=list(PLOT_KINDS))
    p.add_argument('--input', help='ec, stats or sweep table')
    p.add_argument('--m', type=int)
    p.add_argument('--n', type=int)
    p.add_argument('--algo')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    level = args.log_level
    if args.command == 'run' and level is None:
        try:
            level = PipelineConfig.load(args.config).log_level
        except ValidationError:
            level = 'INFO'
    setup_logging(level or 'INFO', tool_name=args.command.replace('-', '_'))

    try:
        return args.handler(args)
    except ValidationError as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception(f"{args.command} failed")
        print(f"Error: {str(e)}", file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
