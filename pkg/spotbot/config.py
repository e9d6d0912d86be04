"""
Pipeline configuration: a JSON file mapped onto nested dataclasses.

Relative paths in a config file are resolved against the file's directory.
``validate()`` runs before any stage and raises ValidationError naming the
offending key.
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

from .classify import BOT_TYPES, FEATURE_SETS
from .cluster import ALGORITHMS, WISHART_H_GRID, WISHART_K_NEIGHBORS_GRID
from .corpus import DocLabel
from .embed import EMBED_METHODS, METHOD_ALIASES, embedding_method
from .errors import ValidationError
from .metrics import LINKAGES

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')


@dataclass
class InputSpec:
    """A manifest file, or a directory whose texts all get ``label``."""
    path: str
    label: Optional[str] = None


@dataclass
class CorpusConfig:
    inputs: List[InputSpec] = field(default_factory=list)
    min_count: int = 1
    strict: bool = False


@dataclass
class MarkovConfig:
    enabled: bool = False
    order: int = 2
    prompt_every: Optional[int] = None
    length: Optional[int] = None


@dataclass
class EmbeddingConfig:
    method: str = 'svd'
    dim: int = 8
    weighting: str = 'log'
    vectors: Optional[str] = None


@dataclass
class PathConfig:
    n: int = 2
    stride: int = 1


@dataclass
class ClusteringConfig:
    enabled: bool = True
    algorithms: List[str] = field(default_factory=lambda: ['kmeans', 'wishart'])
    k: int = 4
    k_neighbors: List[int] = field(default_factory=lambda: list(WISHART_K_NEIGHBORS_GRID))
    h: List[float] = field(default_factory=lambda: list(WISHART_H_GRID))
    fuzzifier: float = 2.0
    alpha_levels: int = 11
    spread_factor: float = 0.1
    linkage: str = 'centroid'


@dataclass
class ECConfig:
    enabled: bool = True
    m_grid: List[int] = field(default_factory=lambda: [1, 2])
    n_grid: List[int] = field(default_factory=lambda: [3, 4, 5, 6])
    stride: int = 1
    budget: int = 10 ** 7
    delta_fraction: float = 0.05


@dataclass
class ClassifierConfig:
    enabled: bool = True
    features: List[str] = field(default_factory=lambda: ['cluster', 'ec'])
    pooled_ec: bool = False
    bot_types: List[str] = field(default_factory=lambda: ['bot'])
    lambda_grid: List[float] = field(default_factory=lambda: [1e-4, 1e-3, 1e-2])
    folds: int = 5
    epochs: int = 200
    test_size: float = 0.2


@dataclass
class CorpusLevelConfig:
    enabled: bool = False
    sample: int = 100_000
    algorithm: str = 'wishart'


@dataclass
class PipelineConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    markov: MarkovConfig = field(default_factory=MarkovConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    paths: PathConfig = field(default_factory=PathConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    ecplane: ECConfig = field(default_factory=ECConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    corpus_level: CorpusLevelConfig = field(default_factory=CorpusLevelConfig)
    seed: int = 0
    jobs: int = 1
    out: str = 'runs/default'
    log_level: str = 'INFO'

    @classmethod
    def from_dict(cls, data: Dict, base_dir: Optional[Path] = None) -> 'PipelineConfig':
        config = _build(cls, data, 'config')
        if base_dir is not None:
            config.resolve_paths(Path(base_dir))
        return config

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'PipelineConfig':
        path = Path(path)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot read config {path}: {e}") from e
        return cls.from_dict(data, base_dir=path.parent)

    def resolve_paths(self, base_dir: Path):
        for spec in self.corpus.inputs:
            if not Path(spec.path).is_absolute():
                spec.path = str(base_dir / spec.path)
        if self.embedding.vectors and not Path(self.embedding.vectors).is_absolute():
            self.embedding.vectors = str(base_dir / self.embedding.vectors)

    def apply_overrides(self, seed: Optional[int] = None, jobs: Optional[int] = None,
                        out: Optional[str] = None) -> 'PipelineConfig':
        if seed is not None:
            self.seed = seed
        if jobs is not None:
            self.jobs = jobs
        if out is not None:
            self.out = out
        return self

    def to_dict(self) -> Dict:
        return asdict(self)

    def validate(self) -> 'PipelineConfig':
        """Check files, enum names and numeric ranges; raises ValidationError."""
        if not self.corpus.inputs:
            raise ValidationError("corpus.inputs: at least one manifest or directory is required")
        for i, spec in enumerate(self.corpus.inputs):
            if not Path(spec.path).exists():
                raise ValidationError(f"corpus.inputs[{i}].path: not found: {spec.path}")
            if spec.label is not None:
                _choice(f"corpus.inputs[{i}].label", spec.label, [l.value for l in DocLabel])
        _at_least('corpus.min_count', self.corpus.min_count, 1)

        if self.markov.enabled:
            _at_least('markov.order', self.markov.order, 1)
            if self.markov.prompt_every is not None:
                _at_least('markov.prompt_every', self.markov.prompt_every, 1)
            if self.markov.length is not None:
                _at_least('markov.length', self.markov.length, 1)

        _choice('embedding.method', self.embedding.method, EMBED_METHODS + tuple(METHOD_ALIASES))
        self.embedding.method = embedding_method(self.embedding.method)
        _choice('embedding.weighting', self.embedding.weighting, ['log', 'raw'])
        _at_least('embedding.dim', self.embedding.dim, 1)
        if self.embedding.method == 'load':
            if not self.embedding.vectors or not Path(self.embedding.vectors).is_file():
                raise ValidationError(f"embedding.vectors: vector file not found: {self.embedding.vectors}")

        _at_least('paths.n', self.paths.n, 1)
        _at_least('paths.stride', self.paths.stride, 1)

        c = self.clustering
        for algo in c.algorithms:
            _choice('clustering.algorithms', algo, ALGORITHMS)
        _choice('clustering.linkage', c.linkage, LINKAGES)
        _at_least('clustering.k', c.k, 1)
        for k in c.k_neighbors:
            _at_least('clustering.k_neighbors', k, 1)
        for h in c.h:
            if not h >= 0:
                raise ValidationError(f"clustering.h: thresholds must be >= 0, got {h}")
        if not c.fuzzifier > 1:
            raise ValidationError(f"clustering.fuzzifier: must be > 1, got {c.fuzzifier}")
        _at_least('clustering.alpha_levels', c.alpha_levels, 2)
        if not c.spread_factor >= 0:
            raise ValidationError(f"clustering.spread_factor: must be >= 0, got {c.spread_factor}")

        e = self.ecplane
        if e.enabled:
            if not e.m_grid or not e.n_grid:
                raise ValidationError("ecplane: m_grid and n_grid must be non-empty")
            for m in e.m_grid:
                _at_least('ecplane.m_grid', m, 1)
                if self.embedding.method == 'svd' and m > self.embedding.dim:
                    raise ValidationError(f"ecplane.m_grid: m={m} exceeds embedding.dim={self.embedding.dim}")
            for n in e.n_grid:
                _at_least('ecplane.n_grid', n, 2)
            _at_least('ecplane.stride', e.stride, 1)
            _at_least('ecplane.budget', e.budget, 1)
            if not 0 <= e.delta_fraction <= 1:
                raise ValidationError(f"ecplane.delta_fraction: must lie in [0, 1], got {e.delta_fraction}")

        k = self.classifier
        for kind in k.features:
            _choice('classifier.features', kind, sorted(FEATURE_SETS))
        for bot_type in k.bot_types:
            _choice('classifier.bot_types', bot_type, sorted(BOT_TYPES))
        if not k.lambda_grid or any(not (lam > 0 and math.isfinite(lam)) for lam in k.lambda_grid):
            raise ValidationError("classifier.lambda_grid: values must be positive and finite")
        _at_least('classifier.folds', k.folds, 2)
        _at_least('classifier.epochs', k.epochs, 1)
        if not 0 < k.test_size < 1:
            raise ValidationError(f"classifier.test_size: must lie in (0, 1), got {k.test_size}")

        if self.corpus_level.enabled:
            _at_least('corpus_level.sample', self.corpus_level.sample, 2)
            _choice('corpus_level.algorithm', self.corpus_level.algorithm, ALGORITHMS[:3])

        _at_least('jobs', self.jobs, 1)
        _choice('log_level', self.log_level.upper(), LOG_LEVELS)
        return self


def _choice(key: str, value, allowed):
    if value not in allowed:
        raise ValidationError(f"{key}: unknown value '{value}', expected one of {list(allowed)}")


def _at_least(key: str, value, minimum):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ValidationError(f"{key}: expected an integer >= {minimum}, got {value!r}")


def _build(cls, data, key: str):
    if not isinstance(data, dict):
        raise ValidationError(f"{key}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ValidationError(f"{key}: unknown key(s) {unknown}")

    values = {}
    for name, value in data.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else known[name].default
        if is_dataclass(default):
            values[name] = _build(type(default), value, f"{key}.{name}")
        elif name == 'inputs':
            if not isinstance(value, list):
                raise ValidationError(f"{key}.inputs: expected a list")
            values[name] = [_build(InputSpec, item, f"{key}.inputs[{i}]") for i, item in enumerate(value)]
        else:
            values[name] = value
    try:
        return cls(**values)
    except TypeError as e:
        raise ValidationError(f"{key}: {e}") from e
