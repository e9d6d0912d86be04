"""
Trapezoidal fuzzification of word and n-gram embeddings.

Every embedding component x_j becomes a trapezoid with core
[x_j - dc/2, x_j + dc/2], flanks l and r, and peak height mu, where mu is
the token's frequency in its text divided by the frequency of the text's
most frequent token. An n-gram is fuzzified by concatenating its word
trapezoids and lowering all heights to the smallest one (fuzzy AND).

Distances between fuzzy vectors average alpha-cut endpoint differences over
K levels spaced on [0, h_min], h_min being the smaller of the two heights.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .corpus import TokenDoc, _check_window, ngram_count, normalized_frequencies
from .embed import EmbeddingTable
from .errors import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_ALPHA_LEVELS = 11
DEFAULT_SPREAD_FACTOR = 0.1

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class TrapFuzzyNumber:
    """Trapezoid with core [m1, m2], flanks l, r and peak height."""
    m1: float
    m2: float
    l: float
    r: float
    height: float = 1.0

    def __post_init__(self):
        if self.m1 > self.m2:
            raise ValidationError(f"core is reversed: m1={self.m1} > m2={self.m2}")
        if self.l < 0 or self.r < 0:
            raise ValidationError("flank widths must be non-negative")
        if not 0 < self.height <= 1:
            raise ValidationError(f"height must lie in (0, 1], got {self.height}")

    @property
    def support(self) -> Tuple[float, float]:
        return self.m1 - self.l, self.m2 + self.r

    def membership(self, x: float) -> float:
        lo, hi = self.support
        if x < lo or x > hi:
            return 0.0
        if x < self.m1:
            return self.height * (x - lo) / self.l
        if x > self.m2:
            return self.height * (hi - x) / self.r
        return self.height

    def alpha_cut(self, alpha: float) -> Tuple[float, float]:
        """Interval where membership >= alpha, for 0 <= alpha <= height."""
        if not 0 <= alpha <= self.height:
            raise ValidationError(f"alpha {alpha} outside [0, {self.height}]")
        t = 1.0 - alpha / self.height
        return self.m1 - self.l * t, self.m2 + self.r * t


@dataclass
class TrapFuzzyVector:
    """Ordered trapezoids, one per embedding component, stored as arrays."""
    m1: np.ndarray
    m2: np.ndarray
    l: np.ndarray
    r: np.ndarray
    height: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in
                  (self.m1, self.m2, self.l, self.r, self.height)]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
            raise ValidationError("fuzzy vector arrays must be 1-D and equally long")
        self.m1, self.m2, self.l, self.r, self.height = arrays
        if np.any(self.height <= 0) or np.any(self.height > 1):
            raise ValidationError("heights must lie in (0, 1]")

    def __len__(self) -> int:
        return self.m1.shape[0]

    @property
    def components(self) -> List[TrapFuzzyNumber]:
        return [TrapFuzzyNumber(*map(float, values)) for values in
                zip(self.m1, self.m2, self.l, self.r, self.height)]


@dataclass
class FuzzyParams:
    """Core width and flank widths, scalars or one value per word dimension."""
    delta_c: ArrayLike = 0.0
    l: ArrayLike = 0.0
    r: ArrayLike = 0.0

    def __post_init__(self):
        for name in ('delta_c', 'l', 'r'):
            value = np.asarray(getattr(self, name), dtype=np.float64)
            if np.any(value < 0) or not np.all(np.isfinite(value)):
                raise ValidationError(f"fuzzy parameter {name} must be finite and >= 0")
            setattr(self, name, value)

    @classmethod
    def from_data(cls, vectors: np.ndarray, factor: float = DEFAULT_SPREAD_FACTOR) -> 'FuzzyParams':
        """dc = l = r = factor * per-dimension standard deviation of ``vectors``."""
        spread = factor * np.asarray(vectors, dtype=np.float64).std(axis=0)
        return cls(delta_c=spread, l=spread.copy(), r=spread.copy())

    def broadcast(self, dim: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        try:
            return tuple(np.broadcast_to(v, (dim,)).astype(np.float64) for v in (self.delta_c, self.l, self.r))
        except ValueError as e:
            raise ValidationError(f"fuzzy parameters do not match dimension {dim}") from e


def fuzzify(x: ArrayLike, mu: float, params: FuzzyParams) -> TrapFuzzyVector:
    """
    Fuzzify one vector with a centered core and height ``mu``.

    Raises:
        ValidationError: mu outside (0, 1]
    """
    if not 0 < mu <= 1:
        raise ValidationError(f"mu must lie in (0, 1], got {mu}")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    delta_c, l, r = params.broadcast(x.shape[0])
    return TrapFuzzyVector(m1=x - delta_c / 2, m2=x + delta_c / 2, l=l, r=r,
                           height=np.full(x.shape[0], float(mu)))


def join_ngram(words: Sequence[TrapFuzzyVector]) -> TrapFuzzyVector:
    """Concatenate word fuzzifications; every height becomes the minimum height."""
    if not words:
        raise ValidationError("cannot join an empty n-gram")
    dims = {len(w) for w in words}
    if len(dims) != 1:
        raise ValidationError(f"word fuzzifications differ in length: {sorted(dims)}")
    lowest = min(float(w.height.min()) for w in words)
    return TrapFuzzyVector(
        m1=np.concatenate([w.m1 for w in words]),
        m2=np.concatenate([w.m2 for w in words]),
        l=np.concatenate([w.l for w in words]),
        r=np.concatenate([w.r for w in words]),
        height=np.full(sum(len(w) for w in words), lowest)
    )


@dataclass
class FuzzyDataset:
    """N fuzzy vectors of equal length stacked into N x k arrays."""
    m1: np.ndarray
    m2: np.ndarray
    l: np.ndarray
    r: np.ndarray
    height: np.ndarray
    doc_id: str = ''

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=np.float64) for a in (self.m1, self.m2, self.l, self.r, self.height)]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 2:
            raise ValidationError("fuzzy dataset arrays must be N x k and equally shaped")
        self.m1, self.m2, self.l, self.r, self.height = arrays

    @classmethod
    def from_vectors(cls, vectors: Sequence[TrapFuzzyVector], doc_id: str = '') -> 'FuzzyDataset':
        if not vectors:
            raise ValidationError("no fuzzy vectors given")
        fields = [np.vstack([getattr(v, name) for v in vectors]) for name in ('m1', 'm2', 'l', 'r', 'height')]
        return cls(*fields, doc_id=doc_id)

    def __len__(self) -> int:
        return self.m1.shape[0]

    @property
    def dim(self) -> int:
        return self.m1.shape[1]

    def __getitem__(self, i: int) -> TrapFuzzyVector:
        return TrapFuzzyVector(self.m1[i], self.m2[i], self.l[i], self.r[i], self.height[i])

    def centers(self) -> np.ndarray:
        """Core midpoints, i.e. the crisp vectors that were fuzzified."""
        return (self.m1 + self.m2) / 2


def _distance_block(a: FuzzyDataset, rows: slice, b: FuzzyDataset, levels: int) -> np.ndarray:
    betas = np.linspace(0.0, 1.0, levels)
    ha, hb = a.height[rows][:, None, :], b.height[None, :, :]
    h_min = np.minimum(ha, hb)
    ta, tb = h_min / ha, h_min / hb

    la, lb = a.l[rows][:, None, :], b.l[None, :, :]
    ra, rb = a.r[rows][:, None, :], b.r[None, :, :]
    # endpoint differences are linear in beta: value at beta=0 plus slope * beta
    left0 = (a.m1[rows][:, None, :] - la) - (b.m1[None, :, :] - lb)
    left_slope = la * ta - lb * tb
    right0 = (a.m2[rows][:, None, :] + ra) - (b.m2[None, :, :] + rb)
    right_slope = rb * tb - ra * ta

    left = np.abs(left0[..., None] + left_slope[..., None] * betas)
    right = np.abs(right0[..., None] + right_slope[..., None] * betas)
    per_component = ((left + right) / 2).mean(axis=-1)
    return np.sqrt(np.sum(per_component ** 2, axis=-1))


def _check_levels(levels: int):
    if levels < 2:
        raise ValidationError(f"need at least 2 alpha levels, got {levels}")


def fuzzy_distance(a: TrapFuzzyVector, b: TrapFuzzyVector, levels: int = DEFAULT_ALPHA_LEVELS) -> float:
    """
    Alpha-cut endpoint distance between two fuzzy vectors.

    Per component: mean over K levels of (|dLeft| + |dRight|) / 2; the
    components are combined Euclidean-style.
    """
    _check_levels(levels)
    if len(a) != len(b):
        raise ValidationError(f"fuzzy vectors differ in length: {len(a)} vs {len(b)}")
    da, db = FuzzyDataset.from_vectors([a]), FuzzyDataset.from_vectors([b])
    return float(_distance_block(da, slice(0, 1), db, levels)[0, 0])


def fuzzy_distance_matrix(dataset: FuzzyDataset, levels: int = DEFAULT_ALPHA_LEVELS,
                          jobs: int = 1, block_elements: int = 4_000_000) -> np.ndarray:
    """
    Symmetric N x N fuzzy distance matrix with zero diagonal.

    Rows are processed in blocks sized to keep temporaries near
    ``block_elements`` values; blocks may run on ``jobs`` threads.
    """
    _check_levels(levels)
    n = len(dataset)
    per_row = max(1, n * max(1, dataset.dim) * levels)
    block = max(1, block_elements // per_row)
    blocks = [slice(start, min(n, start + block)) for start in range(0, n, block)]

    matrix = np.zeros((n, n))
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for rows, values in zip(blocks, pool.map(lambda s: _distance_block(dataset, s, dataset, levels), blocks)):
            matrix[rows] = values

    lower = np.tril_indices(n, -1)
    matrix[lower] = matrix.T[lower]
    np.fill_diagonal(matrix, 0.0)
    return matrix


def token_heights(doc: TokenDoc) -> np.ndarray:
    """mu per token position: the token's normalized frequency over the text's largest one."""
    if not doc.tokens:
        return np.zeros(0)
    freqs = normalized_frequencies(doc)
    top = max(freqs.values())
    return np.array([freqs[token] / top for token in doc.tokens], dtype=np.float64)


def fuzzify_doc(doc: TokenDoc, table: EmbeddingTable, n: int, stride: int,
                params: FuzzyParams) -> FuzzyDataset:
    """Fuzzified n-grams of one text, equal to join_ngram over fuzzify per word."""
    _check_window(n, stride)
    dim = table.dim
    count = ngram_count(len(doc.tokens), n, stride)
    delta_c, l, r = params.broadcast(dim)
    if count == 0:
        empty = np.zeros((0, n * dim))
        return FuzzyDataset(empty, empty.copy(), empty.copy(), empty.copy(), empty.copy(), doc_id=doc.id)

    tokens = np.asarray(doc.tokens, dtype=np.int64)
    windows = tokens[np.arange(count)[:, None] * stride + np.arange(n)[None, :]]
    heights = token_heights(doc)[np.arange(count)[:, None] * stride + np.arange(n)[None, :]]

    centers = table.vectors[windows]
    m1 = (centers - delta_c / 2).reshape(count, n * dim)
    m2 = (centers + delta_c / 2).reshape(count, n * dim)
    height = np.repeat(heights.min(axis=1)[:, None], n * dim, axis=1)
    return FuzzyDataset(m1=m1, m2=m2,
                        l=np.tile(l, (count, n)), r=np.tile(r, (count, n)),
                        height=height, doc_id=doc.id)


def resolve_params(docs: Sequence[TokenDoc], table: EmbeddingTable, spread_factor: float = DEFAULT_SPREAD_FACTOR,
                   delta_c: Optional[ArrayLike] = None, l: Optional[ArrayLike] = None,
                   r: Optional[ArrayLike] = None) -> FuzzyParams:
    """
    Trapezoid widths for a set of texts.

    Widths left as None default to spread_factor * std of the word vectors
    the texts use; given widths replace the default one by one.
    """
    used = np.unique(np.concatenate([np.asarray(d.tokens, dtype=np.int64) for d in docs] or [np.zeros(0, int)]))
    reference = table.vectors[used] if used.size else table.vectors
    defaults = FuzzyParams.from_data(reference, spread_factor)
    given = {name: value for name, value in (('delta_c', delta_c), ('l', l), ('r', r)) if value is not None}
    logger.info(f"Fuzzy widths: {sorted(given) or 'none'} given, rest from {reference.shape[0]} word vectors")
    return replace(defaults, **given)


def fuzzify_paths(docs: Sequence[TokenDoc], table: EmbeddingTable, n: int, stride: int = 1,
                  params: Optional[FuzzyParams] = None,
                  spread_factor: float = DEFAULT_SPREAD_FACTOR) -> List[FuzzyDataset]:
    """
    Fuzzify the semantic paths of several texts.

    Args:
        docs: Tokenized texts
        table: Word vectors
        n: n-gram length
        stride: Window step
        params: Trapezoid widths; default spread_factor * std of the texts' word vectors
        spread_factor: Multiplier of the default widths

    Returns:
        One FuzzyDataset per text, rows aligned with the semantic path rows
    """
    if params is None:
        params = resolve_params(docs, table, spread_factor)
    return [fuzzify_doc(doc, table, n, stride, params) for doc in docs]
