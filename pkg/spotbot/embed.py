"""
Word embeddings and semantic paths.

Word vectors come either from a truncated SVD of the term x document count
matrix (rows of U_d * S_d) or from an external plain-text vector file.
A semantic path is the sequence of n-gram embeddings of one text, each
n-gram embedded as the concatenation of its word vectors.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import sparse
from sklearn.utils.extmath import randomized_svd

from .corpus import Corpus, DocLabel, TokenDoc, _check_window, ngram_count
from .errors import EmbeddingFormatError, ValidationError

logger = logging.getLogger(__name__)

PATHS_DATA = 'paths.bin'
PATHS_SIDECAR = 'paths.json'
EMBED_METHODS = ('svd', 'load')
METHOD_ALIASES = {'file': 'load'}


class EmbeddingSource(str, Enum):
    SVD = "svd"
    EXTERNAL = "external"


@dataclass
class EmbeddingTable:
    """Dense V x d word vectors aligned with a vocabulary."""
    vectors: np.ndarray
    terms: List[str]
    source: EmbeddingSource
    singular_values: Optional[np.ndarray] = None
    rank_deficient: bool = False
    coverage: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[1] < 1:
            raise ValidationError(f"embedding matrix must be V x d with d >= 1, got shape {self.vectors.shape}")
        if self.vectors.shape[0] != len(self.terms):
            raise ValidationError(f"{self.vectors.shape[0]} vectors for {len(self.terms)} terms")
        if not np.all(np.isfinite(self.vectors)):
            raise ValidationError("embedding matrix has non-finite entries")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def embedding_method(name: str) -> str:
    """Canonical embedding method name ('file' is an alias of 'load')."""
    method = METHOD_ALIASES.get(name, name)
    if method not in EMBED_METHODS:
        raise ValidationError(f"unknown embedding method '{name}', expected one of {list(EMBED_METHODS)}")
    return method


def weight_counts(counts: sparse.spmatrix, weighting: str = 'log') -> sparse.csr_matrix:
    """Apply raw or log(1 + count) weighting to a sparse count matrix."""
    matrix = sparse.csr_matrix(counts, dtype=np.float64, copy=True)
    if weighting == 'log':
        matrix.data = np.log1p(matrix.data)
    elif weighting != 'raw':
        raise ValidationError(f"unknown weighting '{weighting}', expected 'raw' or 'log'")
    return matrix


def svd_embed(counts: sparse.spmatrix, rank: int = 8, weighting: str = 'log', seed: int = 0,
              terms: Optional[List[str]] = None) -> EmbeddingTable:
    """
    Embed terms with a rank-d truncated SVD of the weighted count matrix.

    Randomized subspace iteration (10 oversamples, 4 power iterations) seeded
    by ``seed``. The largest-magnitude entry of every left singular vector
    is made non-negative.

    Args:
        counts: Sparse V x D term x document counts
        rank: Requested embedding dimension d
        weighting: 'log' for log(1 + count) or 'raw'
        seed: Random state of the range finder
        terms: Vocabulary strings, defaults to the row indices

    Returns:
        EmbeddingTable with vectors U_d * S_d; ``rank_deficient`` is set when
        fewer than ``rank`` columns could be returned
    """
    n_terms, n_docs = counts.shape
    if n_terms == 0 or n_docs == 0 or counts.nnz == 0:
        raise ValidationError("count matrix is empty")
    if rank < 1:
        raise ValidationError(f"rank must be >= 1, got {rank}")

    matrix = weight_counts(counts, weighting)
    k = rank
    rank_deficient = False
    if k > min(n_terms, n_docs):
        k = min(n_terms, n_docs)
        rank_deficient = True

    U, s, _ = randomized_svd(matrix, n_components=k, n_oversamples=10, n_iter=4,
                             power_iteration_normalizer='QR', flip_sign=False,
                             random_state=seed)

    tol = s.max() * max(n_terms, n_docs) * np.finfo(np.float64).eps if s.size else 0.0
    numeric_rank = int(np.sum(s > tol))
    if numeric_rank < k:
        U, s = U[:, :numeric_rank], s[:numeric_rank]
        rank_deficient = True
    if rank_deficient:
        logger.warning(f"Requested rank {rank} exceeds matrix rank; returning {s.size} columns")

    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivots, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs

    terms = list(terms) if terms is not None else [str(i) for i in range(n_terms)]
    return EmbeddingTable(vectors=U * s, terms=terms, source=EmbeddingSource.SVD,
                          singular_values=s, rank_deficient=rank_deficient)


def load_embeddings(path: Union[str, Path], terms: Sequence[str],
                    expected_dim: Optional[int] = None) -> EmbeddingTable:
    """
    Load vectors in the plain-text format: header "V d", then "token v1 ... vd".

    Terms absent from the file get the zero vector and are reported in
    ``coverage``.

    Raises:
        EmbeddingFormatError: malformed header or line, with its line number
        ValidationError: header dimension differs from ``expected_dim``
    """
    path = Path(path)
    found: Dict[str, np.ndarray] = {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            header = f.readline().split()
            if len(header) != 2 or not all(part.isdigit() for part in header):
                raise EmbeddingFormatError("header must be 'V d'", 1)
            declared_count, dim = int(header[0]), int(header[1])
            if dim < 1:
                raise EmbeddingFormatError("dimension must be >= 1", 1)
            if expected_dim is not None and dim != expected_dim:
                raise ValidationError(f"vector file has d={dim}, expected d={expected_dim}")

            for line_number, line in enumerate(f, start=2):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != dim + 1:
                    raise EmbeddingFormatError(f"expected {dim} values, found {len(parts) - 1}", line_number)
                try:
                    vector = np.array([float(v) for v in parts[1:]])
                except ValueError as e:
                    raise EmbeddingFormatError(f"non-numeric value: {e}", line_number) from e
                if not np.all(np.isfinite(vector)):
                    raise EmbeddingFormatError("non-finite value", line_number)
                found.setdefault(parts[0], vector)
    except UnicodeDecodeError as e:
        raise EmbeddingFormatError(f"invalid UTF-8: {e}", 0) from e

    if len(found) != declared_count:
        logger.warning(f"Header declares {declared_count} vectors, file has {len(found)}")

    vectors = np.zeros((len(terms), dim))
    missing = []
    for i, term in enumerate(terms):
        if term in found:
            vectors[i] = found[term]
        else:
            missing.append(term)

    covered = len(terms) - len(missing)
    coverage = {
        'covered': covered,
        'missing': len(missing),
        'coverage': covered / len(terms) if terms else 0.0,
        'missing_sample': missing[:20]
    }
    logger.info(f"Loaded {dim}-d vectors from {path}: coverage {coverage['coverage']:.1%}")
    return EmbeddingTable(vectors=vectors, terms=list(terms), source=EmbeddingSource.EXTERNAL,
                          coverage=coverage)


def save_embeddings(table: EmbeddingTable, path: Union[str, Path]):
    """Write a table in the plain-text vector format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"{len(table.terms)} {table.dim}\n")
        for term, vector in zip(table.terms, table.vectors):
            f.write(term + ' ' + ' '.join(f"{v:.17g}" for v in vector) + '\n')


@dataclass
class SemanticPath:
    """Row t is the concatenation of the word vectors of n-gram t."""
    doc_id: str
    n: int
    points: np.ndarray
    label: DocLabel = DocLabel.UNLABELED

    def __len__(self) -> int:
        return self.points.shape[0]


def build_path(doc: TokenDoc, table: EmbeddingTable, n: int, stride: int = 1) -> SemanticPath:
    """
    Build the semantic path of one document.

    Returns:
        SemanticPath with ngram_count(len(doc), n, stride) rows and n * d columns
    """
    _check_window(n, stride)
    count = ngram_count(len(doc.tokens), n, stride)
    if count == 0:
        return SemanticPath(doc_id=doc.id, n=n, points=np.zeros((0, n * table.dim)), label=doc.label)

    tokens = np.asarray(doc.tokens, dtype=np.int64)
    if tokens.max() >= table.vectors.shape[0]:
        raise ValidationError(f"document '{doc.id}' uses tokens outside the embedding table")
    windows = np.arange(count)[:, None] * stride + np.arange(n)[None, :]
    points = table.vectors[tokens[windows]].reshape(count, n * table.dim)
    return SemanticPath(doc_id=doc.id, n=n, points=points, label=doc.label)


def build_paths(corpus: Corpus, table: EmbeddingTable, n: int, stride: int = 1,
                jobs: int = 1) -> List[SemanticPath]:
    """Semantic paths of every corpus document, in corpus order."""
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(lambda doc: build_path(doc, table, n, stride), corpus.docs))


def save_paths(paths: Sequence[SemanticPath], out_dir: Union[str, Path], metadata: Optional[Dict] = None):
    """Write paths as one row-major little-endian float64 blob plus a JSON sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not paths:
        raise ValidationError("no paths to save")
    widths = {p.points.shape[1] for p in paths}
    if len(widths) != 1:
        raise ValidationError(f"paths have different widths: {sorted(widths)}")

    offset = 0
    docs = []
    for p in paths:
        docs.append({'id': p.doc_id, 'label': p.label.value, 'rows': len(p), 'offset': offset})
        offset += len(p)

    blob = np.concatenate([p.points for p in paths], axis=0).astype('<f8')
    blob.tofile(out_dir / PATHS_DATA)
    sidecar = {
        'metadata': metadata or {},
        'n': paths[0].n,
        'cols': widths.pop(),
        'dtype': 'float64',
        'byte_order': 'little',
        'layout': 'row-major',
        'docs': docs
    }
    with open(out_dir / PATHS_SIDECAR, 'w', encoding='utf-8') as f:
        json.dump(sidecar, f, indent=2, ensure_ascii=False)
    logger.info(f"Saved {len(paths)} paths ({offset} rows) to {out_dir}")


def load_paths(path_dir: Union[str, Path]) -> List[SemanticPath]:
    """Read paths written by :func:`save_paths`."""
    path_dir = Path(path_dir)
    try:
        with open(path_dir / PATHS_SIDECAR, 'r', encoding='utf-8') as f:
            sidecar = json.load(f)
        blob = np.fromfile(path_dir / PATHS_DATA, dtype='<f8')
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read paths from {path_dir}: {e}") from e

    if not sidecar.get('docs'):
        raise ValidationError(f"{path_dir / PATHS_SIDECAR} lists no paths")
    cols = sidecar['cols']
    total_rows = sum(d['rows'] for d in sidecar['docs'])
    if blob.size != total_rows * cols:
        raise ValidationError(f"{path_dir / PATHS_DATA} holds {blob.size} values, sidecar expects {total_rows * cols}")
    matrix = blob.reshape(total_rows, cols)
    return [SemanticPath(doc_id=d['id'], n=sidecar['n'],
                         points=matrix[d['offset']:d['offset'] + d['rows']].copy(),
                         label=DocLabel(d['label']))
            for d in sidecar['docs']]
