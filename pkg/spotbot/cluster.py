"""
Clustering of semantic-path points.

K-Means (Lloyd iterations from k-means++ seeds), fuzzy C-Means and the
Wishart density-based algorithm, which needs only pairwise distances and so
also runs on fuzzy distance matrices. Label 0 is reserved for noise;
clusters are numbered from 1.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform
from scipy.special import gammaln, softmax
from sklearn.cluster import kmeans_plusplus
from sklearn.neighbors import NearestNeighbors

from .embed import SemanticPath
from .errors import ValidationError
from .fuzzy import DEFAULT_ALPHA_LEVELS, FuzzyDataset, fuzzy_distance_matrix

logger = logging.getLogger(__name__)

ALGORITHMS = ('kmeans', 'cmeans', 'wishart', 'wishart-fuzzy')
NOISE = 0
WISHART_K_NEIGHBORS_GRID = (4, 8, 16)
WISHART_H_GRID = (0.0, 0.1, 0.2)


@dataclass
class Clustering:
    """Cluster assignment of N points; label 0 marks noise."""
    labels: np.ndarray
    k_found: int
    centroids: Optional[np.ndarray] = None
    memberships: Optional[np.ndarray] = None
    densities: Optional[np.ndarray] = None
    objective_history: List[float] = field(default_factory=list)
    algorithm: str = ''
    n_iter: int = 0

    @property
    def noise_ratio(self) -> float:
        if self.labels.size == 0:
            return 0.0
        return float(np.count_nonzero(self.labels == NOISE)) / self.labels.size

    def to_dict(self) -> Dict:
        return {
            'algorithm': self.algorithm,
            'labels': self.labels.tolist(),
            'k_found': self.k_found,
            'noise_ratio': self.noise_ratio,
            'n_iter': self.n_iter
        }


def _as_points(points) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError(f"points must be a non-empty N x d matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("points contain non-finite values")
    return X


def _check_k(k: int, n_points: int):
    if not 1 <= k <= n_points:
        raise ValidationError(f"k must lie in [1, {n_points}], got {k}")


def _update_centroids(X: np.ndarray, assign: np.ndarray, mindist: np.ndarray, k: int) -> np.ndarray:
    """Member means; an empty cluster takes the point farthest from its own centroid."""
    sizes = np.bincount(assign, minlength=k)
    for j in np.flatnonzero(sizes == 0):
        # only steal from clusters that keep at least one member
        candidates = np.where(sizes[assign] > 1, mindist, -np.inf)
        far = int(np.argmax(candidates))
        sizes[assign[far]] -= 1
        assign[far] = j
        sizes[j] = 1
        mindist[far] = 0.0

    centroids = np.zeros((k, X.shape[1]))
    np.add.at(centroids, assign, X)
    return centroids / sizes[:, None]


def kmeans(points, k: int, seed: int = 0, tol: float = 1e-6, max_iter: int = 300) -> Clustering:
    """
    Lloyd's K-Means from k-means++ seeding.

    Iterates until the largest centroid shift drops below ``tol`` or
    ``max_iter`` is reached. Inertia is recorded after every assignment
    step and never increases.

    Returns:
        Clustering with labels 1..k and centroids equal to member means
    """
    X = _as_points(points)
    _check_k(k, X.shape[0])
    centroids, _ = kmeans_plusplus(X, n_clusters=k, random_state=seed)

    history = []
    assign = np.zeros(X.shape[0], dtype=np.int64)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        sq = cdist(X, centroids, 'sqeuclidean')
        assign = sq.argmin(axis=1)
        mindist = sq[np.arange(X.shape[0]), assign]
        history.append(float(mindist.sum()))

        updated = _update_centroids(X, assign, mindist, k)
        shift = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        if shift < tol:
            break

    logger.debug(f"kmeans k={k}: {n_iter} iterations, inertia {history[-1]:.6g}")
    return Clustering(labels=assign + 1, k_found=int(np.unique(assign).size), centroids=centroids,
                      objective_history=history, algorithm='kmeans', n_iter=n_iter)


def fuzzy_memberships(sq_dist: np.ndarray, fuzzifier: float) -> np.ndarray:
    """
    C-Means memberships u_ij proportional to (1 / d_ij^2)^(1 / (f - 1)).

    A point that coincides with one or more centroids belongs to them only,
    shared equally. Computed as a softmax of log-distances so fuzzifiers
    close to 1 do not overflow.
    """
    sq_dist = np.asarray(sq_dist, dtype=np.float64)
    zero = sq_dist <= 0.0
    with np.errstate(divide='ignore'):
        logits = -np.log(sq_dist) / (fuzzifier - 1.0)
    coincident = zero.any(axis=1)
    logits[coincident] = 0.0
    memberships = softmax(logits, axis=1)
    if coincident.any():
        hits = zero[coincident].astype(np.float64)
        memberships[coincident] = hits / hits.sum(axis=1, keepdims=True)
    return memberships


def cmeans(points, k: int, fuzzifier: float = 2.0, seed: int = 0, tol: float = 1e-6,
           max_iter: int = 300) -> Clustering:
    """
    Fuzzy C-Means by alternating centroid and membership updates.

    Memberships start from seeded Dirichlet rows. Stops when no membership
    moves by more than ``tol``. Hard labels are argmax memberships.
    """
    X = _as_points(points)
    _check_k(k, X.shape[0])
    if fuzzifier <= 1.0:
        raise ValidationError(f"fuzzifier must be > 1, got {fuzzifier}")

    rng = np.random.default_rng(seed)
    U = rng.dirichlet(np.ones(k), size=X.shape[0])
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        W = U ** fuzzifier
        centroids = (W.T @ X) / W.sum(axis=0)[:, None]
        sq = cdist(X, centroids, 'sqeuclidean')
        updated = fuzzy_memberships(sq, fuzzifier)
        history.append(float(np.sum(updated ** fuzzifier * sq)))
        delta = float(np.max(np.abs(updated - U)))
        U = updated
        if delta < tol:
            break

    W = U ** fuzzifier
    centroids = (W.T @ X) / W.sum(axis=0)[:, None]
    labels = U.argmax(axis=1) + 1
    return Clustering(labels=labels, k_found=int(np.unique(labels).size), centroids=centroids,
                      memberships=U, objective_history=history, algorithm='cmeans', n_iter=n_iter)


def log_ball_volume(dim: int, radius: np.ndarray) -> np.ndarray:
    """log of the volume of a dim-ball, via log-Gamma."""
    return (dim / 2.0) * np.log(np.pi) - gammaln(dim / 2.0 + 1.0) + dim * np.log(radius)


def knn_log_density(kth_distance: np.ndarray, k_neighbors: int, dim: int) -> np.ndarray:
    """log p(i) = log k - log N - log V_dim(d_k(i))."""
    radius = np.maximum(kth_distance, np.finfo(np.float64).tiny)
    n_points = kth_distance.shape[0]
    return np.log(k_neighbors) - np.log(n_points) - log_ball_volume(dim, radius)


@dataclass
class _WishartCluster:
    members: List[int]
    max_density: float
    completed: bool = False


def _wishart_sweep(order: np.ndarray, connected: Callable[[int], np.ndarray],
                   log_density: np.ndarray, h: float) -> np.ndarray:
    n_points = order.shape[0]
    labels = np.full(n_points, -1, dtype=np.int64)
    clusters: Dict[int, _WishartCluster] = {}
    next_id = 1

    for i in order:
        neighbours = connected(i)
        neighbours = neighbours[labels[neighbours] >= 0]

        if neighbours.size == 0:
            clusters[next_id] = _WishartCluster(members=[i], max_density=log_density[i])
            labels[i] = next_id
            next_id += 1
            continue

        # noise neighbours count as a completed cluster
        touched = set(int(c) for c in np.unique(labels[neighbours]) if c != NOISE)
        open_ids = sorted(c for c in touched if not clusters[c].completed)

        if not open_ids:
            labels[i] = NOISE
        elif len(open_ids) == 1:
            target = clusters[open_ids[0]]
            target.members.append(i)
            target.max_density = max(target.max_density, log_density[i])
            labels[i] = open_ids[0]
        else:
            significant = [c for c in open_ids if clusters[c].max_density - log_density[i] >= h]
            if len(significant) >= 2:
                for c in significant:
                    clusters[c].completed = True
                labels[i] = NOISE
            else:
                oldest = open_ids[0]
                target = clusters[oldest]
                for c in open_ids[1:]:
                    absorbed = clusters.pop(c)
                    labels[absorbed.members] = oldest
                    target.members.extend(absorbed.members)
                    target.max_density = max(target.max_density, absorbed.max_density)
                target.members.append(i)
                target.max_density = max(target.max_density, log_density[i])
                labels[i] = oldest

    relabel = {old: new for new, old in enumerate(sorted(clusters), start=1)}
    return np.array([relabel.get(int(c), NOISE) for c in labels], dtype=np.int64)


def _wishart_result(labels: np.ndarray, log_density: np.ndarray) -> Clustering:
    return Clustering(labels=labels, k_found=int(np.unique(labels[labels != NOISE]).size),
                      densities=log_density, algorithm='wishart')


def wishart(dist, k_neighbors: int, h: float = 0.0, dim: int = 1) -> Clustering:
    """
    Wishart clustering on a precomputed distance matrix.

    Points are processed by ascending k-NN distance d_k (ties by index).
    A point's connections are the processed points within d_k of it. No
    connections opens a cluster; one open cluster is joined; only completed
    clusters (or noise) makes the point noise. Several open clusters: if two
    or more are significant (their highest log-density minus the point's
    log-density is at least ``h``), they are completed and the point is
    noise, otherwise they merge into the oldest and take the point.

    Args:
        dist: Symmetric N x N distances with zero diagonal
        k_neighbors: Neighbour rank for the density estimate, 1 <= k < N
        h: Significance threshold in log-density units
        dim: Ambient dimension used for the ball volume

    Returns:
        Clustering with per-point log-densities
    """
    D = np.asarray(dist, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValidationError(f"distance matrix must be square, got shape {D.shape}")
    n_points = D.shape[0]
    if not np.allclose(D, D.T, rtol=0.0, atol=1e-12):
        raise ValidationError("distance matrix is not symmetric")
    if np.any(np.diag(D) != 0):
        raise ValidationError("distance matrix must have a zero diagonal")
    if not 1 <= k_neighbors < n_points:
        raise ValidationError(f"k_neighbors must lie in [1, {n_points - 1}], got {k_neighbors}")
    if h < 0:
        raise ValidationError(f"significance threshold must be >= 0, got {h}")

    kth = np.partition(D, k_neighbors, axis=1)[:, k_neighbors]
    log_density = knn_log_density(kth, k_neighbors, dim)
    order = np.lexsort((np.arange(n_points), kth))
    labels = _wishart_sweep(order, lambda i: np.flatnonzero(D[i] <= kth[i]), log_density, h)
    return _wishart_result(labels, log_density)


def wishart_points(points, k_neighbors: int, h: float = 0.0) -> Clustering:
    """
    Wishart clustering of crisp points through a k-NN index.

    Connections are the k nearest neighbours, which equals the d_k ball up to
    distance ties; used for pooled samples too large for a full matrix.
    """
    X = _as_points(points)
    n_points = X.shape[0]
    if not 1 <= k_neighbors < n_points:
        raise ValidationError(f"k_neighbors must lie in [1, {n_points - 1}], got {k_neighbors}")
    if h < 0:
        raise ValidationError(f"significance threshold must be >= 0, got {h}")

    index = NearestNeighbors(n_neighbors=k_neighbors + 1).fit(X)
    distances, neighbours = index.kneighbors(X)
    kth = distances[:, -1]
    log_density = knn_log_density(kth, k_neighbors, X.shape[1])
    order = np.lexsort((np.arange(n_points), kth))
    labels = _wishart_sweep(order, lambda i: neighbours[i][neighbours[i] != i], log_density, h)
    return _wishart_result(labels, log_density)


def wishart_fuzzy(dataset: FuzzyDataset, k_neighbors: int, h: float = 0.0,
                  levels: int = DEFAULT_ALPHA_LEVELS, jobs: int = 1) -> Clustering:
    """Wishart on the fuzzy distance matrix; density dimension = fuzzy vector length."""
    D = fuzzy_distance_matrix(dataset, levels=levels, jobs=jobs)
    result = wishart(D, k_neighbors, h, dim=dataset.dim)
    result.algorithm = 'wishart-fuzzy'
    return result


def euclidean_matrix(points) -> np.ndarray:
    return squareform(pdist(_as_points(points)))


def pool_ngrams(paths: Sequence[SemanticPath], sample: int = 100_000, seed: int = 0) -> np.ndarray:
    """
    Unique n-gram embeddings pooled over a corpus, uniformly subsampled.

    Returns:
        At most ``sample`` distinct rows, in pooled (sorted) order
    """
    if sample < 1:
        raise ValidationError(f"sample must be >= 1, got {sample}")
    stacked = [p.points for p in paths if len(p)]
    if not stacked:
        raise ValidationError("no n-grams to pool")
    unique = np.unique(np.vstack(stacked), axis=0)
    if unique.shape[0] <= sample:
        return unique
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(unique.shape[0], size=sample, replace=False))
    return unique[chosen]


@dataclass
class ClusterParams:
    """Algorithm choice and its parameters."""
    algo: str = 'wishart'
    k: int = 4
    k_neighbors: int = 8
    h: float = 0.0
    fuzzifier: float = 2.0
    alpha_levels: int = DEFAULT_ALPHA_LEVELS
    seed: int = 0
    tol: float = 1e-6
    max_iter: int = 300

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ValidationError(f"unknown clustering algorithm '{self.algo}', expected one of {ALGORITHMS}")

    def min_points(self) -> int:
        if self.algo in ('kmeans', 'cmeans'):
            return self.k
        return self.k_neighbors + 1

    def describe(self) -> str:
        if self.algo == 'kmeans':
            return f"k={self.k}"
        if self.algo == 'cmeans':
            return f"k={self.k};f={self.fuzzifier:g}"
        text = f"k_neighbors={self.k_neighbors};h={self.h:g}"
        return text + (f";levels={self.alpha_levels}" if self.algo == 'wishart-fuzzy' else '')

    def to_dict(self) -> Dict:
        return asdict(self)


def cluster_points(points: np.ndarray, params: ClusterParams,
                   fuzzy_data: Optional[FuzzyDataset] = None) -> Clustering:
    """Run the configured algorithm on one point set."""
    if params.algo == 'kmeans':
        return kmeans(points, params.k, seed=params.seed, tol=params.tol, max_iter=params.max_iter)
    if params.algo == 'cmeans':
        return cmeans(points, params.k, fuzzifier=params.fuzzifier, seed=params.seed,
                      tol=params.tol, max_iter=params.max_iter)
    if params.algo == 'wishart':
        X = _as_points(points)
        return wishart(euclidean_matrix(X), params.k_neighbors, params.h, dim=X.shape[1])
    if fuzzy_data is None:
        raise ValidationError("wishart-fuzzy needs fuzzified paths")
    return wishart_fuzzy(fuzzy_data, params.k_neighbors, params.h, levels=params.alpha_levels)


class ClusterRunner:
    """Cluster every semantic path of a corpus with one parameter set."""

    def __init__(self, params: ClusterParams, jobs: int = 1):
        self.params = params
        self.jobs = max(1, jobs)
        self.stats = {
            'texts_total': 0,
            'texts_clustered': 0,
            'skipped_texts': [],
            'failed_texts': []
        }

    def _run_one(self, item):
        path, fuzzy_data = item
        if len(path) < self.params.min_points():
            self.stats['skipped_texts'].append(path.doc_id)
            return None
        try:
            return cluster_points(path.points, self.params, fuzzy_data)
        except ValidationError as e:
            logger.warning(f"Clustering failed for {path.doc_id}: {str(e)}")
            self.stats['failed_texts'].append({'id': path.doc_id, 'error': str(e)})
            return None

    def run(self, paths: Sequence[SemanticPath],
            fuzzy_sets: Optional[Sequence[FuzzyDataset]] = None) -> Dict[str, Clustering]:
        """
        Cluster each path; texts with too few points are skipped.

        Returns:
            doc_id -> Clustering, in path order
        """
        if self.params.algo == 'wishart-fuzzy' and fuzzy_sets is None:
            raise ValidationError("wishart-fuzzy needs fuzzified paths")
        fuzzy_sets = list(fuzzy_sets) if fuzzy_sets is not None else [None] * len(paths)
        self.stats['texts_total'] = len(paths)

        logger.info(f"Clustering {len(paths)} texts with {self.params.algo} ({self.params.describe()})")
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            results = list(pool.map(self._run_one, zip(paths, fuzzy_sets)))

        clusterings = {p.doc_id: c for p, c in zip(paths, results) if c is not None}
        self.stats['texts_clustered'] = len(clusterings)
        if self.stats['skipped_texts']:
            logger.info(f"Skipped {len(self.stats['skipped_texts'])} texts shorter than {self.params.min_points()} n-grams")
        return clusterings


def cluster_paths(paths: Sequence[SemanticPath], params: ClusterParams,
                  fuzzy_sets: Optional[Sequence[FuzzyDataset]] = None, jobs: int = 1) -> Dict[str, Clustering]:
    """Per-text clustering of a whole corpus; see :class:`ClusterRunner`."""
    return ClusterRunner(params, jobs).run(paths, fuzzy_sets)
