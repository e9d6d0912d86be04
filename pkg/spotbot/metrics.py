"""
Cluster-quality statistics and rank tests.

RMSSTD, RS and inter-cluster distances describe one clustering; the
Wilcoxon rank-sum test compares the per-text distributions of a statistic
between two corpora. Noise points (label 0) never enter a statistic.
"""

import itertools
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.stats import norm, rankdata, tiecorrect, wilcoxon

from .errors import ValidationError

logger = logging.getLogger(__name__)

LINKAGES = ('centroid', 'single', 'complete')
WILCOXON_MODES = ('auto', 'exact', 'normal')
EXACT_LIMIT = 20


@dataclass
class ClusterStats:
    """Quality row for one clustering; NaN marks an undefined statistic."""
    rmsstd: float
    rs: float
    noise_ratio: float
    inter_avg: float
    inter_min: float
    inter_max: float
    k_found: int = 0
    degenerate: bool = False

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class InterclusterDistances:
    avg: float
    min: float
    max: float
    degenerate: bool = False

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.avg, self.min, self.max


@dataclass
class RankSumResult:
    """Mann-Whitney U of sample a with its two-sided p-value."""
    statistic: float
    pvalue: float
    mode: str
    n_a: int
    n_b: int

    @property
    def direction(self) -> str:
        """'a<b' when sample a tends to rank lower than b."""
        centre = self.n_a * self.n_b / 2.0
        if self.statistic < centre:
            return 'a<b'
        if self.statistic > centre:
            return 'a>b'
        return 'a=b'


def _clustered(points, labels) -> Tuple[np.ndarray, np.ndarray, int]:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels)
    if X.shape[0] != labels.shape[0]:
        raise ValidationError(f"{X.shape[0]} points but {labels.shape[0]} labels")
    keep = labels != 0
    if not keep.any():
        raise ValidationError("no non-noise points")
    _, inverse = np.unique(labels[keep], return_inverse=True)
    return X[keep], inverse, int(inverse.max()) + 1


def _within_scatter(X: np.ndarray, inverse: np.ndarray, k: int) -> Tuple[float, np.ndarray]:
    sizes = np.bincount(inverse, minlength=k)
    means = np.zeros((k, X.shape[1]))
    np.add.at(means, inverse, X)
    means /= sizes[:, None]
    return float(np.sum((X - means[inverse]) ** 2)), sizes


def rmsstd(points, labels) -> float:
    """
    Pooled root-mean-square standard deviation of the non-noise clusters.

    sqrt(SSW / (d * sum_c (n_c - 1)))

    Raises:
        ValidationError: no cluster has two or more members
    """
    X, inverse, k = _clustered(points, labels)
    ssw, sizes = _within_scatter(X, inverse, k)
    dof = int(np.sum(sizes - 1))
    if dof == 0:
        raise ValidationError("RMSSTD is undefined when every cluster is a singleton")
    return math.sqrt(ssw / (X.shape[1] * dof))


def rs(points, labels) -> float:
    """
    R-squared (SST - SSW) / SST over the non-noise points.

    Raises:
        ValidationError: all non-noise points coincide (SST = 0)
    """
    X, inverse, k = _clustered(points, labels)
    ssw, _ = _within_scatter(X, inverse, k)
    sst, _ = _within_scatter(X, np.zeros_like(inverse), 1)
    if sst == 0:
        raise ValidationError("RS is undefined for coincident points (SST = 0)")
    return (sst - ssw) / sst


def cluster_centroids(points, labels) -> np.ndarray:
    """Member means of the non-noise clusters, ordered by label."""
    X, inverse, k = _clustered(points, labels)
    sizes = np.bincount(inverse, minlength=k)
    means = np.zeros((k, X.shape[1]))
    np.add.at(means, inverse, X)
    return means / sizes[:, None]


def _summarize(distances: np.ndarray) -> InterclusterDistances:
    return InterclusterDistances(avg=float(distances.mean()), min=float(distances.min()),
                                 max=float(distances.max()))


def intercluster(centroids) -> InterclusterDistances:
    """
    Average, minimum and maximum Euclidean distance over centroid pairs.

    Fewer than two centroids yields zeros with ``degenerate`` set.
    """
    C = np.asarray(centroids, dtype=np.float64)
    if C.ndim == 1:
        C = C[:, None]
    if C.shape[0] < 2:
        return InterclusterDistances(0.0, 0.0, 0.0, degenerate=True)
    return _summarize(pdist(C))


def intercluster_linkage(points, labels, linkage: str = 'centroid') -> InterclusterDistances:
    """
    Inter-cluster distances between non-noise clusters.

    Args:
        linkage: 'centroid' (member means), 'single' (closest member pair)
            or 'complete' (farthest member pair)
    """
    if linkage not in LINKAGES:
        raise ValidationError(f"unknown linkage '{linkage}', expected one of {LINKAGES}")
    if linkage == 'centroid':
        return intercluster(cluster_centroids(points, labels))

    X, inverse, k = _clustered(points, labels)
    if k < 2:
        return InterclusterDistances(0.0, 0.0, 0.0, degenerate=True)
    members = [X[inverse == c] for c in range(k)]
    reduce = np.min if linkage == 'single' else np.max
    pairs = [reduce(cdist(members[a], members[b])) for a, b in itertools.combinations(range(k), 2)]
    return _summarize(np.asarray(pairs))


def noise_ratio(labels) -> float:
    labels = np.asarray(labels)
    return float(np.mean(labels == 0)) if labels.size else 0.0


def cluster_stats(points, labels, linkage: str = 'centroid') -> ClusterStats:
    """Full statistics row for one text; undefined values become NaN with a warning."""
    labels = np.asarray(labels)
    values = {}
    for name, statistic in (('rmsstd', rmsstd), ('rs', rs)):
        try:
            values[name] = statistic(points, labels)
        except ValidationError as e:
            logger.warning(f"{name} undefined: {str(e)}")
            values[name] = float('nan')

    if np.any(labels != 0):
        inter = intercluster_linkage(points, labels, linkage)
    else:
        inter = InterclusterDistances(0.0, 0.0, 0.0, degenerate=True)
    return ClusterStats(rmsstd=values['rmsstd'], rs=values['rs'], noise_ratio=noise_ratio(labels),
                        inter_avg=inter.avg, inter_min=inter.min, inter_max=inter.max,
                        k_found=int(np.unique(labels[labels != 0]).size), degenerate=inter.degenerate)


def _check_sample(values, name: str) -> np.ndarray:
    sample = np.asarray(values, dtype=np.float64).ravel()
    if sample.size == 0:
        raise ValidationError(f"sample {name} is empty")
    if not np.all(np.isfinite(sample)):
        raise ValidationError(f"sample {name} contains non-finite values")
    return sample


def _exact_pvalue(doubled_ranks: np.ndarray, n_a: int, observed: int) -> float:
    # statistics in doubled units keep midranks integral so the null is symmetric exactly
    n_total = doubled_ranks.shape[0]
    combos = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(n_total), n_a)),
                         dtype=np.int64).reshape(-1, n_a)
    centre = n_a * (n_total - n_a)
    u_doubled = doubled_ranks[combos].sum(axis=1) - n_a * (n_a + 1)
    extreme = np.abs(u_doubled - centre) >= abs(observed - centre)
    return float(np.count_nonzero(extreme)) / combos.shape[0]


def wilcoxon_ranksum(sample_a, sample_b, mode: str = 'auto') -> RankSumResult:
    """
    Two-sided Wilcoxon rank-sum (Mann-Whitney) test.

    U is the rank sum of ``sample_a`` minus n_a(n_a + 1)/2, with midranks for
    ties. Exact mode enumerates every assignment of ranks to sample a and is
    allowed for n_a + n_b <= 20; normal mode uses the tie-corrected variance
    and a 0.5 continuity correction. 'auto' picks exact when allowed.

    Raises:
        ValidationError: empty sample, unknown mode, or exact mode on too
            large samples
    """
    if mode not in WILCOXON_MODES:
        raise ValidationError(f"unknown mode '{mode}', expected one of {WILCOXON_MODES}")
    a = _check_sample(sample_a, 'a')
    b = _check_sample(sample_b, 'b')
    n_a, n_b = a.size, b.size
    n_total = n_a + n_b
    if mode == 'auto':
        mode = 'exact' if n_total <= EXACT_LIMIT else 'normal'
    if mode == 'exact' and n_total > EXACT_LIMIT:
        raise ValidationError(f"exact mode supports n_a + n_b <= {EXACT_LIMIT}, got {n_total}")

    ranks = rankdata(np.concatenate([a, b]))
    u_stat = float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2.0)

    if mode == 'exact':
        doubled = np.rint(2 * ranks).astype(np.int64)
        observed = int(doubled[:n_a].sum()) - n_a * (n_a + 1)
        pvalue = _exact_pvalue(doubled, n_a, observed)
    else:
        sigma = math.sqrt(tiecorrect(ranks) * n_a * n_b * (n_total + 1) / 12.0)
        if sigma == 0:
            pvalue = 1.0
        else:
            z = (abs(u_stat - n_a * n_b / 2.0) - 0.5) / sigma
            pvalue = float(min(1.0, 2.0 * norm.sf(z)))

    return RankSumResult(statistic=u_stat, pvalue=pvalue, mode=mode, n_a=n_a, n_b=n_b)


def wilcoxon_signedrank(sample_a: Sequence[float], sample_b: Sequence[float]) -> RankSumResult:
    """Paired Wilcoxon signed-rank test for matched samples."""
    a = _check_sample(sample_a, 'a')
    b = _check_sample(sample_b, 'b')
    if a.size != b.size:
        raise ValidationError(f"paired samples differ in length: {a.size} vs {b.size}")
    if np.all(a == b):
        return RankSumResult(statistic=0.0, pvalue=1.0, mode='signed-rank', n_a=a.size, n_b=b.size)
    result = wilcoxon(a, b, alternative='two-sided')
    return RankSumResult(statistic=float(result.statistic), pvalue=float(result.pvalue),
                         mode='signed-rank', n_a=a.size, n_b=b.size)
