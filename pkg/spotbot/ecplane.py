"""
Entropy-complexity plane of ordinal patterns.

Windows of n consecutive path points are symbolized per coordinate by the
permutation that sorts them (Bandt-Pompe, ties ranked by position). The
pattern distribution gives the normalized permutation entropy H and the
Jensen-Shannon statistical complexity C. Unseen patterns only enter through
the uniform reference, in closed form, so alphabets of size (n!)^m never
have to be enumerated.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import entr

from .corpus import ngram_count
from .embed import SemanticPath
from .errors import ValidationError

logger = logging.getLogger(__name__)

CHAOTIC_BAND = (0.25, 0.95)
DEFAULT_DELTA_FRACTION = 0.05
DEFAULT_PATTERN_BUDGET = 10 ** 7
BISECTION_STEPS = 60
MAX_LOG_ALPHABET = 700.0

Pattern = Tuple[int, ...]


def log_alphabet(n: int, m: int) -> float:
    """ln((n!)^m)."""
    return m * math.lgamma(n + 1)


def alphabet_size(n: int, m: int) -> int:
    return math.factorial(n) ** m


@dataclass
class OrdinalDistribution:
    """Sparse ordinal-pattern probabilities; keys are m-tuples of permutations."""
    n: int
    m: int
    probs: Dict[Tuple[Pattern, ...], float]
    total_windows: int

    @property
    def alphabet(self) -> int:
        return alphabet_size(self.n, self.m)

    def validate(self):
        if self.n < 2 or self.m < 1:
            raise ValidationError(f"invalid pattern parameters n={self.n}, m={self.m}")
        if not self.probs:
            raise ValidationError("distribution is empty")
        total = math.fsum(self.probs.values())
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"probabilities sum to {total}, expected 1")
        if any(p <= 0 for p in self.probs.values()):
            raise ValidationError("stored probabilities must be positive")


@dataclass
class ECPoint:
    h: float
    c: float
    n: int
    m: int
    alphabet: int


def ordinal_pattern(window) -> Pattern:
    """
    Permutation that sorts ``window``; equal values keep their order.

    Raises:
        ValidationError: fewer than 2 values or a NaN
    """
    values = np.asarray(window, dtype=np.float64).ravel()
    if values.size < 2:
        raise ValidationError(f"window needs at least 2 values, got {values.size}")
    if np.isnan(values).any():
        raise ValidationError("window contains NaN")
    return tuple(int(i) for i in np.argsort(values, kind='stable'))


def multidim_distribution(path, n: int, stride: int = 1, m: Optional[int] = None) -> OrdinalDistribution:
    """
    Joint ordinal-pattern distribution of a multidimensional series.

    Every window of n rows yields one permutation per component; the tuple
    of m permutations is the symbol.

    Args:
        path: L x M series (1-D input is one component)
        n: Window length, n >= 2
        stride: Step between window starts
        m: Number of leading components to use, defaults to all of them

    Raises:
        ValidationError: L < n, NaN values or bad parameters
    """
    X = np.asarray(path, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValidationError(f"series must be 1-D or 2-D, got {X.ndim} dimensions")
    m = X.shape[1] if m is None else m
    if n < 2:
        raise ValidationError(f"pattern length n must be >= 2, got {n}")
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    if not 1 <= m <= X.shape[1]:
        raise ValidationError(f"m={m} components requested from a {X.shape[1]}-column series")
    if X.shape[0] < n:
        raise ValidationError(f"series of length {X.shape[0]} is shorter than n={n}")
    X = X[:, :m]
    if np.isnan(X).any():
        raise ValidationError("series contains NaN")

    count = ngram_count(X.shape[0], n, stride)
    starts = np.arange(count) * stride
    windows = X[starts[:, None] + np.arange(n)[None, :]]
    patterns = np.argsort(windows, axis=1, kind='stable')
    symbols = patterns.transpose(0, 2, 1).reshape(count, m * n)
    unique, counts = np.unique(symbols, axis=0, return_counts=True)

    probs = {}
    for row, c in zip(unique.tolist(), counts.tolist()):
        key = tuple(tuple(row[j * n:(j + 1) * n]) for j in range(m))
        probs[key] = c / count
    return OrdinalDistribution(n=n, m=m, probs=probs, total_windows=count)


def _normalized_complexity(s_p, s_m, log_n: float):
    """H and C from S(P) and S((P + Pe)/2) for an alphabet with ln N = log_n."""
    inv_n = math.exp(-log_n)
    h = s_p / log_n
    js = np.maximum(s_m - s_p / 2.0 - log_n / 2.0, 0.0)
    # -1/Q0: the largest Jensen-Shannon divergence from the uniform distribution
    js_max = -(inv_n * log_n + (1.0 + inv_n) * math.log1p(inv_n) - 2.0 * math.log(2.0)) / 2.0
    return h, js / js_max * h


def ec_values(probs, log_n: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    H and C for each row of pattern probabilities.

    A row lists the probabilities of some patterns (zeros allowed); every
    pattern of the N = exp(log_n) alphabet missing from the row has
    probability 0.
    """
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    total = math.exp(log_n)
    inv_n = 1.0 / total
    unseen = total - p.shape[1]
    s_p = entr(p).sum(axis=1)
    s_m = entr((p + inv_n) / 2.0).sum(axis=1) + unseen * entr(inv_n / 2.0)
    h, c = _normalized_complexity(s_p, s_m, log_n)
    return np.clip(h, 0.0, 1.0), np.maximum(c, 0.0)


def entropy_complexity(dist: OrdinalDistribution) -> ECPoint:
    """
    Normalized permutation entropy and Jensen-Shannon complexity.

    H = S(P) / ln N; C = Q0 * JS(P, Pe) * H with Pe uniform over all
    N = (n!)^m patterns and Q0 normalizing JS to [0, 1].
    """
    dist.validate()
    log_n = log_alphabet(dist.n, dist.m)
    if log_n > MAX_LOG_ALPHABET:
        raise ValidationError(f"alphabet (n!)^m with n={dist.n}, m={dist.m} is too large")
    h, c = ec_values(np.fromiter(dist.probs.values(), dtype=np.float64), log_n)
    return ECPoint(h=float(h[0]), c=float(c[0]), n=dist.n, m=dist.m, alphabet=dist.alphabet)


def _family(p: np.ndarray, k: np.ndarray, log_n: float):
    """(H, C) of: one entry p, k - 1 entries (1 - p)/(k - 1), N - k zeros."""
    inv_n = math.exp(-log_n)
    total = math.exp(log_n)
    q = (1.0 - p) / (k - 1.0)
    s_p = entr(p) + (k - 1.0) * entr(q)
    s_m = (entr((p + inv_n) / 2.0) + (k - 1.0) * entr((q + inv_n) / 2.0)
           + (total - k) * entr(inv_n / 2.0))
    return _normalized_complexity(s_p, s_m, log_n)


def _bisect(h: np.ndarray, k: np.ndarray, lo: np.ndarray, hi: np.ndarray,
            log_n: float, increasing: bool) -> np.ndarray:
    lo, hi = lo.copy(), hi.copy()
    for _ in range(BISECTION_STEPS):
        mid = (lo + hi) / 2.0
        below = _family(mid, k, log_n)[0] < h
        move_lo = below if increasing else ~below
        lo = np.where(move_lo, mid, lo)
        hi = np.where(move_lo, hi, mid)
    return _family((lo + hi) / 2.0, k, log_n)[1]


@dataclass
class BoundaryCurves:
    """
    Theoretical minimum and maximum complexity for an alphabet of size N.

    ``lower`` and ``upper`` are (h, c) polylines sorted by h for plotting;
    :meth:`lower_at` and :meth:`upper_at` evaluate the curves exactly.
    """
    alphabet: int
    log_alphabet: float
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    @property
    def c_max(self) -> float:
        return float(self.upper[:, 1].max())

    def lower_at(self, h) -> np.ndarray:
        h = np.clip(np.asarray(h, dtype=np.float64), 0.0, 1.0)
        total = math.exp(self.log_alphabet)
        k = np.full(h.shape, total)
        return _bisect(h, k, np.full(h.shape, 1.0 / total), np.ones(h.shape),
                       self.log_alphabet, increasing=False)

    def upper_at(self, h) -> np.ndarray:
        # the family with k non-zero entries spans ln(k-1)/ln N <= h <= ln k/ln N
        h = np.clip(np.asarray(h, dtype=np.float64), 0.0, 1.0)
        total = math.exp(self.log_alphabet)
        base = np.clip(np.ceil(np.exp(h * self.log_alphabet)), 2.0, total)
        best = np.full(h.shape, -np.inf)
        for shift in (-1.0, 0.0, 1.0):
            k = np.clip(base + shift, 2.0, total)
            lo_h = np.log(k - 1.0) / self.log_alphabet
            hi_h = np.log(k) / self.log_alphabet
            covers = (h >= lo_h - 1e-12) & (h <= hi_h + 1e-12)
            c = _bisect(np.clip(h, lo_h, hi_h), k, np.zeros(h.shape), 1.0 / k,
                        self.log_alphabet, increasing=True)
            best = np.where(covers, np.maximum(best, c), best)
        return best


def boundary_curves(alphabet: int, samples: int = 1000) -> BoundaryCurves:
    """
    Lower and upper complexity boundaries for N = ``alphabet`` patterns.

    The polylines are evaluated on ``samples`` evenly spaced entropies plus
    the upper-curve family junctions ln k / ln N (subsampled geometrically
    for large N), with exact endpoints (0, 0) and (1, 0).
    """
    alphabet = int(alphabet)
    if alphabet < 2:
        raise ValidationError(f"alphabet size must be >= 2, got {alphabet}")
    if samples < 2:
        raise ValidationError(f"need at least 2 samples, got {samples}")
    log_n = math.log(alphabet)
    if log_n > MAX_LOG_ALPHABET:
        raise ValidationError(f"alphabet size {alphabet} is too large")

    if alphabet <= samples:
        junctions = np.arange(2, alphabet)
    else:
        junctions = np.unique(np.rint(np.geomspace(2, alphabet - 1, samples)))
    grid = np.unique(np.concatenate([np.linspace(0.0, 1.0, samples), np.log(junctions) / log_n]))
    interior = grid[(grid > 0.0) & (grid < 1.0)]

    curves = BoundaryCurves(alphabet=alphabet, log_alphabet=log_n,
                            lower=np.zeros((0, 2)), upper=np.zeros((0, 2)))
    ends = np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]])
    curves.lower = np.vstack([ends[0], np.column_stack([interior, curves.lower_at(interior)]), ends[1]])
    curves.upper = np.vstack([ends[0], np.column_stack([interior, curves.upper_at(interior)]), ends[1]])
    return curves


def boundary_curves_for(n: int, m: int, samples: int = 1000) -> BoundaryCurves:
    """Boundaries for the alphabet of m joint permutations of length n."""
    return boundary_curves(alphabet_size(n, m), samples)


@dataclass
class ChaoticTest:
    chaotic: bool
    distance: float


def chaotic_area_test(pt: ECPoint, curves: BoundaryCurves, delta: Optional[float] = None) -> ChaoticTest:
    """
    Whether a point lies in the chaotic band under the upper boundary.

    True iff c_upper(h) - c <= delta and h is within [0.25, 0.95].
    ``delta`` defaults to 5% of the upper curve's maximum complexity.

    Raises:
        ValidationError: h outside [0, 1] or curves for another alphabet
    """
    if not 0.0 <= pt.h <= 1.0:
        raise ValidationError(f"entropy {pt.h} outside [0, 1]")
    if pt.alphabet != curves.alphabet:
        raise ValidationError(f"point alphabet {pt.alphabet} differs from curves alphabet {curves.alphabet}")
    if delta is None:
        delta = DEFAULT_DELTA_FRACTION * curves.c_max
    if delta < 0:
        raise ValidationError(f"margin must be >= 0, got {delta}")
    distance = float(curves.upper_at(pt.h)) - pt.c
    in_band = CHAOTIC_BAND[0] <= pt.h <= CHAOTIC_BAND[1]
    return ChaoticTest(chaotic=bool(in_band and distance <= delta), distance=distance)


@dataclass
class ECRow:
    """One text at one (m, n) cell."""
    doc_id: str
    label: str
    m: int
    n: int
    h: float
    c: float
    dist_to_upper: float
    chaotic: bool


@dataclass
class SweepRow:
    m: int
    n: int
    mean_h: float
    mean_c: float
    chaotic_fraction: float
    n_texts: int
    mean_c_by_label: Dict[str, float] = field(default_factory=dict)
    skipped_reason: str = ''


@dataclass
class SweepResult:
    rows: List[SweepRow]
    points: List[ECRow]
    skipped_texts: int = 0


def ec_points(paths: Sequence[SemanticPath], m: int, n: int, stride: int = 1,
              curves: Optional[BoundaryCurves] = None, delta: Optional[float] = None,
              jobs: int = 1) -> Tuple[List[ECRow], int]:
    """
    Entropy-complexity rows of every text for one (m, n) cell.

    Texts shorter than n points are skipped.

    Returns:
        (rows in path order, number of skipped texts)
    """
    curves = curves or boundary_curves_for(n, m)

    def one(path: SemanticPath) -> Optional[ECRow]:
        if len(path) < n:
            return None
        pt = entropy_complexity(multidim_distribution(path.points, n, stride, m=m))
        test = chaotic_area_test(pt, curves, delta)
        return ECRow(doc_id=path.doc_id, label=path.label.value, m=m, n=n, h=pt.h, c=pt.c,
                     dist_to_upper=test.distance, chaotic=test.chaotic)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(one, paths))
    rows = [r for r in results if r is not None]
    return rows, len(results) - len(rows)


def parameter_sweep(paths: Sequence[SemanticPath], m_grid: Sequence[int], n_grid: Sequence[int],
                    stride: int = 1, budget: int = DEFAULT_PATTERN_BUDGET,
                    delta_fraction: float = DEFAULT_DELTA_FRACTION, jobs: int = 1) -> SweepResult:
    """
    Entropy-complexity statistics over a grid of (m, n).

    Cells whose alphabet (n!)^m exceeds ``budget`` are reported with a skip
    reason and no statistics.

    Returns:
        SweepResult with one SweepRow per cell and every per-text ECRow
    """
    if not m_grid or not n_grid:
        raise ValidationError("m and n grids must be non-empty")
    rows, points = [], []
    skipped_texts = 0
    for m in m_grid:
        for n in n_grid:
            if log_alphabet(n, m) > math.log(budget):
                reason = f"alphabet (n!)^m exceeds budget {budget}"
                logger.info(f"Skipping m={m}, n={n}: {reason}")
                rows.append(SweepRow(m=m, n=n, mean_h=float('nan'), mean_c=float('nan'),
                                     chaotic_fraction=float('nan'), n_texts=0, skipped_reason=reason))
                continue

            curves = boundary_curves_for(n, m)
            cell, skipped = ec_points(paths, m, n, stride, curves, delta_fraction * curves.c_max, jobs)
            skipped_texts += skipped
            points.extend(cell)
            if not cell:
                rows.append(SweepRow(m=m, n=n, mean_h=float('nan'), mean_c=float('nan'),
                                     chaotic_fraction=float('nan'), n_texts=0,
                                     skipped_reason='no text is long enough'))
                continue

            by_label: Dict[str, List[float]] = {}
            for r in cell:
                by_label.setdefault(r.label, []).append(r.c)
            rows.append(SweepRow(
                m=m, n=n,
                mean_h=float(np.mean([r.h for r in cell])),
                mean_c=float(np.mean([r.c for r in cell])),
                chaotic_fraction=float(np.mean([r.chaotic for r in cell])),
                n_texts=len(cell),
                mean_c_by_label={label: float(np.mean(v)) for label, v in sorted(by_label.items())}
            ))
            logger.info(f"m={m}, n={n}: {len(cell)} texts, chaotic fraction {rows[-1].chaotic_fraction:.3f}")
    return SweepResult(rows=rows, points=points, skipped_texts=skipped_texts)
