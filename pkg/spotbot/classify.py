"""
Linear max-margin classification of texts as human (+1) or bot (-1).

The classifier minimizes (lambda/2)||w||^2 + mean hinge loss with the
Pegasos stochastic subgradient method on z-scored features, the bias being
an extra constant feature. Features are either cluster-geometry statistics
(inter-cluster distances) or a text's entropy-complexity point.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, confusion_matrix
from sklearn.model_selection import StratifiedKFold, train_test_split

from .corpus import DocLabel
from .errors import ValidationError

logger = logging.getLogger(__name__)

HUMAN, BOT = 1, -1
FEATURE_SETS = {
    'cluster': ['inter_avg', 'inter_min', 'inter_max'],
    'ec': ['H', 'C']
}
BOT_TYPES = {
    'bot': (DocLabel.BOT_SIMPLE, DocLabel.BOT_ADVANCED),
    'bot-simple': (DocLabel.BOT_SIMPLE,),
    'bot-advanced': (DocLabel.BOT_ADVANCED,)
}
DEFAULT_LAMBDA_GRID = (1e-4, 1e-3, 1e-2)
PLATEAU_EPOCHS = 10
PLATEAU_TOL = 1e-6


@dataclass
class FeatureTable:
    """Feature rows: doc ids, an N x p matrix and labels in {+1, -1}."""
    doc_ids: List[str]
    X: np.ndarray
    y: np.ndarray
    feature_names: List[str]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != len(self.doc_ids) or self.y.shape[0] != len(self.doc_ids):
            raise ValidationError("feature matrix, labels and doc ids disagree in length")
        if self.X.shape[1] != len(self.feature_names):
            raise ValidationError(f"{self.X.shape[1]} feature columns for {len(self.feature_names)} names")
        if not np.all(np.isfinite(self.X)):
            raise ValidationError("features contain non-finite values")
        if not np.all(np.isin(self.y, (HUMAN, BOT))):
            raise ValidationError("labels must be +1 (human) or -1 (bot)")

    def __len__(self) -> int:
        return len(self.doc_ids)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=self.feature_names)
        frame.insert(0, 'label', self.y)
        frame.insert(0, 'doc_id', self.doc_ids)
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'FeatureTable':
        """Inverse of :meth:`to_frame`: doc_id, label, then feature columns."""
        missing = [c for c in ('doc_id', 'label') if c not in frame.columns]
        if missing:
            raise ValidationError(f"features table is missing column(s): {', '.join(missing)}")
        names = [c for c in frame.columns if c not in ('doc_id', 'label')]
        if not names:
            raise ValidationError("features table has no feature columns")
        return cls(doc_ids=frame['doc_id'].astype(str).tolist(), X=frame[names].to_numpy(dtype=np.float64),
                   y=frame['label'].to_numpy(dtype=np.int64), feature_names=names)


def label_value(label: Union[str, DocLabel], bot_type: str = 'bot') -> Optional[int]:
    """+1 for human, -1 for a selected bot label, None when excluded."""
    label = DocLabel(label)
    if label == DocLabel.HUMAN:
        return HUMAN
    return BOT if label in BOT_TYPES[bot_type] else None


def build_features(kind: str, table: pd.DataFrame, bot_type: str = 'bot',
                   m: Optional[int] = None, n: Optional[int] = None,
                   algo: Optional[str] = None, params: Optional[str] = None,
                   pooled: bool = False) -> FeatureTable:
    """
    Select classifier features from a stats or entropy-complexity table.

    Args:
        kind: 'cluster' (inter-cluster distances) or 'ec' (H, C)
        table: stats.csv or ec.csv rows, with doc_id and label columns
        bot_type: Which bot labels form the negative class
        m, n: Grid cell for 'ec' features
        pooled: 'ec' only; keep every grid cell as its own row and add m, n
            as numeric features (one row per text and cell)
        algo, params: Clustering run for 'cluster' features

    Raises:
        ValidationError: unknown kind, missing columns, or no rows left
    """
    if kind not in FEATURE_SETS:
        raise ValidationError(f"unknown feature kind '{kind}', expected one of {sorted(FEATURE_SETS)}")
    if bot_type not in BOT_TYPES:
        raise ValidationError(f"unknown bot type '{bot_type}', expected one of {sorted(BOT_TYPES)}")
    if pooled and kind != 'ec':
        raise ValidationError("only ec features can be pooled over the grid")
    names = FEATURE_SETS[kind]
    required = ['doc_id', 'label'] + names + (['m', 'n'] if kind == 'ec' else [])
    missing = [c for c in required if c not in table.columns]
    if missing:
        raise ValidationError(f"input table is missing column(s): {', '.join(missing)}")

    rows = table
    if pooled:
        names = names + ['m', 'n']
    elif kind == 'ec':
        if m is None or n is None:
            raise ValidationError("ec features need both m and n, or pooled rows")
        rows = rows[(rows['m'] == m) & (rows['n'] == n)]
    else:
        if algo is not None and 'algo' in rows.columns:
            rows = rows[rows['algo'] == algo]
        if params is not None and 'params' in rows.columns:
            rows = rows[rows['params'] == params]

    values = rows['label'].map(lambda v: label_value(v, bot_type))
    rows = rows[values.notna()].assign(y=values[values.notna()].astype(np.int64))
    finite = np.isfinite(rows[names].to_numpy(dtype=np.float64)).all(axis=1)
    if not finite.all():
        logger.warning(f"Dropping {int((~finite).sum())} rows with undefined features")
        rows = rows[finite]
    if rows.empty:
        raise ValidationError("no labelled rows left for the requested features")
    rows = rows.sort_values(['doc_id', 'm', 'n'] if pooled else 'doc_id', kind='stable')
    return FeatureTable(doc_ids=rows['doc_id'].astype(str).tolist(), X=rows[names].to_numpy(dtype=np.float64),
                        y=rows['y'].to_numpy(), feature_names=list(names))


@dataclass
class LinearModel:
    """w, b on standardized features, with the standardization itself."""
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray
    lam: float
    feature_names: List[str] = field(default_factory=list)
    objective_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if np.any(self.scale <= 0):
            raise ValidationError("standardization scales must be positive")

    def standardize(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.weights.shape[0]:
            raise ValidationError(f"expected {self.weights.shape[0]} features, got {X.shape[1]}")
        return (X - self.mean) / self.scale

    def decision_function(self, X) -> np.ndarray:
        return self.standardize(X) @ self.weights + self.bias

    def to_dict(self) -> Dict:
        return {
            'weights': self.weights.tolist(),
            'bias': self.bias,
            'standardization': {'mean': self.mean.tolist(), 'scale': self.scale.tolist()},
            'lambda': self.lam,
            'feature_schema': self.feature_names,
            'objective_history': self.objective_history
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'LinearModel':
        try:
            return cls(weights=data['weights'], bias=float(data['bias']),
                       mean=data['standardization']['mean'], scale=data['standardization']['scale'],
                       lam=float(data['lambda']), feature_names=list(data.get('feature_schema', [])),
                       objective_history=list(data.get('objective_history', [])))
        except (KeyError, TypeError) as e:
            raise ValidationError(f"malformed model: {e}") from e

    def save(self, path: Union[str, Path], metadata: Optional[Dict] = None):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump({'metadata': metadata or {}, 'model': self.to_dict()}, f, indent=2)

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'LinearModel':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot read model {path}: {e}") from e
        return cls.from_dict(data.get('model', data))


def _check_training_set(X: np.ndarray, y: np.ndarray):
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ValidationError("training features and labels disagree in shape")
    if not np.all(np.isin(y, (HUMAN, BOT))):
        raise ValidationError("training labels must be +1 or -1")
    if np.unique(y).size < 2:
        raise ValidationError("training data holds a single class")


def _objective(w: np.ndarray, Z: np.ndarray, y: np.ndarray, lam: float) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (Z @ w))
    return float(lam / 2.0 * (w @ w) + hinge.mean())


def train_svc(X, y, lam: float = 1e-3, epochs: int = 200, seed: int = 0,
              feature_names: Optional[Sequence[str]] = None) -> LinearModel:
    """
    Fit a linear SVC with Pegasos.

    Each epoch visits the samples in a seeded random order; the step at
    global iteration t is 1/(lambda t), followed by projection onto the
    ball of radius 1/sqrt(lambda). Training stops early when the epoch
    objective varies by less than 1e-6 over 10 epochs.

    Raises:
        ValidationError: single-class data, bad shapes or lambda <= 0
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    _check_training_set(X, y)
    if lam <= 0:
        raise ValidationError(f"lambda must be > 0, got {lam}")
    if epochs < 1:
        raise ValidationError(f"epochs must be >= 1, got {epochs}")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    Z = np.hstack([(X - mean) / scale, np.ones((X.shape[0], 1))])

    rng = np.random.default_rng(seed)
    w = np.zeros(Z.shape[1])
    radius = 1.0 / math.sqrt(lam)
    history = []
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(Z.shape[0]):
            t += 1
            eta = 1.0 / (lam * t)
            violated = y[i] * (Z[i] @ w) < 1.0
            w *= 1.0 - eta * lam
            if violated:
                w += eta * y[i] * Z[i]
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
        history.append(_objective(w, Z, y, lam))
        if len(history) >= PLATEAU_EPOCHS and max(history[-PLATEAU_EPOCHS:]) - min(history[-PLATEAU_EPOCHS:]) < PLATEAU_TOL:
            break

    logger.debug(f"Pegasos lambda={lam:g}: {len(history)} epochs, objective {history[-1]:.6g}")
    return LinearModel(weights=w[:-1], bias=float(w[-1]), mean=mean, scale=scale, lam=lam,
                       feature_names=list(feature_names or []), objective_history=history)


@dataclass
class Prediction:
    labels: np.ndarray
    margins: np.ndarray


def predict(model: LinearModel, X) -> Prediction:
    """sign(w . z + b), a zero margin counting as +1 (human)."""
    margins = model.decision_function(X)
    return Prediction(labels=np.where(margins >= 0, HUMAN, BOT), margins=margins)


def accuracy(model: LinearModel, X, y) -> float:
    return float(accuracy_score(np.asarray(y), predict(model, X).labels))


@dataclass
class CVReport:
    """Cross-validation summary; ``model`` is refit on the whole training split."""
    lambda_scores: Dict[float, List[float]]
    best_lambda: float
    fold_accuracies: List[float]
    mean_accuracy: float
    std_accuracy: float
    train_accuracy: float
    test_accuracy: float
    confusion: List[List[int]]
    n_train: int
    n_test: int
    model: LinearModel

    def to_dict(self) -> Dict:
        return {
            'lambda_scores': {repr(k): v for k, v in self.lambda_scores.items()},
            'best_lambda': self.best_lambda,
            'fold_accuracies': self.fold_accuracies,
            'mean_accuracy': self.mean_accuracy,
            'std_accuracy': self.std_accuracy,
            'train_accuracy': self.train_accuracy,
            'test_accuracy': self.test_accuracy,
            'confusion_matrix': {'labels': [HUMAN, BOT], 'counts': self.confusion},
            'n_train': self.n_train,
            'n_test': self.n_test
        }


def cross_validate(X, y, folds: int = 5, lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                   seed: int = 0, test_size: float = 0.2, epochs: int = 200,
                   feature_names: Optional[Sequence[str]] = None) -> CVReport:
    """
    Stratified hold-out split, k-fold lambda search, refit and test.

    The data is split into train/test (stratified, seeded). Every lambda is
    scored by mean accuracy over stratified folds of the training split;
    ties go to the earlier grid value. The final model is refit on the full
    training split at the best lambda and evaluated on the test split.

    Raises:
        ValidationError: folds < 2, empty grid, or a class too small to
            appear in every split
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    _check_training_set(X, y)
    if folds < 2:
        raise ValidationError(f"folds must be >= 2, got {folds}")
    if not lambda_grid:
        raise ValidationError("lambda grid is empty")

    try:
        X_train, X_test, y_train, y_test = train_test_split(X, y, test_size=test_size, stratify=y,
                                                            random_state=seed)
        splits = list(StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed).split(X_train, y_train))
    except ValueError as e:
        raise ValidationError(f"cannot form stratified splits: {e}") from e
    for fit_idx, held_idx in splits:
        if np.unique(y_train[fit_idx]).size < 2 or np.unique(y_train[held_idx]).size < 2:
            raise ValidationError("a fold does not contain both classes")

    scores: Dict[float, List[float]] = {}
    for lam in lambda_grid:
        scores[float(lam)] = [
            accuracy(train_svc(X_train[fit_idx], y_train[fit_idx], lam, epochs, seed),
                     X_train[held_idx], y_train[held_idx])
            for fit_idx, held_idx in splits
        ]
    best_lambda = max(scores, key=lambda lam: np.mean(scores[lam]))

    model = train_svc(X_train, y_train, best_lambda, epochs, seed, feature_names)
    test_labels = predict(model, X_test).labels
    fold_accuracies = scores[best_lambda]
    report = CVReport(
        lambda_scores=scores,
        best_lambda=best_lambda,
        fold_accuracies=fold_accuracies,
        mean_accuracy=float(np.mean(fold_accuracies)),
        std_accuracy=float(np.std(fold_accuracies)),
        train_accuracy=accuracy(model, X_train, y_train),
        test_accuracy=float(accuracy_score(y_test, test_labels)),
        confusion=confusion_matrix(y_test, test_labels, labels=[HUMAN, BOT]).tolist(),
        n_train=int(y_train.size),
        n_test=int(y_test.size),
        model=model
    )
    logger.info(f"Best lambda {best_lambda:g}: CV {report.mean_accuracy:.3f} +/- {report.std_accuracy:.3f}, "
                f"test {report.test_accuracy:.3f}")
    return report
