"""
Plot-ready CSV tables (no rendering).

Every writer uses a fixed float format and column order so that identical
inputs give byte-identical files.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import pandas as pd

from .ecplane import boundary_curves
from .errors import ValidationError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.10g'
PLOT_KINDS = ('ec-scatter', 'boundaries', 'noise-ratio', 'sweep-heatmap')


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a table deterministically: no index, '\\n' line ends, fixed float format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def require_columns(frame: pd.DataFrame, columns: Sequence[str], source: str = 'input'):
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ValidationError(f"{source} is missing column(s): {', '.join(missing)}")


def ec_scatter(ec: pd.DataFrame, m: Optional[int] = None, n: Optional[int] = None) -> pd.DataFrame:
    """Per-text (H, C) points, optionally restricted to one (m, n) cell."""
    require_columns(ec, ['doc_id', 'label', 'm', 'n', 'H', 'C'], 'ec table')
    rows = ec
    if m is not None:
        rows = rows[rows['m'] == m]
    if n is not None:
        rows = rows[rows['n'] == n]
    return rows[['m', 'n', 'doc_id', 'label', 'H', 'C']].sort_values(['m', 'n', 'doc_id'], kind='stable')


def boundaries_table(alphabet: int, samples: int = 1000) -> pd.DataFrame:
    """h, c_lower, c_upper on one shared entropy grid, sorted by h."""
    curves = boundary_curves(alphabet, samples)
    return pd.DataFrame({'h': curves.lower[:, 0], 'c_lower': curves.lower[:, 1], 'c_upper': curves.upper[:, 1]})


def noise_ratio_table(stats: pd.DataFrame, group: str = 'label', algo: Optional[str] = None) -> pd.DataFrame:
    """Mean Wishart noise ratio per corpus (one row per value of ``group``)."""
    require_columns(stats, [group, 'noise_ratio'] + (['algo'] if algo else []), 'stats table')
    rows = stats if algo is None else stats[stats['algo'] == algo]
    table = rows.groupby(group, sort=True)['noise_ratio'].mean().reset_index()
    return table.rename(columns={group: 'corpus'})


def sweep_heatmap(sweep: pd.DataFrame) -> pd.DataFrame:
    """(m, n, mean_C) cells plus per-label mean complexity columns."""
    require_columns(sweep, ['m', 'n', 'mean_C'], 'sweep table')
    columns = ['m', 'n', 'mean_C'] + sorted(c for c in sweep.columns if c.startswith('mean_C_'))
    return sweep[columns].sort_values(['m', 'n'], kind='stable')


def emit_plot_data(kind: str, out_path: Union[str, Path], table: Optional[pd.DataFrame] = None,
                   alphabet: Optional[int] = None, **options) -> Path:
    """
    Build one figure table and write it as CSV.

    Args:
        kind: 'ec-scatter', 'boundaries', 'noise-ratio' or 'sweep-heatmap'
        out_path: Destination CSV
        table: Input table (ec, stats or sweep) for the table-based kinds
        alphabet: Alphabet size N for 'boundaries'
        **options: Passed to the kind's builder (m, n, group, algo, samples)

    Raises:
        ValidationError: unknown kind, missing input or missing column
    """
    if kind not in PLOT_KINDS:
        raise ValidationError(f"unknown plot kind '{kind}', expected one of {PLOT_KINDS}")
    if kind == 'boundaries':
        if alphabet is None:
            raise ValidationError("boundaries need an alphabet size")
        frame = boundaries_table(alphabet, **options)
    else:
        if table is None:
            raise ValidationError(f"{kind} needs an input table")
        builders = {'ec-scatter': ec_scatter, 'noise-ratio': noise_ratio_table, 'sweep-heatmap': sweep_heatmap}
        frame = builders[kind](table, **options)
    path = write_csv(frame, out_path)
    logger.info(f"Wrote {kind} data ({len(frame)} rows) to {path}")
    return path
