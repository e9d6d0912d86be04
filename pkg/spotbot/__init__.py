"""
spotbot: telling human-written texts from generated ones.

Texts become semantic paths (sequences of n-gram embeddings); the paths are
described by cluster geometry and by their position on the
entropy-complexity plane, and a linear SVC separates the two classes.
"""

from .errors import EmbeddingFormatError, IngestionError, SpotBotError, StageError, ValidationError

__version__ = '0.1.0'

__all__ = [
    'EmbeddingFormatError',
    'IngestionError',
    'SpotBotError',
    'StageError',
    'ValidationError',
    '__version__'
]
