"""
Corpus ingestion for spotbot.

Reads raw text files (plain UTF-8, pre-tokenized ``.tok`` files or PDFs),
tokenizes them with a rule-based Unicode tokenizer, builds a
frequency-sorted vocabulary and the sparse term x document count matrix.

Usage:
    python -m spotbot ingest --input data/mini_corpus --out corpus.json
"""

import json
import logging
import unicodedata
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from .errors import IngestionError, ValidationError

logger = logging.getLogger(__name__)

TEXT_SUFFIXES = ('.txt', '.tok', '.pdf')


class DocLabel(str, Enum):
    """Origin of a document."""
    HUMAN = "human"
    BOT_SIMPLE = "bot-simple"
    BOT_ADVANCED = "bot-advanced"
    UNLABELED = "unlabeled"

    @property
    def is_bot(self) -> bool:
        return self in (DocLabel.BOT_SIMPLE, DocLabel.BOT_ADVANCED)


@dataclass(frozen=True)
class TokenizerRules:
    """Tokenizer switches. Whitespace splitting is always Unicode-aware."""
    lowercase: bool = True
    strip_punctuation: bool = True
    pretokenized: bool = False


@lru_cache(maxsize=4096)
def _punctuation_replacement(ch: str) -> str:
    category = unicodedata.category(ch)
    if not category.startswith('P'):
        return ch
    # dashes and brackets separate words, other punctuation is dropped
    if category in ('Pd', 'Ps', 'Pe'):
        return ' '
    return ''


def tokenize(raw_text: Union[str, bytes], rules: Optional[TokenizerRules] = None) -> List[str]:
    """
    Split raw text into token strings.

    Args:
        raw_text: Text, or UTF-8 bytes straight from a file
        rules: Tokenizer rules, defaults to lowercase + punctuation stripping

    Returns:
        Token strings in original order, never empty strings

    Raises:
        IngestionError: bytes input is not valid UTF-8
    """
    rules = rules or TokenizerRules()
    if isinstance(raw_text, bytes):
        try:
            raw_text = raw_text.decode('utf-8')
        except UnicodeDecodeError as e:
            raise IngestionError(f"invalid UTF-8 at byte offset {e.start}", offset=e.start) from e

    if rules.pretokenized:
        return raw_text.split()

    text = raw_text.lower() if rules.lowercase else raw_text
    if rules.strip_punctuation:
        text = ''.join(_punctuation_replacement(ch) for ch in text)
    return text.split()


@dataclass(frozen=True)
class TokenDoc:
    """A tokenized document: token indices into the corpus vocabulary."""
    id: str
    tokens: Tuple[int, ...]
    label: DocLabel = DocLabel.UNLABELED

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class NGramStream:
    """Contiguous n-grams of one document taken every ``stride`` tokens."""
    n: int
    stride: int
    grams: Tuple[Tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.grams)


def ngram_count(length: int, n: int, stride: int) -> int:
    """Number of windows of size n with the given stride over ``length`` tokens."""
    return max(0, (length - n) // stride + 1)


def _check_window(n: int, stride: int):
    if n < 1:
        raise ValidationError(f"n-gram length must be >= 1, got {n}")
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")


def extract_ngrams(doc: TokenDoc, n: int, stride: int = 1) -> NGramStream:
    """
    Extract the n-gram stream of a document.

    Short documents yield an empty stream.
    """
    _check_window(n, stride)
    count = ngram_count(len(doc.tokens), n, stride)
    grams = tuple(tuple(doc.tokens[start:start + n]) for start in range(0, count * stride, stride))
    return NGramStream(n=n, stride=stride, grams=grams)


def normalized_frequencies(doc: TokenDoc) -> Dict[int, float]:
    """Token frequencies n_j = count_j / total tokens, keyed by token index."""
    if not doc.tokens:
        raise ValidationError(f"document '{doc.id}' is empty")
    total = len(doc.tokens)
    counts = Counter(doc.tokens)
    return {token: counts[token] / total for token in sorted(counts)}


@dataclass
class Corpus:
    """Vocabulary, documents and the sparse term x document count matrix."""
    terms: List[str]
    docs: List[TokenDoc]
    metadata: Dict = field(default_factory=dict)
    vocab: Dict[str, int] = field(init=False, repr=False)
    counts: sparse.csc_matrix = field(init=False, repr=False)

    def __post_init__(self):
        self.vocab = {term: idx for idx, term in enumerate(self.terms)}
        if len(self.vocab) != len(self.terms):
            raise ValidationError("vocabulary contains duplicate terms")

        ids = [doc.id for doc in self.docs]
        if len(set(ids)) != len(ids):
            duplicates = sorted(doc_id for doc_id, c in Counter(ids).items() if c > 1)
            raise ValidationError(f"duplicate document ids: {duplicates}")

        rows, cols = [], []
        for col, doc in enumerate(self.docs):
            if doc.tokens and max(doc.tokens) >= len(self.terms):
                raise ValidationError(f"document '{doc.id}' has token index outside the vocabulary")
            rows.extend(doc.tokens)
            cols.extend([col] * len(doc.tokens))
        data = np.ones(len(rows), dtype=np.int64)
        self.counts = sparse.coo_matrix(
            (data, (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=(len(self.terms), len(self.docs))
        ).tocsc()

    @property
    def vocab_size(self) -> int:
        return len(self.terms)

    def doc(self, doc_id: str) -> TokenDoc:
        for doc in self.docs:
            if doc.id == doc_id:
                return doc
        raise KeyError(doc_id)

    def labels(self) -> Dict[str, DocLabel]:
        return {doc.id: doc.label for doc in self.docs}

    def decode(self, doc: TokenDoc) -> List[str]:
        return [self.terms[t] for t in doc.tokens]

    @classmethod
    def build(cls, raw_docs: Sequence[Tuple[str, List[str], DocLabel]], min_count: int = 1) -> 'Corpus':
        """
        Build a corpus from tokenized documents.

        The vocabulary is sorted by descending frequency, ties by token
        string. Tokens below ``min_count`` are dropped from the documents.

        Args:
            raw_docs: (doc id, token strings, label) triples
            min_count: Minimum corpus frequency of a kept token

        Returns:
            Corpus with dense indices 0..V-1
        """
        if min_count < 1:
            raise ValidationError(f"min_count must be >= 1, got {min_count}")

        frequencies = Counter()
        for _, tokens, _ in raw_docs:
            frequencies.update(tokens)

        kept = [(term, count) for term, count in frequencies.items() if count >= min_count]
        kept.sort(key=lambda item: (-item[1], item[0]))
        terms = [term for term, _ in kept]
        index = {term: idx for idx, term in enumerate(terms)}

        dropped = 0
        docs = []
        for doc_id, tokens, label in raw_docs:
            ids = tuple(index[t] for t in tokens if t in index)
            dropped += len(tokens) - len(ids)
            docs.append(TokenDoc(id=doc_id, tokens=ids, label=DocLabel(label)))

        metadata = {
            'min_count': min_count,
            'total_documents': len(docs),
            'vocabulary_size': len(terms),
            'total_tokens': sum(len(d) for d in docs),
            'dropped_tokens': dropped
        }
        logger.info(f"Built corpus: {len(docs)} documents, {len(terms)} terms, {dropped} tokens below min-count")
        return cls(terms=terms, docs=docs, metadata=metadata)

    def save(self, path: Union[str, Path]):
        """Write the corpus cache as JSON (vocabulary order + token streams)."""
        payload = {
            'metadata': dict(self.metadata, format='spotbot-corpus-v1'),
            'vocab': self.terms,
            'docs': [{'id': d.id, 'label': d.label.value, 'tokens': list(d.tokens)} for d in self.docs]
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, ensure_ascii=False)
        logger.info(f"Corpus saved to: {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'Corpus':
        """Read a corpus cache written by :meth:`save`."""
        try:
            with open(path, 'r', encoding='utf-8') as f:
                payload = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise IngestionError(f"cannot read corpus cache: {e}", path=str(path)) from e

        docs = [TokenDoc(id=d['id'], tokens=tuple(d['tokens']), label=DocLabel(d['label']))
                for d in payload['docs']]
        corpus = cls(terms=list(payload['vocab']), docs=docs, metadata=payload.get('metadata', {}))
        column_sums = np.asarray(corpus.counts.sum(axis=0)).ravel()
        if any(column_sums[j] != len(doc) for j, doc in enumerate(corpus.docs)):
            raise IngestionError("count matrix does not match token streams", path=str(path))
        return corpus


class CorpusIngester:
    """Read text files into a Corpus, tokenizing documents in parallel."""

    def __init__(self, rules: Optional[TokenizerRules] = None, min_count: int = 1,
                 jobs: int = 1, strict: bool = False):
        """
        Args:
            rules: Tokenizer rules for plain text files
            min_count: Vocabulary cutoff
            jobs: Worker threads for reading and tokenizing
            strict: Abort on the first unreadable document instead of skipping it
        """
        self.rules = rules or TokenizerRules()
        self.min_count = min_count
        self.jobs = max(1, jobs)
        self.strict = strict
        self.stats = {
            'documents_found': 0,
            'documents_loaded': 0,
            'failed_documents': [],
            'failed_pages': []
        }

    def read_tokens(self, path: Path) -> List[str]:
        """Tokenize one file according to its suffix."""
        suffix = path.suffix.lower()
        if suffix == '.pdf':
            return tokenize(self.extract_pdf_text(path), self.rules)
        try:
            raw = path.read_bytes()
        except OSError as e:
            raise IngestionError(f"cannot read file: {e}", path=str(path)) from e

        rules = TokenizerRules(pretokenized=True) if suffix == '.tok' else self.rules
        try:
            return tokenize(raw, rules)
        except IngestionError as e:
            raise IngestionError(str(e), path=str(path), offset=e.offset) from e

    def extract_pdf_text(self, path: Path) -> str:
        """Extract page texts with pdfplumber, skipping pages that fail."""
        try:
            import pdfplumber
        except ImportError as e:
            raise IngestionError("pdfplumber not installed. Run: pip install pdfplumber", path=str(path)) from e

        pages = []
        try:
            with pdfplumber.open(path) as pdf:
                for page_num, page in enumerate(pdf.pages, 1):
                    try:
                        pages.append(page.extract_text() or '')
                    except Exception as e:
                        logger.error(f"Failed to process page {page_num} of {path}: {str(e)}")
                        self.stats['failed_pages'].append(f"{path.name}:{page_num}")
        except Exception as e:
            raise IngestionError(f"failed to open PDF: {e}", path=str(path)) from e
        return '\n'.join(pages)

    def _load_entry(self, entry: Tuple[str, Path, DocLabel]) -> Optional[Tuple[str, List[str], DocLabel]]:
        doc_id, path, label = entry
        try:
            return doc_id, self.read_tokens(path), label
        except IngestionError as e:
            if self.strict:
                raise
            logger.error(f"Skipping document {doc_id}: {str(e)}")
            self.stats['failed_documents'].append({'id': doc_id, 'error': str(e)})
            return None

    def directory_entries(self, input_dir: Union[str, Path],
                          label: DocLabel = DocLabel.UNLABELED) -> List[Tuple[str, Path, DocLabel]]:
        input_dir = Path(input_dir)
        if not input_dir.is_dir():
            raise ValidationError(f"input directory not found: {input_dir}")
        files = sorted(p for p in input_dir.iterdir() if p.suffix.lower() in TEXT_SUFFIXES)
        return [(p.stem, p, DocLabel(label)) for p in files]

    def manifest_entries(self, manifest_path: Union[str, Path]) -> List[Tuple[str, Path, DocLabel]]:
        manifest_path = Path(manifest_path)
        try:
            with open(manifest_path, 'r', encoding='utf-8') as f:
                items = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot read manifest {manifest_path}: {e}") from e

        entries = []
        for i, item in enumerate(items):
            try:
                path = Path(item['path'])
                if not path.is_absolute():
                    path = manifest_path.parent / path
                entries.append((str(item['id']), path, DocLabel(item.get('label', 'unlabeled'))))
            except (KeyError, ValueError) as e:
                raise ValidationError(f"manifest {manifest_path} entry {i} is invalid: {e}") from e
        return entries

    def ingest(self, entries: Sequence[Tuple[str, Path, DocLabel]]) -> Corpus:
        """
        Tokenize all entries and build the corpus.

        Args:
            entries: (doc id, file path, label) triples

        Returns:
            Built Corpus; ``metadata`` carries ingestion stats
        """
        self.stats['documents_found'] = len(entries)
        logger.info(f"Ingesting {len(entries)} documents with {self.jobs} worker(s)")

        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            loaded = [doc for doc in pool.map(self._load_entry, entries) if doc is not None]

        self.stats['documents_loaded'] = len(loaded)
        corpus = Corpus.build(loaded, min_count=self.min_count)
        corpus.metadata.update({
            'ingestion_date': datetime.now().isoformat(),
            'failed_documents': self.stats['failed_documents'],
            'failed_pages': self.stats['failed_pages']
        })
        if self.stats['failed_documents']:
            logger.warning(f"{len(self.stats['failed_documents'])} document(s) failed to load")
        return corpus

    def ingest_directory(self, input_dir: Union[str, Path], label: DocLabel = DocLabel.UNLABELED) -> Corpus:
        """Ingest every .txt/.tok/.pdf file of a directory under one label."""
        return self.ingest(self.directory_entries(input_dir, label))

    def ingest_manifest(self, manifest_path: Union[str, Path]) -> Corpus:
        """Ingest the {id, path, label} entries of a JSON manifest."""
        return self.ingest(self.manifest_entries(manifest_path))
