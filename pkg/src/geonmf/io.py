"""Corpus ingestion, vocabulary pruning and artifact serialization.

Corpora use the UCI bag-of-words layout: a ``docword`` file with the three
header lines ``D``, ``W``, ``NNZ`` followed by ``NNZ`` lines
``docID wordID count`` (1-based), and a vocabulary file with one term per
line. Matrices are written as tab-separated text whose floats use the
shortest repr that round-trips exactly.
"""

import gzip
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .core import CountMatrix
from .errors import (
    CountNonPositive,
    EmptyAfterPrune,
    IndexOutOfRange,
    IoFailure,
    MalformedHeader,
    ShapeMismatch,
    VocabSizeMismatch,
)

_NUMERIC = re.compile(r"[-+]?[\d.,]*\d[\d.,]*")


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Ordered, duplicate-free list of terms; ``index`` maps term to id."""

    terms: Tuple[str, ...]
    index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        terms = tuple(str(t) for t in self.terms)
        for t in terms:
            if not t or any(c in t for c in "\t\n\r"):
                raise ValueError(f"invalid term {t!r}: empty or containing tab/newline")
        index = {t: i for i, t in enumerate(terms)}
        if len(index) != len(terms):
            dup = [t for t, c in Counter(terms).items() if c > 1][:5]
            raise ValueError(f"duplicate terms, e.g. {dup}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "index", index)

    @classmethod
    def default(cls, W):
        """Placeholder terms ``w0 .. w{W-1}``."""
        return cls(tuple(f"w{i}" for i in range(W)))

    def __len__(self):
        return len(self.terms)

    def __getitem__(self, i):
        return self.terms[i]

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.terms == other.terms

    def take(self, rows) -> "Vocabulary":
        return Vocabulary(tuple(self.terms[int(i)] for i in rows))


def load_stopwords() -> FrozenSet[str]:
    """The bundled English stopword list."""
    text = resources.files("geonmf").joinpath("data/stopwords_en.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class PruneRules:
    """Which vocabulary rows :func:`prune` removes.

    The field defaults remove nothing but rare words; use
    :meth:`standard` for the bundled stopword list with numeric and
    single-character terms removed as well.
    """

    stopwords: FrozenSet[str] = frozenset()
    min_term_count: int = 5
    min_doc_count: int = 5
    drop_numeric_and_single_char: bool = False

    def __post_init__(self):
        if self.min_term_count < 0 or self.min_doc_count < 0:
            raise ValueError("thresholds must be nonnegative")
        object.__setattr__(self, "stopwords", frozenset(w.lower() for w in self.stopwords))

    @classmethod
    def standard(cls, **kw):
        kw.setdefault("stopwords", load_stopwords())
        kw.setdefault("drop_numeric_and_single_char", True)
        return cls(**kw)


@dataclass(frozen=True)
class PruneReport:
    """Terms removed by :func:`prune`, keyed by the first rule that hit them.

    Reasons are checked in the order ``stopword``, ``numeric``,
    ``single_char``, ``term_count``, ``doc_freq``.
    """

    dropped: Dict[str, List[str]]
    kept: np.ndarray = field(repr=False)

    @property
    def n_dropped(self):
        return sum(len(v) for v in self.dropped.values())

    def to_dict(self):
        return {
            "kept": int(self.kept.size),
            "dropped": {k: len(v) for k, v in self.dropped.items()},
            "dropped_terms": self.dropped,
        }


_REASONS = ("stopword", "numeric", "single_char", "term_count", "doc_freq")


def prune(X: CountMatrix, vocab: Vocabulary, rules: PruneRules = PruneRules()):
    """Remove vocabulary rows by the rules and reindex the survivors densely.

    Every rule is a property of a single row, so pruning twice changes
    nothing. Documents are kept even if they become empty.

    Returns
    -------
    X_pruned : CountMatrix
    vocab_pruned : Vocabulary
    report : PruneReport

    Raises
    ------
    EmptyAfterPrune
    """
    if len(vocab) != X.W:
        raise VocabSizeMismatch(f"vocabulary has {len(vocab)} terms, matrix has {X.W} rows")
    counts = X.row_sums
    dfreq = X.doc_freq()
    dropped = {r: [] for r in _REASONS}
    keep = []
    for w, term in enumerate(vocab.terms):
        low = term.lower()
        if low in rules.stopwords:
            reason = "stopword"
        elif rules.drop_numeric_and_single_char and _NUMERIC.fullmatch(term):
            reason = "numeric"
        elif rules.drop_numeric_and_single_char and len(term) == 1:
            reason = "single_char"
        elif counts[w] < rules.min_term_count:
            reason = "term_count"
        elif dfreq[w] < rules.min_doc_count:
            reason = "doc_freq"
        else:
            keep.append(w)
            continue
        dropped[reason].append(term)
    if not keep:
        raise EmptyAfterPrune(f"all {X.W} words removed")
    keep = np.asarray(keep, dtype=np.intp)
    Xp = X if keep.size == X.W else X.take_rows(keep)
    return Xp, vocab.take(keep), PruneReport(dropped=dropped, kept=keep)


def _open_text(path, mode):
    path = Path(path)
    try:
        if path.suffix == ".gz":
            return gzip.open(path, mode + "t", encoding="utf-8", newline="\n")
        return open(path, mode, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoFailure(f"cannot open {path}: {exc}") from exc


def _header_int(line, name):
    try:
        v = int(line.strip())
    except (ValueError, AttributeError):
        raise MalformedHeader(f"header line {name} must be an integer, got {line!r}") from None
    if v < 0:
        raise MalformedHeader(f"header value {name} must be nonnegative")
    return v


def read_vocab(path) -> Vocabulary:
    with _open_text(path, "r") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return Vocabulary(tuple(t.rstrip("\r") for t in lines))


def read_uci_bow(docword_path, vocab_path=None) -> Tuple[CountMatrix, Vocabulary]:
    """Parse a UCI bag-of-words corpus.

    The body is streamed into coordinate arrays; no dense matrix is built.
    Gzipped files are read transparently.

    Parameters
    ----------
    docword_path : path
    vocab_path : path, optional
        One term per line. Without it, placeholder terms are used.

    Returns
    -------
    X : CountMatrix, shape (W, D)
    vocab : Vocabulary

    Raises
    ------
    MalformedHeader
        Bad header, wrong number of body lines, a body line without three
        integers, or a repeated (doc, word) pair.
    IndexOutOfRange, CountNonPositive, VocabSizeMismatch, IoFailure
    """
    with _open_text(docword_path, "r") as f:
        D = _header_int(f.readline(), "D")
        W = _header_int(f.readline(), "W")
        NNZ = _header_int(f.readline(), "NNZ")
        if D < 1 or W < 1:
            raise MalformedHeader(f"need D, W >= 1, got D={D}, W={W}")
        docs = np.empty(NNZ, dtype=np.int64)
        words = np.empty(NNZ, dtype=np.int64)
        vals = np.empty(NNZ, dtype=np.int64)
        n = 0
        for lineno, line in enumerate(f, start=4):
            parts = line.split()
            if not parts:
                continue
            if n >= NNZ:
                raise MalformedHeader(f"more than NNZ={NNZ} entries (line {lineno})")
            try:
                if len(parts) != 3:
                    raise ValueError
                d, w, c = map(int, parts)
            except ValueError:
                raise MalformedHeader(
                    f"line {lineno}: expected 'docID wordID count', got {line.strip()!r}"
                ) from None
            if not 1 <= d <= D:
                raise IndexOutOfRange(lineno, f"(docID {d} not in 1..{D})")
            if not 1 <= w <= W:
                raise IndexOutOfRange(lineno, f"(wordID {w} not in 1..{W})")
            if c <= 0:
                raise CountNonPositive(lineno)
            docs[n], words[n], vals[n] = d - 1, w - 1, c
            n += 1
    if n != NNZ:
        raise MalformedHeader(f"header declares NNZ={NNZ} but the body has {n} entries")
    key = words * D + docs
    if np.unique(key).size != n:
        raise MalformedHeader("repeated (docID, wordID) pair")
    X = CountMatrix.from_triplets(words, docs, vals, (W, D))
    if vocab_path is None:
        vocab = Vocabulary.default(W)
    else:
        vocab = read_vocab(vocab_path)
        if len(vocab) != W:
            raise VocabSizeMismatch(f"vocabulary has {len(vocab)} terms, header declares W={W}")
    return X, vocab


def write_vocab(vocab: Vocabulary, path):
    with _open_text(path, "w") as f:
        for t in vocab.terms:
            f.write(t + "\n")


def write_uci_bow(X: CountMatrix, docword_path, vocab: Optional[Vocabulary] = None, vocab_path=None):
    """Write ``X`` in UCI layout, entries ordered by document then word."""
    coo = X.counts.tocoo()
    order = np.lexsort((coo.row, coo.col))
    with _open_text(docword_path, "w") as f:
        f.write(f"{X.M}\n{X.W}\n{X.nnz}\n")
        f.writelines(
            f"{d + 1} {w + 1} {c}\n" for d, w, c in zip(coo.col[order], coo.row[order], coo.data[order])
        )
    if vocab_path is not None:
        if vocab is None:
            vocab = Vocabulary.default(X.W)
        if len(vocab) != X.W:
            raise VocabSizeMismatch(f"vocabulary has {len(vocab)} terms, matrix has {X.W} rows")
        write_vocab(vocab, vocab_path)


def text_to_bow(lines: Sequence[str], vocab: Optional[Vocabulary] = None):
    """Bag of words from one-document-per-line text.

    Tokens are whitespace separated and lowercased; nothing else is done.
    Without ``vocab`` the vocabulary is every token, sorted; with it, unknown
    tokens are ignored.
    """
    docs = [Counter(line.lower().split()) for line in lines]
    if vocab is None:
        vocab = Vocabulary(tuple(sorted(set().union(*docs)) if docs else ()))
    if len(vocab) == 0 or not docs:
        raise EmptyAfterPrune("no tokens in the text")
    rows, cols, vals = [], [], []
    for d, cnt in enumerate(docs):
        for term, c in cnt.items():
            w = vocab.index.get(term)
            if w is not None:
                rows.append(w)
                cols.append(d)
                vals.append(c)
    X = CountMatrix.from_triplets(
        np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64), np.asarray(vals, dtype=np.int64),
        (len(vocab), len(docs)),
    )
    return X, vocab


def convert_text(text_path, docword_path, vocab_path):
    """Convert a raw text file to a UCI corpus; returns ``(X, vocab)``."""
    with _open_text(text_path, "r") as f:
        lines = f.read().splitlines()
    X, vocab = text_to_bow(lines)
    write_uci_bow(X, docword_path, vocab, vocab_path)
    return X, vocab


def write_matrix(path, A, row_names: Sequence[str], col_names: Sequence[str], corner="word"):
    """Write a labelled float matrix as TSV with exact float reprs."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape != (len(row_names), len(col_names)):
        raise ShapeMismatch(f"matrix {A.shape} vs {len(row_names)} x {len(col_names)} labels")
    with _open_text(path, "w") as f:
        f.write("\t".join([corner, *col_names]) + "\n")
        for name, row in zip(row_names, A):
            f.write(name + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path):
    """Inverse of :func:`write_matrix`: ``(A, row_names, col_names)``."""
    with _open_text(path, "r") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedHeader(f"{path} is empty")
    cols = lines[0].split("\t")[1:]
    names, data = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != len(cols) + 1:
            raise ShapeMismatch(f"{path} line {lineno}: {len(parts) - 1} values, expected {len(cols)}")
        names.append(parts[0])
        try:
            data.append([float(v) for v in parts[1:]])
        except ValueError:
            raise MalformedHeader(f"{path} line {lineno}: non-numeric value") from None
    A = np.array(data, dtype=np.float64).reshape(len(names), len(cols))
    return A, names, cols


def topic_names(K):
    return [f"topic_{k}" for k in range(K)]


def top_words(beta_hat, top_n):
    """Word ids of each column by descending weight, ties by lower id."""
    beta_hat = np.asarray(beta_hat)
    W = beta_hat.shape[0]
    idx = np.arange(W)
    return [np.lexsort((idx, -beta_hat[:, k]))[:top_n] for k in range(beta_hat.shape[1])]


def summary_path(path):
    path = Path(path)
    return path.with_name(path.name.removesuffix(".tsv") + ".top.tsv")


def write_topics(est, vocab: Vocabulary, path, top_n=10):
    """Write the full estimate and a top-``top_n`` summary next to it.

    The summary has one row per (topic, rank) with the word and its weight.
    Returns the two paths written.
    """
    beta_hat = getattr(est, "beta_hat", est)
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    if len(vocab) != beta_hat.shape[0]:
        raise VocabSizeMismatch(f"vocabulary has {len(vocab)} terms, estimate has {beta_hat.shape[0]} rows")
    K = beta_hat.shape[1]
    write_matrix(path, beta_hat, vocab.terms, topic_names(K))
    spath = summary_path(path)
    with _open_text(spath, "w") as f:
        f.write("topic\trank\tword\tweight\n")
        for k, ids in enumerate(top_words(beta_hat, top_n)):
            for r, w in enumerate(ids):
                f.write(f"{k}\t{r + 1}\t{vocab.terms[w]}\t{float(beta_hat[w, k])!r}\n")
    return Path(path), spath


def read_topics(path) -> Tuple[np.ndarray, Vocabulary]:
    A, names, _ = read_matrix(path)
    return A, Vocabulary(tuple(names))


def write_labels(path, labels, header=("word", "label")):
    """Two-column integer TSV, e.g. word to topic or cluster id."""
    with _open_text(path, "w") as f:
        f.write("\t".join(header) + "\n")
        for w, lab in enumerate(np.asarray(labels)):
            f.write(f"{w}\t{int(lab)}\n")


def read_labels(path) -> np.ndarray:
    with _open_text(path, "r") as f:
        lines = f.read().splitlines()[1:]
    out = np.empty(len(lines), dtype=np.intp)
    for i, line in enumerate(lines):
        w, lab = line.split("\t")
        if int(w) != i:
            raise MalformedHeader(f"{path}: rows must be listed in order")
        out[i] = int(lab)
    return out
