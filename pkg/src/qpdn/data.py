"""Corpus loading, tokenisation, vocabulary, pretrained amplitudes, IDF and CV folds."""
from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

OOV = "<oov>"
HOLDOUT = -1
_TOKEN = re.compile(r"\w+|[^\w\s]")


class DataError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase; every punctuation character becomes its own token."""
    return _TOKEN.findall(text.lower())


@dataclass
class Vocabulary:
    itos: list[str]
    doc_freq: np.ndarray
    n_docs: int
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise DataError("duplicate tokens in vocabulary")
        if self.itos[0] != OOV:
            raise DataError("id 0 is reserved for the OOV token")

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, 0) for t in tokens]


def build_vocab(corpus: Sequence[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Ids by descending frequency, ties broken lexicographically; id 0 is OOV.

    ``corpus`` is a sequence of tokenised documents.  Document frequencies of
    dropped tokens are pooled into the OOV entry.
    """
    if min_count < 1:
        raise DataError("min_count must be >= 1")
    if len(corpus) == 0:
        raise DataError("empty corpus")
    counts = Counter(t for doc in corpus for t in doc)
    kept = sorted((t for t, c in counts.items() if c >= min_count and t != OOV), key=lambda t: (-counts[t], t))
    itos = [OOV] + kept
    stoi = {t: i for i, t in enumerate(itos)}
    df = np.zeros(len(itos), dtype=np.int64)
    for doc in corpus:
        for i in {stoi.get(t, 0) for t in doc}:
            df[i] += 1
    return Vocabulary(itos, df, len(corpus))


def idf_weights(corpus: Sequence[Sequence[str]] | None, vocab: Vocabulary) -> np.ndarray:
    """Smoothed IDF, ``ln((1 + N) / (1 + df)) + 1``, one value per vocabulary id.

    With ``corpus=None`` the document frequencies stored in ``vocab`` are used.
    """
    if corpus is None:
        df, n_docs = vocab.doc_freq, vocab.n_docs
    else:
        df = np.zeros(len(vocab), dtype=np.int64)
        for doc in corpus:
            for i in set(vocab.encode(doc)):
                df[i] += 1
        n_docs = len(corpus)
    return np.log((1.0 + n_docs) / (1.0 + df)) + 1.0


@dataclass
class PretrainedInit:
    amplitudes: np.ndarray  # (n, |V|), unit columns
    phase_offsets: np.ndarray | None  # pi where the source component was negative
    found: int
    vocab_size: int

    @property
    def coverage(self) -> float:
        return self.found / self.vocab_size


def load_pretrained(path: str | Path, vocab: Vocabulary, n: int, sign_mode: str = "abs") -> PretrainedInit:
    """Amplitude table from a text vector file (``token v1 ... vn`` per line).

    Amplitudes are the L2-normalised absolute values of the components.  With
    ``sign_mode="phase"`` negative components additionally contribute a phase
    offset of pi.  Words missing from the file get ``1/sqrt(n)`` everywhere.
    An optional word2vec-style ``count dim`` header line is skipped.
    """
    if sign_mode not in ("abs", "phase"):
        raise DataError(f"unknown sign_mode {sign_mode!r}")
    amp = np.full((n, len(vocab)), 1.0 / math.sqrt(n))
    offsets = np.zeros((n, len(vocab))) if sign_mode == "phase" else None
    seen = np.zeros(len(vocab), dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").rstrip().split(" ")
            if not parts or parts == [""]:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            if len(parts) != n + 1:
                raise DataError(f"{path}:{lineno}: expected {n} components, found {len(parts) - 1}")
            idx = vocab.stoi.get(parts[0])
            if idx is None or idx == 0 or seen[idx]:
                continue
            try:
                vec = np.array(parts[1:], dtype=float)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed vector ({exc})") from None
            norm = np.linalg.norm(vec)
            if not np.isfinite(norm) or norm == 0:
                continue
            amp[:, idx] = np.abs(vec) / norm
            if offsets is not None:
                offsets[:, idx] = np.where(vec < 0, np.pi, 0.0)
            seen[idx] = True
    found = int(seen.sum())
    log.info("pretrained vectors cover %d / %d vocabulary entries", found, len(vocab))
    return PretrainedInit(amp, offsets, found, len(vocab))


@dataclass
class Dataset:
    """Encoded sentences with labels.

    ``folds`` holds a fold number per example (0..k-1) or ``HOLDOUT`` for
    examples set aside as a fixed test split.
    """

    sentences: list[list[int]]
    labels: np.ndarray
    label_names: list[str]
    vocab: Vocabulary
    folds: np.ndarray | None = None
    source: str = ""

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            [self.sentences[i] for i in idx],
            self.labels[idx],
            self.label_names,
            self.vocab,
            None if self.folds is None else self.folds[idx],
            self.source,
        )


def read_labeled(path: str | Path, fmt: str = "tsv") -> tuple[list[str], list[str]]:
    """Raw ``(labels, texts)`` from a ``label<TAB>text`` UTF-8 file."""
    if fmt != "tsv":
        raise DataError(f"unsupported dataset format {fmt!r}")
    labels, texts = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            label, sep, text = line.partition("\t")
            if not sep or not label.strip():
                raise DataError(f"{path}:{lineno}: expected 'label<TAB>text'")
            labels.append(label.strip())
            texts.append(text)
    if not labels:
        raise DataError(f"{path}: no examples")
    return labels, texts


def load_dataset(
    path: str | Path,
    fmt: str = "tsv",
    *,
    vocab: Vocabulary | None = None,
    label_names: Sequence[str] | None = None,
    min_count: int = 1,
) -> Dataset:
    """Parse a dataset file.

    Without ``vocab``/``label_names`` both are built from the file (labels in
    first-seen order).  Passing them puts the loader in evaluation mode: an
    unseen label is an error and unseen words map to OOV.
    """
    raw_labels, texts = read_labeled(path, fmt)
    tokens = [tokenize(t) for t in texts]
    if label_names is None:
        names = list(dict.fromkeys(raw_labels))
    else:
        names = list(label_names)
        unknown = sorted(set(raw_labels) - set(names))
        if unknown:
            raise DataError(f"{path}: labels {unknown} not in {names}")
    if vocab is None:
        vocab = build_vocab(tokens, min_count)
    lut = {name: i for i, name in enumerate(names)}
    # empty texts become a lone OOV token so every sentence has a state
    sentences = [vocab.encode(t) or [0] for t in tokens]
    labels = np.array([lut[l] for l in raw_labels], dtype=np.int64)
    return Dataset(sentences, labels, names, vocab, None, str(path))


def cv_splits(n_examples: int | Dataset, k: int = 10, seed: int = 0) -> np.ndarray:
    """Fold id per example: seeded shuffle, then contiguous near-equal folds."""
    n = len(n_examples) if isinstance(n_examples, Dataset) else int(n_examples)
    if k < 2:
        raise DataError("need at least 2 folds")
    if k > n:
        raise DataError(f"{k} folds requested for {n} examples")
    order = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    for f, chunk in enumerate(np.array_split(order, k)):
        folds[chunk] = f
    return folds
