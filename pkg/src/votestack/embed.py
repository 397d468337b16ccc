"""Pre-trained embeddings in word2vec/fastText text format and sequence encoding."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError

PAD = 0
OOV = 1


@dataclass(frozen=True)
class EmbeddingTable:
    vocab: dict
    matrix: np.ndarray
    sha256: str = ""

    @property
    def dim(self):
        return self.matrix.shape[1]

    def __len__(self):
        return len(self.vocab)

    def lookup(self, token):
        return self.vocab.get(token, OOV)


@dataclass(frozen=True)
class EncodedSequence:
    indices: tuple
    true_length: int


def load_embeddings(path, oov="mean", seed=0):
    """Parse a ``<vocab_size> <dim>`` headed text file.

    Row 0 is the all-zero PAD vector and row 1 the OOV vector: the mean of
    the loaded vectors by default, or ``oov="uniform"`` for a seeded
    uniform draw in [-0.25, 0.25].
    """
    path = Path(path)
    raw = path.read_bytes()
    lines = raw.decode("utf-8").split("\n")
    head = lines[0].split()
    if len(head) != 2 or not all(h.lstrip("-").isdigit() for h in head):
        raise FormatError("header must be '<vocab_size> <dim>'", line=1)
    size, dim = int(head[0]), int(head[1])
    if dim <= 0:
        raise ArgumentError(f"embedding dim must be positive, got {dim}")
    if size < 0:
        raise FormatError("negative vocabulary size", line=1)
    vocab = {}
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if len(rows) >= size:
            break
        line = line.rstrip("\r").rstrip(" ")
        if not line:
            continue
        parts = line.split(" ")
        if len(parts) != dim + 1:
            raise FormatError(f"expected {dim} values, found {len(parts) - 1}", line=lineno)
        try:
            vec = [float(v) for v in parts[1:]]
        except ValueError:
            raise FormatError("non-numeric vector value", line=lineno) from None
        token = parts[0]
        if token in vocab:
            continue
        vocab[token] = len(rows) + 2
        rows.append(vec)
    body = np.asarray(rows, dtype=np.float64).reshape(len(rows), dim)
    if oov == "mean":
        oov_vec = body.mean(axis=0) if len(rows) else np.zeros(dim)
    elif oov == "uniform":
        oov_vec = np.random.default_rng(seed).uniform(-0.25, 0.25, size=dim)
    else:
        raise ArgumentError(f"unknown OOV initialisation {oov!r}")
    matrix = np.vstack([np.zeros((1, dim)), oov_vec[None, :], body])
    matrix.setflags(write=False)
    return EmbeddingTable(vocab, matrix, hashlib.sha256(raw).hexdigest())


def write_embeddings(path, vectors):
    """Write ``{token: vector}`` in the text format ``load_embeddings`` reads."""
    vectors = dict(vectors)
    dim = len(next(iter(vectors.values()))) if vectors else 0
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(vectors)} {dim}\n")
        for token, vec in vectors.items():
            fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def encode_sequence(tokens, table, max_len):
    if max_len < 1:
        raise ArgumentError(f"max_len must be at least 1, got {max_len}")
    kept = [table.lookup(t) for t in list(tokens)[:max_len]]
    return EncodedSequence(tuple(kept + [PAD] * (max_len - len(kept))), len(kept))


def suggest_max_len(dataset, percentile=0.95):
    """Smallest length covering at least ``percentile`` of the token sequences."""
    if not dataset:
        raise ArgumentError("cannot suggest a length for an empty dataset")
    if not 0.0 < percentile <= 1.0:
        raise ArgumentError(f"percentile must lie in (0, 1], got {percentile}")
    lengths = sorted(len(t) for t in dataset)
    rank = max(1, math.ceil(percentile * len(lengths) - 1e-9))
    return max(1, lengths[rank - 1])
