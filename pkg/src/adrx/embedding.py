"""Frozen per-view word embedding tables with a deterministic OOV policy."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from adrx.corpus import PAD_TOKEN, URL_TOKEN, USER_TOKEN, AnnotatedSequence
from adrx.errors import ConfigError, DataFormatError

OOV_RANGE = 0.25

RANDOM_SOURCE = "random"

CELL_KINDS = ("lstm", "gru")

# Each named view pins one cell architecture: view1 is the generic-tweet
# LSTM view, view2 the domain-tweet GRU view.
VIEW_CELLS = {"view1": "lstm", "view2": "gru"}


def _token_seed(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass
class EmbeddingTable:
    """Word-to-vector lookup, frozen during training.

    Unknown tokens resolve to a pseudo-random vector drawn uniform in
    [-0.25, 0.25]^dim from a PCG64 generator seeded by (oov_seed, token
    hash), so lookups are reproducible across runs and platforms. OOV
    vectors are cached; because the cached value is the deterministic
    function of the key, concurrent first lookups under CPython are safe
    (writes are idempotent).

    ``<pad>`` always resolves to the zero vector and ``<url>`` / ``<user>``
    always resolve.
    """

    dim: int
    vectors: dict[str, np.ndarray]
    oov_seed: int = 0
    _oov_cache: dict[str, np.ndarray] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"embedding dim must be >= 1, got {self.dim}")
        if self.oov_seed < 0:
            raise ValueError("oov_seed must be non-negative")
        for word, vec in self.vectors.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (self.dim,):
                raise ValueError(
                    f"vector for {word!r} has shape {vec.shape}, "
                    f"expected ({self.dim},)"
                )
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"vector for {word!r} has non-finite entries")
            self.vectors[word] = vec
        self.vectors[PAD_TOKEN] = np.zeros(self.dim)
        for token in (URL_TOKEN, USER_TOKEN):
            if token not in self.vectors:
                self.vectors[token] = self._oov_vector(token)

    @classmethod
    def random(cls, dim: int, oov_seed: int = 0) -> "EmbeddingTable":
        """Table with no stored vectors: every word resolves via OOV policy."""
        return cls(dim, {}, oov_seed)

    def _oov_vector(self, token: str) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.oov_seed, _token_seed(token)])
        )
        return rng.uniform(-OOV_RANGE, OOV_RANGE, self.dim)

    def lookup(self, token: str) -> np.ndarray:
        vec = self.vectors.get(token)
        if vec is not None:
            return vec
        vec = self._oov_cache.get(token)
        if vec is None:
            vec = self._oov_vector(token)
            self._oov_cache[token] = vec
        return vec


def load_embedding_table(
    path: str | Path, dim: int, oov_seed: int = 0
) -> EmbeddingTable:
    """Read a textual word-vector file: header ``count dim``, then one
    ``word v1 .. v_dim`` line per word. The declared dim must match."""
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 2 or not all(p.lstrip("-").isdigit() for p in header):
            raise DataFormatError(f"{path}:1: expected header '<count> <dim>'")
        file_dim = int(header[1])
        if file_dim != dim:
            raise DataFormatError(
                f"{path}: expected dimension {dim}, file declares {file_dim}"
            )
        for lineno, line in enumerate(handle, start=2):
            parts = line.split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {dim} values, found {len(values)}"
                )
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise DataFormatError(
                    f"{path}:{lineno}: non-numeric vector component"
                ) from None
            if not np.all(np.isfinite(vec)):
                raise DataFormatError(f"{path}:{lineno}: non-finite vector component")
            vectors[word] = vec
    return EmbeddingTable(dim, vectors, oov_seed)


def peek_embedding_dim(path: str | Path) -> int:
    """Read just the declared dimension from a word-vector file header."""
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().split()
    if len(header) != 2 or not header[1].isdigit():
        raise DataFormatError(f"{path}:1: expected header '<count> <dim>'")
    return int(header[1])


@dataclass(frozen=True)
class ViewSpec:
    """One co-training view: an embedding source paired with a cell kind."""

    name: str
    embedding_source: str = RANDOM_SOURCE
    embedding_dim: int = 400
    cell_kind: str = "lstm"
    oov_seed: int = 0

    def __post_init__(self) -> None:
        if self.name not in VIEW_CELLS:
            raise ConfigError(f"view name must be one of {sorted(VIEW_CELLS)}")
        if self.cell_kind != VIEW_CELLS[self.name]:
            raise ConfigError(
                f"{self.name} must use the {VIEW_CELLS[self.name]} cell, "
                f"got {self.cell_kind!r}"
            )
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")

    @classmethod
    def view1(
        cls,
        embedding_source: str = RANDOM_SOURCE,
        embedding_dim: int = 400,
        oov_seed: int = 0,
    ) -> "ViewSpec":
        return cls("view1", embedding_source, embedding_dim, "lstm", oov_seed)

    @classmethod
    def view2(
        cls,
        embedding_source: str = RANDOM_SOURCE,
        embedding_dim: int = 300,
        oov_seed: int = 0,
    ) -> "ViewSpec":
        return cls("view2", embedding_source, embedding_dim, "gru", oov_seed)

    def load_table(self) -> EmbeddingTable:
        if self.embedding_source == RANDOM_SOURCE:
            return EmbeddingTable.random(self.embedding_dim, self.oov_seed)
        try:
            return load_embedding_table(
                self.embedding_source, self.embedding_dim, self.oov_seed
            )
        except FileNotFoundError as exc:
            raise ConfigError(
                f"{self.name}: embedding file not found: {self.embedding_source}"
            ) from exc
        except DataFormatError as exc:
            raise ConfigError(f"{self.name}: {exc}") from exc


def embed_tokens(table: EmbeddingTable, tokens: Sequence[str]) -> np.ndarray:
    """Stack token vectors into a (len(tokens), dim) array."""
    out = np.empty((len(tokens), table.dim))
    for i, token in enumerate(tokens):
        out[i] = table.lookup(token)
    return out


def embed_batch(
    table: EmbeddingTable, sequences: Sequence[AnnotatedSequence]
) -> np.ndarray:
    """Stack equal-length sequences into a (batch, steps, dim) array."""
    if not sequences:
        raise ValueError("empty batch")
    length = len(sequences[0].tokens)
    out = np.empty((len(sequences), length, table.dim))
    for b, seq in enumerate(sequences):
        if len(seq.tokens) != length:
            raise ValueError("sequences in a batch must share one padded length")
        for t, token in enumerate(seq.tokens):
            out[b, t] = table.lookup(token)
    return out
