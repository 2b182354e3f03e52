"""Confidence scoring of pseudo-labeled samples for the co-training loop.

A sample's score aggregates the predicted ADR probabilities at the
positions the decoder labeled I-ADR. Samples whose decode contains no
I-ADR position are rejected outright.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from adrx.corpus import AnnotatedSequence, Label
from adrx.embedding import EmbeddingTable
from adrx.transducer import TransducerParams, decode, forward, forward_batch

GEOMETRIC_MEAN = "geometric_mean"
DIVIDE_BY_K = "divide_by_k"
NORMALIZATIONS = (GEOMETRIC_MEAN, DIVIDE_BY_K)


@dataclass
class ScoredSample:
    """A pseudo-labeled sequence with its acceptance score."""

    sequence: AnnotatedSequence
    score: float
    adr_word_count: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        labeled_adr = sum(
            1 for label in self.sequence.labels if label == Label.I_ADR
        )
        if self.adr_word_count != labeled_adr or self.adr_word_count < 1:
            raise ValueError(
                f"adr_word_count {self.adr_word_count} does not match "
                f"{labeled_adr} I-ADR pseudo-labels"
            )


def _validate_tau(tau: float) -> None:
    if not 0 < tau <= 1:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")


def _normalize(probs: np.ndarray, normalization: str) -> float:
    k = probs.shape[0]
    if normalization == GEOMETRIC_MEAN:
        product = float(np.prod(probs))
        if product > 0.0:
            return product ** (1.0 / k)
        # Underflowed product; equivalent log-space path.
        return float(np.exp(np.log(probs).sum() / k))
    if normalization == DIVIDE_BY_K:
        return float(np.prod(probs)) / k
    raise ValueError(f"normalization must be one of {NORMALIZATIONS}")


def score_distribution(
    dist: np.ndarray,
    original_length: int,
    normalization: str = GEOMETRIC_MEAN,
) -> tuple[list[Label], float, int] | None:
    """Decode a step distribution and score its ADR positions.

    Returns (decoded labels, score, adr word count), or None when the
    decode yields no I-ADR position within the real sequence. Under the
    default geometric mean the score is the k-th root of the product of
    the I-ADR probabilities, staying on the scale of a single probability
    for any k; divide_by_k divides the raw product by k instead.
    """
    labels = decode(dist, original_length)
    adr_positions = [
        t for t in range(original_length) if labels[t] == Label.I_ADR
    ]
    if not adr_positions:
        return None
    probs = np.asarray(dist)[adr_positions, int(Label.I_ADR)]
    return labels, _normalize(probs, normalization), len(adr_positions)


def _as_sequence(
    tokens: Sequence[str],
    labels: list[Label],
    original_length: int,
    source_id: str,
) -> AnnotatedSequence:
    # AnnotatedSequence forbids PAD before the padding boundary; the decoder
    # can emit it there early in training, so such positions are stored as O.
    fixed = [
        Label.O if (t < original_length and label == Label.PAD) else label
        for t, label in enumerate(labels)
    ]
    return AnnotatedSequence(list(tokens), fixed, original_length, source_id)


def score_sample(
    params: TransducerParams,
    table: EmbeddingTable,
    tokens: Sequence[str],
    original_length: int,
    tau: float = 0.5,
    normalization: str = GEOMETRIC_MEAN,
) -> ScoredSample | None:
    """Score one padded token sequence under a trained transducer.

    Returns None (reject) when the decode contains no I-ADR label within
    original_length; otherwise a ScoredSample carrying the pseudo-labels.
    The caller decides acceptance by comparing ``score >= tau``.
    """
    _validate_tau(tau)
    dist = forward(params, table, tokens)
    scored = score_distribution(dist, original_length, normalization)
    if scored is None:
        return None
    labels, score, count = scored
    return ScoredSample(_as_sequence(tokens, labels, original_length, ""), score, count)


def score_pool(
    params: TransducerParams,
    table: EmbeddingTable,
    sequences: Sequence[AnnotatedSequence],
    tau: float = 0.5,
    normalization: str = GEOMETRIC_MEAN,
    chunk: int = 256,
) -> list[ScoredSample | None]:
    """score_sample over many equal-length sequences, batching the forward
    passes. Results align with the input order and do not depend on it."""
    _validate_tau(tau)
    results: list[ScoredSample | None] = []
    for start in range(0, len(sequences), chunk):
        batch = sequences[start : start + chunk]
        probs = forward_batch(params, table, batch)
        for seq, dist in zip(batch, probs):
            scored = score_distribution(dist, seq.original_length, normalization)
            if scored is None:
                results.append(None)
                continue
            labels, score, count = scored
            results.append(
                ScoredSample(
                    _as_sequence(seq.tokens, labels, seq.original_length, seq.source_id),
                    score,
                    count,
                )
            )
    return results
