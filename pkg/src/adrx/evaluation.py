"""Approximate-match precision/recall/F1 over ADR spans and the k-fold
cross-validation harness reporting mean and standard deviation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from adrx.corpus import (
    LABEL_STRINGS,
    AnnotatedSequence,
    Corpus,
    Label,
    Span,
    labels_to_spans,
)
from adrx.embedding import EmbeddingTable
from adrx.transducer import TransducerParams, decode, forward_batch


@dataclass(frozen=True)
class MatchReport:
    """Span-level match counts and the metrics derived from them.

    Precision counts predicted spans that overlap at least one gold span;
    recall counts gold spans overlapped by at least one predicted span.
    The two numerators differ so that both ratios stay within [0, 1] under
    one-to-many overlaps.
    """

    matched_predicted: int
    matched_gold: int
    predicted_total: int
    gold_total: int

    def __post_init__(self) -> None:
        if not 0 <= self.matched_predicted <= self.predicted_total:
            raise ValueError("matched_predicted out of range")
        if not 0 <= self.matched_gold <= self.gold_total:
            raise ValueError("matched_gold out of range")

    @property
    def precision(self) -> float:
        if self.predicted_total == 0:
            return 0.0
        return self.matched_predicted / self.predicted_total

    @property
    def recall(self) -> float:
        if self.gold_total == 0:
            return 0.0
        return self.matched_gold / self.gold_total

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        if p + r == 0.0:
            return 0.0
        return 2.0 * p * r / (p + r)


def combine_reports(reports: Iterable[MatchReport]) -> MatchReport:
    """Micro-average: sum counts first, derive metrics afterwards."""
    mp = mg = pt = gt = 0
    for rep in reports:
        mp += rep.matched_predicted
        mg += rep.matched_gold
        pt += rep.predicted_total
        gt += rep.gold_total
    return MatchReport(mp, mg, pt, gt)


def approx_match(
    predicted: Sequence[Span], gold: Sequence[Span]
) -> MatchReport:
    """Relaxed matching: a span matches when it shares at least one token
    position with a span on the other side. Inputs are the ADR spans of
    one sequence."""
    matched_predicted = sum(
        1 for p in predicted if any(p.overlaps(g) for g in gold)
    )
    matched_gold = sum(1 for g in gold if any(g.overlaps(p) for p in predicted))
    return MatchReport(matched_predicted, matched_gold, len(predicted), len(gold))


def exact_match(predicted: Sequence[Span], gold: Sequence[Span]) -> MatchReport:
    """Strict matching on identical boundaries; kept as the comparison
    helper for the dominance property (exact <= approximate)."""
    gold_bounds = {(g.start, g.end) for g in gold}
    predicted_bounds = {(p.start, p.end) for p in predicted}
    matched_predicted = sum(
        1 for p in predicted if (p.start, p.end) in gold_bounds
    )
    matched_gold = sum(1 for g in gold if (g.start, g.end) in predicted_bounds)
    return MatchReport(matched_predicted, matched_gold, len(predicted), len(gold))


def adr_spans(labels: Sequence[Label]) -> list[Span]:
    """The I-ADR spans of a label sequence; I-Other spans are excluded from
    scoring because ADR is the entity of interest."""
    return [span for span in labels_to_spans(labels) if span.kind == Label.I_ADR]


def kfold_split(
    corpus: Corpus, k: int = 10, seed: int = 0
) -> list[tuple[Corpus, Corpus]]:
    """Seeded shuffle followed by k near-equal partitions; fold i tests on
    partition i and trains on the rest."""
    n = len(corpus.examples)
    if n < k:
        raise ValueError(f"cannot split {n} examples into {k} folds")
    if k < 2:
        raise ValueError("k must be >= 2")
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, k)
    folds = []
    for i in range(k):
        test_idx = parts[i]
        train_idx = np.concatenate([parts[j] for j in range(k) if j != i])
        folds.append(
            (
                Corpus([corpus.examples[j] for j in train_idx], corpus.max_length),
                Corpus([corpus.examples[j] for j in test_idx], corpus.max_length),
            )
        )
    return folds


def predict_labels(
    params: TransducerParams,
    table: EmbeddingTable,
    sequences: Sequence[AnnotatedSequence],
    chunk: int = 256,
) -> list[list[Label]]:
    """Decoded label sequences for equal-length inputs."""
    out: list[list[Label]] = []
    for start in range(0, len(sequences), chunk):
        batch = sequences[start : start + chunk]
        probs = forward_batch(params, table, batch)
        out.extend(
            decode(dist, seq.original_length) for seq, dist in zip(batch, probs)
        )
    return out


def corpus_report(
    params: TransducerParams, table: EmbeddingTable, corpus: Corpus
) -> MatchReport:
    """Micro-averaged approximate-match report of one model on one corpus."""
    reports = []
    predictions = predict_labels(params, table, corpus.examples)
    for seq, predicted in zip(corpus.examples, predictions):
        reports.append(approx_match(adr_spans(predicted), adr_spans(seq.labels)))
    return combine_reports(reports)


@dataclass(frozen=True)
class FoldSummary:
    """Per-fold reports plus cross-fold mean and sample standard deviation."""

    reports: tuple[MatchReport, ...]
    mean_precision: float
    std_precision: float
    mean_recall: float
    std_recall: float
    mean_f1: float
    std_f1: float

    @classmethod
    def from_reports(cls, reports: Sequence[MatchReport]) -> "FoldSummary":
        if len(reports) < 2:
            raise ValueError("standard deviation needs at least 2 folds")
        precisions = np.array([r.precision for r in reports])
        recalls = np.array([r.recall for r in reports])
        f1s = np.array([r.f1 for r in reports])
        return cls(
            tuple(reports),
            float(precisions.mean()),
            float(precisions.std(ddof=1)),
            float(recalls.mean()),
            float(recalls.std(ddof=1)),
            float(f1s.mean()),
            float(f1s.std(ddof=1)),
        )


def evaluate_run(
    fold_params: Sequence[TransducerParams],
    table: EmbeddingTable,
    test_folds: Sequence[Corpus],
) -> FoldSummary:
    """Score one trained model per test fold and summarize across folds."""
    if len(fold_params) != len(test_folds):
        raise ValueError("one trained model is required per test fold")
    reports = [
        corpus_report(params, table, fold)
        for params, fold in zip(fold_params, test_folds)
    ]
    return FoldSummary.from_reports(reports)


def format_fold_table(summary: FoldSummary) -> str:
    """Tab-delimited per-fold metrics followed by the mean and std rows."""
    lines = ["fold\tprecision\trecall\tf1"]
    for i, rep in enumerate(summary.reports, start=1):
        lines.append(f"{i}\t{rep.precision:.6f}\t{rep.recall:.6f}\t{rep.f1:.6f}")
    lines.append(
        f"mean\t{summary.mean_precision:.6f}\t{summary.mean_recall:.6f}"
        f"\t{summary.mean_f1:.6f}"
    )
    lines.append(
        f"std\t{summary.std_precision:.6f}\t{summary.std_recall:.6f}"
        f"\t{summary.std_f1:.6f}"
    )
    return "\n".join(lines) + "\n"


def format_report(rows: Iterable[tuple[str, FoldSummary]]) -> str:
    """One line per method in the accuracy-table style: mean +/- std."""
    lines = ["method\tprecision\trecall\tf1"]
    for method, s in rows:
        lines.append(
            f"{method}"
            f"\t{s.mean_precision:.4f}±{s.std_precision:.4f}"
            f"\t{s.mean_recall:.4f}±{s.std_recall:.4f}"
            f"\t{s.mean_f1:.4f}±{s.std_f1:.4f}"
        )
    return "\n".join(lines) + "\n"


def dump_predictions(
    params: TransducerParams,
    table: EmbeddingTable,
    corpus: Corpus,
    path: str | Path,
) -> None:
    """Write TOKEN<TAB>GOLD<TAB>PREDICTED rows for the real positions of
    every sequence, blank-line separated, for external diffing."""
    predictions = predict_labels(params, table, corpus.examples)
    blocks = []
    for seq, predicted in zip(corpus.examples, predictions):
        rows = [
            f"{seq.tokens[t]}\t{LABEL_STRINGS[seq.labels[t]]}"
            f"\t{LABEL_STRINGS[predicted[t]]}"
            for t in range(seq.original_length)
        ]
        blocks.append("\n".join(rows))
    Path(path).write_text("\n\n".join(blocks) + "\n", encoding="utf-8")
