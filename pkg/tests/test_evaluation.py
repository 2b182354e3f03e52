import numpy as np
import pytest

from adrx.corpus import AnnotatedSequence, Corpus, Label, Span, pad
from adrx.embedding import EmbeddingTable
from adrx.evaluation import (
    FoldSummary,
    MatchReport,
    adr_spans,
    approx_match,
    combine_reports,
    corpus_report,
    dump_predictions,
    evaluate_run,
    exact_match,
    format_fold_table,
    format_report,
    kfold_split,
)
from adrx.transducer import init_params


def spans(*bounds, kind=Label.I_ADR):
    return [Span(s, e, kind) for s, e in bounds]


def brute_force_report(predicted, gold):
    mp = 0
    for p in predicted:
        hit = False
        for g in gold:
            shared = set(range(p.start, p.end + 1)) & set(range(g.start, g.end + 1))
            if shared:
                hit = True
        mp += int(hit)
    mg = 0
    for g in gold:
        hit = False
        for p in predicted:
            shared = set(range(p.start, p.end + 1)) & set(range(g.start, g.end + 1))
            if shared:
                hit = True
        mg += int(hit)
    return MatchReport(mp, mg, len(predicted), len(gold))


def random_spans(rng, max_spans=10, max_len=30):
    out = []
    cursor = 0
    for _ in range(rng.integers(0, max_spans + 1)):
        start = cursor + int(rng.integers(0, 4))
        end = start + int(rng.integers(0, 4))
        if end >= max_len:
            break
        out.append(Span(start, end, Label.I_ADR))
        cursor = end + 2
    return out


class TestApproxMatch:
    def test_partial_overlap_counts(self):
        report = approx_match(spans((2, 4)), spans((2, 3)))
        assert (report.matched_predicted, report.matched_gold) == (1, 1)
        assert report.precision == report.recall == report.f1 == 1.0

    def test_disjoint_spans(self):
        report = approx_match(spans((0, 0)), spans((3, 4)))
        assert report.precision == 0.0
        assert report.recall == 0.0
        assert report.f1 == 0.0

    def test_one_prediction_covers_two_gold(self):
        report = approx_match(spans((1, 5)), spans((1, 2), (4, 5)))
        assert report.matched_predicted == 1
        assert report.matched_gold == 2
        assert report.precision == 1.0
        assert report.recall == 1.0

    def test_empty_sides(self):
        report = approx_match([], spans((0, 1)))
        assert report.precision == 0.0
        assert report.recall == 0.0
        report = approx_match(spans((0, 1)), [])
        assert report.precision == 0.0

    def test_matches_bruteforce_on_random_instances(self):
        rng = np.random.default_rng(123)
        for _ in range(1000):
            predicted = random_spans(rng)
            gold = random_spans(rng)
            got = approx_match(predicted, gold)
            want = brute_force_report(predicted, gold)
            assert got == want

    def test_exact_match_dominated_by_approx(self):
        rng = np.random.default_rng(321)
        for _ in range(300):
            predicted = random_spans(rng)
            gold = random_spans(rng)
            approx = approx_match(predicted, gold)
            exact = exact_match(predicted, gold)
            assert exact.matched_predicted <= approx.matched_predicted
            assert exact.matched_gold <= approx.matched_gold
            assert exact.f1 <= approx.f1 + 1e-12

    def test_combine_sums_counts_before_metrics(self):
        a = MatchReport(1, 1, 2, 1)
        b = MatchReport(0, 0, 0, 1)
        merged = combine_reports([a, b])
        assert merged == MatchReport(1, 1, 2, 2)
        assert merged.precision == 0.5
        assert merged.recall == 0.5

    def test_f1_harmonic_mean_bounds(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            report = brute_force_report(random_spans(rng), random_spans(rng))
            p, r, f1 = report.precision, report.recall, report.f1
            assert 0.0 <= p <= 1.0 and 0.0 <= r <= 1.0
            if p > 0 and r > 0:
                assert min(p, r) - 1e-12 <= f1 <= max(p, r) + 1e-12
            else:
                assert f1 == 0.0

    def test_counts_validated(self):
        with pytest.raises(ValueError):
            MatchReport(2, 0, 1, 0)


class TestAdrSpans:
    def test_filters_other_spans(self):
        labels = [Label.I_OTHER, Label.O, Label.I_ADR, Label.I_ADR, Label.PAD]
        assert adr_spans(labels) == [Span(2, 3, Label.I_ADR)]


class TestKfold:
    def small_corpus(self, n=10):
        seqs = [
            AnnotatedSequence([f"t{i}", "x"], [Label.O, Label.O], 2, f"s{i}")
            for i in range(n)
        ]
        return pad(seqs, 2)

    def test_ten_folds_of_one(self):
        folds = kfold_split(self.small_corpus(10), 10, seed=1)
        assert len(folds) == 10
        assert all(len(test.examples) == 1 for _, test in folds)
        assert all(len(train.examples) == 9 for train, _ in folds)

    def test_partition_property(self):
        corpus = self.small_corpus(13)
        folds = kfold_split(corpus, 4, seed=2)
        seen = []
        for _, test in folds:
            seen.extend(s.source_id for s in test.examples)
        assert sorted(seen) == sorted(s.source_id for s in corpus.examples)
        assert len(set(seen)) == len(seen)

    def test_seed_determinism(self):
        corpus = self.small_corpus(12)
        a = kfold_split(corpus, 3, seed=7)
        b = kfold_split(corpus, 3, seed=7)
        for (tr_a, te_a), (tr_b, te_b) in zip(a, b):
            assert [s.source_id for s in tr_a.examples] == [
                s.source_id for s in tr_b.examples
            ]
            assert [s.source_id for s in te_a.examples] == [
                s.source_id for s in te_b.examples
            ]

    def test_too_few_examples(self):
        with pytest.raises(ValueError, match="folds"):
            kfold_split(self.small_corpus(5), 10, seed=0)


class TestFoldSummary:
    def report_with_f1(self, p, r):
        # counts out of 100 to hit the requested precision/recall exactly
        return MatchReport(int(p * 100), int(r * 100), 100, 100)

    def test_identical_folds_zero_std(self):
        reports = [self.report_with_f1(0.5, 0.5)] * 3
        summary = FoldSummary.from_reports(reports)
        assert summary.std_f1 == 0.0
        assert summary.mean_f1 == pytest.approx(0.5)

    def test_two_fold_mean_and_std(self):
        reports = [self.report_with_f1(0.7, 0.7), self.report_with_f1(0.8, 0.8)]
        summary = FoldSummary.from_reports(reports)
        assert summary.mean_f1 == pytest.approx(0.75)
        assert summary.std_f1 == pytest.approx(0.070710678, abs=1e-6)

    def test_needs_two_folds(self):
        with pytest.raises(ValueError, match="2 folds"):
            FoldSummary.from_reports([self.report_with_f1(0.5, 0.5)])

    def test_format_tables(self):
        reports = [self.report_with_f1(0.7, 0.7), self.report_with_f1(0.8, 0.8)]
        summary = FoldSummary.from_reports(reports)
        table = format_fold_table(summary)
        lines = table.strip().split("\n")
        assert lines[0] == "fold\tprecision\trecall\tf1"
        assert len(lines) == 1 + 2 + 2
        report = format_report([("baseline", summary)])
        assert "0.7500±0.0707" in report


class TestEvaluateRun:
    def test_all_o_model_scores_zero(self):
        table = EmbeddingTable.random(4, oov_seed=2)
        params = init_params("lstm", 4, 3, seed=0)
        for arr in params.arrays().values():
            arr[:] = 0.0
        params.b_out[:] = [0.0, 0.0, 30.0, 0.0]  # always predicts O
        seqs = [
            AnnotatedSequence(
                ["a", "b"], [Label.I_ADR, Label.O], 2, f"s{i}"
            )
            for i in range(4)
        ]
        corpus = pad(seqs, 2)
        folds = [
            Corpus(corpus.examples[:2], 2),
            Corpus(corpus.examples[2:], 2),
        ]
        summary = evaluate_run([params, params], table, folds)
        assert summary.mean_precision == 0.0
        assert summary.mean_recall == 0.0
        assert summary.mean_f1 == 0.0

    def test_oracle_like_model_scores_one(self):
        # b_out saturated toward I-ADR and gold all I-ADR: every span matches.
        table = EmbeddingTable.random(4, oov_seed=2)
        params = init_params("gru", 4, 3, seed=0)
        for arr in params.arrays().values():
            arr[:] = 0.0
        params.b_out[:] = [30.0, 0.0, 0.0, 0.0]
        seqs = [
            AnnotatedSequence(["a", "b"], [Label.I_ADR, Label.I_ADR], 2, f"s{i}")
            for i in range(4)
        ]
        corpus = pad(seqs, 2)
        report = corpus_report(params, table, corpus)
        assert report.precision == 1.0
        assert report.recall == 1.0

    def test_one_model_per_fold_required(self):
        table = EmbeddingTable.random(4, oov_seed=2)
        params = init_params("lstm", 4, 3, seed=0)
        with pytest.raises(ValueError, match="per test fold"):
            evaluate_run([params], table, [])


class TestDumpPredictions:
    def test_column_format(self, tmp_path):
        table = EmbeddingTable.random(4, oov_seed=2)
        params = init_params("lstm", 4, 3, seed=0)
        seqs = [
            AnnotatedSequence(["aa", "bb"], [Label.I_ADR, Label.O], 2, "s0"),
            AnnotatedSequence(["cc"], [Label.O], 1, "s1"),
        ]
        corpus = pad(seqs, 3)
        out = tmp_path / "preds.tsv"
        dump_predictions(params, table, corpus, out)
        blocks = out.read_text().strip().split("\n\n")
        assert len(blocks) == 2
        first = blocks[0].split("\n")
        assert len(first) == 2  # only real positions, no padding rows
        token, gold, predicted = first[0].split("\t")
        assert token == "aa"
        assert gold == "I-ADR"
        assert predicted in {"I-ADR", "I-Other", "O", "PAD"}
