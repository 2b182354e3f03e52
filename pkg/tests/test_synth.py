import pytest

from adrx.corpus import (
    Label,
    lexicon_filter,
    load_labeled,
    load_lexicon,
    load_unlabeled,
)
from adrx.errors import ConfigError
from adrx.synth import SynthConfig, generate, write_synth


class TestConfigValidation:
    def test_sizes_must_be_positive(self):
        with pytest.raises(ConfigError, match="n_labeled"):
            SynthConfig(n_labeled=0)

    def test_length_range_ordered(self):
        with pytest.raises(ConfigError, match="len_min"):
            SynthConfig(len_min=10, len_max=9)

    def test_len_min_fits_core(self):
        with pytest.raises(ConfigError, match="len_min"):
            SynthConfig(len_min=3, len_max=20)

    def test_rates_bounded(self):
        with pytest.raises(ConfigError, match="decoy_rate"):
            SynthConfig(decoy_rate=1.5)

    def test_phrase_inventory_must_be_drawable(self):
        with pytest.raises(ConfigError, match="distinct phrases"):
            generate(SynthConfig(adr_vocab=1, n_adr_phrases=10))


@pytest.fixture(scope="module")
def data():
    return generate(SynthConfig(n_labeled=30, n_unlabeled=40, seed=3))


class TestGenerate:
    def test_counts(self, data):
        assert len(data.labeled) == 30
        assert len(data.unlabeled_texts) == 40

    def test_lengths_within_range(self, data):
        cfg = SynthConfig()
        for seq in data.labeled:
            assert cfg.len_min <= len(seq.tokens) <= cfg.len_max
        for text in data.unlabeled_texts:
            assert cfg.len_min <= len(text.split()) <= cfg.len_max

    def test_every_labeled_has_drug_and_adr_span(self, data):
        drugs = set(data.drug_names)
        for seq in data.labeled:
            assert drugs & set(seq.tokens)
            assert Label.I_ADR in seq.labels

    def test_adr_labels_only_after_drug(self, data):
        drugs = set(data.drug_names)
        for seq in data.labeled:
            first_drug = min(
                i for i, tok in enumerate(seq.tokens) if tok in drugs
            )
            for i, label in enumerate(seq.labels):
                if label == Label.I_ADR:
                    assert i > first_drug

    def test_decoys_exist_somewhere(self, data):
        # With decoy_rate 0.35 over 30 sequences some decoy must appear:
        # an adr-vocab token labeled O.
        decoys = 0
        for seq in data.labeled:
            for token, label in zip(seq.tokens, seq.labels):
                if token.startswith("adr") and label == Label.O:
                    decoys += 1
        assert decoys > 0

    def test_seed_determinism(self):
        cfg = SynthConfig(n_labeled=10, n_unlabeled=10, seed=77)
        a = generate(cfg)
        b = generate(cfg)
        assert [s.tokens for s in a.labeled] == [s.tokens for s in b.labeled]
        assert [s.labels for s in a.labeled] == [s.labels for s in b.labeled]
        assert a.unlabeled_texts == b.unlabeled_texts
        assert a.adr_phrases == b.adr_phrases


class TestWriteAndReload:
    def test_round_trips_through_loaders(self, tmp_path):
        cfg = SynthConfig(n_labeled=12, n_unlabeled=25, seed=5)
        data = generate(cfg)
        paths = write_synth(data, tmp_path)
        corpus = load_labeled(paths["labeled"])
        assert len(corpus) == 12
        reloaded = [s.tokens for s in corpus.examples]
        assert reloaded == [s.tokens for s in data.labeled]
        assert [s.labels for s in corpus.examples] == [
            s.labels for s in data.labeled
        ]
        pool = load_unlabeled(paths["unlabeled"])
        assert len(pool) == 25
        assert pool[0].tokens == data.unlabeled_texts[0].split()

    def test_labeled_passes_lexicon_filter(self, tmp_path):
        data = generate(SynthConfig(n_labeled=20, n_unlabeled=5, seed=6))
        paths = write_synth(data, tmp_path)
        lexicon = load_lexicon(paths["drug_lexicon"], paths["adr_lexicon"])
        corpus = load_labeled(paths["labeled"])
        kept = lexicon_filter(corpus.examples, lexicon)
        assert len(kept) == len(corpus.examples)

    def test_unlabeled_passes_lexicon_filter(self, tmp_path):
        data = generate(SynthConfig(n_labeled=5, n_unlabeled=20, seed=6))
        paths = write_synth(data, tmp_path)
        lexicon = load_lexicon(paths["drug_lexicon"], paths["adr_lexicon"])
        pool = load_unlabeled(paths["unlabeled"])
        assert len(lexicon_filter(pool, lexicon)) == len(pool)

    def test_byte_identical_for_fixed_seed(self, tmp_path):
        cfg = SynthConfig(n_labeled=8, n_unlabeled=8, seed=11)
        first = tmp_path / "a"
        second = tmp_path / "b"
        paths_a = write_synth(generate(cfg), first)
        paths_b = write_synth(generate(cfg), second)
        for key in paths_a:
            assert paths_a[key].read_bytes() == paths_b[key].read_bytes()
