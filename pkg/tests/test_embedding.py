import numpy as np
import pytest

from adrx.corpus import AnnotatedSequence, Label
from adrx.embedding import (
    EmbeddingTable,
    ViewSpec,
    embed_batch,
    embed_tokens,
    load_embedding_table,
    peek_embedding_dim,
)
from adrx.errors import ConfigError, DataFormatError


def write_vectors(path, dim, words):
    lines = [f"{len(words)} {dim}"]
    for i, word in enumerate(words):
        values = " ".join(str(0.1 * (i + 1) + 0.01 * j) for j in range(dim))
        lines.append(f"{word} {values}")
    path.write_text("\n".join(lines) + "\n")


class TestLoadTable:
    def test_loads_words_plus_reserved(self, tmp_path):
        path = tmp_path / "v.txt"
        write_vectors(path, 3, ["alpha", "beta"])
        table = load_embedding_table(path, 3, oov_seed=1)
        assert set(table.vectors) == {"alpha", "beta", "<pad>", "<url>", "<user>"}
        np.testing.assert_allclose(table.lookup("alpha"), [0.1, 0.11, 0.12])

    def test_dim_mismatch_names_both(self, tmp_path):
        path = tmp_path / "v.txt"
        write_vectors(path, 3, ["alpha"])
        with pytest.raises(DataFormatError, match="expected dimension 4.*declares 3"):
            load_embedding_table(path, 4)

    def test_malformed_line_has_lineno(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("2 3\nalpha 0.1 0.2 0.3\nbeta 0.1 0.2\n")
        with pytest.raises(DataFormatError, match=":3:"):
            load_embedding_table(path, 3)

    def test_non_numeric_component(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("1 2\nalpha 0.1 oops\n")
        with pytest.raises(DataFormatError, match=":2: non-numeric"):
            load_embedding_table(path, 2)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("not a header\n")
        with pytest.raises(DataFormatError, match=":1:"):
            load_embedding_table(path, 3)

    def test_peek_dim(self, tmp_path):
        path = tmp_path / "v.txt"
        write_vectors(path, 7, ["a"])
        assert peek_embedding_dim(path) == 7


class TestLookup:
    def test_stored_word_verbatim(self, tmp_path):
        path = tmp_path / "v.txt"
        write_vectors(path, 2, ["alpha"])
        table = load_embedding_table(path, 2)
        np.testing.assert_array_equal(table.lookup("alpha"), [0.1, 0.11])

    def test_pad_is_zero_even_if_file_disagrees(self, tmp_path):
        path = tmp_path / "v.txt"
        write_vectors(path, 2, ["<pad>"])
        table = load_embedding_table(path, 2)
        np.testing.assert_array_equal(table.lookup("<pad>"), [0.0, 0.0])

    def test_oov_deterministic_and_cached(self):
        table = EmbeddingTable.random(8, oov_seed=5)
        first = table.lookup("mystery")
        second = table.lookup("mystery")
        assert first is second
        fresh = EmbeddingTable.random(8, oov_seed=5)
        np.testing.assert_array_equal(fresh.lookup("mystery"), first)

    def test_oov_depends_on_seed_and_token(self):
        t5 = EmbeddingTable.random(16, oov_seed=5)
        t6 = EmbeddingTable.random(16, oov_seed=6)
        assert not np.array_equal(t5.lookup("word"), t6.lookup("word"))
        assert not np.array_equal(t5.lookup("worda"), t5.lookup("wordb"))

    def test_oov_range_and_finite(self):
        table = EmbeddingTable.random(64, oov_seed=0)
        for token in ("a", "b", "c", "dizziness"):
            vec = table.lookup(token)
            assert np.all(np.isfinite(vec))
            assert np.all(np.abs(vec) <= 0.25)

    def test_random_table_covers_any_vocab(self):
        table = EmbeddingTable.random(4, oov_seed=9)
        vocab = [f"tok{i}" for i in range(50)]
        for word in vocab:
            assert table.lookup(word).shape == (4,)

    def test_rejects_non_finite_vectors(self):
        with pytest.raises(ValueError, match="non-finite"):
            EmbeddingTable(2, {"bad": np.array([np.inf, 0.0])})

    def test_rejects_wrong_width_vectors(self):
        with pytest.raises(ValueError, match="shape"):
            EmbeddingTable(3, {"bad": np.array([1.0, 2.0])})

    def test_concurrent_first_lookups_agree(self):
        # Cache writes are idempotent, so racing first lookups is safe.
        from concurrent.futures import ThreadPoolExecutor

        table = EmbeddingTable.random(16, oov_seed=7)
        tokens = [f"oov{i}" for i in range(40)]

        def lookup_all(_):
            return [table.lookup(t).copy() for t in tokens]

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(lookup_all, range(8)))
        for got in results[1:]:
            for a, b in zip(results[0], got):
                np.testing.assert_array_equal(a, b)


class TestViewSpec:
    def test_view1_pairs_lstm(self):
        spec = ViewSpec.view1()
        assert spec.cell_kind == "lstm"
        assert spec.embedding_dim == 400

    def test_view2_pairs_gru(self):
        spec = ViewSpec.view2()
        assert spec.cell_kind == "gru"
        assert spec.embedding_dim == 300

    def test_mismatched_cell_rejected(self):
        with pytest.raises(ConfigError, match="lstm"):
            ViewSpec("view1", "random", 10, "gru")

    def test_unknown_view_name_rejected(self):
        with pytest.raises(ConfigError, match="view name"):
            ViewSpec("view3", "random", 10, "lstm")

    def test_load_table_missing_file(self):
        spec = ViewSpec.view1(embedding_source="/nonexistent/vectors.txt")
        with pytest.raises(ConfigError, match="not found"):
            spec.load_table()

    def test_load_table_random(self):
        table = ViewSpec.view1(embedding_dim=6, oov_seed=3).load_table()
        assert table.dim == 6
        assert table.oov_seed == 3


class TestEmbedHelpers:
    def test_embed_tokens_shape(self):
        table = EmbeddingTable.random(5, oov_seed=1)
        out = embed_tokens(table, ["a", "b", "<pad>"])
        assert out.shape == (3, 5)
        np.testing.assert_array_equal(out[2], np.zeros(5))

    def test_embed_batch_requires_equal_lengths(self):
        table = EmbeddingTable.random(5, oov_seed=1)
        ok = AnnotatedSequence(["a", "b"], [Label.O] * 2, 2)
        bad = AnnotatedSequence(["a"], [Label.O], 1)
        with pytest.raises(ValueError, match="padded length"):
            embed_batch(table, [ok, bad])
