"""Corpus loading, normalization, tokenizer and encoding behavior."""

import numpy as np
import pytest

from emoforge import corpus
from emoforge.corpus import (
    NUM_LABELS, OOV_ID, PAD_ID, SEQ_LEN, LabelVocabulary, Sample,
)
from emoforge.errors import DataError


def toks(*words):
    return [Sample(" ".join(words), frozenset([0]))]


class TestLabelVocabulary:
    def test_goemotions_has_28_unique_names(self):
        vocab = LabelVocabulary.goemotions()
        assert len(vocab) == NUM_LABELS
        assert len(set(vocab.names)) == NUM_LABELS
        assert vocab.names[-1] == "neutral"

    def test_index_round_trip(self):
        vocab = LabelVocabulary.goemotions()
        for i, name in enumerate(vocab.names):
            assert vocab.index_of(name) == i

    def test_unknown_name(self):
        with pytest.raises(DataError, match="unknown label"):
            LabelVocabulary.goemotions().index_of("boredom")

    def test_wrong_count_rejected(self):
        with pytest.raises(DataError, match="28 entries"):
            LabelVocabulary(names=("joy", "anger"))

    def test_duplicates_rejected(self):
        names = ("joy",) * NUM_LABELS
        with pytest.raises(DataError, match="duplicate"):
            LabelVocabulary(names=names)

    def test_from_file(self, tmp_path):
        path = tmp_path / "labels.txt"
        path.write_text("\n".join(corpus.GOEMOTIONS_LABELS) + "\n")
        assert LabelVocabulary.from_file(path).names == corpus.GOEMOTIONS_LABELS


class TestNormalizeText:
    def test_mentions_urls_punctuation_case(self):
        assert corpus.normalize_text("@bob check https://t.co/x GREAT!!!") == "check great"

    def test_already_clean_is_identity(self):
        assert corpus.normalize_text("already clean text") == "already clean text"

    def test_punctuation_becomes_separator(self):
        assert corpus.normalize_text("good news... bad news :(") == "good news bad news"

    def test_idempotent_on_random_strings(self):
        rng = np.random.default_rng(401)
        alphabet = list("abc @#.:!/XY09 \t")
        for _ in range(300):
            raw = "".join(rng.choice(alphabet, size=rng.integers(0, 40)))
            once = corpus.normalize_text(raw)
            assert corpus.normalize_text(once) == once

    def test_www_prefix_dropped(self):
        assert corpus.normalize_text("see www.example.com now") == "see now"


class TestLoadDataset:
    def _load(self, tmp_path, content):
        path = tmp_path / "data.tsv"
        path.write_text(content, encoding="utf-8")
        return corpus.load_dataset(path, LabelVocabulary.goemotions())

    def test_single_label_line(self, tmp_path):
        samples = self._load(tmp_path, "I love it\t18\n")
        assert samples == [Sample(text="I love it", labels=frozenset({18}))]

    def test_multi_label_line(self, tmp_path):
        samples = self._load(tmp_path, "mixed news\t17,25\n")
        assert samples[0].labels == frozenset({17, 25})

    def test_meta_column_carried(self, tmp_path):
        samples = self._load(tmp_path, "hello\t3\tsample-9\n")
        assert samples[0].meta == "sample-9"

    def test_out_of_range_label_names_line(self, tmp_path):
        with pytest.raises(DataError, match=r"label index out of range: 99, line 1"):
            self._load(tmp_path, "oops\t99\n")

    def test_error_line_numbers_count_real_lines(self, tmp_path):
        with pytest.raises(DataError, match="line 3"):
            self._load(tmp_path, "ok\t1\n\nbad\t99\n")

    def test_wrong_field_count(self, tmp_path):
        with pytest.raises(DataError, match="2 or 3 tab-separated fields"):
            self._load(tmp_path, "no labels here\n")

    def test_empty_label_field(self, tmp_path):
        with pytest.raises(DataError, match="empty label field, line 1"):
            self._load(tmp_path, "text\t\n")

    def test_malformed_label_field(self, tmp_path):
        with pytest.raises(DataError, match="malformed label field"):
            self._load(tmp_path, "text\tjoy\n")

    def test_header_lines_skipped(self, tmp_path):
        samples = self._load(tmp_path, "# emoforge format=1 config=x seed=0\nhi\t2\n")
        assert len(samples) == 1

    def test_save_load_round_trip(self, tmp_path):
        original = [
            Sample("one two", frozenset({0, 27}), meta="m1"),
            Sample("three", frozenset({5})),
        ]
        path = tmp_path / "round.tsv"
        corpus.save_dataset(original, path, header="# emoforge test")
        assert corpus.load_dataset(path, LabelVocabulary.goemotions()) == original


class TestFitTokenizer:
    def test_frequency_then_id_assignment(self):
        tok = corpus.fit_tokenizer([Sample("a b", frozenset([0])),
                                    Sample("a", frozenset([0]))])
        assert tok.word_index == {"a": 2, "b": 3}
        assert tok.vocab_size == 4

    def test_tie_broken_lexicographically(self):
        tok = corpus.fit_tokenizer([Sample("x x", frozenset([0])),
                                    Sample("y y", frozenset([0]))])
        assert tok.word_index == {"x": 2, "y": 3}

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError, match="empty corpus"):
            corpus.fit_tokenizer([])

    def test_deterministic_and_order_independent(self):
        rng = np.random.default_rng(17)
        words = [f"w{i}" for i in range(40)]
        samples = [Sample(" ".join(rng.choice(words, size=6)), frozenset([0]))
                   for _ in range(100)]
        tok_a = corpus.fit_tokenizer(samples)
        tok_b = corpus.fit_tokenizer(list(reversed(samples)))
        assert tok_a.word_index == tok_b.word_index

    def test_ids_contiguous_from_two(self):
        tok = corpus.fit_tokenizer(toks("p", "q", "r"))
        assert sorted(tok.word_index.values()) == [2, 3, 4]
        assert tok.fitted_on == "train"


class TestEncode:
    vocab = LabelVocabulary.goemotions()

    def test_shapes_fixed_regardless_of_text_length(self):
        rng = np.random.default_rng(23)
        samples = [Sample(" ".join(["w"] * int(rng.integers(0, 80))),
                          frozenset([int(rng.integers(NUM_LABELS))]))
                   for _ in range(64)]
        tok = corpus.fit_tokenizer(samples)
        ds = corpus.encode(samples, tok, self.vocab)
        assert ds.sequences.shape == (64, SEQ_LEN)
        assert ds.labels.shape == (64, NUM_LABELS)

    def test_left_padding(self):
        tok = corpus.TokenizerState({"a": 2, "b": 3}, vocab_size=4)
        ds = corpus.encode([Sample("a b", frozenset([0]))], tok, self.vocab)
        expected = [PAD_ID] * (SEQ_LEN - 2) + [2, 3]
        assert ds.sequences[0].tolist() == expected

    def test_truncation_keeps_last_tokens(self):
        words = [f"t{i}" for i in range(SEQ_LEN + 5)]
        samples = [Sample(" ".join(words), frozenset([0]))]
        tok = corpus.fit_tokenizer(samples)
        ds = corpus.encode(samples, tok, self.vocab)
        expected = [tok.word_index[w] for w in words[-SEQ_LEN:]]
        assert ds.sequences[0].tolist() == expected

    def test_unseen_token_maps_to_oov(self):
        tok = corpus.TokenizerState({"a": 2}, vocab_size=3)
        ds = corpus.encode([Sample("zzz a", frozenset([0]))], tok, self.vocab)
        assert ds.sequences[0, -2] == OOV_ID
        assert ds.sequences[0, -1] == 2

    def test_multi_hot_labels(self):
        tok = corpus.TokenizerState({"a": 2}, vocab_size=3)
        ds = corpus.encode([Sample("a", frozenset({0, 27}))], tok, self.vocab)
        row = ds.labels[0]
        assert row[0] == 1 and row[27] == 1 and row.sum() == 2

    def test_no_id_reaches_vocab_size_and_tokenizer_unchanged(self):
        rng = np.random.default_rng(31)
        train = [Sample(f"w{i} w{i % 7}", frozenset([0])) for i in range(50)]
        tok = corpus.fit_tokenizer(train)
        before = dict(tok.word_index)
        unseen = [Sample(f"new{i} w0", frozenset([1])) for i in range(30)]
        for split in (train, unseen):
            ds = corpus.encode(split, tok, self.vocab, split="val")
            assert ds.sequences.max() < tok.vocab_size
        assert tok.word_index == before

    def test_encode_texts_normalizes(self):
        tok = corpus.TokenizerState({"check": 2, "great": 3}, vocab_size=4)
        seqs = corpus.encode_texts(["@bob check https://t.co/x GREAT!!!"], tok)
        assert seqs[0, -2:].tolist() == [2, 3]


class TestDistributionAndTopWords:
    def test_label_distribution_counts_columns(self):
        labels = np.zeros((2, NUM_LABELS), dtype=np.int8)
        labels[0, 0] = 1
        labels[1, 0] = 1
        labels[1, 1] = 1
        ds = corpus.EncodedDataset(np.zeros((2, SEQ_LEN), np.int32), labels, "train")
        dist = corpus.label_distribution(ds)
        assert dist[0] == 2 and dist[1] == 1 and dist[2:].sum() == 0

    def test_distribution_empty_and_saturated(self):
        empty = corpus.EncodedDataset(np.zeros((0, SEQ_LEN), np.int32),
                                      np.zeros((0, NUM_LABELS), np.int8), "train")
        assert corpus.label_distribution(empty).sum() == 0
        ones = corpus.EncodedDataset(np.zeros((5, SEQ_LEN), np.int32),
                                     np.ones((5, NUM_LABELS), np.int8), "train")
        np.testing.assert_array_equal(corpus.label_distribution(ones), 5)

    def test_top_k_words_counts(self):
        assert corpus.top_k_words(toks("a", "a", "b"), 1) == [("a", 2)]

    def test_k_larger_than_vocabulary(self):
        assert corpus.top_k_words(toks("b", "a"), 10) == [("a", 1), ("b", 1)]


class TestPersistence:
    def test_tokenizer_round_trip(self, tmp_path):
        tok = corpus.fit_tokenizer(toks("alpha", "beta", "alpha"))
        path = tmp_path / "tok.json"
        corpus.save_tokenizer(tok, path, meta={"seed": 1})
        loaded = corpus.load_tokenizer(path)
        assert loaded == tok

    def test_tokenizer_bad_format_tag(self, tmp_path):
        path = tmp_path / "tok.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(DataError, match="bad format tag"):
            corpus.load_tokenizer(path)

    def test_tokenizer_not_json(self, tmp_path):
        path = tmp_path / "tok.json"
        path.write_text("not json at all")
        with pytest.raises(DataError, match="unreadable tokenizer"):
            corpus.load_tokenizer(path)

    def test_encoded_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        ds = corpus.EncodedDataset(
            sequences=rng.integers(0, 50, size=(7, SEQ_LEN), dtype=np.int32),
            labels=(rng.random((7, NUM_LABELS)) < 0.2).astype(np.int8),
            split="val")
        path = tmp_path / "val.npz"
        corpus.save_encoded(ds, path, meta={"seed": 5})
        loaded = corpus.load_encoded(path)
        np.testing.assert_array_equal(loaded.sequences, ds.sequences)
        np.testing.assert_array_equal(loaded.labels, ds.labels)
        assert loaded.split == "val"

    def test_encoded_unreadable(self, tmp_path):
        path = tmp_path / "junk.npz"
        path.write_bytes(b"\x00\x01\x02")
        with pytest.raises(DataError, match="unreadable encoded dataset"):
            corpus.load_encoded(path)
