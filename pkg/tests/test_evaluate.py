"""Metric suite tests against independent counting oracles.

The oracles below count with plain Python loops over ints and perform the
same single final division as the library, so aggregate metrics are compared
for exact float equality: any disagreement is a counting bug, not float
noise. The rank-based AUC is compared against an all-pairs oracle to 1e-9
instead, since the two formulations accumulate in different orders.
"""

import numpy as np
import pytest

from emoforge import evaluate
from emoforge.corpus import GOEMOTIONS_LABELS, NUM_LABELS
from emoforge.errors import DataError
from synthdata import random_fixture


# ----------------------------------------------------------------- oracles

def oracle_prf(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
    return precision, recall, f1


def oracle_label_counts(y, pred, j):
    tp = fp = fn = 0
    for i in range(y.shape[0]):
        t, p = int(y[i, j]) != 0, int(pred[i, j]) != 0
        if t and p:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
    return tp, fp, fn


def oracle_aggregates(y, pred):
    """Subset accuracy, Jaccard, Hamming, micro and macro P/R/F1 by direct
    enumeration of samples and labels."""
    n, m = y.shape
    exact = 0
    jacc_terms = []
    wrong = 0
    for i in range(n):
        inter = union = 0
        row_ok = True
        for j in range(m):
            t, p = int(y[i, j]) != 0, int(pred[i, j]) != 0
            if t != p:
                row_ok = False
                wrong += 1
            if t and p:
                inter += 1
            if t or p:
                union += 1
        exact += row_ok
        jacc_terms.append(1.0 if union == 0 else inter / union)
    per_label = [oracle_label_counts(y, pred, j) for j in range(m)]
    tp = sum(c[0] for c in per_label)
    fp = sum(c[1] for c in per_label)
    fn = sum(c[2] for c in per_label)
    per_prf = [oracle_prf(*c) for c in per_label]
    return {
        "subset": exact / n,
        "jaccard": sum(jacc_terms) / n,
        "hamming": wrong / (n * m),
        "micro": oracle_prf(tp, fp, fn),
        "macro": (sum(p for p, _, _ in per_prf) / m,
                  sum(r for _, r, _ in per_prf) / m,
                  sum(f for _, _, f in per_prf) / m),
    }


def oracle_allpairs_auc(scores, truth):
    """AUC as the fraction of (positive, negative) pairs ranked correctly,
    ties worth half."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth) != 0
    pos = scores[truth]
    neg = scores[~truth]
    if pos.size == 0 or neg.size == 0:
        return None
    wins = int((pos[:, None] > neg[None, :]).sum())
    ties = int((pos[:, None] == neg[None, :]).sum())
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def oracle_f1_at(col, truth, t):
    tp = fp = fn = 0
    for s, y in zip(col, truth):
        p = float(s) >= t
        if y and p:
            tp += 1
        elif p:
            fp += 1
        elif y:
            fn += 1
    return oracle_prf(tp, fp, fn)[2]


# ------------------------------------------------------------------- tests

class TestBinarize:
    def test_threshold_is_inclusive(self):
        probs = np.array([[0.5, 0.49999, 0.50001]])
        out = evaluate.binarize(probs, 0.5)
        np.testing.assert_array_equal(out, [[1, 0, 1]])
        assert out.dtype == np.int8

    def test_per_label_vector(self):
        probs = np.array([[0.3, 0.3], [0.7, 0.7]])
        out = evaluate.binarize(probs, np.array([0.2, 0.6]))
        np.testing.assert_array_equal(out, [[1, 0], [1, 1]])

    def test_vector_length_mismatch(self):
        with pytest.raises(DataError, match="threshold vector length 3"):
            evaluate.binarize(np.zeros((2, 5)), np.array([0.1, 0.2, 0.3]))


class TestAggregateMetrics:
    # two samples, three labels: truth {0,2} vs {0}, then {1} vs {1}
    Y = np.array([[1, 0, 1], [0, 1, 0]], dtype=np.int8)
    P = np.array([[1, 0, 0], [0, 1, 0]], dtype=np.int8)

    def test_two_sample_worked_example(self):
        assert evaluate.subset_accuracy(self.Y, self.P) == 0.5
        assert evaluate.jaccard_score(self.Y, self.P) == 0.75
        assert evaluate.hamming_loss(self.Y, self.P) == 1 / 6
        assert evaluate.micro_prf(self.Y, self.P) == (1.0, 2 / 3, 0.8)
        assert evaluate.macro_prf(self.Y, self.P)[2] == 2 / 3

    def test_perfect_predictions(self):
        assert evaluate.subset_accuracy(self.Y, self.Y) == 1.0
        assert evaluate.jaccard_score(self.Y, self.Y) == 1.0
        assert evaluate.hamming_loss(self.Y, self.Y) == 0.0
        assert evaluate.micro_prf(self.Y, self.Y) == (1.0, 1.0, 1.0)

    def test_empty_sets_jaccard_counts_one(self):
        z = np.zeros((3, 4), dtype=np.int8)
        assert evaluate.jaccard_score(z, z) == 1.0
        # all-zero predictions give 0/0 precision and recall, defined as 0
        assert evaluate.micro_prf(self.Y, np.zeros_like(self.Y)) == (0.0, 0.0, 0.0)

    def test_matches_counting_oracle_exactly(self):
        rng = np.random.default_rng(101)
        for _ in range(150):
            y, probs = random_fixture(rng)
            pred = evaluate.binarize(probs, 0.5)
            want = oracle_aggregates(y, pred)
            assert evaluate.subset_accuracy(y, pred) == want["subset"]
            assert evaluate.jaccard_score(y, pred) == want["jaccard"]
            assert evaluate.hamming_loss(y, pred) == want["hamming"]
            assert evaluate.micro_prf(y, pred) == want["micro"]
            assert evaluate.macro_prf(y, pred) == want["macro"]

    def test_hamming_complements_bit_accuracy(self):
        # counted as disagreements on one side, size minus agreements on the
        # other, with one division each, so equality is exact
        rng = np.random.default_rng(102)
        for _ in range(40):
            y, probs = random_fixture(rng)
            pred = evaluate.binarize(probs, 0.5)
            agreements = int((y == pred).sum())
            assert evaluate.hamming_loss(y, pred) == \
                (y.size - agreements) / y.size

    def test_micro_invariant_under_label_permutation(self):
        # pooled counts cannot depend on column order
        rng = np.random.default_rng(103)
        for _ in range(20):
            y, probs = random_fixture(rng)
            pred = evaluate.binarize(probs, 0.5)
            perm = rng.permutation(y.shape[1])
            assert evaluate.micro_prf(y[:, perm], pred[:, perm]) == \
                evaluate.micro_prf(y, pred)

    def test_macro_invariant_under_sample_permutation(self):
        rng = np.random.default_rng(104)
        for _ in range(20):
            y, probs = random_fixture(rng)
            pred = evaluate.binarize(probs, 0.5)
            perm = rng.permutation(y.shape[0])
            assert evaluate.macro_prf(y[perm], pred[perm]) == \
                evaluate.macro_prf(y, pred)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError, match="shape mismatch"):
            evaluate.subset_accuracy(np.zeros((2, 3)), np.zeros((2, 4)))
        with pytest.raises(DataError, match="shape mismatch"):
            evaluate.micro_prf(np.zeros((2, 3)), np.zeros((3, 3)))


class TestAuc:
    def test_worked_example(self):
        auc = evaluate.label_auc(np.array([0.1, 0.4, 0.35, 0.8]),
                                 np.array([0, 0, 1, 1]))
        assert auc == 0.75

    def test_perfect_separation(self):
        auc = evaluate.label_auc(np.array([0.1, 0.2, 0.8, 0.9]),
                                 np.array([0, 0, 1, 1]))
        assert auc == 1.0

    def test_all_tied_scores(self):
        auc = evaluate.label_auc(np.full(6, 0.4), np.array([0, 1, 0, 1, 0, 1]))
        assert auc == 0.5

    def test_single_class_is_undefined(self):
        assert evaluate.label_auc(np.array([0.1, 0.9]), np.array([1, 1])) is None
        assert evaluate.label_auc(np.array([0.1, 0.9]), np.array([0, 0])) is None

    def test_matches_allpairs_oracle(self):
        rng = np.random.default_rng(105)
        for _ in range(150):
            y, probs = random_fixture(rng)
            for j in range(y.shape[1]):
                want = oracle_allpairs_auc(probs[:, j], y[:, j])
                got = evaluate.label_auc(probs[:, j], y[:, j])
                if want is None:
                    assert got is None
                else:
                    assert got == pytest.approx(want, abs=1e-9)

    def test_invariant_under_monotone_rescale(self):
        # scores on a sixty-fourths grid so *8 and +4 are exact in float64
        # and cannot merge distinct values or split ties
        rng = np.random.default_rng(106)
        for _ in range(30):
            n = int(rng.integers(4, 60))
            scores = rng.integers(0, 65, size=n) / 64.0
            truth = (rng.random(n) < 0.4).astype(np.int8)
            truth[0], truth[1] = 1, 0
            base = evaluate.label_auc(scores, truth)
            assert evaluate.label_auc(scores * 8.0, truth) == base
            assert evaluate.label_auc(scores + 4.0, truth) == base

    def test_macro_auc_excludes_undefined_labels(self):
        probs = np.array([[0.9, 0.2], [0.1, 0.6]])
        y = np.array([[1, 1], [0, 1]])  # second label all-positive
        mean, excluded = evaluate.macro_auc(probs, y)
        assert mean == 1.0
        assert excluded == 1

    def test_macro_auc_all_undefined_raises(self):
        probs = np.array([[0.9], [0.1]])
        with pytest.raises(DataError, match="AUC undefined for every label"):
            evaluate.macro_auc(probs, np.array([[1], [1]]))


class TestThresholdGrid:
    def test_default_grid(self):
        grid = evaluate.threshold_grid()
        assert len(grid) == 19
        assert grid[0] == 0.05
        assert grid[-1] == 0.95
        assert 0.5 in grid
        # rounding keeps the printed form short: "0.05" not "0.15000000000000002"
        assert all(len(str(t)) <= 4 for t in grid)

    def test_ascending_and_evenly_spaced(self):
        grid = evaluate.threshold_grid()
        diffs = np.diff(grid)
        assert np.allclose(diffs, 0.05, atol=1e-12)

    def test_custom_grid(self):
        assert evaluate.threshold_grid(0.1, 0.3, 0.1) == [0.1, 0.2, 0.3]

    def test_bad_grid_rejected(self):
        with pytest.raises(DataError, match="bad threshold grid"):
            evaluate.threshold_grid(0.5, 0.1, 0.05)
        with pytest.raises(DataError, match="bad threshold grid"):
            evaluate.threshold_grid(0.1, 0.5, 0.0)


class TestTuneThresholds:
    def test_worked_example(self):
        # 0.25 already separates the one negative from both positives, and
        # the scan keeps the smallest tying threshold
        probs = np.array([[0.2], [0.6], [0.7]])
        y = np.array([[0], [1], [1]])
        tau = evaluate.tune_thresholds(probs, y)
        assert tau[0] == 0.25

    def test_exhaustive_optimality_and_smallest_tie(self):
        rng = np.random.default_rng(107)
        grid = evaluate.threshold_grid()
        for _ in range(25):
            y, probs = random_fixture(rng, max_rows=60)
            tau = evaluate.tune_thresholds(probs, y, grid)
            for j in range(y.shape[1]):
                col, truth = probs[:, j], y[:, j] != 0
                f1s = [oracle_f1_at(col, truth, t) for t in grid]
                best = max(f1s)
                winners = [t for t, f in zip(grid, f1s) if f == best]
                assert oracle_f1_at(col, truth, tau[j]) == best
                assert tau[j] == min(winners)

    def test_label_without_positives_gets_lowest_threshold(self):
        probs = np.array([[0.3, 0.9], [0.8, 0.1]])
        y = np.array([[0, 1], [0, 1]])
        tau = evaluate.tune_thresholds(probs, y)
        assert tau[0] == 0.05

    def test_tuned_never_worse_than_default(self):
        rng = np.random.default_rng(108)
        grid = evaluate.threshold_grid()  # contains 0.5
        for _ in range(15):
            y, probs = random_fixture(rng, max_rows=60)
            tau = evaluate.tune_thresholds(probs, y, grid)
            for j in range(y.shape[1]):
                col, truth = probs[:, j], y[:, j] != 0
                assert oracle_f1_at(col, truth, tau[j]) >= \
                    oracle_f1_at(col, truth, 0.5)

    def test_empty_grid_rejected(self):
        with pytest.raises(DataError, match="threshold grid is empty"):
            evaluate.tune_thresholds(np.zeros((2, 3)), np.zeros((2, 3)), [])


class TestComputeReport:
    def test_aggregates_match_standalone_functions(self):
        rng = np.random.default_rng(109)
        y, probs = random_fixture(rng)
        pred = evaluate.binarize(probs, 0.5)
        rep = evaluate.compute_report(y, probs, 0.5)
        assert rep.subset_accuracy == evaluate.subset_accuracy(y, pred)
        assert rep.jaccard == evaluate.jaccard_score(y, pred)
        assert rep.hamming_loss == evaluate.hamming_loss(y, pred)
        assert (rep.micro_precision, rep.micro_recall, rep.micro_f1) == \
            evaluate.micro_prf(y, pred)
        assert (rep.macro_precision, rep.macro_recall, rep.macro_f1) == \
            evaluate.macro_prf(y, pred)
        mauc, excluded = evaluate.macro_auc(probs, y)
        assert rep.macro_auc == mauc
        assert rep.auc_excluded == excluded

    def test_per_label_rows(self):
        rng = np.random.default_rng(110)
        y, probs = random_fixture(rng, max_rows=80)
        tau = evaluate.tune_thresholds(probs, y)
        rep = evaluate.compute_report(y, probs, tau, names=GOEMOTIONS_LABELS)
        pred = evaluate.binarize(probs, tau)
        assert len(rep.per_label) == NUM_LABELS
        for j, lm in enumerate(rep.per_label):
            assert lm.label == j
            assert lm.name == GOEMOTIONS_LABELS[j]
            assert lm.support == int((y[:, j] != 0).sum())
            assert lm.threshold == tau[j]
            tp, fp, fn = oracle_label_counts(y, pred, j)
            assert (lm.precision, lm.recall, lm.f1) == oracle_prf(tp, fp, fn)
            correct = sum(int(pred[i, j]) == int(y[i, j] != 0)
                          for i in range(y.shape[0]))
            assert lm.accuracy == correct / y.shape[0]
            want_auc = oracle_allpairs_auc(probs[:, j], y[:, j])
            if want_auc is None:
                assert lm.auc is None
            else:
                assert lm.auc == pytest.approx(want_auc, abs=1e-9)

    def test_all_labels_single_class(self):
        y = np.ones((3, 4), dtype=np.int8)
        probs = np.full((3, 4), 0.9)
        rep = evaluate.compute_report(y, probs, 0.5)
        assert rep.macro_auc is None
        assert rep.auc_excluded == 4

    def test_scalar_threshold_broadcasts(self):
        y = np.zeros((2, 5), dtype=np.int8)
        rep = evaluate.compute_report(y, np.random.default_rng(0).random((2, 5)), 0.4)
        assert [lm.threshold for lm in rep.per_label] == [0.4] * 5


class TestRankSentenceLabels:
    def test_two_labels_clear_in_descending_order(self):
        probs = np.full(NUM_LABELS, 0.01)
        probs[8] = 0.98   # desire
        probs[18] = 0.86  # love
        ranked, below = evaluate.rank_sentence_labels(probs, 0.5)
        assert ranked == [(8, 0.98), (18, 0.86)]
        assert below is False

    def test_fallback_when_nothing_clears(self):
        probs = np.full(NUM_LABELS, 0.01)
        probs[14] = 0.3
        ranked, below = evaluate.rank_sentence_labels(probs, 0.5)
        assert ranked == [(14, 0.3)]
        assert below is True

    def test_truncates_to_k(self):
        probs = np.linspace(0.9, 0.6, NUM_LABELS)
        ranked, below = evaluate.rank_sentence_labels(probs, 0.5, k=4)
        assert len(ranked) == 4
        assert [j for j, _ in ranked] == [0, 1, 2, 3]
        assert below is False

    def test_ties_prefer_lower_index(self):
        probs = np.zeros(6)
        probs[2] = probs[4] = 0.7
        ranked, _ = evaluate.rank_sentence_labels(probs, 0.5)
        assert [j for j, _ in ranked] == [2, 4]

    def test_per_label_thresholds(self):
        probs = np.array([0.4, 0.4])
        ranked, below = evaluate.rank_sentence_labels(probs, np.array([0.3, 0.5]))
        assert ranked == [(0, 0.4)]
        assert below is False


class TestCsvRoundTrips:
    HEADER = "# emoforge format=1 config=deadbeef0123 seed=7"

    def test_predictions_round_trip_exactly(self, tmp_path):
        rng = np.random.default_rng(111)
        probs = rng.random((37, NUM_LABELS)).astype(np.float32)
        path = tmp_path / "preds.csv"
        evaluate.write_predictions_csv(probs, path, header=self.HEADER)
        text = path.read_text()
        assert text.startswith(self.HEADER + "\n")
        back = evaluate.read_predictions_csv(path)
        assert back.dtype == np.float32
        np.testing.assert_array_equal(back, probs)

    def test_predictions_bad_column_count(self, tmp_path):
        path = tmp_path / "preds.csv"
        path.write_text("id,p0\n0,0.5\n")
        with pytest.raises(DataError, match="expected 29 columns, got 2"):
            evaluate.read_predictions_csv(path)

    def test_predictions_non_numeric(self, tmp_path):
        path = tmp_path / "preds.csv"
        cells = ",".join(["x"] * NUM_LABELS)
        path.write_text(f"0,{cells}\n")
        with pytest.raises(DataError, match="non-numeric prediction value"):
            evaluate.read_predictions_csv(path)

    def test_predictions_ids_must_be_contiguous(self, tmp_path):
        rng = np.random.default_rng(112)
        probs = rng.random((3, NUM_LABELS)).astype(np.float32)
        path = tmp_path / "preds.csv"
        evaluate.write_predictions_csv(probs, path)
        text = path.read_text().replace("\n2,", "\n5,")
        path.write_text(text)
        with pytest.raises(DataError, match="contiguous 0-based range"):
            evaluate.read_predictions_csv(path)

    def test_thresholds_round_trip(self, tmp_path):
        tau = np.array(evaluate.threshold_grid())[:NUM_LABELS % 19 + 19]
        tau = np.resize(tau, NUM_LABELS)
        path = tmp_path / "tau.csv"
        evaluate.write_thresholds_csv(tau, path, names=GOEMOTIONS_LABELS,
                                      header=self.HEADER)
        back = evaluate.read_thresholds_csv(path)
        np.testing.assert_array_equal(back, tau)

    def test_thresholds_must_cover_every_label(self, tmp_path):
        path = tmp_path / "tau.csv"
        path.write_text("label,name,tau\n0,admiration,0.5\n")
        with pytest.raises(DataError, match="does not cover every label"):
            evaluate.read_thresholds_csv(path)

    def test_thresholds_malformed_row(self, tmp_path):
        path = tmp_path / "tau.csv"
        path.write_text("label,name,tau\nx,admiration,0.5\n")
        with pytest.raises(DataError, match="malformed threshold row"):
            evaluate.read_thresholds_csv(path)

    def test_aggregate_csv_values(self, tmp_path):
        rng = np.random.default_rng(113)
        y, probs = random_fixture(rng)
        rep = evaluate.compute_report(y, probs, 0.5)
        path = tmp_path / "agg.csv"
        evaluate.write_aggregate_csv(rep, path, header=self.HEADER)
        rows = dict(r for r in _csv_rows(path) if r[0] != "metric")
        assert float(rows["micro_f1"]) == pytest.approx(rep.micro_f1, rel=1e-8)
        assert float(rows["macro_auc"]) == pytest.approx(rep.macro_auc, rel=1e-8)
        assert int(rows["auc_excluded_labels"]) == rep.auc_excluded

    def test_aggregate_csv_none_auc_is_empty_cell(self, tmp_path):
        y = np.ones((2, 3), dtype=np.int8)
        rep = evaluate.compute_report(y, np.full((2, 3), 0.9), 0.5)
        path = tmp_path / "agg.csv"
        evaluate.write_aggregate_csv(rep, path)
        rows = dict(r for r in _csv_rows(path) if r[0] != "metric")
        assert rows["macro_auc"] == ""

    def test_per_label_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(114)
        y, probs = random_fixture(rng, max_rows=50)
        rep = evaluate.compute_report(y, probs, 0.5, names=GOEMOTIONS_LABELS)
        path = tmp_path / "per_label.csv"
        evaluate.write_per_label_csv(rep, path, header=self.HEADER)
        body = [r for r in _csv_rows(path) if r[0] != "label"]
        assert len(body) == NUM_LABELS
        for row, lm in zip(body, rep.per_label):
            assert int(row[0]) == lm.label
            assert row[1] == lm.name
            assert float(row[5]) == pytest.approx(lm.f1, rel=1e-8)
            assert int(row[7]) == lm.support


def _csv_rows(path):
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        return [r for r in csv.reader(fh) if r and not r[0].startswith("# emoforge")]
