import csv
import io
import json

import pytest

from uncq.attribution import loo_attribution, remove_positions
from uncq.corpus import Corpus, LabelSpace, TokenizedExample
from uncq.evaluation import (
    assign_bin,
    confidence_change_experiment,
    default_edges,
    important_removal_check,
    reports_to_csv,
    reports_to_json,
)


def test_default_edges():
    assert default_edges(2) == pytest.approx([0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    assert default_edges(4, 3) == pytest.approx([0.25, 0.5, 0.75, 1.0])


def test_assign_bin_right_closed():
    edges = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    assert assign_bin(0.5, edges) == 0
    assert assign_bin(0.6, edges) == 0
    assert assign_bin(0.6000001, edges) == 1
    assert assign_bin(1.0, edges) == 4


class TestUncertainRemoval:
    def test_constant_model(self, constant):
        sample = Corpus(constant.label_space, [TokenizedExample(f"e{i}", ["a", "b", "c"][: i + 1], 0) for i in range(3)])
        rep = confidence_change_experiment(constant, sample, "loo", k_unc=2, seed=0)
        assert all(b.mean_delta in (None, 0.0) for b in rep.bins)
        assert rep.overall_mean_delta == 0.0
        assert rep.n_without_words == 3

    def test_exclude_empty(self, constant):
        sample = Corpus(constant.label_space, [TokenizedExample(f"e{i}", ["a", "b"], 0) for i in range(4)])
        rep = confidence_change_experiment(constant, sample, "loo", k_unc=2, include_empty=False)
        assert rep.sample_size == 0 and rep.n_without_words == 4
        assert all(b.count == 0 for b in rep.bins)
        assert rep.meta["empty_examples"] == "excluded"

    def test_loo_k1_identity(self, calibrated, synth_splits):
        test = synth_splits[2]
        rep = confidence_change_experiment(calibrated, test, "loo", k_unc=1, seed=0, sample_size=60)
        assert len(rep.changes) == 60
        for ch in rep.changes:
            ex = test.by_id(ch.example_id)
            s_min = min(loo_attribution(calibrated, ex).scores)
            expected = -s_min if s_min < 0 else 0.0
            assert ch.delta == pytest.approx(expected, abs=1e-12)

    def test_delta_recomputed_independently(self, calibrated, synth_splits):
        test = synth_splits[2]
        rep = confidence_change_experiment(calibrated, test, "ss", k_unc=3, seed=4, sample_size=25, M=20)
        for ch in rep.changes:
            ex = test.by_id(ch.example_id)
            before = calibrated.predict(ex.tokens)
            after = calibrated.predict(remove_positions(ex.tokens, ch.removed))
            assert ch.delta == pytest.approx(after.probs[before.predicted_class] - before.confidence, abs=1e-12)

    @pytest.mark.parametrize("method", ["loo", "sampling-shapley"])
    def test_synthetic_raises_confidence(self, calibrated, synth_splits, method):
        rep = confidence_change_experiment(calibrated, synth_splits[2], method, k_unc=5, seed=0, M=50)
        occupied = [b for b in rep.bins if b.count]
        assert occupied
        assert all(b.mean_delta > 0 for b in occupied)
        assert sum(b.count for b in rep.bins) == rep.sample_size

    def test_deterministic_and_worker_independent(self, calibrated, synth_splits):
        args = dict(explainer="ss", k_unc=4, seed=2, sample_size=40, M=30)
        a = confidence_change_experiment(calibrated, synth_splits[2], workers=1, **args)
        b = confidence_change_experiment(calibrated, synth_splits[2], workers=4, **args)
        assert reports_to_json([a]) == reports_to_json([b])
        assert a.changes == b.changes

    def test_errors(self, calibrated):
        empty = Corpus(LabelSpace(("pos", "neg")), [])
        with pytest.raises(ValueError):
            confidence_change_experiment(calibrated, empty)
        one = Corpus(LabelSpace(("pos", "neg")), [TokenizedExample("a", ["good"], 0)])
        with pytest.raises(ValueError):
            confidence_change_experiment(calibrated, one, sample_size=2)
        with pytest.raises(ValueError):
            confidence_change_experiment(calibrated, one, bins=[0.9, 0.5])


class TestImportantRemoval:
    def test_constant_model(self, constant):
        sample = Corpus(constant.label_space, [TokenizedExample("e", ["a", "b"], 0)])
        rep = important_removal_check(constant, sample, "loo", k_imp=2)
        assert rep.overall_mean_delta == 0.0 and rep.flip_rate == 0.0

    def test_loo_k1_identity(self, calibrated, synth_splits):
        test = synth_splits[2]
        rep = important_removal_check(calibrated, test, "loo", k_imp=1, seed=1, sample_size=50)
        for ch in rep.changes:
            s_max = max(loo_attribution(calibrated, test.by_id(ch.example_id)).scores)
            expected = -s_max if s_max > 0 else 0.0
            assert ch.delta == pytest.approx(expected, abs=1e-12)

    def test_synthetic_lowers_confidence(self, calibrated, synth_splits):
        rep = important_removal_check(calibrated, synth_splits[2], "ss", k_imp=5, seed=0, M=50)
        assert rep.overall_mean_delta < 0
        assert 0.0 < rep.flip_rate <= 1.0


def test_serialization(calibrated, synth_splits):
    reps = [
        confidence_change_experiment(calibrated, synth_splits[2], "loo", 3, sample_size=30),
        important_removal_check(calibrated, synth_splits[2], "loo", 3, sample_size=30),
    ]
    rows = list(csv.DictReader(io.StringIO(reports_to_csv(reps))))
    assert len(rows) == 10
    assert {"lower", "upper", "count", "mean_orig", "mean_post", "mean_delta"} <= set(rows[0])
    single = list(csv.reader(io.StringIO(reps[0].to_csv())))
    assert single[0] == ["lower", "upper", "count", "mean_orig", "mean_post", "mean_delta"]
    doc = json.loads(reports_to_json(reps))
    assert doc[0]["edges"] == pytest.approx([0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    assert doc[1]["group"] == "important"
