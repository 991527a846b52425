import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import uncq.attribution as attribution
from conftest import sigmoid
from uncq.attribution import (
    Attribution,
    AttributionError,
    ExplanationDigest,
    default_k_unc,
    exact_shapley_attribution,
    loo_attribution,
    make_digest,
    remove_positions,
    sampling_shapley_attribution,
)
from uncq.corpus import TokenizedExample

GGB = TokenizedExample("ggb", ["good", "good", "bad"])


def shapley_by_permutations(model, tokens):
    """Average marginal gain over all N! orderings (independent of the subset-weight formula)."""
    y = model.predict(tokens).predicted_class
    N = len(tokens)
    phi = np.zeros(N)
    perms = list(itertools.permutations(range(N)))
    for perm in perms:
        kept = set()
        prev = model.predict([]).probs[y]
        for i in perm:
            kept.add(i)
            cur = model.predict([t for j, t in enumerate(tokens) if j in kept]).probs[y]
            phi[i] += cur - prev
            prev = cur
    return phi / len(perms)


class TestRemovePositions:
    def test_cases(self):
        assert remove_positions(["a", "b", "c"], {1}) == ["a", "c"]
        assert remove_positions(["a", "b"], {0, 1}) == []
        assert remove_positions(["a", "b"], set()) == ["a", "b"]

    def test_out_of_range(self):
        with pytest.raises(AttributionError):
            remove_positions(["a"], {1})


class TestLeaveOneOut:
    def test_stub_values(self, stub):
        a = loo_attribution(stub, GGB)
        base = sigmoid(0.5)
        assert a.predicted_class == 1
        assert a.base_confidence == pytest.approx(base, abs=1e-15)
        np.testing.assert_allclose(a.scores, [base - 0.5, base - 0.5, base - sigmoid(1.0)], atol=1e-15)
        np.testing.assert_allclose(a.scores, [0.122459, 0.122459, -0.108599], atol=1e-6)

    def test_constant_model(self, constant):
        a = loo_attribution(constant, TokenizedExample("c", ["x", "y", "z"]))
        assert a.scores == (0.0, 0.0, 0.0)

    def test_empty_rejected(self, stub):
        with pytest.raises(AttributionError):
            loo_attribution(stub, TokenizedExample("e", []))

    def test_query_count(self, stub):
        stub.calls = 0
        seen = []
        original = stub.logits_batch

        def counting(inputs):
            seen.extend(inputs)
            return original(inputs)

        stub.logits_batch = counting
        loo_attribution(stub, GGB)
        assert len(seen) == len(GGB.tokens) + 1

    def test_round_trip(self, calibrated, synth_splits):
        for ex in synth_splits[2].examples[:40]:
            a = loo_attribution(calibrated, ex)
            for i, s in enumerate(a.scores):
                after = calibrated.predict(remove_positions(ex.tokens, {i})).probs[a.predicted_class]
                assert after == pytest.approx(a.base_confidence - s, abs=1e-12)

    def test_predicted_class_frozen(self, stub):
        ex = TokenizedExample("f", ["good", "bad"])  # tie -> class 0
        a = loo_attribution(stub, ex)
        assert a.predicted_class == 0
        # without "bad" class 1 wins, yet the score still reads class 0
        assert a.scores[1] == pytest.approx(0.5 - (1 - sigmoid(0.5)), abs=1e-15)


class TestExactShapley:
    def test_constant(self, constant):
        a = exact_shapley_attribution(constant, TokenizedExample("c", ["a", "b", "c", "d"]))
        assert a.scores == (0.0,) * 4

    def test_matches_permutation_oracle(self, stub, calibrated, synth_corpus):
        np.testing.assert_allclose(exact_shapley_attribution(stub, GGB).scores, shapley_by_permutations(stub, GGB.tokens), atol=1e-12)
        tokens = synth_corpus.examples[5].tokens[:6]
        ex = TokenizedExample("p", tokens)
        np.testing.assert_allclose(
            exact_shapley_attribution(calibrated, ex).scores, shapley_by_permutations(calibrated, tokens), atol=1e-12
        )

    def test_efficiency_stub(self, stub):
        a = exact_shapley_attribution(stub, GGB)
        assert sum(a.scores) == pytest.approx(a.base_confidence - stub.predict([]).probs[1], abs=1e-9)

    def test_symmetry_stub(self, stub):
        a = exact_shapley_attribution(stub, GGB)
        assert abs(a.scores[0] - a.scores[1]) <= 1e-12

    def test_dummy(self, stub):
        a = exact_shapley_attribution(stub, TokenizedExample("d", ["good", "zzz", "bad", "good"]))
        assert a.scores[1] == 0.0

    def test_cost_guard(self, stub):
        with pytest.raises(AttributionError, match="max_n"):
            exact_shapley_attribution(stub, TokenizedExample("big", ["good"] * 13))


class TestSamplingShapley:
    def test_constant(self, constant):
        for seed in (0, 1):
            a = sampling_shapley_attribution(constant, TokenizedExample("c", ["a", "b", "c"]), M=7, seed=seed)
            assert a.scores == (0.0, 0.0, 0.0)

    @pytest.mark.parametrize("M,seed", [(1, 0), (5, 3), (50, 11)])
    def test_single_word(self, stub, M, seed):
        a = sampling_shapley_attribution(stub, TokenizedExample("one", ["good"]), M=M, seed=seed)
        y = a.predicted_class
        assert a.scores[0] == pytest.approx(stub.predict(["good"]).probs[y] - stub.predict([]).probs[y], abs=1e-15)

    def test_converges_to_exact(self, stub):
        exact = exact_shapley_attribution(stub, GGB).scores
        approx = sampling_shapley_attribution(stub, GGB, M=20000, seed=0).scores
        np.testing.assert_allclose(approx, exact, atol=0.02)

    def test_efficiency_per_run(self, calibrated, synth_corpus):
        # each permutation telescopes, so efficiency holds for any M
        ex = synth_corpus.examples[8]
        a = sampling_shapley_attribution(calibrated, ex, M=3, seed=2)
        empty = calibrated.predict([]).probs[a.predicted_class]
        assert sum(a.scores) == pytest.approx(a.base_confidence - empty, abs=1e-9)

    def test_deterministic(self, calibrated, synth_corpus):
        ex = synth_corpus.examples[1]
        a = sampling_shapley_attribution(calibrated, ex, M=50, seed=9)
        b = sampling_shapley_attribution(calibrated, ex, M=50, seed=9)
        assert a == b
        c = sampling_shapley_attribution(calibrated, ex, M=50, seed=10)
        assert a.scores != c.scores

    def test_chunking_does_not_change_scores(self, calibrated, synth_corpus, monkeypatch):
        ex = synth_corpus.examples[2]
        a = sampling_shapley_attribution(calibrated, ex, M=40, seed=1)
        monkeypatch.setattr(attribution, "_MASK_BUDGET", 1)
        b = sampling_shapley_attribution(calibrated, ex, M=40, seed=1)
        np.testing.assert_allclose(a.scores, b.scores, atol=1e-15)

    def test_generic_path_deterministic(self, stub):
        a = sampling_shapley_attribution(stub, GGB, M=30, seed=5)
        assert a == sampling_shapley_attribution(stub, GGB, M=30, seed=5)
        assert a.meta == {"M": 30, "seed": 5, "sampler": "permutation"}

    def test_rejects_bad_input(self, stub):
        with pytest.raises(AttributionError):
            sampling_shapley_attribution(stub, GGB, M=0)
        with pytest.raises(AttributionError):
            sampling_shapley_attribution(stub, TokenizedExample("e", []), M=3)

    def test_coalitions_memoized(self, stub):
        stub.calls = 0
        seen = []
        original = stub.logits_batch

        def counting(inputs):
            seen.extend(tuple(t) for t in inputs)
            return original(inputs)

        stub.logits_batch = counting
        sampling_shapley_attribution(stub, GGB, M=100, seed=0)
        coalitions = seen[1:]  # first call is the full-input prediction
        # 100 permutations x 4 prefixes collapse to at most the 2^3 distinct position sets
        assert len(coalitions) <= 2**3


class TestDigest:
    def test_stub_example(self, stub):
        a = loo_attribution(stub, GGB)
        d = make_digest(a, GGB.tokens, k_imp=2, k_unc=2)
        assert [(e.position, e.token) for e in d.important] == [(0, "good"), (1, "good")]
        assert [(e.position, e.token) for e in d.uncertain] == [(2, "bad")]

    def _attr(self, scores):
        return Attribution("x", "loo", 0, 0.9, tuple(scores))

    def test_all_zero(self):
        d = make_digest(self._attr([0.0, 0.0]), ["a", "b"], 3, 3)
        assert d.important == () and d.uncertain == ()

    def test_k_zero(self):
        d = make_digest(self._attr([0.5, -0.2]), ["a", "b"], 0, 3)
        assert d.important == () and len(d.uncertain) == 1

    def test_length_mismatch(self):
        with pytest.raises(AttributionError):
            make_digest(self._attr([0.5]), ["a", "b"], 1, 1)

    @settings(max_examples=1000)
    @given(
        st.lists(st.one_of(st.floats(-1, 1), st.sampled_from([0.0, 0.25, -0.25])), min_size=1, max_size=15),
        st.integers(0, 6),
        st.integers(0, 6),
    )
    def test_invariants(self, scores, k_imp, k_unc):
        tokens = [f"w{i}" for i in range(len(scores))]
        d = make_digest(self._attr(scores), tokens, k_imp, k_unc)
        imp, unc = d.important, d.uncertain
        assert len(imp) <= k_imp and len(unc) <= k_unc
        assert all(e.score > 0 for e in imp) and all(e.score < 0 for e in unc)
        assert not {e.position for e in imp} & {e.position for e in unc}
        assert [(-e.score, e.position) for e in imp] == sorted((-e.score, e.position) for e in imp)
        assert [(e.score, e.position) for e in unc] == sorted((e.score, e.position) for e in unc)
        assert len(imp) == min(k_imp, sum(s > 0 for s in scores))
        assert len(unc) == min(k_unc, sum(s < 0 for s in scores))
        assert all(tokens[e.position] == e.token and scores[e.position] == e.score for e in imp + unc)

    def test_json_round_trip(self, stub):
        d = make_digest(loo_attribution(stub, GGB), GGB.tokens, 2, 2)
        assert ExplanationDigest.from_dict(json.loads(json.dumps(d.to_dict()))) == d

    def test_default_k_unc(self):
        assert default_k_unc(230.0) == 10
        assert default_k_unc(100.0) == 5
        assert default_k_unc(12.0) == 5


def test_attribution_json_round_trip(calibrated, synth_corpus):
    a = sampling_shapley_attribution(calibrated, synth_corpus.examples[0], M=5, seed=1)
    doc = json.loads(json.dumps(a.to_dict()))
    assert set(doc) == {"example_id", "method", "predicted_class", "base_confidence", "scores", "meta"}
    assert Attribution.from_dict(doc) == a
    assert all(math.isfinite(s) for s in a.scores)
