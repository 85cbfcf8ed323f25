import math

import numpy as np
import pytest

from ecodec.corpus import PrefixInstance
from ecodec.models.classifier import (
    EPS,
    PrefixClassifier,
    begin_prefix,
    classifier_prob,
    extend_prefix,
    feature_ids,
    state_posterior,
    train_prefix_classifier,
)


def _inst(prefix, label, history=((1,),)):
    return PrefixInstance(tuple(tuple(u) for u in history), tuple(prefix), label)


class TestTraining:
    def test_separable_corpus(self):
        # tokens 3,4 only in "a"; 5,6 only in "b"
        data = [_inst(p, "a") for p in ([3], [4], [3, 4], [4, 3])] + [_inst(p, "b") for p in ([5], [6], [5, 6], [6, 5])]
        clf = train_prefix_classifier(data, ("a", "b"), vocab_size=7, hash_seed=0, n_buckets=1024)
        assert all(clf.predict(i.history, i.prefix) == i.label for i in data)

    def test_identical_features_give_priors(self):
        data = [_inst([3, 4], c) for c in ("a", "b", "c")] * 2
        clf = train_prefix_classifier(data, ("a", "b", "c"), vocab_size=5, n_buckets=256)
        np.testing.assert_allclose(clf.posterior(((1,),), [3, 4, 4]), [1 / 3] * 3, atol=1e-6)

    def test_missing_class_named(self):
        with pytest.raises(ValueError, match="'b'"):
            train_prefix_classifier([_inst([3], "a")], ("a", "b"), vocab_size=5)

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            train_prefix_classifier([_inst([3], "z")], ("a",), vocab_size=5)

    def test_single_class_is_clipped(self):
        clf = train_prefix_classifier([_inst([3], "a")], ("a",), vocab_size=5)
        p = clf.posterior((), [3])[0]
        assert 0.99 < p < 1.0

    def test_templated_sentiment_heldout(self):
        rng = np.random.default_rng(0)
        pos, neg, neutral = [3, 4, 5], [6, 7, 8], list(range(9, 20))
        def sample(label):
            cue = pos if label == "pos" else neg
            toks = list(rng.choice(neutral, 4)) + [int(rng.choice(cue))]
            rng.shuffle(toks)
            return _inst([int(t) for t in toks], label)
        train = [sample(l) for l in ("pos", "neg") * 100]
        test = [sample(l) for l in ("pos", "neg") * 50]
        clf = train_prefix_classifier(train, ("pos", "neg"), vocab_size=20, hash_seed=3)
        acc = np.mean([clf.predict(i.history, i.prefix) == i.label for i in test])
        assert acc >= 0.9


class TestScoring:
    def test_empty_input_gives_priors(self):
        data = [_inst([3], "a")] * 2 + [_inst([4], "b")]
        clf = train_prefix_classifier(data, ("a", "b"), vocab_size=5)
        np.testing.assert_allclose(clf.posterior((), []), [2 / 3, 1 / 3], atol=1e-12)
        h = train_prefix_classifier(data, ("a", "b"), vocab_size=5, use_history=False)
        np.testing.assert_allclose(h.posterior(((3, 4),), []), [2 / 3, 1 / 3], atol=1e-12)

    def test_two_token_hand_computation(self):
        # no history; with 2V buckets and no collisions each feature has its own bucket
        data = [_inst([3, 3], "a", ()), _inst([4], "b", ())]
        V, B = 5, 10_000
        clf = train_prefix_classifier(data, ("a", "b"), vocab_size=V, hash_seed=1, n_buckets=B)
        assert len(set(clf.bucket.tolist())) == 2 * V
        # class a: 2 tokens both "3"; class b: 1 token "4"
        la = math.log(0.5) + 2 * math.log(3 / (2 + B)) + math.log(1 / (2 + B))
        lb = math.log(0.5) + 2 * math.log(1 / (1 + B)) + math.log(2 / (1 + B))
        # scoring [3, 3, 4]
        pa = 1 / (1 + math.exp(lb - la))
        np.testing.assert_allclose(clf.posterior((), [3, 3, 4]), [pa, 1 - pa], atol=1e-12)
        assert classifier_prob(clf, (), [3, 3, 4], "a") == pytest.approx(pa, abs=1e-12)

    def test_history_and_response_are_distinct_features(self):
        assert feature_ids([(1, 2)], [1], 10) == [1, 2, 11]
        assert feature_ids([(1, 2)], [1], 10, use_history=False) == [11]

    def test_posteriors_clipped(self):
        data = [_inst([3] * 50, "a")] + [_inst([4] * 50, "b")]
        clf = train_prefix_classifier(data, ("a", "b"), vocab_size=5)
        p = clf.posterior((), [3] * 400)
        assert p.min() == EPS and p.max() == 1 - EPS

    def test_unknown_class(self, tiny):
        _, _, clf = tiny
        with pytest.raises(KeyError, match="known"):
            clf.index("nope")


class TestIncremental:
    def test_matches_from_scratch(self, tiny):
        vocab, _, clf = tiny
        rng = np.random.default_rng(1)
        hist = [(4, 5)]
        prefix: list[int] = []
        state = begin_prefix(clf, hist, prefix)
        for _ in range(1000):
            t = int(rng.integers(3, vocab.size))
            state = extend_prefix(state, t)
            prefix.append(t)
        np.testing.assert_allclose(state.scores, clf.log_scores(hist, prefix), rtol=0, atol=1e-12 * len(prefix))
        assert state_posterior(state, "pos") == pytest.approx(classifier_prob(clf, hist, prefix, "pos"), abs=1e-12)
        assert state.length == 1000

    def test_each_step_matches(self, tiny):
        vocab, _, clf = tiny
        rng = np.random.default_rng(2)
        hist, prefix = [(3,)], []
        state = begin_prefix(clf, hist, prefix)
        for _ in range(50):
            t = int(rng.integers(3, vocab.size))
            state, prefix = state.extend(t), prefix + [t]
            np.testing.assert_allclose(state.posterior(), clf.posterior(hist, prefix), atol=1e-12)

    def test_candidate_posteriors(self, tiny):
        vocab, _, clf = tiny
        state = begin_prefix(clf, [(5,)], [4, 6])
        toks = np.arange(vocab.size)
        batch = state.candidate_posteriors(toks)
        for t in toks:
            np.testing.assert_allclose(batch[t], clf.posterior([(5,)], [4, 6, int(t)]), atol=1e-12)

    def test_state_is_immutable(self, tiny):
        _, _, clf = tiny
        s = begin_prefix(clf, [], [3])
        before = s.scores.copy()
        s.extend(4)
        np.testing.assert_array_equal(s.scores, before)


class TestSeeds:
    def test_seed_changes_hashing_only(self):
        data = [_inst([3, 4], "a"), _inst([5], "b")]
        a = train_prefix_classifier(data, ("a", "b"), vocab_size=6, hash_seed=1, n_buckets=16)
        b = train_prefix_classifier(data, ("a", "b"), vocab_size=6, hash_seed=2, n_buckets=16)
        assert not np.array_equal(a.bucket, b.bucket)
        assert a.classes == b.classes

    def test_same_seed_is_deterministic(self, tiny):
        from conftest import tiny_world

        assert tiny_world()[2].to_json() == tiny[2].to_json()


class TestPersistence:
    def test_round_trip(self, tmp_path, tiny):
        vocab, _, clf = tiny
        clf.save(tmp_path / "c.json")
        back = PrefixClassifier.load(tmp_path / "c.json")
        assert back.to_json() == clf.to_json()
        rng = np.random.default_rng(0)
        for _ in range(20):
            prefix = [int(t) for t in rng.integers(3, vocab.size, 4)]
            np.testing.assert_array_equal(back.posterior([(3,)], prefix), clf.posterior([(3,)], prefix))

    def test_rejects_other_format(self, tmp_path):
        (tmp_path / "x.json").write_text('{"format": "other", "version": 1}\n{}\n')
        with pytest.raises(ValueError, match="supported"):
            PrefixClassifier.load(tmp_path / "x.json")
