"""Multinomial naive Bayes over hashed token features, scored on partial
responses.

The classifier sees ``history ∥ SEP ∥ prefix`` as a bag of tokens in which the
separator moves every response-side token into its own feature range, so the
same word counts as a different feature before and after SEP. SEP itself adds
no term; an empty input scores as the class prior. Because the model is
additive in log space, a :class:`PrefixState` holding the per-class
log scores of a fixed prefix can be extended by any candidate token with one
row lookup, which is what makes per-candidate scoring cheap during decoding.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..corpus import PrefixInstance

FORMAT = "ecodec-nb"
VERSION = 1

# Posteriors are clipped into [EPS, 1 - EPS] so no class ever gets exactly 0 or 1.
EPS = 1e-12

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK
    return x ^ (x >> np.uint64(31))


def n_features(vocab_size: int) -> int:
    return 2 * vocab_size


def feature_ids(history, prefix, vocab_size: int, use_history: bool = True) -> list[int]:
    """History tokens keep their ids; response tokens are shifted past them."""
    feats: list[int] = []
    if use_history:
        for utt in history:
            feats.extend(utt)
    feats.extend(vocab_size + t for t in prefix)
    return feats


def hash_buckets(vocab_size: int, seed: int, n_buckets: int) -> np.ndarray:
    """Bucket index of every feature id (see :func:`feature_ids`)."""
    salt = _splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
    ids = np.arange(n_features(vocab_size), dtype=np.uint64)
    return (_splitmix64(ids ^ salt) % np.uint64(n_buckets)).astype(np.int64)


def _posterior(scores: np.ndarray) -> np.ndarray:
    m = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - m)
    p = e / e.sum(axis=-1, keepdims=True)
    return np.clip(p, EPS, 1.0 - EPS)


class PrefixClassifier:
    def __init__(
        self,
        classes: Sequence[str],
        class_counts: np.ndarray,
        feature_counts: np.ndarray,
        vocab_size: int,
        hash_seed: int,
        use_history: bool = True,
    ):
        self.classes = tuple(classes)
        self.class_index = {c: i for i, c in enumerate(self.classes)}
        self.class_counts = np.asarray(class_counts, dtype=np.int64)
        self.feature_counts = np.asarray(feature_counts, dtype=np.int64)
        self.n_buckets = self.feature_counts.shape[1]
        self.vocab_size = vocab_size
        self.hash_seed = hash_seed
        self.use_history = use_history
        self.bucket = hash_buckets(vocab_size, hash_seed, self.n_buckets)

        n = self.class_counts.sum()
        self.log_prior = np.log(self.class_counts / n)
        totals = self.feature_counts.sum(axis=1, keepdims=True)
        loglik = np.log((self.feature_counts + 1.0) / (totals + self.n_buckets))
        # row per feature id: extending a state is one contiguous row add
        self.feature_loglik = np.ascontiguousarray(loglik.T[self.bucket])
        # response-side rows, indexed by plain token id
        self.token_loglik = self.feature_loglik[vocab_size:]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def features(self, history: Iterable[Sequence[int]], prefix: Sequence[int]) -> list[int]:
        return feature_ids(history, prefix, self.vocab_size, self.use_history)

    def log_scores(self, history, prefix) -> np.ndarray:
        scores = self.log_prior.copy()
        for f in self.features(history, prefix):
            scores = scores + self.feature_loglik[f]
        return scores

    def posterior(self, history, prefix) -> np.ndarray:
        return _posterior(self.log_scores(history, prefix))

    def index(self, label: str) -> int:
        try:
            return self.class_index[label]
        except KeyError:
            raise KeyError(f"unknown class {label!r}; known: {', '.join(self.classes)}") from None

    def predict(self, history, prefix) -> str:
        return self.classes[int(np.argmax(self.log_scores(history, prefix)))]

    def to_json(self) -> str:
        header = {
            "format": FORMAT,
            "version": VERSION,
            "classes": list(self.classes),
            "vocab_size": self.vocab_size,
            "hash_seed": self.hash_seed,
            "n_buckets": self.n_buckets,
            "use_history": self.use_history,
        }
        rows, cols = np.nonzero(self.feature_counts)
        body = {
            "class_counts": self.class_counts.tolist(),
            "features": [[int(r), int(c), int(self.feature_counts[r, c])] for r, c in zip(rows, cols)],
        }
        return json.dumps(header, sort_keys=True) + "\n" + json.dumps(body, separators=(",", ":")) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PrefixClassifier":
        header_line, body_line = Path(path).read_text(encoding="utf-8").split("\n", 1)
        header = json.loads(header_line)
        if header.get("format") != FORMAT or header.get("version") != VERSION:
            raise ValueError(f"{path}: not a classifier file of a supported version")
        body = json.loads(body_line)
        fc = np.zeros((len(header["classes"]), header["n_buckets"]), dtype=np.int64)
        for r, c, v in body["features"]:
            fc[r, c] = v
        return cls(
            header["classes"],
            np.array(body["class_counts"]),
            fc,
            header["vocab_size"],
            header["hash_seed"],
            header["use_history"],
        )

    def __repr__(self) -> str:
        return (
            f"PrefixClassifier(classes={self.classes}, hash_seed={self.hash_seed}, "
            f"n_buckets={self.n_buckets})"
        )


def train_prefix_classifier(
    instances: Iterable[PrefixInstance],
    class_set: Sequence[str],
    vocab_size: int,
    hash_seed: int = 0,
    n_buckets: int = 4096,
    use_history: bool = True,
) -> PrefixClassifier:
    """Fit add-one-smoothed multinomial naive Bayes on prefix instances.

    Raises ``ValueError`` naming the first class in ``class_set`` that has no
    training instance.
    """
    classes = tuple(class_set)
    cidx = {c: i for i, c in enumerate(classes)}
    bucket = hash_buckets(vocab_size, hash_seed, n_buckets)
    class_counts = np.zeros(len(classes), dtype=np.int64)
    flat: list[np.ndarray] = []
    for inst in instances:
        if inst.label not in cidx:
            raise ValueError(f"instance label {inst.label!r} not in class set")
        c = cidx[inst.label]
        class_counts[c] += 1
        feats = feature_ids(inst.history, inst.prefix, vocab_size, use_history)
        flat.append(c * n_buckets + bucket[np.asarray(feats, dtype=np.int64)])
    for c, n in zip(classes, class_counts):
        if n == 0:
            raise ValueError(f"class {c!r} has no training instances")
    idx = np.concatenate(flat) if flat else np.zeros(0, dtype=np.int64)
    feature_counts = np.bincount(idx, minlength=len(classes) * n_buckets).reshape(len(classes), n_buckets)
    return PrefixClassifier(classes, class_counts, feature_counts, vocab_size, hash_seed, use_history)


def classifier_prob(clf: PrefixClassifier, history, prefix, label: str) -> float:
    return float(clf.posterior(history, prefix)[clf.index(label)])


class PrefixState:
    """Per-class log scores of one fixed (history, prefix); immutable."""

    __slots__ = ("clf", "scores", "length")

    def __init__(self, clf: PrefixClassifier, scores: np.ndarray, length: int):
        self.clf = clf
        self.scores = scores
        self.length = length

    def extend(self, token: int) -> "PrefixState":
        return PrefixState(self.clf, self.scores + self.clf.token_loglik[token], self.length + 1)

    def posterior(self) -> np.ndarray:
        return _posterior(self.scores)

    def candidate_posteriors(self, tokens: np.ndarray) -> np.ndarray:
        """Posterior after appending each of ``tokens``: shape ``(len(tokens), n_classes)``."""
        return _posterior(self.scores + self.clf.token_loglik[tokens])


def begin_prefix(clf: PrefixClassifier, history, prefix) -> PrefixState:
    return PrefixState(clf, clf.log_scores(history, prefix), len(prefix))


def extend_prefix(state: PrefixState, token: int) -> PrefixState:
    return state.extend(token)


def state_posterior(state: PrefixState, label: str) -> float:
    return float(state.posterior()[state.clf.index(label)])
