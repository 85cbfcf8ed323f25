"""Shared setup for experiments: split the corpus, fit every model, and
assemble a :class:`~ecodec.evaluation.Bench`. Used by the CLI and the
acceptance suite so both see identical models."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import (
    DEFAULT_SCHEMA,
    DialogueExample,
    Vocabulary,
    build_vocabulary,
    enumerate_prefixes,
    load_dataset,
    split_dataset,
)
from .evaluation import Bench
from .models.classifier import PrefixClassifier, train_prefix_classifier
from .models.ngram import NGramLM, flatten_example, train_ngram_lm


@dataclass(frozen=True)
class Seeds:
    split: int = 0
    controllers: Mapping[str, int] = field(default_factory=lambda: {"emotion": 11, "dialog-act": 12})
    evaluator: int = 97

    def controller_seed(self, attr: str) -> int:
        # attributes missing from the map get a deterministic fallback
        return self.controllers.get(attr, 1000 + sum(map(ord, attr)))


@dataclass
class Splits:
    vocab: Vocabulary
    train: list[DialogueExample]
    valid: list[DialogueExample]
    test: list[DialogueExample]


def prepare_splits(
    path: str | Path,
    schema: Mapping[str, Sequence[str]] = DEFAULT_SCHEMA,
    seed: int = 0,
    ratios=(0.8, 0.1, 0.1),
    min_count: int = 2,
) -> Splits:
    """Load, split, build the vocabulary on train only, and encode all splits."""
    raw = load_dataset(path, schema)
    train, valid, test = split_dataset(raw, ratios, seed)
    vocab = build_vocabulary(train, min_count)
    return Splits(vocab, *([ex.encode(vocab) for ex in part] for part in (train, valid, test)))


def fit_lm(examples, vocab, order: int = 3, discount: float = 0.75) -> NGramLM:
    return train_ngram_lm([flatten_example(ex, vocab) for ex in examples], vocab, order, discount)


def fit_controller(examples, attr: str, classes, vocab_size: int, seed: int, n_buckets: int = 4096):
    """Prefix classifier trained on every partial response of every example."""
    instances = [inst for ex in examples for inst in enumerate_prefixes(ex, attr)]
    return train_prefix_classifier(instances, classes, vocab_size, seed, n_buckets)


def fit_evaluator(examples, attr: str, classes, vocab_size: int, seed: int, n_buckets: int = 4096):
    """Response-only classifier trained on complete responses."""
    instances = [enumerate_prefixes(ex, attr)[-1] for ex in examples]
    return train_prefix_classifier(instances, classes, vocab_size, seed, n_buckets, use_history=False)


def heldout_accuracy(clf: PrefixClassifier, examples, attr: str) -> float:
    hits = [clf.predict(ex.history, ex.response) == ex.attributes[attr] for ex in examples]
    return sum(hits) / len(hits)


def build_bench(
    splits: Splits,
    schema: Mapping[str, Sequence[str]] = DEFAULT_SCHEMA,
    seeds: Seeds = Seeds(),
    lm_order: int = 3,
    discount: float = 0.75,
    ref_order: int = 2,
    limit: int | None = None,
) -> Bench:
    """Fit the decoding LM and controllers on train, the reference LM on
    valid, evaluators on train; evaluate on (the first ``limit`` of) test."""
    V = splits.vocab.size
    lm = fit_lm(splits.train, splits.vocab, lm_order, discount)
    ref = fit_lm(splits.valid, splits.vocab, ref_order, discount)
    controllers, evaluators = {}, {}
    for attr, classes in schema.items():
        seed = seeds.controller_seed(attr)
        if seed == seeds.evaluator:
            raise ValueError(f"evaluator seed equals the {attr} controller seed ({seed})")
        controllers[attr] = fit_controller(splits.train, attr, classes, V, seed)
        evaluators[attr] = fit_evaluator(splits.train, attr, classes, V, seeds.evaluator)
    test = splits.test if limit is None else splits.test[:limit]
    return Bench(lm, controllers, evaluators, ref, list(test))
