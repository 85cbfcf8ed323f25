import random

import numpy as np
import pytest

from ecodec.corpus import SPECIALS, DialogueExample, PrefixInstance, Vocabulary
from ecodec.experiment import build_bench, prepare_splits
from ecodec.models.classifier import train_prefix_classifier
from ecodec.models.ngram import train_ngram_lm
from ecodec.toydata import bundled_path


@pytest.fixture(scope="session")
def toy_splits():
    return prepare_splits(bundled_path(), seed=0)


@pytest.fixture(scope="session")
def toy_bench(toy_splits):
    return build_bench(toy_splits)


def tiny_world(seed=0, n_words=7, order=2, n_sent=40, classes=("pos", "neg")):
    """A 10-token vocabulary (3 specials + 7 words) with a bigram LM and a
    two-class prefix classifier trained on random sentences."""
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(n_words)]
    vocab = Vocabulary(list(SPECIALS) + words)
    seqs, instances = [], []
    for _ in range(n_sent):
        sent = [rng.randrange(3, vocab.size) for _ in range(rng.randint(1, 6))]
        seqs.append([vocab.bos] + sent + [vocab.eos])
        label = classes[0] if sum(sent) % 2 else classes[1]
        resp = tuple(sent) + (vocab.eos,)
        hist = ((rng.randrange(3, vocab.size),),)
        instances += [PrefixInstance(hist, resp[: j + 1], label) for j in range(len(resp))]
    lm = train_ngram_lm(seqs, vocab, order=order, discount=0.75)
    clf = train_prefix_classifier(instances, classes, vocab.size, hash_seed=seed + 5, n_buckets=64)
    return vocab, lm, clf


@pytest.fixture
def tiny():
    return tiny_world()


def random_context(rng: np.random.Generator, vocab, max_hist=3, max_prefix=5):
    hist = [tuple(int(t) for t in rng.integers(3, vocab.size, rng.integers(1, max_hist + 1)))]
    prefix = [int(t) for t in rng.integers(3, vocab.size, rng.integers(0, max_prefix + 1))]
    return hist, prefix


# acceptance verdicts, printed together at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
