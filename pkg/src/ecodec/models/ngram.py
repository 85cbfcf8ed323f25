"""Interpolated absolute-discounting n-gram language model."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..corpus import DialogueExample, Vocabulary

FORMAT = "ecodec-ngram"
VERSION = 1


def flatten_history(history: Iterable[Sequence[int]], vocab: Vocabulary) -> list[int]:
    """Lay prior turns out as ``BOS u EOS`` blocks, the layout the LM is trained on."""
    out: list[int] = []
    for utt in history:
        out.append(vocab.bos)
        out.extend(utt)
        out.append(vocab.eos)
    return out


def lm_context(history: Iterable[Sequence[int]], prefix: Sequence[int], vocab: Vocabulary) -> list[int]:
    return flatten_history(history, vocab) + [vocab.bos] + list(prefix)


def flatten_example(example: DialogueExample, vocab: Vocabulary) -> list[int]:
    """Encoded example → one training sequence (history turns then response)."""
    return lm_context(example.history, example.response, vocab)


class NGramLM:
    """Interpolated absolute discounting with uniform base distribution.

    ``P_m(w | u) = max(c(u, w) - d, 0) / c(u) + d * N1+(u .) / c(u) * P_{m-1}(w | u')``

    where ``u'`` drops the oldest token of ``u`` and ``P_0`` is uniform over
    the vocabulary. Contexts never seen in training fall through to the
    next lower order unchanged.
    """

    def __init__(self, vocab: Vocabulary, order: int, discount: float, counts: list[dict]):
        if order < 1:
            raise ValueError("order must be >= 1")
        if not 0.0 < discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        if len(counts) != order:
            raise ValueError("need one count table per order")
        self.vocab = vocab
        self.order = order
        self.discount = discount
        self.V = vocab.size
        # counts[m][context of length m] = {token: count}
        self.counts = counts
        self._levels = []
        for table in counts:
            level = {}
            for ctx, conts in table.items():
                toks = np.fromiter(conts.keys(), dtype=np.int64, count=len(conts))
                cnts = np.fromiter(conts.values(), dtype=np.float64, count=len(conts))
                level[ctx] = (toks, (cnts - discount), float(cnts.sum()))
            self._levels.append(level)
        self._unigram = self._dense(())

    def _dense(self, context: tuple[int, ...]) -> np.ndarray:
        d = self.discount
        if context == ():
            p = np.full(self.V, 1.0 / self.V)
            start = 0
        else:
            p = self._unigram.copy()
            start = 1
        for m in range(start, min(self.order, len(context) + 1)):
            entry = self._levels[m].get(context[len(context) - m :] if m else ())
            if entry is None:
                # an unseen context has no seen extensions either
                break
            toks, discounted, total = entry
            p *= d * len(toks) / total
            p[toks] += discounted / total
        return p

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        """Dense next-token distribution given the full left context."""
        n1 = self.order - 1
        if n1 == 0 or not context:
            return self._unigram.copy()
        return self._dense(tuple(context[-n1:]))

    def prob(self, token: int, context: Sequence[int]) -> float:
        return float(self.next_distribution(context)[token])

    def to_json(self) -> str:
        header = {
            "format": FORMAT,
            "version": VERSION,
            "order": self.order,
            "discount": self.discount,
            "vocab_size": self.V,
            "vocab_hash": self.vocab.fingerprint(),
        }
        body = [
            sorted(([list(ctx), sorted(conts.items())] for ctx, conts in table.items()), key=lambda r: r[0])
            for table in self.counts
        ]
        return json.dumps(header, sort_keys=True) + "\n" + json.dumps(body, separators=(",", ":")) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, vocab: Vocabulary) -> "NGramLM":
        header_line, body_line = Path(path).read_text(encoding="utf-8").split("\n", 1)
        header = json.loads(header_line)
        if header.get("format") != FORMAT or header.get("version") != VERSION:
            raise ValueError(f"{path}: not an n-gram model file of a supported version")
        if header["vocab_hash"] != vocab.fingerprint():
            raise ValueError(f"{path}: model was trained with a different vocabulary")
        body = json.loads(body_line)
        counts = [
            {tuple(ctx): {int(t): int(c) for t, c in conts} for ctx, conts in table} for table in body
        ]
        return cls(vocab, header["order"], header["discount"], counts)

    def __repr__(self) -> str:
        return f"NGramLM(order={self.order}, discount={self.discount}, V={self.V})"


def train_ngram_lm(
    sequences: Iterable[Sequence[int]], vocab: Vocabulary, order: int = 3, discount: float = 0.75
) -> NGramLM:
    """Count n-grams of every order up to ``order``.

    Each sequence must already carry its BOS/EOS markers (see
    :func:`flatten_example`); its first token is treated as given and never
    predicted.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if not 0.0 < discount < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    counts: list[dict] = [dict() for _ in range(order)]
    n_events = 0
    for seq in sequences:
        seq = list(seq)
        for i in range(1, len(seq)):
            w = seq[i]
            n_events += 1
            for m in range(order):
                if i - m < 0:
                    break
                ctx = tuple(seq[i - m : i])
                conts = counts[m].setdefault(ctx, {})
                conts[w] = conts.get(w, 0) + 1
    if n_events == 0:
        raise ValueError("cannot train a language model on an empty corpus")
    return NGramLM(vocab, order, discount, counts)


def lm_next_distribution(lm: NGramLM, context: Sequence[int]) -> np.ndarray:
    return lm.next_distribution(context)


def perplexity(lm, sequence: Sequence[int], context: Sequence[int] = ()) -> float:
    """``exp`` of the mean natural-log loss of ``sequence`` continuing ``context``.

    ``lm`` only needs a ``next_distribution(context)`` method.
    """
    sequence = list(sequence)
    if not sequence:
        raise ValueError("perplexity of an empty sequence is undefined")
    ctx = list(context)
    nll = 0.0
    for tok in sequence:
        nll -= math.log(lm.next_distribution(ctx)[tok])
        ctx.append(tok)
    return math.exp(nll / len(sequence))
