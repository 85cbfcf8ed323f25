"""Dialogue corpus handling: JSON-lines loading, vocabularies, tokenization,
prefix expansion for classifier training, and seeded splits."""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SPECIALS = (BOS, EOS, UNK)

EMOTIONS = ("anger", "disgust", "fear", "happiness", "sadness", "surprise")
DIALOG_ACTS = ("inform", "question", "directive", "commissive")
DEFAULT_SCHEMA: dict[str, tuple[str, ...]] = {
    "emotion": EMOTIONS,
    "dialog-act": DIALOG_ACTS,
}

_TOKEN_RE = re.compile(r"<s>|</s>|<unk>|\w+(?:'\w+)?|[^\w\s]")


class DatasetError(ValueError):
    """Raised for malformed or schema-violating dataset records."""


class Vocabulary:
    """Closed token vocabulary.

    Ids ``0``, ``1`` and ``2`` are always ``BOS``, ``EOS`` and ``UNK``; the
    remaining ids follow descending corpus frequency, ties broken
    lexicographically.
    """

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:3]) != SPECIALS:
            raise ValueError("vocabulary must start with BOS, EOS, UNK")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        if len(tokens) < 4:
            raise ValueError("vocabulary needs at least one non-special token")
        self.string_of: tuple[str, ...] = tuple(tokens)
        self.id_of: dict[str, int] = {t: i for i, t in enumerate(tokens)}

    bos = 0
    eos = 1
    unk = 2

    @property
    def specials(self) -> tuple[int, int, int]:
        return (self.bos, self.eos, self.unk)

    def __len__(self) -> int:
        return len(self.string_of)

    @property
    def size(self) -> int:
        return len(self.string_of)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def lookup(self, token: str) -> int:
        return self.id_of.get(token, self.unk)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.string_of[i] for i in ids]

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha1("\n".join(self.string_of).encode("utf-8")).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.string_of) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.string_of == other.string_of

    def __hash__(self) -> int:
        return hash(self.string_of)

    def __repr__(self) -> str:
        return f"Vocabulary(size={self.size})"


@dataclass(frozen=True)
class DialogueExample:
    """One response with its preceding turns and attribute labels.

    ``history`` and ``response`` hold token strings until the example is
    encoded against a vocabulary, after which they hold ids; the response
    always ends with EOS.
    """

    history: tuple[tuple, ...]
    response: tuple
    attributes: Mapping[str, str] = field(default_factory=dict)

    def encode(self, vocab: Vocabulary) -> "DialogueExample":
        return DialogueExample(
            history=tuple(tuple(vocab.lookup(t) for t in u) for u in self.history),
            response=tuple(vocab.lookup(t) for t in self.response),
            attributes=dict(self.attributes),
        )


@dataclass(frozen=True)
class PrefixInstance:
    history: tuple[tuple[int, ...], ...]
    prefix: tuple[int, ...]
    label: str


def split_tokens(text: str) -> list[str]:
    """Lowercase, split on whitespace, detach punctuation."""
    return _TOKEN_RE.findall(text.lower())


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    return [vocab.lookup(t) for t in split_tokens(text)]


def detokenize(ids: Iterable[int], vocab: Vocabulary, strip_specials: bool = True) -> str:
    words = vocab.decode(ids)
    if strip_specials:
        words = [w for w in words if w not in (BOS, EOS)]
    return " ".join(words)


def _parse_record(raw: str, lineno: int, schema: Mapping[str, Iterable[str]]) -> DialogueExample:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"line {lineno}: malformed JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise DatasetError(f"line {lineno}: expected a JSON object")
    for key in ("history", "response", "attributes"):
        if key not in obj:
            raise DatasetError(f"line {lineno}: missing key {key!r}")
    history, response, attributes = obj["history"], obj["response"], obj["attributes"]
    if not isinstance(history, list) or not all(isinstance(u, str) for u in history):
        raise DatasetError(f"line {lineno}: 'history' must be an array of strings")
    if not isinstance(response, str):
        raise DatasetError(f"line {lineno}: 'response' must be a string")
    if not isinstance(attributes, dict):
        raise DatasetError(f"line {lineno}: 'attributes' must be an object")
    for name, label in attributes.items():
        if name not in schema:
            raise DatasetError(f"line {lineno}: unknown attribute {name!r}")
        if label not in schema[name]:
            raise DatasetError(f"line {lineno}: unknown label {label!r} for attribute {name!r}")
    tokens = split_tokens(response)
    if not tokens:
        raise DatasetError(f"line {lineno}: empty response")
    return DialogueExample(
        history=tuple(tuple(split_tokens(u)) for u in history),
        response=tuple(tokens) + (EOS,),
        attributes=dict(attributes),
    )


def load_dataset(
    path: str | Path, attribute_schema: Mapping[str, Iterable[str]] = DEFAULT_SCHEMA
) -> list[DialogueExample]:
    """Read a JSON-lines dialogue file into token-string examples.

    Blank lines are skipped. Errors carry the 1-based line number.
    """
    schema = {k: frozenset(v) for k, v in attribute_schema.items()}
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            examples.append(_parse_record(raw, lineno, schema))
    return examples


def build_vocabulary(examples: Iterable[DialogueExample | str], min_count: int = 2) -> Vocabulary:
    """Count tokens over histories and responses; keep those seen
    ``min_count`` times or more.

    Plain strings are accepted as well and are split with :func:`split_tokens`.
    """
    if min_count < 0:
        raise ValueError("min_count must be nonnegative")
    counts: Counter[str] = Counter()
    for ex in examples:
        if isinstance(ex, str):
            counts.update(split_tokens(ex))
        else:
            for utt in ex.history:
                counts.update(utt)
            counts.update(ex.response)
    for s in SPECIALS:
        counts.pop(s, None)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    if not kept:
        raise ValueError(f"no token reaches min_count={min_count}")
    return Vocabulary(list(SPECIALS) + kept)


def enumerate_prefixes(example: DialogueExample, attribute: str) -> list[PrefixInstance]:
    """Expand an encoded example into one labeled instance per response prefix."""
    if attribute not in example.attributes:
        raise KeyError(f"attribute {attribute!r} not present in example")
    label = example.attributes[attribute]
    resp = tuple(example.response)
    return [PrefixInstance(example.history, resp[: j + 1], label) for j in range(len(resp))]


def split_dataset(examples: Sequence, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> tuple[list, list, list]:
    """Shuffle with ``seed`` and cut into train/valid/test.

    Valid and test sizes are rounded to nearest; train takes the remainder.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError("ratios must be three nonnegative fractions")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")
    n = len(examples)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    n_valid = int(round(ratios[1] * n))
    n_test = min(int(round(ratios[2] * n)), n - n_valid)
    n_train = n - n_valid - n_test
    shuffled = [examples[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_valid],
        shuffled[n_train + n_valid :],
    )
