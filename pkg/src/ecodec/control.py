"""Top-k candidate selection, temperature-smoothed entropy and the
entropy-to-strength mappings."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .models.classifier import begin_prefix

STRENGTH_VARIANTS = ("reciprocal", "exponential", "negative")


@dataclass(frozen=True)
class TopKCandidates:
    """The ``k`` most probable next tokens, descending by LM probability,
    ties broken by ascending token id."""

    tokens: np.ndarray
    probs: np.ndarray
    step: int = 0

    def __post_init__(self):
        if len(self.tokens) != len(self.probs):
            raise ValueError("tokens and probs differ in length")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def k(self) -> int:
        return len(self.tokens)

    @property
    def entries(self) -> list[tuple[int, float]]:
        return [(int(t), float(p)) for t, p in zip(self.tokens, self.probs)]


@dataclass(frozen=True)
class EntropyReading:
    value: float
    source: str
    tau: float


@dataclass(frozen=True)
class StrengthFunction:
    """Decreasing map from entropy (nats) to a control exponent ``>= 1``.

    ``negative`` needs the vocabulary size, since it counts down from
    ``ln V``.
    """

    variant: str = "reciprocal"
    vocab_size: int | None = None

    def __post_init__(self):
        if self.variant not in STRENGTH_VARIANTS:
            raise ValueError(f"unknown strength function {self.variant!r}; choose from {STRENGTH_VARIANTS}")
        if self.variant == "negative" and (self.vocab_size is None or self.vocab_size < 2):
            raise ValueError("the 'negative' strength function needs vocab_size >= 2")

    def __call__(self, e: float) -> float:
        return strength(e, self)


def top_k_select(p: np.ndarray, k: int, step: int = 0) -> TopKCandidates:
    p = np.asarray(p)
    V = p.shape[0]
    if not 2 <= k <= V:
        raise ValueError(f"k must satisfy 2 <= k <= V={V}, got {k}")
    if k == V:
        pool = np.arange(V)
    else:
        # everything tied with the k-th largest value competes on token id
        kth = p[np.argpartition(p, V - k)[V - k]]
        pool = np.flatnonzero(p >= kth)
    order = np.lexsort((pool, -p[pool]))[:k]
    tokens = pool[order]
    return TopKCandidates(tokens, p[tokens], step)


def smooth_and_entropy(values: Sequence[float], tau: float = 1.0, log_input: bool = False):
    """Softmax of ``values / tau`` and its Shannon entropy in nats.

    By default the values (probabilities) are fed to the softmax as they
    are; ``log_input=True`` takes their logarithm first, i.e. treats them as
    logits.
    """
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot smooth an empty value set")
    z = (np.log(v) if log_input else v) / tau
    z = z - z.max()
    w = np.exp(z)
    s = w.sum()
    q = w / s
    # H = -sum q log q with log q = z - log s
    h = math.log(s) - float(q @ z)
    return q, min(max(h, 0.0), math.log(v.size))


def _entropy_loop(v, inv_tau, log_input):
    # two passes (max, then exp-sum) so the kernel allocates nothing
    n = v.shape[0]
    m = -math.inf
    for i in range(n):
        z = math.log(v[i]) * inv_tau if log_input else v[i] * inv_tau
        if z > m:
            m = z
    s = 0.0
    wz = 0.0
    for i in range(n):
        z = (math.log(v[i]) * inv_tau if log_input else v[i] * inv_tau) - m
        w = math.exp(z)
        s += w
        wz += w * z
    h = math.log(s) - wz / s
    return min(max(h, 0.0), math.log(n))


def _strength_loop(e, variant, log_v):
    # variant codes follow STRENGTH_VARIANTS
    if variant == 0:
        return 1.0 + 1.0 / (1.0 + e)
    if variant == 1:
        return 1.0 + math.exp(-e)
    return 1.0 + (log_v - e)


try:
    import numba
except ImportError:  # pragma: no cover - same arithmetic, interpreted
    _entropy_kernel = _entropy_loop
    _strength_kernel = _strength_loop
else:
    _entropy_kernel = numba.njit(cache=True)(_entropy_loop)
    _strength_kernel = numba.njit(cache=True)(_strength_loop)


def entropy(values: np.ndarray, tau: float = 1.0, log_input: bool = False) -> float:
    """Entropy half of :func:`smooth_and_entropy` without materializing the
    distribution; the decoding hot path uses this one."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if len(values) == 0:
        raise ValueError("cannot smooth an empty value set")
    return _entropy_kernel(values, 1.0 / tau, log_input)


def strength(e: float, fn: StrengthFunction) -> float:
    if e < 0:
        raise ValueError(f"entropy must be nonnegative, got {e}")
    if fn.variant == "reciprocal":
        return 1.0 + 1.0 / (1.0 + e)
    if fn.variant == "exponential":
        return 1.0 + math.exp(-e)
    log_v = math.log(fn.vocab_size)
    if e > log_v + 1e-12:
        raise ValueError(f"entropy {e} exceeds ln V = {log_v}")
    return 1.0 + (log_v - e)


def attribute_entropy(
    candidates: TopKCandidates,
    clf,
    history,
    prefix,
    label: str,
    tau_c: float = 1.0,
    *,
    state=None,
    log_input: bool = False,
    name: str = "attribute",
):
    """Target-class probability of ``prefix + t`` for each candidate ``t``,
    plus the entropy of their smoothed distribution.

    Pass a ``PrefixState`` for ``(history, prefix)`` to skip rescoring the
    prefix.
    """
    if len(candidates) == 0:
        raise ValueError("no candidates")
    if state is None:
        state = begin_prefix(clf, history, prefix)
    probs = state.candidate_posteriors(candidates.tokens)[:, clf.index(label)]
    _, h = smooth_and_entropy(probs, tau_c, log_input)
    return probs, EntropyReading(h, f"attribute:{name}", tau_c)
