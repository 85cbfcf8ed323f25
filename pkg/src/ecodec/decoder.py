"""Greedy weighted decoding with static or entropy-adaptive control strength."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .control import STRENGTH_VARIANTS, StrengthFunction, _entropy_kernel, _strength_kernel, top_k_select
from .models.classifier import PrefixClassifier, begin_prefix, classifier_prob
from .models.ngram import lm_context

MODES = ("static", "eco")

TRACE_COLUMNS = (
    "step",
    "e_lm",
    "alpha_lm",
    "attr_name",
    "e_c",
    "alpha_c",
    "token",
    "lm_prob",
    "attr_prob",
    "combined_log_score",
    "chosen",
)


@dataclass(frozen=True)
class DecodeConfig:
    mode: str = "eco"
    lam: float = 4.0
    k: int = 50
    tau_lm: float = 1.0
    tau_c: float = 1.0
    strength_fn: StrengthFunction = field(default_factory=StrengthFunction)
    max_len: int = 128
    targets: tuple[tuple[str, str], ...] = ()
    log_input: bool = False

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(tuple(t) for t in self.targets))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not (self.tau_lm > 0 and self.tau_c > 0):
            raise ValueError("temperatures must be positive")
        if not self.targets:
            raise ValueError("controlled decoding needs at least one target")
        names = [n for n, _ in self.targets]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate attribute in targets: {names}")

    def replace(self, **changes) -> "DecodeConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class StepTrace:
    """Everything one decoding step looked at.

    Candidate arrays are parallel; the first ``n_topk`` entries are the top-k
    set, a trailing entry (if any) is EOS added outside it. Entropies are NaN
    and strengths 1 in static mode.
    """

    step: int
    tokens: np.ndarray
    lm_probs: np.ndarray
    attr_probs: dict[str, np.ndarray]
    scores: np.ndarray
    n_topk: int
    chosen: int
    e_lm: float = math.nan
    alpha_lm: float = 1.0
    e_c: dict[str, float] = field(default_factory=dict)
    alpha_c: dict[str, float] = field(default_factory=dict)

    @property
    def candidates(self) -> list[tuple[int, float, dict[str, float], float]]:
        return [
            (
                int(t),
                float(self.lm_probs[j]),
                {a: float(p[j]) for a, p in self.attr_probs.items()},
                float(self.scores[j]),
            )
            for j, t in enumerate(self.tokens)
        ]


@dataclass
class DecodeTrace:
    steps: list[StepTrace]
    response: list[int]
    termination: str  # "EOS" or "max_len"


def _check_probs(p: np.ndarray, what: str) -> None:
    if not np.all(p > 0):
        raise ValueError(f"{what} must be strictly positive")


def score_static(lm_probs, attr_probs: Sequence, lam: float) -> np.ndarray:
    """Log of ``lm(t) * prod_j attr_j(t) ** lam`` for each candidate."""
    lm_probs = np.asarray(lm_probs, dtype=np.float64)
    _check_probs(lm_probs, "LM probabilities")
    s = np.log(lm_probs)
    for a in attr_probs:
        a = np.asarray(a, dtype=np.float64)
        if a.shape != lm_probs.shape:
            raise ValueError("attribute and LM probability lists differ in length")
        _check_probs(a, "attribute probabilities")
        s = s + lam * np.log(a)
    return s


def score_eco(lm_probs, alpha_lm: float, attrs: Sequence[tuple], lam: float) -> np.ndarray:
    """Log of ``lm(t) ** alpha_lm * prod_j attr_j(t) ** (lam * alpha_j)``.

    ``attrs`` holds ``(attr_probs, alpha_j)`` pairs.
    """
    if alpha_lm < 1 or any(al < 1 for _, al in attrs):
        raise ValueError("dynamic strengths must be >= 1")
    lm_probs = np.asarray(lm_probs, dtype=np.float64)
    _check_probs(lm_probs, "LM probabilities")
    s = alpha_lm * np.log(lm_probs)
    for a, alpha in attrs:
        a = np.asarray(a, dtype=np.float64)
        if a.shape != lm_probs.shape:
            raise ValueError("attribute and LM probability lists differ in length")
        _check_probs(a, "attribute probabilities")
        s = s + (lam * alpha) * np.log(a)
    return s


def _score_loop(tokens, lm_probs, attr, k, lam, eco, inv_tau_lm, inv_tau_c, log_input, variant, log_v, override, scores, info):
    """Score every candidate in place and return the index of the winner.

    ``attr`` holds one row of target-class probabilities per attribute.
    ``info`` receives ``[e_lm, alpha_lm, e_c0, alpha_c0, e_c1, ...]``;
    entropies are only measured (and strengths only dynamic) when ``eco``.
    Entropies use the first ``k`` candidates; scores cover all of them.
    Static scoring is the eco formula with every strength at exactly 1.
    """
    n = lm_probs.shape[0]
    alpha = 1.0
    if eco:
        e = _entropy_kernel(lm_probs[:k], inv_tau_lm, log_input)
        info[0] = e
        alpha = override if not math.isnan(override) else _strength_kernel(e, variant, log_v)
    info[1] = alpha
    for i in range(n):
        scores[i] = alpha * math.log(lm_probs[i])
    for j in range(attr.shape[0]):
        row = attr[j]
        alpha = 1.0
        if eco:
            e = _entropy_kernel(row[:k], inv_tau_c, log_input)
            info[2 + 2 * j] = e
            alpha = override if not math.isnan(override) else _strength_kernel(e, variant, log_v)
        info[3 + 2 * j] = alpha
        w = lam * alpha
        for i in range(n):
            scores[i] += w * math.log(row[i])
    best = 0
    for i in range(1, n):
        if scores[i] > scores[best] or (scores[i] == scores[best] and tokens[i] < tokens[best]):
            best = i
    return best


try:
    import numba
except ImportError:  # pragma: no cover
    _score_kernel = _score_loop
else:
    _score_kernel = numba.njit(cache=True)(_score_loop)

_VARIANT_CODE = {name: i for i, name in enumerate(STRENGTH_VARIANTS)}


def decode_step(
    lm,
    classifiers: Mapping[str, PrefixClassifier],
    history,
    prefix: Sequence[int],
    config: DecodeConfig,
    *,
    states: Mapping | None = None,
    context: Sequence[int] | None = None,
    alpha_override: float | None = None,
):
    """Choose the next token.

    ``states`` (attribute name → ``PrefixState`` for the current prefix) and
    ``context`` (the LM's left context) are caches maintained by
    :func:`decode`; both are rebuilt from scratch when omitted.
    ``alpha_override`` pins every dynamic strength in eco mode while still
    measuring the entropies.
    """
    vocab = lm.vocab
    if context is None:
        context = lm_context(history, prefix, vocab)
    p = lm.next_distribution(context)
    cands = top_k_select(p, config.k, step=len(prefix))
    tokens, lm_probs = cands.tokens, cands.probs
    k = len(tokens)
    if not (tokens == vocab.eos).any():
        tokens = np.append(tokens, vocab.eos)
        lm_probs = np.append(lm_probs, p[vocab.eos])

    n_attr = len(config.targets)
    attr = np.empty((n_attr, len(tokens)))
    for j, (name, label) in enumerate(config.targets):
        clf = classifiers[name]
        state = states[name] if states is not None else begin_prefix(clf, history, prefix)
        attr[j] = state.candidate_posteriors(tokens)[:, clf.index(label)]

    eco = config.mode == "eco"
    fn = config.strength_fn
    info = np.full(2 + 2 * n_attr, math.nan)
    scores = np.empty(len(tokens))
    best = _score_kernel(
        tokens,
        lm_probs,
        attr,
        k,
        float(config.lam),
        eco,
        1.0 / config.tau_lm,
        1.0 / config.tau_c,
        config.log_input,
        _VARIANT_CODE[fn.variant],
        math.log(fn.vocab_size) if fn.vocab_size else 0.0,
        math.nan if alpha_override is None else float(alpha_override),
        scores,
        info,
    )
    names = [name for name, _ in config.targets]
    trace = StepTrace(
        step=len(prefix),
        tokens=tokens,
        lm_probs=lm_probs,
        attr_probs=dict(zip(names, attr)),
        scores=scores,
        n_topk=k,
        chosen=int(tokens[best]),
        e_lm=float(info[0]),
        alpha_lm=float(info[1]),
    )
    if eco:
        for j, name in enumerate(names):
            trace.e_c[name] = float(info[2 + 2 * j])
            trace.alpha_c[name] = float(info[3 + 2 * j])
    return trace.chosen, trace


def decode(
    lm,
    classifiers: Mapping[str, PrefixClassifier],
    history,
    config: DecodeConfig,
    *,
    alpha_override: float | None = None,
):
    """Greedy controlled decode until EOS or ``config.max_len`` tokens.

    Returns ``(response_ids, DecodeTrace)``; the response keeps its EOS.
    """
    eos = lm.vocab.eos
    context = lm_context(history, (), lm.vocab)
    states = {name: begin_prefix(classifiers[name], history, ()) for name, _ in config.targets}
    prefix: list[int] = []
    steps: list[StepTrace] = []
    termination = "max_len"
    while len(prefix) < config.max_len:
        tok, st = decode_step(
            lm, classifiers, history, prefix, config, states=states, context=context, alpha_override=alpha_override
        )
        steps.append(st)
        prefix.append(tok)
        context.append(tok)
        if tok == eos:
            termination = "EOS"
            break
        for name in states:
            states[name] = states[name].extend(tok)
    return prefix, DecodeTrace(steps, list(prefix), termination)


def greedy_decode(lm, history, max_len: int = 128) -> list[int]:
    """Uncontrolled greedy decode: LM argmax at every step, lowest id on ties."""
    eos = lm.vocab.eos
    context = lm_context(history, (), lm.vocab)
    out: list[int] = []
    while len(out) < max_len:
        tok = int(np.argmax(lm.next_distribution(context)))
        out.append(tok)
        context.append(tok)
        if tok == eos:
            break
    return out


def brute_force_step_oracle(
    lm,
    classifiers: Mapping[str, PrefixClassifier],
    history,
    prefix: Sequence[int],
    config: DecodeConfig,
    *,
    alpha_override: float | None = None,
) -> int:
    """Reference next-token choice computed token by token with scalar math.

    Shares only the probability models with :func:`decode_step`: candidate
    selection, smoothing, entropy, strengths and scores are recomputed here
    independently.
    """
    vocab = lm.vocab
    p = lm.next_distribution(lm_context(history, prefix, vocab))
    V = len(p)
    ranked = sorted(range(V), key=lambda t: (-float(p[t]), t))
    top = ranked[: config.k]
    pool = top + ([vocab.eos] if vocab.eos not in top else [])

    attr = {
        name: {t: classifier_prob(classifiers[name], history, list(prefix) + [t], label) for t in pool}
        for name, label in config.targets
    }

    def entropy_of(values, tau):
        xs = [math.log(v) / tau if config.log_input else v / tau for v in values]
        top_x = max(xs)
        total = sum(math.exp(x - top_x) for x in xs)
        qs = [math.exp(x - top_x) / total for x in xs]
        return -sum(q * math.log(q) for q in qs if q > 0)

    def alpha_of(e):
        if alpha_override is not None:
            return alpha_override
        variant = config.strength_fn.variant
        if variant == "reciprocal":
            return 1 + 1 / (1 + e)
        if variant == "exponential":
            return 1 + math.exp(-e)
        return 1 + math.log(config.strength_fn.vocab_size) - e

    if config.mode == "eco":
        a_lm = alpha_of(entropy_of([float(p[t]) for t in top], config.tau_lm))
        a_c = {name: alpha_of(entropy_of([attr[name][t] for t in top], config.tau_c)) for name in attr}
    else:
        a_lm = 1.0
        a_c = {name: 1.0 for name in attr}

    best_tok, best = None, -math.inf
    for t in sorted(pool):
        s = a_lm * math.log(float(p[t]))
        for name in attr:
            s += config.lam * a_c[name] * math.log(attr[name][t])
        if s > best:
            best_tok, best = t, s
    return best_tok


def trace_rows(trace: DecodeTrace, vocab=None):
    """Rows of the per-(step, candidate) trace table, one per attribute."""
    for st in trace.steps:
        for j, tok in enumerate(st.tokens):
            surface = vocab.string_of[tok] if vocab is not None else int(tok)
            for name, probs in st.attr_probs.items():
                yield (
                    st.step,
                    st.e_lm,
                    st.alpha_lm,
                    name,
                    st.e_c.get(name, math.nan),
                    st.alpha_c.get(name, 1.0),
                    surface,
                    float(st.lm_probs[j]),
                    float(probs[j]),
                    float(st.scores[j]),
                    int(tok == st.chosen),
                )


def write_trace_tsv(trace: DecodeTrace, path: str | Path, vocab=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in trace_rows(trace, vocab):
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
