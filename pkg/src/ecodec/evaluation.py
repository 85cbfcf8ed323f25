"""Metrics and experiment harnesses: attribute accuracy, Dist-n, ROUGE,
perplexity fluency, lambda/tau sweeps, strength-function ablation, latency
benchmark, and per-token entropy export."""

from __future__ import annotations

import csv
import gc
import math
import statistics
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .control import StrengthFunction, smooth_and_entropy
from .decoder import DecodeConfig, DecodeTrace, decode, greedy_decode
from .models.classifier import PrefixClassifier
from .models.ngram import lm_context, perplexity

SWEEP_COLUMNS = ("lambda", "mode", "attr", "accuracy", "perplexity", "dist1", "dist2")
ENTROPY_COLUMNS = ("token", "e_lm", "lm_prob")


class SeedCollisionError(ValueError):
    """The evaluator shares its hash seed with a controller classifier."""


# ---------------------------------------------------------------------------
# metrics


def _strip_eos(tokens: Sequence, eos=None) -> list:
    toks = list(tokens)
    if eos is not None and toks and toks[-1] == eos:
        toks.pop()
    return toks


def attribute_accuracy(
    responses: Sequence[Sequence[int]],
    histories: Sequence,
    evaluator: PrefixClassifier,
    target: str | Sequence[str],
    controllers: Iterable[PrefixClassifier] = (),
) -> float:
    """Share of responses the evaluator assigns to the target class.

    ``target`` is one label for all responses or one per response. Every
    controller classifier used during decoding must be passed so the hash
    seeds can be checked.
    """
    for clf in controllers:
        if clf.hash_seed == evaluator.hash_seed:
            raise SeedCollisionError(
                f"evaluator hash seed {evaluator.hash_seed} equals a controller's; "
                "train the evaluator with a distinct seed"
            )
    if not responses:
        raise ValueError("no responses to evaluate")
    if len(histories) != len(responses):
        raise ValueError("need one history per response")
    targets = [target] * len(responses) if isinstance(target, str) else list(target)
    if len(targets) != len(responses):
        raise ValueError("need one target per response")
    hits = sum(evaluator.predict(h, r) == t for r, h, t in zip(responses, histories, targets))
    return hits / len(responses)


def _ngrams(tokens: Sequence, n: int) -> list[tuple]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def distinct_n(responses: Sequence[Sequence], n: int, per_response: bool = False) -> float:
    """Unique n-grams over total n-grams, pooled over the corpus by default.

    ``per_response=True`` averages the ratio over responses long enough to
    hold an n-gram instead.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not responses:
        raise ValueError("no responses")
    grams = [_ngrams(list(r), n) for r in responses]
    if not any(grams):
        raise ValueError(f"every response is shorter than {n} tokens")
    if per_response:
        ratios = [len(set(g)) / len(g) for g in grams if g]
        return sum(ratios) / len(ratios)
    pooled = [g for gs in grams for g in gs]
    return len(set(pooled)) / len(pooled)


def _f1(overlap: float, n_hyp: int, n_ref: int) -> float:
    if overlap == 0:
        return 0.0
    p, r = overlap / n_hyp, overlap / n_ref
    return 2 * p * r / (p + r)


def rouge1(hyp: Sequence, ref: Sequence) -> float:
    """Unigram-overlap F1 with clipped counts."""
    if not ref:
        raise ValueError("reference is empty")
    if not hyp:
        return 0.0
    overlap = sum((Counter(hyp) & Counter(ref)).values())
    return _f1(overlap, len(hyp), len(ref))


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rougeL(hyp: Sequence, ref: Sequence) -> float:
    """Longest-common-subsequence F1."""
    if not ref:
        raise ValueError("reference is empty")
    if not hyp:
        return 0.0
    return _f1(lcs_length(hyp, ref), len(hyp), len(ref))


def mean_perplexity(ref_lm, responses: Sequence[Sequence[int]], histories: Sequence) -> float:
    """Average per-response perplexity under ``ref_lm`` (responses include EOS)."""
    vals = [perplexity(ref_lm, r, lm_context(h, (), ref_lm.vocab)) for r, h in zip(responses, histories)]
    return sum(vals) / len(vals)


@dataclass
class EvalReport:
    accuracy: dict[str, float]
    dist1: float
    dist2: float
    rouge1: float
    rougeL: float
    perplexity: float
    n: int


def evaluate_responses(
    responses,
    examples,
    evaluators: Mapping[str, PrefixClassifier],
    ref_lm,
    targets: Mapping[str, Sequence[str]],
    controllers: Iterable[PrefixClassifier] = (),
) -> EvalReport:
    """Full metric suite for responses generated from ``examples``.

    ``targets`` maps attribute name to one target label per response.
    ROUGE compares against each example's reference response; EOS is
    dropped before all n-gram metrics.
    """
    if not responses:
        raise ValueError("no responses")
    eos = ref_lm.vocab.eos
    controllers = list(controllers)
    histories = [ex.history for ex in examples]
    acc = {
        name: attribute_accuracy(responses, histories, evaluators[name], targets[name], controllers)
        for name in targets
    }
    bare = [_strip_eos(r, eos) for r in responses]
    refs = [_strip_eos(ex.response, eos) for ex in examples]
    return EvalReport(
        accuracy=acc,
        dist1=distinct_n(bare, 1),
        dist2=distinct_n(bare, 2) if any(len(b) >= 2 for b in bare) else 0.0,
        rouge1=sum(rouge1(h, r) for h, r in zip(bare, refs)) / len(bare),
        rougeL=sum(rougeL(h, r) for h, r in zip(bare, refs)) / len(bare),
        perplexity=mean_perplexity(ref_lm, responses, histories),
        n=len(responses),
    )


# ---------------------------------------------------------------------------
# experiment harnesses


@dataclass
class Bench:
    """Everything a decode experiment needs: models plus held-out examples."""

    lm: object
    controllers: dict[str, PrefixClassifier]
    evaluators: dict[str, PrefixClassifier]
    ref_lm: object
    examples: list


def _targets_for(ex, attrs: Sequence[str]) -> tuple[tuple[str, str], ...]:
    return tuple((a, ex.attributes[a]) for a in attrs)


def decode_examples(bench: Bench, config: DecodeConfig, attrs: Sequence[str], *, keep_traces=False):
    """Decode every example toward its own reference labels for ``attrs``."""
    responses, traces = [], []
    for ex in bench.examples:
        cfg = config.replace(targets=_targets_for(ex, attrs))
        resp, trace = decode(bench.lm, bench.controllers, ex.history, cfg)
        responses.append(resp)
        if keep_traces:
            traces.append(trace)
    return responses, traces


def baseline_responses(bench: Bench, max_len: int = 128) -> list[list[int]]:
    return [greedy_decode(bench.lm, ex.history, max_len) for ex in bench.examples]


@dataclass
class SweepPoint:
    lam: float
    mode: str
    accuracy: dict[str, float]
    perplexity: float
    dist1: float
    dist2: float
    label: str = ""

    def rows(self):
        for name, acc in self.accuracy.items():
            yield (self.lam, self.mode, name, acc, self.perplexity, self.dist1, self.dist2)


def _point(bench, responses, attrs, lam, mode, label="") -> SweepPoint:
    rep = evaluate_responses(
        responses,
        bench.examples,
        bench.evaluators,
        bench.ref_lm,
        {a: [ex.attributes[a] for ex in bench.examples] for a in attrs},
        bench.controllers.values(),
    )
    return SweepPoint(lam, mode, rep.accuracy, rep.perplexity, rep.dist1, rep.dist2, label)


def uncontrolled_point(bench: Bench, attrs: Sequence[str], max_len: int = 128) -> SweepPoint:
    return _point(bench, baseline_responses(bench, max_len), attrs, 0.0, "none")


def lambda_sweep(
    grid: Sequence[float],
    modes: Sequence[str],
    bench: Bench,
    config: DecodeConfig,
    attrs: Sequence[str],
) -> list[SweepPoint]:
    """One :class:`SweepPoint` per ``(lambda, mode)``, grid order then mode order."""
    if not grid:
        raise ValueError("empty lambda grid")
    points = []
    for lam in grid:
        for mode in modes:
            responses, _ = decode_examples(bench, config.replace(lam=lam, mode=mode), attrs)
            points.append(_point(bench, responses, attrs, lam, mode))
    return points


def tau_sweep(
    taus: Sequence[float], lam: float, bench: Bench, config: DecodeConfig, attrs: Sequence[str]
) -> list[SweepPoint]:
    """Eco decodes at fixed ``lam`` with ``tau_lm = tau_c = tau`` for each tau."""
    if not taus or any(t <= 0 for t in taus):
        raise ValueError("tau grid must be non-empty and positive")
    points = []
    for tau in taus:
        cfg = config.replace(mode="eco", lam=lam, tau_lm=tau, tau_c=tau)
        responses, _ = decode_examples(bench, cfg, attrs)
        points.append(_point(bench, responses, attrs, lam, "eco", label=f"tau={tau:g}"))
    return points


def strength_ablation(
    grid: Sequence[float],
    bench: Bench,
    config: DecodeConfig,
    attrs: Sequence[str],
    variants: Sequence[str] = ("reciprocal", "exponential", "negative"),
) -> dict[str, list[SweepPoint]]:
    """Eco lambda sweep under each strength function."""
    V = bench.lm.vocab.size
    out = {}
    for variant in variants:
        cfg = config.replace(strength_fn=StrengthFunction(variant, V))
        pts = lambda_sweep(grid, ("eco",), bench, cfg, attrs)
        for p in pts:
            p.label = variant
        out[variant] = pts
    return out


# ---------------------------------------------------------------------------
# matched-fluency comparison


@dataclass
class MatchedComparison:
    """Static band points paired with eco's best band point at equal or
    better fluency (``None`` when eco has none)."""

    baseline_perplexity: float
    tolerance: float
    pairs: list[tuple[SweepPoint, SweepPoint | None]]
    wins: list[bool]
    dominated: list[tuple[SweepPoint, SweepPoint]] = field(default_factory=list)

    @property
    def win_rate(self) -> float:
        return sum(self.wins) / len(self.wins) if self.wins else math.nan


def is_matched(point: SweepPoint, baseline_ppl: float, tolerance: float = 0.02) -> bool:
    """Fluency no worse than ``(1 + tolerance)`` times the uncontrolled baseline."""
    return point.perplexity <= baseline_ppl * (1.0 + tolerance)


def dominates(a: SweepPoint, b: SweepPoint, attrs: Sequence[str]) -> bool:
    """``a`` is at least as accurate on every attribute and at least as fluent,
    and strictly better somewhere."""
    ge = all(a.accuracy[n] >= b.accuracy[n] for n in attrs) and a.perplexity <= b.perplexity
    gt = any(a.accuracy[n] > b.accuracy[n] for n in attrs) or a.perplexity < b.perplexity
    return ge and gt


def pareto_front(points: Sequence[SweepPoint], attrs: Sequence[str]) -> list[SweepPoint]:
    return [p for p in points if not any(dominates(q, p, attrs) for q in points if q is not p)]


def matched_comparison(
    points: Sequence[SweepPoint],
    baseline_ppl: float,
    attrs: Sequence[str],
    tolerance: float = 0.02,
) -> MatchedComparison:
    """Compare eco against static at fluency-matched operating points.

    Each mode's lambda is calibrated separately, as when tuning each method
    to the baseline's fluency: every static point with lambda > 0 inside the
    band (see :func:`is_matched`) is one matched point. Eco wins it if some
    eco band point with perplexity no higher is at least as accurate on every
    attribute. ``dominated`` lists eco Pareto points strictly dominated by
    a static point anywhere on the sweep.
    """
    static = [p for p in points if p.mode == "static"]
    eco = [p for p in points if p.mode == "eco"]
    eco_band = [p for p in eco if p.lam > 0 and is_matched(p, baseline_ppl, tolerance)]
    pairs, wins = [], []
    for s in sorted(static, key=lambda p: p.lam):
        if s.lam <= 0 or not is_matched(s, baseline_ppl, tolerance):
            continue
        rivals = [e for e in eco_band if e.perplexity <= s.perplexity]
        good = [e for e in rivals if all(e.accuracy[n] >= s.accuracy[n] for n in attrs)]
        best = good[0] if good else (max(rivals, key=lambda e: sum(e.accuracy[n] for n in attrs)) if rivals else None)
        pairs.append((s, best))
        wins.append(bool(good))
    dominated = [(e, s) for e in pareto_front(eco, attrs) for s in static if dominates(s, e, attrs)]
    return MatchedComparison(baseline_ppl, tolerance, pairs, wins, dominated)


# ---------------------------------------------------------------------------
# latency


@dataclass
class LatencyReport:
    static_ms: float
    eco_ms: float
    static_reps: list[float]
    eco_reps: list[float]

    @property
    def ratio(self) -> float:
        return self.eco_ms / self.static_ms


def _timed_decode(bench: Bench, config: DecodeConfig, ex, attrs) -> tuple[float, int]:
    cfg = config.replace(targets=_targets_for(ex, attrs))
    t0 = time.perf_counter()
    resp, _ = decode(bench.lm, bench.controllers, ex.history, cfg)
    return time.perf_counter() - t0, len(resp)


def latency_benchmark(
    bench: Bench,
    config: DecodeConfig,
    attrs: Sequence[str],
    repetitions: int = 5,
    modes: tuple[str, str] = ("static", "eco"),
) -> LatencyReport:
    """Median per-token decode time of two modes over the same inputs.

    Each repetition decodes every example once per mode, alternating which
    mode goes first from one example to the next, so machine drift hits
    both modes alike. One untimed warmup pass comes first and the garbage
    collector is paused while timing.
    """
    if repetitions < 3:
        raise ValueError("need at least 3 repetitions")
    if not bench.examples:
        raise ValueError("no examples to benchmark")
    cfgs = (config.replace(mode=modes[0]), config.replace(mode=modes[1]))
    for ex in bench.examples:
        for c in cfgs:
            _timed_decode(bench, c, ex, attrs)
    reps: tuple[list[float], list[float]] = ([], [])
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(repetitions):
            secs, toks = [0.0, 0.0], [0, 0]
            for i, ex in enumerate(bench.examples):
                for j in ((0, 1) if i % 2 == 0 else (1, 0)):
                    dt, n = _timed_decode(bench, cfgs[j], ex, attrs)
                    secs[j] += dt
                    toks[j] += n
            for j in (0, 1):
                reps[j].append(secs[j] * 1e3 / toks[j])
    finally:
        if gc_was_enabled:
            gc.enable()
    return LatencyReport(statistics.median(reps[0]), statistics.median(reps[1]), reps[0], reps[1])


# ---------------------------------------------------------------------------
# entropy export


def export_entropy_summary(traces: Sequence[DecodeTrace], vocab=None, tau_lm: float = 1.0, log_input=False):
    """One ``(token, e_lm, lm_prob)`` row per generated token.

    Eco traces carry their LM entropy; static traces don't measure it, so it
    is computed here from the recorded top-k probabilities.
    """
    if not traces:
        raise ValueError("no traces")
    rows = []
    for tr in traces:
        for st in tr.steps:
            e = st.e_lm
            if math.isnan(e):
                _, e = smooth_and_entropy(st.lm_probs[: st.n_topk], tau_lm, log_input)
            j = int((st.tokens == st.chosen).argmax())
            tok = vocab.string_of[st.chosen] if vocab is not None else st.chosen
            rows.append((tok, e, float(st.lm_probs[j])))
    return rows


# ---------------------------------------------------------------------------
# output files


def _fmt(x):
    return repr(x) if isinstance(x, float) else str(x)


def write_tsv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_sweep_tsv(path, points: Sequence[SweepPoint]) -> None:
    write_tsv(path, SWEEP_COLUMNS, (row for p in points for row in p.rows()))


def write_curve_tsv(path, points: Sequence[SweepPoint], attr: str) -> None:
    """Two-column (accuracy, perplexity) curve for one attribute, all modes."""
    write_tsv(path, ("accuracy", "perplexity"), ((p.accuracy[attr], p.perplexity) for p in points))


_PALETTE = {"static": "#c0392b", "eco": "#27ae60", "none": "#2c3e50"}


def write_curve_svg(path, points: Sequence[SweepPoint], attr: str, baseline_ppl: float | None = None) -> None:
    """Accuracy (x) vs perplexity (y) scatter, one series per mode."""
    W, H, pad = 480, 360, 48
    xs = [p.accuracy[attr] for p in points]
    ys = [p.perplexity for p in points] + ([baseline_ppl] if baseline_ppl else [])
    x0, x1 = min(xs + [0.0]), max(xs + [1.0])
    y0, y1 = min(ys), max(ys)
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def sy(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle">{attr} accuracy</text>',
        f'<text x="14" y="{H / 2}" transform="rotate(-90 14 {H / 2})" text-anchor="middle">perplexity</text>',
        f'<text x="{pad}" y="{H - pad + 14}" text-anchor="middle">{x0:.2f}</text>',
        f'<text x="{W - pad}" y="{H - pad + 14}" text-anchor="middle">{x1:.2f}</text>',
        f'<text x="{pad - 4}" y="{H - pad}" text-anchor="end">{y0:.2f}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end">{y1:.2f}</text>',
    ]
    if baseline_ppl:
        y = sy(baseline_ppl)
        out.append(f'<line x1="{pad}" y1="{y:.1f}" x2="{W - pad}" y2="{y:.1f}" stroke="#2980b9" stroke-dasharray="4 3"/>')
    modes = list(dict.fromkeys(p.mode for p in points))
    for i, mode in enumerate(modes):
        color = _PALETTE.get(mode, "#8e44ad")
        series = sorted((p for p in points if p.mode == mode), key=lambda p: p.lam)
        coords = " ".join(f"{sx(p.accuracy[attr]):.1f},{sy(p.perplexity):.1f}" for p in series)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1"/>')
        for p in series:
            out.append(
                f'<circle cx="{sx(p.accuracy[attr]):.1f}" cy="{sy(p.perplexity):.1f}" r="3" fill="{color}">'
                f"<title>{mode} lambda={p.lam:g}</title></circle>"
            )
        out.append(f'<text x="{W - pad - 60}" y="{pad + 14 * i}" fill="{color}">{mode}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
