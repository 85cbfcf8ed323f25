"""Acceptance criteria, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line, printed in the terminal summary, and
then asserts it. Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, tiny_world
from ecodec.cli import DEFAULT_GRID
from ecodec.control import StrengthFunction, smooth_and_entropy, strength
from ecodec.decoder import DecodeConfig, brute_force_step_oracle, decode, decode_step, greedy_decode
from ecodec.evaluation import (
    distinct_n,
    lambda_sweep,
    latency_benchmark,
    matched_comparison,
    rouge1,
    rougeL,
    strength_ablation,
    uncontrolled_point,
    write_tsv,
)
from ecodec.models.ngram import perplexity

VARIANTS = ("reciprocal", "exponential", "negative")
SINGLE = ("emotion", "dialog-act")
CFG = DecodeConfig(targets=(("_", "_"),))


def verdict(n, title, ok, detail, elapsed, budget):
    in_time = elapsed < budget
    passed = bool(ok) and in_time
    line = f"criterion {n:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail} [{elapsed:.1f}s / {budget:g}s]"
    ACCEPTANCE[n] = line
    print(line)
    assert passed, line


def _targets(ex, attrs):
    return tuple((a, ex.attributes[a]) for a in attrs)


def test_01_static_reduction(toy_bench):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    lm, clfs = toy_bench.lm, toy_bench.controllers
    worst, mismatched, n = 0.0, 0, 0
    for ex in toy_bench.examples[:120]:
        prefix = list(ex.response[: rng.integers(0, len(ex.response))])
        cfg = CFG.replace(targets=_targets(ex, SINGLE), lam=float(rng.uniform(0.1, 8)))
        ts, ss = decode_step(lm, clfs, ex.history, prefix, cfg.replace(mode="static"))
        te, se = decode_step(lm, clfs, ex.history, prefix, cfg.replace(mode="eco"), alpha_override=1.0)
        worst = max(worst, float(np.max(np.abs(ss.scores - se.scores))))
        mismatched += ts != te or not np.array_equal(ss.tokens, se.tokens)
        n += 1
    ok = n >= 100 and mismatched == 0 and worst <= 1e-12
    verdict(1, "static reduction", ok, f"{n} contexts, {mismatched} token mismatches, max score diff {worst:.1e}",
            time.perf_counter() - t0, 60)


def test_02_lambda_zero_neutrality(toy_bench):
    t0 = time.perf_counter()
    lm, clfs = toy_bench.lm, toy_bench.controllers
    V = lm.vocab.size
    greedy = [greedy_decode(lm, ex.history, CFG.max_len) for ex in toy_bench.examples]
    diffs, runs = 0, 0
    for mode in ("static", "eco"):
        for variant in VARIANTS:
            for ex, ref in zip(toy_bench.examples, greedy):
                cfg = CFG.replace(mode=mode, lam=0.0, strength_fn=StrengthFunction(variant, V),
                                  targets=_targets(ex, ("emotion",)))
                resp, _ = decode(lm, clfs, ex.history, cfg)
                diffs += bytes(np.array(resp, np.int64)) != bytes(np.array(ref, np.int64))
                runs += 1
    verdict(2, "lambda=0 neutrality", diffs == 0, f"{runs} decodes over {len(greedy)} test examples, {diffs} differ",
            time.perf_counter() - t0, 60)


def test_03_oracle_equivalence():
    t0 = time.perf_counter()
    vocab, lm, clf = tiny_world()
    assert vocab.size == 10
    rng = np.random.default_rng(3)
    agree = 0
    for i in range(200):
        hist = [tuple(int(t) for t in rng.integers(3, 10, rng.integers(1, 4)))]
        prefix = [int(t) for t in rng.integers(3, 10, rng.integers(0, 6))]
        cfg = DecodeConfig(mode=("eco", "static")[i % 2], lam=float(rng.uniform(0, 8)), k=vocab.size,
                           targets=(("s", ("pos", "neg")[int(rng.integers(2))]),),
                           strength_fn=StrengthFunction(VARIANTS[i % 3], vocab.size))
        agree += decode_step(lm, {"s": clf}, hist, prefix, cfg)[0] == brute_force_step_oracle(lm, {"s": clf}, hist, prefix, cfg)
    verdict(3, "oracle equivalence", agree == 200, f"{agree}/200 steps agree", time.perf_counter() - t0, 10)


def test_04_entropy_and_strength_bounds():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    bad_e = 0
    for i in range(10_000):
        k = int(rng.integers(2, 101))
        v = rng.dirichlet(np.full(k, float(rng.choice([0.05, 1.0, 20.0]))))
        v = np.maximum(v, 1e-300)
        _, e = smooth_and_entropy(v, float(rng.choice([0.1, 1.0, 10.0])), log_input=bool(i % 2))
        bad_e += not (0.0 <= e <= math.log(k))
    grid = np.linspace(0.0, math.log(50), 100)
    problems = []
    for variant in VARIANTS:
        fn = StrengthFunction(variant, 50)
        a = np.array([strength(float(e), fn) for e in grid])
        if not np.all(np.diff(a) < 0):
            problems.append(f"{variant} not strictly decreasing")
        if variant != "negative":
            if strength(0.0, fn) != 2.0:
                problems.append(f"{variant}(0) != 2")
            if not np.all((a > 1) & (a <= 2)):
                problems.append(f"{variant} outside (1, 2]")
    ok = bad_e == 0 and not problems
    verdict(4, "entropy and strength bounds", ok,
            f"10000 distributions, {bad_e} out of [0, ln k]; {'; '.join(problems) or 'strengths ok'}",
            time.perf_counter() - t0, 10)


def test_05_temperature_monotonicity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    taus = (0.1, 0.5, 1.0, 5.0, 10.0)
    violations = 0
    for _ in range(1000):
        v = rng.dirichlet(np.ones(int(rng.integers(2, 51))))
        hs = [smooth_and_entropy(v, tau)[1] for tau in taus]
        violations += not all(a < b for a, b in zip(hs, hs[1:]))
    verdict(5, "temperature monotonicity", violations == 0, f"1000 vectors, {violations} violations",
            time.perf_counter() - t0, 10)


@pytest.fixture(scope="module")
def sweeps(toy_bench):
    """Full lambda sweeps on the test split, shared by criteria 6, 7 and 10."""
    out, times = {}, {}
    for attrs in (("emotion",), ("dialog-act",), SINGLE):
        t0 = time.perf_counter()
        base = uncontrolled_point(toy_bench, attrs)
        pts = lambda_sweep(DEFAULT_GRID, ("static", "eco"), toy_bench, CFG, attrs)
        out[attrs] = (base, pts)
        times[attrs] = time.perf_counter() - t0
    return out, times


def test_06_trend_single_attribute(sweeps):
    results, times = sweeps
    wins = total = 0
    parts, pareto_ok = [], True
    for attr in SINGLE:
        base, pts = results[(attr,)]
        mc = matched_comparison(pts, base.perplexity, (attr,))
        wins += sum(mc.wins)
        total += len(mc.wins)
        pareto_ok &= not mc.dominated
        parts.append(f"{attr} {sum(mc.wins)}/{len(mc.wins)} wins, {len(mc.dominated)} dominated eco points")
        for e, s in mc.dominated:
            parts.append(f"  eco lambda={e.lam:g} ({e.accuracy[attr]:.3f}, ppl {e.perplexity:.4f}) < static "
                         f"lambda={s.lam:g} ({s.accuracy[attr]:.3f}, ppl {s.perplexity:.4f})")
    rate = wins / total if total else math.nan
    ok = total > 0 and rate >= 0.70 and pareto_ok
    detail = f"win rate {rate:.2f} over {total} matched points (need >= 0.70), Pareto {'ok' if pareto_ok else 'violated'}; " + "; ".join(parts)
    verdict(6, "trend at matched fluency", ok, detail, sum(times[(a,)] for a in SINGLE), 600)


def test_07_trend_multi_attribute(sweeps):
    results, times = sweeps
    base, pts = results[SINGLE]
    mc = matched_comparison(pts, base.perplexity, SINGLE)
    rate = mc.win_rate
    ok = len(mc.wins) > 0 and rate >= 0.60
    verdict(7, "multi-attribute at matched fluency", ok,
            f"eco >= static on both attributes at {sum(mc.wins)}/{len(mc.wins)} matched points (rate {rate:.2f}, need >= 0.60)",
            times[SINGLE], 600)


def test_08_latency(toy_bench):
    t0 = time.perf_counter()
    rep = latency_benchmark(toy_bench, CFG, ("emotion",), repetitions=15)
    verdict(8, "latency overhead", rep.ratio <= 1.10,
            f"static {rep.static_ms:.4f} ms/token, eco {rep.eco_ms:.4f} ms/token, ratio {rep.ratio:.3f} (need <= 1.10)",
            time.perf_counter() - t0, 120)


def test_09_metric_units():
    t0 = time.perf_counter()

    class Uniform:
        def next_distribution(self, ctx):
            return np.full(23, 1 / 23)

    checks = {
        "rouge1": rouge1("a b c".split(), "a c d".split()) == 2 / 3,
        "rougeL": rougeL("a b c".split(), "a c d".split()) == 2 / 3,
        "dist1 abc": distinct_n(["a b c".split()], 1) == 1.0,
        "dist1 aaa": distinct_n(["a a a".split()], 1) == 1 / 3,
        "ppl uniform": abs(perplexity(Uniform(), [1, 2, 3, 4]) - 23) < 1e-12,
    }
    failed = [k for k, v in checks.items() if not v]
    verdict(9, "metric unit cases", not failed, f"{len(checks) - len(failed)}/{len(checks)} exact",
            time.perf_counter() - t0, 1)


def test_10_strength_ablation(toy_bench, tmp_path):
    t0 = time.perf_counter()
    tables = []
    for run in range(2):
        rows = []
        for attr in SINGLE:
            for variant, pts in strength_ablation(DEFAULT_GRID, toy_bench, CFG, (attr,)).items():
                rows += [(variant, p.lam, attr, p.accuracy[attr], p.perplexity, p.dist1, p.dist2) for p in pts]
        path = tmp_path / f"ablation-{run}.tsv"
        write_tsv(path, ("strength_fn", "lambda", "attr", "accuracy", "perplexity", "dist1", "dist2"), rows)
        tables.append(path.read_bytes())
    complete = len(rows) == len(VARIANTS) * len(SINGLE) * len(DEFAULT_GRID)
    same = tables[0] == tables[1]
    verdict(10, "strength-function ablation", complete and same,
            f"{len(rows)} rows over {len(VARIANTS)} functions, rerun {'identical' if same else 'differs'}",
            time.perf_counter() - t0, 900)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
