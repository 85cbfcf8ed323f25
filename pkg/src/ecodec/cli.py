"""Command-line entry point: train models, decode, evaluate, sweep, benchmark.

Every command reads an optional flat ``key = value`` config file
(``--config``); flags given on the command line win over file values. Keys
are flag names without the leading dashes (``split-seed = 3``). Outputs go
under ``--out``.

Exit codes: 0 success, 2 user or configuration error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path

from .control import STRENGTH_VARIANTS, StrengthFunction
from .corpus import DEFAULT_SCHEMA, DatasetError, Vocabulary, detokenize, tokenize
from .decoder import MODES, DecodeConfig, decode, write_trace_tsv
from .evaluation import (
    Bench,
    SeedCollisionError,
    evaluate_responses,
    export_entropy_summary,
    baseline_responses,
    decode_examples,
    lambda_sweep,
    latency_benchmark,
    matched_comparison,
    strength_ablation,
    tau_sweep,
    uncontrolled_point,
    write_curve_svg,
    write_curve_tsv,
    write_sweep_tsv,
    write_tsv,
    ENTROPY_COLUMNS,
)
from .experiment import Seeds, Splits, fit_controller, fit_evaluator, fit_lm, heldout_accuracy, prepare_splits
from .models.classifier import PrefixClassifier
from .models.ngram import NGramLM, lm_context, perplexity
from .toydata import bundled_path

DEFAULT_GRID = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)
DEFAULT_TAUS = (0.1, 0.5, 1.0, 5.0, 10.0)


class UserError(Exception):
    """Bad input from the user; reported without a traceback, exit code 2."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    data: Path
    out: Path
    models: Path
    schema: dict[str, tuple[str, ...]]
    split_seed: int = 0
    min_count: int = 2
    controller_seeds: dict[str, int] = field(default_factory=dict)
    evaluator_seed: int = 97
    decode: DecodeConfig | None = None
    strength_variant: str = "reciprocal"

    @property
    def seeds(self) -> Seeds:
        return Seeds(self.split_seed, self.controller_seeds, self.evaluator_seed)

    def check(self) -> None:
        for name in ("data", "out", "models"):
            if not str(getattr(self, name)):
                raise UserError(f"{name} path must not be empty")
        for attr in self.schema:
            if self.seeds.controller_seed(attr) == self.evaluator_seed:
                raise UserError(
                    f"evaluator seed {self.evaluator_seed} equals the {attr} controller seed; they must differ"
                )


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UserError(f"cannot read config {path}: {exc.strerror}") from None
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UserError(f"{path}: line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _pairs(text: str) -> tuple[tuple[str, str], ...]:
    out = []
    for item in _names(text):
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"expected name=value, got {item!r}")
        k, v = item.split("=", 1)
        out.append((k.strip(), v.strip()))
    return tuple(out)


def _int_pairs(text: str) -> dict[str, int]:
    try:
        return {k: int(v) for k, v in _pairs(text)}
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be integers: {text!r}") from None


_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run")
    g.add_argument("--config", help="flat key = value file; flags override it")
    g.add_argument("--data", default=str(bundled_path()), help="JSON-lines dataset (default: bundled toy corpus)")
    g.add_argument("--schema", help="JSON file mapping attribute name to its class list")
    g.add_argument("--out", default="out", help="output directory")
    g.add_argument("--models", help="model directory (default: OUT/models)")
    g.add_argument("--split-seed", type=int, default=0)
    g.add_argument("--min-count", type=int, default=2)
    g.add_argument("--clf-seeds", type=_int_pairs, default={}, help="controller hash seeds, e.g. emotion=11,dialog-act=12")
    g.add_argument("--evaluator-seed", type=int, default=97)


def _add_decode(p: argparse.ArgumentParser, targets=False) -> None:
    g = p.add_argument_group("decoding")
    g.add_argument("--mode", choices=MODES, default="eco")
    g.add_argument("--lambda", dest="lam", type=float, default=4.0)
    g.add_argument("--k", type=int, default=50)
    g.add_argument("--tau-lm", type=float, default=1.0)
    g.add_argument("--tau-c", type=float, default=1.0)
    g.add_argument("--strength-fn", choices=STRENGTH_VARIANTS, default="reciprocal")
    g.add_argument("--max-len", type=int, default=128)
    g.add_argument("--log-input", action="store_true", help="smooth log-probabilities instead of probabilities")
    if targets:
        g.add_argument("--targets", type=_pairs, required=True, help="attr=class[,attr=class]")
    else:
        g.add_argument("--attributes", type=_names, default=("emotion",), help="attributes to control, comma-separated")
    g.add_argument("--limit", type=int, help="use only the first N test examples")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ecodec", description="Weighted decoding with entropy-adaptive control strength.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train-lm", help="train the decoding LM and the reference (fluency) LM")
    _add_common(p)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--discount", type=float, default=0.75)
    p.add_argument("--ref-order", type=int, default=2)

    p = sub.add_parser("train-clf", help="train controller classifiers (and evaluators)")
    _add_common(p)
    p.add_argument("--attribute", type=_names, help="attributes to train, comma-separated (default: all)")
    p.add_argument("--evaluator", action="store_true", help="also train the independent evaluator")
    p.add_argument("--buckets", type=int, default=4096)

    p = sub.add_parser("decode", help="generate one response")
    _add_common(p)
    _add_decode(p, targets=True)
    p.add_argument("--history", action="append", default=[], help="one prior turn; repeat for more")
    p.add_argument("--trace", help="write the per-step trace TSV here")

    p = sub.add_parser("eval", help="metrics for decodes of the test split")
    _add_common(p)
    _add_decode(p)
    p.add_argument("--controlled", action="store_true", help="evaluate controlled decodes instead of uncontrolled")

    p = sub.add_parser("sweep", help="lambda sweep: accuracy/fluency trade-off per mode")
    _add_common(p)
    _add_decode(p)
    p.add_argument("--grid", type=_floats, default=DEFAULT_GRID)
    p.add_argument("--modes", type=_names, default=MODES)
    p.add_argument("--tolerance", type=float, default=0.02, help="relative fluency band for matched points")

    p = sub.add_parser("tau-sweep", help="eco decodes across smoothing temperatures")
    _add_common(p)
    _add_decode(p)
    p.add_argument("--taus", type=_floats, default=DEFAULT_TAUS)

    p = sub.add_parser("bench", help="per-token latency, static vs eco")
    _add_common(p)
    _add_decode(p)
    p.add_argument("--reps", type=int, default=5)

    p = sub.add_parser("entropy-dump", help="per-token LM entropy table")
    _add_common(p)
    _add_decode(p)

    p = sub.add_parser("ablate", help="lambda sweep under each strength function")
    _add_common(p)
    _add_decode(p)
    p.add_argument("--grid", type=_floats, default=DEFAULT_GRID)
    return ap


def parse_args(argv=None) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        file_values = read_config_file(args.config)
        sub = ap._subparsers._group_actions[0].choices[args.command]
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in file_values.items():
            if key not in actions or key in ("config", "help"):
                raise UserError(f"{args.config}: unknown key {key!r} for {args.command}")
            action = actions[key]
            if isinstance(action, argparse._StoreTrueAction):
                if value.lower() not in _BOOL:
                    raise UserError(f"{args.config}: {key} must be true or false")
                defaults[key] = _BOOL[value.lower()]
            else:
                # argparse converts string defaults with the option's type
                defaults[key] = value
        sub.set_defaults(**defaults)
        args = ap.parse_args(argv)
    return args


def run_config(args) -> RunConfig:
    schema = DEFAULT_SCHEMA
    if args.schema:
        try:
            schema = {k: tuple(v) for k, v in json.loads(Path(args.schema).read_text(encoding="utf-8")).items()}
        except (OSError, ValueError) as exc:
            raise UserError(f"cannot read schema {args.schema}: {exc}") from None
    out = Path(args.out)
    cfg = RunConfig(
        data=Path(args.data),
        out=out,
        models=Path(args.models) if args.models else out / "models",
        schema=dict(schema),
        split_seed=args.split_seed,
        min_count=args.min_count,
        controller_seeds={**Seeds().controllers, **args.clf_seeds},
        evaluator_seed=args.evaluator_seed,
    )
    if hasattr(args, "mode"):
        cfg.strength_variant = args.strength_fn
        try:
            # the strength function is bound to the vocabulary later; sweeps
            # replace the placeholder target with each example's own labels
            cfg.decode = DecodeConfig(
                mode=args.mode,
                lam=args.lam,
                k=args.k,
                tau_lm=args.tau_lm,
                tau_c=args.tau_c,
                max_len=args.max_len,
                targets=getattr(args, "targets", None) or (("_", "_"),),
                log_input=args.log_input,
            )
        except ValueError as exc:
            raise UserError(str(exc)) from None
    cfg.check()
    return cfg


# ---------------------------------------------------------------------------
# shared plumbing


def _load_splits(cfg: RunConfig) -> Splits:
    if not cfg.data.is_file():
        raise UserError(f"dataset not found: {cfg.data}")
    return prepare_splits(cfg.data, cfg.schema, cfg.split_seed, min_count=cfg.min_count)


def _need(path: Path, hint: str) -> Path:
    if not path.is_file():
        raise UserError(f"missing {path}; run `ecodec {hint}` first")
    return path


def _check_vocab(cfg: RunConfig, splits: Splits) -> None:
    saved = Vocabulary.load(_need(cfg.models / "vocab.txt", "train-lm"))
    if saved != splits.vocab:
        raise UserError(f"{cfg.models / 'vocab.txt'} was built from different data or settings; rerun train-lm")


def _load_bench(cfg: RunConfig, attrs, limit=None) -> tuple[Bench, Splits]:
    splits = _load_splits(cfg)
    _check_vocab(cfg, splits)
    for a in attrs:
        if a not in cfg.schema:
            raise UserError(f"unknown attribute {a!r}; schema has {', '.join(cfg.schema)}")
    try:
        lm = NGramLM.load(_need(cfg.models / "lm.json", "train-lm"), splits.vocab)
        ref = NGramLM.load(_need(cfg.models / "ref_lm.json", "train-lm"), splits.vocab)
        controllers, evaluators = {}, {}
        for a in attrs:
            controllers[a] = PrefixClassifier.load(_need(cfg.models / f"clf-{a}.json", f"train-clf --attribute {a}"))
            evaluators[a] = PrefixClassifier.load(
                _need(cfg.models / f"eval-{a}.json", f"train-clf --evaluator --attribute {a}")
            )
    except (ValueError, KeyError) as exc:
        raise UserError(f"unusable model file: {exc}") from None
    test = splits.test if limit is None else splits.test[:limit]
    if not test:
        raise UserError("no test examples to evaluate")
    return Bench(lm, controllers, evaluators, ref, list(test)), splits


def _decode_cfg(cfg: RunConfig, vocab_size: int) -> DecodeConfig:
    return cfg.decode.replace(strength_fn=StrengthFunction(cfg.strength_variant, vocab_size))


def _fmt(x) -> str:
    return f"{x:.4f}" if isinstance(x, float) else str(x)


def corpus_perplexity(lm, examples) -> float:
    """Token-weighted perplexity of the responses given their histories."""
    nll, n = 0.0, 0
    for ex in examples:
        ppl = perplexity(lm, ex.response, lm_context(ex.history, (), lm.vocab))
        nll += math.log(ppl) * len(ex.response)
        n += len(ex.response)
    return math.exp(nll / n)


# ---------------------------------------------------------------------------
# commands


def cmd_train_lm(args, cfg: RunConfig) -> int:
    splits = _load_splits(cfg)
    cfg.models.mkdir(parents=True, exist_ok=True)
    lm = fit_lm(splits.train, splits.vocab, args.order, args.discount)
    ref = fit_lm(splits.valid, splits.vocab, args.ref_order, args.discount)
    splits.vocab.save(cfg.models / "vocab.txt")
    lm.save(cfg.models / "lm.json")
    ref.save(cfg.models / "ref_lm.json")
    print(f"vocab size {splits.vocab.size}; train/valid/test = {len(splits.train)}/{len(splits.valid)}/{len(splits.test)}")
    print(f"train perplexity {corpus_perplexity(lm, splits.train):.4f}")
    print(f"valid perplexity {corpus_perplexity(lm, splits.valid):.4f}")
    return 0


def cmd_train_clf(args, cfg: RunConfig) -> int:
    splits = _load_splits(cfg)
    attrs = args.attribute or tuple(cfg.schema)
    for a in attrs:
        if a not in cfg.schema:
            raise UserError(f"unknown attribute {a!r}; schema has {', '.join(cfg.schema)}")
    cfg.models.mkdir(parents=True, exist_ok=True)
    V = splits.vocab.size
    for a in attrs:
        seed = cfg.seeds.controller_seed(a)
        try:
            clf = fit_controller(splits.train, a, cfg.schema[a], V, seed, args.buckets)
        except (KeyError, ValueError) as exc:
            raise UserError(f"{a}: {exc}") from None
        clf.save(cfg.models / f"clf-{a}.json")
        print(f"{a}: controller (seed {seed}) held-out accuracy {heldout_accuracy(clf, splits.valid, a):.4f}")
        if args.evaluator:
            ev = fit_evaluator(splits.train, a, cfg.schema[a], V, cfg.evaluator_seed, args.buckets)
            ev.save(cfg.models / f"eval-{a}.json")
            print(f"{a}: evaluator (seed {cfg.evaluator_seed}) held-out accuracy {heldout_accuracy(ev, splits.valid, a):.4f}")
    return 0


def cmd_decode(args, cfg: RunConfig) -> int:
    attrs = [a for a, _ in cfg.decode.targets]
    bench, splits = _load_bench(cfg, attrs, limit=None)
    for a, label in cfg.decode.targets:
        if label not in bench.controllers[a].classes:
            raise UserError(f"unknown class {label!r} for {a}; choose from {', '.join(bench.controllers[a].classes)}")
    vocab = splits.vocab
    history = [tokenize(turn, vocab) for turn in args.history]
    resp, trace = decode(bench.lm, bench.controllers, history, _decode_cfg(cfg, vocab.size))
    print(detokenize(resp, vocab))
    if args.trace:
        Path(args.trace).parent.mkdir(parents=True, exist_ok=True)
        write_trace_tsv(trace, args.trace, vocab)
    return 0


def _targets(bench, attrs):
    return {a: [ex.attributes[a] for ex in bench.examples] for a in attrs}


def cmd_eval(args, cfg: RunConfig) -> int:
    bench, splits = _load_bench(cfg, args.attributes, args.limit)
    if args.controlled:
        dcfg = _decode_cfg(cfg, splits.vocab.size)
        responses, _ = decode_examples(bench, dcfg, args.attributes)
        system = f"{dcfg.mode} lambda={dcfg.lam:g}"
    else:
        responses = baseline_responses(bench, cfg.decode.max_len)
        system = "uncontrolled"
    rep = evaluate_responses(
        responses, bench.examples, bench.evaluators, bench.ref_lm, _targets(bench, args.attributes), bench.controllers.values()
    )
    cfg.out.mkdir(parents=True, exist_ok=True)
    rows = [
        (system, a, acc, rep.perplexity, rep.dist1, rep.dist2, rep.rouge1, rep.rougeL, rep.n)
        for a, acc in rep.accuracy.items()
    ]
    write_tsv(
        cfg.out / "eval.tsv",
        ("system", "attr", "accuracy", "perplexity", "dist1", "dist2", "rouge1", "rougeL", "n"),
        rows,
    )
    for r in rows:
        print("\t".join(_fmt(x) for x in r))
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    bad = [m for m in args.modes if m not in MODES]
    if bad:
        raise UserError(f"unknown mode(s) {bad}; choose from {MODES}")
    bench, splits = _load_bench(cfg, args.attributes, args.limit)
    dcfg = _decode_cfg(cfg, splits.vocab.size)
    base = uncontrolled_point(bench, args.attributes, dcfg.max_len)
    points = lambda_sweep(args.grid, args.modes, bench, dcfg, args.attributes)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_sweep_tsv(cfg.out / "sweep.tsv", [base] + points)
    for a in args.attributes:
        write_curve_tsv(cfg.out / f"curve-{a}.tsv", points, a)
        write_curve_svg(cfg.out / f"curve-{a}.svg", points, a, base.perplexity)
    summary = [("baseline_perplexity", base.perplexity)]
    if set(args.modes) >= set(MODES):
        mc = matched_comparison(points, base.perplexity, args.attributes, args.tolerance)
        summary += [
            ("matched_points", len(mc.wins)),
            ("eco_wins", sum(mc.wins)),
            ("win_rate", mc.win_rate),
            ("dominated_eco_points", len(mc.dominated)),
        ]
    write_tsv(cfg.out / "matched.tsv", ("key", "value"), summary)
    for p in points:
        print(f"lambda={p.lam:g}\t{p.mode}\t" + "\t".join(f"{a}={p.accuracy[a]:.4f}" for a in args.attributes)
              + f"\tppl={p.perplexity:.4f}")
    for k, v in summary:
        print(f"{k}\t{_fmt(v)}")
    return 0


def cmd_tau_sweep(args, cfg: RunConfig) -> int:
    bench, splits = _load_bench(cfg, args.attributes, args.limit)
    dcfg = _decode_cfg(cfg, splits.vocab.size)
    points = tau_sweep(args.taus, dcfg.lam, bench, dcfg, args.attributes)
    rows = [(tau, a, p.accuracy[a], p.perplexity) for tau, p in zip(args.taus, points) for a in args.attributes]
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_tsv(cfg.out / "tau_sweep.tsv", ("tau", "attr", "accuracy", "perplexity"), rows)
    for r in rows:
        print("\t".join(_fmt(x) for x in r))
    return 0


def cmd_bench(args, cfg: RunConfig) -> int:
    bench, splits = _load_bench(cfg, args.attributes, args.limit)
    try:
        rep = latency_benchmark(bench, _decode_cfg(cfg, splits.vocab.size), args.attributes, args.reps)
    except ValueError as exc:
        raise UserError(str(exc)) from None
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_tsv(
        cfg.out / "bench.tsv",
        ("static_ms_per_token", "eco_ms_per_token", "ratio", "repetitions"),
        [(rep.static_ms, rep.eco_ms, rep.ratio, args.reps)],
    )
    print(f"static {rep.static_ms:.5f} ms/token, eco {rep.eco_ms:.5f} ms/token, ratio {rep.ratio:.4f}")
    return 0


def cmd_entropy_dump(args, cfg: RunConfig) -> int:
    bench, splits = _load_bench(cfg, args.attributes, args.limit)
    dcfg = _decode_cfg(cfg, splits.vocab.size)
    _, traces = decode_examples(bench, dcfg, args.attributes, keep_traces=True)
    rows = export_entropy_summary(traces, splits.vocab, dcfg.tau_lm, dcfg.log_input)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_tsv(cfg.out / "entropy.tsv", ENTROPY_COLUMNS, rows)
    print(f"{len(rows)} tokens written to {cfg.out / 'entropy.tsv'}")
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    bench, splits = _load_bench(cfg, args.attributes, args.limit)
    dcfg = _decode_cfg(cfg, splits.vocab.size)
    table = strength_ablation(args.grid, bench, dcfg, args.attributes)
    rows = [
        (variant, p.lam, a, p.accuracy[a], p.perplexity, p.dist1, p.dist2)
        for variant, points in table.items()
        for p in points
        for a in args.attributes
    ]
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_tsv(cfg.out / "ablation.tsv", ("strength_fn", "lambda", "attr", "accuracy", "perplexity", "dist1", "dist2"), rows)
    for r in rows:
        print("\t".join(_fmt(x) for x in r))
    return 0


COMMANDS = {
    "train-lm": cmd_train_lm,
    "train-clf": cmd_train_clf,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "tau-sweep": cmd_tau_sweep,
    "bench": cmd_bench,
    "entropy-dump": cmd_entropy_dump,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        cfg = run_config(args)
        return COMMANDS[args.command](args, cfg)
    except SystemExit as exc:  # argparse usage errors
        return exc.code if isinstance(exc.code, int) else 2
    except (UserError, DatasetError, SeedCollisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        print("internal error", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
