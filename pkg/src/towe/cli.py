"""Command-line entry point.

Subcommands cover the whole workflow: train-vocab (BPE), prepare (encoded
dumps), train (multi-seed), evaluate, ablate, and predict.  Identical flags
and inputs always produce byte-identical output files; logs carry no
timestamps.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from collections import Counter
from pathlib import Path

from . import corpus, encoding, evaluate, model, subword, train
from .errors import CheckpointError, ToweError


def _sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require_files(*paths: str | None) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise ToweError(f"no such file: {p}")


def _load_tokenizer(vocab_path: str, merges_path: str | None):
    vocab = subword.load_vocab(vocab_path)
    if merges_path:
        tokenizer = subword.BpeTokenizer(subword.load_merges(merges_path), vocab)
    else:
        tokenizer = subword.WordpieceTokenizer(vocab)
    return tokenizer, vocab


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ToweError(f"{path}: line {line_no}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Fill flags still at their defaults from the key=value config file."""
    if not getattr(args, "config", None):
        return
    _require_files(args.config)
    converters = {bool: lambda s: s.lower() in ("1", "true", "yes"), type(None): str}
    for key, raw in _read_config_file(args.config).items():
        if not hasattr(args, key):
            raise ToweError(f"{args.config}: unknown config key {key!r}")
        if getattr(args, key) != parser.get_default(key):
            continue  # explicit flag wins
        default = parser.get_default(key)
        convert = converters.get(type(default), type(default))
        setattr(args, key, convert(raw))


def _parse_seeds(value: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in value.split(",") if s.strip() != "")
    except ValueError:
        raise ToweError(f"cannot parse seeds {value!r}") from None
    if not seeds:
        raise ToweError("at least one seed is required")
    return seeds


def _encode_split(path: str, split: str, tokenizer, args, mask: bool):
    dataset = corpus.load_dataset(path, split)
    return encoding.encode_dataset(
        dataset, tokenizer, args.variant,
        window=args.window, max_len=args.max_len, mask=mask,
    )


def _hp_for_training(args, vocab, features) -> model.Hyperparameters:
    if features is not None:
        dims = {mat.shape[1] for mat in features.values()}
        if len(dims) != 1:
            raise ToweError("external feature file has inconsistent dimensions")
        embed_dim = dims.pop()
        mode = "external_features"
    else:
        embed_dim = args.embed_dim
        mode = "learned_embeddings"
    return model.Hyperparameters(
        vocab_size=len(vocab),
        embed_dim=embed_dim,
        hidden_dim=args.hidden_dim,
        window=args.window,
        use_position=args.use_position,
        use_segment=args.use_segment,
        feature_mode=mode,
    )


def _hp_for_checkpoint(params, args, vocab, features) -> model.Hyperparameters:
    mode = "external_features" if features is not None else "learned_embeddings"
    hp = model.hyperparameters_from_checkpoint(
        params,
        use_position=args.use_position,
        use_segment=args.use_segment,
        feature_mode=mode,
    )
    if mode == "learned_embeddings" and hp.vocab_size != len(vocab):
        raise CheckpointError(
            f"checkpoint embeds {hp.vocab_size} pieces but the vocabulary has {len(vocab)}"
        )
    if hp.window != args.window:
        raise CheckpointError(
            f"checkpoint was trained with window {hp.window}, got --window {args.window}"
        )
    return hp


def _report_table(rows: list[tuple[str, evaluate.EvalReport]]) -> str:
    width = max(len(name) for name, _ in rows)
    lines = [
        f"{'run':<{width}}  {'P(%)':>7}  {'R(%)':>7}  {'F1(%)':>7}  {'tp':>5}  {'pred':>5}  {'gold':>5}"
    ]
    for name, r in rows:
        lines.append(
            f"{name:<{width}}  {evaluate.as_percent(r.precision):>7.2f}  "
            f"{evaluate.as_percent(r.recall):>7.2f}  {evaluate.as_percent(r.f1):>7.2f}  "
            f"{r.tp:>5}  {r.n_pred:>5}  {r.n_gold:>5}"
        )
    return "\n".join(lines)


def cmd_train_vocab(args) -> int:
    _require_files(args.corpus)
    counts = Counter()
    with open(args.corpus, encoding="utf-8") as handle:
        for line in handle:
            counts.update(line.split())
    merges, vocab = subword.train_bpe(counts, args.merges)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    subword.save_merges(merges, out / "merges.txt")
    subword.save_vocab(vocab, out / "vocab.txt")
    print(f"trained {len(merges)} merges over {len(counts)} distinct words")
    print(f"wrote {out / 'merges.txt'} and {out / 'vocab.txt'} ({len(vocab)} pieces)")
    return 0


def cmd_prepare(args) -> int:
    _require_files(args.data, args.vocab, args.merges)
    tokenizer, vocab = _load_tokenizer(args.vocab, args.merges)
    pairs = _encode_split(args.data, "train", tokenizer, args, mask=args.mask_aspect)
    encoding.dump_encoded(
        pairs, args.out,
        vocab_sha256=_sha256_file(args.vocab),
        tokenizer_name=tokenizer.name,
        variant=args.variant,
        window=args.window,
    )
    print(f"prepared {len(pairs)} examples -> {args.out}")
    return 0


def cmd_train(args, parser) -> int:
    _apply_config_file(args, parser)
    _require_files(args.train, args.dev, args.test, args.vocab, args.merges, args.features)
    tokenizer, vocab = _load_tokenizer(args.vocab, args.merges)
    features = model.load_external_features(args.features) if args.features else None
    hp = _hp_for_training(args, vocab, features)
    config = train.TrainConfig(
        learning_rate=args.lr,
        beta1=args.beta1,
        beta2=args.beta2,
        epsilon=args.adam_eps,
        max_epochs=args.max_epochs,
        patience=args.patience,
        eval_every=args.eval_every,
        seeds=_parse_seeds(args.seeds),
        variant=args.variant,
        mask_aspect=args.mask_aspect,
    )
    train_pairs = _encode_split(args.train, "train", tokenizer, args, config.mask_aspect)
    dev_pairs = _encode_split(args.dev, "dev", tokenizer, args, config.mask_aspect)
    test_pairs = None
    if args.test:
        test_pairs = _encode_split(args.test, "test", tokenizer, args, config.mask_aspect)

    result = train.train_multi(
        train_pairs, dev_pairs, test_pairs, hp, config,
        features=features, log=lambda record: print(json.dumps(record)),
    )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary: dict = {
        "variant": config.variant,
        "mask_aspect": config.mask_aspect,
        "seeds": list(config.seeds),
        "runs": [],
    }
    for run in result.runs:
        ckpt = out_dir / f"seed{run.seed}.towe"
        model.save_checkpoint(run.params, ckpt)
        run.history.checkpoint_path = ckpt.name
        (out_dir / f"seed{run.seed}.history.json").write_text(
            json.dumps(run.history.as_dict(), indent=2) + "\n", encoding="utf-8"
        )
        entry = {
            "seed": run.seed,
            "checkpoint": ckpt.name,
            "best_epoch": run.history.best_epoch,
            "best_dev_f1": run.history.best_dev_f1,
        }
        if run.test_report is not None:
            entry["test"] = run.test_report.as_dict()
        summary["runs"].append(entry)
    if test_pairs:
        summary["test_f1_per_seed"] = result.test_f1s
        summary["mean_test_f1"] = result.mean_test_f1
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(result.runs)} checkpoints to {out_dir}")
    if test_pairs:
        print(f"mean test F1 over {len(result.runs)} seeds: "
              f"{evaluate.as_percent(result.mean_test_f1):.2f}%")
    return 0


def _evaluate_checkpoint(ckpt_path: str, pairs, args, vocab, features) -> evaluate.EvalReport:
    params = model.load_checkpoint(ckpt_path)
    hp = _hp_for_checkpoint(params, args, vocab, features)
    return train.evaluate_model(pairs, params, hp, features)


def cmd_evaluate(args) -> int:
    _require_files(args.test, args.checkpoint, args.vocab, args.merges, args.features)
    tokenizer, vocab = _load_tokenizer(args.vocab, args.merges)
    features = model.load_external_features(args.features) if args.features else None
    pairs = _encode_split(args.test, "test", tokenizer, args, args.mask_aspect)
    report = _evaluate_checkpoint(args.checkpoint, pairs, args, vocab, features)
    print(_report_table([(Path(args.checkpoint).name, report)]))
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8"
        )
    return 0


def cmd_ablate(args) -> int:
    _require_files(args.test, args.vocab, args.merges)
    tokenizer, vocab = _load_tokenizer(args.vocab, args.merges)
    setups = [
        ("SA", args.checkpoints_sa, "SA", False),
        ("S", args.checkpoints_s, "S", False),
        ("S+mask", args.checkpoints_s_masked, "S", True),
    ]
    runs: dict[str, list[float]] = {}
    for name, ckpts, variant, mask in setups:
        if not ckpts:
            continue
        args.variant = variant
        pairs = _encode_split(args.test, "test", tokenizer, args, mask)
        scores = []
        for ckpt in ckpts.split(","):
            _require_files(ckpt)
            scores.append(_evaluate_checkpoint(ckpt, pairs, args, vocab, None).f1)
        runs[name] = scores
    if not runs:
        raise ToweError("no checkpoints given; pass at least one --checkpoints-* flag")
    report = evaluate.ablation_report(runs)
    print(report.format_table())
    if args.out:
        payload = {
            "means": {k: v for k, v in report.means.items()},
            "runs": {k: list(v) for k, v in report.runs.items()},
            "deltas": {f"{a}-{b}": d for (a, b), d in report.deltas.items()},
        }
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_predict(args) -> int:
    _require_files(args.input, args.checkpoint, args.vocab, args.merges)
    tokenizer, vocab = _load_tokenizer(args.vocab, args.merges)
    pairs = _encode_split(args.input, "test", tokenizer, args, args.mask_aspect)
    params = model.load_checkpoint(args.checkpoint)
    hp = _hp_for_checkpoint(params, args, vocab, None)
    with open(args.out, "w", encoding="utf-8") as handle:
        for example, enc in pairs:
            labels = model.predict_word_labels(enc, params, hp)
            spans = evaluate.decode_spans(labels)
            record = {
                "id": example.id,
                "words": list(example.words),
                "aspect": list(example.aspect_span),
                "predicted_opinions": [list(s) for s in spans],
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"predicted {len(pairs)} examples -> {args.out}")
    return 0


def _add_encoding_flags(sub) -> None:
    sub.add_argument("--vocab", required=True, help="vocabulary file (one piece per line)")
    sub.add_argument("--merges", default=None,
                     help="merge file; switches tokenization from WordPiece to BPE")
    sub.add_argument("--variant", choices=encoding.VARIANTS, default="SA")
    sub.add_argument("--window", type=int, default=encoding.DEFAULT_WINDOW)
    sub.add_argument("--max-len", type=int, default=encoding.DEFAULT_MAX_LEN)
    sub.add_argument("--mask-aspect", action="store_true",
                     help="replace aspect pieces in the sentence with [MASK]")
    sub.add_argument("--use-position", action="store_true")
    sub.add_argument("--use-segment", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="towe",
        description="Target-oriented opinion word extraction toolkit",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("train-vocab", help="train a BPE merge table and vocabulary")
    sub.add_argument("--corpus", required=True, help="plain-text file; words split on whitespace")
    sub.add_argument("--merges", type=int, required=True, help="number of merges to learn")
    sub.add_argument("--out", required=True, help="output directory for merges.txt and vocab.txt")
    sub.set_defaults(func=cmd_train_vocab)

    sub = commands.add_parser("prepare", help="dump model-ready encodings as JSON lines")
    sub.add_argument("--data", required=True)
    sub.add_argument("--out", required=True)
    _add_encoding_flags(sub)
    sub.set_defaults(func=cmd_prepare)

    sub = commands.add_parser("train", help="train one model per seed")
    sub.add_argument("--train", required=True)
    sub.add_argument("--dev", required=True)
    sub.add_argument("--test", default=None, help="optional test split for the final report")
    sub.add_argument("--out-dir", required=True)
    sub.add_argument("--config", default=None, help="key=value file supplying flag defaults")
    sub.add_argument("--seeds", default="1,2,3,4,5")
    sub.add_argument("--embed-dim", type=int, default=64)
    sub.add_argument("--hidden-dim", type=int, default=64)
    sub.add_argument("--lr", type=float, default=1e-3)
    sub.add_argument("--beta1", type=float, default=0.9)
    sub.add_argument("--beta2", type=float, default=0.999)
    sub.add_argument("--adam-eps", type=float, default=1e-8)
    sub.add_argument("--max-epochs", type=int, default=50)
    sub.add_argument("--patience", type=int, default=5)
    sub.add_argument("--eval-every", type=int, default=1)
    sub.add_argument("--features", default=None,
                     help="external feature file; replaces the learned embedding table")
    _add_encoding_flags(sub)
    sub.set_defaults(func=None)  # wired below, needs the parser for config defaults
    train_parser = sub

    sub = commands.add_parser("evaluate", help="score one checkpoint on a test split")
    sub.add_argument("--test", required=True)
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--features", default=None)
    sub.add_argument("--out", default=None, help="optional JSON report path")
    _add_encoding_flags(sub)
    sub.set_defaults(func=cmd_evaluate)

    sub = commands.add_parser("ablate", help="compare S / SA / S+mask checkpoints")
    sub.add_argument("--test", required=True)
    sub.add_argument("--checkpoints-s", default=None, help="comma-separated checkpoints")
    sub.add_argument("--checkpoints-sa", default=None)
    sub.add_argument("--checkpoints-s-masked", default=None)
    sub.add_argument("--out", default=None)
    _add_encoding_flags(sub)
    sub.set_defaults(func=cmd_ablate)

    sub = commands.add_parser("predict", help="label new sentence/aspect pairs")
    sub.add_argument("--input", required=True, help="JSONL without gold opinions")
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--out", required=True)
    _add_encoding_flags(sub)
    sub.set_defaults(func=cmd_predict)

    train_parser.set_defaults(func=lambda args: cmd_train(args, train_parser))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ToweError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
