"""Command-line entry point wiring the pipeline end to end."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import torch

from . import backgen, contrastive, evalscore, masking, parser, scorer, trees


class BadConfig(Exception):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, config: dict, artifacts) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "artifacts": {str(p): sha256_file(p) for p in artifacts},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise BadConfig("cannot read config file %s: %s" % (path, exc))
    if not isinstance(cfg, dict):
        raise BadConfig("config file must hold a JSON object")
    return cfg


def _extract_config_path(argv):
    for t, arg in enumerate(argv):
        if arg == "--config" and t + 1 < len(argv):
            return argv[t + 1]
        if arg.startswith("--config="):
            return arg.split("=", 1)[1]
    return None


def make_embeddings(spec: str):
    if spec.startswith("hash"):
        dim = int(spec.split(":", 1)[1]) if ":" in spec else 32
        return masking.HashEmbeddings(dim=dim)
    return masking.load_word_vectors(spec)


def cmd_mask(args) -> int:
    keep_rate = args.keep_rate if args.keep_rate is not None else 1.0 - args.mask_rate
    if not (0.0 <= keep_rate <= 1.0):
        raise BadConfig("mask/keep rate must lie in [0, 1]")
    embeddings = make_embeddings(args.embeddings)
    corpus = trees.read_treebank(args.treebank)
    records = masking.mask_treebank(corpus, keep_rate, embeddings)
    masking.write_masked_records(records, args.out)
    write_manifest(args.manifest or args.out + ".manifest.json", "mask", {
        "treebank": args.treebank, "out": args.out, "keep_rate": keep_rate,
        "embeddings": args.embeddings, "seed": args.seed,
    }, [args.out])
    return 0


def _mock_client(records, args):
    oracle = {rec["masked_render"]: rec["original_render"] for rec in records}
    return backgen.MockLLM(oracle, corrupt_rate=args.corrupt_rate, seed=args.seed)


def cmd_backgen(args) -> int:
    records = masking.read_masked_records(args.masked)
    if args.endpoint:
        client = backgen.HttpLLM(args.endpoint, model=args.model)
    else:
        client = _mock_client(records, args)
    demo_pool = []
    if args.demo_pool:
        demo_pool = [
            backgen.DemonstrationPair(r["masked_render"], r["original_render"])
            for r in masking.read_masked_records(args.demo_pool)
        ]
    out_records, summary = backgen.backgen_batch(
        records, client, demo_pool=demo_pool, num_demos=args.num_demos,
        retries=args.retries, model=args.model)
    backgen.write_backgen_outputs(out_records, args.out, args.audit)
    print(json.dumps({"total": summary.total, "accepted": summary.accepted,
                      "by_status": summary.by_status}, sort_keys=True))
    artifacts = [args.out] + ([args.audit] if args.audit else [])
    write_manifest(args.manifest or args.out + ".manifest.json", "backgen", {
        "masked": args.masked, "out": args.out, "num_demos": args.num_demos,
        "retries": args.retries, "corrupt_rate": args.corrupt_rate,
        "endpoint": args.endpoint, "model": args.model, "seed": args.seed,
    }, artifacts)
    return 0


def _scorer_config(args) -> scorer.ScorerConfig:
    return scorer.ScorerConfig(seed=args.seed)


def cmd_pretrain(args) -> int:
    torch.set_num_threads(1)
    vocab_trees = trees.read_treebank(args.treebank)
    for path in args.vocab_from or []:
        vocab_trees.extend(trees.read_treebank(path))
    model = scorer.build_model(vocab_trees, _scorer_config(args))
    config = contrastive.ContrastiveConfig(
        temperature=args.temperature, sample_rate=args.sample_rate,
        learning_rate=args.lr, batch_size=args.batch_size,
        epochs=args.epochs, seed=args.seed)
    model, log = contrastive.pretrain(model, args.treebank, config)
    scorer.save_checkpoint(model, args.out)
    if args.log:
        log.write(args.log)
    write_manifest(args.manifest or args.out + ".manifest.json", "pretrain", {
        "treebank": args.treebank, "out": args.out, "epochs": args.epochs,
        "sample_rate": args.sample_rate, "temperature": args.temperature,
        "lr": args.lr, "batch_size": args.batch_size, "seed": args.seed,
    }, [args.out] + ([args.log] if args.log else []))
    return 0


def cmd_train(args) -> int:
    torch.set_num_threads(1)
    if args.init:
        model, _ = scorer.load_checkpoint(args.init)
    else:
        vocab_trees = []
        for path in args.train:
            vocab_trees.extend(trees.read_treebank(path))
        model = scorer.build_model(vocab_trees, _scorer_config(args))
    dev = trees.read_treebank(args.dev)
    config = parser.TrainConfig(
        learning_rate=args.lr, batch_size=args.batch_size,
        warmup_steps=args.warmup_steps, early_stop_patience_epochs=args.patience,
        seed=args.seed, max_epochs=args.max_epochs,
        eval_every_steps=args.eval_every)
    model, log = parser.train(model, args.train, dev, config)
    scorer.save_checkpoint(model, args.out)
    if args.log:
        log.write(args.log)
    write_manifest(args.manifest or args.out + ".manifest.json", "train", {
        "train": list(args.train), "dev": args.dev, "init": args.init,
        "out": args.out, "lr": args.lr, "batch_size": args.batch_size,
        "warmup_steps": args.warmup_steps, "patience": args.patience,
        "max_epochs": args.max_epochs, "seed": args.seed,
    }, [args.out] + ([args.log] if args.log else []))
    return 0


def _read_sentences(path):
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(trees.Sentence(tuple(line.split())))
    return out


def cmd_parse(args) -> int:
    torch.set_num_threads(1)
    model, _ = scorer.load_checkpoint(args.model)
    sentences = _read_sentences(args.input)
    with open(args.out, "w", encoding="utf-8") as f:
        for sent in sentences:
            tree = parser.parse(model, sent)
            f.write(trees.render_bracketed(tree) + "\n")
    write_manifest(args.manifest or args.out + ".manifest.json", "parse", {
        "model": args.model, "input": args.input, "out": args.out, "seed": None,
    }, [args.out])
    return 0


def cmd_llm_parse(args) -> int:
    sentences = _read_sentences(args.input)
    demos = trees.read_treebank(args.demos)[:args.num_demos] if args.demos else []
    if args.endpoint:
        client = backgen.HttpLLM(args.endpoint, model=args.model)
    else:
        golds = trees.read_treebank(args.mock_gold)
        oracle = {" ".join(t.words()): trees.render_bracketed(t) for t in golds}
        client = backgen.MockLLM(oracle, corrupt_rate=args.corrupt_rate, seed=args.seed)
    invalid = 0
    with open(args.out, "w", encoding="utf-8") as f:
        for sent in sentences:
            request = backgen.build_parse_prompt(sent, demos, model=args.model)
            raw = client.complete(request)
            report, tree = backgen.parse_llm_parse_output(sent, raw)
            if tree is None:
                invalid += 1
                f.write(evalscore.INVALID_LINE + "\n")
            else:
                f.write(trees.render_bracketed(tree) + "\n")
    print(json.dumps({"sentences": len(sentences), "invalid": invalid}))
    write_manifest(args.manifest or args.out + ".manifest.json", "llm-parse", {
        "input": args.input, "demos": args.demos, "num_demos": args.num_demos,
        "out": args.out, "corrupt_rate": args.corrupt_rate, "seed": args.seed,
    }, [args.out])
    return 0


def cmd_eval(args) -> int:
    golds = trees.read_treebank(args.gold)
    preds = evalscore.read_predictions(args.pred)
    domains = None
    if args.domains:
        with open(args.domains, encoding="utf-8") as f:
            domains = [line.strip() for line in f if line.strip()]
    config = evalscore.EvalConfig(mode=evalscore.EvalMode(args.mode),
                                  per_domain=domains is not None)
    report = evalscore.labeled_f1(golds, preds, config, domains=domains)
    print(report.render())
    if args.out:
        evalscore.write_report(report, args.out)
        write_manifest(args.manifest or args.out + ".manifest.json", "eval", {
            "gold": args.gold, "pred": args.pred, "mode": args.mode,
            "out": args.out, "seed": None,
        }, [args.out])
    return 0


MASK_RATES = (0.0, 0.25, 0.5, 0.75, 1.0)


def cmd_sweep(args) -> int:
    torch.set_num_threads(1)
    import os
    os.makedirs(args.workdir, exist_ok=True)
    target = trees.read_treebank(args.treebank)
    test = trees.read_treebank(args.test)
    embeddings = make_embeddings(args.embeddings)
    rows = []

    def run_point(tag, rate, size):
        subset = target[:size] if size is not None else target
        masked = list(masking.mask_treebank(subset, 1.0 - rate, embeddings))
        masked_path = "%s/masked_%s.jsonl" % (args.workdir, tag)
        masking.write_masked_records(masked, masked_path)
        records = masking.read_masked_records(masked_path)
        client = backgen.MockLLM(
            {r["masked_render"]: r["original_render"] for r in records},
            seed=args.seed)
        out_records, _ = backgen.backgen_batch(records, client, retries=args.retries)
        generated = "%s/backgen_%s.txt" % (args.workdir, tag)
        backgen.write_backgen_outputs(out_records, generated)
        vocab_trees = trees.read_treebank(args.source) + trees.read_treebank(generated)
        model = scorer.build_model(vocab_trees, scorer.ScorerConfig(seed=args.seed))
        if args.pretrain:
            model, _ = contrastive.pretrain(model, generated, contrastive.ContrastiveConfig(
                epochs=args.pretrain_epochs, seed=args.seed))
        dev = trees.read_treebank(args.dev)
        config = parser.TrainConfig(
            learning_rate=args.lr, batch_size=args.batch_size,
            warmup_steps=args.warmup_steps, seed=args.seed,
            max_epochs=args.max_epochs, eval_every_steps=0)
        model, _ = parser.train(model, [args.source, generated], dev, config)
        preds = [parser.parse(model, t.sentence(), pos_tags=t.pos_tags()) for t in test]
        report = evalscore.labeled_f1(test, preds)
        return report.f1

    if args.axis == "mask-rate":
        for rate in MASK_RATES:
            f1 = run_point("rate%d" % int(rate * 100), rate, None)
            rows.append((rate, f1))
        header = "mask_rate\tF1"
    else:
        sizes = args.sizes or [len(target) // 4, len(target) // 2, len(target)]
        for size in sizes:
            f1 = run_point("size%d" % size, args.mask_rate, size)
            rows.append((size, f1))
        header = "treebank_size\tF1"

    lines = [header] + ["%s\t%.2f" % (x, f1) for x, f1 in rows]
    table = "\n".join(lines)
    print(table)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(table + "\n")
        write_manifest(args.manifest or args.out + ".manifest.json", "sweep", {
            "axis": args.axis, "treebank": args.treebank, "source": args.source,
            "dev": args.dev, "test": args.test, "out": args.out,
            "seed": args.seed,
        }, [args.out])
    return 0


def build_arg_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="backparse", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)
    top.command_parsers = []

    def common(p):
        top.command_parsers.append(p)
        p.add_argument("--config", help="JSON config file (flags take precedence)")
        p.add_argument("--manifest", help="manifest output path")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("mask", help="mask a treebank down to domain keywords")
    common(p)
    p.add_argument("--treebank", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-rate", type=float, default=0.75)
    p.add_argument("--keep-rate", type=float, default=None)
    p.add_argument("--embeddings", default="hash:32",
                   help='"hash[:dim]" or a word-vector text file')
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("backgen", help="fill masked trees via an LLM or the mock")
    common(p)
    p.add_argument("--masked", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--audit")
    p.add_argument("--demo-pool")
    p.add_argument("--num-demos", type=int, default=2)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--endpoint")
    p.add_argument("--model", default="gpt-4")
    p.add_argument("--corrupt-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_backgen)

    p = sub.add_parser("pretrain", help="contrastive pre-training of the span encoder")
    common(p)
    p.add_argument("--treebank", required=True)
    p.add_argument("--vocab-from", action="append")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--sample-rate", type=float, default=0.2)
    p.add_argument("--temperature", type=float, default=0.05)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="max-margin training / fine-tuning")
    common(p)
    p.add_argument("--train", action="append", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--init")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--warmup-steps", type=int, default=400)
    p.add_argument("--patience", type=int, default=4)
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--eval-every", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="parse raw sentences with a trained model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("llm-parse", help="LLM direct-parsing baseline")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--demos")
    p.add_argument("--num-demos", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--endpoint")
    p.add_argument("--model", default="gpt-4")
    p.add_argument("--mock-gold")
    p.add_argument("--corrupt-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_llm_parse)

    p = sub.add_parser("eval", help="labeled bracket F1")
    common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--mode", choices=["full", "valid"], default="full")
    p.add_argument("--domains")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="mask-rate or treebank-size experiment sweep")
    common(p)
    p.add_argument("--axis", choices=["mask-rate", "treebank-size"], required=True)
    p.add_argument("--treebank", required=True, help="target-domain treebank")
    p.add_argument("--source", required=True, help="source-domain treebank")
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out")
    p.add_argument("--workdir", default="sweep_work")
    p.add_argument("--embeddings", default="hash:32")
    p.add_argument("--mask-rate", type=float, default=0.25)
    p.add_argument("--sizes", type=int, action="append")
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--pretrain", action="store_true")
    p.add_argument("--pretrain-epochs", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--warmup-steps", type=int, default=20)
    p.add_argument("--max-epochs", type=int, default=5)
    p.set_defaults(func=cmd_sweep)

    return top


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    top = build_arg_parser()
    try:
        config_path = _extract_config_path(list(argv))
        if config_path:
            # config file values become defaults; explicit flags still win
            cfg = load_config_file(config_path)
            defaults = {k.replace("-", "_"): v for k, v in cfg.items()}
            top.set_defaults(**defaults)
            # subcommands parse into a fresh namespace, so they need the
            # defaults as well
            for command_parser in top.command_parsers:
                command_parser.set_defaults(**defaults)
        args = top.parse_args(argv)
        return args.func(args)
    except BadConfig as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except Exception as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
