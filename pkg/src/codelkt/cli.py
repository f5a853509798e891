"""Command-line entry point; thin dispatch over the library modules.

Exit codes: 0 success, 1 domain error, 2 usage error. All randomness flows
from --seed so every subcommand is reproducible bit-for-bit.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import CodeLktError

log = logging.getLogger("codelkt")


def _build_llm(spec: str):
    from .textualization import HttpLlmClient, LlmClientConfig, StubLlmClient, deterministic_stub

    if spec == "stub:deterministic" or spec == "stub":
        return deterministic_stub()
    if spec.startswith("stub:"):
        return StubLlmClient(fixture_dir=spec.split(":", 1)[1])
    if spec == "http":
        return HttpLlmClient(LlmClientConfig())
    if spec.startswith("http:"):
        cfg = json.loads(Path(spec.split(":", 1)[1]).read_text(encoding="utf-8"))
        return HttpLlmClient(LlmClientConfig(**cfg))
    raise CodeLktError(f"unknown --llm spec {spec!r}; use stub:deterministic, stub:<dir>, http, or http:<config.json>")


def cmd_ingest(args) -> int:
    from .data_model import load_column_map, load_dataset, save_dataset

    column_map = load_column_map(args.column_map) if args.column_map else None
    log_data = load_dataset(args.infile, format=args.format, column_map=column_map)
    save_dataset(log_data, args.out)
    print(f"ingested {log_data.num_interactions} interactions from "
          f"{log_data.num_students} students -> {args.out}")
    return 0


def cmd_enrich(args) -> int:
    from .data_model import load_dataset, save_dataset
    from .textualization import EnrichmentCache, default_templates, enrich_log, load_templates

    templates = load_templates(args.templates) if args.templates else default_templates()
    llm = _build_llm(args.llm)
    cache = EnrichmentCache(directory=args.cache)
    log_data = load_dataset(args.infile)
    enriched = enrich_log(
        log_data, templates, llm, cache,
        checkpoint_path=args.checkpoint,
        max_concurrency=args.concurrency,
    )
    save_dataset(enriched, args.out)
    print(f"enriched {enriched.num_interactions} interactions "
          f"({len(enriched.kc_vocabulary)} KCs) -> {args.out}")
    return 0


def _write_run_report(out_dir: Path, model_tag: str, dataset_tag: str, per_fold) -> None:
    from .evaluation import aggregate_folds, render_markdown

    report = aggregate_folds(per_fold, model_tag=model_tag, dataset_tag=dataset_tag)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    (out_dir / "report.md").write_text(render_markdown([report]))
    print(f"{model_tag}: AUC {report.auc_cell}  ACC {report.acc_cell}")


def cmd_train(args) -> int:
    from .data_model import load_dataset, split_kfold
    from .evaluation import FoldMetrics, acc, auc
    from .kt_model import ToyTextEncoder, TrainConfig, evaluate_fold, save_checkpoint, train

    if args.encoder != "toy":
        raise CodeLktError(
            f"encoder {args.encoder!r} is not bundled; only 'toy' ships with the "
            "package. Plug pre-trained encoders in via the Python API."
        )
    log_data = load_dataset(args.data)
    folds = split_kfold(log_data, k=args.folds, seed=args.seed,
                        validation_fraction=args.validation_fraction)
    config = TrainConfig(seed=args.seed, max_epochs=args.max_epochs,
                         token_budget=args.token_budget)
    results = train(
        log_data, folds, lambda: ToyTextEncoder(seed=args.seed), config,
        progress=log.info,
    )
    out = Path(args.out)
    per_fold = []
    for fold, result in zip(folds, results):
        save_checkpoint(result, out / f"fold{fold.fold_index}")
        targets, scores, labels = evaluate_fold(result.model, log_data, sorted(fold.test_students))
        per_fold.append(FoldMetrics(auc=auc(scores, labels), acc=acc(scores, labels)))
        (out / f"fold{fold.fold_index}" / "targets.json").write_text(json.dumps(targets))
    _write_run_report(out, f"LKT({args.encoder})", Path(args.data).stem, per_fold)
    return 0


def cmd_adapt(args) -> int:
    from .adaptation import dapt, load_corpus, tapt
    from .data_model import load_dataset
    from .kt_model import ToyTextEncoder, TrainConfig, load_encoder, save_encoder

    base = ToyTextEncoder(seed=args.seed) if args.base == "toy" else load_encoder(args.base)
    config = TrainConfig(seed=args.seed)
    if args.mode == "dapt":
        if not args.corpus:
            raise CodeLktError("dapt requires --corpus")
        corpus = load_corpus(args.corpus)
        adapted, history = dapt(base, corpus, epochs=args.epochs, config=config)
        save_encoder(adapted, args.out)
        print(f"dapt over {len(corpus)} documents, epoch losses: "
              + ", ".join(f"{x:.4f}" for x in history.epoch_losses))
    else:
        if not args.source_data:
            raise CodeLktError("tapt requires --source-data")
        source = load_dataset(args.source_data)
        adapted = tapt(base, source, config, source_name=Path(args.source_data).stem)
        save_encoder(adapted, args.out)
        print(f"tapt on {source.num_interactions} interactions -> {args.out}")
    return 0


def cmd_baseline_dkt(args) -> int:
    from .baseline_dkt import DktConfig, dkt_train_eval
    from .data_model import load_dataset, split_kfold
    from .evaluation import FoldMetrics

    log_data = load_dataset(args.data)
    folds = split_kfold(log_data, k=args.folds, seed=args.seed,
                        validation_fraction=args.validation_fraction)
    results = dkt_train_eval(log_data, folds, DktConfig(seed=args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    per_fold = []
    for r in results:
        per_fold.append(FoldMetrics(auc=r.metrics.auc, acc=r.metrics.acc))
        fold_dir = out / f"fold{r.fold_index}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        (fold_dir / "targets.json").write_text(json.dumps(r.targets))
    _write_run_report(out, "DKT", Path(args.data).stem, per_fold)
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import MetricReport, FoldMetrics, aggregate_folds, render_csv, render_markdown

    reports: list[MetricReport] = []
    for run_dir in args.runs:
        report_path = Path(run_dir) / "report.json"
        if not report_path.exists():
            raise CodeLktError(f"no report.json in run directory {run_dir}")
        raw = json.loads(report_path.read_text())
        reports.append(aggregate_folds(
            [FoldMetrics(**f) for f in raw["per_fold"]],
            model_tag=raw["model_tag"], dataset_tag=raw["dataset_tag"],
        ))
    markdown = render_markdown(reports)
    Path(args.out).write_text(markdown)
    if args.csv:
        Path(args.csv).write_text(render_csv(reports))
    if args.json:
        print(json.dumps([r.to_dict() for r in reports], indent=2))
    else:
        print(markdown, end="")
    return 0


def cmd_feedback(args) -> int:
    from .feedback import (
        LearnerContext,
        build_correctness_prompt,
        build_hint_prompt,
        generate_feedback,
        parse_feedback,
    )

    ctx = LearnerContext.from_dict(json.loads(Path(args.context).read_text(encoding="utf-8")))
    if args.mode == "correctness":
        prompt = build_correctness_prompt(ctx, args.comparison)
    else:
        prompt = build_hint_prompt(ctx, args.comparison)
    if args.dry_run:
        print(prompt)
        return 0
    llm = _build_llm(args.llm)
    raw = generate_feedback(prompt, llm)
    bundle = parse_feedback(raw, mode=args.mode, correctness=ctx.correctness)
    bundle.comparison = args.comparison
    print(json.dumps(bundle.to_dict(), indent=2, ensure_ascii=False))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.from_file(args.config) if args.config else ServiceConfig()
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codelkt",
        description="Knowledge tracing over interaction text, with LLM tutoring feedback.",
    )
    parser.add_argument("--version", action="version", version=f"codelkt {__version__}")
    parser.add_argument("--seed", type=int, default=0, help="seed for every random component")
    parser.add_argument("--log-level", default="INFO")
    parser.add_argument("--config", default=None, help="service config file (serve)")

    # accepted after the subcommand too; SUPPRESS keeps the subparser from
    # clobbering a value given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--log-level", default=argparse.SUPPRESS)

    subparsers = parser.add_subparsers(dest="command", metavar="command")

    def add_sub(name, **kwargs):
        return subparsers.add_parser(name, parents=[common], **kwargs)

    p = add_sub("ingest", help="convert a raw dump to the canonical JSONL format")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=("canonical_jsonl", "csedm_csv"), default="canonical_jsonl")
    p.add_argument("--out", required=True)
    p.add_argument("--column-map", default=None, help="YAML/JSON column mapping for csedm_csv")
    p.set_defaults(func=cmd_ingest)

    p = add_sub("enrich", help="generate question/KC text for every interaction")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--templates", default=None, help="directory with question.txt and kc.txt")
    p.add_argument("--llm", default="stub:deterministic")
    p.add_argument("--cache", default=None, help="cache directory (content-addressed)")
    p.add_argument("--checkpoint", default=None, help="resume checkpoint path")
    p.add_argument("--concurrency", type=int, default=1)
    p.set_defaults(func=cmd_enrich)

    p = add_sub("train", help="k-fold fine-tuning of the masked-response predictor")
    p.add_argument("--data", required=True)
    p.add_argument("--encoder", default="toy")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--validation-fraction", type=float, default=0.1)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--token-budget", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = add_sub("adapt", help="domain (dapt) or task (tapt) adaptive pretraining")
    p.add_argument("--mode", choices=("dapt", "tapt"), required=True)
    p.add_argument("--base", default="toy", help="'toy' or an encoder directory")
    p.add_argument("--corpus", default=None, help="JSONL of {text, source_tag} (dapt)")
    p.add_argument("--source-data", default=None, help="enriched JSONL (tapt)")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adapt)

    p = add_sub("baseline-dkt", help="train/evaluate the recurrent one-hot baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--validation-fraction", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline_dkt)

    p = add_sub("evaluate", help="aggregate run reports into a comparison table")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", default="report.md")
    p.add_argument("--csv", default=None)
    p.add_argument("--json", action="store_true", help="print machine-readable output")
    p.set_defaults(func=cmd_evaluate)

    p = add_sub("feedback", help="render and (optionally) run a feedback prompt")
    p.add_argument("--mode", choices=("correctness", "hint"), required=True)
    p.add_argument("--comparison", choices=("c1", "c2", "c3"), default="c1")
    p.add_argument("--context", required=True, help="LearnerContext JSON file")
    p.add_argument("--dry-run", action="store_true", help="print the prompt, no LLM call")
    p.add_argument("--llm", default="stub:deterministic")
    p.set_defaults(func=cmd_feedback)

    p = add_sub("serve", help="run the tutoring HTTP service")
    p.add_argument("--config", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except CodeLktError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        if exc.detail:
            print(f"  {exc.detail}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
