"""Command-line entry point: ``dnpsql {ingest,demos,run,grade,report,cache}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from .dataset import load_dataset, validate_dataset
from .demos import leading_token, select_demonstrations
from .errors import DnPError
from .grading import Limits
from .harness import ExperimentConfig, evaluate_offline, report_from_traces, run_experiment
from .llm import merge_caches, read_records
from .report import render_report, report_from_dict

# flag -> (config section or None, field name)
_RUN_FLAGS = {
    "root": (None, "dataset_root"),
    "split": (None, "split"),
    "trials": (None, "trials"),
    "schema_style": (None, "schema_style"),
    "timeout": (None, "timeout"),
    "row_cap": (None, "row_cap"),
    "tolerance": (None, "tolerance"),
    "workers": (None, "workers"),
    "limit": (None, "limit"),
    "out": (None, "output_dir"),
    "strategy": ("strategy", "kind"),
    "shots": ("strategy", "shots"),
    "clause_order": ("strategy", "clause_order"),
    "link_granularity": ("strategy", "link_granularity"),
    "stage1": ("strategy", "stage1"),
    "name": ("strategy", "name"),
    "backend": ("backend", "kind"),
    "model": ("backend", "model_name"),
    "base_url": ("backend", "base_url"),
    "replay": ("backend", "replay_path"),
    "record": ("backend", "record_path"),
    "mock": ("backend", "mock_path"),
    "temperature": ("backend", "temperature"),
    "top_p": ("backend", "top_p"),
    "max_tokens": ("backend", "max_tokens"),
    "concurrency": ("backend", "concurrency"),
    "demos": ("demos", "corpus"),
    "k": ("demos", "k"),
    "seed": ("demos", "seed"),
}
STRATEGIES = ["standard", "cot", "cc", "sl", "gr"]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnpsql", description="Divide-and-prompt text-to-SQL experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    ing = sub.add_parser("ingest", help="load and validate a Spider-layout dataset")
    ing.add_argument("root")
    ing.add_argument("--split", default="dev")
    ing.add_argument("--strict", action="store_true", help="exit 1 when the dataset has issues")

    dem = sub.add_parser("demos", help="cluster questions and print one representative per cluster")
    dem.add_argument("root")
    dem.add_argument("--split", default="train")
    dem.add_argument("-k", type=int, default=5)
    dem.add_argument("--seed", type=int, default=0)
    dem.add_argument("--method", choices=["leading-token", "k-medoids"], default="leading-token")
    dem.add_argument("--json", action="store_true")

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", help="JSON config file; flags override its fields")
    run.add_argument("--root")
    run.add_argument("--split")
    run.add_argument("--strategy", choices=STRATEGIES)
    run.add_argument("--shots", choices=["zero", "few"])
    run.add_argument("--clause-order", choices=["select-first", "from-first", "select-last"])
    run.add_argument("--link-granularity", choices=["exact", "tables-then-columns", "tables-all-columns"])
    run.add_argument("--stage1", choices=STRATEGIES[:-1], help="first-stage strategy for gr")
    run.add_argument("--name", help="row label in reports")
    run.add_argument("--trials", type=int)
    run.add_argument("--backend", choices=["live", "replay", "mock"])
    run.add_argument("--model")
    run.add_argument("--base-url")
    run.add_argument("--replay", help="replay cache (JSON lines)")
    run.add_argument("--record", help="append live completions to this cache")
    run.add_argument("--mock", help="mock rules file (JSON)")
    run.add_argument("--temperature", type=float)
    run.add_argument("--top-p", type=float)
    run.add_argument("--max-tokens", type=int)
    run.add_argument("--concurrency", type=int, help="in-flight request cap for the live backend")
    run.add_argument("--workers", type=int, help="examples processed in parallel")
    run.add_argument("--demos", help="demonstration corpus (JSON)")
    run.add_argument("-k", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--schema-style", choices=["compact", "ddl"])
    run.add_argument("--timeout", type=float)
    run.add_argument("--row-cap", type=int)
    run.add_argument("--tolerance", type=float)
    run.add_argument("--limit", type=int, help="only the first N examples")
    run.add_argument("--out", help="output directory")

    grd = sub.add_parser("grade", help="grade a predictions file offline")
    grd.add_argument("root")
    grd.add_argument("predictions")
    grd.add_argument("--split", default="dev")
    grd.add_argument("--name", default="predictions")
    grd.add_argument("--timeout", type=float, default=30.0)
    grd.add_argument("--row-cap", type=int, default=100_000)
    grd.add_argument("--workers", type=int, default=4)
    grd.add_argument("--format", choices=["json", "csv", "markdown"], default="markdown")
    grd.add_argument("--out", help="write report.{json,csv,md} here")

    rep = sub.add_parser("report", help="re-render the report of a run artifact")
    rep.add_argument("run_json")
    rep.add_argument("--format", choices=["json", "csv", "markdown"], default="markdown")
    rep.add_argument("--recompute", action="store_true", help="rebuild the report from the traces")

    cache = sub.add_parser("cache", help="inspect or merge replay caches")
    csub = cache.add_subparsers(dest="cache_command", required=True)
    ins = csub.add_parser("inspect")
    ins.add_argument("path")
    mrg = csub.add_parser("merge")
    mrg.add_argument("out")
    mrg.add_argument("inputs", nargs="+")
    return p


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif args.root:
        cfg = ExperimentConfig(dataset_root=args.root)
    else:
        raise DnPError("run needs --config or --root")
    for flag, (section, name) in _RUN_FLAGS.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        target = cfg if section is None else getattr(cfg, section)
        setattr(target, name, value)
    return cfg


def _write_reports(report, out: str) -> None:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for fmt, ext in (("json", "json"), ("csv", "csv"), ("markdown", "md")):
        (out_dir / f"report.{ext}").write_bytes(render_report(report, fmt))


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = sys.stdout
    try:
        if args.command == "ingest":
            ds = load_dataset(args.root, args.split)
            issues = validate_dataset(ds)
            dbs = Counter(ex.db_id for ex in ds.examples)
            print(f"{ds.split_name}: {len(ds.examples)} examples across {len(dbs)} databases", file=out)
            for issue in issues:
                print(f"  {issue.example_id} [{issue.kind}] {issue.detail}", file=out)
            print(f"{len(issues)} issue(s)", file=out)
            return 1 if issues and args.strict else 0

        if args.command == "demos":
            ds = load_dataset(args.root, args.split)
            triples = [(ex.question, ex.gold_sql, ex.db_id) for ex in ds.examples]
            picked = select_demonstrations(triples, args.k, args.seed, args.method)
            if args.json:
                doc = [{"question": d.question, "db_id": d.db_id, "sql": d.sql, "reasoning": {}} for d in picked]
                print(json.dumps(doc, indent=2), file=out)
            else:
                for d in picked:
                    print(f"[{leading_token(d.question)}] {d.question}\n    {d.db_id}: {d.sql}", file=out)
            return 0

        if args.command == "run":
            cfg = _config_from_args(args)
            artifact = run_experiment(cfg)
            out.write(render_report(artifact.report, "markdown").decode())
            return 0

        if args.command == "grade":
            ds = load_dataset(args.root, args.split)
            report = evaluate_offline(ds, args.predictions, Limits(args.timeout, args.row_cap), args.workers, args.name)
            if args.out:
                _write_reports(report, args.out)
            out.write(render_report(report, args.format).decode())
            return 0

        if args.command == "report":
            doc = json.loads(Path(args.run_json).read_text(encoding="utf-8"))
            if args.recompute:
                name = doc["report"]["strategies"][0]["name"]
                report = report_from_traces(doc["traces"], name)
            else:
                report = report_from_dict(doc["report"])
            out.write(render_report(report, args.format).decode())
            return 0

        if args.command == "cache":
            if args.cache_command == "inspect":
                records = read_records(args.path)
                keys = Counter(r.key for r in records)
                models = Counter(r.model_name for r in records)
                trials = Counter(r.trial_index for r in records)
                print(f"{len(records)} records, {len(keys)} distinct keys", file=out)
                print("models: " + ", ".join(f"{m} ({n})" for m, n in sorted(models.items())), file=out)
                print("trials: " + ", ".join(f"{t} ({n})" for t, n in sorted(trials.items())), file=out)
            else:
                n = merge_caches(args.inputs, args.out)
                print(f"wrote {n} records to {args.out}", file=out)
            return 0
    except DnPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
