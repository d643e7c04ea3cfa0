"""Command-line pipeline: extract, prompt tooling, annotate, eval, report, serve.

Conventions: machine-readable output goes to stdout or files named with -o;
progress and diagnostics go to stderr. Exit codes: 0 success, 1 usage
error, 2 data or validation error, 3 backend failure during annotation
(suppressed by --keep-going).
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from . import corpus, evaluate, gateway, prompting, runstore, scheme as scheme_mod
from .errors import (
    BackendError,
    DataError,
    NotFoundError,
    SpanactError,
    UsageError,
    ValidationError,
)

log = logging.getLogger("spanact")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message: str):  # noqa: D102 - argparse override
        raise UsageError(message)


def _default_resource(name: str) -> Path:
    return Path(str(resources.files("spanact") / "data" / name))


def load_scheme_arg(path: Optional[str]) -> scheme_mod.AnnotationScheme:
    if path is None:
        return scheme_mod.load_scheme(_default_resource("apology_scheme.json"))
    return scheme_mod.load_scheme(path)


def load_prompt_arg(path: Optional[str]) -> prompting.PromptSpec:
    if path is None:
        return prompting.load_prompt_spec(_default_resource("apology_prompt.json"))
    return prompting.load_prompt_spec(path)


def _parse_policy(text: str) -> evaluate.MatchPolicy:
    if text == "exact":
        return evaluate.EXACT
    if text.startswith("overlap:"):
        try:
            threshold = float(text.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad overlap threshold in {text!r}") from exc
        return evaluate.MatchPolicy("overlap", threshold)
    raise UsageError(f"unknown policy {text!r} (expected exact or overlap:<t>)")


def build_parser() -> _Parser:
    parser = _Parser(prog="spanact", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("extract", parents=[], help="extract marker-centered instances")
    p.add_argument("corpus", help="tokenised corpus file")
    p.add_argument("--marker", action="append", help="marker lexeme (repeatable); default: sorry")
    p.add_argument("--width", type=int, default=corpus.DEFAULT_WIDTH)
    p.add_argument("--format", choices=("plain", "lines"), default="plain")
    p.add_argument("--source-id", default=None)
    p.add_argument("-o", "--output", required=True, help="instances file to write")

    p = sub.add_parser("prompt", help="prompt tooling")
    prompt_sub = p.add_subparsers(dest="prompt_command", metavar="action")
    for name in ("preview", "lint"):
        q = prompt_sub.add_parser(name)
        q.add_argument("--spec", default=None, help="prompt spec file (default: bundled)")
        q.add_argument("--scheme", default=None, help="scheme file (default: bundled)")
        if name == "lint":
            q.add_argument(
                "--strict", action="store_true", help="exit 2 on error-severity findings"
            )

    p = sub.add_parser("annotate", help="run the prime-then-query protocol over instances")
    p.add_argument("--instances", required=True)
    p.add_argument("--backend", required=True, help="backend config file")
    p.add_argument("--run-store", required=True, help="run store directory")
    p.add_argument("--run-id", required=True)
    p.add_argument("--scheme", default=None)
    p.add_argument("--prompt-spec", default=None)
    p.add_argument("--min-coverage", type=float, default=0.9)
    p.add_argument("--no-transcripts", action="store_true", help="withhold transcripts")
    p.add_argument(
        "--keep-going",
        action="store_true",
        help="exit 0 even if some instances hit backend failures",
    )

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("--gold", required=True, help="gold annotations file")
    p.add_argument("--pred", required=True, help="annotations or predictions file")
    p.add_argument("--policy", default="exact", help="exact | overlap:<threshold>")
    p.add_argument("--format", choices=("table", "structured"), default="table")
    p.add_argument("--scheme", default=None)
    p.add_argument(
        "--skip-unscored",
        action="store_true",
        help="drop gold instances whose prediction has no parsed annotation",
    )
    p.add_argument("-o", "--output", default=None, help="write report here instead of stdout")

    p = sub.add_parser("report", help="summarize a stored run with live metrics")
    p.add_argument("--run-store", required=True)
    p.add_argument("--run-id", required=True)
    p.add_argument("--format", choices=("table", "structured"), default="table")

    p = sub.add_parser("serve", help="start the review service")
    p.add_argument("--run-store", required=True)
    p.add_argument("--addr", default="127.0.0.1:8400", help="host:port")
    p.add_argument("--ui", default=None, help="static UI directory to mount at /")

    return parser


def cmd_extract(args: argparse.Namespace) -> int:
    markers = args.marker or ["sorry"]
    stream = corpus.load_corpus(args.corpus, format=args.format, source_id=args.source_id)
    instances = corpus.extract_instances(stream, markers, width=args.width)
    count = corpus.write_instances(instances, args.output)
    log.info("wrote %d instances to %s", count, args.output)
    print(count)
    return EXIT_OK


def cmd_prompt(args: argparse.Namespace) -> int:
    if not args.prompt_command:
        raise UsageError("prompt requires an action: preview or lint")
    sch = load_scheme_arg(args.scheme)
    spec = load_prompt_arg(args.spec)
    if args.prompt_command == "preview":
        parts = prompting.build_prompt(sch, spec)
        for i, part in enumerate(parts, start=1):
            print(f"=== part {i}/{len(parts)} ({len(part)} chars) ===")
            print(part)
            print()
        return EXIT_OK
    findings = prompting.lint_prompt(spec, sch)
    for f in findings:
        print(f"{f.severity}: [{f.code}] factor ({f.factor}) at {f.location}: {f.message}")
    if not findings:
        print("no findings")
    if args.strict and any(f.severity == "error" for f in findings):
        return EXIT_DATA
    return EXIT_OK


def cmd_annotate(args: argparse.Namespace) -> int:
    sch = load_scheme_arg(args.scheme)
    spec = load_prompt_arg(args.prompt_spec)
    instances = corpus.read_instances(args.instances)
    if not instances:
        raise DataError(f"no instances in {args.instances}")
    config = gateway.BackendConfig.from_file(args.backend)
    backend = gateway.make_backend(config)
    parts = prompting.build_prompt(sch, spec)

    store = runstore.RunStore(args.run_store)
    run_dir = store.root / args.run_id
    if run_dir.exists():
        raise DataError(f"run {args.run_id!r} already exists in {args.run_store}")
    checkpoint_dir = store.root / ".checkpoints"
    checkpoint_dir.mkdir(exist_ok=True)
    checkpoint = checkpoint_dir / f"{args.run_id}.jsonl"

    def progress(raw: gateway.RawResult) -> None:
        log.info("%s -> %s", raw.instance_id, raw.status)

    results, summary = gateway.run_batch(
        backend,
        parts,
        spec,
        instances,
        config=config,
        checkpoint_path=checkpoint,
        progress=progress,
    )
    predictions = runstore.build_predictions(
        results, instances, sch, args.run_id, min_coverage=args.min_coverage
    )
    transcripts = None
    if not args.no_transcripts:
        transcripts = [t for _, t in results if t is not None]
    store.save_run(
        args.run_id,
        sch,
        spec,
        instances,
        predictions,
        transcripts=transcripts,
        backend_descriptor=backend.descriptor(),
    )
    shutil.move(str(checkpoint), str(run_dir / "checkpoint.jsonl"))
    log.info(
        "run %s: %d instances (%d from checkpoint), statuses %s",
        args.run_id,
        summary.total,
        summary.from_checkpoint,
        summary.status_counts,
    )
    print(str(run_dir))
    hard_failures = summary.status_counts.get(gateway.TIMEOUT, 0) + summary.status_counts.get(
        gateway.BACKEND_ERROR, 0
    )
    if hard_failures and not args.keep_going:
        log.error("%d instance(s) failed at the backend", hard_failures)
        return EXIT_BACKEND
    return EXIT_OK


def _load_predictions_or_annotations(
    path: str, skip_unscored: bool
) -> tuple[dict[str, scheme_mod.Annotation], list[str]]:
    """Accepts either raw annotation records or run prediction records.

    Returns annotations by instance id plus the ids of unscoreable
    predictions (no parsed annotation)."""
    annotations: dict[str, scheme_mod.Annotation] = {}
    unscored: list[str] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if "status" in data:
            record = runstore.PredictionRecord.from_dict(data)
            if record.annotation is None:
                unscored.append(record.instance_id)
            else:
                annotations[record.instance_id] = record.annotation
        else:
            ann = scheme_mod.Annotation.from_dict(data)
            annotations[ann.instance_id] = ann
    if unscored and not skip_unscored:
        raise DataError(
            f"{path}: {len(unscored)} prediction(s) have no parsed annotation "
            f"(first: {unscored[0]}); rerun with --skip-unscored to drop them"
        )
    return annotations, unscored


def cmd_eval(args: argparse.Namespace) -> int:
    sch = load_scheme_arg(args.scheme)
    policy = _parse_policy(args.policy)
    gold = evaluate.load_annotations(args.gold)
    predictions, unscored = _load_predictions_or_annotations(args.pred, args.skip_unscored)
    dropped = set(unscored)
    gold = [g for g in gold if g.instance_id not in dropped]
    if dropped:
        log.warning("skipping %d unscoreable instance(s)", len(dropped))
    pairs = evaluate.pair_annotations(gold, predictions.values())
    report = evaluate.evaluate_pairs(pairs, policy, tag_order=sch.tag_names())
    rendered = evaluate.render_report(report, format=args.format, no_act_label=sch.no_act_label)
    if args.output:
        Path(args.output).write_text(rendered, encoding="utf-8")
        log.info("wrote report to %s", args.output)
    else:
        sys.stdout.write(rendered)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    store = runstore.RunStore(args.run_store)
    run = store.load_run(args.run_id)
    verdicts = store.latest_verdicts(args.run_id)
    report = store.live_metrics(args.run_id)
    if args.format == "structured":
        payload = {
            "manifest": run.manifest.to_dict(),
            "integrity_warnings": run.integrity_warnings,
            "reviewed": len(verdicts),
            "report": evaluate.report_to_dict(report, no_act_label=run.scheme.no_act_label),
        }
        print(json.dumps(payload, indent=2))
        return EXIT_OK
    m = run.manifest
    print(f"Run:        {m.run_id}")
    print(f"Created:    {m.created_at}")
    print(f"Backend:    {m.backend}")
    print(f"Instances:  {m.instance_count}")
    print(f"Statuses:   {json.dumps(m.status_counts, sort_keys=True)}")
    print(f"Reviewed:   {len(verdicts)}")
    for warning in run.integrity_warnings:
        print(f"WARNING:    {warning}")
    print()
    if report.n_instances:
        print("Live metrics over reviewed instances:")
        sys.stdout.write(
            evaluate.render_report(report, format="table", no_act_label=run.scheme.no_act_label)
        )
    else:
        print("No reviewed instances yet; no live metrics.")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    host, _, port_text = args.addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise UsageError(f"bad --addr {args.addr!r} (expected host:port)")
    store = runstore.RunStore(args.run_store)
    serve(store, host=host, port=int(port_text), ui_dir=args.ui)
    return EXIT_OK


_COMMANDS = {
    "extract": cmd_extract,
    "prompt": cmd_prompt,
    "annotate": cmd_annotate,
    "eval": cmd_eval,
    "report": cmd_report,
    "serve": cmd_serve,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValidationError, NotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except SpanactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
