"""Persist annotation runs and drive the human review loop.

A run is a plain directory: manifest, scheme, prompt spec, instances,
predictions, optional transcripts, and an append-only verdict log. No
database; runs stay portable, diffable artifacts.

Review semantics: verdicts are never rewritten, and the verdict with the
highest per-run sequence number wins for each instance. The effective gold
for a reviewed instance is derived from that verdict (ACCEPT adopts the
prediction itself), and live metrics evaluate predictions against effective
gold over the reviewed subset only.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .corpus import CorpusInstance, read_instances, write_instances
from .errors import DataError, NotFoundError, UsageError, ValidationError
from .evaluate import EXACT, EvalReport, MatchPolicy, evaluate_pairs
from .gateway import RawResult, Transcript
from .prompting import PromptSpec, prompt_hash
from .scheme import (
    Annotation,
    AnnotationScheme,
    TagSpan,
    scheme_hash,
    validate_annotation,
)
from .tagparse import process_response

PARSE_FAILURE = "PARSE_FAILURE"
PREDICTION_STATUSES = ("OK", "REFUSED", "TIMEOUT", "BACKEND_ERROR", PARSE_FAILURE)
FAILURE_STATUSES = ("REFUSED", "TIMEOUT", "BACKEND_ERROR", PARSE_FAILURE)

ACCEPT = "ACCEPT"
CORRECT = "CORRECT"
MARK_NO_ACT = "MARK_NO_ACT"
ACTIONS = (ACCEPT, CORRECT, MARK_NO_ACT)

_RUN_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


@dataclass(frozen=True)
class PredictionRecord:
    """One instance's first-pass outcome: a status plus, when OK, the
    parsed annotation and its alignment coverage."""

    instance_id: str
    status: str
    annotation: Optional[Annotation] = None
    coverage: Optional[float] = None
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.status not in PREDICTION_STATUSES:
            raise DataError(f"unknown prediction status {self.status!r}")
        if self.status == "OK" and self.annotation is None:
            raise DataError("OK prediction requires an annotation")

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "status": self.status,
            "annotation": self.annotation.to_dict() if self.annotation else None,
            "coverage": self.coverage,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PredictionRecord":
        try:
            ann = data.get("annotation")
            return cls(
                instance_id=data["instance_id"],
                status=data["status"],
                annotation=Annotation.from_dict(ann) if ann else None,
                coverage=data.get("coverage"),
                diagnostics=tuple(data.get("diagnostics", ())),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed prediction record: {exc}") from exc


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    created_at: str
    scheme_hash: str
    prompt_hash: str
    backend: str  # descriptor only; never contains credentials
    instance_count: int
    status_counts: dict[str, int]

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "scheme_hash": self.scheme_hash,
            "prompt_hash": self.prompt_hash,
            "backend": self.backend,
            "instance_count": self.instance_count,
            "status_counts": dict(self.status_counts),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunManifest":
        try:
            return cls(
                run_id=data["run_id"],
                created_at=data["created_at"],
                scheme_hash=data["scheme_hash"],
                prompt_hash=data["prompt_hash"],
                backend=data.get("backend", ""),
                instance_count=int(data["instance_count"]),
                status_counts=dict(data.get("status_counts", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed run manifest: {exc}") from exc


@dataclass(frozen=True)
class Verdict:
    instance_id: str
    reviewer_id: str
    action: str
    act_present: Optional[bool]
    spans: Optional[tuple[TagSpan, ...]]
    submitted_at: str
    sequence: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "reviewer_id": self.reviewer_id,
            "action": self.action,
            "act_present": self.act_present,
            "spans": None if self.spans is None else [s.to_dict() for s in self.spans],
            "submitted_at": self.submitted_at,
            "sequence": self.sequence,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Verdict":
        try:
            spans = data.get("spans")
            return cls(
                instance_id=data["instance_id"],
                reviewer_id=data["reviewer_id"],
                action=data["action"],
                act_present=data.get("act_present"),
                spans=None if spans is None else tuple(TagSpan.from_dict(s) for s in spans),
                submitted_at=data.get("submitted_at", ""),
                sequence=int(data["sequence"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed verdict record: {exc}") from exc


@dataclass
class LoadedRun:
    manifest: RunManifest
    scheme: AnnotationScheme
    prompt_spec: PromptSpec
    instances: list[CorpusInstance]
    predictions: list[PredictionRecord]
    transcripts: dict[str, Transcript]
    integrity_warnings: list[str] = field(default_factory=list)

    @property
    def predictions_by_id(self) -> dict[str, PredictionRecord]:
        return {p.instance_id: p for p in self.predictions}

    @property
    def instances_by_id(self) -> dict[str, CorpusInstance]:
        return {i.id: i for i in self.instances}


@dataclass(frozen=True)
class QueueEntry:
    """One review-queue row; failures surface before low-coverage successes."""

    instance_id: str
    status: str
    coverage: Optional[float]
    reviewed: bool


def build_predictions(
    results: Iterable[tuple[RawResult, Optional[Transcript]]],
    instances: Sequence[CorpusInstance],
    scheme: AnnotationScheme,
    run_id: str,
    min_coverage: float = 0.9,
) -> list[PredictionRecord]:
    """Parse gateway results into prediction records, in input order."""
    by_id = {i.id: i for i in instances}
    records: list[PredictionRecord] = []
    for raw, _ in results:
        instance = by_id.get(raw.instance_id)
        if instance is None:
            raise DataError(f"result for unknown instance {raw.instance_id!r}")
        if raw.status != "OK":
            records.append(PredictionRecord(raw.instance_id, raw.status))
            continue
        outcome = process_response(
            raw.response_text,
            instance,
            scheme,
            min_coverage=min_coverage,
            provenance=f"llm-run:{run_id}",
        )
        if outcome.annotation is not None:
            records.append(
                PredictionRecord(
                    raw.instance_id,
                    "OK",
                    annotation=outcome.annotation,
                    coverage=outcome.coverage,
                    diagnostics=outcome.diagnostics,
                )
            )
        else:
            assert outcome.failure is not None
            records.append(
                PredictionRecord(
                    raw.instance_id,
                    PARSE_FAILURE,
                    coverage=outcome.coverage,
                    diagnostics=(outcome.failure.reason,) + tuple(outcome.failure.diagnostics),
                )
            )
    return records


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_jsonl(path: Path, records: Iterable[dict[str, Any]]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")


def _read_jsonl(path: Path) -> list[dict[str, Any]]:
    if not path.exists():
        raise DataError(f"missing run file: {path}")
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    return out


class RunStore:
    """A directory of runs. Thread-safe for concurrent reads; verdict
    appends are serialized per run."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, run_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(run_id, threading.Lock())

    def _run_dir(self, run_id: str, must_exist: bool = True) -> Path:
        if not _RUN_ID_RE.match(run_id):
            raise DataError(f"invalid run id {run_id!r}")
        path = self.root / run_id
        if must_exist and not path.is_dir():
            raise NotFoundError(f"no such run: {run_id}")
        return path

    def save_run(
        self,
        run_id: str,
        scheme: AnnotationScheme,
        prompt_spec: PromptSpec,
        instances: Sequence[CorpusInstance],
        predictions: Sequence[PredictionRecord],
        transcripts: Optional[Sequence[Transcript]] = None,
        backend_descriptor: str = "",
    ) -> RunManifest:
        instance_ids = {i.id for i in instances}
        for p in predictions:
            if p.instance_id not in instance_ids:
                raise DataError(f"prediction references unknown instance {p.instance_id!r}")
        run_dir = self._run_dir(run_id, must_exist=False)
        if run_dir.exists():
            raise DataError(f"run {run_id!r} already exists")
        run_dir.mkdir(parents=True)
        status_counts: dict[str, int] = {}
        for p in predictions:
            status_counts[p.status] = status_counts.get(p.status, 0) + 1
        manifest = RunManifest(
            run_id=run_id,
            created_at=_now(),
            scheme_hash=scheme_hash(scheme),
            prompt_hash=prompt_hash(prompt_spec),
            backend=backend_descriptor,
            instance_count=len(instances),
            status_counts=status_counts,
        )
        (run_dir / "manifest.json").write_text(
            json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        (run_dir / "scheme.json").write_text(
            json.dumps(scheme.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        (run_dir / "prompt.json").write_text(
            json.dumps(prompt_spec.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        write_instances(instances, run_dir / "instances.jsonl")
        _write_jsonl(run_dir / "predictions.jsonl", (p.to_dict() for p in predictions))
        if transcripts is not None:
            _write_jsonl(run_dir / "transcripts.jsonl", (t.to_dict() for t in transcripts))
        return manifest

    def list_runs(self) -> list[RunManifest]:
        manifests = []
        for child in sorted(self.root.iterdir()):
            if child.is_dir() and (child / "manifest.json").exists():
                manifests.append(self._load_manifest(child))
        return manifests

    def _load_manifest(self, run_dir: Path) -> RunManifest:
        try:
            data = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read manifest in {run_dir}: {exc}") from exc
        return RunManifest.from_dict(data)

    def load_run(self, run_id: str) -> LoadedRun:
        run_dir = self._run_dir(run_id)
        manifest = self._load_manifest(run_dir)
        scheme_path = run_dir / "scheme.json"
        prompt_path = run_dir / "prompt.json"
        if not scheme_path.exists():
            raise DataError(f"missing run file: {scheme_path}")
        if not prompt_path.exists():
            raise DataError(f"missing run file: {prompt_path}")
        scheme = AnnotationScheme.from_dict(
            json.loads(scheme_path.read_text(encoding="utf-8"))
        )
        prompt_spec = PromptSpec.from_dict(json.loads(prompt_path.read_text(encoding="utf-8")))
        warnings: list[str] = []
        if scheme_hash(scheme) != manifest.scheme_hash:
            warnings.append("scheme.json does not match the manifest scheme_hash")
        if prompt_hash(prompt_spec) != manifest.prompt_hash:
            warnings.append("prompt.json does not match the manifest prompt_hash")
        instances_path = run_dir / "instances.jsonl"
        if not instances_path.exists():
            raise DataError(f"missing run file: {instances_path}")
        instances = read_instances(instances_path)
        predictions = [
            PredictionRecord.from_dict(d) for d in _read_jsonl(run_dir / "predictions.jsonl")
        ]
        transcripts: dict[str, Transcript] = {}
        transcripts_path = run_dir / "transcripts.jsonl"
        if transcripts_path.exists():
            for d in _read_jsonl(transcripts_path):
                t = Transcript.from_dict(d)
                transcripts[t.instance_id] = t
        return LoadedRun(
            manifest=manifest,
            scheme=scheme,
            prompt_spec=prompt_spec,
            instances=instances,
            predictions=predictions,
            transcripts=transcripts,
            integrity_warnings=warnings,
        )

    def _verdicts_path(self, run_id: str) -> Path:
        return self._run_dir(run_id) / "verdicts.jsonl"

    def read_verdicts(self, run_id: str) -> list[Verdict]:
        path = self._verdicts_path(run_id)
        if not path.exists():
            return []
        return [Verdict.from_dict(d) for d in _read_jsonl(path)]

    def latest_verdicts(self, run_id: str) -> dict[str, Verdict]:
        latest: dict[str, Verdict] = {}
        for v in self.read_verdicts(run_id):
            cur = latest.get(v.instance_id)
            if cur is None or v.sequence > cur.sequence:
                latest[v.instance_id] = v
        return latest

    def submit_verdict(
        self,
        run_id: str,
        instance_id: str,
        reviewer_id: str,
        action: str,
        act_present: Optional[bool] = None,
        spans: Optional[Sequence[TagSpan]] = None,
    ) -> Verdict:
        """Validate and append one verdict; nothing is stored on failure."""
        if action not in ACTIONS:
            raise ValidationError(f"unknown verdict action {action!r}")
        if not reviewer_id:
            raise ValidationError("reviewer_id must be non-empty")
        run = self.load_run(run_id)
        instance = run.instances_by_id.get(instance_id)
        if instance is None:
            raise NotFoundError(f"no such instance in run {run_id}: {instance_id}")
        prediction = run.predictions_by_id.get(instance_id)

        if action == ACCEPT:
            if prediction is None or prediction.annotation is None:
                raise ValidationError(
                    "ACCEPT requires a parsed prediction; correct the instance instead"
                )
            stored_act, stored_spans = None, None
        elif action == MARK_NO_ACT:
            if spans:
                raise ValidationError("MARK_NO_ACT forbids spans")
            stored_act, stored_spans = False, ()
        else:  # CORRECT
            if act_present is None or spans is None:
                raise ValidationError("CORRECT requires act_present and spans")
            candidate = Annotation(
                instance_id=instance_id,
                act_present=act_present,
                spans=tuple(sorted(spans, key=lambda s: (s.start, s.end))),
                provenance=f"human:{reviewer_id}",
            )
            violations = validate_annotation(candidate, run.scheme, instance)
            if violations:
                raise ValidationError(
                    "corrected annotation violates scheme invariants",
                    [str(v) for v in violations],
                )
            stored_act, stored_spans = candidate.act_present, candidate.spans

        with self._lock(run_id):
            existing = self.read_verdicts(run_id)
            sequence = 1 + max((v.sequence for v in existing), default=0)
            verdict = Verdict(
                instance_id=instance_id,
                reviewer_id=reviewer_id,
                action=action,
                act_present=stored_act,
                spans=stored_spans,
                submitted_at=_now(),
                sequence=sequence,
            )
            with self._verdicts_path(run_id).open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(verdict.to_dict(), ensure_ascii=False))
                fh.write("\n")
        return verdict

    def effective_gold(self, run: LoadedRun, verdicts: dict[str, Verdict]) -> dict[str, Annotation]:
        """Derive the authoritative annotation per reviewed instance."""
        gold: dict[str, Annotation] = {}
        predictions = run.predictions_by_id
        for instance_id, verdict in verdicts.items():
            human = f"human:{verdict.reviewer_id}"
            if verdict.action == ACCEPT:
                prediction = predictions.get(instance_id)
                if prediction is None or prediction.annotation is None:
                    continue  # log damage; skip rather than crash
                ann = prediction.annotation
                gold[instance_id] = Annotation(instance_id, ann.act_present, ann.spans, human)
            elif verdict.action == MARK_NO_ACT:
                gold[instance_id] = Annotation(instance_id, False, (), human)
            else:
                gold[instance_id] = Annotation(
                    instance_id, bool(verdict.act_present), verdict.spans or (), human
                )
        return gold

    def live_metrics(self, run_id: str, policy: MatchPolicy = EXACT) -> EvalReport:
        """Evaluate predictions against verdict-derived gold, reviewed subset only.

        Reviewed instances whose prediction has no parsed annotation (it
        failed or was refused) cannot be paired and are left out; the
        service surfaces them through the progress counters instead.
        """
        run = self.load_run(run_id)
        verdicts = self.latest_verdicts(run_id)
        gold = self.effective_gold(run, verdicts)
        predictions = run.predictions_by_id
        pairs = []
        for instance_id, gold_ann in gold.items():
            prediction = predictions.get(instance_id)
            if prediction is None or prediction.annotation is None:
                continue
            pairs.append((gold_ann, prediction.annotation))
        return evaluate_pairs(pairs, policy, tag_order=run.scheme.tag_names())

    def review_queue(
        self, run_id: str, status_filter: Optional[str] = None
    ) -> list[QueueEntry]:
        """Instances in review order: failures first, then OK ascending by
        coverage. status_filter: pending | reviewed | failed."""
        run = self.load_run(run_id)
        verdicts = self.latest_verdicts(run_id)
        predictions = run.predictions_by_id
        entries: list[QueueEntry] = []
        for instance in run.instances:
            prediction = predictions.get(instance.id)
            status = prediction.status if prediction else "BACKEND_ERROR"
            coverage = prediction.coverage if prediction else None
            entries.append(
                QueueEntry(instance.id, status, coverage, reviewed=instance.id in verdicts)
            )
        failed = [e for e in entries if e.status in FAILURE_STATUSES]
        succeeded = [e for e in entries if e.status not in FAILURE_STATUSES]
        succeeded.sort(key=lambda e: e.coverage if e.coverage is not None else 1.0)
        ordered = failed + succeeded
        if status_filter == "pending":
            ordered = [e for e in ordered if not e.reviewed]
        elif status_filter == "reviewed":
            ordered = [e for e in ordered if e.reviewed]
        elif status_filter == "failed":
            ordered = [e for e in ordered if e.status in FAILURE_STATUSES]
        elif status_filter is not None:
            raise UsageError(f"unknown status filter {status_filter!r}")
        return ordered
