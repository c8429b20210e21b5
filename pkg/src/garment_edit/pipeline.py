"""End-to-end orchestration: synthesize, edit, build graph, answer, score, filter.

Records move through the stages in bulk, one bounded worker pool per stage.
Every backend-facing stage goes through :class:`StageCache`, so a rerun with
the same config replays from disk and makes no backend calls. A record that
fails is parked at its last completed stage with the failure recorded; the
run carries on with the rest.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .backends import BackendError, Client, HttpTransport, MockBackend, Role, normalize_verdict, scrub, vqa_request
from .cache import StageCache, stage_key
from .config import RunConfig
from .digests import canonical_json, json_digest
from .documents import SchemaViolation, answers_to_obj, graph_from_obj, graph_to_obj
from .graph_build import ExtractionRequest, build_graph
from .images import ImageRef, ImageStore, ResolutionTooLow, atomic_write, load_image_ref
from .scoring import AnswerSet, DependencyGraph, Question, ScoreReport, Verdict, feditscore, filter_decision, validate_graph
from .synthesis import EditCategory, TextTriplet, category_templates, generate_edited_image, generate_triplet, schedule
from .templates import load_template

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".webp", ".bmp"}


class CorpusEmpty(ValueError):
    pass


class Stage(int, enum.Enum):
    PLANNED = 0
    SYNTHESIZED = 1
    IMAGE_EDITED = 2
    GRAPH_BUILT = 3
    ANSWERED = 4
    SCORED = 5

    @property
    def label(self) -> str:
        return {0: "Planned", 1: "Synthesized", 2: "ImageEdited", 3: "GraphBuilt", 4: "Answered", 5: "Scored"}[self.value]

    @classmethod
    def from_label(cls, label: str) -> "Stage":
        for s in cls:
            if s.label.lower() == label.lower().replace("-", "").replace("_", ""):
                return s
        raise ValueError(f"unknown stage {label!r}")


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    original_image: ImageRef
    category: EditCategory
    index: int = 0
    triplet: TextTriplet | None = None
    edited_image: ImageRef | None = None
    graph: DependencyGraph | None = None
    answers: AnswerSet | None = None
    raw_replies: Mapping[str, str] | None = None
    report: ScoreReport | None = None
    stage: Stage = Stage.PLANNED
    failures: tuple[dict, ...] = ()

    def __post_init__(self) -> None:
        needed = [
            (Stage.SYNTHESIZED, self.triplet),
            (Stage.IMAGE_EDITED, self.edited_image),
            (Stage.GRAPH_BUILT, self.graph),
            (Stage.ANSWERED, self.answers),
            (Stage.SCORED, self.report),
        ]
        for stage, artifact in needed:
            if self.stage >= stage and artifact is None:
                raise ValueError(f"{self.sample_id}: stage {self.stage.label} without {stage.label} artifact")

    @property
    def parked(self) -> bool:
        return bool(self.failures) and self.stage is not Stage.SCORED

    def summary(self) -> dict:
        t = self.triplet
        return {
            "sample_id": self.sample_id,
            "category": self.category.value,
            "stage": self.stage.label,
            "score": None if self.report is None else float(self.report.score),
            "decision": None if self.report is None else self.report.decision.value,
            "original_image": self.original_image.sha256,
            "edited_image": None if self.edited_image is None else self.edited_image.sha256,
            "original_description": None if t is None else t.original_description,
            "edit_instruction": None if t is None else t.edit_instruction,
            "edited_description": None if t is None else t.edited_description,
            "num_questions": None if self.graph is None else len(self.graph),
            "failures": [{"stage": f["stage"], "error": f["error"]} for f in self.failures],
        }

    def to_obj(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "category": self.category.value,
            "index": self.index,
            "stage": self.stage.label,
            "original_image": self.original_image.to_obj(),
            "triplet": None if self.triplet is None else self.triplet.to_obj(),
            "edited_image": None if self.edited_image is None else self.edited_image.to_obj(),
            "graph": None if self.graph is None else graph_to_obj(self.graph),
            "answers": None if self.answers is None else answers_to_obj(self.answers),
            "raw_replies": None if self.raw_replies is None else dict(sorted(self.raw_replies.items())),
            "report": None if self.report is None else self.report.to_document(),
            "failures": list(self.failures),
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any], weights=None) -> "SampleRecord":
        graph = None if obj.get("graph") is None else graph_from_obj(obj["graph"])
        answers = None
        if obj.get("answers") is not None:
            answers = AnswerSet({k: Verdict(v) for k, v in obj["answers"]["verdicts"].items()}, obj["answers"].get("sample_id", ""))
        report = None
        if obj.get("report") is not None and graph is not None and answers is not None:
            report = feditscore(validate_graph(graph), answers, weights)
        return cls(
            sample_id=obj["sample_id"],
            original_image=ImageRef.from_obj(obj["original_image"]),
            category=EditCategory(obj["category"]),
            index=obj.get("index", 0),
            triplet=None if obj.get("triplet") is None else TextTriplet.from_obj(obj["triplet"]),
            edited_image=None if obj.get("edited_image") is None else ImageRef.from_obj(obj["edited_image"]),
            graph=graph,
            answers=answers,
            raw_replies=obj.get("raw_replies"),
            report=report,
            stage=Stage.from_label(obj["stage"]),
            failures=tuple(obj.get("failures", ())),
        )


def category_counters(records: Iterable[Mapping[str, Any]]) -> dict[str, dict[str, int]]:
    counters = {c.value: {"attempted": 0, "kept": 0, "dropped": 0, "parked": 0, "pending": 0} for c in EditCategory}
    for r in records:
        c = counters[r["category"]]
        c["attempted"] += 1
        if r.get("decision") == "Keep":
            c["kept"] += 1
        elif r.get("decision") == "Drop":
            c["dropped"] += 1
        elif r.get("failures"):
            c["parked"] += 1
        else:
            c["pending"] += 1
    return counters


@dataclass
class Manifest:
    """Per-sample summaries plus the digest of the config that produced them."""

    records: list[dict]
    run_config_digest: str = ""
    seed: int = 0
    run_report: dict = field(default_factory=dict)

    @property
    def counters(self) -> dict[str, dict[str, int]]:
        return category_counters(self.records)

    def append(self, summary: dict) -> None:
        self.records.append(summary)

    def digest(self) -> str:
        return json_digest({"records": self.records, "run_config_digest": self.run_config_digest, "seed": self.seed})

    def kept(self) -> list[dict]:
        return [r for r in self.records if r.get("decision") == "Keep"]

    def write(self, output_dir: str | os.PathLike) -> Path:
        out = Path(output_dir)
        body = "".join(canonical_json(r) + "\n" for r in self.records)
        atomic_write(out / "manifest.jsonl", body.encode("utf-8"))
        summary = {
            "run_config_digest": self.run_config_digest,
            "seed": self.seed,
            "counters": self.counters,
            "manifest_digest": self.digest(),
        }
        atomic_write(out / "manifest.summary.json", (json.dumps(summary, indent=2, sort_keys=True) + "\n").encode("utf-8"))
        return out / "manifest.jsonl"

    @classmethod
    def load(cls, output_dir: str | os.PathLike) -> "Manifest":
        out = Path(output_dir)
        lines = (out / "manifest.jsonl").read_text(encoding="utf-8").splitlines()
        records = [json.loads(line) for line in lines if line.strip()]
        meta_path = out / "manifest.summary.json"
        meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
        return cls(records=records, run_config_digest=meta.get("run_config_digest", ""), seed=meta.get("seed", 0))


class StageFailure(Exception):
    def __init__(self, message: str, raw: str | None = None):
        self.raw = raw
        super().__init__(message)


def build_clients(config: RunConfig, mock: MockBackend | None = None) -> tuple[dict[Role, Client], MockBackend | None]:
    if config.backend_mode == "mock" or mock is not None:
        mock = mock or MockBackend(
            seed=config.seed,
            fixtures_dir=config.mock_fixtures,
            vqa_policy=config.mock.vqa_policy,
            yes_rate=config.mock.yes_rate,
            graph_shape=config.mock.graph_shape,
        )
        return {r: Client(config.endpoints[r], mock, seed=config.seed) for r in Role}, mock
    clients = {}
    secrets = [os.environ.get(e.auth_token_env, "") for e in config.endpoints.values() if e.auth_token_env]
    for role, endpoint in config.endpoints.items():
        clients[role] = Client(endpoint, HttpTransport(endpoint), seed=config.seed, secrets=secrets)
    return clients, None


def discover_corpus(image_corpus: str | os.PathLike | Sequence[str | os.PathLike]) -> list[Path]:
    if isinstance(image_corpus, (str, os.PathLike)):
        root = Path(image_corpus)
        if root.is_dir():
            paths = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        else:
            paths = [root]
    else:
        paths = sorted(Path(p) for p in image_corpus)
    if not paths:
        raise CorpusEmpty("image corpus is empty")
    return paths


def answer_questions(
    record: SampleRecord,
    vqa: Client,
    *,
    cache: StageCache | None = None,
    pool: ThreadPoolExecutor | None = None,
) -> tuple[AnswerSet, dict[str, str]]:
    """One verdict per graph question, issued concurrently; any failure raises, no partial set."""
    if record.stage < Stage.GRAPH_BUILT or record.edited_image is None or record.graph is None:
        raise ValueError(f"{record.sample_id}: answer_questions needs a built graph and edited image")
    image_bytes = record.edited_image.read_bytes()

    def ask(q: Question) -> str:
        key = stage_key("vqa", {"image": record.edited_image.sha256, "question": q.text}, "", Role.VQA.value)
        if cache is not None:
            hit = cache.get(key)
            if hit is not None:
                return hit["text"]
        text = vqa.call(vqa_request(image_bytes, q)).text
        if cache is not None:
            cache.put(key, {"text": text})
        return text

    questions = list(record.graph.questions.values())
    if pool is None:
        raw = [ask(q) for q in questions]
    else:
        futures = [pool.submit(ask, q) for q in questions]
        raw, errors = [], []
        for fut in futures:
            try:
                raw.append(fut.result())
            except BackendError as exc:
                errors.append(exc)
        if errors:
            raise errors[0]
    replies = {q.id: text for q, text in zip(questions, raw)}
    verdicts = {qid: normalize_verdict(text) for qid, text in replies.items()}
    return AnswerSet(verdicts, sample_id=record.sample_id), replies


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class PipelineRun:
    def __init__(
        self,
        config: RunConfig,
        *,
        clients: Mapping[Role, Client] | None = None,
        mock: MockBackend | None = None,
        progress: Callable[[str], None] | None = None,
    ):
        self.config = config
        if clients is None:
            clients, mock = build_clients(config, mock)
        self.clients = dict(clients)
        self.mock = mock
        self.out = Path(config.output_dir).resolve()
        self.cache = StageCache(self.out / "cache")
        self.store = ImageStore(self.out)
        self.templates = category_templates(config.templates_dir)
        self.extraction = load_template("extraction", config.templates_dir)
        self.progress = progress or (lambda msg: log.info(msg))
        secrets = []
        for c in self.clients.values():
            secrets.extend(c.secrets)
        self.secrets = [s for s in secrets if s]

    def _fail(self, record: SampleRecord, stage: Stage, exc: BaseException) -> SampleRecord:
        entry = {"stage": Stage(stage + 1).label, "error": scrub(f"{type(exc).__name__}: {exc}", self.secrets), "timestamp": _now()}
        raw = getattr(exc, "raw", None)
        if raw is not None:
            entry["raw_reply"] = scrub(raw, self.secrets)
        log.warning("%s parked at %s: %s", record.sample_id, stage.label, entry["error"])
        return replace(record, failures=record.failures + (entry,))

    def _synthesize(self, r: SampleRecord) -> SampleRecord:
        t = generate_triplet(
            r.original_image, r.category, self.clients[Role.STRUCTURED_TEXT], self.templates[r.category], index=r.index, cache=self.cache
        )
        return replace(r, triplet=t, stage=Stage.SYNTHESIZED)

    def _edit(self, r: SampleRecord) -> SampleRecord:
        ref = generate_edited_image(
            r.original_image,
            r.triplet,
            self.clients[Role.IMAGE_EDIT],
            self.store,
            template_version=self.templates[r.category].version,
            cache=self.cache,
        )
        return replace(r, edited_image=ref, stage=Stage.IMAGE_EDITED)

    def _graph(self, r: SampleRecord) -> SampleRecord:
        req = ExtractionRequest(r.sample_id, r.triplet.edit_instruction, r.triplet.edited_description, self.extraction.version)
        g = build_graph(req, self.clients[Role.STRUCTURED_TEXT], self.extraction, max_questions=self.config.max_questions, cache=self.cache)
        return replace(r, graph=g, stage=Stage.GRAPH_BUILT)

    def _answer(self, r: SampleRecord) -> SampleRecord:
        answers, raw = answer_questions(r, self.clients[Role.VQA], cache=self.cache, pool=self._vqa_pool)
        return replace(r, answers=answers, raw_replies=raw, stage=Stage.ANSWERED)

    def _score(self, r: SampleRecord) -> SampleRecord:
        report = feditscore(validate_graph(r.graph), r.answers, self.config.weights)
        report = replace(report, sample_id=r.sample_id)
        return replace(r, report=report, stage=Stage.SCORED)

    def _advance(self, record: SampleRecord, target: Stage, step: Callable[[SampleRecord], SampleRecord]) -> SampleRecord:
        if record.stage >= target or record.stage != target - 1:
            return record
        try:
            return step(record)
        except Exception as exc:  # noqa: BLE001 - parking is the contract for any stage failure
            return self._fail(record, record.stage, exc)

    def plan(self, image_corpus) -> tuple[list[SampleRecord], list[dict]]:
        images, rejected = [], []
        for path in discover_corpus(image_corpus):
            try:
                images.append(load_image_ref(path))
            except (ResolutionTooLow, OSError) as exc:
                rejected.append({"path": str(path), "error": str(exc)})
        if not images:
            raise CorpusEmpty("no usable images in corpus")
        records = [
            SampleRecord(sample_id=f"{img.sha256[:12]}-{cat.value}-{k}", original_image=img, category=cat, index=k)
            for img, cat, k in schedule(images, self.config.triplets_per_image_per_category)
        ]
        return records, rejected

    def run(self, image_corpus, until: Stage = Stage.SCORED) -> Manifest:
        started = time.monotonic()
        records, rejected = self.plan(image_corpus)
        self.out.mkdir(parents=True, exist_ok=True)
        steps = [
            (Stage.SYNTHESIZED, self._synthesize),
            (Stage.IMAGE_EDITED, self._edit),
            (Stage.GRAPH_BUILT, self._graph),
            (Stage.ANSWERED, self._answer),
            (Stage.SCORED, self._score),
        ]
        vqa_slots = self.clients[Role.VQA].endpoint.max_concurrency
        self._vqa_pool = ThreadPoolExecutor(max_workers=vqa_slots, thread_name_prefix="vqa")
        calls_before = self.mock.calls if self.mock is not None else None
        hits_before = self.cache.hits
        try:
            with ThreadPoolExecutor(max_workers=self.config.workers, thread_name_prefix="stage") as pool:
                for target, step in steps:
                    if target > until:
                        break
                    futures = [pool.submit(self._advance, r, target, step) for r in records]
                    try:
                        records = [f.result() for f in futures]
                    except KeyboardInterrupt:
                        for f in futures:
                            f.cancel()
                        done = [f.result() if f.done() and not f.cancelled() and f.exception() is None else r for f, r in zip(futures, records)]
                        self._finish(done, rejected, started, interrupted=True)
                        raise
                    reached = sum(1 for r in records if r.stage >= target)
                    self.progress(f"{target.label}: {reached}/{len(records)} records")
        finally:
            self._vqa_pool.shutdown(wait=True)
        manifest = self._finish(records, rejected, started)
        manifest.run_report["backend_calls"] = None if calls_before is None else self.mock.calls - calls_before
        manifest.run_report["cache_hits"] = self.cache.hits - hits_before
        return manifest

    def _finish(self, records: list[SampleRecord], rejected: list[dict], started: float, interrupted: bool = False) -> Manifest:
        manifest = Manifest(records=[], run_config_digest=self.config.digest(), seed=self.config.seed)
        for r in records:
            atomic_write(self.out / "records" / f"{r.sample_id}.json", (json.dumps(r.to_obj(), sort_keys=True) + "\n").encode("utf-8"))
            manifest.append(r.summary())
        manifest.write(self.out)
        triplets = [r.triplet for r in records if r.triplet is not None]

        def mean_words(attr: str) -> float | None:
            if not triplets:
                return None
            return sum(len(getattr(t, attr).split()) for t in triplets) / len(triplets)

        manifest.run_report = {
            "interrupted": interrupted,
            "rejected_images": rejected,
            "mean_words": {
                "original_description": mean_words("original_description"),
                "edit_instruction": mean_words("edit_instruction"),
                "edited_description": mean_words("edited_description"),
            },
            "schema_violations": sum(1 for r in records for f in r.failures if "raw_reply" in f),
            "elapsed_seconds": round(time.monotonic() - started, 3),
        }
        atomic_write(self.out / "run_report.json", (json.dumps(manifest.run_report, indent=2, sort_keys=True) + "\n").encode("utf-8"))
        if self.mock is not None:
            self.mock.write_transcript(self.out / "transcript.jsonl")
        return manifest


def run_pipeline(config: RunConfig, image_corpus, *, until: Stage = Stage.SCORED, **kwargs) -> Manifest:
    return PipelineRun(config, **kwargs).run(image_corpus, until=until)


def load_records(output_dir: str | os.PathLike, weights=None) -> list[SampleRecord]:
    root = Path(output_dir) / "records"
    return [SampleRecord.from_obj(json.loads(p.read_text(encoding="utf-8")), weights) for p in sorted(root.glob("*.json"))]


def refilter(output_dir: str | os.PathLike, weights) -> Manifest:
    """Recompute scores and keep/drop decisions from stored artifacts with new weights."""
    old = Manifest.load(output_dir)
    records = {r.sample_id: r for r in load_records(output_dir, weights)}
    summaries = []
    for s in old.records:
        r = records.get(s["sample_id"])
        summaries.append(r.summary() if r is not None else s)
    return Manifest(records=summaries, run_config_digest=old.run_config_digest, seed=old.seed)


def check_filter_consistency(manifest: Manifest, records: Sequence[SampleRecord], weights) -> list[str]:
    """Sample ids whose stored decision differs from one recomputed from their score."""
    by_id = {r.sample_id: r for r in records}
    bad = []
    for s in manifest.records:
        if s.get("score") is None:
            continue
        r = by_id[s["sample_id"]]
        recomputed = feditscore(validate_graph(r.graph), r.answers, weights)
        if filter_decision(recomputed.score, weights).value != s["decision"]:
            bad.append(s["sample_id"])
    return bad
