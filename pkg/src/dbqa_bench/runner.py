"""Experiment orchestration and the self-describing run directory.

Layout: manifest.json, transcripts/<qid>.json, evals/<qid>.json,
prompts/<qid>/NN_<kind>.txt, report/... . An instance counts as done when
both its transcript and eval files exist; the transcript is written last
and every write is temp-then-rename, so a killed batch resumes to a
directory identical to an uninterrupted run.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

from .evaluation import InstanceEval, instance_eval_from_dict, instance_eval_to_dict, run_full_eval
from .gateway import Gateway
from .metrics import MetricsTable, build_metrics
from .model import Instance, RunConfig, load_dataset
from .prompts import TEMPLATES_DIR
from .sandbox import render_schema
from .strategies import StrategyOutcome, outcome_from_dict, outcome_to_dict, run_strategy

logger = logging.getLogger(__name__)

RUBRICS_GLOB = "rubrics/*.txt"


@dataclass(frozen=True)
class RunDirectory:
    root: Path

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    @property
    def transcripts_dir(self) -> Path:
        return self.root / "transcripts"

    @property
    def evals_dir(self) -> Path:
        return self.root / "evals"

    @property
    def prompts_dir(self) -> Path:
        return self.root / "prompts"

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    def manifest(self) -> dict:
        return json.loads(self.manifest_path.read_text(encoding="utf-8"))

    def config(self) -> RunConfig:
        return RunConfig(**self.manifest()["config"])


def _write_json(path: Path, data: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(
        json.dumps(data, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    tmp.replace(path)


def hash_dataset(path: str | Path) -> str:
    """Content hash over every file in the dataset directory."""
    digest = hashlib.sha256()
    root = Path(path)
    for file in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(file.relative_to(root)).encode("utf-8"))
        digest.update(b"\x00")
        digest.update(file.read_bytes())
        digest.update(b"\x00")
    return digest.hexdigest()


def template_hashes() -> dict[str, str]:
    hashes = {}
    package_dir = TEMPLATES_DIR.parent
    for file in sorted(TEMPLATES_DIR.glob("*.txt")) + sorted(package_dir.glob(RUBRICS_GLOB)):
        key = str(file.relative_to(package_dir))
        hashes[key] = hashlib.sha256(file.read_bytes()).hexdigest()
    return hashes


def _iso(timestamp: float) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(timestamp))


def _run_instance(
    run: RunDirectory,
    instance: Instance,
    cfg: RunConfig,
    gw: Gateway,
) -> None:
    spec, question, gold = instance
    qid = question.question_id
    transcript_path = run.transcripts_dir / f"{qid}.json"
    eval_path = run.evals_dir / f"{qid}.json"
    if transcript_path.exists() and eval_path.exists():
        logger.info("%s: already complete, skipping", qid)
        return

    outcome = run_strategy(question, spec, cfg, gw)

    prompt_dir = run.prompts_dir / qid
    prompt_dir.mkdir(parents=True, exist_ok=True)
    for index, record in enumerate(outcome.subtask_records):
        (prompt_dir / f"{index:02d}_{record.kind}.txt").write_text(
            record.input_bundle, encoding="utf-8"
        )

    if outcome.transcript.aborted_reason is not None:
        eval_data: dict = {"question_id": qid, "skipped": outcome.transcript.aborted_reason}
    else:
        ev = run_full_eval(outcome, question, gold, render_schema(spec), cfg, gw)
        eval_data = instance_eval_to_dict(ev)

    _write_json(eval_path, eval_data)
    _write_json(transcript_path, outcome_to_dict(outcome))


def run_experiment(
    dataset_path: str | Path,
    cfg: RunConfig,
    out: str | Path,
    gw: Gateway,
    parallelism: int = 1,
    clock: Callable[[], float] = time.time,
) -> RunDirectory:
    """Run strategy + full evaluation for every instance, resumably."""
    instances = load_dataset(dataset_path)
    run = RunDirectory(Path(out))
    run.transcripts_dir.mkdir(parents=True, exist_ok=True)
    run.evals_dir.mkdir(parents=True, exist_ok=True)
    run.prompts_dir.mkdir(parents=True, exist_ok=True)

    started = _iso(clock())
    manifest = {
        "config": asdict(cfg),
        "dataset_path": str(dataset_path),
        "dataset_hash": hash_dataset(dataset_path),
        "template_hashes": template_hashes(),
        "plan_length_aggregation": "sum of plan words across cycles",
        "instances": len(instances),
        "started_at": started,
        "finished_at": None,
    }
    _write_json(run.manifest_path, manifest)

    def work(instance: Instance) -> None:
        qid = instance[1].question_id
        try:
            _run_instance(run, instance, cfg, gw)
        except Exception:
            logger.exception("%s: instance failed; continuing batch", qid)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(work, instances))
    else:
        for instance in instances:
            work(instance)

    manifest["finished_at"] = _iso(clock())
    _write_json(run.manifest_path, manifest)
    logger.info("batch complete: %d instances, %d provider calls", len(instances), gw.call_count)
    return run


def reevaluate(
    run: RunDirectory,
    dataset_path: str | Path,
    gw: Gateway,
    cfg: RunConfig | None = None,
) -> None:
    """Re-run the evaluation suite over existing transcripts."""
    cfg = cfg or run.config()
    by_qid = {q.question_id: (spec, q, gold) for spec, q, gold in load_dataset(dataset_path)}
    for transcript_path in sorted(run.transcripts_dir.glob("*.json")):
        qid = transcript_path.stem
        if qid not in by_qid:
            logger.warning("%s: not in dataset, skipping", qid)
            continue
        spec, question, gold = by_qid[qid]
        outcome = outcome_from_dict(json.loads(transcript_path.read_text(encoding="utf-8")))
        if outcome.transcript.aborted_reason is not None:
            eval_data: dict = {"question_id": qid, "skipped": outcome.transcript.aborted_reason}
        else:
            ev = run_full_eval(outcome, question, gold, render_schema(spec), cfg, gw)
            eval_data = instance_eval_to_dict(ev)
        _write_json(run.evals_dir / f"{qid}.json", eval_data)


@dataclass(frozen=True)
class LoadedRun:
    """Artifacts of one run pulled back into memory for aggregation."""

    config: RunConfig
    outcomes: dict[str, StrategyOutcome]
    categories: dict[str, str]
    evals: dict[str, InstanceEval]
    integrity_issues: tuple[str, ...]


def load_run(run: RunDirectory, dataset_path: str | Path | None = None) -> LoadedRun:
    cfg = run.config()
    dataset = dataset_path or run.manifest().get("dataset_path")
    categories = {
        q.question_id: q.category for _, q, _ in load_dataset(dataset)
    }

    outcomes: dict[str, StrategyOutcome] = {}
    evals: dict[str, InstanceEval] = {}
    issues: list[str] = []
    for transcript_path in sorted(run.transcripts_dir.glob("*.json")):
        qid = transcript_path.stem
        try:
            outcomes[qid] = outcome_from_dict(
                json.loads(transcript_path.read_text(encoding="utf-8"))
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            issues.append(f"transcripts/{qid}.json: {exc}")
            continue
        eval_path = run.evals_dir / f"{qid}.json"
        if not eval_path.exists():
            issues.append(f"evals/{qid}.json: missing")
            continue
        try:
            data = json.loads(eval_path.read_text(encoding="utf-8"))
            if "skipped" not in data:
                evals[qid] = instance_eval_from_dict(data)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            issues.append(f"evals/{qid}.json: {exc}")
    for qid in list(outcomes):
        if qid not in categories:
            issues.append(f"transcripts/{qid}.json: question not in dataset")
            outcomes.pop(qid)
            evals.pop(qid, None)
    return LoadedRun(
        config=cfg,
        outcomes=outcomes,
        categories={qid: categories[qid] for qid in outcomes},
        evals=evals,
        integrity_issues=tuple(issues),
    )


def compute_metrics(run: RunDirectory, dataset_path: str | Path | None = None) -> MetricsTable:
    """Aggregate one run directory; recomputable from the artifacts alone."""
    loaded = load_run(run, dataset_path)
    return build_metrics(
        model_id=loaded.config.model_id,
        strategy=loaded.config.strategy,
        outcomes=loaded.outcomes,
        categories=loaded.categories,
        evals=loaded.evals,
        integrity_issues=loaded.integrity_issues,
    )
