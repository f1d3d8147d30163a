"""Command-line interface: forge, serve, run, eval, report, validate."""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from .forge import DraftStore, ForgeConfig, PipelineError, load_seed_corpus, run_forge_pipeline
from .gateway import Gateway, gateway_from_config, load_provider_config
from .metrics import merge_tables, render_bins_csv, render_tables
from .model import RunConfig, load_dataset, validate_instance
from .runner import RunDirectory, compute_metrics, load_run, reevaluate, run_experiment
from . import metrics as metrics_mod

logger = logging.getLogger(__name__)


def _build_gateway(config_path: str | None, cache_path: str | None) -> Gateway:
    if config_path is None:
        raise click.UsageError("--providers config file is required for this command")
    return gateway_from_config(load_provider_config(config_path), cache_path=cache_path)


def _run_config(config_path: str | None, **overrides) -> RunConfig:
    base: dict = {}
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            base = json.load(fh).get("run", {})
    base.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**base)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(f"incomplete run configuration: {exc}") from exc


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Benchmark harness for long-form database question answering."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.argument("dataset", type=click.Path(exists=True, file_okay=False))
def validate(dataset: str) -> None:
    """Check every instance in DATASET against the type invariants."""
    instances = load_dataset(dataset)
    failures = 0
    for spec, question, answer in instances:
        report = validate_instance(spec, question, answer)
        if report.ok:
            click.echo(f"ok    {question.question_id}")
        else:
            failures += 1
            click.echo(f"FAIL  {question.question_id}")
            for failure in report.failures:
                click.echo(f"      - {failure}")
    click.echo(f"{len(instances)} instances, {failures} failing")
    if failures:
        sys.exit(1)


@main.command()
@click.argument("dataset", type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Run directory.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON config with 'run' and 'providers' sections.")
@click.option("--providers", "providers_path", type=click.Path(exists=True, dir_okay=False),
              help="Provider config (defaults to --config).")
@click.option("--model", "model_id", help="Agent model id.")
@click.option("--strategy", type=click.Choice(["none", "sequential", "iterative"]))
@click.option("--evaluator-model", "evaluator_model_id", help="Judge model id (defaults to --model).")
@click.option("--agent-temperature", type=float)
@click.option("--evaluator-temperature", type=float)
@click.option("--max-iterations", type=int)
@click.option("--row-limit", type=int)
@click.option("--context-token-budget", type=int)
@click.option("--reviewer-count", type=int)
@click.option("--meta-reviewer-count", type=int)
@click.option("--random-seed", type=int)
@click.option("--parallelism", type=int, default=1, show_default=True)
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), help="Response cache file.")
def run(dataset: str, out: str, config_path: str | None, providers_path: str | None,
        parallelism: int, cache_path: str | None, **overrides) -> None:
    """Run the configured strategy plus full evaluation over DATASET."""
    gateway = _build_gateway(providers_path or config_path, cache_path)
    cfg = _run_config(config_path, provider_id="http", **overrides)
    run_dir = run_experiment(dataset, cfg, out, gateway, parallelism=parallelism)
    click.echo(f"run complete: {run_dir.root}")


@main.command("eval")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--providers", "providers_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False))
def eval_cmd(run_dir: str, dataset: str, config_path: str | None,
             providers_path: str | None, cache_path: str | None) -> None:
    """Re-evaluate the transcripts already stored in RUN_DIR."""
    gateway = _build_gateway(providers_path or config_path, cache_path)
    reevaluate(RunDirectory(Path(run_dir)), dataset, gateway)
    click.echo("re-evaluation complete")


@main.command()
@click.argument("run_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--dataset", type=click.Path(exists=True, file_okay=False),
              help="Override the dataset path recorded in the run manifests.")
@click.option("--out", type=click.Path(file_okay=False),
              help="Report directory (defaults to <first run>/report).")
@click.option("--formats", default="markdown,csv,json", show_default=True)
@click.option("--bins", "bin_edges", default=None,
              help="Comma-separated valid-SQL bin edges, e.g. 0,1,2,4.")
@click.option("--figures/--no-figures", default=True, show_default=True,
              help="Also render charts as PNG files.")
def report(run_dirs: tuple[str, ...], dataset: str | None, out: str | None,
           formats: str, bin_edges: str | None, figures: bool) -> None:
    """Render measurement tables (and figures) from one or more run directories."""
    runs = [RunDirectory(Path(r)) for r in run_dirs]
    table = merge_tables([compute_metrics(r, dataset) for r in runs])

    out_dir = Path(out) if out else runs[0].report_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = {"markdown": "md", "csv": "csv", "json": "json"}
    for fmt in [f.strip() for f in formats.split(",") if f.strip()]:
        text = render_tables(table, format=fmt)
        path = out_dir / f"metrics.{suffix[fmt]}"
        path.write_text(text, encoding="utf-8")
        click.echo(f"wrote {path}")

    bins = None
    if bin_edges:
        edges = [float(e) for e in bin_edges.split(",")]
        merged_outcomes: dict = {}
        merged_categories: dict = {}
        merged_evals: dict = {}
        for run_dir in runs:
            loaded = load_run(run_dir, dataset)
            prefix = f"{loaded.config.model_id}/{loaded.config.strategy}/"
            merged_outcomes.update({prefix + k: v for k, v in loaded.outcomes.items()})
            merged_categories.update({prefix + k: v for k, v in loaded.categories.items()})
            merged_evals.update({prefix + k: v for k, v in loaded.evals.items()})
        bins = metrics_mod.correlation_bins(merged_outcomes, merged_categories, merged_evals, edges)
        path = out_dir / "valid_sql_bins.csv"
        path.write_text(render_bins_csv(bins), encoding="utf-8")
        click.echo(f"wrote {path}")

    if figures:
        from .figures import save_report_figures

        for path in save_report_figures(table, out_dir / "figures", bins=bins):
            click.echo(f"wrote {path}")


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False),
              help="Seed corpus: seeds.jsonl plus <db_id>/schema.sql directories.")
@click.option("--drafts", "drafts_dir", required=True, type=click.Path(file_okay=False),
              help="Draft store directory.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--providers", "providers_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_id", required=True)
@click.option("--temperature", type=float, default=0.0, show_default=True)
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False))
@click.option("--limit", type=int, default=None, help="Process at most N seeds.")
def forge(corpus: str, drafts_dir: str, config_path: str | None, providers_path: str | None,
          model_id: str, temperature: float, cache_path: str | None, limit: int | None) -> None:
    """Drive seed questions through the construction pipelines."""
    gateway = _build_gateway(providers_path or config_path, cache_path)
    cfg = ForgeConfig(model_id=model_id, temperature=temperature)
    store = DraftStore(drafts_dir)
    seeds, schemas = load_seed_corpus(corpus)
    if limit is not None:
        seeds = seeds[:limit]
    done = failed = 0
    for index, seed in enumerate(seeds):
        draft_id = f"draft-{index:04d}"
        if store.exists(draft_id):
            continue
        try:
            draft = run_forge_pipeline(seed, schemas[seed.db_id], draft_id, cfg, gateway, store)
            click.echo(f"{draft_id}: {draft.stage} ({draft.proposed_category})")
            done += 1
        except PipelineError as exc:
            logger.warning("%s failed: %s", draft_id, exc)
            failed += 1
    click.echo(f"{done} drafts classified, {failed} failed; review them with the serve command")


@main.command()
@click.option("--drafts", "drafts_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              help="Dataset directory that approved instances are appended to.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
def serve(drafts_dir: str, corpus: str, out_dir: str | None, host: str, port: int) -> None:
    """Serve the curation API over the draft store (token via DBQA_BENCH_TOKEN)."""
    import uvicorn

    from .curation import create_app

    _, schemas = load_seed_corpus(corpus)
    token = os.environ.get("DBQA_BENCH_TOKEN", "")
    if not token:
        click.echo("warning: DBQA_BENCH_TOKEN not set; the API is unauthenticated", err=True)
    app = create_app(DraftStore(drafts_dir), schemas, out_dir=out_dir, token=token)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
