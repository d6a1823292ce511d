"""Command line front end; thin wrappers over the pipeline stages."""

from __future__ import annotations

import json
import sys

import click

from .config import load_config
from .errors import RagForgeError
from .pipeline import Pipeline


def _pipeline(config_path: str) -> Pipeline:
    return Pipeline(load_config(config_path))


def _run(stage):
    try:
        stage()
    except RagForgeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


config_option = click.option("--config", "config_path", required=True,
                             type=click.Path(exists=True, dir_okay=False),
                             help="Pipeline config JSON.")


@click.group()
def main():
    """RAG pipeline engine: ingest, synthesize data, index, retrieve, evaluate."""


@main.command()
@config_option
def ingest(config_path):
    """Convert parsed documents into chunks.jsonl."""
    def stage():
        out = _pipeline(config_path).run_ingest()
        click.echo(f"wrote {out}")
    _run(stage)


@main.command()
@config_option
def datagen(config_path):
    """Generate and validate synthetic QA pairs."""
    def stage():
        out = _pipeline(config_path).run_datagen()
        click.echo(f"wrote {out}")
    _run(stage)


@main.command()
@config_option
def index(config_path):
    """Build the BM25 index and embedding store."""
    def stage():
        handle = _pipeline(config_path).run_index()
        click.echo(f"indexed {handle.manifest.chunk_count} chunks")
    _run(stage)


@main.command("choose-strategy")
@config_option
def choose_strategy(config_path):
    """Evaluate retrieval strategies on the validation set and lock the best."""
    def stage():
        report = _pipeline(config_path).run_choose_strategy()
        click.echo(json.dumps(report.to_json(), indent=2))
    _run(stage)


@main.command()
@config_option
@click.option("--question", required=True)
@click.option("--n", "n_contexts", type=int, default=None, help="Contexts to retrieve.")
def answer(config_path, question, n_contexts):
    """Answer one question from the indexed corpus."""
    def stage():
        result = _pipeline(config_path).answer(question, n_contexts=n_contexts)
        click.echo(result.answer)
        for i, (chunk_id, _) in enumerate(result.contexts, 1):
            click.echo(f"  [{i}] {chunk_id}", err=True)
    _run(stage)


@main.command("export-ft")
@config_option
def export_ft(config_path):
    """Export fine-tuning data (embed_ft / batches / llm_ft JSONL)."""
    def stage():
        paths = _pipeline(config_path).run_export_ft()
        for p in paths:
            click.echo(f"wrote {p}")
    _run(stage)


@main.command("eval")
@config_option
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["exact", "judge", "retrieval"]), default="judge")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
def eval_cmd(config_path, dataset, mode, out_dir):
    """Run retrieval and/or answer evaluation over a labeled dataset."""
    def stage():
        pipeline = _pipeline(config_path)
        if mode == "retrieval":
            section = pipeline.run_retrieval_only_eval(dataset)
            click.echo(json.dumps(section, indent=2))
        else:
            report = pipeline.run_eval(dataset, mode, out_dir=out_dir)
            click.echo(f"accuracy: {report['answers']['accuracy']:.3f} "
                       f"(invalid: {report['answers']['invalid_count']})")
    _run(stage)


@main.command()
@config_option
@click.option("--static-dir", type=click.Path(file_okay=False), default=None,
              help="Built web UI to serve at /.")
def serve(config_path, static_dir):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    config = load_config(config_path)
    app = create_app(config, static_dir=static_dir)
    uvicorn.run(app, host=config.server.host, port=config.server.port)


if __name__ == "__main__":
    main()
