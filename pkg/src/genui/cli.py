"""Command line entry points: serving the gateway and running evaluations."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import arena
from .config import AppConfig


@click.group()
def main() -> None:
    """Generative-UI gateway and evaluation harness."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="YAML config file.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(config_path: str | None, host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .server import create_app

    app = create_app(AppConfig.load(config_path))
    uvicorn.run(app, host=host, port=port)


@main.group(name="eval")
def eval_group() -> None:
    """Pairwise-preference evaluation over verdict record files."""


@eval_group.command()
@click.argument("records", type=click.Path(exists=True))
def ingest(records: str) -> None:
    """Validate a JSON-lines verdict file and summarize it."""
    try:
        datasets = arena.ingest(records)
    except (arena.MalformedRecord, arena.ConflictingDuplicate) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    for study, dataset in sorted(datasets.items()):
        click.echo(f"study {study}: {len(dataset.records)} records, "
                   f"{len(dataset.arms)} arms, "
                   f"{len(dataset.pair_counts())} pairs")


@eval_group.command()
@click.argument("records", type=click.Path(exists=True))
@click.option("-o", "--out", "out_dir", type=click.Path(), default="eval-out",
              show_default=True)
@click.option("--store", "store_path", type=click.Path(exists=True),
              default=None,
              help="Artifact store root; adds per-arm output-error tables.")
def report(records: str, out_dir: str, store_path: str | None) -> None:
    """Solve ratings and win matrices; write the report bundle."""
    datasets = arena.ingest(records)
    errors = None
    if store_path is not None:
        errors = {study: _store_error_stats(Path(store_path))
                  for study in datasets}
    arena.report(datasets, out_dir, errors=errors)
    click.echo(f"report bundle written to {out_dir}")


def _store_error_stats(store_root: Path) -> arena.ErrorStats:
    from .store import ArtifactStore

    store = ArtifactStore(store_root)
    labeled = []
    for page_id in store.list_ids():
        artifact = store.load(page_id)
        labeled.append((artifact.arm or "unlabeled", artifact.output_error))
    return arena.error_stats(labeled)


@eval_group.command()
@click.argument("spec", type=click.Path(exists=True))
@click.option("-o", "--out", "out_path", type=click.Path(),
              default="records.jsonl", show_default=True)
def synth(spec: str, out_path: str) -> None:
    """Generate synthetic verdicts from a pair-fraction spec.

    SPEC is JSON: {"study": ..., "n_per_pair": ..., "seed": optional,
    "pairs": {"armA|armB": [win_frac_a, win_frac_b], ...}}.
    """
    data = json.loads(Path(spec).read_text())
    fractions = {tuple(key.split("|", 1)): tuple(value)
                 for key, value in data["pairs"].items()}
    records = arena.synthesize(data["study"], fractions,
                               int(data["n_per_pair"]), data.get("seed"))
    arena.write_records(records, out_path)
    click.echo(f"{len(records)} records written to {out_path}")


if __name__ == "__main__":
    main()
