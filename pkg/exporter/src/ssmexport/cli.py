"""Command-line interface.

Exit codes: 0 success, 1 usage or mapping error, 2 I/O or format error.
"""
from __future__ import annotations

import sys

import click

from .errors import ExportError, SourceError, TokenRangeError
from .export import export_checkpoint, export_corpus
from .manifest import ExportManifest


@click.group()
def cli():
    """Convert external Mamba checkpoints and text to SSMW/TOKS files."""


@cli.command("export-model")
@click.option("--source", required=True, type=click.Path(), help="Source checkpoint (.pt/.safetensors/.npz/.ssmw).")
@click.option("--out", required=True, type=click.Path(), help="Output .ssmw path.")
@click.option("--tie-embeddings", is_flag=True, help="Duplicate the embedding table as lm_head.")
def export_model_cmd(source, out, tie_embeddings):
    manifest = ExportManifest(tie_embeddings=tie_embeddings)
    summary = export_checkpoint(source, manifest, out)
    click.echo(
        f"wrote {summary.out_path}: {summary.n_tensors} tensors, "
        f"{summary.n_params} parameters, config {summary.config}"
    )


@cli.command("export-corpus")
@click.option("--text", required=True, type=click.Path(), help="Input text (or pre-tokenized id) file.")
@click.option("--tokenizer", default="byte", show_default=True, help="Tokenizer id: byte, whitespace, or ids.")
@click.option("--out", required=True, type=click.Path(), help="Output .toks path.")
def export_corpus_cmd(text, tokenizer, out):
    summary = export_corpus(text, tokenizer, out)
    click.echo(f"wrote {summary.out_path}: {summary.n_tokens} tokens, vocab {summary.vocab_size}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except (SourceError, TokenRangeError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except ExportError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
