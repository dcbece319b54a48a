"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 I/O or file-format error,
3 numeric failure.
"""
from __future__ import annotations

import sys

import click

from .errors import CheckpointError, ConfigError, CorpusError, NumericError, SelectorError, ShapeError
from .harness import RatioInput, robustness_ratio, sweep as run_sweep
from .hpd import HpdPlacement, apply_hpd
from .model_io import ModelConfig, generate_toy, load_checkpoint, load_corpus, save_checkpoint
from .perturb import LAYER_CLASSES, NoiseSpec, TargetSelector


@click.group()
def cli():
    """SSM noise-robustness toolkit."""


@cli.command()
@click.argument("ckpt_path", type=click.Path(dir_okay=False))
def inspect(ckpt_path):
    """Print config, metadata, and tensor inventory of a checkpoint."""
    ckpt = load_checkpoint(ckpt_path)
    click.echo(f"config: {ckpt.config}")
    for key, value in sorted(ckpt.metadata.items()):
        click.echo(f"metadata: {key} = {value}")
    total = 0
    for name, arr in ckpt.tensors.items():
        click.echo(f"tensor: {name}  shape={tuple(arr.shape)}")
        total += arr.size
    click.echo(f"total parameters: {total}")


@cli.command("gen-toy")
@click.option("--d-model", type=int, default=64)
@click.option("--n-layers", type=int, default=2)
@click.option("--d-state", type=int, default=16)
@click.option("--d-conv", type=int, default=4)
@click.option("--expand", type=int, default=2)
@click.option("--dt-rank", type=int, default=4)
@click.option("--vocab", type=int, default=1024)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen_toy(d_model, n_layers, d_state, d_conv, expand, dt_rank, vocab, seed, out):
    """Generate a deterministic toy checkpoint."""
    config = ModelConfig(
        d_model=d_model, n_layers=n_layers, d_state=d_state, d_conv=d_conv,
        expand=expand, dt_rank=dt_rank, vocab_size=vocab,
    )
    save_checkpoint(generate_toy(config, seed), out)
    click.echo(f"wrote {out}")


@cli.command("hpd-apply")
@click.argument("ckpt_path", type=click.Path(dir_okay=False))
@click.option("--target", default="lm_head", show_default=True,
              help="Tensor to decompose: 'lm_head', 'out_proj:<block>', or a full tensor name.")
@click.option("--rank", default="full", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def hpd_apply(ckpt_path, target, rank, out):
    """Rewrite a checkpoint with the hybrid two-stage projection."""
    ckpt = load_checkpoint(ckpt_path)
    placement = HpdPlacement(
        target=_resolve_target(target),
        rank=None if rank == "full" else int(rank),
    )
    save_checkpoint(apply_hpd(ckpt, placement), out)
    click.echo(f"wrote {out}")


def _resolve_target(target: str) -> str:
    if target == "lm_head":
        return "lm_head.weight"
    if target.startswith("out_proj:"):
        return f"layers.{int(target.split(':')[1])}.out_proj.weight"
    return target


def _parse_selector(classes: str, blocks: str) -> TargetSelector:
    layer_classes = frozenset(LAYER_CLASSES) if classes == "all" else frozenset(classes.split(","))
    block_indices = None if blocks == "all" else frozenset(int(b) for b in blocks.split(","))
    return TargetSelector(layer_classes=layer_classes, block_indices=block_indices)


_noise_options = [
    click.option("--dist", type=click.Choice(["gaussian", "lognormal"]), default="gaussian"),
    click.option("--mode", type=click.Choice(["additive-range", "additive-std", "multiplicative"]),
                 default=None),
    click.option("--classes", default="all", help="Comma list of layer classes, or 'all'."),
    click.option("--blocks", default="all", help="Comma list of block indices, or 'all'."),
    click.option("--trials", type=int, default=1),
    click.option("--seed", type=int, default=0),
    click.option("--hpd", is_flag=True, help="Apply hybrid decomposition before evaluating."),
    click.option("--window", type=int, default=512),
    click.option("--stride", type=int, default=512),
    click.option("--workers", type=int, default=1, help="Parallel trial workers; results are worker-count independent."),
    click.option("--json", "json_path", type=click.Path(dir_okay=False)),
    click.option("--csv", "csv_path", type=click.Path(dir_okay=False)),
]


def _with_noise_options(fn):
    for option in reversed(_noise_options):
        fn = option(fn)
    return fn


def _sweep_report(ckpt_path, corpus_path, sigmas, dist, mode, classes, blocks,
                  trials, seed, hpd, window, stride, workers):
    ckpt = load_checkpoint(ckpt_path)
    corpus = load_corpus(corpus_path)
    template = NoiseSpec(sigma=0.0, distribution=dist, mode=mode, seed=seed)
    selector = _parse_selector(classes, blocks)
    return run_sweep(
        ckpt, corpus, sigmas, [selector], template,
        trials=trials, hpd=hpd, window=window, stride=stride,
        model_id=str(ckpt_path), workers=workers,
    )


def _emit_report(report, json_path, csv_path):
    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write(report.to_csv())
        click.echo(f"wrote {csv_path}")
    if json_path:
        with open(json_path, "w") as fh:
            fh.write(report.to_json())
        click.echo(f"wrote {json_path}")


@cli.command("eval")
@click.argument("ckpt_path", type=click.Path(dir_okay=False))
@click.argument("corpus_path", type=click.Path(dir_okay=False))
@click.option("--sigma", type=float, default=0.0)
@_with_noise_options
def eval_cmd(ckpt_path, corpus_path, sigma, dist, mode, classes, blocks, trials,
             seed, hpd, window, stride, workers, json_path, csv_path):
    """Evaluate perplexity under a single noise level."""
    report = _sweep_report(ckpt_path, corpus_path, [sigma], dist, mode, classes,
                           blocks, trials, seed, hpd, window, stride, workers)
    for agg in report.aggregates():
        click.echo(
            f"sigma={agg.sigma:g} ppl={agg.ppl_mean:.6f} +/- {agg.ppl_std:.6f} "
            f"kl={agg.kl_mean:.6g} trials={agg.trials}"
        )
    _emit_report(report, json_path, csv_path)


@cli.command("sweep")
@click.argument("ckpt_path", type=click.Path(dir_okay=False))
@click.argument("corpus_path", type=click.Path(dir_okay=False))
@click.option("--sigmas", default="0,0.01,0.03,0.05", show_default=True,
              help="Comma list of noise standard deviations.")
@_with_noise_options
def sweep_cmd(ckpt_path, corpus_path, sigmas, dist, mode, classes, blocks, trials,
              seed, hpd, window, stride, workers, json_path, csv_path):
    """Sweep perplexity/KL over a noise grid."""
    sigma_list = [float(s) for s in sigmas.split(",")]
    report = _sweep_report(ckpt_path, corpus_path, sigma_list, dist, mode, classes,
                           blocks, trials, seed, hpd, window, stride, workers)
    for agg in report.aggregates():
        click.echo(
            f"sigma={agg.sigma:g} ppl={agg.ppl_mean:.6f} +/- {agg.ppl_std:.6f} "
            f"kl={agg.kl_mean:.6g} trials={agg.trials}"
        )
    _emit_report(report, json_path, csv_path)


@cli.command()
@click.option("--clean", type=float, required=True)
@click.option("--noisy", type=float, required=True)
@click.option("--ours", type=float, required=True)
def ratio(clean, noisy, ours):
    """Robustness ratio: normalized recovery of noise-induced degradation."""
    value = robustness_ratio(RatioInput(
        ppl_clean_original=clean, ppl_noise_original=noisy, ppl_noise_ours=ours,
    ))
    click.echo(f"{value:.4f}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return 0 if exc.exit_code == 0 else 1
    except (click.UsageError, ConfigError, SelectorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CheckpointError, CorpusError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
