"""Command-line surface: corpus generation, index building, the two training
stages, simulation, evaluation, and the chat service."""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import checkpoint as ckpt
from .config import ConfigError, RunConfig, build_session_config, load_catalog_from, load_config
from .corpus import (
    extract_sft_pairs,
    generate_synthetic_corpus,
    load_corpus,
    save_normalized,
)
from .evaluation import eval_from_corpus, eval_from_log, write_eval_outputs
from .features import FEATURE_DIM, LAYOUT_VERSION
from .metrics import aggregate, format_report_table
from .policy import PolicyParams
from .retrieval import HashingEmbedder, build_index, load_profiles, save_index
from .runlog import append_epoch_stats, write_histogram_matrix, write_trajectory_log
from .session import run_session, run_sft, run_training_epoch, strategy_histogram


@click.group()
def main() -> None:
    """Strategy-planning conversational recommender."""


def _load_run_config(path: str) -> RunConfig:
    try:
        return load_config(path)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from exc


def _require(value, field: str):
    if not value:
        raise click.ClickException(f"config field is required here: {field}")
    return value


@main.command("gen-corpus")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--n", "n_dialogues", default=20, show_default=True, type=int)
@click.option("--favored-strategy", default=None, help="Skew annotations toward one strategy.")
@click.option("--favored-weight", default=0.5, show_default=True, type=float)
def gen_corpus(out: str, seed: int, n_dialogues: int, favored_strategy: Optional[str], favored_weight: float) -> None:
    """Generate the bundled synthetic corpus (normalized format) plus manifest."""
    dialogues, manifest = generate_synthetic_corpus(seed, n_dialogues, favored_strategy, favored_weight)
    save_normalized(dialogues, out)
    manifest_path = Path(out).with_suffix(".manifest.json")
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    click.echo(f"wrote {len(dialogues)} dialogues to {out} (manifest: {manifest_path})")


@main.command("build-index")
@click.option("--profiles", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def build_index_cmd(profiles: str, out: str) -> None:
    """Embed entity profiles and write the binary entity index."""
    provider = HashingEmbedder()
    index = build_index(load_profiles(profiles), provider)
    save_index(index, out)
    click.echo(f"indexed {len(index)} entities (dim {index.dim}) into {out}")


@main.command("train-sft")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.option("--seed", default=None, type=int, help="Override session.seed from the config.")
def train_sft(config_path: str, out: Optional[str], seed: Optional[int]) -> None:
    """Supervised warm-up of the planner on annotated strategy labels."""
    config = _load_run_config(config_path)
    corpus_path = _require(config.paths.corpus, "paths.corpus")
    catalog = load_catalog_from(config)
    dialogues = load_corpus(corpus_path, config.paths.corpus_schema)
    pairs, unmapped = extract_sft_pairs(dialogues, catalog)
    if unmapped:
        click.echo(f"warning: {len(unmapped)} annotations did not map into the catalog", err=True)
    if not pairs:
        raise click.ClickException(f"no supervised pairs extractable from paths.corpus={corpus_path}")

    run_dir = Path(config.paths.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    the_seed = seed if seed is not None else config.session.seed
    params = PolicyParams.zeros(FEATURE_DIM)
    params, history = run_sft(
        params,
        [(p.state, p.gold) for p in pairs],
        epochs=config.training.sft_epochs,
        lr=config.training.sft_lr,
        batch_size=config.training.batch_size,
        seed=the_seed,
        turn_cap=config.session.turn_cap,
    )
    log_path = run_dir / "sft_log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for h in history:
            fh.write(json.dumps({"epoch": h.epoch, "mean_loss": h.mean_loss, "accuracy": h.accuracy},
                                sort_keys=True) + "\n")
    out_path = Path(out) if out else run_dir / "sft.ckpt"
    ckpt.save_checkpoint(params, out_path)
    final = history[-1]
    click.echo(f"sft done: {len(pairs)} pairs, final loss {final.mean_loss:.4f}, "
               f"accuracy {final.accuracy:.3f}; checkpoint {out_path}")


@main.command("train-rl")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", "checkpoint_path", default=None, type=click.Path(dir_okay=False),
              help="Warm-start checkpoint; omit with --from-zero to start cold.")
@click.option("--from-zero", is_flag=True, help="Start from zero weights (no warm-up; discouraged).")
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.option("--seed", default=None, type=int)
@click.option("--resume", is_flag=True, help="Continue from the newest epoch checkpoint in run_dir.")
def train_rl(config_path: str, checkpoint_path: Optional[str], from_zero: bool,
             out: Optional[str], seed: Optional[int], resume: bool) -> None:
    """Policy-gradient tuning of the planner with the configured environment."""
    config = _load_run_config(config_path)
    run_dir = Path(config.paths.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    stats_path = run_dir / "rl_epochs.jsonl"

    start_epoch = 0
    if resume:
        existing = sorted(run_dir.glob("rl_epoch_*.ckpt"))
        if existing:
            last = existing[-1]
            start_epoch = int(last.stem.split("_")[-1]) + 1
            params = ckpt.load_checkpoint(last, expect_layout=LAYOUT_VERSION)
            click.echo(f"resuming after {last} (epoch {start_epoch})")
        else:
            raise click.ClickException(f"--resume set but no rl_epoch_*.ckpt found in {run_dir}")
    elif from_zero:
        params = PolicyParams.zeros(FEATURE_DIM)
    elif checkpoint_path:
        params = ckpt.load_checkpoint(checkpoint_path, expect_layout=LAYOUT_VERSION)
    else:
        raise click.ClickException("provide --checkpoint, --from-zero, or --resume")

    the_seed = seed if seed is not None else config.session.seed
    session = build_session_config(config, seed=the_seed)
    if resume and stats_path.exists():
        pass  # keep earlier epochs' lines
    elif stats_path.exists():
        stats_path.unlink()

    all_rollouts = []
    for epoch in range(start_epoch, config.training.rl_epochs):
        params, stats, rollouts = run_training_epoch(
            session,
            params,
            episodes=config.training.episodes_per_epoch,
            alpha=config.training.rl_lr,
            beta=config.training.beta,
            epoch_index=epoch,
            batch_size=config.training.batch_size,
            per_trajectory_updates=config.training.per_trajectory_updates,
            baseline=config.training.baseline,
        )
        append_epoch_stats(stats, stats_path)
        ckpt.save_checkpoint(params, run_dir / f"rl_epoch_{epoch:03d}.ckpt")
        all_rollouts = rollouts
        click.echo(f"epoch {epoch}: return {stats.mean_return:.3f}, accept {stats.acceptance_rate:.2f}, "
                   f"entropy {stats.mean_entropy:.3f}, len {stats.mean_length:.2f}")

    catalog = session.catalog
    if all_rollouts:
        hist = strategy_histogram([r.trajectory for r in all_rollouts], buckets=5)
        write_histogram_matrix(hist, catalog.names(), run_dir / "strategy_histogram.tsv")
    out_path = Path(out) if out else run_dir / "rl.ckpt"
    ckpt.save_checkpoint(params, out_path)
    click.echo(f"rl done: checkpoint {out_path}, stats {stats_path}")


@main.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--episodes", default=10, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.option("--seed", default=None, type=int)
def simulate(config_path: str, checkpoint_path: str, episodes: int, out: Optional[str], seed: Optional[int]) -> None:
    """Roll out sessions with the configured user agent and log trajectories."""
    config = _load_run_config(config_path)
    params = ckpt.load_checkpoint(checkpoint_path, expect_layout=LAYOUT_VERSION)
    the_seed = seed if seed is not None else config.session.seed
    session = build_session_config(config, seed=the_seed)
    rollouts = []
    for i in range(episodes):
        rng = np.random.default_rng([the_seed, i])
        rollouts.append(run_session(session, params, session_id=f"sim-{the_seed}-{i}", rng=rng))
    run_dir = Path(config.paths.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    out_path = Path(out) if out else run_dir / "trajectories.jsonl"
    write_trajectory_log(rollouts, session.catalog, out_path)
    accepted = sum(r.trajectory.outcome.accepted for r in rollouts)
    click.echo(f"simulated {episodes} sessions ({accepted} accepted); log {out_path}")


@main.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", "checkpoint_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Simulate against this corpus (defaults to paths.corpus).")
@click.option("--log", "log_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Replay a trajectory log instead of simulating.")
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.option("--seed", default=None, type=int)
@click.option("--judge-samples", default=1, show_default=True, type=int)
def eval_cmd(config_path: str, checkpoint_path: Optional[str], corpus_path: Optional[str],
             log_path: Optional[str], out: Optional[str], seed: Optional[int], judge_samples: int) -> None:
    """Evaluate a checkpoint on a corpus, or recompute metrics from a log."""
    config = _load_run_config(config_path)
    run_dir = Path(config.paths.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    the_seed = seed if seed is not None else config.session.seed

    if log_path is not None:
        records = eval_from_log(log_path)
    else:
        if checkpoint_path is None:
            raise click.ClickException("--checkpoint is required unless --log is given")
        source = corpus_path or config.paths.corpus
        source = _require(source, "paths.corpus (or --corpus)")
        dialogues = load_corpus(source, config.paths.corpus_schema)
        params = ckpt.load_checkpoint(checkpoint_path, expect_layout=LAYOUT_VERSION)
        session = build_session_config(config, seed=the_seed)
        records, _ = eval_from_corpus(session, params, dialogues, judge_samples=judge_samples)

    report = aggregate(records)
    out_path = Path(out) if out else run_dir / "report.json"
    write_eval_outputs(records, report, out_path.with_suffix(".records.jsonl"), out_path)
    click.echo(format_report_table(report))
    click.echo(f"report {out_path}")


@main.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True, dir_okay=False))
def serve(config_path: str, checkpoint_path: str) -> None:
    """Run the HTTP chat service for live sessions."""
    import uvicorn

    from .service import create_app

    config = _load_run_config(config_path)
    params = ckpt.load_checkpoint(checkpoint_path, expect_layout=LAYOUT_VERSION)
    app = create_app(config, params)
    uvicorn.run(app, host=config.service.host, port=config.service.port)


if __name__ == "__main__":
    sys.exit(main())
