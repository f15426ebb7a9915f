"""Command line entry points: serve the API, generate and replay streams."""

from __future__ import annotations

import csv
import json
import os

import click

from .config import PortalConfig
from .evalkit import (
    StreamConfig,
    generate_stream,
    metrics,
    read_trials,
    replay_baseline,
    replay_engine,
    run_ablation,
    write_stream,
    write_trials,
)
from .evalkit.replay import VARIANTS, build_engine
from .portal import PortalEngine


@click.group()
def main() -> None:
    """Personal text-intent routing engine."""


def _stream_options(fn):
    for opt in reversed(
        [
            click.option("--seed", default=42, show_default=True),
            click.option("--users", default=4, show_default=True),
            click.option("--days", default=7, show_default=True),
            click.option("--functions", default=20, show_default=True),
            click.option("--queries", default=30, show_default=True, help="queries per user per day"),
        ]
    ):
        fn = opt(fn)
    return fn


def _make_stream(seed, users, days, functions, queries):
    return generate_stream(
        StreamConfig(
            seed=seed,
            n_users=users,
            n_days=days,
            functions_per_user=functions,
            queries_per_day=queries,
        )
    )


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def serve(host: str, port: int, config_path: str | None) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    config = PortalConfig.from_file(config_path) if config_path else PortalConfig()
    uvicorn.run(create_app(config=config), host=host, port=port, log_level="info")


@main.command()
@_stream_options
@click.option("--out", default="stream.jsonl", show_default=True)
def gen(seed, users, days, functions, queries, out) -> None:
    """Generate a synthetic usage stream and write it as JSONL."""
    stream = _make_stream(seed, users, days, functions, queries)
    write_stream(stream, out)
    click.echo(f"wrote {len(stream.trials)} trials to {out}")


@main.command()
@_stream_options
@click.option("--accuracy", default=0.65, show_default=True, help="stub LLM top-1 accuracy")
@click.option("--stub-seed", default=1, show_default=True)
@click.option("--baseline", type=click.Choice(["mfu", "mru", "bayes"]), default=None,
              help="replay a baseline ranker instead of the engine")
@click.option("--out-dir", default="runs", show_default=True)
def replay(seed, users, days, functions, queries, accuracy, stub_seed, baseline, out_dir) -> None:
    """Replay a stream through the engine (or a baseline) and report."""
    stream = _make_stream(seed, users, days, functions, queries)
    if baseline:
        report, trials = replay_baseline(stream, baseline)
        name = baseline
    else:
        engine = build_engine(stream, "full", stub_accuracy=accuracy, stub_seed=stub_seed)
        report, trials = replay_engine(stream, engine)
        name = "full"
    os.makedirs(out_dir, exist_ok=True)
    write_trials(trials, os.path.join(out_dir, f"{name}-trials.jsonl"))
    with open(os.path.join(out_dir, f"{name}-report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    _write_day_csv(report, os.path.join(out_dir, f"{name}-days.csv"))
    click.echo(
        f"{name}: hit1={report.hit1:.4f} hit5={report.hit5:.4f} "
        f"mrr={report.mrr:.4f} local={report.local_fraction:.2f} "
        f"latency={report.mean_latency_ms:.1f}ms over {report.trials} trials"
    )


@main.command()
@_stream_options
@click.option("--accuracy", default=0.65, show_default=True)
@click.option("--stub-seed", default=1, show_default=True)
@click.option("--variant", "variants", multiple=True,
              type=click.Choice(list(VARIANTS)), help="repeatable; default all")
@click.option("--out-dir", default="runs", show_default=True)
def ablate(seed, users, days, functions, queries, accuracy, stub_seed, variants, out_dir) -> None:
    """Run the ablation variants on one stream and write a combined report."""
    stream = _make_stream(seed, users, days, functions, queries)
    reports = run_ablation(
        stream, list(variants) or None, stub_accuracy=accuracy, stub_seed=stub_seed
    )
    os.makedirs(out_dir, exist_ok=True)
    combined = {name: r.to_dict() for name, r in reports.items()}
    with open(os.path.join(out_dir, "ablation.json"), "w", encoding="utf-8") as fh:
        json.dump(combined, fh, indent=2)
    for name, r in reports.items():
        click.echo(
            f"{name:10s} hit1={r.hit1:.4f} hit5={r.hit5:.4f} "
            f"mrr={r.mrr:.4f} local={r.local_fraction:.2f}"
        )


@main.command()
@click.argument("trials_path", type=click.Path(exists=True))
def report(trials_path: str) -> None:
    """Recompute metrics from a trial log."""
    r = metrics(read_trials(trials_path))
    click.echo(json.dumps(r.to_dict(), indent=2))


@main.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--user", "user_id", required=True)
def retrain(data_dir: str, user_id: str) -> None:
    """Load a user snapshot, retrain its parameters, save it back."""
    config = PortalConfig(data_dir=data_dir)
    engine = PortalEngine(config=config)
    engine.load_user(user_id)
    r = engine.retrain_user(user_id)
    engine.save_all()
    click.echo(
        f"retrained {user_id}: epochs={r.epochs} "
        f"loss {r.initial_loss:.4f} -> {r.final_loss:.4f}"
    )


def _write_day_csv(report, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["day", "trials", "hit1", "hit5", "mrr", "local_fraction", "mean_latency_ms"]
        )
        for d in report.days:
            writer.writerow(
                [d.day, d.trials, f"{d.hit1:.6f}", f"{d.hit5:.6f}",
                 f"{d.mrr:.6f}", f"{d.local_fraction:.6f}", f"{d.mean_latency_ms:.3f}"]
            )


if __name__ == "__main__":
    main()
