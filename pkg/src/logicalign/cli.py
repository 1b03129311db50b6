"""Command-line entry points for the corpus, forge, training and service."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .config import ConfigError, load_config
from .corpus import CorpusConfig, CorpusError, build_corpus, read_corpus, write_corpus
from .evaluation import EncoderModel, EvalError, evaluate, write_report
from .forge import ForgeError, NegativeForge
from .review import ReviewError, ReviewStore
from .service import ReviewService
from .taxonomy import category_names, detect_categories
from .training import (
    PRESETS,
    TrainConfig,
    TrainingError,
    load_checkpoint,
    save_checkpoint,
    train,
    write_step_log,
)

_HANDLED = (CorpusError, ForgeError, ReviewError, TrainingError, EvalError,
            ConfigError, OSError)


def _fail(message: str):
    """Machine-readable error line on stderr, exit status 1."""
    click.echo(json.dumps({"error": message}), err=True)
    sys.exit(1)


def _run(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except _HANDLED as e:
        _fail(str(e))


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--scenes", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--image-dim", type=int, default=128, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def synth(scenes, seed, image_dim, out):
    """Generate a synthetic scene corpus with hard negatives."""
    cfg = CorpusConfig(n_scenes=scenes, seed=seed, image_dim=image_dim)
    records, manifest = _run(build_corpus, cfg)
    _run(write_corpus, out, records, manifest)
    click.echo(json.dumps({"records": len(records), "out": str(out)}))


@main.command()
@click.option("--text", multiple=True, help="Caption to annotate (repeatable).")
@click.option("--file", "file_", type=click.Path(exists=False),
              help="File with one caption per line.")
def parse(text, file_):
    """Annotate captions with their detected logical categories."""
    captions = list(text)
    if file_:
        try:
            content = Path(file_).read_text("utf-8")
        except OSError as e:
            _fail(str(e))
        captions.extend(l for l in content.splitlines() if l.strip())
    if not captions:
        raise click.UsageError("supply --text or --file")
    for cap in captions:
        cats = _run(detect_categories, cap)
        click.echo(json.dumps(
            {"text": cap, "categories": category_names(cats)},
            ensure_ascii=False))


@main.command()
@click.option("--corpus", type=click.Path(), required=True)
@click.option("--store", type=click.Path(), required=True,
              help="Review store directory proposals are appended to.")
@click.option("--config", "config_", type=click.Path(),
              help="INI file with backend profiles; omitted means rule-based only.")
@click.option("--limit", type=int, default=0,
              help="Stop after this many records (0 = all).")
def forge(corpus, store, config_, limit):
    """Generate hard-negative proposals for every corpus record."""
    app = _run(load_config, config_)
    records, _ = _run(read_corpus, corpus)
    if limit:
        records = records[:limit]
    machine = NegativeForge(app.backends, app.retry,
                            fallback_seed=app.fallback_seed)
    rs = _run(ReviewStore, store)
    counts = {"pending": 0, "failed": 0}
    try:
        for rec in records:
            proposal = _run(machine.generate_negatives, rec)
            _run(rs.add_proposal, proposal)
            counts[proposal.status] += 1
    finally:
        rs.close()
    click.echo(json.dumps({"proposals": counts, "store": str(store)}))


@main.command(name="train")
@click.option("--corpus", type=click.Path(), required=True)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default="full",
              show_default=True)
@click.option("--epochs", type=int, default=16, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--lr", type=float, default=3e-3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True,
              help="Checkpoint path (.npz).")
@click.option("--log", "log_", type=click.Path(), help="Step log path (.jsonl).")
def train_cmd(corpus, preset, epochs, batch_size, lr, seed, out, log_):
    """Train the dual encoder on a corpus file."""
    records, _ = _run(read_corpus, corpus)
    cfg = TrainConfig.preset(preset, epochs=epochs, batch_size=batch_size,
                             learning_rate=lr, seed=seed)
    result = _run(train, cfg, records)
    _run(save_checkpoint, out, result)
    if log_:
        _run(write_step_log, log_, result.log)
    last = result.log[-1] if result.log else {}
    click.echo(json.dumps({"checkpoint": str(out), "steps": len(result.log),
                           "l_total": last.get("l_total")}))


@main.command(name="eval")
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--corpus", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), help="Report path (.jsonl).")
@click.option("--shuffle-seed", type=int, default=0, show_default=True)
def eval_cmd(checkpoint, corpus, out, shuffle_seed):
    """Evaluate a checkpoint on a corpus file."""
    if not Path(checkpoint).exists():
        _fail(f"checkpoint not found: {checkpoint}")
    result = _run(load_checkpoint, checkpoint)
    records, _ = _run(read_corpus, corpus)
    model = EncoderModel.from_result(result)
    report = _run(evaluate, model, records, shuffle_seed)
    if out:
        _run(write_report, out, report)
    click.echo(report.to_table())


@main.command()
@click.option("--store", type=click.Path(), required=True)
@click.option("--config", "config_", type=click.Path())
@click.option("--host", default=None, help="Override config host.")
@click.option("--port", type=int, default=None, help="Override config port.")
def serve(store, config_, host, port):
    """Run the review service over a proposal store."""
    app = _run(load_config, config_)
    rs = _run(ReviewStore, store)
    svc = _run(ReviewService, rs,
               host=host if host is not None else app.host,
               port=port if port is not None else app.port,
               token=app.token, finalize_path=app.finalize_path)
    click.echo(json.dumps({"serving": svc.url, "store": str(store)}))
    try:
        svc.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        svc.stop()
        rs.close()


@main.command()
@click.option("--report", "report_", type=click.Path(), required=True)
def report(report_):
    """Render a stored evaluation report."""
    path = Path(report_)
    if not path.exists():
        _fail(f"report not found: {report_}")
    try:
        lines = [json.loads(l) for l in path.read_text("utf-8").splitlines()
                 if l.strip()]
    except ValueError as e:
        _fail(f"invalid report: {e}")
    for line in lines:
        section = line.pop("section", "?")
        name = line.pop("name", "")
        flat = " ".join(f"{k}={v}" for k, v in line.items()
                        if not isinstance(v, (list, dict)))
        click.echo(f"{section:12s} {name:14s} {flat}")


if __name__ == "__main__":
    main()
