"""`p2p` command line: dataset synthesis, shapes, alignment, training, editing,
evaluation, and the HTTP service."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click
import numpy as np

from .align import align_pair, displacement_stats
from .cloud import read_pc6, write_pc6
from .dataset import generate_dataset, read_dataset, write_dataset
from .denoiser import DenoiserConfig
from .diffusion import SamplerConfig, build_schedule
from .diversify import DiversifierClient
from .mesh import write_obj
from .pipeline import (
    SessionStore,
    baseline_edit_once,
    edit_once,
    evaluate,
    load_model,
)
from .shapes import generate_mesh, param_registry, sample_random_params
from .text_encoder import HashedTextEncoder, PrecomputedEncoder
from .training import TrainConfig, load_checkpoint, prepare_training_data, train


def _resolve_ckpt(path: str) -> Path:
    p = Path(path)
    return p / "ckpt.npz" if p.is_dir() else p


def _load(path: str, embeddings: str | None = None):
    encoder = None
    if embeddings:
        encoder = PrecomputedEncoder(embeddings)
    return load_model(_resolve_ckpt(path), encoder=encoder)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Instruction-guided colored point cloud editing."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


# -- dataset ----------------------------------------------------------------

@main.group()
def dataset():
    """Edit-triplet dataset synthesis."""


@dataset.command("gen")
@click.option("--color-shapes", type=int, default=3, show_default=True,
              help="Number of part-annotated shapes for color edits.")
@click.option("--geom-bases", type=int, default=1, show_default=True,
              help="Base shapes per category for geometry edits.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--points", type=int, default=1024, show_default=True,
              help="Points sampled per cloud.")
@click.option("--diversify", type=click.Choice(["llm", "offline", "none"]),
              default="offline", show_default=True)
@click.option("-o", "--out", required=True, type=click.Path())
def dataset_gen(color_shapes, geom_bases, seed, points, diversify, out):
    """Generate color + geometry edit triplets into OUT/."""
    client = DiversifierClient() if diversify == "llm" else None
    triplets, config, warnings = generate_dataset(
        color_shapes=color_shapes, geom_bases=geom_bases, seed=seed,
        n_points=points, diversify=diversify, client=client)
    manifest = write_dataset(triplets, out, seed=seed, config=config, warnings=warnings)
    click.echo(f"wrote {len(triplets)} triplets to {out} (counts: {manifest.counts})")
    for w in warnings:
        click.echo(f"warning: {w}", err=True)


# -- shapes -----------------------------------------------------------------

@main.group()
def shape():
    """Parametric shape programs."""


@shape.command("gen")
@click.option("--category", required=True, type=click.Choice(["chair", "vase", "table"]))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--out", required=True, type=click.Path())
def shape_gen(category, seed, out):
    """Sample random parameters and write an OBJ plus component-tag sidecar."""
    params = sample_random_params(category, seed=seed)
    mesh = generate_mesh(params)
    sidecar = str(Path(out).with_suffix(".parts"))
    write_obj(mesh, out, sidecar=sidecar)
    click.echo(f"wrote {out} (+ {sidecar}); params: "
               + json.dumps(params.values, sort_keys=True, default=float))


@shape.command("params")
@click.option("--category", required=True, type=click.Choice(["chair", "vase", "table"]))
def shape_params(category):
    """Dump the editable-parameter registry as JSON."""
    click.echo(json.dumps([s.to_dict() for s in param_registry(category)], indent=2))


# -- alignment ---------------------------------------------------------------

@main.command("align")
@click.argument("src", type=click.Path(exists=True))
@click.argument("tgt", type=click.Path(exists=True))
@click.option("-o", "--out", required=True, type=click.Path())
@click.option("--report", type=click.Path(), default=None,
              help="Write pre/post displacement statistics as JSON.")
def align_cmd(src, tgt, out, report):
    """Align TGT onto SRC (ICP + exact assignment) and write the permuted cloud."""
    source = read_pc6(src)
    target = read_pc6(tgt)
    aligned = align_pair(source, target)
    write_pc6(aligned, out)
    stats = {"identity": displacement_stats(source, target),
             "aligned": displacement_stats(source, aligned)}
    click.echo(f"mean displacement {stats['identity']['mean']:.5f} -> "
               f"{stats['aligned']['mean']:.5f}")
    if report:
        Path(report).write_text(json.dumps(stats, indent=2, sort_keys=True))


# -- training ----------------------------------------------------------------

@main.command("train")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--steps", type=int, default=2000, show_default=True)
@click.option("--batch", type=int, default=16, show_default=True)
@click.option("--d-model", type=int, default=64, show_default=True)
@click.option("--layers", type=int, default=4, show_default=True)
@click.option("--heads", type=int, default=4, show_default=True)
@click.option("--d-text", type=int, default=64, show_default=True)
@click.option("--points", type=int, default=256, show_default=True)
@click.option("--timesteps", type=int, default=64, show_default=True)
@click.option("--beta-start", type=float, default=1e-4, show_default=True)
@click.option("--beta-end", type=float, default=0.02, show_default=True)
@click.option("--lr", type=float, default=1e-4, show_default=True,
              help="Learning rate (reference fine-tuning used 1e-5).")
@click.option("--cond-dropout", type=float, default=0.1, show_default=True)
@click.option("--grad-clip", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--checkpoint-every", type=int, default=0, show_default=True)
@click.option("--baseline", is_flag=True,
              help="Train the text-only baseline (caption rows, zeroed source channels).")
@click.option("--resume", type=click.Path(exists=True), default=None)
@click.option("-o", "--out", required=True, type=click.Path())
def train_cmd(data, steps, batch, d_model, layers, heads, d_text, points, timesteps,
              beta_start, beta_end, lr, cond_dropout, grad_clip, seed,
              checkpoint_every, baseline, resume, out):
    """Train a denoiser on a generated dataset directory."""
    triplets, _ = read_dataset(data)
    config = DenoiserConfig(d_model=d_model, n_layers=layers, n_heads=heads,
                            d_text=d_text, n_points=points, timesteps=timesteps)
    encoder = HashedTextEncoder(d_text)
    prepared = prepare_training_data(triplets, config, encoder, baseline=baseline)
    schedule = build_schedule(timesteps, beta_start, beta_end)
    tcfg = TrainConfig(steps=steps, batch_size=batch, lr=lr, cond_dropout=cond_dropout,
                       grad_clip=grad_clip, seed=seed, checkpoint_every=checkpoint_every)
    resume_ckpt = load_checkpoint(_resolve_ckpt(resume)) if resume else None
    ckpt, curve = train(prepared, config, tcfg, schedule=schedule,
                        resume=resume_ckpt, out_dir=out)
    tail = np.mean([l for _, l in curve[-50:]])
    click.echo(f"finished at step {ckpt.step}; mean loss over last 50 steps: {tail:.5f}")
    click.echo(f"checkpoint: {Path(out) / 'ckpt.npz'}")


# -- editing -----------------------------------------------------------------

@main.command("edit")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--instruction", required=True)
@click.option("--sampler", type=click.Choice(["ddim", "ddpm"]), default="ddim",
              show_default=True)
@click.option("--steps", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--guidance", type=float, default=1.0, show_default=True)
@click.option("--embeddings", type=click.Path(exists=True), default=None,
              help="Precomputed instruction-embedding file.")
@click.option("-o", "--out", required=True, type=click.Path())
def edit_cmd(model_path, input_path, instruction, sampler, steps, seed, guidance,
             embeddings, out):
    """Apply one instruction to a PC6 cloud."""
    lm = _load(model_path, embeddings)
    cloud = read_pc6(input_path)
    cfg = SamplerConfig(kind=sampler, steps=steps, seed=seed, guidance_scale=guidance)
    result = edit_once(lm, cloud, instruction, cfg)
    write_pc6(result, out)
    click.echo(f"wrote {out} ({result.n} points)")


@main.command("baseline")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--src-prompt", required=True)
@click.option("--tgt-prompt", required=True)
@click.option("--strength", type=float, default=0.75, show_default=True)
@click.option("--steps", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--embeddings", type=click.Path(exists=True), default=None)
@click.option("-o", "--out", required=True, type=click.Path())
def baseline_cmd(model_path, input_path, src_prompt, tgt_prompt, strength, steps,
                 seed, embeddings, out):
    """Inversion-based editing baseline (text-only conditioning)."""
    lm = _load(model_path, embeddings)
    cloud = read_pc6(input_path)
    result = baseline_edit_once(lm, cloud, src_prompt, tgt_prompt,
                                strength=strength, steps=steps, seed=seed)
    write_pc6(result, out)
    click.echo(f"wrote {out} ({result.n} points)")


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--baseline-model", required=True, type=click.Path(exists=True))
@click.option("--testset", required=True, type=click.Path(exists=True))
@click.option("--steps", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--limit", type=int, default=0, help="Evaluate only the first N triplets.")
@click.option("-o", "--out", required=True, type=click.Path())
def eval_cmd(model_path, baseline_model, testset, steps, seed, limit, out):
    """Evaluate ours vs the inversion baseline at strengths 1.0 / 0.75 / 0.5."""
    lm = _load(model_path)
    blm = _load(baseline_model)
    triplets, _ = read_dataset(testset)
    if limit:
        triplets = triplets[:limit]
    skipped: list = []
    report = evaluate(lm, blm, triplets, steps=steps, seed=seed, skipped=skipped)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_dir / "report.csv")
    report.to_json(out_dir / "report.json")
    for key in sorted(report.aggregates):
        click.echo(f"{key}: {report.aggregates[key]:.5f}")
    for msg in skipped:
        click.echo(f"warning: {msg}", err=True)
    click.echo(f"report written to {out_dir}")


# -- service -----------------------------------------------------------------

@main.command("serve")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--transcripts", type=click.Path(), default=None,
              help="Directory for append-only session transcripts.")
@click.option("--preview-points", type=int, default=1024, show_default=True)
@click.option("--studio", type=click.Path(), default=None,
              help="Static directory with the browser studio build.")
@click.option("--embeddings", type=click.Path(exists=True), default=None)
def serve_cmd(ckpt, host, port, transcripts, preview_points, studio, embeddings):
    """Run the HTTP editing service."""
    import uvicorn

    from .service import create_app

    lm = _load(ckpt, embeddings)
    store = SessionStore(transcript_dir=transcripts)
    app = create_app(lm, store=store, preview_points=preview_points, studio_dir=studio)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
