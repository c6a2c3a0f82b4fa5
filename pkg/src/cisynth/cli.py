"""Command-line surface: corpus generation, stage training, synthesis,
dataset statistics, and FAD evaluation.

Exit codes: 0 success, 1 runtime failure, 2 usage/validation error.
Set CISYNTH_LOG=debug|info|warning for log verbosity.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

import click

from . import accompaniment as acc
from . import pipeline, evaluation
from .audio import load_wav
from .corpus import compute_stats, generate_synthetic_corpus, load_manifest
from .errors import CisynthError
from .seq2seq import Seq2SeqConfig, TrainSettings
from .svs import SvsConfig

log = logging.getLogger("cisynth")

SEQ_DESK = Seq2SeqConfig(
    encoder_layers=2, decoder_layers=2, attention_heads=4,
    hidden_units=128, ffn_units=256,
)

LM_DESK = acc.AccompLmConfig(layers=2, heads=4, hidden=96, ffn=192)

DEFAULT_STEPS = {
    "lyric2rhythm": 1500,
    "rhythm2melody": 1500,
    "svs": 1500,
    "codec": 20,
    "accomp_lm": 800,
}


def _setup_logging() -> None:
    level = os.environ.get("CISYNTH_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    generated = int.from_bytes(os.urandom(4), "big") & 0x7FFFFFFF
    click.echo(f"seed={generated} (generated; pass --seed {generated} to reproduce)")
    return generated


def _fail(exc: Exception) -> None:
    raise click.ClickException(str(exc))


@click.group()
def main() -> None:
    """SongCi music pipeline."""
    _setup_logging()


@main.command("corpus")
@click.option("--seed", type=int, default=None, help="Generation seed.")
@click.option("--n", "n_entries", type=int, required=True, help="Number of entries.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def cmd_corpus(seed: int | None, n_entries: int, out_dir: Path) -> None:
    """Generate the synthetic corpus and its manifest."""
    if n_entries < 1:
        raise click.UsageError("--n must be at least 1")
    seed = _resolve_seed(seed)
    try:
        manifest_path = generate_synthetic_corpus(seed, n_entries, out_dir)
    except CisynthError as exc:
        _fail(exc)
    result = {"manifest": str(manifest_path), "entries": n_entries, "seed": seed}
    (out_dir / "corpus_result.json").write_text(
        json.dumps(result, indent=2) + "\n", encoding="utf-8"
    )
    click.echo(str(manifest_path))


@main.command("train")
@click.option("--stage", type=click.Choice(pipeline.ALL_STAGES), required=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "ckpt_dir", type=click.Path(path_type=Path), required=True)
@click.option("--steps", type=int, default=None, help="Training steps (stage default otherwise).")
@click.option("--lr", type=float, default=5e-4, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--preset", type=click.Choice(["desk", "paper"]), default="desk", show_default=True)
@click.option("--resume", is_flag=True, help="Continue from an existing checkpoint.")
def cmd_train(stage, corpus_path, ckpt_dir, steps, lr, seed, preset, resume) -> None:
    """Train one pipeline stage; writes a checkpoint and a loss CSV."""
    seed = _resolve_seed(seed)
    steps = steps if steps is not None else DEFAULT_STEPS[stage]
    manifest = load_manifest(corpus_path)
    try:
        if stage in pipeline.SEQ_STAGES:
            cfg = SEQ_DESK if preset == "desk" else Seq2SeqConfig()
            settings = TrainSettings(
                steps=steps, learning_rate=lr, seed=seed, target_exact_match=None
            )
            path = pipeline.train_seq_stage(
                stage, manifest, ckpt_dir, config=cfg, settings=settings, resume=resume
            )
        elif stage == "svs":
            cfg = SvsConfig.desk() if preset == "desk" else SvsConfig()
            path = pipeline.train_svs_stage(
                manifest, ckpt_dir, config=cfg, steps=steps,
                learning_rate=lr, seed=seed, resume=resume,
            )
        elif stage == "codec":
            path = pipeline.train_codec_stage(manifest, ckpt_dir, epochs=steps, seed=seed)
        else:
            lm_cfg = LM_DESK if preset == "desk" else acc.AccompLmConfig()
            path = pipeline.train_accomp_stage(
                manifest, ckpt_dir, lm_config=lm_cfg, steps=steps,
                learning_rate=lr, seed=seed,
            )
    except CisynthError as exc:
        _fail(exc)
    result = {"stage": stage, "checkpoint": str(path), "steps": steps, "seed": seed}
    (Path(ckpt_dir) / f"{stage}_result.json").write_text(
        json.dumps(result, indent=2) + "\n", encoding="utf-8"
    )
    click.echo(str(path))


@main.command("synth")
@click.option("--lyrics", "lyrics_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--ckpt-dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--config-in", type=click.Path(exists=True, path_type=Path), default=None,
              help="Reuse (possibly edited) config.json; skips the symbolic stages.")
@click.option("--mode", type=click.Choice(["shallow", "full"]), default="shallow", show_default=True)
@click.option("--k", type=int, default=None, help="Shallow-diffusion rounds (default from config).")
@click.option("--tempo", type=float, default=120.0, show_default=True,
              help="Tempo for predicted melodies (configs carry their own).")
def cmd_synth(lyrics_path, ckpt_dir, out_dir, seed, config_in, mode, k, tempo) -> None:
    """Run lyrics through the full pipeline to a final mix."""
    seed = _resolve_seed(seed)
    text = Path(lyrics_path).read_text(encoding="utf-8").strip()
    if not text:
        raise click.UsageError(f"lyrics file {lyrics_path} is empty")
    try:
        result = pipeline.synthesize(
            text, ckpt_dir, out_dir, seed, config_in=config_in, mode=mode, k=k,
            tempo_bpm=tempo,
        )
    except CisynthError as exc:
        _fail(exc)
    for name, path in result.files.items():
        click.echo(f"{name}: {path}")


@main.command("stats")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
def cmd_stats(corpus_path, out_path) -> None:
    """Dataset statistics in the published comparison-table shape."""
    manifest = load_manifest(corpus_path)
    try:
        stats = compute_stats(manifest)
    except CisynthError as exc:
        _fail(exc)
    click.echo(stats.to_table())
    out_path = out_path or (Path(corpus_path).parent / "stats.json")
    Path(out_path).write_text(
        json.dumps(stats.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    click.echo(f"report: {out_path}")


@main.command("eval")
@click.option("--reference", "ref_dir", type=click.Path(path_type=Path), required=True)
@click.option("--candidate", "cand_dir", type=click.Path(path_type=Path), required=True)
@click.option("--embedder", default="melstats", show_default=True,
              help="'melstats' or 'external:PATH' with precomputed vectors.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
def cmd_eval(ref_dir, cand_dir, embedder, out_path) -> None:
    """Fréchet audio distance between two directories of WAV files."""
    for d in (ref_dir, cand_dir):
        if not Path(d).is_dir():
            raise click.UsageError(f"not a directory: {d}")
    ref_clips = _load_clips(ref_dir)
    cand_clips = _load_clips(cand_dir)
    if not ref_clips or not cand_clips:
        raise click.UsageError("both directories must contain WAV files")
    external_path = None
    name = embedder
    if embedder.startswith("external:"):
        name, external_path = "external", embedder.split(":", 1)[1]
        if not Path(external_path).exists():
            raise click.UsageError(f"embedding file not found: {external_path}")
    try:
        ref = evaluation.embed(ref_clips, name, external_path)
        cand = evaluation.embed(cand_clips, name, external_path)
        fad = evaluation.frechet_from_sets(ref, cand)
    except (CisynthError, ValueError, KeyError) as exc:
        _fail(exc)
    report = {
        "fad": fad,
        "n_reference": len(ref_clips),
        "n_candidate": len(cand_clips),
        "dim": ref.vectors.shape[1],
        "embedder": ref.embedder_id,
    }
    click.echo(
        f"FAD={fad:.6g} n_ref={len(ref_clips)} n_cand={len(cand_clips)} "
        f"d={ref.vectors.shape[1]} embedder={ref.embedder_id}"
    )
    out_path = out_path or Path("fad_report.json")
    Path(out_path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    click.echo(f"report: {out_path}")


def _load_clips(directory) -> list[tuple[str, "object"]]:
    clips = []
    for path in sorted(Path(directory).glob("*.wav")):
        wav, _ = load_wav(path)
        clips.append((path.name, wav))
    return clips


if __name__ == "__main__":
    main()
