import json
from pathlib import Path

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from cisynth import accompaniment as acc
from cisynth import pipeline, seq2seq as s2s
from cisynth.audio import DEFAULT_AUDIO, save_wav, sine_render
from cisynth.cli import main
from cisynth.corpus import generate_synthetic_corpus, load_manifest
from cisynth.svs import SvsConfig

runner = CliRunner()

TINY_SVS = SvsConfig(
    hidden=32, encoder_layers=1, encoder_heads=2, encoder_ffn_units=48,
    duration_layers=2, duration_channels=24, aux_layers=1, aux_channels=24,
    denoiser_layers=3, denoiser_channels=16, denoiser_dilation_cycle=2,
    f0_layers=2, f0_channels=12, f0_dilation_cycle=2, dropout=0.0,
    diffusion_steps=12, shallow_k=6,
)
TINY_SEQ = s2s.Seq2SeqConfig(
    encoder_layers=1, decoder_layers=1, attention_heads=2,
    hidden_units=32, ffn_units=48, dropout=0.0,
)
TINY_LM = acc.AccompLmConfig(layers=1, heads=2, hidden=32, ffn=48, dropout=0.0)


@pytest.fixture(scope="module")
def mini_rig(tmp_path_factory):
    """Tiny corpus + briefly trained checkpoints for every stage."""
    root = tmp_path_factory.mktemp("mini_rig")
    corpus_dir = root / "corpus"
    ckpt_dir = root / "ckpts"
    manifest_path = generate_synthetic_corpus(
        31, 3, corpus_dir, phrase_patterns=((2, 2), (3, 2)), tempo_bpm=180.0
    )
    manifest = load_manifest(manifest_path)
    settings = s2s.TrainSettings(steps=8, learning_rate=5e-4, batch_size=4, seed=0)
    for stage in pipeline.SEQ_STAGES:
        pipeline.train_seq_stage(stage, manifest, ckpt_dir, config=TINY_SEQ, settings=settings)
    pipeline.train_svs_stage(manifest, ckpt_dir, config=TINY_SVS, steps=10, seed=0)
    pipeline.train_codec_stage(manifest, ckpt_dir, epochs=3, seed=0)
    pipeline.train_accomp_stage(manifest, ckpt_dir, lm_config=TINY_LM, steps=10, seed=0)
    return manifest_path, ckpt_dir


class TestCorpusCommand:
    def test_identical_manifests_for_same_seed(self, tmp_path):
        r1 = runner.invoke(main, ["corpus", "--seed", "7", "--n", "2", "--out", str(tmp_path / "a")])
        r2 = runner.invoke(main, ["corpus", "--seed", "7", "--n", "2", "--out", str(tmp_path / "b")])
        assert r1.exit_code == 0 and r2.exit_code == 0
        m1 = (tmp_path / "a" / "manifest.json").read_bytes()
        m2 = (tmp_path / "b" / "manifest.json").read_bytes()
        assert m1 == m2

    def test_zero_entries_is_usage_error(self, tmp_path):
        r = runner.invoke(main, ["corpus", "--seed", "1", "--n", "0", "--out", str(tmp_path)])
        assert r.exit_code == 2

    def test_output_dir_created(self, tmp_path):
        out = tmp_path / "deep" / "nested"
        r = runner.invoke(main, ["corpus", "--seed", "1", "--n", "1", "--out", str(out)])
        assert r.exit_code == 0
        assert (out / "manifest.json").exists()
        assert (out / "corpus_result.json").exists()

    def test_seed_generated_and_logged_when_omitted(self, tmp_path):
        r = runner.invoke(main, ["corpus", "--n", "1", "--out", str(tmp_path / "x")])
        assert r.exit_code == 0
        assert "seed=" in r.output


class TestTrainCommand:
    def test_loss_csv_header_and_monotone_steps(self, mini_rig, tmp_path):
        manifest_path, _ = mini_rig
        out = tmp_path / "ck"
        r = runner.invoke(main, [
            "train", "--stage", "lyric2rhythm", "--corpus", str(manifest_path),
            "--out", str(out), "--steps", "5", "--seed", "3",
        ])
        assert r.exit_code == 0, r.output
        rows = (out / "lyric2rhythm_loss.csv").read_text().strip().splitlines()
        assert rows[0] == "step,loss"
        steps = [int(line.split(",")[0]) for line in rows[1:]]
        assert steps == sorted(steps) and len(set(steps)) == len(steps)

    def test_resume_continues_step_numbering(self, mini_rig, tmp_path):
        manifest_path, _ = mini_rig
        out = tmp_path / "ck"
        base = ["train", "--stage", "lyric2rhythm", "--corpus", str(manifest_path),
                "--out", str(out), "--seed", "3"]
        assert runner.invoke(main, base + ["--steps", "4"]).exit_code == 0
        assert runner.invoke(main, base + ["--steps", "3", "--resume"]).exit_code == 0
        rows = (out / "lyric2rhythm_loss.csv").read_text().strip().splitlines()[1:]
        steps = [int(line.split(",")[0]) for line in rows]
        assert steps == list(range(1, 8))

    def test_accomp_requires_codec(self, mini_rig, tmp_path):
        manifest_path, _ = mini_rig
        r = runner.invoke(main, [
            "train", "--stage", "accomp_lm", "--corpus", str(manifest_path),
            "--out", str(tmp_path / "empty"), "--steps", "1",
        ])
        assert r.exit_code == 1
        assert "codec" in r.output


class TestSynthCommand:
    def test_produces_all_outputs(self, mini_rig, tmp_path):
        manifest_path, ckpt_dir = mini_rig
        lyrics = tmp_path / "lyrics.txt"
        lyrics.write_text("明月。", encoding="utf-8")
        out = tmp_path / "synth"
        r = runner.invoke(main, [
            "synth", "--lyrics", str(lyrics), "--ckpt-dir", str(ckpt_dir),
            "--out", str(out), "--seed", "11", "--tempo", "200",
        ])
        assert r.exit_code == 0, r.output
        for name in ("melody.mid", "config.json", "voice.wav", "melody.wav", "accomp.wav", "mix.wav"):
            assert (out / name).exists(), name
        result = json.loads((out / "synth_result.json").read_text())
        assert result["seed"] == 11

    def test_config_in_honored(self, mini_rig, tmp_path):
        manifest_path, ckpt_dir = mini_rig
        lyrics = tmp_path / "lyrics.txt"
        lyrics.write_text("明月。", encoding="utf-8")
        first = tmp_path / "first"
        r = runner.invoke(main, [
            "synth", "--lyrics", str(lyrics), "--ckpt-dir", str(ckpt_dir),
            "--out", str(first), "--seed", "11", "--tempo", "200",
        ])
        assert r.exit_code == 0, r.output
        second = tmp_path / "second"
        r = runner.invoke(main, [
            "synth", "--lyrics", str(lyrics), "--ckpt-dir", str(ckpt_dir),
            "--out", str(second), "--seed", "11", "--config-in", str(first / "config.json"),
        ])
        assert r.exit_code == 0, r.output
        assert (second / "config.json").read_bytes() == (first / "config.json").read_bytes()
        assert (second / "voice.wav").read_bytes() == (first / "voice.wav").read_bytes()

    def test_invalid_config_rejected(self, mini_rig, tmp_path):
        manifest_path, ckpt_dir = mini_rig
        lyrics = tmp_path / "lyrics.txt"
        lyrics.write_text("明月，青天。", encoding="utf-8")
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({
            "phonemes": ["t"], "phoneme_durations": [5], "notes": [[0, 0, 60, 2]],
            "f0": [220.0] * 5, "frame_hop_ms": 11.6, "tempo_bpm": 120.0,
        }))
        r = runner.invoke(main, [
            "synth", "--lyrics", str(lyrics), "--ckpt-dir", str(ckpt_dir),
            "--out", str(tmp_path / "o"), "--seed", "1", "--config-in", str(bad),
        ])
        assert r.exit_code == 1
        assert "phoneme" in r.output.lower() or "notes" in r.output.lower()

    def test_missing_checkpoints(self, tmp_path):
        lyrics = tmp_path / "l.txt"
        lyrics.write_text("天。", encoding="utf-8")
        (tmp_path / "empty").mkdir()
        r = runner.invoke(main, [
            "synth", "--lyrics", str(lyrics), "--ckpt-dir", str(tmp_path / "empty"),
            "--out", str(tmp_path / "o"), "--seed", "1",
        ])
        assert r.exit_code == 1
        assert "missing checkpoints" in r.output


def write_clip_dir(path: Path, kind: str, n: int, seed: int = 0) -> None:
    path.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        if kind == "tones":
            freq = 200.0 + 10.0 * (i % 40)
            wav = sine_render(np.full(3, freq), np.full(3, 0.6), DEFAULT_AUDIO)
        else:
            wav = rng.uniform(-0.5, 0.5, size=3 * DEFAULT_AUDIO.hop)
        save_wav(path / f"clip_{i:04d}.wav", wav, DEFAULT_AUDIO.sample_rate)


class TestEvalCommand:
    def test_identical_dirs_fad_zero(self, tmp_path):
        ref = tmp_path / "ref"
        write_clip_dir(ref, "tones", 242)
        report = tmp_path / "report.json"
        r = runner.invoke(main, [
            "eval", "--reference", str(ref), "--candidate", str(ref), "--out", str(report),
        ])
        assert r.exit_code == 0, r.output
        doc = json.loads(report.read_text())
        assert abs(doc["fad"]) <= 1e-8
        assert doc["dim"] == 240
        assert doc["embedder"] == "melstats"

    def test_disjoint_corpora_positive(self, tmp_path):
        ref = tmp_path / "ref"
        cand = tmp_path / "cand"
        write_clip_dir(ref, "tones", 242)
        write_clip_dir(cand, "noise", 242, seed=5)
        report = tmp_path / "r.json"
        r = runner.invoke(main, [
            "eval", "--reference", str(ref), "--candidate", str(cand), "--out", str(report),
        ])
        assert r.exit_code == 0, r.output
        assert json.loads(report.read_text())["fad"] > 0

    def test_missing_dir_exit_2(self, tmp_path):
        r = runner.invoke(main, [
            "eval", "--reference", str(tmp_path / "nope"), "--candidate", str(tmp_path),
        ])
        assert r.exit_code == 2

    def test_too_few_clips_is_failure(self, tmp_path):
        ref = tmp_path / "few"
        write_clip_dir(ref, "tones", 5)
        r = runner.invoke(main, ["eval", "--reference", str(ref), "--candidate", str(ref)])
        assert r.exit_code == 1


class TestStatsCommand:
    def test_prints_table_and_writes_json(self, mini_rig, tmp_path):
        manifest_path, _ = mini_rig
        out = tmp_path / "stats.json"
        r = runner.invoke(main, ["stats", "--corpus", str(manifest_path), "--out", str(out)])
        assert r.exit_code == 0, r.output
        assert "Hours" in r.output and "Alignment" in r.output
        doc = json.loads(out.read_text())
        assert doc["singers"] >= 1
