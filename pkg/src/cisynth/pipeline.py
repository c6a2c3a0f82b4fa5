"""End-to-end orchestration: per-stage training and file-mediated synthesis.

Every stage hands off through inspectable files (MIDI + singing config
between the symbolic and voice stages), and every sampling call owns a
private seed derived from the run seed, so fixed seeds give byte-identical
outputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import accompaniment as acc
from . import seq2seq as s2s
from .audio import (
    AudioConfig,
    DEFAULT_AUDIO,
    load_wav,
    mel_to_wav,
    save_wav,
    sine_render,
    wav_to_mel,
)
from .corpus import (
    Manifest,
    derive_melody,
    derive_rhythm,
    ground_truth_durations,
    ground_truth_f0,
    load_manifest,
)
from .errors import CisynthError, ConfigValidationError
from .midi import notes_to_midi, read_midi
from .pinyin import char_lexicon
from .svs import SvsConfig, SvsModel, load_svs_checkpoint, phoneme_to_ids, save_svs_checkpoint
from .symbolic import (
    DEFAULT_FINAL_REST_SIXTEENTHS,
    DEFAULT_PAUSE_MARKS,
    DEFAULT_FINAL_MARKS,
    LyricSequence,
    NoteQuadruple,
    SingingConfig,
    TokenKind,
    build_singing_config,
    config_phonemes,
    midi_to_hz,
    token_frame_counts,
    tokenize_lyrics,
    validate_config_against_lyrics,
)

log = logging.getLogger("cisynth")

SEQ_STAGES = ("lyric2rhythm", "rhythm2melody")
ALL_STAGES = SEQ_STAGES + ("svs", "codec", "accomp_lm")

DEFAULT_PROMPT = ["songci", "guzheng"]
MELODY_GAIN = 0.6
ACCOMP_GAIN = 0.5


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") & 0x7FFFFFFF


def checkpoint_path(ckpt_dir, stage: str) -> Path:
    return Path(ckpt_dir) / f"{stage}.ckpt"


# ---------------------------------------------------------------------------
# vocabularies and training pairs


def pipeline_vocabularies() -> tuple[s2s.Vocabulary, s2s.Vocabulary, s2s.Vocabulary]:
    lyric = s2s.build_lyric_vocabulary(
        sorted(char_lexicon().keys()), DEFAULT_PAUSE_MARKS, DEFAULT_FINAL_MARKS
    )
    return lyric, s2s.build_rhythm_vocabulary(), s2s.build_melody_vocabulary()


def seq_training_pairs(manifest: Manifest, stage: str) -> list[s2s.TokenizedPair]:
    lyric_v, rhythm_v, melody_v = pipeline_vocabularies()
    pairs = []
    for entry in manifest.entries:
        lyrics = tokenize_lyrics(entry.lyrics_text)
        rhythm = derive_rhythm(lyrics)
        if stage == "lyric2rhythm":
            src = lyric_v.encode(s2s.lyric_symbols(lyrics))
            tgt = rhythm_v.encode(s2s.rhythm_symbols(rhythm))
        elif stage == "rhythm2melody":
            melody = derive_melody(rhythm)
            src = rhythm_v.encode(s2s.rhythm_symbols(rhythm))
            tgt = melody_v.encode(s2s.melody_symbols(melody))
        else:
            raise ValueError(f"not a seq stage: {stage}")
        pairs.append(s2s.TokenizedPair(tuple(src), tuple(tgt)))
    return pairs


def _write_loss_csv(path: Path, rows: list[tuple[int, float]], append: bool) -> None:
    mode = "a" if append and path.exists() else "w"
    with path.open(mode, newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(["step", "loss"])
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# stage training


def train_seq_stage(
    stage: str,
    manifest: Manifest,
    out_dir,
    config: s2s.Seq2SeqConfig | None = None,
    settings: s2s.TrainSettings | None = None,
    resume: bool = False,
) -> Path:
    if stage not in SEQ_STAGES:
        raise ValueError(f"unknown seq stage {stage!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lyric_v, rhythm_v, melody_v = pipeline_vocabularies()
    src_v, tgt_v = (
        (lyric_v, rhythm_v) if stage == "lyric2rhythm" else (rhythm_v, melody_v)
    )
    settings = settings or s2s.TrainSettings()
    pairs = seq_training_pairs(manifest, stage)
    path = checkpoint_path(out_dir, stage)
    start_step = 0
    if resume and path.exists():
        model, meta = s2s.load_checkpoint(path)
        start_step = int(meta.get("step", 0))
    else:
        config = config or s2s.Seq2SeqConfig()
        torch.manual_seed(derive_seed(settings.seed, f"{stage}:init"))
        model = s2s.Seq2SeqModel(config, len(src_v), len(tgt_v))
    result = s2s.train(pairs, model, settings, start_step=start_step)
    s2s.save_checkpoint(path, result.model, {"step": result.steps_run, "stage": stage})
    sidecar = {"source": json.loads(src_v.to_json()), "target": json.loads(tgt_v.to_json())}
    path.with_suffix(".ckpt.vocab.json").write_text(
        json.dumps(sidecar, ensure_ascii=False, indent=2), encoding="utf-8"
    )
    rows = list(enumerate(result.loss_trace, start=start_step + 1))
    _write_loss_csv(out_dir / f"{stage}_loss.csv", rows, append=resume)
    log.info("stage %s: %d steps, final loss %.4f", stage, result.steps_run, result.loss_trace[-1])
    return path


@dataclass
class SvsUtterance:
    phoneme_ids: list[int]
    durations: list[int]
    note_pitch: list[float]
    note_duration: list[float]
    f0_hz: np.ndarray
    mel: torch.Tensor


def svs_utterance(manifest: Manifest, entry, audio_cfg: AudioConfig = DEFAULT_AUDIO) -> SvsUtterance:
    """Teacher-forcing data for one corpus entry, all from deterministic rules."""
    audio_path, _, midi_path = manifest.entry_paths(entry)
    lyrics = tokenize_lyrics(entry.lyrics_text)
    melody = read_midi(midi_path.read_bytes()).notes
    hop_ms = audio_cfg.frame_hop_ms
    phonemes, durations, owner = ground_truth_durations(lyrics, melody, entry.tempo_bpm, hop_ms)
    token_frames = token_frame_counts(lyrics, melody, entry.tempo_bpm, hop_ms)
    f0 = ground_truth_f0(lyrics, melody, token_frames)
    wav, _ = load_wav(audio_path)
    mel = torch.from_numpy(wav_to_mel(wav, audio_cfg))
    pitch, dur = broadcast_notes(lyrics, melody, owner)
    return SvsUtterance(
        phoneme_ids=phoneme_to_ids(phonemes),
        durations=durations,
        note_pitch=pitch,
        note_duration=dur,
        f0_hz=f0,
        mel=mel,
    )


def broadcast_notes(
    lyrics: LyricSequence, melody: list[NoteQuadruple], owner: list[int]
) -> tuple[list[float], list[float]]:
    """Per-phoneme note pitch and duration; rests broadcast as zeros."""
    regular = lyrics.regular_indices()
    note_at = dict(zip(regular, range(len(melody))))
    pitch, dur = [], []
    for tok_idx in owner:
        j = note_at.get(tok_idx)
        if j is None:
            pitch.append(0.0)
            dur.append(0.0)
        else:
            pitch.append(float(melody[j].pitch))
            dur.append(float(melody[j].duration))
    return pitch, dur


def train_svs_stage(
    manifest: Manifest,
    out_dir,
    config: SvsConfig | None = None,
    steps: int = 1500,
    learning_rate: float = 5e-4,
    seed: int = 0,
    resume: bool = False,
    entry_limit: int | None = None,
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = checkpoint_path(out_dir, "svs")
    start_step = 0
    if resume and path.exists():
        model, meta = load_svs_checkpoint(path)
        start_step = int(meta.get("step", 0))
    else:
        torch.manual_seed(derive_seed(seed, "svs:init"))
        model = SvsModel(config or SvsConfig.desk())
    entries = manifest.entries[:entry_limit] if entry_limit else manifest.entries
    data = [svs_utterance(manifest, e) for e in entries]
    opt = torch.optim.Adam(model.parameters(), lr=learning_rate)
    rng = np.random.default_rng(derive_seed(seed, "svs:order"))
    gen = torch.Generator().manual_seed(derive_seed(seed, "svs:noise"))
    rows = []
    model.train()
    from .errors import TrainingDiverged

    for step in range(start_step + 1, start_step + steps + 1):
        utt = data[int(rng.integers(len(data)))]
        hve = model.variance_encode(utt.phoneme_ids)
        pred_log = model.predict_log_durations(hve, utt.note_pitch, utt.note_duration)
        l_dp = model.duration_loss(pred_log, torch.tensor(utt.durations))
        cond = model.frame_condition(hve, utt.durations)
        l_f0 = model.f0_denoise_loss(cond, utt.f0_hz, gen)
        hae = model.acoustic_encode(utt.phoneme_ids, utt.durations, utt.f0_hz)
        l_aux = model.aux_loss(model.aux_decode(hae), utt.mel)
        l_mel = model.mel_denoise_loss(hae, utt.mel, gen)
        loss = l_dp + l_f0 + l_aux + l_mel
        if not torch.isfinite(loss):
            raise TrainingDiverged(step, learning_rate, 0.0)
        opt.zero_grad()
        loss.backward()
        opt.step()
        rows.append((step, float(loss.detach())))
    model.eval()
    save_svs_checkpoint(path, model, {"step": start_step + steps})
    _write_loss_csv(out_dir / "svs_loss.csv", rows, append=resume)
    return path


def melody_waveform(
    lyrics: LyricSequence,
    melody: list[NoteQuadruple],
    tempo_bpm: float,
    audio_cfg: AudioConfig = DEFAULT_AUDIO,
) -> np.ndarray:
    """Plain sine rendering of the melody notes over the config frame grid."""
    token_frames = token_frame_counts(lyrics, melody, tempo_bpm, audio_cfg.frame_hop_ms)
    regular = lyrics.regular_indices()
    note_at = dict(zip(regular, range(len(melody))))
    f0 = []
    for i, tok in enumerate(lyrics.tokens):
        n = token_frames[i]
        if n == 0:
            continue
        if tok.kind is TokenKind.REGULAR:
            f0.append(np.full(n, midi_to_hz(melody[note_at[i]].pitch)))
        else:
            f0.append(np.zeros(n))
    f0 = np.concatenate(f0) if f0 else np.zeros(0)
    amp = np.where(f0 > 0, 0.7, 0.0)
    return sine_render(f0, amp, audio_cfg)


def accompaniment_waveform(
    lyrics: LyricSequence,
    melody: list[NoteQuadruple],
    tempo_bpm: float,
    audio_cfg: AudioConfig = DEFAULT_AUDIO,
) -> np.ndarray:
    """Deterministic toy accompaniment: the melody an octave down,
    alternating with the fifth below every half beat."""
    token_frames = token_frame_counts(lyrics, melody, tempo_bpm, audio_cfg.frame_hop_ms)
    regular = lyrics.regular_indices()
    note_at = dict(zip(regular, range(len(melody))))
    f0 = []
    for i, tok in enumerate(lyrics.tokens):
        n = token_frames[i]
        if n == 0:
            continue
        if tok.kind is TokenKind.REGULAR:
            base = midi_to_hz(melody[note_at[i]].pitch) / 2.0
            t = np.arange(n)
            ratio = np.where((t // 8) % 2 == 0, 1.0, 0.75)
            f0.append(base * ratio)
        else:
            f0.append(np.zeros(n))
    f0 = np.concatenate(f0) if f0 else np.zeros(0)
    amp = np.where(f0 > 0, 0.55, 0.0)
    return sine_render(f0, amp, audio_cfg)


def train_codec_stage(
    manifest: Manifest,
    out_dir,
    config: acc.RvqConfig | None = None,
    epochs: int = 20,
    seed: int = 0,
    max_frames: int = 20000,
) -> Path:
    """Fit the RVQ codec on voice, melody, and accompaniment mel frames."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = []
    for entry in manifest.entries:
        audio_path, _, midi_path = manifest.entry_paths(entry)
        lyrics = tokenize_lyrics(entry.lyrics_text)
        melody = read_midi(midi_path.read_bytes()).notes
        wav, _ = load_wav(audio_path)
        frames.append(wav_to_mel(wav))
        frames.append(wav_to_mel(melody_waveform(lyrics, melody, entry.tempo_bpm)))
        frames.append(wav_to_mel(accompaniment_waveform(lyrics, melody, entry.tempo_bpm)))
    stacked = np.concatenate(frames, axis=0)
    if len(stacked) > max_frames:
        stride = int(np.ceil(len(stacked) / max_frames))
        stacked = stacked[::stride]
    codec, errors = acc.train_codec(
        stacked, config or acc.RvqConfig(), epochs=epochs, seed=derive_seed(seed, "codec")
    )
    path = checkpoint_path(out_dir, "codec")
    acc.save_codec(path, codec, {"step": epochs})
    _write_loss_csv(out_dir / "codec_loss.csv", list(enumerate(errors, start=1)), append=False)
    return path


def entry_prompt(tempo_bpm: float) -> list[str]:
    return DEFAULT_PROMPT + (["slow"] if tempo_bpm < 100 else ["fast"])


def train_accomp_stage(
    manifest: Manifest,
    out_dir,
    lm_config: acc.AccompLmConfig | None = None,
    steps: int = 800,
    learning_rate: float = 5e-4,
    seed: int = 0,
    entry_limit: int | None = None,
) -> Path:
    out_dir = Path(out_dir)
    codec_file = checkpoint_path(out_dir, "codec")
    if not codec_file.exists():
        raise CisynthError(f"codec checkpoint missing at {codec_file}; train the codec first")
    codec = acc.load_codec(codec_file)
    vocab = acc.AccompVocabulary(codec.config)
    examples = []
    entries = manifest.entries[:entry_limit] if entry_limit else manifest.entries
    for entry in entries:
        _, _, midi_path = manifest.entry_paths(entry)
        lyrics = tokenize_lyrics(entry.lyrics_text)
        melody = read_midi(midi_path.read_bytes()).notes
        mel_m = wav_to_mel(melody_waveform(lyrics, melody, entry.tempo_bpm))
        mel_a = wav_to_mel(accompaniment_waveform(lyrics, melody, entry.tempo_bpm))
        examples.append(
            acc.AccompExample(
                prompt=entry_prompt(entry.tempo_bpm),
                melody_grid=acc.rvq_encode(codec, mel_m)[0],
                accomp_grid=acc.rvq_encode(codec, mel_a)[0],
            )
        )
    torch.manual_seed(derive_seed(seed, "accomp:init"))
    model = acc.TokenLM(lm_config or acc.AccompLmConfig(), vocab.size)
    trace = acc.train_accomp_lm(
        examples, model, vocab, steps=steps, learning_rate=learning_rate,
        seed=derive_seed(seed, "accomp:train"),
    )
    path = checkpoint_path(out_dir, "accomp_lm")
    acc.save_accomp_lm(path, model, vocab, {"step": steps})
    _write_loss_csv(out_dir / "accomp_lm_loss.csv", list(enumerate(trace, start=1)), append=False)
    return path


# ---------------------------------------------------------------------------
# synthesis


def anchor_f0_to_notes(
    config: SingingConfig, lyrics: LyricSequence, owner: list[int]
) -> np.ndarray:
    """Re-anchor each token's f0 contour so its voiced log-mean equals the
    note pitch. Notes are the pitch authority; the stored contour supplies
    the expressive shape (vibrato, portamento)."""
    f0 = np.asarray(config.f0, dtype=np.float64).copy()
    regular = lyrics.regular_indices()
    note_at = dict(zip(regular, range(len(config.notes))))
    bounds = np.concatenate([[0], np.cumsum(config.phoneme_durations)])
    tok_frames: dict[int, list[int]] = {}
    for p, tok_idx in enumerate(owner):
        tok_frames.setdefault(tok_idx, []).extend(range(bounds[p], bounds[p + 1]))
    for tok_idx, frames in tok_frames.items():
        frames = np.asarray(frames)
        j = note_at.get(tok_idx)
        if j is None:
            f0[frames] = 0.0
            continue
        note_hz = midi_to_hz(config.notes[j].pitch)
        voiced = frames[f0[frames] > 0]
        if len(voiced) == 0:
            f0[frames] = note_hz
            continue
        log_mean = float(np.mean(np.log(f0[voiced])))
        ratio = note_hz / np.exp(log_mean)
        f0[voiced] = np.clip(f0[voiced] * ratio, 40.0, 1200.0)
        unvoiced = frames[~np.isin(frames, voiced)]
        f0[unvoiced] = 0.0
    return f0


def ensure_sorted_melody(lyrics: LyricSequence, melody: list[NoteQuadruple]) -> list[NoteQuadruple]:
    """Retime decoded notes sequentially if their grid placement is unsorted.

    Keeps pitches and durations; lays notes end to end with rests after
    pauses, mirroring the corpus rules.
    """
    keys = [n.start_sixteenths() for n in melody]
    ends = [n.end_sixteenths() for n in melody]
    if all(keys[i] >= ends[i - 1] for i in range(1, len(melody))):
        return melody
    log.warning("decoded melody not monotone; retiming sequentially")
    out = []
    cursor = 0
    j = 0
    for tok in lyrics.tokens:
        if tok.kind is TokenKind.REGULAR:
            if j >= len(melody):
                break
            n = melody[j]
            out.append(NoteQuadruple(cursor // 16, cursor % 16, n.pitch, n.duration))
            cursor += n.duration
            j += 1
        elif tok.kind is TokenKind.PAUSE:
            cursor += 2
    return out


@dataclass
class StageCheckpoints:
    lyric2rhythm: Path
    rhythm2melody: Path
    svs: Path
    codec: Path
    accomp_lm: Path

    @classmethod
    def in_dir(cls, ckpt_dir) -> "StageCheckpoints":
        d = Path(ckpt_dir)
        return cls(*(checkpoint_path(d, s) for s in ALL_STAGES))

    def require(self, stages) -> None:
        missing = [s for s in stages if not getattr(self, s).exists()]
        if missing:
            raise CisynthError(f"missing checkpoints: {', '.join(missing)}")


def predict_config(
    lyrics: LyricSequence,
    svs_model: SvsModel,
    seed: int,
    ckpts: StageCheckpoints,
    tempo_bpm: float = 120.0,
    audio_cfg: AudioConfig = DEFAULT_AUDIO,
) -> SingingConfig:
    """Stages 1-3: lyric -> rhythm -> melody -> singing config."""
    lyric_v, rhythm_v, melody_v = pipeline_vocabularies()
    l2r, _ = s2s.load_checkpoint(ckpts.lyric2rhythm)
    r2m, _ = s2s.load_checkpoint(ckpts.rhythm2melody)
    src = lyric_v.encode(s2s.lyric_symbols(lyrics))
    rhythm_ids = s2s.decode(
        l2r, src, vocab=rhythm_v, target_groups=len(lyrics.tokens),
        seed=derive_seed(seed, "decode:rhythm"),
    )
    rhythm = s2s.symbols_to_rhythm(rhythm_v.decode(rhythm_ids))
    melody_ids = s2s.decode(
        r2m, rhythm_v.encode(s2s.rhythm_symbols(rhythm)),
        vocab=melody_v, target_groups=len(lyrics.regular_indices()),
        seed=derive_seed(seed, "decode:melody"),
    )
    melody = s2s.symbols_to_melody(melody_v.decode(melody_ids))
    melody = ensure_sorted_melody(lyrics, melody)
    return config_from_melody(lyrics, melody, svs_model, seed, tempo_bpm, audio_cfg)


def config_from_melody(
    lyrics: LyricSequence,
    melody: list[NoteQuadruple],
    svs_model: SvsModel,
    seed: int,
    tempo_bpm: float = 120.0,
    audio_cfg: AudioConfig = DEFAULT_AUDIO,
) -> SingingConfig:
    """Predict durations and f0 for a melody and assemble the config."""
    hop_ms = audio_cfg.frame_hop_ms
    budget = token_frame_counts(lyrics, melody, tempo_bpm, hop_ms)
    phonemes, owner = config_phonemes(lyrics, budget)
    pitch, dur = broadcast_notes(lyrics, melody, owner)
    with torch.no_grad():
        hve = svs_model.variance_encode(phoneme_to_ids(phonemes))
        pred_log = svs_model.predict_log_durations(hve, pitch, dur)
        budget_by_token = {i: b for i, b in enumerate(budget)}
        durations, _ = svs_model.project_durations(pred_log, owner, budget_by_token)
        cond = svs_model.frame_condition(hve, durations)
        f0 = svs_model.sample_f0(cond, derive_seed(seed, "sample:f0"))
    # structural voicing: regular tokens sing, rests are silent
    bounds = np.concatenate([[0], np.cumsum(durations)])
    regular = set(lyrics.regular_indices())
    f0 = np.asarray(f0, dtype=np.float64)
    for p, tok_idx in enumerate(owner):
        sl = slice(bounds[p], bounds[p + 1])
        if tok_idx in regular:
            seg = f0[sl]
            fallback = float(np.median(seg[seg > 0])) if np.any(seg > 0) else 220.0
            seg = np.where(seg > 0, seg, fallback)
            f0[sl] = np.clip(seg, 40.0, 1200.0)
        else:
            f0[sl] = 0.0
    return build_singing_config(
        lyrics, melody, durations, f0.tolist(), hop_ms, tempo_bpm
    )


def synthesize_voice(
    config: SingingConfig,
    lyrics: LyricSequence,
    svs_model: SvsModel,
    seed: int,
    mode: str = "shallow",
    k: int | None = None,
    audio_cfg: AudioConfig = DEFAULT_AUDIO,
) -> np.ndarray:
    """Config -> acoustic features -> (shallow) diffusion mel -> waveform."""
    owner = validate_config_against_lyrics(config, lyrics)
    f0 = anchor_f0_to_notes(config, lyrics, owner)
    with torch.no_grad():
        hae = svs_model.acoustic_encode(
            phoneme_to_ids(list(config.phonemes)), list(config.phoneme_durations), f0
        )
        aux = svs_model.aux_decode(hae)
        mel = svs_model.sample_mel(
            hae, derive_seed(seed, "sample:mel"), mode=mode, aux_mel=aux, k=k
        )
    return mel_to_wav(mel.cpu().numpy(), audio_cfg)


@dataclass
class SynthesisResult:
    out_dir: Path
    files: dict[str, Path]
    seed: int


def synthesize(
    lyrics_text: str,
    ckpt_dir,
    out_dir,
    seed: int,
    config_in=None,
    mode: str = "shallow",
    k: int | None = None,
    tempo_bpm: float = 120.0,
    audio_cfg: AudioConfig = DEFAULT_AUDIO,
) -> SynthesisResult:
    """Full pipeline run; writes melody.mid, config.json, voice.wav,
    melody.wav, accomp.wav, mix.wav into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpts = StageCheckpoints.in_dir(ckpt_dir)
    lyrics = tokenize_lyrics(lyrics_text)

    if config_in is not None:
        ckpts.require(["svs", "codec", "accomp_lm"])
        config = SingingConfig.from_json_bytes(Path(config_in).read_bytes())
        validate_config_against_lyrics(config, lyrics)
        svs_model, _ = load_svs_checkpoint(ckpts.svs)
    else:
        ckpts.require(list(ALL_STAGES))
        svs_model, _ = load_svs_checkpoint(ckpts.svs)
        config = predict_config(
            lyrics, svs_model, seed, ckpts, tempo_bpm=tempo_bpm, audio_cfg=audio_cfg
        )

    melody = list(config.notes)
    files: dict[str, Path] = {}
    files["config"] = out_dir / "config.json"
    files["config"].write_bytes(config.to_json_bytes())
    files["melody_mid"] = out_dir / "melody.mid"
    files["melody_mid"].write_bytes(notes_to_midi(melody, config.tempo_bpm))

    voice = synthesize_voice(config, lyrics, svs_model, seed, mode=mode, k=k, audio_cfg=audio_cfg)
    files["voice"] = out_dir / "voice.wav"
    save_wav(files["voice"], voice, audio_cfg.sample_rate)

    melody_wav = melody_waveform(lyrics, melody, config.tempo_bpm, audio_cfg)
    files["melody"] = out_dir / "melody.wav"
    save_wav(files["melody"], melody_wav, audio_cfg.sample_rate)

    codec = acc.load_codec(ckpts.codec)
    lm, vocab = acc.load_accomp_lm(ckpts.accomp_lm)
    melody_grid = acc.rvq_encode(codec, wav_to_mel(melody_wav, audio_cfg))[0]
    accomp_grid = acc.generate_accompaniment(
        lm, vocab, DEFAULT_PROMPT, melody_grid, seed=derive_seed(seed, "sample:accomp")
    )
    accomp_mel = acc.rvq_decode(codec, accomp_grid)
    accomp_wav = mel_to_wav(accomp_mel, audio_cfg)
    files["accomp"] = out_dir / "accomp.wav"
    save_wav(files["accomp"], accomp_wav, audio_cfg.sample_rate)

    mixed = acc.mix(
        voice, melody_wav, accomp_wav, gains=(1.0, MELODY_GAIN, ACCOMP_GAIN),
        sample_rates=(audio_cfg.sample_rate,) * 3,
    )
    files["mix"] = out_dir / "mix.wav"
    save_wav(files["mix"], mixed, audio_cfg.sample_rate)

    result = {
        "seed": seed,
        "files": {k: str(v) for k, v in files.items()},
        "frames": config.total_frames,
        "notes": len(melody),
    }
    (out_dir / "synth_result.json").write_text(
        json.dumps(result, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return SynthesisResult(out_dir=out_dir, files=files, seed=seed)
