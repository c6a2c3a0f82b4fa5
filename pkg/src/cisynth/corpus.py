"""Synthetic corpus generation and dataset statistics.

Every entry is derived deterministically: rhythm and melody follow fixed
rules over token tone classes within a pentatonic scale, the f0 contour
adds fixed-parameter vibrato and portamento, and audio is additive sine
synthesis. (seed, n) fully determines every byte on disk, and the seq
models have exactly learnable targets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioConfig, DEFAULT_AUDIO, sine_render, save_wav, wav_duration_seconds
from .errors import CisynthError
from .midi import notes_to_midi, read_midi
from .pinyin import SILENCE, char_lexicon, char_tone, phoneme_inventory
from .symbolic import (
    DEFAULT_FINAL_REST_SIXTEENTHS,
    SIXTEENTHS_PER_BAR,
    Cadence,
    LyricSequence,
    NoteQuadruple,
    RhythmSequence,
    RhythmToken,
    Scale,
    TokenKind,
    Tonality,
    assign_cadences,
    config_phonemes,
    frames_for_sixteenths,
    midi_to_hz,
    select_chord_progression,
    token_frame_counts,
    tokenize_lyrics,
)
from .textgrid import Interval, IntervalTier, TextGridDocument, parse_textgrid, write_textgrid

PENTATONIC_OFFSETS = (0, 2, 4, 7, 9)
TONE_DURATIONS = {1: 2, 2: 3, 3: 4, 4: 5}  # sixteenths per tone class
PAUSE_REST_SIXTEENTHS = 2
BASE_PITCH = 60  # pitch = BASE + tonality root + pentatonic offset

VIBRATO_CENTS = 20.0
VIBRATO_RATE_HZ = 5.5
PORTAMENTO_FRAMES = 3

CONSONANT_AMP = 0.45
VOWEL_AMP = 0.9

DEFAULT_PHRASE_PATTERNS = ((7, 5), (5, 5), (7, 5, 7, 5), (4, 4))


def derive_tonality(lyrics: LyricSequence) -> Tonality:
    """Pentatonic tonality fixed by the first tone class and phrase count."""
    chars = lyrics.regular_chars()
    first_tone = char_tone(chars[0])
    root = PENTATONIC_OFFSETS[(first_tone + lyrics.segment_count()) % 5]
    return Tonality(Scale.PENTATONIC, root)


def derive_rhythm(lyrics: LyricSequence, tonality: Tonality | None = None) -> RhythmSequence:
    """Deterministic rhythm: beats advance by tone-class durations, rests
    follow pauses, chords cycle per cadence-delimited segment."""
    if tonality is None:
        tonality = derive_tonality(lyrics)
    cadences = assign_cadences(lyrics)
    chords = select_chord_progression(tonality, lyrics.segment_count())
    tokens = []
    cursor = 0
    segment = 0
    for tok, cad in zip(lyrics.tokens, cadences):
        tokens.append(RhythmToken(chords[segment], cursor % SIXTEENTHS_PER_BAR, cad))
        if tok.kind is TokenKind.REGULAR:
            cursor += TONE_DURATIONS[char_tone(tok.char)]
        elif tok.kind is TokenKind.PAUSE:
            cursor += PAUSE_REST_SIXTEENTHS
            segment += 1
        else:
            cursor += DEFAULT_FINAL_REST_SIXTEENTHS
            segment += 1
    return RhythmSequence(tonality, tuple(tokens))


def derive_melody(rhythm: RhythmSequence) -> list[NoteQuadruple]:
    """Melody as a pure function of the rhythm sequence.

    Note durations are recovered from consecutive beats; pitch walks the
    pentatonic scale indexed by duration class and position in segment.
    """
    base = BASE_PITCH + rhythm.tonality.root
    notes = []
    cursor = 0
    pos_in_segment = 0
    toks = rhythm.tokens
    for i, tok in enumerate(toks):
        if i + 1 < len(toks):
            step = (toks[i + 1].beat - tok.beat) % SIXTEENTHS_PER_BAR
            if step == 0:
                step = SIXTEENTHS_PER_BAR
        else:
            step = DEFAULT_FINAL_REST_SIXTEENTHS
        if tok.cadence is Cadence.NONE:
            degree = (step - 2 + pos_in_segment) % 5
            pitch = base + PENTATONIC_OFFSETS[degree]
            notes.append(
                NoteQuadruple(
                    bar=cursor // SIXTEENTHS_PER_BAR,
                    position=cursor % SIXTEENTHS_PER_BAR,
                    pitch=pitch,
                    duration=step,
                )
            )
            pos_in_segment += 1
        else:
            pos_in_segment = 0
        cursor += step
    return notes


def ground_truth_durations(
    lyrics: LyricSequence,
    melody: list[NoteQuadruple],
    tempo_bpm: float,
    frame_hop_ms: float,
) -> tuple[list[str], list[int], list[int]]:
    """(phonemes, frames per phoneme, owner token per phoneme).

    Two-phoneme tokens give the initial a short fixed share; silences own
    their rest frames outright.
    """
    budget = token_frame_counts(lyrics, melody, tempo_bpm, frame_hop_ms)
    phonemes, owner = config_phonemes(lyrics, budget)
    durations = []
    i = 0
    while i < len(phonemes):
        tok = owner[i]
        group = [j for j in range(len(phonemes)) if owner[j] == tok]
        n = budget[tok]
        if len(group) == 2:
            head = max(1, min(6, n // 4))
            durations += [head, n - head]
        else:
            durations += [n]
        i += len(group)
    return phonemes, durations, owner


def ground_truth_f0(
    lyrics: LyricSequence,
    melody: list[NoteQuadruple],
    token_frames: list[int],
) -> np.ndarray:
    """Frame-level f0: note pitch with fixed vibrato and portamento; rests 0."""
    regular = lyrics.regular_indices()
    note_at = dict(zip(regular, range(len(melody))))
    out = []
    prev_hz = None
    frame = 0
    for i, tok in enumerate(lyrics.tokens):
        n = token_frames[i]
        if n == 0:
            continue
        if tok.kind is not TokenKind.REGULAR:
            out.append(np.zeros(n))
            prev_hz = None
            frame += n
            continue
        hz = midi_to_hz(melody[note_at[i]].pitch)
        t = np.arange(n, dtype=np.float64)
        cents = VIBRATO_CENTS * np.sin(
            2.0 * np.pi * VIBRATO_RATE_HZ * (frame + t) * 256 / 22050
        )
        contour = hz * 2.0 ** (cents / 1200.0)
        if prev_hz is not None and n > 2 * PORTAMENTO_FRAMES:
            glide = np.linspace(np.log(prev_hz), np.log(hz), PORTAMENTO_FRAMES + 1)[:-1]
            contour[:PORTAMENTO_FRAMES] = np.exp(glide)
        out.append(contour)
        prev_hz = hz
        frame += n
    return np.concatenate(out) if out else np.zeros(0)


def amplitude_envelope(phonemes: list[str], durations: list[int]) -> np.ndarray:
    """Per-frame amplitude: quiet consonants, full vowels, silent rests."""
    out = []
    for sym, n in zip(phonemes, durations):
        if sym == SILENCE:
            out.append(np.zeros(n))
        else:
            initials = 1 if _is_initial(sym) else 0
            amp = CONSONANT_AMP if initials else VOWEL_AMP
            env = np.full(n, amp)
            ramp = min(2, n)
            env[:ramp] *= np.linspace(0.5, 1.0, ramp)
            out.append(env)
    return np.concatenate(out) if out else np.zeros(0)


def _is_initial(sym: str) -> bool:
    from .pinyin import phoneme_table

    return sym in phoneme_table()[0]


@dataclass
class CorpusEntry:
    entry_id: str
    lyrics_text: str
    singer: str
    tempo_bpm: float
    audio_path: str
    textgrid_path: str
    midi_path: str
    duration_seconds: float

    def to_dict(self) -> dict:
        return {
            "id": self.entry_id,
            "lyrics": self.lyrics_text,
            "singer": self.singer,
            "tempo_bpm": self.tempo_bpm,
            "audio": self.audio_path,
            "textgrid": self.textgrid_path,
            "midi": self.midi_path,
            "duration_seconds": self.duration_seconds,
        }


@dataclass
class Manifest:
    seed: int
    sample_rate: int
    entries: list[CorpusEntry]
    root: Path = field(default_factory=Path)

    def entry_paths(self, entry: CorpusEntry) -> tuple[Path, Path, Path]:
        return (
            self.root / entry.audio_path,
            self.root / entry.textgrid_path,
            self.root / entry.midi_path,
        )


def build_entry(
    lyrics_text: str,
    out_dir: Path,
    entry_id: str,
    singer: str = "singer_00",
    tempo_bpm: float = 120.0,
    audio_cfg: AudioConfig = DEFAULT_AUDIO,
) -> CorpusEntry:
    """Render one corpus entry (WAV + TextGrid + MIDI) from lyric text."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lyrics = tokenize_lyrics(lyrics_text)
    rhythm = derive_rhythm(lyrics)
    melody = derive_melody(rhythm)
    hop_ms = audio_cfg.frame_hop_ms
    phonemes, durations, owner = ground_truth_durations(lyrics, melody, tempo_bpm, hop_ms)
    token_frames = token_frame_counts(lyrics, melody, tempo_bpm, hop_ms)
    f0 = ground_truth_f0(lyrics, melody, token_frames)
    amp = amplitude_envelope(phonemes, durations)
    wav = sine_render(f0, amp, audio_cfg)

    audio_name = f"{entry_id}.wav"
    save_wav(out_dir / audio_name, wav, audio_cfg.sample_rate)
    midi_name = f"{entry_id}.mid"
    (out_dir / midi_name).write_bytes(notes_to_midi(melody, tempo_bpm))
    tg = _entry_textgrid(lyrics, melody, phonemes, durations, token_frames, audio_cfg)
    tg_name = f"{entry_id}.TextGrid"
    (out_dir / tg_name).write_text(write_textgrid(tg), encoding="utf-8")
    return CorpusEntry(
        entry_id=entry_id,
        lyrics_text=lyrics_text,
        singer=singer,
        tempo_bpm=tempo_bpm,
        audio_path=audio_name,
        textgrid_path=tg_name,
        midi_path=midi_name,
        duration_seconds=len(wav) / audio_cfg.sample_rate,
    )


def _entry_textgrid(
    lyrics: LyricSequence,
    melody: list[NoteQuadruple],
    phonemes: list[str],
    durations: list[int],
    token_frames: list[int],
    audio_cfg: AudioConfig,
) -> TextGridDocument:
    hop_s = audio_cfg.hop / audio_cfg.sample_rate
    total_s = sum(durations) * hop_s

    text_intervals = []
    t = 0
    for tok, n in zip(lyrics.tokens, token_frames):
        if n == 0:
            continue
        text_intervals.append(Interval(t * hop_s, (t + n) * hop_s, tok.char))
        t += n

    phone_intervals = []
    t = 0
    for sym, n in zip(phonemes, durations):
        phone_intervals.append(Interval(t * hop_s, (t + n) * hop_s, sym))
        t += n

    pitch_intervals = []
    t = 0
    regular = lyrics.regular_indices()
    note_at = dict(zip(regular, range(len(melody))))
    for i, (tok, n) in enumerate(zip(lyrics.tokens, token_frames)):
        if n == 0:
            continue
        label = str(melody[note_at[i]].pitch) if tok.kind is TokenKind.REGULAR else ""
        pitch_intervals.append(Interval(t * hop_s, (t + n) * hop_s, label))
        t += n

    tiers = (
        IntervalTier("text", 0.0, total_s, tuple(text_intervals)),
        IntervalTier("phones", 0.0, total_s, tuple(phone_intervals)),
        IntervalTier("pitch", 0.0, total_s, tuple(pitch_intervals)),
    )
    return TextGridDocument(0.0, total_s, tiers)


def generate_synthetic_corpus(
    seed: int,
    n_entries: int,
    out_dir,
    phrase_patterns: tuple[tuple[int, ...], ...] = DEFAULT_PHRASE_PATTERNS,
    tempo_bpm: float = 120.0,
    n_singers: int = 4,
    audio_cfg: AudioConfig = DEFAULT_AUDIO,
) -> Path:
    """Write n corpus entries plus a manifest; byte-deterministic per (seed, n).

    Returns the manifest path.
    """
    if n_entries < 1:
        raise CisynthError(f"need at least one entry, got {n_entries}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    chars = sorted(char_lexicon().keys())
    entries = []
    for i in range(n_entries):
        pattern = phrase_patterns[int(rng.integers(len(phrase_patterns)))]
        phrases = []
        for length in pattern:
            idx = rng.integers(0, len(chars), size=int(length))
            phrases.append("".join(chars[j] for j in idx))
        text = "，".join(phrases) + "。"
        singer = f"singer_{int(rng.integers(n_singers)):02d}"
        entries.append(
            build_entry(
                text, out_dir, f"entry_{i:04d}", singer=singer,
                tempo_bpm=tempo_bpm, audio_cfg=audio_cfg,
            )
        )
    manifest = {
        "seed": seed,
        "n_entries": n_entries,
        "sample_rate": audio_cfg.sample_rate,
        "tempo_bpm": tempo_bpm,
        "entries": [e.to_dict() for e in entries],
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest(path) -> Manifest:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    entries = [
        CorpusEntry(
            entry_id=e["id"],
            lyrics_text=e["lyrics"],
            singer=e["singer"],
            tempo_bpm=float(e["tempo_bpm"]),
            audio_path=e["audio"],
            textgrid_path=e["textgrid"],
            midi_path=e["midi"],
            duration_seconds=float(e["duration_seconds"]),
        )
        for e in doc["entries"]
    ]
    return Manifest(
        seed=int(doc["seed"]),
        sample_rate=int(doc["sample_rate"]),
        entries=entries,
        root=path.parent,
    )


def validate_entry(manifest: Manifest, entry: CorpusEntry) -> None:
    """Check the corpus invariants for one entry; raises CisynthError."""
    audio_path, tg_path, midi_path = manifest.entry_paths(entry)
    lyrics = tokenize_lyrics(entry.lyrics_text)
    doc = read_midi(midi_path.read_bytes())
    from .symbolic import PITCH_MAX, PITCH_MIN

    for n in doc.notes:
        if not PITCH_MIN <= n.pitch <= PITCH_MAX:
            raise CisynthError(f"{entry.entry_id}: pitch {n.pitch} outside G1-C6")
    tg = parse_textgrid(tg_path.read_text(encoding="utf-8"))
    hop_ms = DEFAULT_AUDIO.frame_hop_ms
    budget = token_frame_counts(lyrics, doc.notes, entry.tempo_bpm, hop_ms)
    phonemes, _ = config_phonemes(lyrics, budget)
    phones = tg.tier("phones")
    if len(phones.intervals) != len(phonemes):
        raise CisynthError(
            f"{entry.entry_id}: phoneme tier has {len(phones.intervals)} spans, "
            f"phonemization gives {len(phonemes)}"
        )
    for iv in tg.tier("pitch").intervals:
        if iv.text and not iv.text.isdigit():
            raise CisynthError(f"{entry.entry_id}: pitch label {iv.text!r} not a MIDI number")
    dur = wav_duration_seconds(audio_path)
    if abs(dur - tg.xmax) > 1e-3:
        raise CisynthError(
            f"{entry.entry_id}: audio {dur:.4f}s but TextGrid spans {tg.xmax:.4f}s"
        )


# ---------------------------------------------------------------------------
# statistics


EXCLUSION_THRESHOLD = 20  # occurrences below this count as excluded


@dataclass
class DatasetStats:
    total_hours: float
    singer_count: int
    phoneme_counts: dict[str, int]
    phoneme_excluded: list[str]
    pitch_counts: dict[int, int]
    pitch_excluded: list[int]
    pitch_range: tuple[int, int] | None
    aligned: bool

    def missing_phonemes(self) -> list[str]:
        inventory = [p for p in phoneme_inventory() if p != SILENCE]
        present = {p for p, c in self.phoneme_counts.items() if c >= EXCLUSION_THRESHOLD}
        return [p for p in inventory if p not in present]

    def pitch_range_names(self) -> str:
        if self.pitch_range is None:
            return "-"
        return f"{midi_name(self.pitch_range[0])}-{midi_name(self.pitch_range[1])}"

    def to_dict(self) -> dict:
        return {
            "hours": round(self.total_hours, 4),
            "singers": self.singer_count,
            "phoneme_counts": dict(sorted(self.phoneme_counts.items())),
            "phoneme_excluded": sorted(self.phoneme_excluded),
            "phoneme_missing": self.missing_phonemes(),
            "pitch_counts": {str(k): v for k, v in sorted(self.pitch_counts.items())},
            "pitch_excluded": sorted(self.pitch_excluded),
            "pitch_range": self.pitch_range_names(),
            "alignment": self.aligned,
        }

    def to_table(self) -> str:
        missing = self.missing_phonemes()
        phoneme_col = "no miss" if not missing else "miss " + ",".join(
            f'"{p}"' for p in missing[:6]
        ) + ("..." if len(missing) > 6 else "")
        rows = [
            ("Hours", f"{self.total_hours:.2f}"),
            ("Singers", str(self.singer_count)),
            ("Phoneme", phoneme_col),
            ("Pitch", self.pitch_range_names()),
            ("MIDI", "yes"),
            ("Annotation", "text+phoneme+pitch"),
            ("Alignment", "yes" if self.aligned else "no"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def midi_name(pitch: int) -> str:
    names = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
    return f"{names[pitch % 12]}{pitch // 12 - 1}"


def compute_stats(manifest: Manifest) -> DatasetStats:
    """Tally duration, coverage, and pitch statistics across the corpus.

    Phonemes or pitches occurring fewer than 20 times are flagged excluded.
    """
    total_seconds = 0.0
    singers = set()
    phoneme_counts: dict[str, int] = {}
    pitch_counts: dict[int, int] = {}
    aligned = True
    for entry in manifest.entries:
        audio_path, tg_path, _ = manifest.entry_paths(entry)
        total_seconds += wav_duration_seconds(audio_path)
        singers.add(entry.singer)
        tg = parse_textgrid(tg_path.read_text(encoding="utf-8"))
        try:
            validate_entry(manifest, entry)
        except CisynthError:
            aligned = False
        for iv in tg.tier("phones").intervals:
            if iv.text:
                phoneme_counts[iv.text] = phoneme_counts.get(iv.text, 0) + 1
        for iv in tg.tier("pitch").intervals:
            if iv.text:
                p = int(iv.text)
                pitch_counts[p] = pitch_counts.get(p, 0) + 1
    phoneme_excluded = [p for p, c in phoneme_counts.items() if c < EXCLUSION_THRESHOLD]
    pitch_excluded = [p for p, c in pitch_counts.items() if c < EXCLUSION_THRESHOLD]
    pitch_range = (min(pitch_counts), max(pitch_counts)) if pitch_counts else None
    return DatasetStats(
        total_hours=total_seconds / 3600.0,
        singer_count=len(singers),
        phoneme_counts=phoneme_counts,
        phoneme_excluded=phoneme_excluded,
        pitch_counts=pitch_counts,
        pitch_excluded=pitch_excluded,
        pitch_range=pitch_range,
        aligned=aligned,
    )
