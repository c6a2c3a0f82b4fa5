"""Symbolic layer: lyric tokens, rhythm templates, note quadruples, and the
user-editable singing config that hands melody information to the voice stage.

Time grid convention: 4/4 meter at sixteenth-note resolution, PPQ 480
(one sixteenth = 120 ticks).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

from .errors import AlignmentError, ConfigValidationError, LyricsError
from .pinyin import SILENCE, char_to_phonemes

SIXTEENTHS_PER_BAR = 16
PPQ = 480
TICKS_PER_SIXTEENTH = PPQ // 4

PITCH_MIN = 31  # G1
PITCH_MAX = 84  # C6
DURATION_MAX = 16
BAR_MAX = 63

DEFAULT_PAUSE_MARKS = frozenset({"，", "、"})
DEFAULT_FINAL_MARKS = frozenset({"。", "！", "？"})

F0_MIN_HZ = 40.0
F0_MAX_HZ = 1200.0

DEFAULT_TEMPO_BPM = 120.0
DEFAULT_FINAL_REST_SIXTEENTHS = 4


class TokenKind(enum.Enum):
    REGULAR = "regular"
    PAUSE = "pause"
    FINAL_PAUSE = "final_pause"


@dataclass(frozen=True)
class LyricToken:
    char: str
    kind: TokenKind


@dataclass(frozen=True)
class LyricSequence:
    tokens: tuple[LyricToken, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def regular_indices(self) -> list[int]:
        return [i for i, t in enumerate(self.tokens) if t.kind is TokenKind.REGULAR]

    def regular_chars(self) -> list[str]:
        return [t.char for t in self.tokens if t.kind is TokenKind.REGULAR]

    def segment_count(self) -> int:
        """Segments are spans ending at a pause or final pause."""
        return sum(1 for t in self.tokens if t.kind is not TokenKind.REGULAR)

    def text(self) -> str:
        return "".join(t.char for t in self.tokens)


class Scale(enum.Enum):
    MAJOR = "major"
    MINOR = "minor"
    PENTATONIC = "pentatonic"


SCALE_STEPS = {
    Scale.MAJOR: (0, 2, 4, 5, 7, 9, 11),
    Scale.MINOR: (0, 2, 3, 5, 7, 8, 10),
    Scale.PENTATONIC: (0, 2, 4, 7, 9),
}


@dataclass(frozen=True)
class Tonality:
    scale: Scale
    root: int  # pitch class 0-11

    def __post_init__(self):
        if not 0 <= self.root <= 11:
            raise ValueError(f"tonality root must be a pitch class 0-11, got {self.root}")


class ChordQuality(enum.Enum):
    MAJ = "maj"
    MIN = "min"


@dataclass(frozen=True)
class Chord:
    root: int  # pitch class 0-11
    quality: ChordQuality

    def symbol(self) -> str:
        names = ("C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B")
        return names[self.root] + ("m" if self.quality is ChordQuality.MIN else "")


class Cadence(enum.Enum):
    NONE = "none"
    HALF = "half"
    AUTHENTIC = "authentic"


@dataclass(frozen=True)
class RhythmToken:
    chord: Chord
    beat: int  # sixteenth position within the bar grid
    cadence: Cadence

    def __post_init__(self):
        if not 0 <= self.beat < SIXTEENTHS_PER_BAR:
            raise ValueError(f"beat must be in [0, {SIXTEENTHS_PER_BAR}), got {self.beat}")


@dataclass(frozen=True)
class RhythmSequence:
    tonality: Tonality
    tokens: tuple[RhythmToken, ...]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True, order=True)
class NoteQuadruple:
    bar: int
    position: int
    pitch: int
    duration: int

    def __post_init__(self):
        if self.bar < 0:
            raise ValueError(f"bar must be non-negative, got {self.bar}")
        if not 0 <= self.position < SIXTEENTHS_PER_BAR:
            raise ValueError(f"position must be in [0, 16), got {self.position}")
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch must be a MIDI number 0-127, got {self.pitch}")
        if self.duration < 1:
            raise ValueError(f"duration must be >= 1 sixteenth, got {self.duration}")

    def start_sixteenths(self) -> int:
        return self.bar * SIXTEENTHS_PER_BAR + self.position

    def end_sixteenths(self) -> int:
        return self.start_sixteenths() + self.duration


def tokenize_lyrics(
    text: str,
    pause_marks: frozenset[str] = DEFAULT_PAUSE_MARKS,
    final_marks: frozenset[str] = DEFAULT_FINAL_MARKS,
) -> LyricSequence:
    """One token per character, classified regular / pause / final_pause.

    Whitespace is skipped. A sequence always ends with a final_pause token:
    trailing punctuation of either set is promoted to final_pause, and text
    with no trailing punctuation gets an empty terminator token appended.
    Mid-text sentence-final marks behave as ordinary pauses.
    """
    marks = pause_marks | final_marks
    chars = [c for c in text if not c.isspace()]
    if not chars:
        raise LyricsError("empty lyric text")
    tokens: list[LyricToken] = []
    last = len(chars) - 1
    for i, ch in enumerate(chars):
        if ch in marks:
            if i == 0:
                raise LyricsError("leading punctuation", position=0)
            if tokens[-1].kind is not TokenKind.REGULAR:
                raise LyricsError("consecutive punctuation", position=i)
            kind = TokenKind.FINAL_PAUSE if i == last else TokenKind.PAUSE
            tokens.append(LyricToken(ch, kind))
        else:
            if not _is_cjk(ch):
                raise LyricsError(f"unsupported character {ch!r}", position=i)
            tokens.append(LyricToken(ch, TokenKind.REGULAR))
    if tokens[-1].kind is not TokenKind.FINAL_PAUSE:
        tokens.append(LyricToken("", TokenKind.FINAL_PAUSE))
    return LyricSequence(tuple(tokens))


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return 0x4E00 <= cp <= 0x9FFF or 0x3400 <= cp <= 0x4DBF


def assign_cadences(lyrics: LyricSequence) -> list[Cadence]:
    """regular -> none, pause -> half, final_pause -> authentic."""
    mapping = {
        TokenKind.REGULAR: Cadence.NONE,
        TokenKind.PAUSE: Cadence.HALF,
        TokenKind.FINAL_PAUSE: Cadence.AUTHENTIC,
    }
    return [mapping[t.kind] for t in lyrics.tokens]


def select_chord_progression(tonality: Tonality, n: int) -> list[Chord]:
    """Cyclic I-IV-V-I progression, one chord per cadence-delimited segment.

    Minor keys use i-iv-V-i with the harmonic-major dominant; major and
    pentatonic keys use major triads throughout.
    """
    if n < 1:
        raise ValueError(f"need at least one segment, got {n}")
    r = tonality.root
    if tonality.scale is Scale.MINOR:
        cycle = [
            Chord(r, ChordQuality.MIN),
            Chord((r + 5) % 12, ChordQuality.MIN),
            Chord((r + 7) % 12, ChordQuality.MAJ),
            Chord(r, ChordQuality.MIN),
        ]
    else:
        cycle = [
            Chord(r, ChordQuality.MAJ),
            Chord((r + 5) % 12, ChordQuality.MAJ),
            Chord((r + 7) % 12, ChordQuality.MAJ),
            Chord(r, ChordQuality.MAJ),
        ]
    return [cycle[i % 4] for i in range(n)]


def phonemize_lyrics(lyrics: LyricSequence) -> list[list[str]]:
    """Per-token phoneme lists; pause tokens map to the silence symbol.

    Silence entries are placeholders: whether a pause actually contributes
    an SP phoneme depends on its frame budget (zero-length rests vanish).
    """
    out: list[list[str]] = []
    for tok in lyrics.tokens:
        if tok.kind is TokenKind.REGULAR:
            out.append(char_to_phonemes(tok.char))
        else:
            out.append([SILENCE])
    return out


def seconds_per_sixteenth(tempo_bpm: float) -> float:
    return 60.0 / tempo_bpm / 4.0


def frames_for_sixteenths(n_sixteenths: float, tempo_bpm: float, frame_hop_ms: float) -> int:
    return round(n_sixteenths * seconds_per_sixteenth(tempo_bpm) * 1000.0 / frame_hop_ms)


def token_frame_counts(
    lyrics: LyricSequence,
    melody: list[NoteQuadruple],
    tempo_bpm: float = DEFAULT_TEMPO_BPM,
    frame_hop_ms: float = 256 / 22050 * 1000.0,
    final_rest_sixteenths: int = DEFAULT_FINAL_REST_SIXTEENTHS,
) -> list[int]:
    """Frame budget per lyric token.

    Regular tokens get their note duration in frames (rounded per note).
    Pause tokens get the rest between the surrounding notes; the final pause
    gets a fixed tail rest. A pause whose gap is zero owns zero frames.
    """
    regular = lyrics.regular_indices()
    if len(melody) != len(regular):
        raise AlignmentError(
            f"melody has {len(melody)} notes for {len(regular)} regular tokens"
        )
    note_at = dict(zip(regular, range(len(melody))))
    counts: list[int] = []
    for i, tok in enumerate(lyrics.tokens):
        if tok.kind is TokenKind.REGULAR:
            note = melody[note_at[i]]
            counts.append(frames_for_sixteenths(note.duration, tempo_bpm, frame_hop_ms))
        elif tok.kind is TokenKind.FINAL_PAUSE:
            counts.append(frames_for_sixteenths(final_rest_sixteenths, tempo_bpm, frame_hop_ms))
        else:
            j = note_at.get(_next_regular(lyrics, i))
            prev = note_at.get(_prev_regular(lyrics, i))
            if j is None or prev is None:
                counts.append(0)
                continue
            gap = melody[j].start_sixteenths() - melody[prev].end_sixteenths()
            counts.append(frames_for_sixteenths(max(gap, 0), tempo_bpm, frame_hop_ms))
    return counts


def _next_regular(lyrics: LyricSequence, i: int) -> int | None:
    for j in range(i + 1, len(lyrics.tokens)):
        if lyrics.tokens[j].kind is TokenKind.REGULAR:
            return j
    return None


def _prev_regular(lyrics: LyricSequence, i: int) -> int | None:
    for j in range(i - 1, -1, -1):
        if lyrics.tokens[j].kind is TokenKind.REGULAR:
            return j
    return None


def config_phonemes(
    lyrics: LyricSequence,
    token_frames: list[int],
) -> tuple[list[str], list[int]]:
    """Flatten per-token phonemes, dropping zero-frame pause placeholders.

    Returns (flat phoneme list, owning token index per phoneme).
    """
    per_token = phonemize_lyrics(lyrics)
    flat: list[str] = []
    owner: list[int] = []
    for i, (tok, phs) in enumerate(zip(lyrics.tokens, per_token)):
        if tok.kind is not TokenKind.REGULAR and token_frames[i] == 0:
            continue
        flat.extend(phs)
        owner.extend([i] * len(phs))
    return flat, owner


@dataclass(frozen=True)
class SingingConfig:
    """The user-editable contract between the melody and voice stages."""

    phonemes: tuple[str, ...]
    phoneme_durations: tuple[int, ...]
    notes: tuple[NoteQuadruple, ...]
    f0: tuple[float, ...]
    frame_hop_ms: float
    tempo_bpm: float = DEFAULT_TEMPO_BPM

    @property
    def total_frames(self) -> int:
        return sum(self.phoneme_durations)

    def to_json_bytes(self) -> bytes:
        doc = {
            "phonemes": list(self.phonemes),
            "phoneme_durations": list(self.phoneme_durations),
            "notes": [[n.bar, n.position, n.pitch, n.duration] for n in self.notes],
            "f0": [float(v) for v in self.f0],
            "frame_hop_ms": float(self.frame_hop_ms),
            "tempo_bpm": float(self.tempo_bpm),
        }
        return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")

    @classmethod
    def from_json_bytes(cls, data: bytes) -> "SingingConfig":
        try:
            doc = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigValidationError(f"config is not valid JSON: {exc}") from None
        required = ["phonemes", "phoneme_durations", "notes", "f0", "frame_hop_ms"]
        for key in required:
            if key not in doc:
                raise ConfigValidationError(f"config missing key {key!r}")
        notes = tuple(NoteQuadruple(*[int(v) for v in row]) for row in doc["notes"])
        return cls(
            phonemes=tuple(str(p) for p in doc["phonemes"]),
            phoneme_durations=tuple(int(d) for d in doc["phoneme_durations"]),
            notes=notes,
            f0=tuple(float(v) for v in doc["f0"]),
            frame_hop_ms=float(doc["frame_hop_ms"]),
            tempo_bpm=float(doc.get("tempo_bpm", DEFAULT_TEMPO_BPM)),
        )


def validate_melody(
    melody: list[NoteQuadruple],
    pitch_range: tuple[int, int] = (PITCH_MIN, PITCH_MAX),
) -> None:
    lo, hi = pitch_range
    prev_key = None
    for n in melody:
        if not lo <= n.pitch <= hi:
            raise ValueError(f"pitch {n.pitch} outside singer range [{lo}, {hi}]")
        key = (n.bar, n.position)
        if prev_key is not None and key < prev_key:
            raise ValueError(f"melody not sorted at bar {n.bar} position {n.position}")
        prev_key = key


def build_singing_config(
    lyrics: LyricSequence,
    melody: list[NoteQuadruple],
    durations: list[int],
    f0: list[float],
    frame_hop_ms: float,
    tempo_bpm: float = DEFAULT_TEMPO_BPM,
    final_rest_sixteenths: int = DEFAULT_FINAL_REST_SIXTEENTHS,
) -> SingingConfig:
    """Assemble and validate a singing config.

    ``durations`` holds one frame count per phoneme (silences included);
    each lyric token's phoneme frames must sum to that token's note or
    rest frames exactly, and ``len(f0)`` must equal the frame total.
    """
    validate_melody(melody)
    budget = token_frame_counts(
        lyrics, melody, tempo_bpm, frame_hop_ms, final_rest_sixteenths
    )
    phonemes, owner = config_phonemes(lyrics, budget)
    if len(durations) != len(phonemes):
        raise AlignmentError(
            f"{len(durations)} durations for {len(phonemes)} phonemes"
        )
    per_token: dict[int, int] = {}
    for tok_idx, dur in zip(owner, durations):
        if dur < 1:
            raise AlignmentError("phoneme duration must be >= 1 frame", token_index=tok_idx)
        per_token[tok_idx] = per_token.get(tok_idx, 0) + dur
    for tok_idx, total in per_token.items():
        if total != budget[tok_idx]:
            raise AlignmentError(
                f"phoneme frames {total} != note frames {budget[tok_idx]}",
                token_index=tok_idx,
            )
    total = sum(durations)
    if len(f0) != total:
        raise ConfigValidationError(
            f"sum(phoneme_durations)={total} but len(f0)={len(f0)}"
        )
    _validate_f0_values(f0)
    return SingingConfig(
        phonemes=tuple(phonemes),
        phoneme_durations=tuple(int(d) for d in durations),
        notes=tuple(melody),
        f0=tuple(float(v) for v in f0),
        frame_hop_ms=float(frame_hop_ms),
        tempo_bpm=float(tempo_bpm),
    )


def _validate_f0_values(f0) -> None:
    for i, v in enumerate(f0):
        if v != 0.0 and not (F0_MIN_HZ <= v <= F0_MAX_HZ):
            raise ConfigValidationError(
                f"f0[{i}]={v} is neither 0 (unvoiced) nor within "
                f"[{F0_MIN_HZ}, {F0_MAX_HZ}] Hz"
            )


def validate_config_against_lyrics(
    config: SingingConfig,
    lyrics: LyricSequence,
    final_rest_sixteenths: int = DEFAULT_FINAL_REST_SIXTEENTHS,
) -> list[int]:
    """Check a (possibly user-edited) config against its lyrics.

    Returns the owning lyric-token index per phoneme. Raises
    ConfigValidationError / AlignmentError naming the violated invariant.
    """
    validate_melody(list(config.notes))
    budget = token_frame_counts(
        lyrics, list(config.notes), config.tempo_bpm,
        config.frame_hop_ms, final_rest_sixteenths,
    )
    phonemes, owner = config_phonemes(lyrics, budget)
    if list(config.phonemes) != phonemes:
        raise ConfigValidationError(
            "config phonemes do not match the phonemization of the lyrics"
        )
    per_token: dict[int, int] = {}
    for tok_idx, dur in zip(owner, config.phoneme_durations):
        if dur < 1:
            raise AlignmentError("phoneme duration must be >= 1 frame", token_index=tok_idx)
        per_token[tok_idx] = per_token.get(tok_idx, 0) + dur
    for tok_idx, tot in per_token.items():
        if tot != budget[tok_idx]:
            raise AlignmentError(
                f"phoneme frames {tot} != note frames {budget[tok_idx]}",
                token_index=tok_idx,
            )
    if len(config.f0) != config.total_frames:
        raise ConfigValidationError(
            f"sum(phoneme_durations)={config.total_frames} but len(f0)={len(config.f0)}"
        )
    _validate_f0_values(config.f0)
    return owner


def largest_remainder_round(weights: list[float], total: int, minimum: int = 1) -> list[int]:
    """Integer split of ``total`` proportional to ``weights``.

    Every entry gets at least ``minimum`` (requires total >= len*minimum);
    remainders are assigned largest-first with index as tiebreak.
    """
    n = len(weights)
    if n == 0:
        raise ValueError("empty weights")
    if total < n * minimum:
        raise ValueError(f"cannot split {total} frames over {n} phonemes")
    safe = [max(float(w), 1e-9) for w in weights]
    scale = (total - n * minimum) / sum(safe)
    raw = [minimum + w * scale for w in safe]
    base = [int(x) for x in raw]
    short = total - sum(base)
    order = sorted(range(n), key=lambda i: (base[i] - raw[i], i))
    out = list(base)
    for i in order[:short]:
        out[i] += 1
    return out


def midi_to_hz(pitch: float) -> float:
    return 440.0 * 2.0 ** ((pitch - 69) / 12.0)


def hz_to_midi(hz: float) -> float:
    return 69.0 + 12.0 * math.log2(hz / 440.0)
