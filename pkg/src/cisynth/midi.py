"""Standard MIDI File writing and reading on the sixteenth-note grid.

Writes format 0, one track, PPQ 480, with tempo and 4/4 time-signature
meta events. Reading accepts format 0/1 at any PPQ and rescales ticks to
the sixteenth grid with nearest rounding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import MidiError
from .symbolic import PPQ, SIXTEENTHS_PER_BAR, TICKS_PER_SIXTEENTH, NoteQuadruple

NOTE_VELOCITY = 96
TEMPO_MIN = 30.0
TEMPO_MAX = 300.0


@dataclass
class MidiDocument:
    """Parse result: quadruples on the sixteenth grid plus tempo."""

    notes: list[NoteQuadruple]
    tempo_bpm: float
    warnings: list[str] = field(default_factory=list)


def _vlq(value: int) -> bytes:
    if value < 0:
        raise MidiError(f"negative delta time {value}")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def notes_to_midi(melody: list[NoteQuadruple], tempo_bpm: float = 120.0) -> bytes:
    """Serialize quadruples to SMF format 0 bytes.

    Rejects overlapping notes of the same pitch and out-of-range tempo.
    """
    if not TEMPO_MIN <= tempo_bpm <= TEMPO_MAX:
        raise MidiError(f"tempo {tempo_bpm} outside [{TEMPO_MIN}, {TEMPO_MAX}] bpm")
    order = sorted(melody, key=lambda n: (n.bar, n.position, n.pitch))
    last_end: dict[int, int] = {}
    for n in order:
        start = n.start_sixteenths() * TICKS_PER_SIXTEENTH
        if n.pitch in last_end and start < last_end[n.pitch]:
            raise MidiError(
                f"overlapping notes at pitch {n.pitch} (bar {n.bar}, position {n.position})"
            )
        last_end[n.pitch] = start + n.duration * TICKS_PER_SIXTEENTH

    events: list[tuple[int, int, bytes]] = []  # (tick, order-within-tick, payload)
    for n in order:
        on = n.start_sixteenths() * TICKS_PER_SIXTEENTH
        off = on + n.duration * TICKS_PER_SIXTEENTH
        events.append((on, 1, bytes((0x90, n.pitch, NOTE_VELOCITY))))
        events.append((off, 0, bytes((0x80, n.pitch, 0))))
    events.sort(key=lambda e: (e[0], e[1]))

    usec_per_quarter = round(60_000_000 / tempo_bpm)
    track = bytearray()
    track += _vlq(0) + bytes((0xFF, 0x51, 0x03)) + usec_per_quarter.to_bytes(3, "big")
    track += _vlq(0) + bytes((0xFF, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08))
    tick = 0
    for when, _, payload in events:
        track += _vlq(when - tick) + payload
        tick = when
    track += _vlq(0) + bytes((0xFF, 0x2F, 0x00))

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, PPQ)
    return header + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)


def read_midi(data: bytes) -> MidiDocument:
    """Parse SMF format 0/1 into quadruples on the sixteenth grid.

    Unsupported events are skipped and reported in ``warnings``; structural
    damage (bad header, truncated chunk) raises MidiError.
    """
    if len(data) < 14 or data[:4] != b"MThd":
        raise MidiError("not a MIDI file (missing MThd)")
    hlen, fmt, ntrks, division = struct.unpack(">IHHH", data[4:14])
    if hlen != 6:
        raise MidiError(f"unexpected MThd length {hlen}")
    if fmt not in (0, 1):
        raise MidiError(f"unsupported MIDI format {fmt}")
    if division & 0x8000:
        raise MidiError("SMPTE time division is not supported")
    ppq = division
    if ppq == 0:
        raise MidiError("zero PPQ")

    warnings: list[str] = []
    tempo_bpm: float | None = None
    raw_notes: list[tuple[int, int, int]] = []  # (start_tick, end_tick, pitch)

    off = 14
    tracks_seen = 0
    while tracks_seen < ntrks:
        if off + 8 > len(data):
            raise MidiError("truncated file: missing track chunk")
        tag = data[off : off + 4]
        (length,) = struct.unpack(">I", data[off + 4 : off + 8])
        off += 8
        if off + length > len(data):
            raise MidiError(f"truncated track chunk (need {length} bytes)")
        chunk = data[off : off + length]
        off += length
        if tag != b"MTrk":
            warnings.append(f"skipped unknown chunk {tag!r}")
            continue
        tracks_seen += 1
        t = _parse_track(chunk, raw_notes, warnings)
        if tempo_bpm is None and t is not None:
            tempo_bpm = t
    if tempo_bpm is None:
        tempo_bpm = 120.0

    ticks_per_sixteenth = ppq / 4.0
    notes = []
    for start, end, pitch in sorted(raw_notes):
        s16 = round(start / ticks_per_sixteenth)
        d16 = max(1, round((end - start) / ticks_per_sixteenth))
        notes.append(
            NoteQuadruple(
                bar=s16 // SIXTEENTHS_PER_BAR,
                position=s16 % SIXTEENTHS_PER_BAR,
                pitch=pitch,
                duration=d16,
            )
        )
    return MidiDocument(notes=notes, tempo_bpm=tempo_bpm, warnings=warnings)


def _parse_track(chunk: bytes, raw_notes, warnings) -> float | None:
    pos = 0
    tick = 0
    status = 0
    tempo_bpm = None
    open_notes: dict[int, list[int]] = {}

    def read_vlq() -> int:
        nonlocal pos
        value = 0
        while True:
            if pos >= len(chunk):
                raise MidiError("truncated track: unterminated delta time")
            b = chunk[pos]
            pos += 1
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value

    while pos < len(chunk):
        tick += read_vlq()
        if pos >= len(chunk):
            raise MidiError("truncated track: event after delta time missing")
        b = chunk[pos]
        if b & 0x80:
            status = b
            pos += 1
        elif status == 0:
            raise MidiError("running status with no prior status byte")
        kind = status & 0xF0

        if status == 0xFF:
            meta = chunk[pos]
            pos += 1
            length = _read_vlq_at(chunk, pos)
            pos = length[1]
            payload = chunk[pos : pos + length[0]]
            pos += length[0]
            if meta == 0x51 and len(payload) == 3:
                usec = int.from_bytes(payload, "big")
                if usec > 0 and tempo_bpm is None:
                    tempo_bpm = 60_000_000 / usec
            elif meta == 0x2F:
                break
            # other meta events carry no note information
        elif status in (0xF0, 0xF7):
            length = _read_vlq_at(chunk, pos)
            pos = length[1] + length[0]
            warnings.append("skipped sysex event")
        elif kind in (0x80, 0x90):
            if pos + 2 > len(chunk):
                raise MidiError("truncated note event")
            pitch, velocity = chunk[pos], chunk[pos + 1]
            pos += 2
            if kind == 0x90 and velocity > 0:
                open_notes.setdefault(pitch, []).append(tick)
            else:
                starts = open_notes.get(pitch)
                if starts:
                    start = starts.pop(0)
                    if tick > start:
                        raw_notes.append((start, tick, pitch))
                else:
                    warnings.append(f"note-off without note-on (pitch {pitch})")
        elif kind in (0xA0, 0xB0, 0xE0):
            pos += 2
            warnings.append(f"skipped event 0x{status:02x}")
        elif kind in (0xC0, 0xD0):
            pos += 1
            warnings.append(f"skipped event 0x{status:02x}")
        else:
            raise MidiError(f"unrecognized status byte 0x{status:02x}")

    for pitch, starts in open_notes.items():
        for _ in starts:
            warnings.append(f"unterminated note (pitch {pitch})")
    return tempo_bpm


def _read_vlq_at(chunk: bytes, pos: int) -> tuple[int, int]:
    value = 0
    while True:
        if pos >= len(chunk):
            raise MidiError("truncated track: unterminated length field")
        b = chunk[pos]
        pos += 1
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, pos
