import struct

import numpy as np
import pytest

from cisynth.errors import MidiError
from cisynth.midi import MidiDocument, notes_to_midi, read_midi
from cisynth.symbolic import NoteQuadruple, PITCH_MAX, PITCH_MIN


def random_melody(rng: np.random.Generator, max_notes: int = 24) -> list[NoteQuadruple]:
    notes = []
    cursor = 0
    for _ in range(int(rng.integers(1, max_notes + 1))):
        cursor += int(rng.integers(0, 4))
        duration = int(rng.integers(1, 17))
        pitch = int(rng.integers(PITCH_MIN, PITCH_MAX + 1))
        notes.append(NoteQuadruple(cursor // 16, cursor % 16, pitch, duration))
        cursor += duration
    return notes


class TestWrite:
    def test_single_note_ticks(self):
        data = notes_to_midi([NoteQuadruple(0, 0, 60, 4)], 120.0)
        assert data[:4] == b"MThd"
        _, fmt, ntrks, ppq = struct.unpack(">IHHH", data[4:14])
        assert (fmt, ntrks, ppq) == (0, 1, 480)
        # tempo meta 500000 us/quarter
        assert bytes((0xFF, 0x51, 0x03)) + (500000).to_bytes(3, "big") in data
        doc = read_midi(data)
        assert doc.notes == [NoteQuadruple(0, 0, 60, 4)]

    def test_bar_offset_ticks(self):
        data = notes_to_midi([NoteQuadruple(1, 0, 62, 16)], 120.0)
        track = data[22:]
        # note-on at tick 1920 (VLQ 0x8F 0x00), note-off 1920 ticks later
        assert bytes((0x8F, 0x00, 0x90, 62)) in track
        assert bytes((0x8F, 0x00, 0x80, 62)) in track
        doc = read_midi(data)
        assert doc.notes[0].bar == 1 and doc.notes[0].duration == 16

    def test_empty_melody_has_meta_only(self):
        data = notes_to_midi([], 120.0)
        doc = read_midi(data)
        assert doc.notes == []
        assert doc.tempo_bpm == pytest.approx(120.0)

    def test_overlapping_same_pitch_rejected(self):
        notes = [NoteQuadruple(0, 0, 60, 8), NoteQuadruple(0, 4, 60, 4)]
        with pytest.raises(MidiError):
            notes_to_midi(notes, 120.0)

    def test_tempo_bounds(self):
        with pytest.raises(MidiError):
            notes_to_midi([], 20.0)
        with pytest.raises(MidiError):
            notes_to_midi([], 400.0)


class TestRead:
    def test_roundtrip_randomized(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            melody = random_melody(rng)
            doc = read_midi(notes_to_midi(melody, 120.0))
            assert doc.notes == melody
            assert doc.warnings == []

    def test_other_ppq_rescaled(self):
        # PPQ 960 file with a quarter note at tick 0
        ppq = 960
        track = bytearray()
        track += bytes((0x00, 0xFF, 0x51, 0x03)) + (500000).to_bytes(3, "big")
        track += bytes((0x00, 0x90, 64, 90))
        track += bytes((0x87, 0x40, 0x80, 64, 0))  # delta 960
        track += bytes((0x00, 0xFF, 0x2F, 0x00))
        data = (
            b"MThd" + struct.pack(">IHHH", 6, 0, 1, ppq)
            + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)
        )
        doc = read_midi(data)
        assert doc.notes == [NoteQuadruple(0, 0, 64, 4)]

    def test_truncated_file(self):
        data = notes_to_midi([NoteQuadruple(0, 0, 60, 4)], 120.0)
        with pytest.raises(MidiError):
            read_midi(data[:20])

    def test_not_midi(self):
        with pytest.raises(MidiError):
            read_midi(b"RIFFxxxx")

    def test_unknown_events_skipped_with_warning(self):
        track = bytearray()
        track += bytes((0x00, 0xB0, 0x07, 0x64))  # control change
        track += bytes((0x00, 0x90, 60, 90))
        track += bytes((0x60, 0x80, 60, 0))
        track += bytes((0x00, 0xFF, 0x2F, 0x00))
        data = (
            b"MThd" + struct.pack(">IHHH", 6, 0, 1, 96)
            + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)
        )
        doc = read_midi(data)
        assert len(doc.notes) == 1
        assert any("0xb0" in w for w in doc.warnings)

    def test_running_status(self):
        track = bytearray()
        track += bytes((0x00, 0x90, 60, 90))
        track += bytes((0x30, 62, 90))  # running status note-on
        track += bytes((0x30, 60, 0))  # running status note-off (vel 0)
        track += bytes((0x30, 62, 0))
        track += bytes((0x00, 0xFF, 0x2F, 0x00))
        data = (
            b"MThd" + struct.pack(">IHHH", 6, 0, 1, 96)
            + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)
        )
        doc = read_midi(data)
        assert len(doc.notes) == 2

    def test_format_2_rejected(self):
        data = b"MThd" + struct.pack(">IHHH", 6, 2, 1, 480)
        with pytest.raises(MidiError):
            read_midi(data)

    def test_document_dataclass(self):
        doc = MidiDocument(notes=[], tempo_bpm=100.0)
        assert doc.warnings == []
