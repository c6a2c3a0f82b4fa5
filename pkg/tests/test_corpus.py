from pathlib import Path

import numpy as np
import pytest

from conftest import fft_peak_frequency
from cisynth.audio import DEFAULT_AUDIO, load_wav
from cisynth.corpus import (
    DatasetStats,
    Manifest,
    build_entry,
    compute_stats,
    derive_melody,
    derive_rhythm,
    derive_tonality,
    generate_synthetic_corpus,
    ground_truth_durations,
    ground_truth_f0,
    load_manifest,
    midi_name,
    validate_entry,
)
from cisynth.errors import CisynthError
from cisynth.midi import read_midi
from cisynth.symbolic import (
    Cadence,
    PITCH_MAX,
    PITCH_MIN,
    Scale,
    TokenKind,
    midi_to_hz,
    token_frame_counts,
    tokenize_lyrics,
)


class TestDerivations:
    def test_tonality_is_function_of_lyrics(self):
        lyrics = tokenize_lyrics("明月几时有。")
        assert derive_tonality(lyrics) == derive_tonality(lyrics)
        assert derive_tonality(lyrics).scale is Scale.PENTATONIC

    def test_rhythm_one_token_per_lyric_token(self):
        lyrics = tokenize_lyrics("明月，青天。")
        rhythm = derive_rhythm(lyrics)
        assert len(rhythm.tokens) == len(lyrics)
        cadences = [t.cadence for t in rhythm.tokens]
        assert cadences.count(Cadence.HALF) == 1
        assert cadences.count(Cadence.AUTHENTIC) == 1

    def test_melody_recovers_note_per_regular_token(self):
        lyrics = tokenize_lyrics("明月几时有，把酒问青天。")
        rhythm = derive_rhythm(lyrics)
        melody = derive_melody(rhythm)
        assert len(melody) == len(lyrics.regular_indices())
        for n in melody:
            assert PITCH_MIN <= n.pitch <= PITCH_MAX

    def test_melody_sorted_and_consistent_with_beats(self):
        lyrics = tokenize_lyrics("水调歌头，明月几时有。")
        rhythm = derive_rhythm(lyrics)
        melody = derive_melody(rhythm)
        starts = [n.start_sixteenths() for n in melody]
        assert starts == sorted(starts)
        note_beats = [t.beat for t, c in zip(rhythm.tokens, rhythm.tokens)
                      if t.cadence is Cadence.NONE]
        assert [n.position for n in melody] == [b for b in note_beats]

    def test_f0_follows_notes_with_vibrato(self):
        lyrics = tokenize_lyrics("天。")
        melody = derive_melody(derive_rhythm(lyrics))
        frames = token_frame_counts(lyrics, melody, 120.0, DEFAULT_AUDIO.frame_hop_ms)
        f0 = ground_truth_f0(lyrics, melody, frames)
        note_hz = midi_to_hz(melody[0].pitch)
        voiced = f0[f0 > 0]
        assert np.all(np.abs(np.log(voiced / note_hz)) < 0.03)  # 20 cents + margin
        assert np.all(f0[frames[0]:] == 0.0)  # final rest silent


class TestGeneratedEntries:
    def test_determinism_bytewise(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        p1 = generate_synthetic_corpus(99, 3, d1)
        p2 = generate_synthetic_corpus(99, 3, d2)
        assert p1.read_bytes() == p2.read_bytes()
        for f1 in sorted(d1.iterdir()):
            f2 = d2 / f1.name
            assert f1.read_bytes() == f2.read_bytes(), f1.name

    def test_different_seeds_differ(self, tmp_path):
        p1 = generate_synthetic_corpus(1, 2, tmp_path / "a")
        p2 = generate_synthetic_corpus(2, 2, tmp_path / "b")
        assert p1.read_bytes() != p2.read_bytes()

    def test_every_entry_validates(self, small_corpus):
        for entry in small_corpus.entries:
            validate_entry(small_corpus, entry)

    def test_zero_entries_rejected(self, tmp_path):
        with pytest.raises(CisynthError):
            generate_synthetic_corpus(0, 0, tmp_path)

    def test_fft_peak_matches_annotated_note(self, small_corpus):
        entry = small_corpus.entries[0]
        audio_path, _, midi_path = small_corpus.entry_paths(entry)
        wav, sr = load_wav(audio_path)
        notes = read_midi(midi_path.read_bytes()).notes
        lyrics = tokenize_lyrics(entry.lyrics_text)
        frames = token_frame_counts(
            lyrics, notes, entry.tempo_bpm, DEFAULT_AUDIO.frame_hop_ms
        )
        # locate the longest note's frame span for a clean FFT window
        spans = []
        t = 0
        j = 0
        for tok, n in zip(lyrics.tokens, frames):
            if n == 0:
                continue
            if tok.kind is TokenKind.REGULAR:
                spans.append((n, t, notes[j]))
                j += 1
            t += n
        dur_frames, start, note = max(spans)
        seg = wav[start * DEFAULT_AUDIO.hop : (start + dur_frames) * DEFAULT_AUDIO.hop]
        peak = fft_peak_frequency(seg, sr)
        expected = midi_to_hz(note.pitch)
        assert abs(peak - expected) / expected < 0.03

    def test_ground_truth_durations_sum_to_budget(self, small_corpus):
        entry = small_corpus.entries[0]
        _, _, midi_path = small_corpus.entry_paths(entry)
        lyrics = tokenize_lyrics(entry.lyrics_text)
        notes = read_midi(midi_path.read_bytes()).notes
        hop_ms = DEFAULT_AUDIO.frame_hop_ms
        phonemes, durations, owner = ground_truth_durations(
            lyrics, notes, entry.tempo_bpm, hop_ms
        )
        budget = token_frame_counts(lyrics, notes, entry.tempo_bpm, hop_ms)
        per_token: dict[int, int] = {}
        for o, d in zip(owner, durations):
            per_token[o] = per_token.get(o, 0) + d
        for tok, total in per_token.items():
            assert total == budget[tok]

    def test_manifest_roundtrip(self, small_corpus, tmp_path):
        path = generate_synthetic_corpus(5, 2, tmp_path)
        m = load_manifest(path)
        assert len(m.entries) == 2
        assert m.seed == 5
        for e in m.entries:
            audio, tg, mid = m.entry_paths(e)
            assert audio.exists() and tg.exists() and mid.exists()


class TestStats:
    def test_empty_manifest(self, tmp_path):
        stats = compute_stats(Manifest(seed=0, sample_rate=22050, entries=[], root=tmp_path))
        assert stats.total_hours == 0.0
        assert stats.phoneme_counts == {} and stats.pitch_counts == {}
        assert stats.pitch_range is None

    def test_hours_arithmetic(self):
        assert 36.0 / 3600.0 == pytest.approx(0.01)

    def test_hours_match_durations_within_1ms(self, small_corpus):
        stats = compute_stats(small_corpus)
        expected = sum(e.duration_seconds for e in small_corpus.entries)
        assert abs(stats.total_hours * 3600 - expected) < 1e-3 * len(small_corpus.entries)

    def test_exclusion_threshold_19_vs_20(self, tmp_path):
        # "天" is the only source of phonemes t/ian in this corpus
        def corpus_with(n: int, root: Path) -> Manifest:
            root.mkdir(parents=True, exist_ok=True)
            entries = [
                build_entry("天明月。", root, f"e{i:03d}", singer="s0") for i in range(n)
            ]
            return Manifest(seed=0, sample_rate=22050, entries=entries, root=root)

        st19 = compute_stats(corpus_with(19, tmp_path / "c19"))
        st20 = compute_stats(corpus_with(20, tmp_path / "c20"))
        assert st19.phoneme_counts["t"] == 19
        assert "t" in st19.phoneme_excluded
        assert st20.phoneme_counts["t"] == 20
        assert "t" not in st20.phoneme_excluded
        # same rule for pitches
        pitch = next(iter(st20.pitch_counts))
        if st19.pitch_counts[pitch] < 20:
            assert pitch in st19.pitch_excluded

    def test_alignment_flag_and_range(self, small_corpus):
        stats = compute_stats(small_corpus)
        assert stats.aligned
        lo, hi = stats.pitch_range
        assert PITCH_MIN <= lo <= hi <= PITCH_MAX

    def test_table_rendering(self, small_corpus):
        stats = compute_stats(small_corpus)
        table = stats.to_table()
        for key in ("Hours", "Singers", "Phoneme", "Pitch", "MIDI", "Annotation", "Alignment"):
            assert key in table
        doc = stats.to_dict()
        assert doc["alignment"] is True
        assert isinstance(doc["phoneme_missing"], list)

    def test_midi_names(self):
        assert midi_name(31) == "G1"
        assert midi_name(84) == "C6"
        assert midi_name(69) == "A4"
