import numpy as np
import pytest
import torch

from cisynth import pipeline, seq2seq as s2s
from cisynth.audio import DEFAULT_AUDIO
from cisynth.corpus import derive_melody, derive_rhythm
from cisynth.errors import CisynthError
from cisynth.symbolic import (
    NoteQuadruple,
    build_singing_config,
    config_phonemes,
    midi_to_hz,
    token_frame_counts,
    tokenize_lyrics,
    validate_config_against_lyrics,
)


def demo_config(pitches=(60, 64)):
    lyrics = tokenize_lyrics("明月。")
    melody = [NoteQuadruple(0, 0, pitches[0], 4), NoteQuadruple(0, 4, pitches[1], 4)]
    hop_ms = DEFAULT_AUDIO.frame_hop_ms
    budget = token_frame_counts(lyrics, melody, 120.0, hop_ms)
    phonemes, owner = config_phonemes(lyrics, budget)
    durations = []
    for tok_idx in sorted(set(owner)):
        n = budget[tok_idx]
        k = owner.count(tok_idx)
        if k == 2:
            durations += [10, n - 10]
        else:
            durations += [n]
    f0 = []
    note_j = 0
    for tok_idx in sorted(set(owner)):
        n = budget[tok_idx]
        if tok_idx in lyrics.regular_indices():
            hz = midi_to_hz(melody[note_j].pitch)
            # contour deliberately off the note pitch by +3%
            f0 += list(np.full(n, hz * 1.03))
            note_j += 1
        else:
            f0 += [0.0] * n
    cfg = build_singing_config(lyrics, melody, durations, f0, hop_ms)
    return lyrics, cfg


class TestAnchor:
    def test_logmean_equals_note_after_anchor(self):
        lyrics, cfg = demo_config()
        owner = validate_config_against_lyrics(cfg, lyrics)
        anchored = pipeline.anchor_f0_to_notes(cfg, lyrics, owner)
        bounds = np.concatenate([[0], np.cumsum(cfg.phoneme_durations)])
        regular = lyrics.regular_indices()
        note_j = 0
        seen = set()
        for p, tok in enumerate(owner):
            if tok in seen or tok not in regular:
                continue
            seen.add(tok)
            frames = anchored[bounds[p] : bounds[p] + 1]  # first frame of token
            note_hz = midi_to_hz(cfg.notes[note_j].pitch)
            assert frames[0] == pytest.approx(note_hz, rel=1e-6)
            note_j += 1

    def test_semitone_edit_shifts_anchor_exactly(self):
        lyrics, cfg = demo_config()
        owner = validate_config_against_lyrics(cfg, lyrics)
        base = pipeline.anchor_f0_to_notes(cfg, lyrics, owner)

        edited_notes = list(cfg.notes)
        edited_notes[0] = NoteQuadruple(
            edited_notes[0].bar, edited_notes[0].position,
            edited_notes[0].pitch + 1, edited_notes[0].duration,
        )
        edited = build_singing_config(
            lyrics, edited_notes, list(cfg.phoneme_durations), list(cfg.f0),
            cfg.frame_hop_ms, cfg.tempo_bpm,
        )
        shifted = pipeline.anchor_f0_to_notes(edited, lyrics, owner)
        n0 = cfg.phoneme_durations[0] + cfg.phoneme_durations[1]
        ratio = shifted[:n0] / base[:n0]
        np.testing.assert_allclose(ratio, 2 ** (1 / 12), rtol=1e-9)
        # other token untouched
        np.testing.assert_allclose(shifted[n0:], base[n0:], rtol=1e-12)

    def test_unvoiced_frames_stay_silent(self):
        lyrics, cfg = demo_config()
        owner = validate_config_against_lyrics(cfg, lyrics)
        anchored = pipeline.anchor_f0_to_notes(cfg, lyrics, owner)
        assert np.all(anchored[np.asarray(cfg.f0) == 0] == 0)


class TestRetiming:
    def test_sorted_melody_untouched(self):
        lyrics = tokenize_lyrics("明月。")
        melody = [NoteQuadruple(0, 0, 60, 4), NoteQuadruple(0, 4, 62, 2)]
        assert pipeline.ensure_sorted_melody(lyrics, melody) is melody

    def test_unsorted_melody_retimed(self):
        lyrics = tokenize_lyrics("明月。")
        melody = [NoteQuadruple(2, 0, 60, 4), NoteQuadruple(0, 4, 62, 2)]
        fixed = pipeline.ensure_sorted_melody(lyrics, melody)
        assert [n.pitch for n in fixed] == [60, 62]
        starts = [n.start_sixteenths() for n in fixed]
        assert starts == sorted(starts)
        assert fixed[0].start_sixteenths() == 0
        assert fixed[1].start_sixteenths() == fixed[0].end_sixteenths()


class TestWaveforms:
    def test_melody_waveform_length_matches_frames(self):
        lyrics = tokenize_lyrics("明月，青天。")
        melody = derive_melody(derive_rhythm(lyrics))
        frames = token_frame_counts(lyrics, melody, 120.0, DEFAULT_AUDIO.frame_hop_ms)
        wav = pipeline.melody_waveform(lyrics, melody, 120.0)
        assert len(wav) == sum(frames) * DEFAULT_AUDIO.hop

    def test_accompaniment_waveform_same_grid(self):
        lyrics = tokenize_lyrics("明月，青天。")
        melody = derive_melody(derive_rhythm(lyrics))
        mel_wav = pipeline.melody_waveform(lyrics, melody, 120.0)
        acc_wav = pipeline.accompaniment_waveform(lyrics, melody, 120.0)
        assert len(mel_wav) == len(acc_wav)

    def test_accompaniment_is_lower(self):
        lyrics = tokenize_lyrics("天。")
        melody = derive_melody(derive_rhythm(lyrics))
        from conftest import fft_peak_frequency

        mel_wav = pipeline.melody_waveform(lyrics, melody, 120.0)
        acc_wav = pipeline.accompaniment_waveform(lyrics, melody, 120.0)
        f_mel = fft_peak_frequency(mel_wav)
        f_acc = fft_peak_frequency(acc_wav)
        assert f_acc < f_mel

    def test_broadcast_notes_covers_rests(self):
        lyrics = tokenize_lyrics("明月，青天。")
        melody = derive_melody(derive_rhythm(lyrics))
        budget = token_frame_counts(lyrics, melody, 120.0, DEFAULT_AUDIO.frame_hop_ms)
        _, owner = config_phonemes(lyrics, budget)
        pitch, dur = pipeline.broadcast_notes(lyrics, melody, owner)
        assert len(pitch) == len(owner) == len(dur)
        regular = set(lyrics.regular_indices())
        for o, p in zip(owner, pitch):
            if o in regular:
                assert p > 0
            else:
                assert p == 0.0


class TestSeqPairs:
    def test_pairs_encode_decodably(self, small_corpus):
        lyric_v, rhythm_v, melody_v = pipeline.pipeline_vocabularies()
        pairs = pipeline.seq_training_pairs(small_corpus, "lyric2rhythm")
        assert len(pairs) == len(small_corpus.entries)
        rhythm = s2s.symbols_to_rhythm(rhythm_v.decode(list(pairs[0].target)))
        assert len(rhythm.tokens) >= 2
        pairs_m = pipeline.seq_training_pairs(small_corpus, "rhythm2melody")
        melody = s2s.symbols_to_melody(melody_v.decode(list(pairs_m[0].target)))
        assert len(melody) >= 1

    def test_unknown_stage(self, small_corpus):
        with pytest.raises(ValueError):
            pipeline.seq_training_pairs(small_corpus, "nope")


class TestSvsData:
    def test_utterance_consistent(self, small_corpus):
        utt = pipeline.svs_utterance(small_corpus, small_corpus.entries[0])
        assert sum(utt.durations) == utt.mel.shape[0] == len(utt.f0_hz)
        assert len(utt.phoneme_ids) == len(utt.durations)
        assert utt.mel.shape[1] == 80


class TestSeedDerivation:
    def test_stable_and_distinct(self):
        a = pipeline.derive_seed(7, "x")
        assert a == pipeline.derive_seed(7, "x")
        assert a != pipeline.derive_seed(7, "y")
        assert a != pipeline.derive_seed(8, "x")


class TestCheckpointLayout:
    def test_missing_checkpoints_named(self, tmp_path):
        ckpts = pipeline.StageCheckpoints.in_dir(tmp_path)
        with pytest.raises(CisynthError) as exc:
            ckpts.require(["svs", "codec"])
        assert "svs" in str(exc.value) and "codec" in str(exc.value)
