"""Mandarin pinyin segmentation into initial/final phoneme symbols.

The initial and final inventories ship as a data file; ü is written ``v``
(finals ``v``, ``van``, ``ve``, ``vn``), and ``y``/``w`` are treated as
initials, so every syllable maps to one or two symbols.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from .errors import PinyinError

SILENCE = "SP"


@lru_cache(maxsize=1)
def phoneme_table() -> tuple[tuple[str, ...], tuple[str, ...]]:
    """(initials, finals) from the packaged table."""
    raw = resources.files("cisynth.data").joinpath("pinyin_phonemes.json").read_text("utf-8")
    table = json.loads(raw)
    return tuple(table["initials"]), tuple(table["finals"])


@lru_cache(maxsize=1)
def char_lexicon() -> dict[str, tuple[str, int]]:
    """Character -> (toneless pinyin, tone class 1-4)."""
    raw = resources.files("cisynth.data").joinpath("char_lexicon.json").read_text("utf-8")
    return {ch: (py, int(tone)) for ch, (py, tone) in json.loads(raw).items()}


def phoneme_inventory() -> list[str]:
    """All symbols a singing config may contain, silence included."""
    initials, finals = phoneme_table()
    return list(initials) + list(finals) + [SILENCE]


def pinyin_to_phonemes(syllable: str) -> list[str]:
    """Split one toneless pinyin syllable into [initial, final] or [final].

    Raises PinyinError for anything that does not segment cleanly.
    """
    initials, finals = phoneme_table()
    s = syllable.strip().lower()
    s = "".join(ch for ch in s if not ch.isdigit())
    s = s.replace("ü", "v").replace("u:", "v")
    if not s:
        raise PinyinError("empty pinyin syllable")

    # longest-prefix initial match (zh/ch/sh before z/c/s)
    initial = ""
    for cand in sorted(initials, key=len, reverse=True):
        if s.startswith(cand) and len(s) > len(cand):
            initial = cand
            break

    final = s[len(initial):] if initial else s
    if initial in ("j", "q", "x", "y") and final.startswith("u"):
        # orthographic u after j/q/x/y denotes ü
        final = "v" + final[1:]
    if final not in finals:
        raise PinyinError(f"unknown pinyin syllable: {syllable!r}")
    return [initial, final] if initial else [final]


def char_to_phonemes(char: str) -> list[str]:
    """Phonemes for one lexicon character."""
    lex = char_lexicon()
    if char not in lex:
        raise PinyinError(f"character {char!r} not in lexicon")
    return pinyin_to_phonemes(lex[char][0])


def char_tone(char: str) -> int:
    lex = char_lexicon()
    if char not in lex:
        raise PinyinError(f"character {char!r} not in lexicon")
    return lex[char][1]
