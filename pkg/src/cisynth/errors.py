"""Exception types shared across the package."""


class CisynthError(Exception):
    """Base class for all package errors."""


class LyricsError(CisynthError, ValueError):
    """Invalid lyric text (empty, bad punctuation placement, non-CJK char)."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (position {position})"
        super().__init__(message)


class PinyinError(CisynthError, ValueError):
    """Unknown pinyin syllable or character without a lexicon entry."""


class MidiError(CisynthError, ValueError):
    """Malformed MIDI data or invalid note layout."""


class TextGridError(CisynthError, ValueError):
    """Malformed TextGrid text; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AlignmentError(CisynthError, ValueError):
    """Phoneme/note frame budgets disagree; carries the lyric token index."""

    def __init__(self, message: str, token_index: int | None = None):
        self.token_index = token_index
        if token_index is not None:
            message = f"token {token_index}: {message}"
        super().__init__(message)


class VocabularyError(CisynthError, ValueError):
    """Symbol outside a model vocabulary."""


class ConfigValidationError(CisynthError, ValueError):
    """A singing config violates one of its invariants; names the invariant."""


class TrainingDiverged(CisynthError, RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, step: int, learning_rate: float, grad_norm: float):
        self.step = step
        self.learning_rate = learning_rate
        self.grad_norm = grad_norm
        super().__init__(
            f"non-finite loss at step {step} "
            f"(lr={learning_rate:g}, grad_norm={grad_norm:g})"
        )
