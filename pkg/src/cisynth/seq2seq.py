"""Encoder-decoder Transformers for lyric-to-rhythm and rhythm-to-melody,
with shared vocabulary handling, NLL training, and constrained decoding.

Sequences are encoded symbol-by-symbol: note quadruples become 4 consecutive
ids (bar / position / pitch / duration sub-vocabularies) and rhythm tokens
become 3 ids after a leading tonality id, so structural validity can be
enforced during decoding with field masks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import tensorio
from .errors import TrainingDiverged, VocabularyError
from .symbolic import (
    BAR_MAX,
    DURATION_MAX,
    PITCH_MAX,
    PITCH_MIN,
    SIXTEENTHS_PER_BAR,
    Cadence,
    Chord,
    ChordQuality,
    LyricSequence,
    LyricToken,
    NoteQuadruple,
    RhythmSequence,
    RhythmToken,
    Scale,
    TokenKind,
    Tonality,
)

PAD, BOS, EOS = 0, 1, 2
SPECIALS = ("<pad>", "<bos>", "<eos>")


@dataclass(frozen=True)
class FieldPattern:
    """Structural layout of a target sequence: fixed head fields, then a
    repeating cycle. Empty pattern means unconstrained."""

    head: tuple[str, ...] = ()
    cycle: tuple[str, ...] = ()

    def field_at(self, position: int) -> str | None:
        if position < len(self.head):
            return self.head[position]
        if self.cycle:
            return self.cycle[(position - len(self.head)) % len(self.cycle)]
        return None

    def at_group_boundary(self, position: int) -> bool:
        """True when a full group has just been completed at ``position``
        emitted symbols (i.e. EOS would be structurally legal here)."""
        if position < len(self.head):
            return position == 0 and not self.head
        if not self.cycle:
            return True
        return (position - len(self.head)) % len(self.cycle) == 0

    def groups_done(self, position: int) -> int:
        if position < len(self.head) or not self.cycle:
            return 0
        return (position - len(self.head)) // len(self.cycle)


class Vocabulary:
    """Symbol table with PAD/BOS/EOS and optional field structure."""

    def __init__(self, symbols: list[str], pattern: FieldPattern = FieldPattern()):
        self.symbols = list(SPECIALS) + list(symbols)
        if len(set(self.symbols)) != len(self.symbols):
            raise VocabularyError("duplicate symbols in vocabulary")
        self.index = {s: i for i, s in enumerate(self.symbols)}
        self.pattern = pattern
        self._field_ids: dict[str, list[int]] = {}
        for sym, i in self.index.items():
            f = sym.split(":", 1)[0] if ":" in sym else ""
            self._field_ids.setdefault(f, []).append(i)

    def __len__(self) -> int:
        return len(self.symbols)

    def encode(self, symbols: list[str]) -> list[int]:
        out = []
        for s in symbols:
            if s not in self.index:
                raise VocabularyError(f"symbol {s!r} not in vocabulary")
            out.append(self.index[s])
        return out

    def decode(self, ids: list[int]) -> list[str]:
        out = []
        for i in ids:
            if not 0 <= i < len(self.symbols):
                raise VocabularyError(f"id {i} out of vocabulary bounds")
            out.append(self.symbols[i])
        return out

    def field_ids(self, field_name: str) -> list[int]:
        if field_name not in self._field_ids:
            raise VocabularyError(f"no symbols for field {field_name!r}")
        return self._field_ids[field_name]

    def to_json(self) -> str:
        return json.dumps(
            {
                "symbols": self.symbols[len(SPECIALS):],
                "pattern": {"head": list(self.pattern.head), "cycle": list(self.pattern.cycle)},
            },
            ensure_ascii=False,
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        doc = json.loads(text)
        pat = FieldPattern(tuple(doc["pattern"]["head"]), tuple(doc["pattern"]["cycle"]))
        return cls(doc["symbols"], pat)


# ---------------------------------------------------------------------------
# symbol conversion


def lyric_symbols(lyrics: LyricSequence) -> list[str]:
    out = []
    for t in lyrics.tokens:
        if t.kind is TokenKind.REGULAR:
            out.append(f"C:{t.char}")
        elif t.kind is TokenKind.PAUSE:
            out.append(f"P:{t.char}")
        else:
            out.append(f"F:{t.char}")
    return out


def symbols_to_lyrics(symbols: list[str]) -> LyricSequence:
    tokens = []
    for s in symbols:
        prefix, char = s.split(":", 1)
        kind = {"C": TokenKind.REGULAR, "P": TokenKind.PAUSE, "F": TokenKind.FINAL_PAUSE}[prefix]
        tokens.append(LyricToken(char, kind))
    return LyricSequence(tuple(tokens))


def rhythm_symbols(rhythm: RhythmSequence) -> list[str]:
    out = [f"T:{rhythm.tonality.scale.value}:{rhythm.tonality.root}"]
    for t in rhythm.tokens:
        out.append(f"CH:{t.chord.root}:{t.chord.quality.value}")
        out.append(f"B:{t.beat}")
        out.append(f"CAD:{t.cadence.value}")
    return out


def symbols_to_rhythm(symbols: list[str]) -> RhythmSequence:
    if not symbols or not symbols[0].startswith("T:"):
        raise VocabularyError("rhythm sequence must begin with a tonality symbol")
    if (len(symbols) - 1) % 3 != 0:
        raise VocabularyError("rhythm symbols do not form complete (chord, beat, cadence) groups")
    _, scale, root = symbols[0].split(":")
    tonality = Tonality(Scale(scale), int(root))
    tokens = []
    for i in range(1, len(symbols), 3):
        _, ch_root, ch_quality = symbols[i].split(":")
        beat = int(symbols[i + 1].split(":")[1])
        cadence = Cadence(symbols[i + 2].split(":")[1])
        tokens.append(
            RhythmToken(Chord(int(ch_root), ChordQuality(ch_quality)), beat, cadence)
        )
    return RhythmSequence(tonality, tuple(tokens))


def melody_symbols(melody: list[NoteQuadruple]) -> list[str]:
    out = []
    for n in melody:
        out += [f"BAR:{n.bar}", f"POS:{n.position}", f"PIT:{n.pitch}", f"DUR:{n.duration}"]
    return out


def symbols_to_melody(symbols: list[str]) -> list[NoteQuadruple]:
    if len(symbols) % 4 != 0:
        raise VocabularyError("melody symbols do not form complete quadruples")
    notes = []
    for i in range(0, len(symbols), 4):
        vals = [int(s.split(":")[1]) for s in symbols[i : i + 4]]
        notes.append(NoteQuadruple(*vals))
    return notes


def build_lyric_vocabulary(chars: list[str], pause_marks, final_marks) -> Vocabulary:
    syms = [f"C:{c}" for c in sorted(chars)]
    syms += [f"P:{m}" for m in sorted(pause_marks | final_marks)]
    syms += [f"F:{m}" for m in sorted(final_marks | pause_marks)] + ["F:"]
    return Vocabulary(syms)


def build_rhythm_vocabulary() -> Vocabulary:
    syms = [f"T:{s.value}:{r}" for s in Scale for r in range(12)]
    syms += [f"CH:{r}:{q.value}" for r in range(12) for q in ChordQuality]
    syms += [f"B:{b}" for b in range(SIXTEENTHS_PER_BAR)]
    syms += [f"CAD:{c.value}" for c in Cadence]
    return Vocabulary(syms, FieldPattern(head=("T",), cycle=("CH", "B", "CAD")))


def build_melody_vocabulary() -> Vocabulary:
    syms = [f"BAR:{b}" for b in range(BAR_MAX + 1)]
    syms += [f"POS:{p}" for p in range(SIXTEENTHS_PER_BAR)]
    syms += [f"PIT:{p}" for p in range(PITCH_MIN, PITCH_MAX + 1)]
    syms += [f"DUR:{d}" for d in range(1, DURATION_MAX + 1)]
    return Vocabulary(syms, FieldPattern(cycle=("BAR", "POS", "PIT", "DUR")))


def encode_tokens(vocab: Vocabulary, symbols: list[str]) -> list[int]:
    return vocab.encode(symbols)


def decode_tokens(vocab: Vocabulary, ids: list[int]) -> list[str]:
    return vocab.decode(ids)


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class Seq2SeqConfig:
    encoder_layers: int = 4
    decoder_layers: int = 4
    attention_heads: int = 4
    hidden_units: int = 256
    ffn_units: int = 1024
    dropout: float = 0.1
    max_source_len: int = 128
    max_target_len: int = 256

    def __post_init__(self):
        if self.hidden_units % self.attention_heads != 0:
            raise ValueError("hidden_units must be divisible by attention_heads")


@dataclass(frozen=True)
class TokenizedPair:
    source: tuple[int, ...]
    target: tuple[int, ...]

    def __post_init__(self):
        if not self.source or not self.target:
            raise ValueError("source and target must be non-empty")


def sinusoidal_positions(length: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    position = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(position * div)
    pe[:, 1::2] = torch.cos(position * div[: dim - dim // 2])
    return pe.to(dtype)


class _FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(dim, hidden), nn.ReLU(), nn.Dropout(dropout), nn.Linear(hidden, dim)
        )

    def forward(self, x):
        return self.net(x)


class _EncoderLayer(nn.Module):
    def __init__(self, cfg: Seq2SeqConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.hidden_units)
        self.attn = nn.MultiheadAttention(
            cfg.hidden_units, cfg.attention_heads, dropout=cfg.dropout, batch_first=True
        )
        self.norm2 = nn.LayerNorm(cfg.hidden_units)
        self.ffn = _FeedForward(cfg.hidden_units, cfg.ffn_units, cfg.dropout)

    def forward(self, x, pad_mask):
        h = self.norm1(x)
        a, _ = self.attn(h, h, h, key_padding_mask=pad_mask, need_weights=False)
        x = x + a
        return x + self.ffn(self.norm2(x))


class _DecoderLayer(nn.Module):
    def __init__(self, cfg: Seq2SeqConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.hidden_units)
        self.self_attn = nn.MultiheadAttention(
            cfg.hidden_units, cfg.attention_heads, dropout=cfg.dropout, batch_first=True
        )
        self.norm2 = nn.LayerNorm(cfg.hidden_units)
        self.cross_attn = nn.MultiheadAttention(
            cfg.hidden_units, cfg.attention_heads, dropout=cfg.dropout, batch_first=True
        )
        self.norm3 = nn.LayerNorm(cfg.hidden_units)
        self.ffn = _FeedForward(cfg.hidden_units, cfg.ffn_units, cfg.dropout)

    def forward(self, x, memory, causal_mask, src_pad_mask, tgt_pad_mask):
        h = self.norm1(x)
        a, _ = self.self_attn(
            h, h, h, attn_mask=causal_mask, key_padding_mask=tgt_pad_mask, need_weights=False
        )
        x = x + a
        h = self.norm2(x)
        a, _ = self.cross_attn(
            h, memory, memory, key_padding_mask=src_pad_mask, need_weights=False
        )
        x = x + a
        return x + self.ffn(self.norm3(x))


class Seq2SeqModel(nn.Module):
    """Pre-norm encoder-decoder Transformer over token ids."""

    def __init__(self, config: Seq2SeqConfig, src_vocab_size: int, tgt_vocab_size: int):
        super().__init__()
        self.config = config
        self.src_vocab_size = src_vocab_size
        self.tgt_vocab_size = tgt_vocab_size
        d = config.hidden_units
        self.src_embed = nn.Embedding(src_vocab_size, d, padding_idx=PAD)
        self.tgt_embed = nn.Embedding(tgt_vocab_size, d, padding_idx=PAD)
        self.encoder = nn.ModuleList(_EncoderLayer(config) for _ in range(config.encoder_layers))
        self.enc_norm = nn.LayerNorm(d)
        self.decoder = nn.ModuleList(_DecoderLayer(config) for _ in range(config.decoder_layers))
        self.dec_norm = nn.LayerNorm(d)
        self.head = nn.Linear(d, tgt_vocab_size)
        self.scale = math.sqrt(d)

    def _positions(self, length: int, like: torch.Tensor) -> torch.Tensor:
        return sinusoidal_positions(length, self.config.hidden_units, dtype=like.dtype).to(
            like.device
        )

    def encode(self, src: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if src.shape[1] > self.config.max_source_len:
            raise ValueError(
                f"source length {src.shape[1]} exceeds max {self.config.max_source_len}"
            )
        pad_mask = src.eq(PAD)
        x = self.src_embed(src) * self.scale
        x = x + self._positions(src.shape[1], x)
        for layer in self.encoder:
            x = layer(x, pad_mask)
        return self.enc_norm(x), pad_mask

    def decode_logits(
        self, memory: torch.Tensor, src_pad_mask: torch.Tensor, tgt_in: torch.Tensor
    ) -> torch.Tensor:
        if tgt_in.shape[1] > self.config.max_target_len:
            raise ValueError(
                f"target length {tgt_in.shape[1]} exceeds max {self.config.max_target_len}"
            )
        tgt_pad_mask = tgt_in.eq(PAD)
        causal = torch.ones(
            (tgt_in.shape[1], tgt_in.shape[1]), dtype=torch.bool, device=tgt_in.device
        ).triu(1)
        x = self.tgt_embed(tgt_in) * self.scale
        x = x + self._positions(tgt_in.shape[1], x)
        for layer in self.decoder:
            x = layer(x, memory, causal, src_pad_mask, tgt_pad_mask)
        return self.head(self.dec_norm(x))

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        memory, src_pad = self.encode(src)
        return self.decode_logits(memory, src_pad, tgt_in)


def forward_probabilities(
    model: Seq2SeqModel, source_ids: list[int], target_prefix_ids: list[int]
) -> np.ndarray:
    """One probability row per target position (softmax over the vocabulary)."""
    model.eval()
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        src = torch.tensor([list(source_ids) + [EOS]], dtype=torch.long)
        tgt_in = torch.tensor([[BOS] + list(target_prefix_ids)], dtype=torch.long)
        logits = model(src, tgt_in).to(dtype)
        probs = torch.softmax(logits[0], dim=-1)
    return probs.cpu().numpy()


def sequence_nll(
    model: Seq2SeqModel, src: torch.Tensor, tgt_in: torch.Tensor, tgt_out: torch.Tensor
) -> torch.Tensor:
    """Mean negative log-likelihood per non-PAD target token."""
    logits = model(src, tgt_in)
    return nn.functional.cross_entropy(
        logits.reshape(-1, logits.shape[-1]), tgt_out.reshape(-1), ignore_index=PAD
    )


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainSettings:
    steps: int = 5000
    learning_rate: float = 5e-4
    batch_size: int = 64
    seed: int = 0
    eval_every: int = 100
    target_exact_match: float | None = None  # stop early when reached


@dataclass
class TrainResult:
    model: Seq2SeqModel
    loss_trace: list[float]
    steps_run: int
    exact_match: float | None = None


def _make_batches(pairs: list[TokenizedPair], batch_size: int, rng: np.random.Generator):
    """Length-bucketed batches with PAD; reshuffled deterministically per epoch."""
    order = np.argsort([len(p.target) for p in pairs], kind="stable")
    buckets = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    perm = rng.permutation(len(buckets))
    out = []
    for bi in perm:
        chunk = [pairs[i] for i in buckets[bi]]
        s_len = max(len(p.source) + 1 for p in chunk)
        t_len = max(len(p.target) + 1 for p in chunk)
        src = torch.full((len(chunk), s_len), PAD, dtype=torch.long)
        tgt_in = torch.full((len(chunk), t_len), PAD, dtype=torch.long)
        tgt_out = torch.full((len(chunk), t_len), PAD, dtype=torch.long)
        for r, p in enumerate(chunk):
            s = list(p.source) + [EOS]
            src[r, : len(s)] = torch.tensor(s)
            ti = [BOS] + list(p.target)
            to = list(p.target) + [EOS]
            tgt_in[r, : len(ti)] = torch.tensor(ti)
            tgt_out[r, : len(to)] = torch.tensor(to)
        out.append((src, tgt_in, tgt_out))
    return out


def train(
    pairs: list[TokenizedPair],
    model: Seq2SeqModel,
    settings: TrainSettings,
    start_step: int = 0,
) -> TrainResult:
    """Minimize NLL with Adam; raises TrainingDiverged on non-finite loss."""
    if not pairs:
        raise ValueError("need at least one training pair")
    torch.manual_seed(settings.seed)
    rng = np.random.default_rng(settings.seed)
    opt = torch.optim.Adam(model.parameters(), lr=settings.learning_rate)
    trace: list[float] = []
    model.train()
    batches = _make_batches(pairs, settings.batch_size, rng)
    cursor = 0
    exact = None
    step = start_step
    for step in range(start_step + 1, start_step + settings.steps + 1):
        if cursor >= len(batches):
            batches = _make_batches(pairs, settings.batch_size, rng)
            cursor = 0
        src, tgt_in, tgt_out = batches[cursor]
        cursor += 1
        opt.zero_grad()
        loss = sequence_nll(model, src, tgt_in, tgt_out)
        if not torch.isfinite(loss):
            grad_norm = sum(
                float(p.grad.norm()) for p in model.parameters() if p.grad is not None
            )
            raise TrainingDiverged(step, settings.learning_rate, grad_norm)
        loss.backward()
        opt.step()
        trace.append(float(loss.detach()))
        if (
            settings.target_exact_match is not None
            and step % settings.eval_every == 0
        ):
            exact = exact_match_rate(model, pairs)
            model.train()
            if exact >= settings.target_exact_match:
                break
    if settings.target_exact_match is not None and exact is None:
        exact = exact_match_rate(model, pairs)
    return TrainResult(model=model, loss_trace=trace, steps_run=step, exact_match=exact)


def exact_match_rate(model: Seq2SeqModel, pairs: list[TokenizedPair]) -> float:
    """Fraction of pairs whose greedy decode reproduces the target exactly."""
    outputs = batch_greedy_decode(
        model,
        [list(p.source) for p in pairs],
        max_length=max(len(p.target) for p in pairs) + 1,
    )
    hits = sum(tuple(o) == tuple(p.target) for o, p in zip(outputs, pairs))
    return hits / len(pairs)


def batch_greedy_decode(
    model: Seq2SeqModel, sources: list[list[int]], max_length: int
) -> list[list[int]]:
    """Greedy decode a batch of sources in lockstep (no structural masks)."""
    model.eval()
    with torch.no_grad():
        s_len = max(len(s) + 1 for s in sources)
        src = torch.full((len(sources), s_len), PAD, dtype=torch.long)
        for r, s in enumerate(sources):
            src[r, : len(s) + 1] = torch.tensor(list(s) + [EOS])
        memory, src_pad = model.encode(src)
        out = torch.full((len(sources), 1), BOS, dtype=torch.long)
        done = torch.zeros(len(sources), dtype=torch.bool)
        results: list[list[int]] = [[] for _ in sources]
        for _ in range(min(max_length, model.config.max_target_len - 1)):
            logits = model.decode_logits(memory, src_pad, out)[:, -1]
            logits[:, PAD] = float("-inf")
            logits[:, BOS] = float("-inf")
            nxt = torch.argmax(logits, dim=-1)
            for r in range(len(sources)):
                if not done[r]:
                    if int(nxt[r]) == EOS:
                        done[r] = True
                    else:
                        results[r].append(int(nxt[r]))
            if bool(done.all()):
                break
            nxt = torch.where(done, torch.full_like(nxt, PAD), nxt)
            out = torch.cat([out, nxt.unsqueeze(1)], dim=1)
    return results


# ---------------------------------------------------------------------------
# decoding


@dataclass
class DecodeResult:
    ids: list[int]
    truncated: bool = False


def decode(
    model: Seq2SeqModel,
    source_ids: list[int],
    mode: str = "greedy",
    seed: int = 0,
    top_k: int = 8,
    vocab: Vocabulary | None = None,
    target_groups: int | None = None,
    max_length: int | None = None,
) -> list[int]:
    """Autoregressive decode; greedy by default, top-k sampling with a seed.

    With a structured ``vocab``, field masks keep every emitted group
    structurally valid; ``target_groups`` forces exactly that many cycle
    groups (EOS suppressed before, forced after).
    """
    return decode_with_flags(
        model, source_ids, mode, seed, top_k, vocab, target_groups, max_length
    ).ids


def decode_with_flags(
    model: Seq2SeqModel,
    source_ids: list[int],
    mode: str = "greedy",
    seed: int = 0,
    top_k: int = 8,
    vocab: Vocabulary | None = None,
    target_groups: int | None = None,
    max_length: int | None = None,
) -> DecodeResult:
    model.eval()
    max_len = max_length or model.config.max_target_len - 1
    gen = torch.Generator().manual_seed(seed)
    pattern = vocab.pattern if vocab is not None else FieldPattern()
    structured = vocab is not None and (pattern.head or pattern.cycle)
    with torch.no_grad():
        src = torch.tensor([list(source_ids) + [EOS]], dtype=torch.long)
        memory, src_pad = model.encode(src)
        out: list[int] = []
        for _ in range(max_len):
            tgt_in = torch.tensor([[BOS] + out], dtype=torch.long)
            logits = model.decode_logits(memory, src_pad, tgt_in)[0, -1].to(torch.float64)
            logits[PAD] = float("-inf")
            logits[BOS] = float("-inf")
            if structured:
                pos = len(out)
                allowed = torch.full_like(logits, float("-inf"))
                fname = pattern.field_at(pos)
                if fname is not None:
                    idx = torch.tensor(vocab.field_ids(fname))
                    allowed[idx] = logits[idx]
                eos_ok = pattern.at_group_boundary(pos)
                if target_groups is not None:
                    done = pattern.groups_done(pos)
                    if done >= target_groups:
                        out_ids = out
                        return DecodeResult(out_ids, truncated=False)
                    eos_ok = False
                if eos_ok:
                    allowed[EOS] = logits[EOS]
                logits = allowed
            if mode == "greedy":
                nxt = int(torch.argmax(logits))
            elif mode == "top_k":
                k = min(top_k, int(torch.isfinite(logits).sum()))
                vals, idx = torch.topk(logits, k)
                probs = torch.softmax(vals, dim=-1)
                nxt = int(idx[torch.multinomial(probs, 1, generator=gen)])
            else:
                raise ValueError(f"unknown decode mode {mode!r}")
            if nxt == EOS:
                return DecodeResult(out, truncated=False)
            out.append(nxt)
        return DecodeResult(out, truncated=True)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model: Seq2SeqModel, extra_meta: dict | None = None) -> None:
    meta = {
        "kind": "seq2seq",
        "model_config": {
            "encoder_layers": model.config.encoder_layers,
            "decoder_layers": model.config.decoder_layers,
            "attention_heads": model.config.attention_heads,
            "hidden_units": model.config.hidden_units,
            "ffn_units": model.config.ffn_units,
            "dropout": model.config.dropout,
            "max_source_len": model.config.max_source_len,
            "max_target_len": model.config.max_target_len,
        },
        "src_vocab_size": model.src_vocab_size,
        "tgt_vocab_size": model.tgt_vocab_size,
    }
    if extra_meta:
        meta.update(extra_meta)
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    tensorio.save_tensors(path, tensors, meta)


def load_checkpoint(path) -> tuple[Seq2SeqModel, dict]:
    tensors, meta = tensorio.load_tensors(path)
    if meta.get("kind") != "seq2seq":
        raise ValueError(f"{path}: not a seq2seq checkpoint")
    cfg = Seq2SeqConfig(**meta["model_config"])
    model = Seq2SeqModel(cfg, meta["src_vocab_size"], meta["tgt_vocab_size"])
    state = {k: torch.from_numpy(v.copy()) for k, v in tensors.items()}
    model.load_state_dict(state)
    model.eval()
    return model, meta
