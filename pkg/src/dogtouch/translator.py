"""Gesture-to-action sequence translation.

A small Transformer encoder-decoder maps sentences over the 81-word
gesture vocabulary to sentences over the 40-word action vocabulary.
Sentences carry at most 20 tokens including BOS/EOS, so content is
capped at 18 words. Decoding is greedy argmax (ties to the lowest token
id) and the live pipeline takes the final content word of the decoded
sentence as the next dog action.

Also here: corpus BLEU (clipped modified n-gram precision, geometric
mean, brevity penalty) and a deterministic synthetic interaction-pair
grammar used for desk-scale evaluation.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .nn import (
    Adam,
    Embedding,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    Parameter,
    causal_mask,
    padding_mask,
)
from .nn.tensor import cross_entropy, no_grad, relu
from .taxonomy import BOS, BOS_ID, EOS, EOS_ID, PAD_ID, ActionWord, Taxonomy

MAX_LEN = 20  # tokens per sentence including BOS and EOS
MAX_WORDS = MAX_LEN - 2

FALLBACK_ACTION = "idle"


class SentenceError(ValueError):
    """Sentence violates length or vocabulary constraints."""


@dataclass(frozen=True)
class GestureSentence:
    words: tuple

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        if len(self.words) > MAX_WORDS:
            raise SentenceError(
                f"{len(self.words)} gesture words exceed the {MAX_WORDS}-word cap "
                f"({MAX_LEN} tokens with BOS/EOS)"
            )

    @property
    def tokens(self) -> tuple:
        return (BOS,) + self.words + (EOS,)


@dataclass(frozen=True)
class ActionSentence:
    words: tuple

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        if len(self.words) > MAX_WORDS:
            raise SentenceError(f"{len(self.words)} action words exceed the {MAX_WORDS}-word cap")

    @property
    def tokens(self) -> tuple:
        return (BOS,) + self.words + (EOS,)


@dataclass(frozen=True)
class InteractionPair:
    source: GestureSentence
    target: ActionSentence


def validate_pair(pair: InteractionPair, taxonomy: Taxonomy):
    for w in pair.source.words:
        if w not in taxonomy.gesture_vocab:
            raise SentenceError(f"unknown gesture word {w!r}")
    for w in pair.target.words:
        if w not in taxonomy.action_vocab:
            raise SentenceError(f"unknown action word {w!r}")


@dataclass(frozen=True)
class TranslatorConfig:
    encoder_layers: int = 2
    decoder_layers: int = 2
    head_count: int = 4
    model_dim: int = 64
    ff_dim: int = 128
    max_len: int = MAX_LEN
    epochs: int = 80
    batch_size: int = 64
    learning_rate: float = 3e-3
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TranslatorConfig":
        return cls(**d)


class _EncoderLayer(Module):
    def __init__(self, dim, heads, ff_dim, rng):
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.norm1 = LayerNorm(dim)
        self.ff1 = Linear(dim, ff_dim, rng)
        self.ff2 = Linear(ff_dim, dim, rng)
        self.norm2 = LayerNorm(dim)

    def forward(self, x, mask):
        x = self.norm1(x + self.attn(x, x, x, mask=mask))
        return self.norm2(x + self.ff2(relu(self.ff1(x))))


class _DecoderLayer(Module):
    def __init__(self, dim, heads, ff_dim, rng):
        self.self_attn = MultiHeadAttention(dim, heads, rng)
        self.norm1 = LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.ff1 = Linear(dim, ff_dim, rng)
        self.ff2 = Linear(ff_dim, dim, rng)
        self.norm3 = LayerNorm(dim)

    def forward(self, x, memory, self_mask, cross_mask):
        x = self.norm1(x + self.self_attn(x, x, x, mask=self_mask))
        x = self.norm2(x + self.cross_attn(x, memory, memory, mask=cross_mask))
        return self.norm3(x + self.ff2(relu(self.ff1(x))))


class Translator(Module):
    def __init__(self, config: TranslatorConfig, src_vocab: int, tgt_vocab: int, rng):
        self.config = config
        d = config.model_dim
        self.src_embed = Embedding(src_vocab, d, rng)
        self.tgt_embed = Embedding(tgt_vocab, d, rng)
        self.pos = Parameter(rng.normal(0.0, 0.02, size=(1, config.max_len, d)).astype(np.float32))
        self.encoder = [_EncoderLayer(d, config.head_count, config.ff_dim, rng)
                        for _ in range(config.encoder_layers)]
        self.decoder = [_DecoderLayer(d, config.head_count, config.ff_dim, rng)
                        for _ in range(config.decoder_layers)]
        self.out = Linear(d, tgt_vocab, rng)
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab

    def encode(self, src_ids: np.ndarray):
        n, length = src_ids.shape
        x = self.src_embed(src_ids) + self.pos[:, :length, :]
        mask = padding_mask(src_ids, PAD_ID)
        for layer in self.encoder:
            x = layer(x, mask)
        return x, mask

    def decode(self, tgt_ids: np.ndarray, memory, memory_mask):
        n, length = tgt_ids.shape
        x = self.tgt_embed(tgt_ids) + self.pos[:, :length, :]
        self_mask = causal_mask(length) + padding_mask(tgt_ids, PAD_ID)
        for layer in self.decoder:
            x = layer(x, memory, self_mask, memory_mask)
        return self.out(x)

    def forward(self, src_ids: np.ndarray, tgt_in_ids: np.ndarray):
        memory, memory_mask = self.encode(src_ids)
        return self.decode(tgt_in_ids, memory, memory_mask)


def build_translator(config: TranslatorConfig, taxonomy: Taxonomy,
                     seed: int | None = None) -> Translator:
    rng = np.random.default_rng(
        np.random.SeedSequence((config.seed if seed is None else seed, 0x72))
    )
    return Translator(config, len(taxonomy.gesture_vocab), len(taxonomy.action_vocab), rng)


def _encode_tokens(words, vocab, max_len: int) -> np.ndarray:
    ids = [BOS_ID] + [vocab.encode(w) for w in words] + [EOS_ID]
    ids += [PAD_ID] * (max_len - len(ids))
    return np.array(ids, dtype=np.int64)


def encode_pairs(pairs, taxonomy: Taxonomy, max_len: int = MAX_LEN):
    """Pairs -> (src, tgt_in, tgt_out) id matrices; validates everything."""
    src, tgt = [], []
    for pair in pairs:
        validate_pair(pair, taxonomy)
        src.append(_encode_tokens(pair.source.words, taxonomy.gesture_vocab, max_len))
        tgt.append(_encode_tokens(pair.target.words, taxonomy.action_vocab, max_len))
    src = np.stack(src)
    tgt = np.stack(tgt)
    return src, tgt[:, :-1], tgt[:, 1:]


def make_pair_dataset(pairs, train_fraction: float = 5 / 6, seed: int = 0):
    """Deterministic shuffle split; train gets floor(n * fraction)."""
    pairs = list(pairs)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x59)))
    order = rng.permutation(len(pairs))
    n_train = int(len(pairs) * train_fraction + 1e-9)
    train = [pairs[i] for i in order[:n_train]]
    test = [pairs[i] for i in order[n_train:]]
    return train, test


def train_translator(pairs, config: TranslatorConfig, taxonomy: Taxonomy,
                     log=None) -> tuple[Translator, list[float]]:
    """Teacher-forced training with causal masking; deterministic per seed."""
    pairs = list(pairs)
    if not pairs:
        raise nn.UsageError("translator training set is empty")
    src, tgt_in, tgt_out = encode_pairs(pairs, taxonomy, config.max_len)
    model = build_translator(config, taxonomy)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    curve: list[float] = []
    for epoch in range(config.epochs):
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0x7E, epoch)))
        order = rng.permutation(len(pairs))
        losses = []
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            logits = model(src[idx], tgt_in[idx])
            n, length, vocab = logits.shape
            loss = cross_entropy(
                logits.reshape(n * length, vocab),
                tgt_out[idx].reshape(-1),
                ignore_index=PAD_ID,
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        curve.append(float(np.mean(losses)))
        if log:
            log(f"epoch {epoch + 1}/{config.epochs} loss {curve[-1]:.4f}")
    return model, curve


def greedy_decode_ids(model: Translator, src_ids: np.ndarray) -> list[int]:
    """Token ids of the decoded sentence, BOS first, EOS-terminated.

    Greedy argmax per step (ties resolve to the lowest id); decoding
    stops at EOS or the length cap, where EOS is forced so the output
    is always a well-formed sentence.
    """
    max_len = model.config.max_len
    with no_grad():
        memory, memory_mask = model.encode(src_ids[None, :])
        out_ids = [BOS_ID]
        while len(out_ids) < max_len:
            tgt = np.array(out_ids, dtype=np.int64)[None, :]
            logits = model.decode(tgt, memory, memory_mask)
            next_id = int(logits.data[0, -1].argmax())
            out_ids.append(next_id)
            if next_id == EOS_ID:
                break
    if out_ids[-1] != EOS_ID:
        out_ids[-1] = EOS_ID
    return out_ids


def translate(model: Translator, sentence: GestureSentence, taxonomy: Taxonomy) -> ActionSentence:
    src = _encode_tokens(sentence.words, taxonomy.gesture_vocab, model.config.max_len)
    ids = greedy_decode_ids(model, src)
    words = [taxonomy.action_vocab.decode(i) for i in ids[1:] if i not in (PAD_ID, BOS_ID, EOS_ID)]
    return ActionSentence(words=tuple(words))


def predict_action(model: Translator, history, taxonomy: Taxonomy) -> tuple[ActionWord, bool]:
    """Next dog action from recent gesture words: the last word of the
    decoded sentence. Returns (action, fallback_flag); degenerate decodes
    fall back to the idle action with the flag raised."""
    history = list(history)
    if not history:
        raise nn.UsageError("gesture history is empty")
    sentence = GestureSentence(words=tuple(history[-MAX_WORDS:]))
    decoded = translate(model, sentence, taxonomy)
    if not decoded.words:
        return taxonomy.action(FALLBACK_ACTION), True
    return taxonomy.action(decoded.words[-1]), False


# --- BLEU ---------------------------------------------------------------------

def _ngrams(words, n: int) -> Counter:
    return Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def bleu(candidates, references, max_n: int = 4) -> float:
    """Corpus BLEU over content-word sequences.

    Clipped modified n-gram precision per order, geometric mean over
    n <= max_n, brevity penalty exp(1 - r/c) when c < r. An empty
    candidate corpus scores 0 by convention.
    """
    candidates = [list(c.words if hasattr(c, "words") else c) for c in candidates]
    references = [list(r.words if hasattr(r, "words") else r) for r in references]
    if not candidates or len(candidates) != len(references):
        raise nn.UsageError(
            f"need equal non-empty corpora, got {len(candidates)} vs {len(references)}"
        )
    if max_n < 1:
        raise nn.UsageError("max_n must be >= 1")
    cand_len = sum(len(c) for c in candidates)
    ref_len = sum(len(r) for r in references)
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    orders = 0
    for n in range(1, max_n + 1):
        matches = 0
        total = 0
        for cand, ref in zip(candidates, references):
            cand_counts = _ngrams(cand, n)
            ref_counts = _ngrams(ref, n)
            total += max(len(cand) - n + 1, 0)
            matches += sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        if total == 0:
            continue  # corpus has no n-grams of this order; drop it from the mean
        if matches == 0:
            return 0.0
        orders += 1
        log_sum += math.log(matches / total)
    if orders == 0:
        return 0.0
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_sum / orders)


# --- synthetic interaction corpus ----------------------------------------------

def synthetic_grammar(taxonomy: Taxonomy, seed: int) -> dict:
    """Seeded deterministic gesture-word -> action-word lookup."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x6A)))
    actions = list(taxonomy.action_vocab.content_tokens)
    return {
        token: actions[int(rng.integers(0, len(actions)))]
        for token in taxonomy.gesture_vocab.content_tokens
    }


def generate_pairs(taxonomy: Taxonomy, count: int, seed: int,
                   grammar: dict | None = None, length_range=(1, 8),
                   alternative_rate: float = 0.0) -> list:
    """Synthetic interaction corpus following a fixed grammar.

    alternative_rate > 0 adds many-to-one noise: that fraction of words
    maps to a second plausible action instead of the primary one.
    """
    grammar = grammar if grammar is not None else synthetic_grammar(taxonomy, seed)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x6B)))
    actions = list(taxonomy.action_vocab.content_tokens)
    alternatives = {
        token: actions[int(rng.integers(0, len(actions)))] for token in grammar
    }
    gesture_tokens = list(taxonomy.gesture_vocab.content_tokens)
    pairs = []
    for _ in range(count):
        length = int(rng.integers(length_range[0], length_range[1] + 1))
        words = [gesture_tokens[int(rng.integers(0, len(gesture_tokens)))] for _ in range(length)]
        target = [
            alternatives[w] if alternative_rate and rng.random() < alternative_rate else grammar[w]
            for w in words
        ]
        pairs.append(InteractionPair(GestureSentence(tuple(words)), ActionSentence(tuple(target))))
    return pairs


# --- corpus file io -------------------------------------------------------------

def save_pairs(path, pairs):
    """One pair per line: source and target words, tab separated."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(" ".join(pair.source.words) + "\t" + " ".join(pair.target.words) + "\n")


def load_pairs(path, taxonomy: Taxonomy) -> list:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise SentenceError(f"{path}:{lineno}: expected tab-separated pair")
            src, tgt = line.split("\t", 1)
            try:
                pair = InteractionPair(
                    GestureSentence(tuple(src.split())), ActionSentence(tuple(tgt.split()))
                )
                validate_pair(pair, taxonomy)
            except SentenceError as err:
                raise SentenceError(f"{path}:{lineno}: {err}") from None
            pairs.append(pair)
    return pairs


CHECKPOINT_KIND = "gesture-translator"


def save_translator(path, model: Translator, taxonomy: Taxonomy):
    nn.save_model(path, model, meta={
        "kind": CHECKPOINT_KIND,
        "config": model.config.to_dict(),
        "taxonomy_fingerprint": taxonomy.fingerprint(),
    })


def load_translator(path, taxonomy: Taxonomy) -> Translator:
    state, meta = nn.load_checkpoint(path)
    if not meta or meta.get("kind") != CHECKPOINT_KIND:
        raise nn.CheckpointError(f"{path} is not a translator checkpoint")
    if meta["taxonomy_fingerprint"] != taxonomy.fingerprint():
        raise nn.CheckpointError("checkpoint was trained against a different taxonomy")
    config = TranslatorConfig.from_dict(meta["config"])
    model = build_translator(config, taxonomy)
    model.load_state_dict(state)
    return model
