"""SMILES tokenization into fixed-capacity id sequences.

Character-level vocabulary with a handful of multi-character tokens
(``Cl``, ``Br``, ``@@``) resolved by greedy longest match. Sequences
follow the usual BERT layout: ``[CLS] a [SEP]`` for single inputs and
``[CLS] a [SEP] b [SEP]`` with segment ids 0/1 for pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
MASK_TOKEN = "[MASK]"

SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN)

# fmt: off
DEFAULT_CONTENT_TOKENS = (
    "C", "c", "N", "n", "O", "o", "S", "s", "P", "p",
    "F", "Cl", "Br", "I", "B", "H",
    "(", ")", "[", "]",
    "=", "#", "/", "\\", "@", "@@", "+", "-", ".", "%",
    "1", "2", "3", "4", "5", "6", "7",
)
# fmt: on

DEFAULT_CAPACITY = 128


class TokenizerError(ValueError):
    """Bad vocabulary construction or malformed sequence."""


class SequenceTooLongError(TokenizerError):
    """Tokenized input does not fit the sequence capacity."""


@dataclass(frozen=True)
class Vocabulary:
    """Immutable ordered token set; the five specials hold ids 0..4."""

    tokens: tuple[str, ...] = SPECIAL_TOKENS + DEFAULT_CONTENT_TOKENS
    index: dict[str, int] = field(init=False, repr=False, compare=False)
    multi: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[:5]) != SPECIAL_TOKENS:
            raise TokenizerError("the first five tokens must be the specials")
        if len(set(self.tokens)) != len(self.tokens):
            raise TokenizerError("duplicate token strings in vocabulary")
        object.__setattr__(
            self, "index", {tok: i for i, tok in enumerate(self.tokens)}
        )
        multi = [t for t in self.tokens[5:] if len(t) > 1]
        multi.sort(key=len, reverse=True)
        object.__setattr__(self, "multi", tuple(multi))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    @property
    def cls_id(self) -> int:
        return 2

    @property
    def sep_id(self) -> int:
        return 3

    @property
    def mask_id(self) -> int:
        return 4

    @property
    def content_ids(self) -> tuple[int, ...]:
        return tuple(range(5, len(self.tokens)))

    def id_of(self, token: str) -> int:
        return self.index.get(token, self.unk_id)


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """Fixed-capacity id sequence with segment ids and attention mask."""

    ids: np.ndarray
    segment_ids: np.ndarray
    attention_mask: np.ndarray
    length: int

    @property
    def capacity(self) -> int:
        return int(self.ids.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, TokenSequence):
            return NotImplemented
        return (
            self.length == other.length
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.segment_ids, other.segment_ids)
            and np.array_equal(self.attention_mask, other.attention_mask)
        )


def tokenize(text: str, vocab: Vocabulary | None = None) -> list[str]:
    """Greedy longest-match split; unknown characters become ``[UNK]``."""
    if vocab is None:
        vocab = Vocabulary()
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        for cand in vocab.multi:
            if text.startswith(cand, i):
                tokens.append(cand)
                i += len(cand)
                break
        else:
            ch = text[i]
            tokens.append(ch if ch in vocab.index else UNK_TOKEN)
            i += 1
    return tokens


def detokenize(tokens: list[str]) -> str:
    """Inverse of :func:`tokenize` when no ``[UNK]`` was produced."""
    return "".join(t for t in tokens if t not in SPECIAL_TOKENS)


def _assemble(segments: list[list[int]], vocab: Vocabulary, capacity: int):
    ids = [vocab.cls_id]
    seg = [0]
    for which, part in enumerate(segments):
        ids.extend(part)
        ids.append(vocab.sep_id)
        seg.extend([min(which, 1)] * (len(part) + 1))
    length = len(ids)
    out_ids = np.full(capacity, vocab.pad_id, dtype=np.int32)
    out_seg = np.zeros(capacity, dtype=np.int32)
    out_mask = np.zeros(capacity, dtype=np.int32)
    out_ids[:length] = ids
    out_seg[:length] = seg
    out_mask[:length] = 1
    return TokenSequence(out_ids, out_seg, out_mask, length)


def encode_single(
    text: str,
    vocab: Vocabulary | None = None,
    capacity: int = DEFAULT_CAPACITY,
    truncate: bool = False,
) -> TokenSequence:
    """``[CLS] text [SEP]`` padded to ``capacity``, segment ids all zero."""
    if vocab is None:
        vocab = Vocabulary()
    toks = tokenize(text, vocab)
    budget = capacity - 2
    if len(toks) > budget:
        if not truncate:
            raise SequenceTooLongError(
                f"{len(toks)} tokens exceed capacity {capacity} - 2"
            )
        toks = toks[:budget]
    return _assemble([[vocab.id_of(t) for t in toks]], vocab, capacity)


def encode_pair(
    a: str,
    b: str,
    vocab: Vocabulary | None = None,
    capacity: int = DEFAULT_CAPACITY,
    truncate: bool = False,
) -> TokenSequence:
    """``[CLS] a [SEP] b [SEP]``; segment 1 starts after the first SEP."""
    if vocab is None:
        vocab = Vocabulary()
    ta = tokenize(a, vocab)
    tb = tokenize(b, vocab)
    budget = capacity - 3
    if len(ta) + len(tb) > budget:
        if not truncate:
            raise SequenceTooLongError(
                f"{len(ta)} + {len(tb)} tokens exceed capacity {capacity} - 3"
            )
        # Trailing tokens of segment b go first, then segment a.
        drop = len(ta) + len(tb) - budget
        take_b = max(len(tb) - drop, 0)
        drop -= len(tb) - take_b
        tb = tb[:take_b]
        if drop:
            ta = ta[: len(ta) - drop]
    ids_a = [vocab.id_of(t) for t in ta]
    ids_b = [vocab.id_of(t) for t in tb]
    return _assemble([ids_a, ids_b], vocab, capacity)


def decode(seq: TokenSequence, vocab: Vocabulary | None = None):
    """Recover the input string(s): a ``str`` for single, a pair for pairs."""
    if vocab is None:
        vocab = Vocabulary()
    ids = [int(i) for i in seq.ids[: seq.length]]
    if not ids or ids[0] != vocab.cls_id:
        raise TokenizerError("sequence does not start with [CLS]")
    segments: list[list[int]] = [[]]
    for tid in ids[1:]:
        if tid == vocab.sep_id:
            segments.append([])
        else:
            segments[-1].append(tid)
    if segments[-1]:
        raise TokenizerError("sequence does not end with [SEP]")
    segments.pop()
    texts = ["".join(vocab.tokens[t] for t in part) for part in segments]
    if len(texts) == 1:
        return texts[0]
    if len(texts) == 2:
        return texts[0], texts[1]
    raise TokenizerError(f"expected 1 or 2 segments, found {len(texts)}")
