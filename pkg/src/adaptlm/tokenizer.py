"""Cased basic tokenization and greedy WordPiece splitting with offset bookkeeping.

All functions are pure; case is never folded and no Unicode normalization is
applied beyond treating control characters as separators. Punctuation (Unicode
P* plus the ASCII symbols $+<=>^|~) always forms single-character words, so a
string like "@GENE$" splits deterministically into "@", "GENE", "$".
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InputError
from .vocab import CLS, CONTINUATION_PREFIX, SEP, UNK, Vocabulary

DEFAULT_MAX_WORD_CHARS = 100

NO_WORD = -1  # word_index sentinel for special and padding positions

_EXTRA_PUNCT = set("$+<=>^|~")


def _is_punct(ch: str) -> bool:
    return ch in _EXTRA_PUNCT or unicodedata.category(ch).startswith("P")


def _is_separator(ch: str) -> bool:
    # control characters are dropped; they also terminate the current word
    return ch.isspace() or unicodedata.category(ch) in ("Cc", "Cf")


def basic_tokenize(text: str) -> list[tuple[str, int, int]]:
    """Split text into (word, start, end) triples with offsets into text.

    Words are maximal runs of non-separator characters, except that every
    punctuation character becomes its own single-character word. Joining the
    words back with the skipped separators reconstructs the input.
    """
    out = []
    start = None
    for i, ch in enumerate(text):
        if _is_separator(ch):
            if start is not None:
                out.append((text[start:i], start, i))
                start = None
        elif _is_punct(ch):
            if start is not None:
                out.append((text[start:i], start, i))
                start = None
            out.append((ch, i, i + 1))
        else:
            if start is None:
                start = i
    if start is not None:
        out.append((text[start:], start, len(text)))
    return out


def wordpiece_split(word: str, vocab: Vocabulary,
                    max_word_chars: int = DEFAULT_MAX_WORD_CHARS) -> list[str]:
    """Greedy longest-match-first subword split.

    Non-initial pieces carry the "##" prefix. A word with no match at some
    position, or longer than max_word_chars, becomes the single piece [UNK].
    """
    if not word:
        raise InputError("cannot split an empty word")
    if len(word) > max_word_chars:
        return [UNK]
    pieces = []
    start = 0
    n = len(word)
    while start < n:
        end = n
        found = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION_PREFIX + piece
            if piece in vocab:
                found = piece
                break
            end -= 1
        if found is None:
            return [UNK]
        pieces.append(found)
        start = end
    return pieces


@dataclass(frozen=True)
class EncodedInput:
    """One packed (possibly paired) sequence, padded to a fixed length.

    Parallel per-position fields:
      ids        vocabulary ids (int32)
      segments   0 for [CLS] + text_a + first [SEP], 1 for text_b + its [SEP]
      mask       1 for real tokens, 0 for padding (1s form a prefix)
      word_index index of the originating word within its text, NO_WORD for
                 special and padding positions
      offsets    (start, end) character range in the originating text,
                 (0, 0) for specials and padding
      subtokens  the token strings, padded with [PAD]

    text_a/text_b keep the source strings so spans can be recovered later.
    """

    ids: np.ndarray
    segments: np.ndarray
    mask: np.ndarray
    subtokens: tuple[str, ...]
    word_index: np.ndarray
    offsets: tuple[tuple[int, int], ...]
    text_a: str | None = None
    text_b: str | None = None

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @property
    def real_length(self) -> int:
        return int(self.mask.sum())

    def with_ids(self, new_ids: np.ndarray) -> "EncodedInput":
        return replace(self, ids=np.asarray(new_ids, dtype=np.int32))


def split_with_offsets(text: str, vocab: Vocabulary,
                       max_word_chars: int = DEFAULT_MAX_WORD_CHARS):
    """Per-word subtokens with word indices and character offsets."""
    pieces, words, offs = [], [], []
    for w_idx, (word, w_start, _) in enumerate(basic_tokenize(text)):
        pos = w_start
        for piece in wordpiece_split(word, vocab, max_word_chars):
            visible = piece[len(CONTINUATION_PREFIX):] if piece.startswith(CONTINUATION_PREFIX) else piece
            if piece == UNK:
                span = (w_start, w_start + len(word))
                pos = span[1]
            else:
                span = (pos, pos + len(visible))
                pos += len(visible)
            pieces.append(piece)
            words.append(w_idx)
            offs.append(span)
    return pieces, words, offs


def encode_sequence(text_a: str, text_b: str | None, vocab: Vocabulary, max_len: int,
                    max_word_chars: int = DEFAULT_MAX_WORD_CHARS) -> EncodedInput:
    """Pack one or two texts as [CLS] A [SEP] (B [SEP]) padded to max_len.

    Overflow is truncated from the right of text_b (of text_a when there is
    no text_b; of text_a as well if it alone leaves no room for text_b).
    """
    specials = 3 if text_b is not None else 2
    if max_len < specials + 1:
        raise ConfigError(f"max_len={max_len} cannot hold {specials} special tokens plus one token")

    a_pieces, a_words, a_offs = split_with_offsets(text_a, vocab, max_word_chars)
    budget_a = max_len - specials
    a_pieces, a_words, a_offs = a_pieces[:budget_a], a_words[:budget_a], a_offs[:budget_a]

    if text_b is not None:
        b_pieces, b_words, b_offs = split_with_offsets(text_b, vocab, max_word_chars)
        budget_b = max_len - 3 - len(a_pieces)
        b_pieces, b_words, b_offs = b_pieces[:budget_b], b_words[:budget_b], b_offs[:budget_b]
    else:
        b_pieces, b_words, b_offs = [], [], []

    subtokens = [CLS] + a_pieces + [SEP]
    word_index = [NO_WORD] + a_words + [NO_WORD]
    offsets = [(0, 0)] + a_offs + [(0, 0)]
    segments = [0] * len(subtokens)
    if text_b is not None:
        subtokens += b_pieces + [SEP]
        word_index += b_words + [NO_WORD]
        offsets += b_offs + [(0, 0)]
        segments += [1] * (len(b_pieces) + 1)

    real = len(subtokens)
    pad_n = max_len - real
    ids = [vocab.id(t) for t in subtokens] + [vocab.pad_id] * pad_n
    subtokens += ["[PAD]"] * pad_n
    word_index += [NO_WORD] * pad_n
    offsets += [(0, 0)] * pad_n
    segments += [0] * pad_n
    mask = [1] * real + [0] * pad_n

    return EncodedInput(
        ids=np.asarray(ids, dtype=np.int32),
        segments=np.asarray(segments, dtype=np.int32),
        mask=np.asarray(mask, dtype=np.int32),
        subtokens=tuple(subtokens),
        word_index=np.asarray(word_index, dtype=np.int32),
        offsets=tuple(offsets),
        text_a=text_a,
        text_b=text_b,
    )


def encode_pieces(pieces: list[str], vocab: Vocabulary, max_len: int,
                  word_index: list[int] | None = None,
                  offsets: list[tuple[int, int]] | None = None) -> EncodedInput:
    """Pack pre-split subtokens as [CLS] pieces [SEP] padded to max_len.

    Used by the pretraining packer, which concatenates sentences and has
    already run the splitter. Pieces beyond max_len - 2 are dropped.
    """
    if max_len < 3:
        raise ConfigError(f"max_len={max_len} cannot hold the special tokens plus one token")
    keep = max_len - 2
    pieces = list(pieces[:keep])
    word_index = list(word_index[:keep]) if word_index is not None else list(range(len(pieces)))
    offsets = list(offsets[:keep]) if offsets is not None else [(0, 0)] * len(pieces)

    subtokens = [CLS] + pieces + [SEP]
    widx = [NO_WORD] + word_index + [NO_WORD]
    offs = [(0, 0)] + offsets + [(0, 0)]
    real = len(subtokens)
    pad_n = max_len - real
    ids = [vocab.id(t) for t in subtokens] + [vocab.pad_id] * pad_n
    return EncodedInput(
        ids=np.asarray(ids, dtype=np.int32),
        segments=np.zeros(max_len, dtype=np.int32),
        mask=np.asarray([1] * real + [0] * pad_n, dtype=np.int32),
        subtokens=tuple(subtokens + ["[PAD]"] * pad_n),
        word_index=np.asarray(widx + [NO_WORD] * pad_n, dtype=np.int32),
        offsets=tuple(offs + [(0, 0)] * pad_n),
    )


def batch_arrays(batch: list[EncodedInput]):
    """Stack a batch into (ids, segments, mask) int32 arrays of shape (B, L)."""
    if not batch:
        raise InputError("empty batch")
    lengths = {len(item) for item in batch}
    if len(lengths) != 1:
        raise InputError(f"batch items have mixed lengths {sorted(lengths)}")
    ids = np.stack([item.ids for item in batch])
    segments = np.stack([item.segments for item in batch])
    mask = np.stack([item.mask for item in batch])
    return ids, segments, mask
