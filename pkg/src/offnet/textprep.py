"""Tweet cleaning, whitespace tokenisation and fixed-length encoding.

Cleaning order: URLs, @-mentions, emoji, Arabic folds and script filters,
punctuation/symbols, elongation, whitespace. Removed spans become a space so
no two words are ever glued together, which keeps the function idempotent.

Punctuation set: every character in a Unicode ``P*`` (punctuation) or
``S*`` (symbol) category except the ASCII apostrophe.

Emoji set: U+1F000-1FAFF (mahjong through symbols & pictographs extended-A,
including regional-indicator flags and skin-tone modifiers), U+2600-27BF
(misc symbols, dingbats), U+2B00-2BFF, U+FE0E/FE0F variation selectors,
U+200D zero-width joiner and U+20E3 combining keycap.
"""
from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

import numpy as np

LANGUAGES = ("arabic", "english", "danish", "greek", "turkish")

PAD = "[PAD]"
OOV = "[UNK]"
CLS = "[CLS]"
SEP = "[SEP]"
PAD_ID = 0
OOV_ID = 1

URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
MENTION_RE = re.compile(r"@\w+")
EMOJI_RE = re.compile(
    "[\U0001F000-\U0001FAFF\u2600-\u27BF\u2B00-\u2BFF\uFE0E\uFE0F\u200D\u20E3]"
)
# letters only: digit runs such as "1000" are values, not elongation
ELONGATION_RE = re.compile(r"([^\W\d_])\1{2,}")
LATIN_RE = re.compile(r"[A-Za-zÀ-ɏ]")
ARABIC_FOLDS = str.maketrans({
    "أ": "ا",  # alef with hamza above
    "إ": "ا",  # alef with hamza below
    "آ": "ا",  # alef with madda
    "ٱ": "ا",  # alef wasla
    "ة": "ه",  # teh marbuta -> heh
    "ى": "ي",  # alef maksura -> yeh
})


@dataclass(frozen=True)
class CleanConfig:
    language: str = "english"
    urls: bool = True
    mentions: bool = True
    punctuation: bool = True
    elongation: bool = True
    emoji: bool = True
    digits: bool | None = None
    foreign_script: bool | None = None
    arabic_folds: bool | None = None

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise ValueError(f"unknown language {self.language!r}; expected one of {LANGUAGES}")
        arabic = self.language == "arabic"
        for name in ("digits", "foreign_script", "arabic_folds"):
            value = getattr(self, name)
            if value is None:
                object.__setattr__(self, name, arabic)
            elif value and not arabic:
                raise ValueError(f"{name} removal applies to Arabic text only")


def _strip_punct(text):
    out = []
    for ch in text:
        if ch != "'" and unicodedata.category(ch)[0] in "PS":
            out.append(" ")
        else:
            out.append(ch)
    return "".join(out)


def _strip_digits(text):
    return "".join(" " if unicodedata.category(ch) == "Nd" else ch for ch in text)


def clean_text(text: str, config: CleanConfig | None = None) -> str:
    """Normalise one tweet. ``clean_text(clean_text(x)) == clean_text(x)``."""
    config = config or CleanConfig()
    if config.urls:
        text = URL_RE.sub(" ", text)
    if config.mentions:
        text = MENTION_RE.sub(" ", text)
    if config.emoji:
        text = EMOJI_RE.sub(" ", text)
    if config.arabic_folds:
        text = text.translate(ARABIC_FOLDS)
    if config.digits:
        text = _strip_digits(text)
    if config.foreign_script:
        text = LATIN_RE.sub(" ", text)
    if config.punctuation:
        text = _strip_punct(text)
    if config.elongation:
        text = ELONGATION_RE.sub(r"\1", text)
    return " ".join(text.split())


def tokenize(text: str) -> list:
    return text.split()


class Vocab:
    """Token to id map with ``[PAD]`` at 0 and ``[UNK]`` at 1."""

    def __init__(self, tokens=()):
        self.itos = [PAD, OOV]
        self.stoi = {PAD: PAD_ID, OOV: OOV_ID}
        for t in tokens:
            self.add(t)

    def add(self, token):
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __getitem__(self, token):
        return self.stoi.get(token, OOV_ID)

    @classmethod
    def build(cls, token_lists, min_count=1):
        """Vocabulary in first-seen order over tokens seen at least ``min_count`` times."""
        counts = {}
        for toks in token_lists:
            for t in toks:
                counts[t] = counts.get(t, 0) + 1
        return cls(t for t, c in counts.items() if c >= min_count)

    def to_list(self):
        return list(self.itos)

    @classmethod
    def from_list(cls, itos):
        if list(itos[:2]) != [PAD, OOV]:
            raise ValueError("vocabulary list must start with [PAD], [UNK]")
        return cls(itos[2:])


@dataclass(frozen=True)
class EncodedInput:
    ids: tuple
    mask: tuple


def encode(tokens, vocab: Vocab, max_len: int) -> EncodedInput:
    """Map tokens to ids, truncating or right-padding to ``max_len``."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = [vocab[t] for t in tokens[:max_len]]
    n = len(ids)
    return EncodedInput(tuple(ids + [PAD_ID] * (max_len - n)), tuple([1] * n + [0] * (max_len - n)))


def encode_batch(token_lists, vocab: Vocab, max_len: int):
    """Stacked ``(ids, mask)`` arrays. Empty rows keep one unmasked pad so pooling stays defined."""
    ids = np.zeros((len(token_lists), max_len), dtype=np.int64)
    mask = np.zeros((len(token_lists), max_len), dtype=np.float64)
    for i, toks in enumerate(token_lists):
        enc = encode(toks, vocab, max_len)
        ids[i] = enc.ids
        mask[i] = enc.mask
        if not toks:
            mask[i, 0] = 1.0
    return ids, mask


def prepare_contextual_input(tokens, max_len: int = 60):
    """Frame ``tokens`` as ``[CLS] ... [SEP]`` padded to ``max_len``; returns ``(framed, mask)``."""
    if max_len < 3:
        raise ValueError("max_len must be >= 3 to hold [CLS], a token and [SEP]")
    body = list(tokens[:max_len - 2])
    framed = [CLS] + body + [SEP]
    n = len(framed)
    return framed + [PAD] * (max_len - n), [1] * n + [0] * (max_len - n)
