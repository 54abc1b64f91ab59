"""Tokenization and the shipped stop-word list.

Every component that looks at words (hashing embedder, cluster TF-IDF,
lexical-ID extraction) goes through :func:`tokenize` so their vocabularies
agree.
"""

from __future__ import annotations

import re
import unicodedata

_WORD_RE = re.compile(r"[^\W_]+")

EOS = "<eos>"
PAD = "pad"

STOP_WORDS: frozenset[str] = frozenset(
    """
    a an the and or but if of at by for with about against between into
    through during before after above below to from up down in out on off
    over under again then once here there when where why how all any both
    each few more most other some such no nor not only own same so than too
    very is are was were be been being has have had do does did it its this
    that these those he she they them his her their we you i me my our your
    as while
    """.split()
)


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def tokenize(text: str) -> list[str]:
    """Lowercase, NFC-normalize and split on runs of non-alphanumerics."""
    return _WORD_RE.findall(nfc(text).lower())


def is_stop_word(word: str) -> bool:
    return word in STOP_WORDS
