from __future__ import annotations

import re
from dataclasses import dataclass

_WORD = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class Token:
    text: str
    position: int


def tokenize(text: str) -> list[Token]:
    """Lowercase and split on every run of non-alphanumeric characters."""
    return [Token(m.group(), i) for i, m in enumerate(_WORD.finditer(text.lower()))]


def token_texts(text: str) -> list[str]:
    return _WORD.findall(text.lower())
