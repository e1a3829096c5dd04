"""Text normalization, tokenization, and fixed-length integer encoding.

The pipeline applies, in this order: contraction expansion, lowercasing,
punctuation stripping (punctuation becomes a space so glued words split),
whitespace tokenization, stopword removal. There is no stemming and no
spelling correction anywhere: plurals, slang, and deliberately misspelled
tokens keep their exact surface form.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import TYPE_CHECKING, Iterable

import numpy as np

if TYPE_CHECKING:
    from .embed import Vocabulary

PAD_INDEX = 0
UNK_INDEX = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# These must survive stopword filtering or negated phrases flip meaning.
NEGATORS = frozenset({"no", "not", "never"})

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_PUNCT_RE = re.compile(r"[^A-Za-z0-9\s]")


def _resource_lines(name: str) -> list[str]:
    text = resources.files("hatedetect.resources").joinpath(name).read_text("utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    """Bundled English stopword list (shipped without negation words)."""
    return frozenset(_resource_lines("stopwords.txt"))


@lru_cache(maxsize=1)
def _contractions() -> tuple[re.Pattern, dict[str, str]]:
    table = {}
    for line in _resource_lines("contractions.txt"):
        short, _, expansion = line.partition("\t")
        table[short.lower()] = expansion
    # Longest alternative first so "can't've" is not eaten by "can't".
    alternatives = sorted(table, key=len, reverse=True)
    pattern = re.compile(
        r"\b(" + "|".join(re.escape(c) for c in alternatives) + r")\b",
        re.IGNORECASE,
    )
    return pattern, table


def expand_contractions(text: str) -> str:
    pattern, table = _contractions()
    return pattern.sub(lambda m: table[m.group(0).lower()], text)


@dataclass(frozen=True)
class PipelineConfig:
    """Normalization switches plus the encoding length.

    The config is immutable and serializes losslessly, so a trained model
    can carry the exact pipeline it was trained with.
    """

    lowercase: bool = True
    expand_contractions: bool = True
    strip_punctuation: bool = True
    stopwords: frozenset = field(default_factory=default_stopwords)
    max_len: int = 50

    def __post_init__(self):
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        banned = NEGATORS & set(self.stopwords)
        if banned:
            raise ValueError(f"stopword list must not contain negators: {sorted(banned)}")

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "expand_contractions": self.expand_contractions,
            "strip_punctuation": self.strip_punctuation,
            "stopwords": sorted(self.stopwords),
            "max_len": self.max_len,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        return cls(
            lowercase=data["lowercase"],
            expand_contractions=data["expand_contractions"],
            strip_punctuation=data["strip_punctuation"],
            stopwords=frozenset(data["stopwords"]),
            max_len=data["max_len"],
        )


def preprocess(text: str, config: PipelineConfig | None = None) -> list[str]:
    """Normalize raw text into a token sequence.

    Step order is fixed: contractions -> lowercase -> punctuation -> split
    -> stopwords. URLs and @-mentions are dropped with the punctuation;
    a hashtag loses its "#" but keeps its body.
    """
    if config is None:
        config = PipelineConfig()
    s = text.replace("’", "'")  # curly apostrophes fold into ASCII
    if config.expand_contractions:
        s = expand_contractions(s)
    if config.lowercase:
        s = s.lower()
    if config.strip_punctuation:
        s = _URL_RE.sub(" ", s)
        s = _MENTION_RE.sub(" ", s)
        s = _PUNCT_RE.sub(" ", s)
    tokens = s.split()
    if config.stopwords:
        tokens = [t for t in tokens if t not in config.stopwords]
    return tokens


def encode(tokens: Iterable[str], vocab: "Vocabulary", max_len: int) -> np.ndarray:
    """Map tokens to vocabulary indices, truncated/right-padded to max_len.

    Unknown tokens map to UNK_INDEX; padding uses PAD_INDEX. Output length
    is always exactly max_len.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    ids = [vocab.index_of(t) for t in tokens][:max_len]
    ids.extend([PAD_INDEX] * (max_len - len(ids)))
    return np.asarray(ids, dtype=np.int64)
