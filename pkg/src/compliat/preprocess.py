"""Text normalization, tokenization, phrase chunking, and entity tagging.

Everything here is a pure function over immutable inputs; no models, no
state. Phrase chunking is gap-based (stopwords, numbers, and punctuation end
a phrase), which is deterministic and adequate for glossary-style matching.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

WORD = "word"
NUMBER = "number"
PUNCTUATION = "punctuation"

# Alphanumeric runs joined by hyphens/apostrophes form one token
# ("StrideTech-ProKnee", "user's"); any other non-space char stands alone.
_TOKEN_RE = re.compile(r"[^\W_]+(?:['’-][^\W_]+)*|\S")
_DIGITS_RE = re.compile(r"\d+")
_WS_RE = re.compile(r"\s+")


def normalize(text: str) -> str:
    """Unicode NFC, control chars removed, whitespace runs collapsed to one space.

    Case is preserved; lowercasing happens per-token. Idempotent.
    """
    composed = unicodedata.normalize("NFC", text)
    cleaned = "".join(
        ch for ch in composed if ch.isspace() or unicodedata.category(ch) != "Cc"
    )
    return _WS_RE.sub(" ", cleaned).strip()


def normalize_term(text: str) -> str:
    """Normalized, lowercased form used as a matching key."""
    return normalize(text).lower()


@dataclass(frozen=True)
class Token:
    surface: str
    normalized: str
    start: int
    end: int
    kind: str


@dataclass(frozen=True)
class Phrase:
    tokens: tuple[Token, ...]
    normalized: str

    @property
    def start(self) -> int:
        return self.tokens[0].start

    @property
    def end(self) -> int:
        return self.tokens[-1].end

    @property
    def surface(self) -> str:
        return " ".join(t.surface for t in self.tokens)


@dataclass(frozen=True)
class TermOccurrence:
    phrase: Phrase
    item_id: str
    kind: str  # product_name | domain_term | generic


PRODUCT_NAME = "product_name"
DOMAIN_TERM = "domain_term"
GENERIC = "generic"


def tokenize(text: str) -> list[Token]:
    """Split normalized text into word/number/punctuation tokens with offsets.

    Surfaces plus the original separators reconstruct the input exactly;
    hyphenated alphanumerics stay single tokens.
    """
    tokens: list[Token] = []
    for match in _TOKEN_RE.finditer(text):
        surface = match.group(0)
        if _DIGITS_RE.fullmatch(surface):
            kind = NUMBER
        elif surface[0].isalnum():
            kind = WORD
        else:
            kind = PUNCTUATION
        tokens.append(
            Token(
                surface=surface,
                normalized=surface.lower(),
                start=match.start(),
                end=match.end(),
                kind=kind,
            )
        )
    return tokens


def chunk_noun_phrases(tokens: list[Token], stoplist: set[str]) -> list[Phrase]:
    """Maximal runs of non-stopword word tokens, split at punctuation and numbers."""
    phrases: list[Phrase] = []
    run: list[Token] = []

    def flush() -> None:
        if run:
            phrases.append(
                Phrase(tokens=tuple(run), normalized=" ".join(t.normalized for t in run))
            )
            run.clear()

    for token in tokens:
        if token.kind != WORD or token.normalized in stoplist:
            flush()
        else:
            run.append(token)
    flush()
    return phrases


def _looks_like_product(surface: str) -> bool:
    # Letter first, then an uppercase letter directly after a lowercase or hyphen.
    if not surface or not surface[0].isalpha():
        return False
    for prev, ch in zip(surface, surface[1:]):
        if ch.isupper() and (prev.islower() or prev == "-"):
            return True
    return False


def extract_entities(
    phrases: list[Phrase], gazetteer: set[str], item_id: str
) -> list[TermOccurrence]:
    """Tag each phrase as product_name, domain_term, or generic.

    A phrase is a product name if its normalized form is in the gazetteer or
    any token shows internal capitalization ("StrideTech-ProKnee", "iPad");
    otherwise multi-word phrases are domain terms and single words generic.
    """
    occurrences: list[TermOccurrence] = []
    for phrase in phrases:
        if phrase.normalized in gazetteer or any(
            _looks_like_product(t.surface) for t in phrase.tokens
        ):
            kind = PRODUCT_NAME
        elif len(phrase.tokens) > 1:
            kind = DOMAIN_TERM
        else:
            kind = GENERIC
        occurrences.append(TermOccurrence(phrase=phrase, item_id=item_id, kind=kind))
    return occurrences


def default_stoplist() -> set[str]:
    """The packaged English stopword list."""
    data = resources.files("compliat").joinpath("data/stopwords.txt").read_text("utf-8")
    return {line.strip() for line in data.splitlines() if line.strip()}


def load_stoplist(path: str | Path | None) -> set[str]:
    """Stoplist from ``path`` (one normalized word per line), or the packaged default."""
    if path is None:
        return default_stoplist()
    words = Path(path).read_text("utf-8").splitlines()
    return {normalize_term(w) for w in words if w.strip()}


def load_gazetteer(path: str | Path | None) -> set[str]:
    """Gazetteer from ``path`` (one normalized phrase per line); empty when absent."""
    if path is None:
        return set()
    lines = Path(path).read_text("utf-8").splitlines()
    return {normalize_term(line) for line in lines if line.strip()}
