"""Terminology consistency checking of a product spec against standard vocabulary.

Keywords are extracted from every requirement item, matched against the
vocabulary first by exact (normalized) lookup and only then by embedding
similarity; synonym lists are authoritative over embeddings because the
failure mode this catches is a known synonym used in place of the prescribed
term.
"""

from __future__ import annotations

from dataclasses import dataclass

from compliat.corpus import SpecDocument, VocabularyEntry
from compliat.errors import BadThresholds, ProviderFailure
from compliat.preprocess import (
    DOMAIN_TERM,
    PRODUCT_NAME,
    TermOccurrence,
    chunk_noun_phrases,
    extract_entities,
    normalize_term,
    tokenize,
)
from compliat.providers import Provider
from compliat.retrieval import cosine

CANONICAL = "Canonical"
NON_CANONICAL = "NonCanonical"
NEEDS_REVIEW = "NeedsReview"
UNMATCHED = "Unmatched"

VERDICT_ORDER = (NON_CANONICAL, NEEDS_REVIEW, UNMATCHED, CANONICAL)

EVIDENCE_SYNONYM_LIST = "synonym_list"
EVIDENCE_EMBEDDING = "embedding"

_KIND_RANK = {PRODUCT_NAME: 2, DOMAIN_TERM: 1}

DEFAULT_TAU_HIGH = 0.80
DEFAULT_TAU_LOW = 0.60


@dataclass(frozen=True)
class Keyword:
    """A normalized phrase aggregated over all its occurrences in the spec."""

    occurrence: TermOccurrence  # first occurrence; carries the original surface
    score: float  # occurrence count x token count
    kind: str
    sites: tuple[tuple[str, int, int], ...]  # (item_id, start, end) per occurrence

    @property
    def normalized(self) -> str:
        return self.occurrence.phrase.normalized

    @property
    def surface(self) -> str:
        return self.occurrence.phrase.surface


@dataclass(frozen=True)
class TermMatch:
    spec_term: str
    matched_canonical: str | None
    similarity: float  # on the [0, 1] mapped scale
    verdict: str
    evidence: str
    occurrences: tuple[tuple[str, int, int], ...]

    @property
    def recommendation(self) -> str | None:
        return self.matched_canonical if self.verdict == NON_CANONICAL else None


@dataclass(frozen=True)
class TerminologySection:
    """Matches grouped by verdict (NonCanonical first) plus per-verdict counts."""

    counts: dict[str, int]
    matches: tuple[TermMatch, ...]


def extract_keywords(
    spec: SpecDocument, stoplist: set[str], gazetteer: set[str]
) -> list[Keyword]:
    """Phrases of interest (product names and domain terms), most salient first.

    Salience is occurrence count times phrase length in tokens; ties break by
    normalized form ascending.
    """
    first: dict[str, TermOccurrence] = {}
    best_kind: dict[str, int] = {}
    sites: dict[str, list[tuple[str, int, int]]] = {}
    for item in spec.items:
        phrases = chunk_noun_phrases(tokenize(item.text), stoplist)
        for occ in extract_entities(phrases, gazetteer, item.item_id):
            norm = occ.phrase.normalized
            if norm not in first:
                first[norm] = occ
                best_kind[norm] = 0
                sites[norm] = []
            best_kind[norm] = max(best_kind[norm], _KIND_RANK.get(occ.kind, 0))
            sites[norm].append((occ.item_id, occ.phrase.start, occ.phrase.end))
    keywords = []
    for norm, occ in first.items():
        rank = best_kind[norm]
        if rank == 0:
            continue
        kind = PRODUCT_NAME if rank == 2 else DOMAIN_TERM
        count = len(sites[norm])
        keywords.append(
            Keyword(
                occurrence=occ,
                score=float(count * len(occ.phrase.tokens)),
                kind=kind,
                sites=tuple(sites[norm]),
            )
        )
    keywords.sort(key=lambda kw: (-kw.score, kw.normalized))
    return keywords


def _mapped(cos: float) -> float:
    return (cos + 1.0) / 2.0


def match_terms(
    keywords: list[Keyword],
    vocab: list[VocabularyEntry],
    provider: Provider,
    tau_high: float = DEFAULT_TAU_HIGH,
    tau_low: float = DEFAULT_TAU_LOW,
) -> list[TermMatch]:
    """Resolve each keyword against the vocabulary.

    Resolution order: exact canonical match, exact synonym match, then
    best embedding similarity mapped to [0, 1] and banded by the thresholds
    (>= tau_high NonCanonical, [tau_low, tau_high) NeedsReview, else
    Unmatched).
    """
    if not 0.0 <= tau_low <= tau_high <= 1.0:
        raise BadThresholds(f"need 0 <= tau_low <= tau_high <= 1, got {tau_low}, {tau_high}")
    canon_by_norm: dict[str, str] = {}
    syn_by_norm: dict[str, str] = {}
    vocab_strings: list[tuple[str, str]] = []  # (string, its canonical)
    for entry in vocab:
        key = normalize_term(entry.canonical)
        canon_by_norm.setdefault(key, entry.canonical)
        vocab_strings.append((entry.canonical, entry.canonical))
        for synonym in entry.synonyms:
            syn_by_norm.setdefault(normalize_term(synonym), entry.canonical)
            vocab_strings.append((synonym, entry.canonical))

    vocab_vectors = None
    matches: list[TermMatch] = []
    for keyword in keywords:
        term = keyword.normalized
        if term in canon_by_norm:
            matches.append(
                TermMatch(
                    spec_term=term,
                    matched_canonical=canon_by_norm[term],
                    similarity=1.0,
                    verdict=CANONICAL,
                    evidence=EVIDENCE_SYNONYM_LIST,
                    occurrences=keyword.sites,
                )
            )
            continue
        if term in syn_by_norm:
            matches.append(
                TermMatch(
                    spec_term=term,
                    matched_canonical=syn_by_norm[term],
                    similarity=1.0,
                    verdict=NON_CANONICAL,
                    evidence=EVIDENCE_SYNONYM_LIST,
                    occurrences=keyword.sites,
                )
            )
            continue
        if vocab_vectors is None:
            try:
                vocab_vectors = provider.embed_batch([s for s, _ in vocab_strings])
            except ProviderFailure:
                raise
            except Exception as exc:
                raise ProviderFailure(f"embedding failed: {exc}") from exc
        best_sim = 0.0
        best_canonical: str | None = None
        if vocab_strings:
            try:
                term_vec = provider.embed_batch([term])[0]
            except ProviderFailure:
                raise
            except Exception as exc:
                raise ProviderFailure(f"embedding failed: {exc}") from exc
            for (_, canonical), vec in zip(vocab_strings, vocab_vectors):
                sim = _mapped(cosine(term_vec, vec))
                if sim > best_sim:
                    best_sim = sim
                    best_canonical = canonical
        if best_canonical is not None and best_sim >= tau_high:
            verdict = NON_CANONICAL
            matched = best_canonical
        elif best_canonical is not None and best_sim >= tau_low:
            verdict = NEEDS_REVIEW
            matched = best_canonical
        else:
            verdict = UNMATCHED
            matched = None
        matches.append(
            TermMatch(
                spec_term=term,
                matched_canonical=matched,
                similarity=best_sim,
                verdict=verdict,
                evidence=EVIDENCE_EMBEDDING,
                occurrences=keyword.sites,
            )
        )
    return matches


def terminology_report(matches: list[TermMatch]) -> TerminologySection:
    """Group matches by verdict severity and tally per-verdict counts."""
    counts = {verdict: 0 for verdict in VERDICT_ORDER}
    for match in matches:
        counts[match.verdict] += 1
    ordered = [m for verdict in VERDICT_ORDER for m in matches if m.verdict == verdict]
    return TerminologySection(counts=counts, matches=tuple(ordered))
