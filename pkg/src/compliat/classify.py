"""Hierarchical multi-label classification of a spec into taxonomy codes.

The descent narrows level by level: candidates are scored by retrieval
similarity between the spec digest and their knowledge-base payloads, the
top-k are offered to the generator in a fixed prompt, and the generator must
answer with one listed code. Off-list answers get exactly one retry, then the
retrieval argmax wins and the assignment rationale is flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from compliat.corpus import SpecDocument, Taxonomy, TaxonomyCode, TaxonomyNode
from compliat.errors import BadParams, EmptyTaxonomy, ProviderFailure
from compliat.preprocess import default_stoplist, normalize_term
from compliat.providers import SELECTION_HEADER, Provider
from compliat.retrieval import Index, build_index, cosine, load_or_build
from compliat.termcheck import Keyword, extract_keywords

ROLE_PRIMARY = "primary"
ROLE_SECONDARY = "secondary"

FALLBACK_FLAG = "retrieval-fallback"


@dataclass(frozen=True)
class ClassifyParams:
    k: int = 5
    max_terms: int = 8
    secondary_ratio: float = 0.5
    max_secondary: int = 3

    def validate(self) -> None:
        if self.k < 1:
            raise BadParams("k must be >= 1")
        if self.max_terms < 0:
            raise BadParams("max_terms must be >= 0")
        if self.secondary_ratio < 0.0:
            raise BadParams("secondary_ratio must be >= 0")
        if self.max_secondary < 0:
            raise BadParams("max_secondary must be >= 0")


@dataclass(frozen=True)
class CodeAssignment:
    code: TaxonomyCode
    role: str
    path_scores: tuple[float, ...]  # one [0, 1] score per level of descent
    confidence: float  # geometric mean of path_scores
    rationale: str


@dataclass(frozen=True)
class ClassificationResult:
    spec_id: str
    assignments: tuple[CodeAssignment, ...]  # primary first, then by confidence desc
    query_digest: str

    @property
    def primary(self) -> CodeAssignment:
        return self.assignments[0]


def geometric_mean(values: tuple[float, ...] | list[float]) -> float:
    return math.prod(values) ** (1.0 / len(values))


def spec_digest(spec: SpecDocument, keywords: list[Keyword], max_terms: int) -> str:
    """Query text for retrieval: the spec title plus the top keyword surfaces."""
    parts = [spec.title] if spec.title else []
    parts.extend(kw.surface for kw in keywords[:max_terms])
    return " ".join(parts)


def node_payload(node: TaxonomyNode) -> str:
    pieces = [node.title, node.definition, *node.synonyms, *node.example_products]
    return normalize_term(" ".join(piece for piece in pieces if piece))


def build_kb(taxonomy: Taxonomy, provider: Provider) -> Index:
    """One index entry per taxonomy node; payload concatenates all node fields."""
    entries = [
        (str(node.code), node_payload(node), {"level": str(node.code.level)})
        for node in sorted(taxonomy.nodes.values(), key=lambda n: n.code)
    ]
    return build_index(entries, provider)


def cached_kb(
    taxonomy_bytes: bytes,
    taxonomy: Taxonomy,
    provider: Provider,
    cache_dir: Path | None = None,
) -> Index:
    """Like :func:`build_kb` but backed by the content-addressed cache."""
    entries = [
        (str(node.code), node_payload(node), {"level": str(node.code.level)})
        for node in sorted(taxonomy.nodes.values(), key=lambda n: n.code)
    ]
    return load_or_build(cache_dir, taxonomy_bytes, entries, provider)


def build_selection_prompt(candidates: list[tuple[str, str, float]], digest: str) -> str:
    """The versioned selection prompt: header, candidate lines, then the digest."""
    lines = [SELECTION_HEADER]
    lines.extend(f"{code}\t{title}\t{score:.4f}" for code, title, score in candidates)
    lines.append(digest)
    return "\n".join(lines)


def classify_level(
    digest: str,
    candidates: list[TaxonomyNode],
    kb: Index,
    provider: Provider,
    k: int,
) -> tuple[TaxonomyNode, float, str]:
    """Pick one node among same-level siblings; returns (node, score, rationale).

    The score is the node's retrieval similarity mapped to [0, 1]. A single
    candidate is chosen without consulting the generator.
    """
    if not candidates:
        raise ValueError("classify_level needs at least one candidate")
    try:
        qvec = provider.embed_batch([digest])[0]
    except ProviderFailure:
        raise
    except Exception as exc:
        raise ProviderFailure(f"embedding failed: {exc}") from exc
    scored = sorted(
        (
            ((cosine(qvec, kb.vector(str(node.code))) + 1.0) / 2.0, node)
            for node in candidates
        ),
        key=lambda pair: (-pair[0], pair[1].code),
    )
    if len(scored) == 1:
        score, node = scored[0]
        return node, score, "single candidate at this level"
    top = scored[: min(k, len(scored))]
    by_code = {str(node.code): (score, node) for score, node in top}
    prompt = build_selection_prompt(
        [(str(node.code), node.title, score) for score, node in top], digest
    )
    context = [kb.payload(str(node.code)) for _, node in top]
    for _attempt in range(2):
        try:
            output = provider.generate(prompt, context)
        except ProviderFailure:
            raise
        except Exception as exc:
            raise ProviderFailure(f"generation failed: {exc}") from exc
        first, _, rest = output.partition("\n")
        chosen = by_code.get(first.strip())
        if chosen is not None:
            score, node = chosen
            return node, score, rest.strip()
    # Off-list twice: degrade to the retrieval argmax and flag it.
    score, node = top[0]
    return node, score, FALLBACK_FLAG


def classify(
    spec: SpecDocument,
    taxonomy: Taxonomy,
    kb: Index,
    provider: Provider,
    params: ClassifyParams = ClassifyParams(),
    *,
    stoplist: set[str] | None = None,
    gazetteer: set[str] | None = None,
    keywords: list[Keyword] | None = None,
) -> ClassificationResult:
    """Assign a primary code plus secondary codes from other level-1 branches.

    Each descent runs level by level and stops at a childless node. Secondary
    descents exclude every already-used level-1 branch and are kept while
    their confidence stays within ``secondary_ratio`` of the primary's.
    """
    params.validate()
    if len(taxonomy) == 0:
        raise EmptyTaxonomy("cannot classify against an empty taxonomy")
    if keywords is None:
        keywords = extract_keywords(
            spec,
            default_stoplist() if stoplist is None else stoplist,
            set() if gazetteer is None else gazetteer,
        )
    digest = spec_digest(spec, keywords, params.max_terms)
    roots = taxonomy.roots()

    def descend(level1: list[TaxonomyNode]) -> tuple[TaxonomyCode, tuple[float, ...], str]:
        candidates = level1
        path_scores: list[float] = []
        rationales: list[str] = []
        while True:
            node, score, rationale = classify_level(digest, candidates, kb, provider, params.k)
            path_scores.append(score)
            if rationale:
                rationales.append(rationale)
            children = taxonomy.children(node.code)
            if not children:
                return node.code, tuple(path_scores), " / ".join(rationales)
            candidates = children

    code, scores, rationale = descend(roots)
    primary = CodeAssignment(
        code=code,
        role=ROLE_PRIMARY,
        path_scores=scores,
        confidence=geometric_mean(scores),
        rationale=rationale,
    )
    used_branches = {code.segments[0]}
    secondaries: list[CodeAssignment] = []
    while len(secondaries) < params.max_secondary:
        remaining = [node for node in roots if node.code.segments[0] not in used_branches]
        if not remaining:
            break
        code, scores, rationale = descend(remaining)
        confidence = geometric_mean(scores)
        if confidence < params.secondary_ratio * primary.confidence:
            break
        secondaries.append(
            CodeAssignment(
                code=code,
                role=ROLE_SECONDARY,
                path_scores=scores,
                confidence=confidence,
                rationale=rationale,
            )
        )
        used_branches.add(code.segments[0])
    secondaries.sort(key=lambda a: (-a.confidence, a.code))
    return ClassificationResult(
        spec_id=spec.spec_id,
        assignments=(primary, *secondaries),
        query_digest=digest,
    )
