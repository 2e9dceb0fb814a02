"""Trace links from spec items to standard clauses and the assembled report.

Standards applicable to a spec are resolved from the code registry by prefix;
every spec item is traced (no salience filtering, so ``uncovered_items`` means
something); each kept link gets a preliminary verdict from the generator.
Canonical JSON rendering is byte-deterministic: fixed key order, reals with
four decimals, no timestamps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path

import compliat
from compliat.classify import ClassificationResult, CodeAssignment
from compliat.corpus import (
    Clause,
    Diagnostic,
    SpecDocument,
    StandardDocument,
    StandardsRegistry,
    ancestors,
    serialize_standard,
)
from compliat.errors import CorpusSyntaxError, CrossSpecMismatch, ProviderFailure
from compliat.preprocess import normalize, normalize_term
from compliat.providers import ASSESSMENT_HEADER, Provider
from compliat.retrieval import Index, load_or_build, search
from compliat.termcheck import TermMatch, TerminologySection

VERDICT_COMPLIANT = "Compliant"
VERDICT_NON_COMPLIANT = "NonCompliant"
VERDICT_NEEDS_REVIEW = "NeedsReview"

_ANSWER_WORDS = {
    "COMPLIANT": VERDICT_COMPLIANT,
    "NON-COMPLIANT": VERDICT_NON_COMPLIANT,
    "NEEDS-REVIEW": VERDICT_NEEDS_REVIEW,
}

DEFAULT_TAU_LINK = 0.70
DEFAULT_K = 5

UNPARSEABLE_RATIONALE = "unparseable-assessment"


@dataclass(frozen=True)
class TraceLink:
    item_id: str
    standard_id: str
    clause_id: str
    score: float  # [0, 1] mapped similarity; >= the link threshold at creation
    verdict: str
    rationale: str


@dataclass(frozen=True)
class ComplianceRule:
    rule_id: str
    applies_to_standard: str
    rule_text: str


@dataclass(frozen=True)
class ComplianceReport:
    spec_id: str
    terminology: TerminologySection
    classification: ClassificationResult
    applicable_standards: tuple[str, ...]
    links: tuple[TraceLink, ...]
    uncovered_items: tuple[str, ...]
    summary: dict[str, int]
    tool_version: str


# -- rules file ----------------------------------------------------------------


def scan_rules(text: str) -> tuple[tuple[ComplianceRule, ...], list[Diagnostic]]:
    rules: list[ComplianceRule] = []
    diags: list[Diagnostic] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        fields = raw.split("\t")
        if fields[0] != "rule" or len(fields) != 4:
            diags.append(
                Diagnostic(lineno, CorpusSyntaxError, "rule record needs 4 fields: rule\\tid\\tstandard\\ttext")
            )
            continue
        rule_text = normalize(fields[3])
        if not rule_text:
            diags.append(Diagnostic(lineno, CorpusSyntaxError, "empty rule text"))
            continue
        rules.append(
            ComplianceRule(
                rule_id=normalize(fields[1]),
                applies_to_standard=normalize(fields[2]),
                rule_text=rule_text,
            )
        )
    return tuple(rules), diags


def parse_rules(data: bytes) -> tuple[ComplianceRule, ...]:
    rules, diags = scan_rules(data.decode("utf-8"))
    if diags:
        raise diags[0].to_error()
    return rules


# -- applicable standards --------------------------------------------------------


def applicable_standards(
    registry: StandardsRegistry, result: ClassificationResult
) -> list[str]:
    """Standards registered for any assigned code or an ancestor of it.

    Deduplicated; ordered by first match (assignment order, then registry
    order), ties within one entry by id ascending.
    """
    best_rank: dict[str, tuple[int, int]] = {}
    for a_idx, assignment in enumerate(result.assignments):
        prefixes = {str(p) for p in (*ancestors(assignment.code), assignment.code)}
        for e_idx, entry in enumerate(registry.entries):
            if str(entry.code_prefix) in prefixes:
                for std_id in entry.standard_ids:
                    rank = (a_idx, e_idx)
                    if std_id not in best_rank or rank < best_rank[std_id]:
                        best_rank[std_id] = rank
    return sorted(best_rank, key=lambda std_id: (best_rank[std_id], std_id))


# -- tracing ---------------------------------------------------------------------


def clause_index(
    standard: StandardDocument, provider: Provider, cache_dir: Path | None = None
) -> Index:
    """Per-standard clause index, cached by standard content."""
    entries = [
        (
            f"{standard.standard_id}/{clause.clause_id}",
            normalize_term(f"{clause.heading} {clause.text}"),
            {"standard": standard.standard_id, "clause": clause.clause_id},
        )
        for clause in standard.clauses
    ]
    return load_or_build(cache_dir, serialize_standard(standard), entries, provider)


def trace(
    spec: SpecDocument,
    standards: list[StandardDocument],
    provider: Provider,
    k: int = DEFAULT_K,
    tau_link: float = DEFAULT_TAU_LINK,
    cache_dir: Path | None = None,
) -> list[TraceLink]:
    """Link every spec item to its top-k most similar clauses per standard.

    Hits below ``tau_link`` on the [0, 1] mapped scale are dropped. Verdicts
    are NeedsReview placeholders until :func:`assess` fills them.
    """
    if not 0.0 <= tau_link <= 1.0:
        raise ValueError("tau_link must be in [0, 1]")
    indexes = [
        (standard, clause_index(standard, provider, cache_dir))
        for standard in standards
        if standard.clauses
    ]
    links: list[TraceLink] = []
    for item in spec.items:
        for standard, index in indexes:
            for hit in search(index, item.text, k, provider):
                mapped = (hit.score + 1.0) / 2.0
                if mapped < tau_link:
                    continue
                links.append(
                    TraceLink(
                        item_id=item.item_id,
                        standard_id=standard.standard_id,
                        clause_id=index.tag(hit.key, "clause") or hit.key,
                        score=mapped,
                        verdict=VERDICT_NEEDS_REVIEW,
                        rationale="",
                    )
                )
    return links


def build_assessment_prompt(
    item_text: str, clause: Clause, rules: list[ComplianceRule]
) -> str:
    """The versioned assessment prompt; first answer line must be a verdict word."""
    lines = [ASSESSMENT_HEADER]
    lines.append(f"ITEM\t{item_text}")
    lines.append(f"CLAUSE\t{clause.heading}\t{clause.text}")
    lines.extend(f"RULE\t{rule.rule_id}\t{rule.rule_text}" for rule in rules)
    lines.append("ANSWER FIRST LINE: COMPLIANT | NON-COMPLIANT | NEEDS-REVIEW")
    return "\n".join(lines)


def assess(
    link: TraceLink,
    item_text: str,
    clause: Clause,
    rules: list[ComplianceRule],
    provider: Provider,
) -> TraceLink:
    """Fill the link verdict from the generator; unparseable output -> NeedsReview."""
    scoped = [rule for rule in rules if rule.applies_to_standard == link.standard_id]
    prompt = build_assessment_prompt(item_text, clause, scoped)
    try:
        output = provider.generate(prompt, [])
    except ProviderFailure:
        raise
    except Exception as exc:
        raise ProviderFailure(f"generation failed: {exc}") from exc
    first, _, rest = output.partition("\n")
    verdict = _ANSWER_WORDS.get(first.strip())
    if verdict is None:
        return replace(link, verdict=VERDICT_NEEDS_REVIEW, rationale=UNPARSEABLE_RATIONALE)
    return replace(link, verdict=verdict, rationale=rest.strip())


# -- report ----------------------------------------------------------------------


def build_report(
    spec: SpecDocument,
    terminology: TerminologySection,
    classification: ClassificationResult,
    standards: list[str],
    links: list[TraceLink],
) -> ComplianceReport:
    """Assemble the final report; components must come from the same spec."""
    if classification.spec_id != spec.spec_id:
        raise CrossSpecMismatch(
            f"classification is for {classification.spec_id!r}, spec is {spec.spec_id!r}"
        )
    item_ids = set(spec.item_ids())
    for link in links:
        if link.item_id not in item_ids:
            raise CrossSpecMismatch(f"link references unknown item {link.item_id!r}")
    linked = {link.item_id for link in links}
    uncovered = tuple(item_id for item_id in spec.item_ids() if item_id not in linked)
    summary = {
        VERDICT_COMPLIANT: 0,
        VERDICT_NON_COMPLIANT: 0,
        VERDICT_NEEDS_REVIEW: 0,
    }
    for link in links:
        summary[link.verdict] += 1
    return ComplianceReport(
        spec_id=spec.spec_id,
        terminology=terminology,
        classification=classification,
        applicable_standards=tuple(standards),
        links=tuple(links),
        uncovered_items=uncovered,
        summary=summary,
        tool_version=compliat.__version__,
    )


# -- rendering -------------------------------------------------------------------


def _q4(value: float) -> float:
    return round(value, 4)


def canonical_json(value: object) -> str:
    """Deterministic JSON: insertion-ordered keys, reals as 4-decimal numbers."""
    if isinstance(value, dict):
        inner = ",".join(f"{json.dumps(k, ensure_ascii=False)}:{canonical_json(v)}" for k, v in value.items())
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in value) + "]"
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, float):
        return f"{value:.4f}"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    raise TypeError(f"cannot render {type(value).__name__} canonically")


def match_to_dict(match: TermMatch) -> dict:
    return {
        "spec_term": match.spec_term,
        "verdict": match.verdict,
        "matched_canonical": match.matched_canonical,
        "similarity": _q4(match.similarity),
        "evidence": match.evidence,
        "recommendation": match.recommendation,
        "occurrences": [
            {"item_id": item_id, "start": start, "end": end}
            for item_id, start, end in match.occurrences
        ],
    }


def terminology_to_dict(section: TerminologySection) -> dict:
    return {
        "counts": dict(section.counts),
        "matches": [match_to_dict(match) for match in section.matches],
    }


def assignment_to_dict(assignment: CodeAssignment) -> dict:
    return {
        "code": str(assignment.code),
        "role": assignment.role,
        "path_scores": [_q4(s) for s in assignment.path_scores],
        "confidence": _q4(assignment.confidence),
        "rationale": assignment.rationale,
    }


def classification_to_dict(result: ClassificationResult) -> dict:
    return {
        "query_digest": result.query_digest,
        "assignments": [assignment_to_dict(a) for a in result.assignments],
    }


def link_to_dict(link: TraceLink) -> dict:
    return {
        "item_id": link.item_id,
        "standard_id": link.standard_id,
        "clause_id": link.clause_id,
        "score": _q4(link.score),
        "verdict": link.verdict,
        "rationale": link.rationale,
    }


def report_to_dict(report: ComplianceReport) -> dict:
    """The canonical report structure, keys in fixed schema order."""
    return {
        "spec_id": report.spec_id,
        "tool_version": report.tool_version,
        "terminology": terminology_to_dict(report.terminology),
        "classification": classification_to_dict(report.classification),
        "applicable_standards": list(report.applicable_standards),
        "links": [link_to_dict(link) for link in report.links],
        "uncovered_items": list(report.uncovered_items),
        "summary": dict(report.summary),
    }


def render_json(report: ComplianceReport) -> bytes:
    return canonical_json(report_to_dict(report)).encode("utf-8")


def _md_escape(text: str) -> str:
    return text.replace("|", "\\|")


def terminology_markdown(section: TerminologySection) -> list[str]:
    counts = section.counts
    lines = ["## Terminology", ""]
    lines.append(
        "Findings: "
        + ", ".join(f"{name} {counts[name]}" for name in counts)
    )
    if section.matches:
        lines.append("")
        lines.append("| term | verdict | matched canonical | similarity | recommendation |")
        lines.append("| --- | --- | --- | --- | --- |")
        for match in section.matches:
            lines.append(
                "| {term} | {verdict} | {canon} | {sim:.4f} | {rec} |".format(
                    term=_md_escape(match.spec_term),
                    verdict=match.verdict,
                    canon=_md_escape(match.matched_canonical or "-"),
                    sim=match.similarity,
                    rec=_md_escape(match.recommendation or "-"),
                )
            )
    return lines


def classification_markdown(result: ClassificationResult) -> list[str]:
    lines = ["## Classification", ""]
    for assignment in result.assignments:
        lines.append(
            "- `{code}` ({role}) confidence {conf:.4f} — {rationale}".format(
                code=assignment.code,
                role=assignment.role,
                conf=assignment.confidence,
                rationale=_md_escape(assignment.rationale or "-"),
            )
        )
    lines.append("")
    lines.append(f"Query digest: {result.query_digest}")
    return lines


def links_markdown(links: tuple[TraceLink, ...] | list[TraceLink]) -> list[str]:
    lines = ["## Trace links", ""]
    if not links:
        lines.append("No links at the configured threshold.")
        return lines
    lines.append("| item | standard | clause | score | verdict | rationale |")
    lines.append("| --- | --- | --- | --- | --- | --- |")
    for link in links:
        lines.append(
            "| {item} | {std} | {clause} | {score:.4f} | {verdict} | {rationale} |".format(
                item=_md_escape(link.item_id),
                std=_md_escape(link.standard_id),
                clause=_md_escape(link.clause_id),
                score=link.score,
                verdict=link.verdict,
                rationale=_md_escape(link.rationale or "-"),
            )
        )
    return lines


def render_markdown(report: ComplianceReport, now: datetime | None = None) -> bytes:
    """Human-readable report; time is omitted unless a clock value is injected."""
    lines = [f"# Compliance report: {report.spec_id}", ""]
    lines.append(f"Tool version: {report.tool_version}")
    if now is not None:
        lines.append(f"Generated: {now.isoformat()}")
    lines.append("")
    lines.extend(terminology_markdown(report.terminology))
    lines.append("")
    lines.extend(classification_markdown(report.classification))
    lines.append("")
    lines.append("## Applicable standards")
    lines.append("")
    if report.applicable_standards:
        lines.extend(f"- {std}" for std in report.applicable_standards)
    else:
        lines.append("None resolved from the registry.")
    lines.append("")
    lines.extend(links_markdown(report.links))
    lines.append("")
    lines.append("## Uncovered items")
    lines.append("")
    if report.uncovered_items:
        lines.extend(f"- {item_id}" for item_id in report.uncovered_items)
    else:
        lines.append("Every item has at least one trace link.")
    lines.append("")
    lines.append("## Summary")
    lines.append("")
    lines.extend(f"- {verdict}: {count}" for verdict, count in report.summary.items())
    lines.append("")
    return "\n".join(lines).encode("utf-8")


def render(report: ComplianceReport, fmt: str, now: datetime | None = None) -> bytes:
    if fmt == "json":
        return render_json(report)
    if fmt in ("markdown", "md"):
        return render_markdown(report, now=now)
    raise ValueError(f"unknown format {fmt!r}")
