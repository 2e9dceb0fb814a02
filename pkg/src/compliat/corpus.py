"""Input corpora: taxonomy, product specs, standards, and the code registry.

All four corpora are line-delimited UTF-8 text with tab-separated fields.
Lines starting with ``#`` and blank lines are ignored. Parsed values are
immutable after construction and safe to share across threads.

Two parsing layers exist: ``scan_*`` functions read a whole file leniently and
collect one :class:`Diagnostic` per problem (used by ``compliat validate``),
while ``parse_*`` functions raise the first problem as a typed exception.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from compliat.errors import (
    CorpusError,
    CorpusSyntaxError,
    DuplicateClauseId,
    DuplicateCode,
    DuplicateItemId,
    DuplicateMapping,
    EmptySpec,
    MalformedCode,
    OrphanCode,
)
from compliat.preprocess import normalize

_CODE_RE = re.compile(r"\d{2}( \d{2}){0,2}")

_LIST_SEP = "|"


@dataclass(frozen=True, order=True)
class TaxonomyCode:
    """Hierarchical class code such as ``06 24 33``; one to three 2-digit segments."""

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not _CODE_RE.fullmatch(str(self)):
            raise MalformedCode(f"invalid code {' '.join(self.segments)!r}")

    def __str__(self) -> str:
        return " ".join(self.segments)

    @property
    def level(self) -> int:
        return len(self.segments)

    def parent(self) -> TaxonomyCode | None:
        if self.level == 1:
            return None
        return TaxonomyCode(self.segments[:-1])

    def is_prefix_of(self, other: TaxonomyCode) -> bool:
        """True when ``other`` equals this code or descends from it."""
        return other.segments[: len(self.segments)] == self.segments


def parse_code(s: str) -> TaxonomyCode:
    """Parse a code string, trimming surrounding whitespace.

    Raises MalformedCode for anything not matching ``DD( DD){0,2}``.
    """
    text = s.strip()
    if not _CODE_RE.fullmatch(text):
        raise MalformedCode(f"invalid code {text!r}")
    return TaxonomyCode(tuple(text.split(" ")))


def ancestors(code: TaxonomyCode) -> list[TaxonomyCode]:
    """Proper prefixes of ``code``, shortest first; empty for level-1 codes."""
    return [TaxonomyCode(code.segments[:i]) for i in range(1, code.level)]


@dataclass(frozen=True)
class TaxonomyNode:
    code: TaxonomyCode
    title: str
    definition: str = ""
    synonyms: tuple[str, ...] = ()
    example_products: tuple[str, ...] = ()


@dataclass(frozen=True)
class Taxonomy:
    """Map from canonical code string to node; parents always present."""

    nodes: dict[str, TaxonomyNode] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def get(self, code: str | TaxonomyCode) -> TaxonomyNode | None:
        return self.nodes.get(str(code))

    def roots(self) -> list[TaxonomyNode]:
        """Level-1 nodes, sorted by code."""
        return sorted(
            (n for n in self.nodes.values() if n.code.level == 1),
            key=lambda n: n.code,
        )

    def children(self, code: TaxonomyCode) -> list[TaxonomyNode]:
        """Direct children of ``code``, sorted by code."""
        return sorted(
            (
                n
                for n in self.nodes.values()
                if n.code.level == code.level + 1 and n.code.segments[:-1] == code.segments
            ),
            key=lambda n: n.code,
        )


@dataclass(frozen=True)
class RequirementItem:
    item_id: str
    text: str


@dataclass(frozen=True)
class SpecDocument:
    spec_id: str
    title: str
    items: tuple[RequirementItem, ...]
    metadata: dict[str, str] = field(default_factory=dict)

    def item_ids(self) -> list[str]:
        return [item.item_id for item in self.items]


@dataclass(frozen=True)
class Clause:
    clause_id: str
    heading: str
    text: str


@dataclass(frozen=True)
class VocabularyEntry:
    canonical: str
    synonyms: tuple[str, ...] = ()
    source_clause: str | None = None


@dataclass(frozen=True)
class StandardDocument:
    standard_id: str
    title: str
    clauses: tuple[Clause, ...] = ()
    vocabulary: tuple[VocabularyEntry, ...] = ()


@dataclass(frozen=True)
class RegistryEntry:
    code_prefix: TaxonomyCode
    standard_ids: tuple[str, ...]


@dataclass(frozen=True)
class StandardsRegistry:
    entries: tuple[RegistryEntry, ...] = ()


@dataclass(frozen=True)
class Diagnostic:
    """One problem found while scanning a corpus file."""

    line: int
    kind: type[CorpusError]
    message: str

    def to_error(self) -> CorpusError:
        return self.kind(self.message, line=self.line)


def _decode(data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusSyntaxError(f"not valid UTF-8: {exc}") from exc


def _records(text: str) -> list[tuple[int, list[str]]]:
    """Yield (line_number, fields) for every record line, skipping comments."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        out.append((lineno, raw.split("\t")))
    return out


def _split_list(raw: str) -> list[str]:
    return [part for part in raw.split(_LIST_SEP) if part.strip()]


def _clean_terms(raw_terms: list[str], exclude_norm: str | None = None) -> tuple[str, ...]:
    """Normalize, drop empties and duplicates (case-insensitive), drop ``exclude_norm``."""
    seen: set[str] = set()
    kept: list[str] = []
    for term in raw_terms:
        cleaned = normalize(term)
        key = cleaned.lower()
        if not cleaned or key in seen or key == exclude_norm:
            continue
        seen.add(key)
        kept.append(cleaned)
    return tuple(kept)


def _raise_first(diagnostics: list[Diagnostic]) -> None:
    if diagnostics:
        raise diagnostics[0].to_error()


# -- taxonomy -----------------------------------------------------------------


def scan_taxonomy(text: str) -> tuple[Taxonomy, list[Diagnostic]]:
    nodes: dict[str, TaxonomyNode] = {}
    node_lines: dict[str, int] = {}
    diags: list[Diagnostic] = []
    for lineno, fields in _records(text):
        if not 3 <= len(fields) <= 5:
            diags.append(
                Diagnostic(lineno, CorpusSyntaxError, f"expected 3-5 fields, got {len(fields)}")
            )
            continue
        try:
            code = parse_code(fields[0])
        except MalformedCode as exc:
            diags.append(Diagnostic(lineno, MalformedCode, str(exc)))
            continue
        title = normalize(fields[1])
        if not title:
            diags.append(Diagnostic(lineno, CorpusSyntaxError, f"empty title for code {code}"))
            continue
        key = str(code)
        if key in nodes:
            diags.append(Diagnostic(lineno, DuplicateCode, f"code {key} already defined"))
            continue
        synonyms = _clean_terms(_split_list(fields[3]) if len(fields) > 3 else [], title.lower())
        examples = _clean_terms(_split_list(fields[4]) if len(fields) > 4 else [])
        nodes[key] = TaxonomyNode(
            code=code,
            title=title,
            definition=normalize(fields[2]),
            synonyms=synonyms,
            example_products=examples,
        )
        node_lines[key] = lineno
    for key in sorted(nodes):
        node = nodes[key]
        for anc in ancestors(node.code):
            if str(anc) not in nodes:
                diags.append(
                    Diagnostic(node_lines[key], OrphanCode, f"code {key} lacks parent {anc}")
                )
                break
    diags.sort(key=lambda d: d.line)
    return Taxonomy(nodes=nodes), diags


def parse_taxonomy(data: bytes) -> Taxonomy:
    taxonomy, diags = scan_taxonomy(_decode(data))
    _raise_first(diags)
    return taxonomy


def serialize_taxonomy(taxonomy: Taxonomy) -> bytes:
    lines = []
    for key in sorted(taxonomy.nodes, key=lambda k: taxonomy.nodes[k].code):
        node = taxonomy.nodes[key]
        lines.append(
            "\t".join(
                (
                    str(node.code),
                    node.title,
                    node.definition,
                    _LIST_SEP.join(node.synonyms),
                    _LIST_SEP.join(node.example_products),
                )
            )
        )
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


# -- product spec -------------------------------------------------------------


def scan_spec(text: str) -> tuple[SpecDocument | None, list[Diagnostic]]:
    diags: list[Diagnostic] = []
    spec_id = ""
    title = ""
    header_seen = False
    items: list[RequirementItem] = []
    metadata: dict[str, str] = {}
    seen_ids: set[str] = set()
    last_line = 0
    for lineno, fields in _records(text):
        last_line = lineno
        kind = fields[0]
        if kind == "spec":
            if header_seen:
                diags.append(Diagnostic(lineno, CorpusSyntaxError, "duplicate spec header"))
                continue
            if len(fields) != 3:
                diags.append(Diagnostic(lineno, CorpusSyntaxError, "spec header needs 3 fields"))
                continue
            header_seen = True
            spec_id = normalize(fields[1])
            title = normalize(fields[2])
            if not spec_id:
                diags.append(Diagnostic(lineno, CorpusSyntaxError, "empty spec id"))
        elif kind == "item":
            if len(fields) != 3:
                diags.append(Diagnostic(lineno, CorpusSyntaxError, "item record needs 3 fields"))
                continue
            item_id = normalize(fields[1])
            item_text = normalize(fields[2])
            if not item_id or not item_text:
                diags.append(Diagnostic(lineno, CorpusSyntaxError, "empty item id or text"))
                continue
            if item_id in seen_ids:
                diags.append(Diagnostic(lineno, DuplicateItemId, f"item id {item_id!r} reused"))
                continue
            seen_ids.add(item_id)
            items.append(RequirementItem(item_id=item_id, text=item_text))
        elif kind == "meta":
            if len(fields) != 3:
                diags.append(Diagnostic(lineno, CorpusSyntaxError, "meta record needs 3 fields"))
                continue
            metadata[normalize(fields[1])] = normalize(fields[2])
        else:
            diags.append(Diagnostic(lineno, CorpusSyntaxError, f"unknown record kind {kind!r}"))
    if not header_seen:
        diags.append(Diagnostic(last_line or 1, CorpusSyntaxError, "missing spec header"))
        diags.sort(key=lambda d: d.line)
        return None, diags
    if not items:
        diags.append(Diagnostic(last_line or 1, EmptySpec, "spec has no items"))
    diags.sort(key=lambda d: d.line)
    doc = SpecDocument(spec_id=spec_id, title=title, items=tuple(items), metadata=metadata)
    return doc, diags


def parse_spec(data: bytes) -> SpecDocument:
    doc, diags = scan_spec(_decode(data))
    _raise_first(diags)
    assert doc is not None
    return doc


def serialize_spec(doc: SpecDocument) -> bytes:
    lines = [f"spec\t{doc.spec_id}\t{doc.title}"]
    for key in sorted(doc.metadata):
        lines.append(f"meta\t{key}\t{doc.metadata[key]}")
    for item in doc.items:
        lines.append(f"item\t{item.item_id}\t{item.text}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- standard -----------------------------------------------------------------


def scan_standard(text: str) -> tuple[StandardDocument | None, list[Diagnostic]]:
    diags: list[Diagnostic] = []
    header_seen = False
    standard_id = ""
    title = ""
    clauses: list[Clause] = []
    vocabulary: list[VocabularyEntry] = []
    seen_clause_ids: set[str] = set()
    last_line = 0
    for lineno, fields in _records(text):
        last_line = lineno
        kind = fields[0]
        if kind == "standard":
            if header_seen:
                diags.append(Diagnostic(lineno, CorpusSyntaxError, "duplicate standard header"))
                continue
            if len(fields) != 3:
                diags.append(
                    Diagnostic(lineno, CorpusSyntaxError, "standard header needs 3 fields")
                )
                continue
            header_seen = True
            standard_id = normalize(fields[1])
            title = normalize(fields[2])
            if not standard_id:
                diags.append(Diagnostic(lineno, CorpusSyntaxError, "empty standard id"))
        elif kind == "clause":
            if len(fields) != 4:
                diags.append(Diagnostic(lineno, CorpusSyntaxError, "clause record needs 4 fields"))
                continue
            clause_id = normalize(fields[1])
            clause_text = normalize(fields[3])
            if not clause_id or not clause_text:
                diags.append(Diagnostic(lineno, CorpusSyntaxError, "empty clause id or text"))
                continue
            if clause_id in seen_clause_ids:
                diags.append(
                    Diagnostic(lineno, DuplicateClauseId, f"clause id {clause_id!r} reused")
                )
                continue
            seen_clause_ids.add(clause_id)
            clauses.append(
                Clause(clause_id=clause_id, heading=normalize(fields[2]), text=clause_text)
            )
        elif kind == "term":
            if len(fields) not in (3, 4):
                diags.append(
                    Diagnostic(lineno, CorpusSyntaxError, "term record needs 3 or 4 fields")
                )
                continue
            canonical = normalize(fields[1])
            if not canonical:
                diags.append(Diagnostic(lineno, CorpusSyntaxError, "empty canonical term"))
                continue
            source = normalize(fields[3]) if len(fields) == 4 and fields[3].strip() else None
            vocabulary.append(
                VocabularyEntry(
                    canonical=canonical,
                    synonyms=_clean_terms(_split_list(fields[2]), canonical.lower()),
                    source_clause=source,
                )
            )
        else:
            diags.append(Diagnostic(lineno, CorpusSyntaxError, f"unknown record kind {kind!r}"))
    if not header_seen:
        diags.append(Diagnostic(last_line or 1, CorpusSyntaxError, "missing standard header"))
        diags.sort(key=lambda d: d.line)
        return None, diags
    diags.sort(key=lambda d: d.line)
    doc = StandardDocument(
        standard_id=standard_id,
        title=title,
        clauses=tuple(clauses),
        vocabulary=tuple(vocabulary),
    )
    return doc, diags


def parse_standard(data: bytes) -> StandardDocument:
    doc, diags = scan_standard(_decode(data))
    _raise_first(diags)
    assert doc is not None
    return doc


def serialize_standard(doc: StandardDocument) -> bytes:
    lines = [f"standard\t{doc.standard_id}\t{doc.title}"]
    for clause in doc.clauses:
        lines.append(f"clause\t{clause.clause_id}\t{clause.heading}\t{clause.text}")
    for entry in doc.vocabulary:
        fields = ["term", entry.canonical, _LIST_SEP.join(entry.synonyms)]
        if entry.source_clause is not None:
            fields.append(entry.source_clause)
        lines.append("\t".join(fields))
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- registry -----------------------------------------------------------------


def scan_registry(text: str) -> tuple[StandardsRegistry, list[Diagnostic]]:
    diags: list[Diagnostic] = []
    entries: list[RegistryEntry] = []
    seen: set[tuple[str, str]] = set()
    for lineno, fields in _records(text):
        if fields[0] != "map":
            diags.append(Diagnostic(lineno, CorpusSyntaxError, f"unknown record kind {fields[0]!r}"))
            continue
        if len(fields) != 3:
            diags.append(Diagnostic(lineno, CorpusSyntaxError, "map record needs 3 fields"))
            continue
        try:
            prefix = parse_code(fields[1])
        except MalformedCode as exc:
            diags.append(Diagnostic(lineno, MalformedCode, str(exc)))
            continue
        ids: list[str] = []
        ok = True
        for raw_id in _split_list(fields[2]):
            std_id = normalize(raw_id)
            pair = (str(prefix), std_id)
            if pair in seen:
                diags.append(
                    Diagnostic(
                        lineno,
                        DuplicateMapping,
                        f"{std_id!r} already mapped under prefix {prefix}",
                    )
                )
                ok = False
                continue
            seen.add(pair)
            ids.append(std_id)
        if ok or ids:
            entries.append(RegistryEntry(code_prefix=prefix, standard_ids=tuple(ids)))
    return StandardsRegistry(entries=tuple(entries)), diags


def parse_registry(data: bytes) -> StandardsRegistry:
    registry, diags = scan_registry(_decode(data))
    _raise_first(diags)
    return registry


def serialize_registry(registry: StandardsRegistry) -> bytes:
    lines = [
        f"map\t{entry.code_prefix}\t{_LIST_SEP.join(entry.standard_ids)}"
        for entry in registry.entries
    ]
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")
