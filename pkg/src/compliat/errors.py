"""Exception types shared across the pipeline."""

from __future__ import annotations


class CompliatError(Exception):
    """Base class for all pipeline errors."""


class CorpusError(CompliatError):
    """Base class for corpus parse/validation errors; carries a line number."""

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CorpusSyntaxError(CorpusError):
    """Malformed record: wrong field count, unknown record kind, bad header."""


class MalformedCode(CorpusError):
    """Taxonomy code does not match the two-digit segment grammar."""


class DuplicateCode(CorpusError):
    """Same taxonomy code defined more than once."""


class OrphanCode(CorpusError):
    """Taxonomy code whose parent prefix is missing."""


class DuplicateItemId(CorpusError):
    """Same requirement item id used twice within one product spec."""


class EmptySpec(CorpusError):
    """Product spec with no requirement items."""


class DuplicateClauseId(CorpusError):
    """Same clause id used twice within one standard."""


class DuplicateMapping(CorpusError):
    """Standard id listed more than once under the same registry prefix."""


class DimensionMismatch(CompliatError):
    """Vectors of different dimension combined."""


class DuplicateKey(CompliatError):
    """Index build received two entries with the same key."""


class ProviderFailure(CompliatError):
    """Embedding or generation call failed."""


class ProviderMismatch(CompliatError):
    """Query provider does not match the provider an index was built with."""


class BadThresholds(CompliatError):
    """Threshold arguments violate 0 <= low <= high <= 1."""


class BadParams(CompliatError):
    """Classification parameters are out of range for the given taxonomy."""


class GeneratorOffList(CompliatError):
    """Generator returned a code that was not among the listed candidates."""


class EmptyTaxonomy(CompliatError):
    """Classification requested against a taxonomy with no nodes."""


class CrossSpecMismatch(CompliatError):
    """Report components were produced from different product specs."""


class ConfigError(CompliatError):
    """Bad pipeline configuration or command usage."""
