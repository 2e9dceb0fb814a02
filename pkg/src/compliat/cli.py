"""Command-line pipeline: validate, check-terms, classify, trace, report.

Configuration comes from a JSON file; command-line flags win over config
values. Exit codes: 0 ran clean, 1 ran with findings (non-canonical terms or
non-compliant links), 2 usage/config/parse error, 3 provider failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from compliat import classify as classify_mod
from compliat import compliance, corpus, termcheck
from compliat.errors import (
    BadParams,
    BadThresholds,
    CompliatError,
    ConfigError,
    CorpusError,
    CrossSpecMismatch,
    DimensionMismatch,
    DuplicateKey,
    EmptyTaxonomy,
    ProviderFailure,
    ProviderMismatch,
)
from compliat.preprocess import load_gazetteer, load_stoplist
from compliat.providers import Provider, make_provider
from compliat.retrieval import atomic_write_bytes

EXIT_CLEAN = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_PROVIDER = 3

_CONFIG_KEYS = {"paths", "thresholds", "limits", "provider"}
_PATH_KEYS = {
    "taxonomy",
    "specs",
    "standards",
    "registry",
    "rules",
    "stoplist",
    "gazetteer",
    "cache_dir",
}
_THRESHOLD_KEYS = {"tau_high", "tau_low", "tau_link", "secondary_ratio"}
_LIMIT_KEYS = {"k", "max_terms", "max_secondary"}


@dataclass(frozen=True)
class PipelineConfig:
    taxonomy: Path | None = None
    specs: tuple[Path, ...] = ()
    standards: tuple[Path, ...] = ()
    registry: Path | None = None
    rules: Path | None = None
    stoplist: Path | None = None
    gazetteer: Path | None = None
    cache_dir: Path | None = None
    tau_high: float = termcheck.DEFAULT_TAU_HIGH
    tau_low: float = termcheck.DEFAULT_TAU_LOW
    tau_link: float = compliance.DEFAULT_TAU_LINK
    secondary_ratio: float = 0.5
    k: int = 5
    max_terms: int = 8
    max_secondary: int = 3
    provider: str = "mock"

    def validate(self) -> None:
        if not 0.0 <= self.tau_low <= self.tau_high <= 1.0:
            raise ConfigError(
                f"need 0 <= tau_low <= tau_high <= 1, got {self.tau_low}, {self.tau_high}"
            )
        if not 0.0 <= self.tau_link <= 1.0:
            raise ConfigError(f"tau_link must be in [0, 1], got {self.tau_link}")
        if self.secondary_ratio < 0.0:
            raise ConfigError("secondary_ratio must be >= 0")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.max_terms < 0 or self.max_secondary < 0:
            raise ConfigError("max_terms and max_secondary must be >= 0")
        if not (
            self.provider == "mock"
            or self.provider.startswith("replay:")
            or self.provider.startswith("remote:")
        ):
            raise ConfigError(f"unknown provider {self.provider!r}")


def _expect_keys(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")


def _as_path(base: Path, value: object, name: str) -> Path:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"paths.{name} must be a non-empty string")
    candidate = Path(value)
    return candidate if candidate.is_absolute() else base / candidate


def load_config(path: Path | str) -> PipelineConfig:
    """Parse and validate a JSON config; relative paths resolve beside the file."""
    config_path = Path(path)
    try:
        raw = json.loads(config_path.read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {config_path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _expect_keys(raw, _CONFIG_KEYS, "config")
    base = config_path.parent
    values: dict = {}

    paths = raw.get("paths", {})
    if not isinstance(paths, dict):
        raise ConfigError("paths must be an object")
    _expect_keys(paths, _PATH_KEYS, "paths")
    for name in ("taxonomy", "registry", "rules", "stoplist", "gazetteer", "cache_dir"):
        if name in paths:
            values[name] = _as_path(base, paths[name], name)
    for name in ("specs", "standards"):
        if name in paths:
            items = paths[name]
            if not isinstance(items, list):
                raise ConfigError(f"paths.{name} must be a list of paths")
            values[name] = tuple(_as_path(base, item, name) for item in items)

    thresholds = raw.get("thresholds", {})
    if not isinstance(thresholds, dict):
        raise ConfigError("thresholds must be an object")
    _expect_keys(thresholds, _THRESHOLD_KEYS, "thresholds")
    for name in _THRESHOLD_KEYS:
        if name in thresholds:
            if not isinstance(thresholds[name], (int, float)) or isinstance(
                thresholds[name], bool
            ):
                raise ConfigError(f"thresholds.{name} must be a number")
            values[name] = float(thresholds[name])

    limits = raw.get("limits", {})
    if not isinstance(limits, dict):
        raise ConfigError("limits must be an object")
    _expect_keys(limits, _LIMIT_KEYS, "limits")
    for name in _LIMIT_KEYS:
        if name in limits:
            if not isinstance(limits[name], int) or isinstance(limits[name], bool):
                raise ConfigError(f"limits.{name} must be an integer")
            values[name] = limits[name]

    if "provider" in raw:
        if not isinstance(raw["provider"], str):
            raise ConfigError("provider must be a string")
        values["provider"] = raw["provider"]

    config = PipelineConfig(**values)
    config.validate()
    return config


def _apply_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    updates: dict = {}
    if args.provider is not None:
        updates["provider"] = args.provider
    if args.tau_high is not None:
        updates["tau_high"] = args.tau_high
    if args.tau_low is not None:
        updates["tau_low"] = args.tau_low
    if args.tau_link is not None:
        updates["tau_link"] = args.tau_link
    if args.k is not None:
        updates["k"] = args.k
    if updates:
        config = replace(config, **updates)
        config.validate()
    return config


@dataclass
class LoadedCorpora:
    taxonomy_bytes: bytes = b""
    taxonomy: corpus.Taxonomy = field(default_factory=corpus.Taxonomy)
    standards: list[corpus.StandardDocument] = field(default_factory=list)
    registry: corpus.StandardsRegistry = field(default_factory=corpus.StandardsRegistry)
    rules: tuple[compliance.ComplianceRule, ...] = ()


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _load_corpora(config: PipelineConfig, need_taxonomy: bool = True) -> LoadedCorpora:
    loaded = LoadedCorpora()
    if config.taxonomy is not None:
        loaded.taxonomy_bytes = _read(config.taxonomy)
        loaded.taxonomy = corpus.parse_taxonomy(loaded.taxonomy_bytes)
    elif need_taxonomy:
        raise ConfigError("config has no paths.taxonomy")
    for path in config.standards:
        loaded.standards.append(corpus.parse_standard(_read(path)))
    if config.registry is not None:
        loaded.registry = corpus.parse_registry(_read(config.registry))
    if config.rules is not None:
        loaded.rules = compliance.parse_rules(_read(config.rules))
    return loaded


def _select_spec(config: PipelineConfig, args: argparse.Namespace) -> Path:
    if args.spec is not None:
        return Path(args.spec)
    if len(config.specs) == 1:
        return config.specs[0]
    if not config.specs:
        raise ConfigError("no spec given: pass --spec or set paths.specs in the config")
    raise ConfigError("config lists multiple specs: pass --spec to choose one")


def _emit(data: bytes, out: str | None) -> None:
    if out is None:
        sys.stdout.write(data.decode("utf-8"))
        if not data.endswith(b"\n"):
            sys.stdout.write("\n")
    else:
        atomic_write_bytes(Path(out), data)


def _format(args: argparse.Namespace) -> str:
    return "markdown" if args.format == "md" else "json"


# -- commands --------------------------------------------------------------------


def cmd_validate(config: PipelineConfig, args: argparse.Namespace) -> int:
    """Scan every configured corpus file and report each problem with file/line."""
    findings: list[str] = []

    def scan(path: Path | None, scanner) -> None:
        if path is None:
            return
        text = _read(path).decode("utf-8", errors="replace")
        _, diags = scanner(text)
        findings.extend(
            f"{path}:{diag.line}: {diag.kind.__name__}: {diag.message}" for diag in diags
        )

    scan(config.taxonomy, corpus.scan_taxonomy)
    for spec_path in config.specs:
        scan(spec_path, corpus.scan_spec)
    for std_path in config.standards:
        scan(std_path, corpus.scan_standard)
    scan(config.registry, corpus.scan_registry)
    scan(config.rules, compliance.scan_rules)

    for line in findings:
        print(line)
    print(f"{len(findings)} problem(s) found")
    return EXIT_CLEAN if not findings else EXIT_USAGE


def _terminology_section(
    config: PipelineConfig,
    spec: corpus.SpecDocument,
    standards: list[corpus.StandardDocument],
    provider: Provider,
) -> tuple[termcheck.TerminologySection, list[termcheck.Keyword]]:
    stoplist = load_stoplist(config.stoplist)
    gazetteer = load_gazetteer(config.gazetteer)
    keywords = termcheck.extract_keywords(spec, stoplist, gazetteer)
    vocab = [entry for standard in standards for entry in standard.vocabulary]
    matches = termcheck.match_terms(
        keywords, vocab, provider, tau_high=config.tau_high, tau_low=config.tau_low
    )
    return termcheck.terminology_report(matches), keywords


def cmd_check_terms(config: PipelineConfig, args: argparse.Namespace) -> int:
    loaded = _load_corpora(config, need_taxonomy=False)
    spec = corpus.parse_spec(_read(_select_spec(config, args)))
    provider = make_provider(config.provider, record_path=args.record)
    section, _ = _terminology_section(config, spec, loaded.standards, provider)
    if _format(args) == "json":
        payload = {"spec_id": spec.spec_id, **compliance.terminology_to_dict(section)}
        _emit(compliance.canonical_json(payload).encode("utf-8"), args.out)
    else:
        lines = [f"# Terminology check: {spec.spec_id}", ""]
        lines.extend(compliance.terminology_markdown(section))
        _emit(("\n".join(lines) + "\n").encode("utf-8"), args.out)
    return EXIT_FINDINGS if section.counts[termcheck.NON_CANONICAL] else EXIT_CLEAN


def _classification(
    config: PipelineConfig,
    spec: corpus.SpecDocument,
    loaded: LoadedCorpora,
    provider: Provider,
    keywords: list[termcheck.Keyword],
) -> classify_mod.ClassificationResult:
    kb = classify_mod.cached_kb(
        loaded.taxonomy_bytes, loaded.taxonomy, provider, config.cache_dir
    )
    params = classify_mod.ClassifyParams(
        k=config.k,
        max_terms=config.max_terms,
        secondary_ratio=config.secondary_ratio,
        max_secondary=config.max_secondary,
    )
    return classify_mod.classify(
        spec, loaded.taxonomy, kb, provider, params, keywords=keywords
    )


def cmd_classify(config: PipelineConfig, args: argparse.Namespace) -> int:
    loaded = _load_corpora(config)
    spec = corpus.parse_spec(_read(_select_spec(config, args)))
    provider = make_provider(config.provider, record_path=args.record)
    stoplist = load_stoplist(config.stoplist)
    gazetteer = load_gazetteer(config.gazetteer)
    keywords = termcheck.extract_keywords(spec, stoplist, gazetteer)
    result = _classification(config, spec, loaded, provider, keywords)
    if _format(args) == "json":
        payload = {"spec_id": spec.spec_id, **compliance.classification_to_dict(result)}
        _emit(compliance.canonical_json(payload).encode("utf-8"), args.out)
    else:
        lines = [f"# Classification: {spec.spec_id}", ""]
        lines.extend(compliance.classification_markdown(result))
        _emit(("\n".join(lines) + "\n").encode("utf-8"), args.out)
    return EXIT_CLEAN


def _trace_links(
    config: PipelineConfig,
    spec: corpus.SpecDocument,
    loaded: LoadedCorpora,
    provider: Provider,
    result: classify_mod.ClassificationResult,
) -> tuple[list[str], list[compliance.TraceLink]]:
    standard_ids = compliance.applicable_standards(loaded.registry, result)
    by_id = {standard.standard_id: standard for standard in loaded.standards}
    docs = [by_id[std_id] for std_id in standard_ids if std_id in by_id]
    links = compliance.trace(
        spec, docs, provider, k=config.k, tau_link=config.tau_link, cache_dir=config.cache_dir
    )
    return standard_ids, links


def cmd_trace(config: PipelineConfig, args: argparse.Namespace) -> int:
    loaded = _load_corpora(config)
    spec = corpus.parse_spec(_read(_select_spec(config, args)))
    provider = make_provider(config.provider, record_path=args.record)
    stoplist = load_stoplist(config.stoplist)
    gazetteer = load_gazetteer(config.gazetteer)
    keywords = termcheck.extract_keywords(spec, stoplist, gazetteer)
    result = _classification(config, spec, loaded, provider, keywords)
    standard_ids, links = _trace_links(config, spec, loaded, provider, result)
    if _format(args) == "json":
        payload = {
            "spec_id": spec.spec_id,
            "applicable_standards": standard_ids,
            "links": [compliance.link_to_dict(link) for link in links],
        }
        _emit(compliance.canonical_json(payload).encode("utf-8"), args.out)
    else:
        lines = [f"# Trace links: {spec.spec_id}", ""]
        lines.extend(compliance.links_markdown(links))
        _emit(("\n".join(lines) + "\n").encode("utf-8"), args.out)
    return EXIT_CLEAN


def run_report(
    config: PipelineConfig, spec_path: Path, record_path: str | None = None
) -> compliance.ComplianceReport:
    """The whole pipeline for one spec; shared by the CLI and tests."""
    loaded = _load_corpora(config)
    spec = corpus.parse_spec(_read(spec_path))
    provider = make_provider(config.provider, record_path=record_path)
    section, keywords = _terminology_section(config, spec, loaded.standards, provider)
    result = _classification(config, spec, loaded, provider, keywords)
    standard_ids, links = _trace_links(config, spec, loaded, provider, result)
    clauses = {
        (standard.standard_id, clause.clause_id): clause
        for standard in loaded.standards
        for clause in standard.clauses
    }
    items = {item.item_id: item for item in spec.items}
    assessed = [
        compliance.assess(
            link,
            items[link.item_id].text,
            clauses[(link.standard_id, link.clause_id)],
            list(loaded.rules),
            provider,
        )
        for link in links
    ]
    return compliance.build_report(spec, section, result, standard_ids, assessed)


def cmd_report(config: PipelineConfig, args: argparse.Namespace) -> int:
    report = run_report(config, _select_spec(config, args), record_path=args.record)
    _emit(compliance.render(report, _format(args)), args.out)
    findings = (
        report.terminology.counts[termcheck.NON_CANONICAL]
        + report.summary[compliance.VERDICT_NON_COMPLIANT]
    )
    return EXIT_FINDINGS if findings else EXIT_CLEAN


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="compliat",
        description="Check assistive-technology product specs against standards.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler in (
        ("validate", cmd_validate),
        ("check-terms", cmd_check_terms),
        ("classify", cmd_classify),
        ("trace", cmd_trace),
        ("report", cmd_report),
    ):
        cmd = sub.add_parser(name)
        cmd.set_defaults(handler=handler)
        cmd.add_argument("--config", required=True, help="JSON pipeline config")
        cmd.add_argument("--spec", default=None, help="product spec file")
        cmd.add_argument(
            "--provider", default=None, help="mock | replay:PATH | remote:URL"
        )
        cmd.add_argument("--format", choices=("json", "md"), default="json")
        cmd.add_argument("--out", default=None, help="output file (default stdout)")
        cmd.add_argument("--tau-high", dest="tau_high", type=float, default=None)
        cmd.add_argument("--tau-low", dest="tau_low", type=float, default=None)
        cmd.add_argument("--tau-link", dest="tau_link", type=float, default=None)
        cmd.add_argument("--k", type=int, default=None)
        cmd.add_argument(
            "--record", default=None, help="record provider exchanges to this transcript"
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _apply_overrides(load_config(args.config), args)
        return args.handler(config, args)
    except (ProviderFailure, ProviderMismatch) as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (
        ConfigError,
        CorpusError,
        BadThresholds,
        BadParams,
        EmptyTaxonomy,
        CrossSpecMismatch,
        DuplicateKey,
        DimensionMismatch,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CompliatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
