from __future__ import annotations

from pathlib import Path

import pytest

from compliat import corpus, preprocess
from compliat.providers import MockProvider

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def taxonomy() -> corpus.Taxonomy:
    return corpus.parse_taxonomy((FIXTURES / "taxonomy.tsv").read_bytes())


@pytest.fixture(scope="session")
def stride_spec() -> corpus.SpecDocument:
    return corpus.parse_spec((FIXTURES / "spec_stridetech.tsv").read_bytes())


@pytest.fixture(scope="session")
def walker_spec() -> corpus.SpecDocument:
    return corpus.parse_spec((FIXTURES / "spec_shopper_walker.tsv").read_bytes())


@pytest.fixture(scope="session")
def standards() -> list[corpus.StandardDocument]:
    names = ("std_iso9999.tsv", "std_iso10328.tsv", "std_iso8549_1.tsv", "std_iso11199_2.tsv")
    return [corpus.parse_standard((FIXTURES / name).read_bytes()) for name in names]


@pytest.fixture(scope="session")
def registry() -> corpus.StandardsRegistry:
    return corpus.parse_registry((FIXTURES / "registry.tsv").read_bytes())


@pytest.fixture(scope="session")
def stoplist() -> set[str]:
    return preprocess.default_stoplist()


@pytest.fixture(scope="session")
def gazetteer() -> set[str]:
    return preprocess.load_gazetteer(FIXTURES / "gazetteer.txt")


@pytest.fixture()
def mock_provider() -> MockProvider:
    return MockProvider()
