from __future__ import annotations

import random
import string
import unicodedata

from compliat import corpus
from compliat.preprocess import (
    DOMAIN_TERM,
    GENERIC,
    NUMBER,
    PRODUCT_NAME,
    PUNCTUATION,
    WORD,
    chunk_noun_phrases,
    extract_entities,
    normalize,
    normalize_term,
    tokenize,
)


def test_normalize_collapses_whitespace() -> None:
    assert normalize("  Smart\t Knee ") == "Smart Knee"


def test_normalize_empty() -> None:
    assert normalize("") == ""
    assert normalize(" \t\n ") == ""


def test_normalize_nfc_equivalence() -> None:
    composed = "café"
    decomposed = "café"
    assert unicodedata.normalize("NFD", composed) == decomposed
    assert normalize(composed) == normalize(decomposed)


def test_normalize_strips_control_chars() -> None:
    assert normalize("a\x00b\x07c") == "abc"


def test_normalize_preserves_case() -> None:
    assert normalize("StrideTech") == "StrideTech"
    assert normalize_term("StrideTech") == "stridetech"


def test_normalize_idempotent_on_random_strings() -> None:
    rng = random.Random(11)
    alphabet = string.ascii_letters + string.digits + " \t\n\x00\x07.,;-'é"
    for _ in range(200):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 40)))
        once = normalize(text)
        assert normalize(once) == once


def test_tokenize_hyphenated_product_is_one_word() -> None:
    tokens = tokenize("StrideTech-ProKnee app")
    assert [(t.surface, t.kind) for t in tokens] == [
        ("StrideTech-ProKnee", WORD),
        ("app", WORD),
    ]


def test_tokenize_code_is_numbers() -> None:
    tokens = tokenize("12 06 06")
    assert [t.kind for t in tokens] == [NUMBER, NUMBER, NUMBER]


def test_tokenize_punctuation_split() -> None:
    tokens = tokenize("knee, foot.")
    assert [(t.surface, t.kind) for t in tokens] == [
        ("knee", WORD),
        (",", PUNCTUATION),
        ("foot", WORD),
        (".", PUNCTUATION),
    ]


def test_tokenize_reconstructs_input() -> None:
    rng = random.Random(23)
    alphabet = string.ascii_letters + string.digits + " .,;-'()"
    for _ in range(300):
        raw = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 60)))
        text = normalize(raw)
        tokens = tokenize(text)
        rebuilt = ""
        prev_end = 0
        for token in tokens:
            assert token.start < token.end  # no zero-width tokens
            assert token.start >= prev_end  # strictly increasing, non-overlapping
            rebuilt += text[prev_end : token.start] + token.surface
            assert token.surface == text[token.start : token.end]
            prev_end = token.end
        rebuilt += text[prev_end:]
        assert rebuilt == text


def test_tokenize_offsets_partition_word_chars() -> None:
    # Oracle: a character-class scan; every alphanumeric char must fall inside
    # exactly one token and every space outside all tokens.
    rng = random.Random(31)
    alphabet = string.ascii_letters + string.digits + " .,-'"
    for _ in range(300):
        text = normalize("".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 50))))
        covered = [False] * len(text)
        for token in tokenize(text):
            for i in range(token.start, token.end):
                assert not covered[i]
                covered[i] = True
        for i, ch in enumerate(text):
            if ch.isalnum():
                assert covered[i]
            elif ch == " ":
                assert not covered[i]


def test_chunk_excludes_stopwords(stoplist: set[str]) -> None:
    phrases = chunk_noun_phrases(tokenize("the built-in fall detector"), stoplist)
    assert [p.normalized for p in phrases] == ["built-in fall detector"]


def test_chunk_all_stopwords(stoplist: set[str]) -> None:
    assert chunk_noun_phrases(tokenize("the of and to"), stoplist) == []


def test_chunk_splits_at_numbers_and_punctuation(stoplist: set[str]) -> None:
    phrases = chunk_noun_phrases(tokenize("knee units, 12 alarm systems"), stoplist)
    assert [p.normalized for p in phrases] == ["knee units", "alarm systems"]


def test_chunk_matches_gap_scan_oracle(stoplist: set[str]) -> None:
    # Oracle: mark breaking token positions, take maximal gaps between them.
    rng = random.Random(47)
    vocab = ["knee", "fall", "detector", "smart", ", ", ". ", "12 ", "the ", "and ", "unit "]
    for _ in range(300):
        text = normalize("".join(rng.choice(vocab) for _ in range(rng.randrange(0, 25))))
        tokens = tokenize(text)
        breaking = [t.kind != WORD or t.normalized in stoplist for t in tokens]
        expected: list[list[int]] = [[]]
        for i, is_break in enumerate(breaking):
            if is_break:
                if expected[-1]:
                    expected.append([])
            else:
                expected[-1].append(i)
        runs = [run for run in expected if run]
        phrases = chunk_noun_phrases(tokens, stoplist)
        assert len(phrases) == len(runs)
        for phrase, run in zip(phrases, runs):
            assert phrase.tokens == tuple(tokens[i] for i in run)


def test_extract_entities_orthographic_product() -> None:
    phrases = chunk_noun_phrases(tokenize("StrideTech-ProKnee"), set())
    occs = extract_entities(phrases, set(), "R1")
    assert occs[0].kind == PRODUCT_NAME


def test_extract_entities_gazetteer_controls_kind() -> None:
    phrases = chunk_noun_phrases(tokenize("fall detector"), set())
    in_gaz = extract_entities(phrases, {"fall detector"}, "R1")
    out_gaz = extract_entities(phrases, set(), "R1")
    assert in_gaz[0].kind == PRODUCT_NAME
    assert out_gaz[0].kind == DOMAIN_TERM


def test_extract_entities_generic_single_word() -> None:
    phrases = chunk_noun_phrases(tokenize("system"), set())
    assert extract_entities(phrases, set(), "R1")[0].kind == GENERIC


def test_extract_entities_internal_capital_variants() -> None:
    def kind_of(text: str) -> str:
        return extract_entities(chunk_noun_phrases(tokenize(text), set()), set(), "R")[0].kind

    assert kind_of("iPad") == PRODUCT_NAME
    assert kind_of("X-Ray") == PRODUCT_NAME
    assert kind_of("IPAD") == GENERIC  # no lowercase before the capital
    assert kind_of("Smart") == GENERIC


def test_occurrences_appear_verbatim_in_items(
    stride_spec: corpus.SpecDocument, stoplist: set[str], gazetteer: set[str]
) -> None:
    for item in stride_spec.items:
        phrases = chunk_noun_phrases(tokenize(item.text), stoplist)
        for occ in extract_entities(phrases, gazetteer, item.item_id):
            sliced = item.text[occ.phrase.start : occ.phrase.end]
            assert sliced.lower() == occ.phrase.normalized
