from __future__ import annotations

import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from complyscan.corpus import (
    ChunkConfig,
    CorpusError,
    Granularity,
    OverLimitError,
    Passage,
    TruncationPolicy,
    chunk_document,
    chunk_paragraphs,
    enforce_token_limit,
    ingest_text,
    is_heading,
    load_artifact,
    split_sentences,
)
from complyscan.providers import count_tokens

from fixture_docs import FIXTURE_DOCS, SECURITY_SNIPPET

CFG = ChunkConfig()


def collapse_ws(text: str) -> str:
    return re.sub(r"\s+", "", text)


def blank_line_split_oracle(text: str) -> list[str]:
    """Brute-force reference splitter: blocks separated by blank lines only."""
    return [block for block in re.split(r"\n\s*\n", text) if block.strip()]


class TestIngestion:
    def test_doc_id_required(self):
        with pytest.raises(CorpusError):
            ingest_text("text", doc_id="")

    def test_crlf_normalized_with_count(self):
        art = ingest_text("a\r\nb\rc\n", doc_id="d")
        assert art.raw_text == "a\nb\nc\n"
        assert art.crlf_normalized == 2

    def test_load_artifact_defaults_to_stem(self, tmp_path):
        f = tmp_path / "my_dpa.txt"
        f.write_text("Block one.\r\n\r\nBlock two.", encoding="utf-8")
        art = load_artifact(f)
        assert art.doc_id == "my_dpa"
        assert "\r" not in art.raw_text
        assert art.source_path == str(f)


class TestChunkParagraphs:
    def test_empty_input_yields_no_passages(self):
        assert chunk_paragraphs(ingest_text("", doc_id="d"), CFG) == []

    def test_whitespace_only_yields_no_passages(self):
        assert chunk_paragraphs(ingest_text(" \n \n\t", doc_id="d"), CFG) == []

    def test_two_blocks_match_blank_line_oracle(self):
        text = "First block of text here.\n\nSecond block follows after a blank line."
        passages = chunk_paragraphs(ingest_text(text, doc_id="d"), CFG)
        oracle = blank_line_split_oracle(text)
        assert len(passages) == len(oracle) == 2
        assert collapse_ws("".join(p.text for p in passages)) == collapse_ws(text)

    def test_heading_plus_body_form_one_passage(self):
        text = ("9. Security Measures\nThe processor shall implement measures.\n"
                "\nSecond block here.")
        passages = chunk_paragraphs(ingest_text(text, doc_id="d"), CFG)
        assert len(passages) == 2
        assert passages[0].text.startswith("9. Security Measures")
        assert "implement measures" in passages[0].text
        assert passages[1].text == "Second block here."

    def test_heading_mid_document_starts_new_passage(self):
        text = "Intro text sits here.\n2. Duration\nThe term is three years."
        passages = chunk_paragraphs(ingest_text(text, doc_id="d"), CFG)
        assert len(passages) == 2
        assert passages[1].text.startswith("2. Duration")


class TestHeadingDetection:
    @pytest.mark.parametrize("line", [
        "9. Security Measures",
        "9.2 Sub-processors",
        "Annex II",
        "ANNEX 3 SECURITY",
        "Article 5",
        "Data Protection Officer",  # capitalized words, no terminal punct
    ])
    def test_headings(self, line):
        assert is_heading(line, CFG)

    @pytest.mark.parametrize("line", [
        "",
        "The processor shall implement appropriate measures.",
        "2 processors are listed below",  # bare number is not a numbering pattern
        "x" * 100,
        "this line has ordinary lowercase words only",
    ])
    def test_non_headings(self, line):
        assert not is_heading(line, CFG)

    def test_numbering_toggle(self):
        cfg = ChunkConfig(heading_numbering_enabled=False)
        assert not is_heading("9. security measures listed here", cfg)

    def test_terminal_punct_toggle(self):
        line = "All Capitalized Heading Words."
        assert not is_heading(line, CFG)
        cfg = ChunkConfig(heading_exclude_terminal_punct=False)
        assert is_heading(line, cfg)


class TestSplitSentences:
    def run(self, text: str) -> list[Passage]:
        art = ingest_text(text, doc_id="d")
        paragraphs = chunk_paragraphs(art, CFG)
        assert len(paragraphs) == 1
        return split_sentences(paragraphs[0], CFG)

    def test_security_snippet_splits_into_two(self):
        sentences = self.run(SECURITY_SNIPPET)
        assert len(sentences) == 2
        assert sentences[1].text.startswith("These measures include specific access profiles")

    def test_single_sentence_identity(self):
        sentences = self.run("Hello.")
        assert len(sentences) == 1
        assert sentences[0].text == "Hello."

    def test_abbreviation_does_not_split(self):
        text = ("Safeguards may include organisational controls, e.g. Access policies "
                "are one example. Technical controls are another.")
        # hand segmentation: the split after "e.g." is suppressed -> 2 sentences
        assert [s.text for s in self.run(text)] == [
            "Safeguards may include organisational controls, e.g. Access policies "
            "are one example.",
            "Technical controls are another.",
        ]

    def test_no_terminal_punctuation_single_sentence(self):
        sentences = self.run("no punctuation at all here")
        assert len(sentences) == 1

    def test_boundary_requires_upper_or_digit(self):
        sentences = self.run("version 3.5 applies. the next clause is lowercase")
        assert len(sentences) == 1  # lowercase continuation does not split

    def test_digit_can_start_sentence(self):
        sentences = self.run("Notification is due promptly. 72 hours is the maximum.")
        assert len(sentences) == 2

    def test_requires_paragraph_granularity(self):
        art = ingest_text("One. Two.", doc_id="d")
        sentence = chunk_document(art, CFG)[1][0]
        with pytest.raises(CorpusError):
            split_sentences(sentence, CFG)


def check_invariants(doc_id: str, text: str) -> None:
    art = ingest_text(text, doc_id=doc_id)
    raw = art.raw_text
    paragraphs, sentences = chunk_document(art, CFG)

    # round-trip provenance
    for p in paragraphs + sentences:
        start, end = p.char_span
        assert 0 <= start < end <= len(raw)
        assert raw[start:end] == p.text

    # paragraph spans: disjoint, ordered, covering all non-whitespace
    covered = [False] * len(raw)
    for p in paragraphs:
        for i in range(*p.char_span):
            assert not covered[i], f"{doc_id}: overlapping paragraph spans"
            covered[i] = True
    for i, ch in enumerate(raw):
        if not ch.isspace():
            assert covered[i], f"{doc_id}: non-whitespace char {i!r} not covered"

    for stream in (paragraphs, sentences):
        for a, b in zip(stream, stream[1:]):
            assert a.char_span[0] < b.char_span[0], f"{doc_id}: ordinals out of span order"
        for ordinal, p in enumerate(stream):
            assert p.ordinal == ordinal

    # sentence nesting: each sentence inside exactly one paragraph, named by parent id
    by_id = {p.passage_id: p for p in paragraphs}
    for s in sentences:
        parents = [p for p in paragraphs
                   if p.char_span[0] <= s.char_span[0] and s.char_span[1] <= p.char_span[1]]
        assert len(parents) == 1, f"{doc_id}: sentence not nested in exactly one paragraph"
        assert s.parent_paragraph_id == parents[0].passage_id
        assert s.parent_paragraph_id in by_id

    # sentence spans partition the parent's non-whitespace characters
    for p in paragraphs:
        mine = [s for s in sentences if s.parent_paragraph_id == p.passage_id]
        sentence_covered = set()
        for s in mine:
            span = set(range(*s.char_span))
            assert not span & sentence_covered, f"{doc_id}: overlapping sentence spans"
            sentence_covered |= span
        for i in range(*p.char_span):
            if not raw[i].isspace():
                assert i in sentence_covered, f"{doc_id}: paragraph char {i} not in a sentence"

    # determinism, ids included
    again_p, again_s = chunk_document(ingest_text(text, doc_id=doc_id), CFG)
    assert again_p == paragraphs
    assert again_s == sentences


@pytest.mark.parametrize("name,text", FIXTURE_DOCS, ids=[n for n, _ in FIXTURE_DOCS])
def test_fixture_corpus_invariants(name, text):
    check_invariants(name, text)


@settings(max_examples=150, deadline=None)
@given(st.text(alphabet=st.characters(codec="utf-8", exclude_categories=("Cs",)), max_size=400))
def test_chunking_invariants_hold_on_random_text(text):
    check_invariants("random", text)


class TestEnforceTokenLimit:
    def three_sentence_passage(self) -> Passage:
        sentence = "Word " + " ".join(["word"] * 20) + "."  # 21 words + 1 punct -> 30 tokens
        text = " ".join([sentence] * 3)
        art = ingest_text(text, doc_id="d")
        (p,) = chunk_paragraphs(art, CFG)
        return p

    def test_under_limit_unchanged(self):
        art = ingest_text("Short passage here.", doc_id="d")
        (p,) = chunk_paragraphs(art, CFG)
        assert count_tokens(p.text) <= 100
        assert enforce_token_limit(p, 100, count_tokens, CFG) is p

    def test_truncates_at_sentence_boundary(self):
        p = self.three_sentence_passage()
        sentences = split_sentences(p, CFG)
        assert [count_tokens(s.text) for s in sentences] == [30, 30, 30]

        # oracle: cumulative prefix counts with the same counter pick the cut
        keep = 0
        for s in sentences:
            prefix = p.text[: s.char_span[1] - p.char_span[0]]
            if count_tokens(prefix) <= 70:
                keep += 1
        assert keep == 2

        truncated = enforce_token_limit(p, 70, count_tokens, CFG)
        assert truncated.truncated
        assert truncated.char_span == (p.char_span[0], sentences[keep - 1].char_span[1])
        assert truncated.text == p.text[: truncated.char_span[1]]
        assert count_tokens(truncated.text) <= 70

    def test_reject_policy_raises(self):
        p = self.three_sentence_passage()
        cfg = ChunkConfig(truncation_policy=TruncationPolicy.REJECT)
        with pytest.raises(OverLimitError) as err:
            enforce_token_limit(p, 70, count_tokens, cfg)
        assert err.value.passage_id == p.passage_id
        assert err.value.counted_tokens == count_tokens(p.text)

    def test_first_sentence_over_limit_is_hard_error(self):
        p = self.three_sentence_passage()
        with pytest.raises(OverLimitError):
            enforce_token_limit(p, 10, count_tokens, CFG)

    def test_sentence_passage_over_limit_is_hard_error(self):
        art = ingest_text("One short sentence only here.", doc_id="d")
        sentence = chunk_document(art, CFG)[1][0]
        with pytest.raises(OverLimitError):
            enforce_token_limit(sentence, 1, count_tokens, CFG)


def test_token_limit_validation():
    with pytest.raises(CorpusError):
        ChunkConfig(token_limit=0)
