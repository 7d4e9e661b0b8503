"""Segment regulatory artifacts into paragraph and sentence passages.

All passages carry exact character provenance: ``text`` is always the
``raw_text[start:end]`` slice, spans of one granularity never overlap, and
every sentence span nests inside its parent paragraph span. Chunking is
deterministic, so passage ids (content-addressed hashes) are stable across
runs of the same document.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable


class Granularity(str, Enum):
    SENTENCE = "sentence"
    PARAGRAPH = "paragraph"


class TruncationPolicy(str, Enum):
    TRUNCATE_AT_SENTENCE_BOUNDARY = "truncate_at_sentence_boundary"
    REJECT = "reject"


class CorpusError(Exception):
    """Base error for ingestion and chunking failures."""


class OverLimitError(CorpusError):
    """Passage exceeds the token limit and the policy forbids truncation."""

    def __init__(self, passage_id: str, counted_tokens: int, limit: int, message: str):
        super().__init__(message)
        self.passage_id = passage_id
        self.counted_tokens = counted_tokens
        self.limit = limit


@dataclass(frozen=True)
class RegulatoryArtifact:
    """A document under compliance analysis.

    ``raw_text`` is immutable once ingested; line endings are normalized to LF
    at ingestion time (the only normalization ever applied) so that all spans
    index into a single canonical text. ``crlf_normalized`` records how many
    line endings were rewritten.
    """

    doc_id: str
    title: str
    raw_text: str
    source_path: str = ""
    crlf_normalized: int = 0

    def __post_init__(self):
        if not self.doc_id:
            raise CorpusError("doc_id must be non-empty")


# Abbreviations that end with '.' but do not terminate a sentence.
DEFAULT_ABBREVIATIONS = (
    "e.g.", "i.e.", "etc.", "cf.", "vs.", "viz.", "approx.",
    "art.", "para.", "sec.", "no.", "nos.",
    "mr.", "mrs.", "ms.", "dr.", "prof.",
    "inc.", "ltd.", "co.", "corp.", "gmbh.",
)


@dataclass(frozen=True)
class ChunkConfig:
    """Tunable knobs for paragraph and sentence segmentation.

    Heading detection: a stripped line is a heading iff it is at most
    ``heading_max_length`` characters long and either starts with a numbering
    pattern ("9.", "9.2", "Annex II") or, when ``heading_exclude_terminal_punct``
    allows it, has no terminal sentence punctuation and at least
    ``heading_capitalized_ratio`` of its alphabetic words capitalized.
    """

    heading_max_length: int = 80
    heading_numbering_enabled: bool = True
    heading_exclude_terminal_punct: bool = True
    heading_capitalized_ratio: float = 0.6
    abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS
    token_limit: int = 3000
    truncation_policy: TruncationPolicy = TruncationPolicy.TRUNCATE_AT_SENTENCE_BOUNDARY

    def __post_init__(self):
        if self.token_limit < 1:
            raise CorpusError("token_limit must be >= 1")


@dataclass(frozen=True)
class Passage:
    """A sentence- or paragraph-granularity chunk with exact provenance."""

    passage_id: str
    doc_id: str
    granularity: Granularity
    text: str
    char_span: tuple[int, int]
    ordinal: int
    parent_paragraph_id: str | None = None
    truncated: bool = False

    def __post_init__(self):
        start, end = self.char_span
        if not (0 <= start < end):
            raise CorpusError(f"invalid span {self.char_span} for passage {self.passage_id}")
        if self.granularity is Granularity.SENTENCE and not self.parent_paragraph_id:
            raise CorpusError(f"sentence passage {self.passage_id} lacks parent_paragraph_id")


def passage_id_for(doc_id: str, granularity: Granularity, span: tuple[int, int]) -> str:
    """Content-addressed passage id: stable across re-runs for diffing reports."""
    key = f"{doc_id}|{granularity.value}|{span[0]}|{span[1]}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:12]


def load_artifact(path: str | Path, doc_id: str | None = None, title: str | None = None) -> RegulatoryArtifact:
    """Ingest a UTF-8 plain-text file, normalizing CRLF/CR line endings to LF."""
    p = Path(path)
    raw = p.read_text(encoding="utf-8")
    return ingest_text(raw, doc_id=doc_id or p.stem, title=title if title is not None else p.stem,
                       source_path=str(p))


def ingest_text(text: str, doc_id: str, title: str = "", source_path: str = "") -> RegulatoryArtifact:
    normalized = text.replace("\r\n", "\n").replace("\r", "\n")
    return RegulatoryArtifact(
        doc_id=doc_id,
        title=title,
        raw_text=normalized,
        source_path=source_path,
        crlf_normalized=len(text) - len(normalized) + text.replace("\r\n", "").count("\r"),
    )


_NUMBERING_RE = re.compile(
    r"^(?:\d+(?:\.\d+)*[.)](?:\s|$)"          # "9." / "9.2." / "9)" then space or EOL
    r"|\d+(?:\.\d+)+(?:\s|$)"                  # "9.2" / "1.2.3" without trailing dot
    r"|(?:annex|appendix|article|section|schedule|clause|part|exhibit)\s+(?:\d+|[ivxlcdm]+|[a-z])\b)",
    re.IGNORECASE,
)
_WORD_RE = re.compile(r"[A-Za-z][A-Za-z'\-]*")
_TERMINAL_PUNCT = ".!?"


def is_heading(line: str, cfg: ChunkConfig) -> bool:
    s = line.strip()
    if not s or len(s) > cfg.heading_max_length:
        return False
    if cfg.heading_numbering_enabled and _NUMBERING_RE.match(s):
        return True
    if cfg.heading_exclude_terminal_punct and s[-1] in _TERMINAL_PUNCT:
        return False
    words = _WORD_RE.findall(s)
    if not words:
        return False
    capitalized = sum(1 for w in words if w[0].isupper())
    return capitalized / len(words) >= cfg.heading_capitalized_ratio


def _line_offsets(text: str) -> list[tuple[int, int]]:
    """(start, end) for each line, end excluding the newline."""
    offsets = []
    start = 0
    for m in re.finditer(r"\n", text):
        offsets.append((start, m.start()))
        start = m.end()
    offsets.append((start, len(text)))
    return offsets


def _trim_span(text: str, start: int, end: int) -> tuple[int, int] | None:
    """Shrink [start, end) to its non-whitespace extent; None if all whitespace."""
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    if start >= end:
        return None
    return (start, end)


def chunk_paragraphs(artifact: RegulatoryArtifact, cfg: ChunkConfig) -> list[Passage]:
    """Split a document into paragraph passages.

    Boundaries fall at blank lines and at line breaks immediately followed by a
    heading line; a heading and its following body form one passage. Every
    non-whitespace character lands in exactly one paragraph span.
    """
    raw = artifact.raw_text
    if not raw.strip():
        return []

    groups: list[list[tuple[int, int]]] = []
    current: list[tuple[int, int]] = []
    for start, end in _line_offsets(raw):
        line = raw[start:end]
        if not line.strip():
            if current:
                groups.append(current)
                current = []
        elif is_heading(line, cfg):
            if current:
                groups.append(current)
            current = [(start, end)]
        else:
            current.append((start, end))
    if current:
        groups.append(current)

    passages: list[Passage] = []
    for ordinal, lines in enumerate(groups):
        span = _trim_span(raw, lines[0][0], lines[-1][1])
        if span is None:  # unreachable: groups only hold non-blank lines
            raise CorpusError("internal span bookkeeping error: empty paragraph group")
        pid = passage_id_for(artifact.doc_id, Granularity.PARAGRAPH, span)
        passages.append(Passage(
            passage_id=pid,
            doc_id=artifact.doc_id,
            granularity=Granularity.PARAGRAPH,
            text=raw[span[0]:span[1]],
            char_span=span,
            ordinal=ordinal,
        ))
    return passages


_NUMBERING_TOKEN_RE = re.compile(r"\d+(?:\.\d+)*[.)]?")


def _sentence_boundaries(text: str, abbreviations: tuple[str, ...]) -> list[int]:
    """Local offsets where a new sentence starts within ``text``.

    A boundary is terminal punctuation (. ! ?) followed by whitespace and an
    uppercase letter or digit, unless the token ending at the punctuation is a
    known abbreviation or a bare numbering token such as "9." (so heading
    numbers do not become one-character sentences).
    """
    abbrevs = {a.lower() for a in abbreviations}
    boundaries = []
    for m in re.finditer(r"[.!?]+(\s+)(?=[A-Z0-9])", text):
        punct_end = m.start(1)
        token_start = punct_end
        while token_start > 0 and not text[token_start - 1].isspace():
            token_start -= 1
        token = text[token_start:punct_end]
        if token.lower() in abbrevs or _NUMBERING_TOKEN_RE.fullmatch(token):
            continue
        boundaries.append(m.end())
    return boundaries


def split_sentences(paragraph: Passage, cfg: ChunkConfig) -> list[Passage]:
    """Split one paragraph passage into sentence passages (>= 1)."""
    if paragraph.granularity is not Granularity.PARAGRAPH:
        raise CorpusError("split_sentences requires a paragraph passage")

    base = paragraph.char_span[0]
    text = paragraph.text
    cuts = [0] + _sentence_boundaries(text, cfg.abbreviations) + [len(text)]

    passages: list[Passage] = []
    ordinal = 0
    for i in range(len(cuts) - 1):
        span = _trim_span(text, cuts[i], cuts[i + 1])
        if span is None:
            continue
        g_span = (base + span[0], base + span[1])
        pid = passage_id_for(paragraph.doc_id, Granularity.SENTENCE, g_span)
        passages.append(Passage(
            passage_id=pid,
            doc_id=paragraph.doc_id,
            granularity=Granularity.SENTENCE,
            text=text[span[0]:span[1]],
            char_span=g_span,
            ordinal=ordinal,
            parent_paragraph_id=paragraph.passage_id,
        ))
        ordinal += 1
    return passages


def chunk_document(artifact: RegulatoryArtifact, cfg: ChunkConfig) -> tuple[list[Passage], list[Passage]]:
    """Produce both passage streams; sentence ordinals run document-wide."""
    paragraphs = chunk_paragraphs(artifact, cfg)
    sentences: list[Passage] = []
    for para in paragraphs:
        for s in split_sentences(para, cfg):
            sentences.append(replace(s, ordinal=len(sentences)))
    return paragraphs, sentences


def enforce_token_limit(
    passage: Passage,
    limit: int,
    counter: Callable[[str], int],
    cfg: ChunkConfig,
) -> Passage:
    """Return ``passage`` unchanged if within ``limit`` tokens, else apply policy.

    The truncation policy drops trailing sentences (never characters) and flags
    the result; the reject policy raises. A first sentence that alone exceeds
    the limit is a hard error under either policy.
    """
    if limit < 1:
        raise CorpusError("token limit must be >= 1")
    counted = counter(passage.text)
    if counted <= limit:
        return passage
    if cfg.truncation_policy is TruncationPolicy.REJECT:
        raise OverLimitError(
            passage.passage_id, counted, limit,
            f"passage {passage.passage_id} counts {counted} tokens, over limit {limit}",
        )

    if passage.granularity is Granularity.PARAGRAPH:
        sentences = split_sentences(passage, cfg)
    else:
        sentences = [passage]

    kept_end: int | None = None
    for i, sent in enumerate(sentences):
        prefix = passage.text[: sent.char_span[1] - passage.char_span[0]]
        if counter(prefix) > limit:
            if i == 0:
                raise OverLimitError(
                    passage.passage_id, counter(sentences[0].text), limit,
                    f"first sentence of {passage.passage_id} alone exceeds the token limit {limit}",
                )
            break
        kept_end = sent.char_span[1]
    if kept_end is None:  # single over-limit sentence
        raise OverLimitError(
            passage.passage_id, counted, limit,
            f"first sentence of {passage.passage_id} alone exceeds the token limit {limit}",
        )

    span = (passage.char_span[0], kept_end)
    return Passage(
        passage_id=passage.passage_id,
        doc_id=passage.doc_id,
        granularity=passage.granularity,
        text=passage.text[: kept_end - passage.char_span[0]],
        char_span=span,
        ordinal=passage.ordinal,
        parent_paragraph_id=passage.parent_paragraph_id,
        truncated=True,
    )
