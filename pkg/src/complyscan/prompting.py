"""Deterministic chat-prompt assembly from template + rule catalog + passage.

A template renders into a two-message chat: a system message holding the
instructions and the rendered rule catalog, and a single user message holding
the passage under assessment (for the paragraph-level variant, the passage is
shown within its full paragraph, demarcated by marker lines). Building a
prompt is a pure function; identical inputs yield byte-identical prompts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .corpus import Granularity, Passage
from .rules import RuleCatalog, render_rules


class PromptError(Exception):
    pass


class PromptVariant(str, Enum):
    SENTENCE_LEVEL = "sentence_level"
    PARAGRAPH_LEVEL = "paragraph_level"


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


# Unescaped placeholder occurrences; "\{{" escapes a literal "{{".
_PLACEHOLDER_RE = re.compile(r"(?<!\\)\{\{(rules|passage|context)\}\}")


def _placeholder_counts(text: str) -> dict[str, int]:
    counts = {"rules": 0, "passage": 0, "context": 0}
    for m in _PLACEHOLDER_RE.finditer(text):
        counts[m.group(1)] += 1
    return counts


def _substitute(text: str, values: dict[str, str]) -> str:
    def repl(m: re.Match) -> str:
        name = m.group(1)
        if name not in values:
            raise PromptError(f"placeholder {{{{{name}}}}} cannot be resolved here")
        return values[name]

    return _PLACEHOLDER_RE.sub(repl, text).replace(r"\{{", "{{")


@dataclass(frozen=True)
class PromptTemplate:
    """Texts for the two chat messages, with placeholder discipline enforced.

    ``system_text`` must contain {{rules}} exactly once; ``user_text`` must
    contain {{passage}} exactly once and, for the paragraph variant only,
    {{context}} exactly once. Rules may appear only in the system message.
    """

    template_id: str
    variant: PromptVariant
    system_text: str
    user_text: str
    output_format_instructions: str

    def __post_init__(self):
        sys_counts = _placeholder_counts(self.system_text)
        user_counts = _placeholder_counts(self.user_text)
        if sys_counts["rules"] != 1:
            raise PromptError(f"{self.template_id}: system_text needs {{{{rules}}}} exactly once")
        if user_counts["rules"] != 0:
            raise PromptError(f"{self.template_id}: {{{{rules}}}} belongs in system_text only")
        if user_counts["passage"] != 1:
            raise PromptError(f"{self.template_id}: user_text needs {{{{passage}}}} exactly once")
        if sys_counts["passage"] != 0:
            raise PromptError(f"{self.template_id}: {{{{passage}}}} belongs in user_text only")
        context_allowed = self.variant is PromptVariant.PARAGRAPH_LEVEL
        if context_allowed and user_counts["context"] != 1:
            raise PromptError(f"{self.template_id}: paragraph template needs {{{{context}}}} exactly once")
        if not context_allowed and (user_counts["context"] or sys_counts["context"]):
            raise PromptError(f"{self.template_id}: sentence template must not use {{{{context}}}}")
        if context_allowed and sys_counts["context"]:
            raise PromptError(f"{self.template_id}: {{{{context}}}} belongs in user_text only")


@dataclass(frozen=True)
class Message:
    role: Role
    content: str


@dataclass(frozen=True)
class PromptMetadata:
    passage_id: str
    template_id: str
    catalog_id: str
    variant: str


@dataclass(frozen=True)
class ChatPrompt:
    messages: tuple[Message, ...]
    metadata: PromptMetadata

    def __post_init__(self):
        if not self.messages or self.messages[0].role is not Role.SYSTEM:
            raise PromptError("first message must have the system role")
        if sum(1 for m in self.messages if m.role is Role.USER) != 1:
            raise PromptError("a prompt carries exactly one user message")
        if any(m.role is Role.ASSISTANT for m in self.messages):
            raise PromptError("no assistant message at construction time")

    def user_message(self) -> Message:
        return next(m for m in self.messages if m.role is Role.USER)


def build_prompt(template: PromptTemplate, catalog: RuleCatalog, target: Passage,
                 context: Passage | None = None) -> ChatPrompt:
    """Assemble the chat prompt for one passage.

    Sentence-level templates take no context. Paragraph-level templates need a
    paragraph-granularity context that either is the target itself or is the
    parent paragraph of a sentence target.
    """
    if template.variant is PromptVariant.SENTENCE_LEVEL:
        if context is not None:
            raise PromptError("sentence-level templates take no context passage")
        user_values = {"passage": target.text}
    else:
        if context is None:
            raise PromptError("paragraph-level templates require a context passage")
        if context.granularity is not Granularity.PARAGRAPH:
            raise PromptError("context must be a paragraph passage")
        same = target.passage_id == context.passage_id
        child = target.parent_paragraph_id == context.passage_id
        if not (same or child):
            raise PromptError(
                f"target {target.passage_id} does not belong to context {context.passage_id}")
        user_values = {"passage": target.text, "context": context.text}

    system_content = _substitute(template.system_text, {"rules": render_rules(catalog)})
    if template.output_format_instructions:
        system_content = f"{system_content}\n\n{template.output_format_instructions}"
    user_content = _substitute(template.user_text, user_values)

    return ChatPrompt(
        messages=(
            Message(Role.SYSTEM, system_content),
            Message(Role.USER, user_content),
        ),
        metadata=PromptMetadata(
            passage_id=target.passage_id,
            template_id=template.template_id,
            catalog_id=catalog.catalog_id,
            variant=template.variant.value,
        ),
    )


_SYSTEM_HEADER = (
    "You are a legal compliance analyst reviewing a regulatory artifact, such "
    "as a data processing agreement, against a numbered catalog of compliance rules."
)

_TASK_SENTENCE = (
    "Read the passage supplied by the user and decide which of the rules, if "
    "any, the passage satisfies. Judge only what the passage itself states."
)

_TASK_PARAGRAPH = (
    "Read the passage supplied by the user and decide which of the rules, if "
    "any, the passage satisfies. The passage appears inside its full paragraph; "
    "interpret the passage in the context of the entire paragraph."
)

_RULES_BLOCK = "Compliance rules:\n{{rules}}"

OUTPUT_FORMAT_INSTRUCTIONS = (
    "Answer in exactly this format:\n"
    "RULES: <comma-separated rule numbers, or 99 if no listed rule applies>\n"
    "JUSTIFICATION: <a short explanation of your decision>"
)

TARGET_BEGIN_MARKER = "[[TARGET]]"
TARGET_END_MARKER = "[[/TARGET]]"

_USER_PARAGRAPH = (
    "Paragraph:\n"
    "{{context}}\n"
    "\n"
    "Passage under assessment (repeated between the TARGET markers):\n"
    f"{TARGET_BEGIN_MARKER}\n"
    "{{passage}}\n"
    f"{TARGET_END_MARKER}"
)


def default_templates() -> tuple[PromptTemplate, PromptTemplate]:
    """The shipped (sentence_level, paragraph_level) template pair."""
    sentence = PromptTemplate(
        template_id="builtin.sentence_level.v1",
        variant=PromptVariant.SENTENCE_LEVEL,
        system_text=f"{_SYSTEM_HEADER}\n\n{_TASK_SENTENCE}\n\n{_RULES_BLOCK}",
        user_text="{{passage}}",
        output_format_instructions=OUTPUT_FORMAT_INSTRUCTIONS,
    )
    paragraph = PromptTemplate(
        template_id="builtin.paragraph_level.v1",
        variant=PromptVariant.PARAGRAPH_LEVEL,
        system_text=f"{_SYSTEM_HEADER}\n\n{_TASK_PARAGRAPH}\n\n{_RULES_BLOCK}",
        user_text=_USER_PARAGRAPH,
        output_format_instructions=OUTPUT_FORMAT_INSTRUCTIONS,
    )
    return sentence, paragraph


_SECTION_RE = re.compile(r"^\[(meta|system|user|output_format)\]\s*$")


def parse_template(text: str, template_id: str | None = None) -> PromptTemplate:
    """Parse a template file.

    Format: ``[meta]`` (``template_id = ...`` and ``variant = ...`` lines),
    then ``[system]``, ``[user]``, and optional ``[output_format]`` sections
    holding raw text. ``\\{{`` escapes a literal ``{{`` in section bodies.
    """
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line.strip())
        if m:
            current = m.group(1)
            if current in sections:
                raise PromptError(f"line {lineno}: duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            if line.strip():
                raise PromptError(f"line {lineno}: content before the first section header")
            continue
        sections[current].append(line)

    meta: dict[str, str] = {}
    for raw in sections.get("meta", []):
        if not raw.strip():
            continue
        if "=" not in raw:
            raise PromptError(f"[meta] line {raw!r} is not 'key = value'")
        key, _, value = raw.partition("=")
        meta[key.strip()] = value.strip()

    for required in ("system", "user"):
        if required not in sections:
            raise PromptError(f"template is missing the [{required}] section")

    variant_name = meta.get("variant", "")
    try:
        variant = PromptVariant(variant_name)
    except ValueError:
        raise PromptError(f"[meta] variant must be one of "
                          f"{[v.value for v in PromptVariant]}, got {variant_name!r}") from None

    return PromptTemplate(
        template_id=template_id or meta.get("template_id", "custom"),
        variant=variant,
        system_text="\n".join(sections["system"]).strip("\n"),
        user_text="\n".join(sections["user"]).strip("\n"),
        output_format_instructions="\n".join(sections.get("output_format", [])).strip("\n")
        or OUTPUT_FORMAT_INSTRUCTIONS,
    )
