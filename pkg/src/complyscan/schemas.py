"""Pydantic request/response models for the compliance-checking service.

Catalogs, gold files, prediction files, templates, and ledgers travel in
requests as their raw file text; the service does all parsing so that clients
stay thin. Machine reports travel back as their exact canonical bytes (UTF-8
decoded), letting a client write byte-stable report files.
"""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field

GranularityName = Literal["sentence", "paragraph"]
GranularityChoice = Literal["sentence", "paragraph", "both"]


class ChunkOptions(BaseModel):
    heading_max_length: int = 80
    heading_numbering_enabled: bool = True
    heading_exclude_terminal_punct: bool = True
    heading_capitalized_ratio: float = 0.6
    token_limit: int = Field(default=3000, ge=1)
    truncation_policy: Literal["truncate_at_sentence_boundary", "reject"] = (
        "truncate_at_sentence_boundary"
    )


class PassageModel(BaseModel):
    passage_id: str
    doc_id: str
    granularity: GranularityName
    text: str
    start: int
    end: int
    ordinal: int
    parent_paragraph_id: str | None = None
    truncated: bool = False


class ChunkRequest(BaseModel):
    doc_id: str = "doc"
    title: str = ""
    text: str
    config: ChunkOptions = ChunkOptions()


class ChunkResponse(BaseModel):
    doc_id: str
    paragraph_count: int
    sentence_count: int
    paragraphs: list[PassageModel]
    sentences: list[PassageModel]


class ProviderSpec(BaseModel):
    provider_name: str = "mock"
    model_id: str = "mock-model"
    endpoint: str = ""
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = Field(default=0.2, ge=0.0, le=2.0)
    max_output_tokens: int = 512
    request_timeout: float = 60.0
    max_attempts: int = Field(default=3, ge=1)
    backoff_base: float = 0.5
    max_in_flight: int = Field(default=4, ge=1)
    requests_per_minute: int | None = None
    mock_responses: dict[str, Any] | None = None


class VerdictModel(BaseModel):
    passage_id: str
    satisfied_rule_ids: list[int]
    justification: str
    parse_status: Literal["clean", "recovered", "failed"]
    warnings: list[str] = []
    error: str | None = None


class CheckRequest(BaseModel):
    doc_id: str = "doc"
    title: str = ""
    text: str
    granularity: GranularityChoice = "paragraph"
    catalog_text: str | None = None
    catalog_id: str = "catalog"
    template_text: str | None = None
    chunk_config: ChunkOptions = ChunkOptions()
    provider: ProviderSpec = ProviderSpec()
    rates_text: str | None = None
    fixed_clock: bool = False


class CheckRunModel(BaseModel):
    granularity: GranularityName
    complete: bool
    machine_report: str
    human_report: str
    verdicts: list[VerdictModel]
    verdicts_jsonl: str
    ledger_csv: str


class RollupComparisonModel(BaseModel):
    satisfied_sentence: list[int]
    satisfied_paragraph: list[int]
    only_sentence: list[int]
    only_paragraph: list[int]
    satisfied_both: list[int]


class CheckResponse(BaseModel):
    doc_id: str
    runs: list[CheckRunModel]
    rollup_comparison: RollupComparisonModel | None = None


class EvaluateRun(BaseModel):
    model: str
    granularity: GranularityName
    predictions_text: str
    format: Literal["verdicts_jsonl", "external"] = "verdicts_jsonl"


class EvaluateRequest(BaseModel):
    gold_text: str
    catalog_text: str | None = None
    catalog_id: str = "catalog"
    runs: list[EvaluateRun]


class MetricsModel(BaseModel):
    scored_passage_count: int
    macro_precision: float | None
    macro_recall: float | None
    macro_f: float | None
    mean_accuracy: float | None
    per_rule: dict[str, dict[str, Any]]


class EvaluateRunResult(BaseModel):
    model: str
    granularity: GranularityName
    metrics: MetricsModel
    table: str


class AblationModel(BaseModel):
    model: str
    deltas: dict[str, float | None]
    improved: dict[str, bool]


class EvaluateResponse(BaseModel):
    runs: list[EvaluateRunResult]
    accuracy_table: str | None = None
    ablations: list[AblationModel] = []


class CostRequest(BaseModel):
    ledger_csv: str
    rates_text: str | None = None
    provider_name: str
    model_id: str


class CostResponse(BaseModel):
    provider_name: str
    model_id: str
    currency: str
    cost: str
    prompt_tokens: int
    completion_tokens: int
    protocol_overhead_tokens: int
    mean_latency_seconds: float
    passages_per_hour: float


class HealthResponse(BaseModel):
    status: str
    version: str
