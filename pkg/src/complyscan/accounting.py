"""Token usage, wall time, and monetary cost per run.

Rates live in dated configuration files, never in code: provider pricing
drifts, so each rate table carries an effective date and is hot-swappable.
Cost arithmetic uses Decimal throughout, making additivity and scaling exact.
When a provider reports a total token count larger than prompt + completion,
the difference is kept as protocol overhead rather than forced to reconcile.
"""

from __future__ import annotations

import csv
import io
import json
import threading
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_EVEN
from importlib import resources
from pathlib import Path

CENT4 = Decimal("0.0001")


class AccountingError(Exception):
    pass


class MissingRateError(AccountingError):
    def __init__(self, provider_name: str, model_id: str):
        super().__init__(f"no rate entry for ({provider_name}, {model_id})")
        self.provider_name = provider_name
        self.model_id = model_id


@dataclass(frozen=True)
class Rate:
    """Currency units per 1000 tokens."""

    input_per_1k: Decimal
    output_per_1k: Decimal

    def __post_init__(self):
        if self.input_per_1k < 0 or self.output_per_1k < 0:
            raise AccountingError("rates must be >= 0")


@dataclass(frozen=True)
class RateTable:
    entries: dict[tuple[str, str], Rate]
    currency: str = "USD"
    effective_date: str = ""

    def lookup(self, provider_name: str, model_id: str) -> Rate:
        try:
            return self.entries[(provider_name, model_id)]
        except KeyError:
            raise MissingRateError(provider_name, model_id) from None


def parse_rate_table(text: str) -> RateTable:
    """Rate file: ``{"currency", "effective_date", "entries": [{provider, model,
    input_per_1k, output_per_1k}, ...]}``. Rates parse as Decimal strings."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AccountingError(f"rate table is not valid JSON: {exc}") from exc
    entries: dict[tuple[str, str], Rate] = {}
    for i, record in enumerate(payload.get("entries", [])):
        try:
            key = (str(record["provider"]), str(record["model"]))
            rate = Rate(input_per_1k=Decimal(str(record["input_per_1k"])),
                        output_per_1k=Decimal(str(record["output_per_1k"])))
        except (KeyError, ArithmeticError, TypeError) as exc:
            raise AccountingError(f"rate entry {i} is malformed: {exc}") from exc
        entries[key] = rate
    return RateTable(entries=entries, currency=str(payload.get("currency", "USD")),
                     effective_date=str(payload.get("effective_date", "")))


def load_rate_table(path: str | Path) -> RateTable:
    return parse_rate_table(Path(path).read_text(encoding="utf-8"))


def builtin_rate_table() -> RateTable:
    """The bundled January-2024 table."""
    text = resources.files("complyscan.data").joinpath("openai_rates_2024_01.json").read_text("utf-8")
    return parse_rate_table(text)


@dataclass(frozen=True)
class UsageRecord:
    passage_id: str
    prompt_tokens: int
    completion_tokens: int
    latency_seconds: float
    total_tokens_reported: int | None = None

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise AccountingError("token counts must be >= 0")
        if self.latency_seconds < 0:
            raise AccountingError("latency must be >= 0")


class UsageLedger:
    """Per-passage token/latency records. Appends are serialized by a lock;
    reads snapshot the record list."""

    def __init__(self, records: list[UsageRecord] | None = None):
        self._records: list[UsageRecord] = list(records or [])
        self._lock = threading.Lock()

    def add(self, record: UsageRecord) -> None:
        with self._lock:
            self._records.append(record)

    @property
    def records(self) -> tuple[UsageRecord, ...]:
        with self._lock:
            return tuple(self._records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def prompt_tokens(self) -> int:
        return sum(r.prompt_tokens for r in self.records)

    @property
    def completion_tokens(self) -> int:
        return sum(r.completion_tokens for r in self.records)

    @property
    def total_latency_seconds(self) -> float:
        return sum(r.latency_seconds for r in self.records)

    @property
    def protocol_overhead_tokens(self) -> int:
        """Provider-reported totals minus component sums, where reported."""
        return sum(
            r.total_tokens_reported - (r.prompt_tokens + r.completion_tokens)
            for r in self.records
            if r.total_tokens_reported is not None
        )

    def extend(self, other: "UsageLedger") -> "UsageLedger":
        return UsageLedger(list(self.records) + list(other.records))

    _CSV_FIELDS = ("passage_id", "prompt_tokens", "completion_tokens",
                   "latency_seconds", "total_tokens_reported")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self._CSV_FIELDS)
        for r in self.records:
            writer.writerow([
                r.passage_id, r.prompt_tokens, r.completion_tokens,
                f"{r.latency_seconds:.6f}",
                "" if r.total_tokens_reported is None else r.total_tokens_reported,
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "UsageLedger":
        reader = csv.DictReader(io.StringIO(text))
        missing = set(cls._CSV_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise AccountingError(f"ledger CSV is missing columns: {sorted(missing)}")
        records = []
        for i, row in enumerate(reader, start=2):
            try:
                records.append(UsageRecord(
                    passage_id=row["passage_id"],
                    prompt_tokens=int(row["prompt_tokens"]),
                    completion_tokens=int(row["completion_tokens"]),
                    latency_seconds=float(row["latency_seconds"]),
                    total_tokens_reported=(int(row["total_tokens_reported"])
                                           if row["total_tokens_reported"] else None),
                ))
            except (KeyError, ValueError) as exc:
                raise AccountingError(f"ledger CSV line {i} is malformed: {exc}") from exc
        return cls(records)


def raw_cost(ledger: UsageLedger, rates: RateTable, provider_name: str, model_id: str) -> Decimal:
    """Unrounded cost: sum over records of tokens/1000 x rate."""
    rate = rates.lookup(provider_name, model_id)
    total = Decimal(0)
    for r in ledger.records:
        total += (Decimal(r.prompt_tokens) / 1000) * rate.input_per_1k
        total += (Decimal(r.completion_tokens) / 1000) * rate.output_per_1k
    return total


def estimate_cost(ledger: UsageLedger, rates: RateTable,
                  provider_name: str, model_id: str) -> Decimal:
    """Run cost in currency units, reported to 4 decimal places."""
    return raw_cost(ledger, rates, provider_name, model_id).quantize(
        CENT4, rounding=ROUND_HALF_EVEN)


@dataclass(frozen=True)
class ThroughputReport:
    mean_latency_seconds: float
    passages_per_hour: float


def throughput_report(ledger: UsageLedger) -> ThroughputReport:
    """Mean per-passage latency and the hourly projection 3600 / mean."""
    records = ledger.records
    if not records:
        raise AccountingError("cannot report throughput for an empty ledger")
    mean = sum(r.latency_seconds for r in records) / len(records)
    if mean <= 0:
        return ThroughputReport(mean_latency_seconds=mean, passages_per_hour=float("inf"))
    return ThroughputReport(mean_latency_seconds=mean, passages_per_hour=3600.0 / mean)
