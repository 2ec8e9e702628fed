"""Experiment harness: seeded sampling, match criteria, CSV logging, summaries."""

from __future__ import annotations

import csv
import enum
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .corpus import CodeTable, IcdCode, IcdEntry, category_of, normalize_code
from .errors import IcdrrError, InvalidConfig, SampleTooLarge
from .llm import ChatClient
from .pipeline import PipelineConfig, predict_retrieve_rank, predict_vanilla
from .retrieval import InvertedIndex

log = logging.getLogger(__name__)

DEFAULT_N = 100
DEFAULT_SEED = 42
CSV_HEADER = ["system", "condition", "true_code", "predicted_code", "exact_match", "category_match", "fallback_used"]


class System(str, enum.Enum):
    RETRIEVE_RANK = "retrieve_rank"
    VANILLA = "vanilla"

    @classmethod
    def parse(cls, name: str) -> "System":
        aliases = {"rr": cls.RETRIEVE_RANK, "retrieve-rank": cls.RETRIEVE_RANK}
        key = name.strip().lower()
        return aliases.get(key) or cls(key)


class MatchMode(str, enum.Enum):
    EXACT = "exact"
    CATEGORY = "category"


# sampling


_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 (Steele, Lea & Flood 2014): state += 0x9E3779B97F4A7C15, then mix."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)``; rejects draws from the biased tail."""
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = self.next()
            if x < limit:
                return x % bound


def sample_entries(table: CodeTable, n: int = DEFAULT_N, seed: int = DEFAULT_SEED) -> list[IcdEntry]:
    """Partial Fisher-Yates over table order driven by :class:`SplitMix64`.

    For ``i`` in ``0..n-1``: ``j = i + below(N - i)``, swap positions ``i`` and
    ``j``; the sample is the first ``n`` positions.
    """
    entries = list(table.entries)
    if n < 0:
        raise ValueError("sample size must be non-negative")
    if n > len(entries):
        raise SampleTooLarge(f"cannot sample {n} from {len(entries)} entries")
    rng = SplitMix64(seed)
    for i in range(n):
        j = i + rng.below(len(entries) - i)
        entries[i], entries[j] = entries[j], entries[i]
    return entries[:n]


# matching


def match_codes(predicted: Optional[IcdCode], truth: IcdCode, mode: MatchMode | str = MatchMode.EXACT) -> bool:
    if predicted is None:
        return False
    if MatchMode(mode) is MatchMode.EXACT:
        return predicted.normalized == truth.normalized
    return category_of(predicted) == category_of(truth)


@dataclass(frozen=True)
class EvalRecord:
    system: System
    query: str
    true_code: IcdCode
    predicted_code: Optional[IcdCode]
    exact_match: bool
    category_match: bool
    fallback_used: bool = False

    def __post_init__(self):
        if self.exact_match and not self.category_match:
            raise ValueError("exact match without category match")
        if self.predicted_code is None and (self.exact_match or self.category_match):
            raise ValueError("match flags set without a prediction")

    @classmethod
    def score(cls, system: System, query: str, truth: IcdCode, predicted: Optional[IcdCode], fallback: bool = False):
        return cls(
            system, query, truth, predicted,
            match_codes(predicted, truth, MatchMode.EXACT),
            match_codes(predicted, truth, MatchMode.CATEGORY),
            fallback,
        )


@dataclass(frozen=True)
class SystemSummary:
    n: int
    exact_accuracy: float
    category_accuracy: float
    fallbacks: int
    no_code: int


@dataclass(frozen=True)
class EvalSummary:
    n: int
    seed: Optional[int]
    per_system: dict[System, SystemSummary]

    @property
    def headline(self) -> SystemSummary:
        return self.per_system.get(System.RETRIEVE_RANK) or next(iter(self.per_system.values()))

    @property
    def exact_accuracy(self) -> float:
        return self.headline.exact_accuracy

    @property
    def category_accuracy(self) -> float:
        return self.headline.category_accuracy


def summarize(records: Sequence[EvalRecord], seed: Optional[int] = None) -> EvalSummary:
    per_system = {}
    for system in System:
        rows = [r for r in records if r.system is system]
        if not rows:
            continue
        per_system[system] = SystemSummary(
            n=len(rows),
            exact_accuracy=sum(r.exact_match for r in rows) / len(rows),
            category_accuracy=sum(r.category_match for r in rows) / len(rows),
            fallbacks=sum(r.fallback_used for r in rows),
            no_code=sum(r.predicted_code is None for r in rows),
        )
    counts = {s.n for s in per_system.values()}
    if len(counts) > 1:
        raise ValueError(f"systems were evaluated on different sample sizes: {counts}")
    return EvalSummary(counts.pop() if counts else 0, seed, per_system)


# experiment


def _run_one(
    system: System,
    entry: IcdEntry,
    table: CodeTable,
    index: InvertedIndex,
    config: PipelineConfig,
    client: Optional[ChatClient],
) -> EvalRecord:
    query = entry.long_description
    try:
        if system is System.RETRIEVE_RANK:
            pred = predict_retrieve_rank(query, index, table, config, client)
        else:
            pred = predict_vanilla(query, client)
    except IcdrrError as exc:
        log.warning("%s failed on %s: %s", system.value, entry.code, exc)
        return EvalRecord.score(system, query, entry.code, None)
    return EvalRecord.score(system, query, entry.code, pred.chosen, pred.fallback_used)


def run_experiment(
    table: CodeTable,
    index: InvertedIndex,
    config: PipelineConfig = PipelineConfig(),
    systems: Iterable[System | str] = (System.RETRIEVE_RANK,),
    n: int = DEFAULT_N,
    seed: int = DEFAULT_SEED,
    entries: Optional[Sequence[IcdEntry]] = None,
    client: Optional[ChatClient] = None,
    out: Optional[Path] = None,
    workers: int = 1,
) -> tuple[list[EvalRecord], EvalSummary]:
    """Run each selected system on a seeded sample (or on ``entries`` if given).

    Records are ordered by sample position, then system, whatever ``workers`` is.
    """
    selected = sorted({System.parse(s) if isinstance(s, str) else System(s) for s in systems},
                      key=list(System).index)
    if not selected:
        raise InvalidConfig("no systems selected")
    needs_llm = System.VANILLA in selected or (
        System.RETRIEVE_RANK in selected and config.reranker.value == "llm"
    )
    if needs_llm and client is None:
        raise InvalidConfig("an LLM-backed system was selected but no chat client is configured")
    if entries is None:
        entries = sample_entries(table, n, seed)

    jobs = [(system, entry) for entry in entries for system in selected]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda job: _run_one(job[0], job[1], table, index, config, client), jobs))
    else:
        records = [_run_one(system, entry, table, index, config, client) for system, entry in jobs]

    summary = summarize(records, seed)
    if out is not None:
        write_results_csv(records, out)
    return records, summary


# CSV log


def _bool(value: bool) -> str:
    return "true" if value else "false"


def results_csv_bytes(records: Iterable[EvalRecord]) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([
            r.system.value,
            r.query,
            r.true_code.normalized,
            r.predicted_code.normalized if r.predicted_code else "",
            _bool(r.exact_match),
            _bool(r.category_match),
            _bool(r.fallback_used),
        ])
    return buf.getvalue().encode("utf-8")


def write_results_csv(records: Iterable[EvalRecord], path) -> None:
    Path(path).write_bytes(results_csv_bytes(records))


def read_results_csv(path) -> list[EvalRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected results header {reader.fieldnames}")
        records = []
        for row in reader:
            predicted = row["predicted_code"]
            records.append(EvalRecord(
                System.parse(row["system"]),
                row["condition"],
                normalize_code(row["true_code"]),
                normalize_code(predicted) if predicted else None,
                row["exact_match"] == "true",
                row["category_match"] == "true",
                row["fallback_used"] == "true",
            ))
    return records


# comparison (two systems side by side)


@dataclass(frozen=True)
class ComparisonRow:
    condition: str
    reference: IcdCode
    retrieve_rank: Optional[IcdCode]
    vanilla: Optional[IcdCode]
    correct_system: str


def correct_system(rr_exact: bool, vanilla_exact: bool) -> str:
    if rr_exact and vanilla_exact:
        return "Both"
    if rr_exact:
        return "Retrieve-Rank"
    if vanilla_exact:
        return "Vanilla"
    return "Neither"


def compare_records(records: Sequence[EvalRecord]) -> list[ComparisonRow]:
    """Pair retrieve-rank and vanilla rows for the same condition, in file order."""
    by_key: dict[tuple[str, str], dict[System, EvalRecord]] = {}
    for r in records:
        by_key.setdefault((r.query, r.true_code.normalized), {})[r.system] = r
    rows = []
    for (query, _), pair in by_key.items():
        rr = pair.get(System.RETRIEVE_RANK)
        va = pair.get(System.VANILLA)
        if rr is None or va is None:
            continue
        rows.append(ComparisonRow(
            query, rr.true_code, rr.predicted_code, va.predicted_code,
            correct_system(rr.exact_match, va.exact_match),
        ))
    return rows
