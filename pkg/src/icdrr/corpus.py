"""ICD-10-CM code table: code normalization, CSV and CDC order-file ingestion.

Two input layouts are supported.

CSV (RFC 4180, UTF-8): a header row naming ``code`` and ``description``
(case-insensitive, extra columns ignored), one code per data row.

CDC order file (fixed width, one code per line, 1-based columns)::

    1-5    order number, zero padded
    6      blank
    7-13   code, no period, left aligned, space padded
    14-15  billable flag: blank then '0' (header code) or '1' (billable)
    16     blank
    17-77  short description, space padded (60 characters + 1 blank)
    78-    long description, to end of line

Columns count characters of the UTF-8 decoded line.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import io
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import CorpusRejected, EmptyCorpus, MalformedCode, MalformedRow

log = logging.getLogger(__name__)

CODE_PATTERN = re.compile(r"[A-TV-Z][0-9][A-Z0-9]{1,5}")
MAX_MALFORMED_FRACTION = 0.10


@dataclass(frozen=True, order=True)
class IcdCode:
    normalized: str
    raw: str = field(default="", compare=False, repr=False)

    def __str__(self) -> str:
        return self.normalized

    @property
    def category(self) -> str:
        return self.normalized[:3]

    @property
    def display(self) -> str:
        """Conventional dotted form, e.g. ``S49.129P``."""
        n = self.normalized
        return n if len(n) == 3 else f"{n[:3]}.{n[3:]}"


def normalize_code(raw: str) -> IcdCode:
    """Strip whitespace, drop the period and uppercase; validate the result.

    >>> normalize_code("S49.129P").normalized
    'S49129P'
    """
    if not isinstance(raw, str):
        raise MalformedCode(repr(raw), "not a string")
    text = raw.strip()
    if not text:
        raise MalformedCode(raw, "empty")
    if text.count(".") > 1:
        raise MalformedCode(raw, "more than one period")
    normalized = text.replace(".", "").upper()
    if not CODE_PATTERN.fullmatch(normalized):
        raise MalformedCode(raw)
    return IcdCode(normalized, raw)


def category_of(code: IcdCode) -> str:
    return code.normalized[:3]


@dataclass(frozen=True)
class IcdEntry:
    code: IcdCode
    long_description: str
    short_description: Optional[str] = None
    billable: Optional[bool] = None

    def __post_init__(self):
        if not self.long_description.strip():
            raise ValueError(f"{self.code}: empty long description")


class CodeTable:
    """Immutable, deduplicated collection of ICD-10-CM entries in source order."""

    def __init__(
        self,
        entries: Iterable[IcdEntry],
        source_digest: str = "",
        build_timestamp: Optional[datetime] = None,
        duplicate_count: int = 0,
        malformed: Iterable[MalformedRow] = (),
    ):
        self._entries = tuple(entries)
        self._by_code = {}
        for e in self._entries:
            if e.code.normalized in self._by_code:
                raise ValueError(f"duplicate code {e.code.normalized} in CodeTable")
            self._by_code[e.code.normalized] = e
        self.source_digest = source_digest
        self.build_timestamp = build_timestamp or datetime.now(timezone.utc)
        self.duplicate_count = duplicate_count
        self.malformed = tuple(malformed)

    @property
    def entries(self) -> tuple[IcdEntry, ...]:
        return self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[IcdEntry]:
        return iter(self._entries)

    def __contains__(self, code) -> bool:
        return _key(code) in self._by_code

    def get(self, code) -> Optional[IcdEntry]:
        return self._by_code.get(_key(code))

    def __getitem__(self, code) -> IcdEntry:
        return self._by_code[_key(code)]

    def __repr__(self) -> str:
        return f"CodeTable({len(self)} entries, digest={self.source_digest[:12]})"


def _key(code) -> str:
    return code.normalized if isinstance(code, IcdCode) else str(code)


def _finish(rows: list, data_rows: int, malformed: list[MalformedRow], data: bytes) -> CodeTable:
    if data_rows == 0:
        raise EmptyCorpus("corpus has no data rows")
    if len(malformed) > MAX_MALFORMED_FRACTION * data_rows:
        raise CorpusRejected(malformed, data_rows)
    seen: dict[str, IcdEntry] = {}
    duplicates = 0
    for entry in rows:
        if entry.code.normalized in seen:
            duplicates += 1
            continue
        seen[entry.code.normalized] = entry
    if not seen:
        raise EmptyCorpus("corpus has no valid rows")
    if duplicates:
        log.warning("%d duplicate code rows dropped (first occurrence kept)", duplicates)
    if malformed:
        log.warning("%d malformed rows skipped", len(malformed))
    return CodeTable(
        seen.values(),
        source_digest=hashlib.sha256(data).hexdigest(),
        duplicate_count=duplicates,
        malformed=malformed,
    )


def parse_csv(data: bytes) -> CodeTable:
    text = data.decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    while header is not None and not any(h.strip() for h in header):
        header = next(reader, None)
    if header is None:
        raise EmptyCorpus("empty CSV input")
    names = [h.strip().lower() for h in header]
    try:
        code_col = names.index("code")
        desc_col = names.index("description")
    except ValueError:
        raise MalformedRow(reader.line_num, f"header must name 'code' and 'description', got {header}")

    entries: list[IcdEntry] = []
    malformed: list[MalformedRow] = []
    data_rows = 0
    for row in reader:
        if not row or not any(cell.strip() for cell in row):
            continue
        data_rows += 1
        line_no = reader.line_num
        if len(row) <= max(code_col, desc_col):
            malformed.append(MalformedRow(line_no, "missing columns"))
            continue
        try:
            code = normalize_code(row[code_col])
        except MalformedCode as exc:
            malformed.append(MalformedRow(line_no, str(exc)))
            continue
        description = row[desc_col]
        if not description.strip():
            malformed.append(MalformedRow(line_no, "empty description"))
            continue
        entries.append(IcdEntry(code, description))
    return _finish(entries, data_rows, malformed, data)


def parse_order_file(data: bytes) -> CodeTable:
    text = data.decode("utf-8-sig")
    entries: list[IcdEntry] = []
    malformed: list[MalformedRow] = []
    data_rows = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        data_rows += 1
        code_field = line[6:13].strip()
        if not code_field:
            malformed.append(MalformedRow(line_no, "blank code field"))
            continue
        try:
            code = normalize_code(code_field)
        except MalformedCode as exc:
            malformed.append(MalformedRow(line_no, str(exc)))
            continue
        flag = line[13:15].strip()
        if flag not in ("0", "1"):
            malformed.append(MalformedRow(line_no, f"billable flag {flag!r} is not 0/1"))
            continue
        short = line[16:77].strip() or None
        long = line[77:].strip()
        if not long:
            malformed.append(MalformedRow(line_no, "empty long description"))
            continue
        entries.append(IcdEntry(code, long, short, flag == "1"))
    return _finish(entries, data_rows, malformed, data)


def to_csv(table: Iterable[IcdEntry]) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["code", "description"])
    for entry in table:
        writer.writerow([entry.code.normalized, entry.long_description])
    return buf.getvalue().encode("utf-8")


def format_order_line(order: int, entry: IcdEntry) -> str:
    short = entry.short_description or ""
    if len(short) > 60:
        raise ValueError(f"{entry.code}: short description exceeds 60 characters")
    flag = "1" if entry.billable else "0"
    return f"{order:05d} {entry.code.normalized:<7} {flag} {short:<60} {entry.long_description}"


def to_order_file(table: Iterable[IcdEntry]) -> bytes:
    lines = [format_order_line(i, e) for i, e in enumerate(table, start=1)]
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_bytes(path) -> bytes:
    """Read a file, transparently decompressing gzip."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def sniff_format(data: bytes) -> str:
    for line in data.decode("utf-8-sig", errors="replace").splitlines():
        if not line.strip():
            continue
        if line[:5].isdigit() and line[5:6] == " ":
            return "order"
        return "csv"
    return "csv"


def load_table(path, fmt: str = "auto") -> CodeTable:
    data = read_bytes(path)
    if fmt == "auto":
        fmt = sniff_format(data)
    if fmt == "csv":
        return parse_csv(data)
    if fmt == "order":
        return parse_order_file(data)
    raise ValueError(f"unknown corpus format {fmt!r}")
