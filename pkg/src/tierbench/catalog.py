"""Hardware platform catalog: peak throughput, bandwidth, power and cost per datatype."""

import csv
import logging
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .findings import Finding, Severity
from .units import quote_cell

logger = logging.getLogger(__name__)

CATALOG_FILE = Path(__file__).parent / "data" / "catalog" / "platforms.csv"

REQUIRED_COLUMNS = (
    "platform", "mode", "datatype", "peak_tops", "mem_bw_gbps", "tdp_watts", "cost_usd",
)
OPTIONAL_COLUMNS = ("bits", "tops_per_watt")

NAMED_DATATYPE_BITS: Dict[str, int] = {
    "FP32": 32,
    "FP16": 16,
    "INT16": 16,
    "FP8": 8,
    "INT8": 8,
    "INT4": 4,
    "TERN": 2,
    "BIN": 1,
}

PlatformKey = Tuple[str, str, str]


class CatalogError(Exception):
    """Base exception for catalog handling."""
    pass


class CatalogParseError(CatalogError):
    """Raised when a catalog row cannot be read."""

    def __init__(self, line: int, message: str) -> None:
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class DuplicatePlatformError(CatalogParseError):
    """Raised when two rows share a (platform, mode, datatype) key."""
    pass


class UnknownPlatformError(CatalogError):
    """Raised when a platform query matches no catalog entry."""
    pass


@dataclass(frozen=True)
class DatatypeSpec:
    """A numeric representation and its storage width."""

    name: str
    bits_per_element: int

    @property
    def is_named(self) -> bool:
        return self.name.upper() in NAMED_DATATYPE_BITS

    @property
    def bytes_per_element(self) -> Fraction:
        return Fraction(self.bits_per_element, 8)


@dataclass(frozen=True)
class PlatformEntry:
    """One platform, operating mode and native datatype."""

    platform: str
    mode: str
    datatype: DatatypeSpec
    peak_tops: Decimal
    mem_bw_gbps: Optional[Decimal] = None
    tdp_watts: Optional[Decimal] = None
    cost_usd: Optional[Decimal] = None
    tops_per_watt: Optional[Decimal] = None

    @property
    def key(self) -> PlatformKey:
        return (self.platform, self.mode, self.datatype.name)

    @property
    def peak_gops(self) -> Fraction:
        return Fraction(self.peak_tops) * 1000

    @property
    def label(self) -> str:
        parts = [self.platform]
        if self.mode:
            parts.append(self.mode)
        parts.append(self.datatype.name)
        return " ".join(parts)


def parse_datatype(name: str, bits: Optional[int] = None) -> DatatypeSpec:
    """Resolve a datatype name, using explicit bits for custom formats."""
    canonical = name.strip()
    named_bits = NAMED_DATATYPE_BITS.get(canonical.upper())
    if named_bits is not None:
        if bits is not None and bits != named_bits:
            raise CatalogError(f"datatype {canonical} is {named_bits} bits wide, not {bits}")
        return DatatypeSpec(name=canonical.upper(), bits_per_element=named_bits)
    if bits is None:
        raise CatalogError(f"unknown datatype '{canonical}' needs an explicit bits field")
    if bits < 1:
        raise CatalogError(f"datatype '{canonical}' must have a positive width, got {bits}")
    return DatatypeSpec(name=canonical, bits_per_element=bits)


def datatype_bytes(dt: DatatypeSpec) -> Fraction:
    """Bytes per element as an exact rational."""
    return dt.bytes_per_element


def parse_catalog(text: str) -> List[PlatformEntry]:
    """Parse catalog CSV text into platform entries."""
    header: Optional[List[str]] = None
    entries: List[PlatformEntry] = []
    seen: Dict[Tuple[str, str, str], int] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [cell.strip() for cell in next(csv.reader([stripped]))]

        if header is None:
            header = _parse_header(fields, line_no)
            continue
        if len(fields) != len(header):
            raise CatalogParseError(line_no, f"expected {len(header)} fields, found {len(fields)}")

        entry = _parse_row(dict(zip(header, fields)), line_no)
        folded = tuple(part.lower() for part in entry.key)
        if folded in seen:
            raise DuplicatePlatformError(
                line_no, f"duplicate entry {entry.label} (first defined on line {seen[folded]})"
            )
        seen[folded] = line_no
        entries.append(entry)

    if header is None:
        raise CatalogParseError(1, "missing header line")
    logger.debug(f"Parsed {len(entries)} catalog entries")
    return entries


def _parse_header(fields: List[str], line_no: int) -> List[str]:
    columns = [cell.lower() for cell in fields]
    if tuple(columns[: len(REQUIRED_COLUMNS)]) != REQUIRED_COLUMNS:
        raise CatalogParseError(line_no, f"header must start with {','.join(REQUIRED_COLUMNS)}")
    extras = columns[len(REQUIRED_COLUMNS):]
    for column in extras:
        if column not in OPTIONAL_COLUMNS:
            raise CatalogParseError(line_no, f"unknown catalog column '{column}'")
    if len(set(extras)) != len(extras):
        raise CatalogParseError(line_no, "repeated catalog column")
    return columns


def _parse_row(row: Dict[str, str], line_no: int) -> PlatformEntry:
    platform = row["platform"]
    if not platform:
        raise CatalogParseError(line_no, "platform name is empty")

    bits_cell = row.get("bits", "")
    bits: Optional[int] = None
    if bits_cell:
        try:
            bits = int(bits_cell)
        except ValueError:
            raise CatalogParseError(line_no, f"malformed bits '{bits_cell}'")
    try:
        datatype = parse_datatype(row["datatype"], bits)
    except CatalogError as e:
        raise CatalogParseError(line_no, str(e)) from e

    peak = _parse_number(row["peak_tops"], "peak_tops", line_no)
    if peak is None or peak <= 0:
        raise CatalogParseError(line_no, f"peak_tops must be positive for {platform}")

    mem_bw = _parse_number(row["mem_bw_gbps"], "mem_bw_gbps", line_no)
    if mem_bw is not None and mem_bw <= 0:
        raise CatalogParseError(line_no, f"mem_bw_gbps must be positive for {platform}")

    optional: Dict[str, Optional[Decimal]] = {}
    for column in ("tdp_watts", "cost_usd", "tops_per_watt"):
        value = _parse_number(row.get(column, ""), column, line_no)
        if value is not None and value < 0:
            raise CatalogParseError(line_no, f"{column} must not be negative for {platform}")
        optional[column] = value

    return PlatformEntry(
        platform=platform,
        mode=row["mode"],
        datatype=datatype,
        peak_tops=peak,
        mem_bw_gbps=mem_bw,
        **optional,
    )


def _parse_number(cell: str, column: str, line_no: int) -> Optional[Decimal]:
    if not cell:
        return None
    try:
        value = Decimal(cell)
    except InvalidOperation:
        raise CatalogParseError(line_no, f"malformed number in {column}: '{cell}'")
    if not value.is_finite():
        raise CatalogParseError(line_no, f"malformed number in {column}: '{cell}'")
    return value


def serialize_catalog(entries: Iterable[PlatformEntry]) -> str:
    """Write entries back in the catalog CSV format."""
    lines = [",".join(REQUIRED_COLUMNS + OPTIONAL_COLUMNS)]
    for entry in entries:
        cells = [
            quote_cell(entry.platform),
            quote_cell(entry.mode),
            quote_cell(entry.datatype.name),
            str(entry.peak_tops),
            _format_optional(entry.mem_bw_gbps),
            _format_optional(entry.tdp_watts),
            _format_optional(entry.cost_usd),
            "" if entry.datatype.is_named else str(entry.datatype.bits_per_element),
            _format_optional(entry.tops_per_watt),
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _format_optional(value: Optional[Decimal]) -> str:
    return "" if value is None else str(value)


def load_catalog(path: Optional[Union[str, Path]] = None) -> List[PlatformEntry]:
    """Load a catalog file, defaulting to the bundled one."""
    source = Path(path) if path else CATALOG_FILE
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as e:
        raise CatalogError(f"Cannot read catalog {source}: {e}") from e
    try:
        entries = parse_catalog(text)
    except CatalogParseError as e:
        raise type(e)(e.line, f"{source.name}: {e.message}") from e
    logger.info(f"Loaded {len(entries)} platform entries from {source}")
    return entries


def validate_catalog(
    entries: Sequence[PlatformEntry],
    tolerance: Union[Decimal, float] = Decimal("0.05"),
    source: str = "catalog",
) -> List[Finding]:
    """Compare published performance-per-power ratios with peak / power."""
    tolerance = Fraction(Decimal(str(tolerance)))
    findings: List[Finding] = []
    for index, entry in enumerate(entries, start=1):
        if entry.tops_per_watt is None or not entry.tdp_watts:
            continue
        ratio = Fraction(entry.peak_tops) / Fraction(entry.tdp_watts)
        if abs(ratio - Fraction(entry.tops_per_watt)) > tolerance:
            findings.append(Finding(
                record_id=(source, index),
                rule="perf-per-watt-mismatch",
                severity=Severity.WARN,
                message=(
                    f"{entry.label}: peak/power is {float(ratio):.3f} TOPs/W "
                    f"but the published ratio is {entry.tops_per_watt}"
                ),
            ))
    if findings:
        logger.warning(f"{len(findings)} catalog entries disagree with their published TOPs/W")
    return findings


def lookup(
    entries: Iterable[PlatformEntry], platform: str, mode: str, datatype: str
) -> Optional[PlatformEntry]:
    """Exact, case-insensitive key lookup."""
    wanted = (platform.lower(), mode.lower(), datatype.lower())
    for entry in entries:
        if tuple(part.lower() for part in entry.key) == wanted:
            return entry
    return None


def find_platforms(
    entries: Sequence[PlatformEntry],
    queries: Sequence[str],
    modes: Optional[Sequence[str]] = None,
    datatypes: Optional[Sequence[str]] = None,
) -> List[PlatformEntry]:
    """Entries whose platform name contains any query, in catalog order."""
    wanted_modes = {m.lower() for m in modes} if modes else None
    wanted_types = {d.lower() for d in datatypes} if datatypes else None

    selected: List[PlatformEntry] = []
    for query in queries:
        needle = query.strip().lower()
        matches = [e for e in entries if needle in e.platform.lower()]
        if not matches:
            raise UnknownPlatformError(f"No catalog platform matches '{query}'")
        for entry in matches:
            if wanted_modes is not None and entry.mode.lower() not in wanted_modes:
                continue
            if wanted_types is not None and entry.datatype.name.lower() not in wanted_types:
                continue
            if entry not in selected:
                selected.append(entry)

    order = {id(entry): index for index, entry in enumerate(entries)}
    return sorted(selected, key=lambda entry: order[id(entry)])


def platform_max_peak(entries: Iterable[PlatformEntry], platform: str) -> Optional[PlatformEntry]:
    """The entry with the highest peak across a platform's modes and datatypes."""
    candidates = [e for e in entries if e.platform.lower() == platform.lower()]
    if not candidates:
        return None
    return max(candidates, key=lambda e: e.peak_tops)
