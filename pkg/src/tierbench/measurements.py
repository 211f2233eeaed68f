"""Benchmark measurement ingestion, derived figures of merit, validation and statistics."""

import csv
import fnmatch
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .catalog import PlatformEntry, PlatformKey, lookup, platform_max_peak
from .findings import Finding, RecordId, Severity, ValidationReport
from .topology import (
    DEFAULT_SEQ_LEN,
    WEIGHTED_KINDS,
    ModelRequirements,
    NetworkModel,
    UnknownModelError,
    layer_requirements,
    load_model,
    load_published_totals,
    model_requirements,
)
from .units import Number, format_number, quote_cell, to_fraction

logger = logging.getLogger(__name__)

MEASUREMENTS_DIR = Path(__file__).parent / "data" / "measurements"

MEASUREMENT_COLUMNS = (
    "level", "platform", "mode", "datatype", "model", "layer",
    "parallelism_kind", "parallelism_n", "scope",
    "latency_ms", "throughput_gops", "power_watts", "top1_pct", "top5_pct",
)
EXTENDED_COLUMNS = MEASUREMENT_COLUMNS + ("reported_efficiency",)

# Selector names accepted by stats, filters and pareto objectives.
NUMERIC_FIELDS: Dict[str, str] = {
    "latency": "latency_ms",
    "latency_ms": "latency_ms",
    "throughput": "throughput_gops",
    "throughput_gops": "throughput_gops",
    "power": "power_watts",
    "power_watts": "power_watts",
    "top1": "top1_pct",
    "top1_pct": "top1_pct",
    "top5": "top5_pct",
    "top5_pct": "top5_pct",
    "reported_efficiency": "reported_efficiency",
}

EFFICIENCY_BASES = ("key", "platform_max")


class MeasurementError(Exception):
    """Base exception for measurement handling."""
    pass


class MeasurementParseError(MeasurementError):
    """Raised when a measurements file has no usable header."""
    pass


class InvalidLatencyError(MeasurementError):
    """Raised for zero or negative latency."""
    pass


class MissingPeakError(MeasurementError):
    """Raised when efficiency is requested without a theoretical peak."""
    pass


class EmptySubsetError(MeasurementError):
    """Raised when statistics are requested over no records."""
    pass


class MissingFieldError(MeasurementError):
    """Raised when a selected field is absent from a record."""
    pass


class ParallelismKind(Enum):
    BATCH = "batch"
    THREADS = "threads"


class Scope(Enum):
    SYSTEM = "system"
    COMPUTE = "compute"


@dataclass(frozen=True)
class Parallelism:
    kind: ParallelismKind
    n: int

    def work_count(self, threads_multiply: bool = False) -> int:
        """Inputs processed per measured pass."""
        if self.kind is ParallelismKind.BATCH or threads_multiply:
            return self.n
        return 1

    def __str__(self) -> str:
        prefix = "b" if self.kind is ParallelismKind.BATCH else "t"
        return f"{prefix}={self.n}"


@dataclass(frozen=True)
class MeasurementRecord:
    """One benchmark observation."""

    record_id: RecordId
    level: int
    platform_key: PlatformKey
    model: str
    layer: Optional[str]
    parallelism: Parallelism
    scope: Scope
    latency_ms: Decimal
    throughput_gops: Optional[Decimal] = None
    power_watts: Optional[Decimal] = None
    top1_pct: Optional[Decimal] = None
    top5_pct: Optional[Decimal] = None
    reported_efficiency: Optional[Decimal] = None

    @property
    def platform(self) -> str:
        return self.platform_key[0]

    @property
    def mode(self) -> str:
        return self.platform_key[1]

    @property
    def datatype(self) -> str:
        return self.platform_key[2]

    @property
    def label(self) -> str:
        parts = [self.model]
        if self.layer:
            parts.append(self.layer)
        parts.extend(part for part in self.platform_key if part)
        parts.extend([str(self.parallelism), self.scope.value])
        return " ".join(parts)

    def value(self, selector: str) -> Optional[Decimal]:
        """Numeric field by selector name."""
        try:
            attribute = NUMERIC_FIELDS[selector.lower()]
        except KeyError:
            raise MeasurementError(
                f"Unknown numeric field '{selector}' (choose from {', '.join(sorted(set(NUMERIC_FIELDS)))})"
            )
        return getattr(self, attribute)

    def attribute(self, key: str) -> Optional[str]:
        """Any record field rendered as text, for filters and grouping."""
        key = key.lower()
        if key in ("source", "file"):
            return self.record_id[0]
        if key == "level":
            return str(self.level)
        if key in ("platform", "mode", "datatype", "model", "layer"):
            return getattr(self, key)
        if key == "parallelism_kind":
            return self.parallelism.kind.value
        if key == "parallelism_n":
            return str(self.parallelism.n)
        if key == "parallelism":
            return str(self.parallelism)
        if key == "scope":
            return self.scope.value
        if key in NUMERIC_FIELDS:
            value = self.value(key)
            return None if value is None else str(value)
        raise MeasurementError(f"Unknown record field '{key}'")


@dataclass(frozen=True)
class StatsSummary:
    """Min, max, mean and variance of one field over a record subset."""

    field: str
    count: int
    min: float
    max: float
    mean: float
    variance: float
    sample_variance: Optional[float] = None

    def to_dict(self) -> Dict[str, Union[str, int, float, None]]:
        return {
            "field": self.field,
            "count": self.count,
            "min": self.min,
            "max": self.max,
            "mean": self.mean,
            "variance": self.variance,
            "sample_variance": self.sample_variance,
        }


def ingest_measurements(text: str, source: str = "<input>") -> Tuple[List[MeasurementRecord], ValidationReport]:
    """Parse measurements CSV text; row problems become fail findings."""
    header: Optional[Tuple[str, ...]] = None
    records: List[MeasurementRecord] = []
    findings: List[Finding] = []
    rows_seen = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [cell.strip() for cell in next(csv.reader([stripped]))]

        if header is None:
            columns = tuple(cell.lower() for cell in fields)
            if columns not in (MEASUREMENT_COLUMNS, EXTENDED_COLUMNS):
                expected = ",".join(MEASUREMENT_COLUMNS)
                raise MeasurementParseError(
                    f"{source}:{line_no}: unreadable header; expected {expected}[,reported_efficiency]"
                )
            header = columns
            continue

        rows_seen += 1
        record_id = (source, line_no)
        if len(fields) != len(header):
            error = MeasurementError(f"expected {len(header)} fields, found {len(fields)}")
            findings.append(_malformed(record_id, error))
            continue
        try:
            records.append(_parse_record(dict(zip(header, fields)), record_id))
        except MeasurementError as e:
            findings.append(_malformed(record_id, e))

    if header is None:
        raise MeasurementParseError(f"{source}: missing header line")

    logger.debug(f"Ingested {len(records)} of {rows_seen} rows from {source}")
    return records, ValidationReport(record_count=rows_seen, findings=tuple(findings))


def _malformed(record_id: RecordId, error: MeasurementError) -> Finding:
    rule = "nonpositive-latency" if isinstance(error, InvalidLatencyError) else "malformed-row"
    return Finding(record_id=record_id, rule=rule, severity=Severity.FAIL, message=str(error))


def _parse_record(row: Dict[str, str], record_id: RecordId) -> MeasurementRecord:
    try:
        level = int(row["level"])
    except ValueError:
        raise MeasurementError(f"level is not an integer: '{row['level']}'")
    if level not in (1, 2, 3):
        raise MeasurementError(f"level must be 1, 2 or 3, got {level}")

    if not row["platform"]:
        raise MeasurementError("platform is empty")
    if not row["datatype"]:
        raise MeasurementError("datatype is empty")
    if not row["model"]:
        raise MeasurementError("model is empty")

    try:
        kind = ParallelismKind(row["parallelism_kind"].lower())
    except ValueError:
        raise MeasurementError(f"parallelism_kind must be batch or threads, got '{row['parallelism_kind']}'")
    try:
        count = int(row["parallelism_n"])
    except ValueError:
        raise MeasurementError(f"parallelism_n is not an integer: '{row['parallelism_n']}'")
    if count < 1:
        raise MeasurementError(f"parallelism_n must be positive, got {count}")

    try:
        scope = Scope(row["scope"].lower())
    except ValueError:
        raise MeasurementError(f"scope must be system or compute, got '{row['scope']}'")

    latency = _decimal(row["latency_ms"], "latency_ms")
    if latency is None:
        raise MeasurementError("latency_ms is missing")
    if latency <= 0:
        raise InvalidLatencyError(f"nonpositive latency: {latency} ms")

    numbers: Dict[str, Optional[Decimal]] = {}
    for column in ("throughput_gops", "power_watts", "top1_pct", "top5_pct", "reported_efficiency"):
        value = _decimal(row.get(column, ""), column)
        if value is not None and value < 0:
            raise MeasurementError(f"{column} must not be negative, got {value}")
        numbers[column] = value
    for column in ("top1_pct", "top5_pct"):
        value = numbers[column]
        if value is not None and value > 100:
            raise MeasurementError(f"{column} must lie in [0, 100], got {value}")

    layer = row["layer"] or None
    if level in (1, 2) and layer is None:
        raise MeasurementError(f"level {level} records need a layer name")
    if level == 3 and numbers["top1_pct"] is None and numbers["top5_pct"] is None:
        raise MeasurementError("level 3 records need top1_pct or top5_pct")

    return MeasurementRecord(
        record_id=record_id,
        level=level,
        platform_key=(row["platform"], row["mode"], row["datatype"]),
        model=row["model"],
        layer=layer,
        parallelism=Parallelism(kind=kind, n=count),
        scope=scope,
        latency_ms=latency,
        **numbers,
    )


def _decimal(cell: str, column: str) -> Optional[Decimal]:
    if not cell:
        return None
    try:
        value = Decimal(cell)
    except InvalidOperation:
        raise MeasurementError(f"malformed number in {column}: '{cell}'")
    if not value.is_finite():
        raise MeasurementError(f"malformed number in {column}: '{cell}'")
    return value


def load_measurements(path: Union[str, Path]) -> Tuple[List[MeasurementRecord], ValidationReport]:
    """Read and ingest one measurements file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise MeasurementError(f"Cannot read measurements {path}: {e}") from e
    records, report = ingest_measurements(text, source=path.name)
    logger.info(f"Ingested {len(records)} records from {path.name}")
    return records, report


def ingest_files(
    paths: Sequence[Union[str, Path]], max_workers: int = 4
) -> Tuple[List[MeasurementRecord], ValidationReport]:
    """Ingest several files concurrently, merged in (file name, row) order."""
    ordered = sorted((Path(p) for p in paths), key=lambda p: (p.name, str(p)))
    names = [p.name for p in ordered]
    if len(set(names)) != len(names):
        raise MeasurementError("measurement files must have distinct names")

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        results = list(pool.map(load_measurements, ordered))

    records: List[MeasurementRecord] = []
    report = ValidationReport()
    for file_records, file_report in results:
        records.extend(file_records)
        report = report.merge(file_report)
    return records, report


def bundled_measurement_files() -> List[Path]:
    return sorted(MEASUREMENTS_DIR.glob("*.csv"))


def serialize_measurements(records: Iterable[MeasurementRecord]) -> str:
    """Write records in the measurements CSV format."""
    lines = [",".join(EXTENDED_COLUMNS)]
    for record in records:
        platform, mode, datatype = record.platform_key
        cells = [
            str(record.level), quote_cell(platform), quote_cell(mode), quote_cell(datatype),
            quote_cell(record.model), quote_cell(record.layer or ""),
            record.parallelism.kind.value, str(record.parallelism.n), record.scope.value,
            str(record.latency_ms),
        ]
        for column in ("throughput_gops", "power_watts", "top1_pct", "top5_pct", "reported_efficiency"):
            value = getattr(record, column)
            cells.append("" if value is None else str(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _as_parallelism(parallelism: Union[Parallelism, int]) -> Parallelism:
    if isinstance(parallelism, Parallelism):
        return parallelism
    return Parallelism(kind=ParallelismKind.BATCH, n=parallelism)


def throughput_from_latency(
    ops_per_input: Number,
    parallelism: Union[Parallelism, int],
    latency_ms: Number,
    threads_multiply: bool = False,
) -> Fraction:
    """GOP/s achieved when one pass over ``count`` inputs takes ``latency_ms``."""
    latency = to_fraction(latency_ms)
    if latency <= 0:
        raise InvalidLatencyError(f"latency must be positive, got {latency_ms} ms")
    count = _as_parallelism(parallelism).work_count(threads_multiply)
    return to_fraction(ops_per_input) * count / (latency * 10**6)


def efficiency(measured_gops: Number, platform: Optional[PlatformEntry]) -> Fraction:
    """Measured throughput as a fraction of the platform's theoretical peak."""
    if platform is None or platform.peak_tops is None:
        raise MissingPeakError("efficiency needs a platform with a peak throughput")
    return to_fraction(measured_gops) / platform.peak_gops


def consistency_check(
    record: MeasurementRecord,
    declared_ops: Optional[int],
    platform: Optional[PlatformEntry] = None,
    threshold: Number = Decimal("0.02"),
    threads_multiply: bool = False,
    exact: bool = False,
) -> List[Finding]:
    """Cross-check a record's throughput and latency against its declared work."""
    findings: List[Finding] = []

    if declared_ops is None:
        target = record.model if record.layer is None else f"{record.model} {record.layer}"
        findings.append(Finding(
            record_id=record.record_id,
            rule="unknown-reference",
            severity=Severity.WARN,
            message=f"no requirements known for {target}",
        ))
    elif record.throughput_gops is not None and declared_ops > 0:
        count = record.parallelism.work_count(threads_multiply)
        implied = Fraction(record.throughput_gops) * Fraction(record.latency_ms) * 10**6 / count
        deviation = abs(implied - declared_ops) / declared_ops
        if deviation > to_fraction(threshold):
            findings.append(Finding(
                record_id=record.record_id,
                rule="ops-deviation",
                severity=Severity.WARN,
                message=(
                    f"throughput x latency implies {format_number(implied / 10**6, exact=exact)} MOP per input, "
                    f"declared {format_number(Fraction(declared_ops, 10**6), exact=exact)} MOP "
                    f"({format_number(deviation * 100, exact=exact)}% off)"
                ),
            ))

    if platform is not None and record.throughput_gops is not None:
        measured = efficiency(record.throughput_gops, platform)
        if measured > 1:
            findings.append(Finding(
                record_id=record.record_id,
                rule="efficiency-above-peak",
                severity=Severity.FAIL,
                message=(
                    f"{record.throughput_gops} GOP/s exceeds the {platform.label} peak "
                    f"({format_number(measured, exact=exact)})"
                ),
            ))
    return findings


class ReferenceResolver:
    """Resolve the declared per-input ops of a record from model requirements.

    Models passed in are used as given. With ``search`` set, models the
    resolver has not seen are looked up by name in ``models_dir`` and then
    among the bundled topologies, once per name.
    """

    def __init__(
        self,
        models: Iterable[NetworkModel] = (),
        totals: Optional[Mapping[str, ModelRequirements]] = None,
        models_dir: Optional[Union[str, Path]] = None,
        default_seq_len: int = DEFAULT_SEQ_LEN,
        search: bool = False,
    ) -> None:
        self.logger = logging.getLogger(__name__)
        self.models: Dict[str, Optional[NetworkModel]] = {m.name.lower(): m for m in models}
        self.requirements: Dict[str, ModelRequirements] = {
            name: model_requirements(model) for name, model in self.models.items() if model is not None
        }
        self.totals: Dict[str, ModelRequirements] = {k.lower(): v for k, v in (totals or {}).items()}
        self.models_dir = models_dir
        self.default_seq_len = default_seq_len
        self.search = search

    @classmethod
    def bundled(
        cls,
        source: str = "topology",
        models_dir: Optional[Union[str, Path]] = None,
        default_seq_len: int = DEFAULT_SEQ_LEN,
    ) -> "ReferenceResolver":
        """Resolver over ``models_dir`` and the bundled topologies, optionally with published totals."""
        totals = load_published_totals() if source == "published" else None
        return cls(totals=totals, models_dir=models_dir, default_seq_len=default_seq_len, search=True)

    def network(self, model: str) -> Optional[NetworkModel]:
        key = model.lower()
        if key not in self.models and self.search:
            try:
                network: Optional[NetworkModel] = load_model(model, self.models_dir, self.default_seq_len)
            except UnknownModelError:
                self.logger.debug(f"No topology found for model {model}")
                network = None
            self.models[key] = network
            if network is not None:
                self.requirements[key] = model_requirements(network)
        return self.models.get(key)

    def model_ops(self, model: str) -> Optional[int]:
        key = model.lower()
        if key in self.totals:
            return self.totals[key].o_total
        if self.network(model) is None:
            return None
        return self.requirements[key].o_total

    def layer_ops(self, model: str, layer: str) -> Optional[int]:
        network = self.network(model)
        if network is None:
            return None
        spec = network.layer(layer)
        return None if spec is None else layer_requirements(spec).ops

    def stack_ops(self, model: str, stack: str) -> Optional[int]:
        """Ops of the weighted layers named ``<stack>_*``."""
        network = self.network(model)
        if network is None:
            return None
        prefix = f"{stack}_"
        members = [
            layer for layer in network.layers
            if layer.name.startswith(prefix) and layer.kind in WEIGHTED_KINDS
        ]
        if not members:
            return None
        return sum(layer_requirements(layer).ops for layer in members)

    def declared_ops(self, record: MeasurementRecord) -> Optional[int]:
        if record.level == 3:
            return self.model_ops(record.model)
        if record.layer is None:
            return None
        if record.level == 1:
            return self.layer_ops(record.model, record.layer)
        return self.stack_ops(record.model, record.layer)


def peak_entry(
    catalog: Sequence[PlatformEntry], record: MeasurementRecord, basis: str = "key"
) -> Optional[PlatformEntry]:
    """Catalog entry whose peak is the efficiency denominator for a record."""
    if basis not in EFFICIENCY_BASES:
        raise MeasurementError(f"efficiency basis must be one of {', '.join(EFFICIENCY_BASES)}")
    if basis == "platform_max":
        return platform_max_peak(catalog, record.platform)
    return lookup(catalog, *record.platform_key)


def efficiency_getter(
    catalog: Sequence[PlatformEntry], basis: str = "key"
) -> Callable[[MeasurementRecord], Optional[Fraction]]:
    """Per-record efficiency, None when throughput or the peak is unknown."""
    if basis not in EFFICIENCY_BASES:
        raise MeasurementError(f"efficiency basis must be one of {', '.join(EFFICIENCY_BASES)}")

    def _efficiency(record: MeasurementRecord) -> Optional[Fraction]:
        entry = peak_entry(catalog, record, basis)
        if entry is None or record.throughput_gops is None:
            return None
        return efficiency(record.throughput_gops, entry)

    return _efficiency


def validate_records(
    records: Sequence[MeasurementRecord],
    catalog: Sequence[PlatformEntry],
    resolver: ReferenceResolver,
    threshold: Number = Decimal("0.02"),
    threads_multiply: bool = False,
    efficiency_basis: str = "key",
    reported_tolerance: Number = Decimal("0.01"),
    exact: bool = False,
) -> ValidationReport:
    """Run every record-level check and collect the findings."""
    tolerance = to_fraction(reported_tolerance)
    findings: List[Finding] = []

    for record in records:
        if lookup(catalog, *record.platform_key) is None:
            findings.append(Finding(
                record_id=record.record_id,
                rule="unknown-platform",
                severity=Severity.WARN,
                message=f"{' '.join(p for p in record.platform_key if p)} is not in the catalog",
            ))
        denominator = peak_entry(catalog, record, efficiency_basis)
        findings.extend(consistency_check(
            record, resolver.declared_ops(record), denominator, threshold, threads_multiply, exact,
        ))

        if record.reported_efficiency is None or record.throughput_gops is None or denominator is None:
            continue
        recomputed = efficiency(record.throughput_gops, denominator)
        if abs(recomputed - Fraction(record.reported_efficiency)) > tolerance:
            findings.append(Finding(
                record_id=record.record_id,
                rule="reported-efficiency-mismatch",
                severity=Severity.WARN,
                message=(
                    f"reported efficiency {record.reported_efficiency} but "
                    f"{record.throughput_gops} / {denominator.peak_gops} GOP/s "
                    f"gives {format_number(recomputed, exact=exact)}"
                ),
            ))

    report = ValidationReport(record_count=len(records), findings=tuple(findings))
    logger.info(f"Validated {len(records)} records: {report.warn_count} warn, {report.fail_count} fail")
    return report


def aggregate_stats(records: Sequence[MeasurementRecord], field: str) -> StatsSummary:
    """Min, max, mean, population and sample variance of a field."""
    if not records:
        raise EmptySubsetError(f"no records to summarise for {field}")

    values = []
    for record in records:
        value = record.value(field)
        if value is None:
            raise MissingFieldError(f"record {record.record_id[0]}:{record.record_id[1]} has no {field}")
        values.append(float(value))

    data = np.asarray(values, dtype=np.float64)
    return StatsSummary(
        field=field,
        count=int(data.size),
        min=float(data.min()),
        max=float(data.max()),
        mean=float(data.mean()),
        variance=float(data.var(ddof=0)),
        sample_variance=float(data.var(ddof=1)) if data.size > 1 else None,
    )


def parse_filters(expressions: Iterable[str]) -> List[Tuple[str, str]]:
    """Split ``key=value`` filter expressions."""
    filters = []
    for expression in expressions:
        key, sep, value = expression.partition("=")
        if not sep or not key.strip():
            raise MeasurementError(f"filter must look like key=value, got '{expression}'")
        filters.append((key.strip().lower(), value.strip()))
    return filters


def filter_records(
    records: Iterable[MeasurementRecord], filters: Iterable[Tuple[str, str]]
) -> List[MeasurementRecord]:
    """Keep records whose fields match every filter (case-insensitive globs)."""
    filters = list(filters)
    selected = []
    for record in records:
        for key, pattern in filters:
            actual = record.attribute(key)
            if actual is None or not fnmatch.fnmatchcase(actual.lower(), pattern.lower()):
                break
        else:
            selected.append(record)
    return selected


def group_stats(
    records: Sequence[MeasurementRecord], field: str, key: str
) -> Dict[str, StatsSummary]:
    """Statistics per distinct value of a record field, in first-seen order."""
    groups: Dict[str, List[MeasurementRecord]] = {}
    for record in records:
        groups.setdefault(record.attribute(key) or "", []).append(record)
    return {name: aggregate_stats(members, field) for name, members in groups.items()}


def without_ids(record: MeasurementRecord) -> MeasurementRecord:
    """Record with a neutral id, for comparing content across sources."""
    return replace(record, record_id=("", 0))
