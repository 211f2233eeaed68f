"""Report assembly and rendering (text, csv, json) plus safe artifact output."""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import jsonschema
from jinja2 import Environment, FileSystemLoader, TemplateError

from .catalog import PlatformEntry
from .findings import ValidationReport
from .measurements import (
    MeasurementRecord,
    ReferenceResolver,
    StatsSummary,
    aggregate_stats,
    efficiency_getter,
    validate_records,
)
from .pareto import EfficiencyGetter, Objective, ParetoResult, objective_value, pareto_frontier, scatter_csv
from .roofline import Prediction
from .units import Number, format_number, format_table

REPORT_FORMATS = ("text", "csv", "json")

LEVEL_TITLES = {
    1: "Level 1: single layers",
    2: "Level 2: layer stacks",
    3: "Level 3: full applications",
}

# Fields summarised per level when every record in the level carries them.
SUMMARY_FIELDS = ("latency", "throughput", "power")

NO_DATA = "no data"

_STATS_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["field", "count", "min", "max", "mean", "variance", "sample_variance"],
    "properties": {
        "field": {"type": "string"},
        "count": {"type": "integer", "minimum": 1},
        "min": {"type": "number"},
        "max": {"type": "number"},
        "mean": {"type": "number"},
        "variance": {"type": "number", "minimum": 0},
        "sample_variance": {"type": ["number", "null"]},
    },
}

_RECORD_REF_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["source", "row", "label", "values"],
    "properties": {
        "source": {"type": "string"},
        "row": {"type": "integer"},
        "label": {"type": "string"},
        "values": {"type": "object"},
    },
}

REPORT_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["predictions", "levels", "pareto", "validation"],
    "properties": {
        "predictions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["model", "platform", "mode", "datatype", "batch", "ai", "attainable_gops", "bound"],
                "properties": {
                    "model": {"type": "string"},
                    "platform": {"type": "string"},
                    "mode": {"type": "string"},
                    "datatype": {"type": "string"},
                    "batch": {"type": "integer", "minimum": 1},
                    "ai": {"type": ["number", "null"]},
                    "attainable_gops": {"type": ["number", "null"], "minimum": 0},
                    "bound": {"enum": ["compute_bound", "memory_bound", "ridge", "unsupported"]},
                    "warning": {"type": ["string", "null"]},
                },
            },
        },
        "levels": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["level", "title", "record_count", "stats", "status"],
                "properties": {
                    "level": {"enum": [1, 2, 3]},
                    "title": {"type": "string"},
                    "record_count": {"type": "integer", "minimum": 0},
                    "stats": {"type": "array", "items": _STATS_SCHEMA},
                    "status": {"enum": ["ok", NO_DATA]},
                },
            },
        },
        "pareto": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["objectives", "frontier", "dominated_count", "excluded_count"],
                    "properties": {
                        "objectives": {"type": "array", "items": {"type": "string"}, "minItems": 2},
                        "frontier": {"type": "array", "items": _RECORD_REF_SCHEMA},
                        "dominated_count": {"type": "integer", "minimum": 0},
                        "excluded_count": {"type": "integer", "minimum": 0},
                    },
                },
            ]
        },
        "validation": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["record_count", "warn_count", "fail_count", "findings"],
                    "properties": {
                        "record_count": {"type": "integer", "minimum": 0},
                        "warn_count": {"type": "integer", "minimum": 0},
                        "fail_count": {"type": "integer", "minimum": 0},
                        "findings": {"type": "array"},
                    },
                },
            ]
        },
    },
}


class ReportError(Exception):
    """Base exception for report rendering and output."""
    pass


class UnknownFormatError(ReportError):
    """Raised when a report format is not one of text, csv, json."""
    pass


class TemplateRenderError(ReportError):
    """Raised when template rendering fails."""
    pass


class InvalidFilenameError(ReportError):
    """Raised when an invalid artifact filename is provided."""
    pass


@dataclass
class ReportStore:
    """Everything a report shows, computed up front so rendering is pure."""

    predictions: List[Prediction] = field(default_factory=list)
    records: List[MeasurementRecord] = field(default_factory=list)
    validation: Optional[ValidationReport] = None
    level_stats: Dict[int, List[StatsSummary]] = field(default_factory=dict)
    pareto: Optional[ParetoResult] = None
    efficiency_of: Optional[EfficiencyGetter] = None
    exact: bool = False

    def records_at(self, level: int) -> List[MeasurementRecord]:
        return [record for record in self.records if record.level == level]


def level_statistics(records: Sequence[MeasurementRecord]) -> Dict[int, List[StatsSummary]]:
    """Per-level summaries of the fields every record in the level carries."""
    stats: Dict[int, List[StatsSummary]] = {}
    for level in LEVEL_TITLES:
        members = [record for record in records if record.level == level]
        if not members:
            continue
        stats[level] = [
            aggregate_stats(members, name) for name in SUMMARY_FIELDS
            if all(record.value(name) is not None for record in members)
        ]
    return stats


def build_store(
    records: Sequence[MeasurementRecord],
    catalog: Sequence[PlatformEntry],
    resolver: ReferenceResolver,
    predictions: Sequence[Prediction] = (),
    objectives: Sequence[Objective] = (),
    threshold: Number = 0.02,
    threads_multiply: bool = False,
    efficiency_basis: str = "key",
    reported_tolerance: Number = 0.01,
    ingest_report: Optional[ValidationReport] = None,
    exact: bool = False,
) -> ReportStore:
    """Validate records, summarise each level and compute the level 3 frontier."""
    logger = logging.getLogger(__name__)
    ordered = sorted(records, key=lambda r: r.record_id)

    validation = validate_records(
        ordered, catalog, resolver, threshold, threads_multiply, efficiency_basis, reported_tolerance, exact,
    )
    if ingest_report is not None:
        validation = validation.with_findings(ingest_report.findings)

    efficiency_of = efficiency_getter(catalog, efficiency_basis)
    pareto: Optional[ParetoResult] = None
    applications = [record for record in ordered if record.level == 3]
    if objectives and applications:
        pareto = pareto_frontier(applications, objectives, efficiency_of)
    elif objectives:
        logger.warning("No level 3 records; the report has no pareto frontier")

    return ReportStore(
        predictions=list(predictions),
        records=ordered,
        validation=validation,
        level_stats=level_statistics(ordered),
        pareto=pareto,
        efficiency_of=efficiency_of,
        exact=exact,
    )


def _prediction_rows(predictions: Sequence[Prediction], exact: bool = False) -> List[List[str]]:
    rows = []
    for row in predictions:
        platform, mode, datatype = row.platform_key
        rows.append([
            row.model, platform, mode or "-", datatype, str(row.batch),
            format_number(row.ai, exact=exact),
            format_number(row.attainable_gops, exact=exact) or "-",
            row.bound.value,
        ])
    return rows


def _stats_rows(stats: Sequence[StatsSummary], exact: bool = False) -> List[List[str]]:
    def shown(value: Optional[float], places: int) -> str:
        return format_number(value, places, exact=exact)

    return [
        [s.field, str(s.count), shown(s.min, 3), shown(s.max, 3), shown(s.mean, 3),
         shown(s.variance, 4), shown(s.sample_variance, 4) or "-"]
        for s in stats
    ]


def _objective_text(record: MeasurementRecord, objective: Objective,
                    efficiency_of: Optional[EfficiencyGetter], exact: bool = False) -> str:
    value = objective_value(record, objective, efficiency_of)
    if objective.field == "efficiency":
        return format_number(value, 4, exact=exact)
    return str(record.value(objective.field))


def _text_context(store: ReportStore) -> Dict[str, Any]:
    levels = []
    for level, title in LEVEL_TITLES.items():
        members = store.records_at(level)
        stats = store.level_stats.get(level, [])
        levels.append({
            "title": title,
            "count": len(members),
            "table": format_table(("field", "count", "min", "max", "mean", "variance", "sample_var"),
                                  _stats_rows(stats, store.exact)) if stats else "",
        })

    pareto = None
    if store.pareto is not None:
        objectives = store.pareto.objectives
        rows = [[record.label] + [_objective_text(record, o, store.efficiency_of, store.exact) for o in objectives]
                for record in store.pareto.frontier]
        pareto = {
            "objectives": ", ".join(str(o) for o in objectives),
            "table": format_table(["record"] + [o.field for o in objectives], rows),
            "dominated": store.pareto.dominated_count,
            "excluded": len(store.pareto.excluded),
        }

    return {
        "no_data": NO_DATA,
        "predictions": format_table(("model", "platform", "mode", "datatype", "batch", "ai", "gop_s", "bound"),
                                    _prediction_rows(store.predictions, store.exact)) if store.predictions else "",
        "levels": levels,
        "pareto": pareto,
        "validation": store.validation,
    }


def _number(value: Optional[Number]) -> Optional[Union[int, float]]:
    if value is None:
        return None
    return float(value)


def report_document(store: ReportStore) -> Dict[str, Any]:
    """JSON-ready report structure."""
    predictions = []
    for row in store.predictions:
        platform, mode, datatype = row.platform_key
        predictions.append({
            "model": row.model,
            "platform": platform,
            "mode": mode,
            "datatype": datatype,
            "batch": row.batch,
            "ai": _number(row.ai),
            "attainable_gops": _number(row.attainable_gops),
            "bound": row.bound.value,
            "warning": row.warning,
        })

    levels = []
    for level, title in LEVEL_TITLES.items():
        count = len(store.records_at(level))
        levels.append({
            "level": level,
            "title": title,
            "record_count": count,
            "stats": [s.to_dict() for s in store.level_stats.get(level, [])],
            "status": "ok" if count else NO_DATA,
        })

    pareto = None
    if store.pareto is not None:
        frontier = []
        for record in store.pareto.frontier:
            values = {o.field: _number(objective_value(record, o, store.efficiency_of))
                      for o in store.pareto.objectives}
            frontier.append({
                "source": record.record_id[0],
                "row": record.record_id[1],
                "label": record.label,
                "values": values,
            })
        pareto = {
            "objectives": [str(o) for o in store.pareto.objectives],
            "frontier": frontier,
            "dominated_count": store.pareto.dominated_count,
            "excluded_count": len(store.pareto.excluded),
        }

    return {
        "predictions": predictions,
        "levels": levels,
        "pareto": pareto,
        "validation": store.validation.to_dict() if store.validation is not None else None,
    }


class ReportRenderer:
    """Render a ReportStore in one of the supported formats."""

    def __init__(self) -> None:
        self.logger = logging.getLogger(__name__)
        template_dir = Path(__file__).parent / "templates"
        self.env = Environment(
            loader=FileSystemLoader(str(template_dir)),
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )

    def render(self, store: ReportStore, fmt: str = "text") -> str:
        fmt = fmt.lower()
        if fmt not in REPORT_FORMATS:
            raise UnknownFormatError(f"Unknown report format '{fmt}' (choose from {', '.join(REPORT_FORMATS)})")
        if fmt == "csv":
            return self._render_csv(store)
        if fmt == "json":
            return self._render_json(store)
        return self._render_text(store)

    def _render_text(self, store: ReportStore) -> str:
        try:
            template = self.env.get_template("report.txt.j2")
            return template.render(**_text_context(store))
        except TemplateError as e:
            raise TemplateRenderError(f"Failed to render text report: {e}") from e

    def _render_csv(self, store: ReportStore) -> str:
        if store.pareto is None:
            return f"# {NO_DATA}\n"
        applications = store.records_at(3)
        return scatter_csv(applications, store.pareto, store.efficiency_of, store.exact)

    def _render_json(self, store: ReportStore) -> str:
        document = report_document(store)
        try:
            jsonschema.validate(document, REPORT_SCHEMA)
        except jsonschema.ValidationError as e:
            raise ReportError(f"Report document failed schema validation: {e.message}") from e
        return json.dumps(document, indent=2, sort_keys=True) + "\n"


def render_report(store: ReportStore, fmt: str = "text") -> str:
    """Render a report as text, csv or json."""
    return ReportRenderer().render(store, fmt)


_FILENAME_PATTERN = re.compile(r"^[a-zA-Z0-9._-]+$")
_UNSAFE_CHARS_PATTERN = re.compile(r"[^a-zA-Z0-9._-]")
_MULTIPLE_UNDERSCORES_PATTERN = re.compile(r"_+")


def artifact_name(*parts: str, suffix: str = ".csv") -> str:
    """Join name parts into a filename made only of safe characters."""
    joined = "_".join(part for part in parts if part)
    cleaned = _MULTIPLE_UNDERSCORES_PATTERN.sub("_", _UNSAFE_CHARS_PATTERN.sub("_", joined)).strip("_.")
    return (cleaned or "artifact") + suffix


def validate_filename(filename: str) -> str:
    """Reject empty, hidden, traversing or oddly-charactered filenames."""
    if not filename:
        raise InvalidFilenameError("Filename cannot be empty")

    if ".." in filename or "/" in filename or "\\" in filename:
        raise InvalidFilenameError(f"Invalid filename pattern: {filename}")

    clean_filename = Path(filename).name
    if clean_filename.startswith("."):
        raise InvalidFilenameError(f"Invalid filename pattern: {filename}")

    if len(clean_filename) > 255 or not _FILENAME_PATTERN.match(clean_filename):
        raise InvalidFilenameError(f"Invalid filename characters: {clean_filename}")

    return clean_filename


def _is_safe_path(path: Path, out_dir: Path) -> bool:
    """Check that path sits directly inside the output directory."""
    try:
        return path.resolve().parent == out_dir.resolve()
    except (OSError, RuntimeError):
        return False


def write_artifact(out_dir: Union[str, Path], filename: str, content: str) -> Path:
    """Write content to out_dir/filename, creating out_dir when needed."""
    logger = logging.getLogger(__name__)
    out_dir = Path(out_dir)
    validated = validate_filename(filename)

    if out_dir.is_file():
        raise ReportError(f"Cannot create output directory: {out_dir} is a file")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportError(f"Cannot create output directory: {e}") from e

    output_path = out_dir / validated
    if not _is_safe_path(output_path, out_dir):
        raise InvalidFilenameError(f"Invalid output path: {output_path}")

    with open(output_path, "w", encoding="utf-8") as f:
        f.write(content)

    logger.info(f"Wrote {output_path}")
    return output_path
