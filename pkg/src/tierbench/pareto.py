"""Pareto frontiers over measurement records under configurable objective directions."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .findings import Finding, RecordId, Severity
from .measurements import MeasurementRecord
from .units import format_number, quote_cell

logger = logging.getLogger(__name__)

OBJECTIVE_FIELDS = ("top1", "top5", "throughput", "latency", "power", "efficiency")

EfficiencyGetter = Callable[[MeasurementRecord], Optional[Fraction]]


class ParetoError(Exception):
    """Base exception for frontier computation."""
    pass


class InvalidObjectiveError(ParetoError):
    """Raised for malformed, unknown or repeated objectives."""
    pass


class MissingObjectiveError(ParetoError):
    """Raised when a record lacks a value for an objective field."""

    def __init__(self, record_id: RecordId, field: str) -> None:
        self.record_id = record_id
        self.field = field
        super().__init__(f"record {record_id[0]}:{record_id[1]} has no value for {field}")


class Direction(Enum):
    MAXIMIZE = "max"
    MINIMIZE = "min"


@dataclass(frozen=True)
class Objective:
    """A record field and whether larger or smaller is better."""

    field: str
    direction: Direction

    @classmethod
    def parse(cls, text: str) -> "Objective":
        """Parse ``field:max`` or ``field:min``."""
        name, sep, direction = text.strip().partition(":")
        name = name.strip().lower()
        direction = direction.strip().lower()
        if not sep or not name:
            raise InvalidObjectiveError(f"objective must look like field:max|min, got '{text}'")
        if name not in OBJECTIVE_FIELDS:
            raise InvalidObjectiveError(f"unknown objective field '{name}' (choose from {', '.join(OBJECTIVE_FIELDS)})")
        aliases = {"max": Direction.MAXIMIZE, "maximize": Direction.MAXIMIZE,
                   "min": Direction.MINIMIZE, "minimize": Direction.MINIMIZE}
        if direction not in aliases:
            raise InvalidObjectiveError(f"objective direction must be max or min, got '{direction}'")
        return cls(field=name, direction=aliases[direction])

    def __str__(self) -> str:
        return f"{self.field}:{self.direction.value}"


@dataclass(frozen=True)
class ParetoResult:
    """Non-dominated records plus bookkeeping about the rest."""

    objectives: Tuple[Objective, ...]
    frontier: Tuple[MeasurementRecord, ...]
    dominated_count: int
    excluded: Tuple[Finding, ...] = field(default_factory=tuple)

    @property
    def frontier_ids(self) -> List[RecordId]:
        return [record.record_id for record in self.frontier]


def validate_objectives(objectives: Sequence[Objective]) -> None:
    if len(objectives) < 2:
        raise InvalidObjectiveError("a frontier needs at least two objectives")
    fields = [objective.field for objective in objectives]
    if len(set(fields)) != len(fields):
        raise InvalidObjectiveError(f"objective fields must be distinct: {', '.join(fields)}")
    for name in fields:
        if name not in OBJECTIVE_FIELDS:
            raise InvalidObjectiveError(f"unknown objective field '{name}'")


def objective_value(
    record: MeasurementRecord, objective: Objective, efficiency_of: Optional[EfficiencyGetter] = None
) -> Fraction:
    """Value of the objective field, not yet direction-adjusted."""
    if objective.field == "efficiency":
        value = efficiency_of(record) if efficiency_of is not None else None
    else:
        value = record.value(objective.field)
    if value is None:
        raise MissingObjectiveError(record.record_id, objective.field)
    return Fraction(value)


def _adjusted(record: MeasurementRecord, objectives: Sequence[Objective],
              efficiency_of: Optional[EfficiencyGetter]) -> Tuple[Fraction, ...]:
    values = []
    for objective in objectives:
        value = objective_value(record, objective, efficiency_of)
        values.append(value if objective.direction is Direction.MAXIMIZE else -value)
    return tuple(values)


def dominates(
    a: MeasurementRecord,
    b: MeasurementRecord,
    objectives: Sequence[Objective],
    efficiency_of: Optional[EfficiencyGetter] = None,
) -> bool:
    """True when a is at least as good as b everywhere and strictly better once."""
    better_in_any = False
    for a_value, b_value in zip(_adjusted(a, objectives, efficiency_of), _adjusted(b, objectives, efficiency_of)):
        if a_value < b_value:
            return False
        if a_value > b_value:
            better_in_any = True
    return better_in_any


def pareto_frontier(
    records: Sequence[MeasurementRecord],
    objectives: Sequence[Objective],
    efficiency_of: Optional[EfficiencyGetter] = None,
) -> ParetoResult:
    """Exact non-dominated subset; records lacking a field are excluded with a warning."""
    validate_objectives(objectives)
    if not records:
        raise ParetoError("a frontier needs at least one record")

    usable: List[MeasurementRecord] = []
    vectors: List[Tuple[Fraction, ...]] = []
    excluded: List[Finding] = []
    for record in records:
        try:
            vectors.append(_adjusted(record, objectives, efficiency_of))
        except MissingObjectiveError as e:
            excluded.append(Finding(
                record_id=record.record_id,
                rule="missing-objective",
                severity=Severity.WARN,
                message=f"excluded from frontier: no value for {e.field}",
            ))
            continue
        usable.append(record)

    if excluded:
        logger.warning(f"{len(excluded)} records lack an objective field and were left out of the frontier")
    if not usable:
        return ParetoResult(tuple(objectives), (), 0, tuple(excluded))

    ranks = _dense_ranks(vectors)
    at_least = (ranks[:, None, :] >= ranks[None, :, :]).all(axis=2)
    strictly = (ranks[:, None, :] > ranks[None, :, :]).any(axis=2)
    dominated = (at_least & strictly).any(axis=0)

    members = [index for index in range(len(usable)) if not dominated[index]]
    members.sort(key=lambda index: (-vectors[index][0], usable[index].record_id))
    frontier = tuple(usable[index] for index in members)
    logger.debug(f"Frontier holds {len(frontier)} of {len(usable)} records")
    return ParetoResult(
        objectives=tuple(objectives),
        frontier=frontier,
        dominated_count=len(usable) - len(frontier),
        excluded=tuple(sorted(excluded, key=lambda f: f.sort_key)),
    )


def _dense_ranks(vectors: Sequence[Tuple[Fraction, ...]]) -> np.ndarray:
    """Replace exact values by their per-objective dense rank."""
    columns = list(zip(*vectors))
    ranks = np.empty((len(vectors), len(columns)), dtype=np.int64)
    for j, column in enumerate(columns):
        order: Dict[Fraction, int] = {value: rank for rank, value in enumerate(sorted(set(column)))}
        ranks[:, j] = [order[value] for value in column]
    return ranks


def brute_force_frontier(
    records: Sequence[MeasurementRecord],
    objectives: Sequence[Objective],
    efficiency_of: Optional[EfficiencyGetter] = None,
) -> List[MeasurementRecord]:
    """Quadratic reference implementation of the non-dominated set."""
    return [
        candidate for candidate in records
        if not any(dominates(other, candidate, objectives, efficiency_of) for other in records)
    ]


_RECORD_COLUMNS = ("source", "row", "level", "model", "platform", "mode", "datatype", "parallelism", "scope")


def _record_cells(record: MeasurementRecord) -> List[str]:
    cells = [
        record.record_id[0], str(record.record_id[1]), str(record.level), record.model,
        record.platform, record.mode, record.datatype, str(record.parallelism), record.scope.value,
    ]
    return [quote_cell(cell) for cell in cells]


def _objective_cells(record: MeasurementRecord, objectives: Sequence[Objective],
                     efficiency_of: Optional[EfficiencyGetter], exact: bool = False) -> List[str]:
    cells = []
    for objective in objectives:
        try:
            value = objective_value(record, objective, efficiency_of)
        except MissingObjectiveError:
            cells.append("")
            continue
        if objective.field == "efficiency":
            cells.append(format_number(value, places=4, exact=exact))
        else:
            cells.append(str(record.value(objective.field)))
    return cells


def frontier_csv(
    result: ParetoResult, efficiency_of: Optional[EfficiencyGetter] = None, exact: bool = False
) -> str:
    """Frontier members in frontier order."""
    header = list(_RECORD_COLUMNS) + [o.field for o in result.objectives]
    lines = [",".join(header)]
    for record in result.frontier:
        cells = _record_cells(record) + _objective_cells(record, result.objectives, efficiency_of, exact)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def scatter_csv(
    records: Iterable[MeasurementRecord],
    result: ParetoResult,
    efficiency_of: Optional[EfficiencyGetter] = None,
    exact: bool = False,
) -> str:
    """Every record with its objective values and a frontier flag, for plotting."""
    members = set(result.frontier_ids)
    header = list(_RECORD_COLUMNS) + [o.field for o in result.objectives] + ["frontier"]
    lines = [",".join(header)]
    for record in sorted(records, key=lambda r: r.record_id):
        flag = "1" if record.record_id in members else "0"
        lines.append(",".join(
            _record_cells(record) + _objective_cells(record, result.objectives, efficiency_of, exact) + [flag]
        ))
    return "\n".join(lines) + "\n"
