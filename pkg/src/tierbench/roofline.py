"""Roofline analysis: arithmetic intensity, attainable performance and prediction tables."""

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .catalog import DatatypeSpec, PlatformEntry, PlatformKey, datatype_bytes, parse_datatype
from .topology import ModelRequirements
from .units import Number, format_number, quote_cell, to_fraction

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = (
    "model", "platform", "mode", "datatype", "batch", "ai_op_per_byte", "attainable_gops", "bound",
)
CURVE_COLUMNS = ("ai", "attainable_gops")


class RooflineError(Exception):
    """Base exception for roofline analysis."""
    pass


class InvalidWorkloadError(RooflineError):
    """Raised for a batch below one, an empty model or a non-positive intensity."""
    pass


class Bound(Enum):
    COMPUTE_BOUND = "compute_bound"
    MEMORY_BOUND = "memory_bound"
    RIDGE = "ridge"
    UNSUPPORTED = "unsupported"


@dataclass(frozen=True)
class WorkloadPoint:
    """A model at one datatype and batch size, placed on the intensity axis."""

    label: str
    ai: Fraction
    ops: int
    batch: int
    datatype: DatatypeSpec
    model: str = ""


@dataclass(frozen=True)
class Prediction:
    """Attainable throughput of a workload on a platform entry."""

    model: str
    platform_key: PlatformKey
    batch: int
    ai: Optional[Fraction]
    attainable_gops: Optional[Fraction]
    bound: Bound
    warning: Optional[str] = None

    @property
    def attainable_tops(self) -> Optional[Fraction]:
        if self.attainable_gops is None:
            return None
        return self.attainable_gops / 1000

    @property
    def supported(self) -> bool:
        return self.bound is not Bound.UNSUPPORTED


def arithmetic_intensity(req: ModelRequirements, dt: DatatypeSpec, batch: int) -> WorkloadPoint:
    """Operations per byte of weight traffic, with weights fetched once per batch."""
    if isinstance(batch, bool) or not isinstance(batch, int) or batch < 1:
        raise InvalidWorkloadError(f"batch must be a positive integer, got {batch!r}")
    if req.w_total <= 0 or req.o_total <= 0:
        raise InvalidWorkloadError(f"model {req.name} has no weights or operations")

    weight_bytes = req.w_total * datatype_bytes(dt)
    ai = Fraction(batch * req.o_total) / weight_bytes
    return WorkloadPoint(
        label=f"{req.name} b={batch} {dt.name}",
        ai=ai,
        ops=req.o_total,
        batch=batch,
        datatype=dt,
        model=req.name,
    )


def _attainable(p: PlatformEntry, ai: Fraction) -> Tuple[Fraction, Bound, Optional[str]]:
    peak = p.peak_gops
    if p.mem_bw_gbps is None:
        return peak, Bound.COMPUTE_BOUND, f"{p.label} has no memory bandwidth; assuming compute bound"

    memory_limit = ai * Fraction(p.mem_bw_gbps)
    if memory_limit < peak:
        return memory_limit, Bound.MEMORY_BOUND, None
    if memory_limit > peak:
        return peak, Bound.COMPUTE_BOUND, None
    return peak, Bound.RIDGE, None


def attainable_performance(p: PlatformEntry, w: WorkloadPoint) -> Prediction:
    """min(peak, ai x bandwidth) in GOP/s, tagged with the limiting roof."""
    if w.ai <= 0:
        raise InvalidWorkloadError(f"arithmetic intensity must be positive, got {w.ai}")
    attainable, bound, warning = _attainable(p, w.ai)
    if warning:
        logger.warning(warning)
    return Prediction(
        model=w.model or w.label,
        platform_key=p.key,
        batch=w.batch,
        ai=w.ai,
        attainable_gops=attainable,
        bound=bound,
        warning=warning,
    )


def ridge_point(p: PlatformEntry) -> Optional[Fraction]:
    """Intensity where the bandwidth slope meets the compute ceiling."""
    if p.mem_bw_gbps is None:
        return None
    return p.peak_gops / Fraction(p.mem_bw_gbps)


def _resolve_datatype(dt: Union[DatatypeSpec, str], known: Dict[str, DatatypeSpec]) -> DatatypeSpec:
    if isinstance(dt, DatatypeSpec):
        return dt
    return known.get(dt.strip().lower()) or parse_datatype(dt)


def prediction_table(
    models: Sequence[ModelRequirements],
    platforms: Sequence[PlatformEntry],
    datatypes: Optional[Sequence[Union[DatatypeSpec, str]]],
    batch: int,
) -> List[Prediction]:
    """One prediction per (model, platform mode, datatype).

    With ``datatypes`` set, every platform mode is crossed with every datatype
    and missing combinations become unsupported rows. Without it, each catalog
    entry contributes its own datatype.
    """
    if not models:
        raise RooflineError("prediction table needs at least one model")
    if not platforms:
        raise RooflineError("prediction table needs at least one platform")
    if datatypes is not None and not datatypes:
        raise RooflineError("prediction table needs at least one datatype")

    groups: Dict[Tuple[str, str], List[PlatformEntry]] = {}
    for entry in platforms:
        groups.setdefault((entry.platform, entry.mode), []).append(entry)

    requested = None
    if datatypes is not None:
        known = {entry.datatype.name.lower(): entry.datatype for entry in platforms}
        requested = [_resolve_datatype(dt, known) for dt in datatypes]

    rows: List[Prediction] = []
    for req in models:
        for (platform, mode), entries in groups.items():
            if requested is None:
                for entry in entries:
                    rows.append(attainable_performance(entry, arithmetic_intensity(req, entry.datatype, batch)))
                continue
            by_type = {entry.datatype.name.lower(): entry for entry in entries}
            for dt in requested:
                workload = arithmetic_intensity(req, dt, batch)
                entry = by_type.get(dt.name.lower())
                if entry is None:
                    rows.append(Prediction(
                        model=req.name,
                        platform_key=(platform, mode, dt.name),
                        batch=batch,
                        ai=workload.ai,
                        attainable_gops=None,
                        bound=Bound.UNSUPPORTED,
                        warning=f"{' '.join(filter(None, (platform, mode)))} does not support {dt.name}",
                    ))
                else:
                    rows.append(attainable_performance(entry, workload))

    logger.debug(f"Built prediction table with {len(rows)} rows")
    return rows


def roofline_curve(p: PlatformEntry, ai_samples: Sequence[Number]) -> List[Tuple[Fraction, Fraction]]:
    """Sample the roofline at each intensity, adding the ridge point."""
    samples = [to_fraction(ai) for ai in ai_samples]
    for index, ai in enumerate(samples):
        if ai <= 0:
            raise InvalidWorkloadError(f"intensity samples must be positive, got {ai}")
        if index and ai < samples[index - 1]:
            raise InvalidWorkloadError("intensity samples must be sorted ascending")

    ridge = ridge_point(p)
    if ridge is not None and ridge not in samples:
        samples.append(ridge)
        samples.sort()

    return [(ai, _attainable(p, ai)[0]) for ai in samples]


def log_spaced_samples(low: float, high: float, count: int = 64) -> List[float]:
    """Logarithmically spaced intensities for plot data."""
    if low <= 0 or high <= low or count < 2:
        raise InvalidWorkloadError("sample range needs 0 < low < high and at least two points")
    return [float(value) for value in np.round(np.logspace(np.log10(low), np.log10(high), count), 6)]


def serialize_predictions(predictions: Sequence[Prediction], exact: bool = False) -> str:
    """Prediction table as CSV."""
    lines = [",".join(PREDICTION_COLUMNS)]
    for row in predictions:
        platform, mode, datatype = row.platform_key
        lines.append(",".join([
            quote_cell(row.model),
            quote_cell(platform),
            quote_cell(mode),
            quote_cell(datatype),
            str(row.batch),
            format_number(row.ai, exact=exact),
            format_number(row.attainable_gops, exact=exact),
            row.bound.value,
        ]))
    return "\n".join(lines) + "\n"


def serialize_curve(points: Sequence[Tuple[Fraction, Fraction]], exact: bool = False) -> str:
    """Roofline samples as CSV for external plotting."""
    lines = [",".join(CURVE_COLUMNS)]
    for ai, attainable in points:
        lines.append(f"{format_number(ai, places=4, exact=exact)},{format_number(attainable, exact=exact)}")
    return "\n".join(lines) + "\n"
