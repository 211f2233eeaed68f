"""Neural-network topology parsing and compute/memory requirement counting."""

import csv
import io
import logging
import re
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from .catalog import DatatypeSpec, datatype_bytes
from .units import quote_cell

logger = logging.getLogger(__name__)

MODELS_DIR = Path(__file__).parent / "data" / "models"
PUBLISHED_TOTALS_FILE = MODELS_DIR / "published.csv"
TOPOLOGY_SUFFIX = ".topo"

DEFAULT_SEQ_LEN = 3000

BASE_COLUMNS = (
    "name", "kind", "out_h", "out_w", "in_ch",
    "kernel_h", "kernel_w", "stride", "out_ch",
)
LSTM_COLUMNS = ("seq_len", "hidden", "bidir")
EXTENDED_COLUMNS = BASE_COLUMNS + LSTM_COLUMNS

_MODEL_NAME_PATTERN = re.compile(r"^#\s*model:\s*(?P<name>\S.*?)\s*$", re.IGNORECASE)
_TRUE_VALUES = {"1", "true", "yes", "y"}
_FALSE_VALUES = {"0", "false", "no", "n"}


class TopologyError(Exception):
    """Base exception for topology handling."""
    pass


class TopologyParseError(TopologyError):
    """Raised when a topology file does not follow the format."""

    def __init__(self, line: int, message: str) -> None:
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class UnknownModelError(TopologyError):
    """Raised when a model name resolves to no topology or published totals."""
    pass


class LayerKind(Enum):
    """Layer kinds understood by the requirement counters."""

    CONV = "conv"
    FC = "fc"
    POOL = "pool"
    BATCHNORM = "batchnorm"
    ACTIVATION = "activation"
    ELTWISE_ADD = "eltwise_add"
    LSTM = "lstm"


_DIMENSION_FIELDS = (
    "out_h", "out_w", "in_ch", "kernel_h", "kernel_w", "stride", "out_ch", "seq_len", "hidden",
)

_REQUIRED_FIELDS: Dict[LayerKind, Tuple[str, ...]] = {
    LayerKind.CONV: ("out_h", "out_w", "in_ch", "kernel_h", "kernel_w", "out_ch"),
    LayerKind.POOL: ("out_h", "out_w", "kernel_h", "kernel_w", "out_ch"),
    LayerKind.FC: ("in_ch", "out_ch"),
    LayerKind.BATCHNORM: ("out_h", "out_w", "out_ch"),
    LayerKind.ACTIVATION: ("out_h", "out_w", "out_ch"),
    LayerKind.ELTWISE_ADD: ("out_h", "out_w", "out_ch"),
    LayerKind.LSTM: ("in_ch", "hidden"),
}

_OPTIONAL_FIELDS: Dict[LayerKind, Tuple[str, ...]] = {
    LayerKind.CONV: ("stride",),
    LayerKind.POOL: ("in_ch", "stride"),
    LayerKind.FC: ("out_h", "out_w"),
    LayerKind.BATCHNORM: ("in_ch",),
    LayerKind.ACTIVATION: ("in_ch",),
    LayerKind.ELTWISE_ADD: ("in_ch",),
    LayerKind.LSTM: ("out_h", "out_w", "out_ch", "seq_len", "bidir"),
}

# Kinds whose weights and ops dominate a residual stack.
WEIGHTED_KINDS = (LayerKind.CONV, LayerKind.FC, LayerKind.LSTM)


@dataclass(frozen=True)
class LayerSpec:
    """One network layer with the dimensions its kind needs."""

    name: str
    kind: LayerKind
    out_h: Optional[int] = None
    out_w: Optional[int] = None
    in_ch: Optional[int] = None
    out_ch: Optional[int] = None
    kernel_h: Optional[int] = None
    kernel_w: Optional[int] = None
    stride: Optional[int] = None
    seq_len: Optional[int] = None
    hidden: Optional[int] = None
    bidirectional: Optional[bool] = None

    @property
    def directions(self) -> int:
        return 2 if self.bidirectional else 1


@dataclass(frozen=True)
class NetworkModel:
    """An ordered list of uniquely named layers."""

    name: str
    layers: Tuple[LayerSpec, ...] = ()

    @property
    def n(self) -> int:
        return len(self.layers)

    def layer(self, name: str) -> Optional[LayerSpec]:
        """Look up a layer by name."""
        for layer in self.layers:
            if layer.name == name:
                return layer
        return None


@dataclass(frozen=True)
class LayerRequirements:
    """Operations, weight elements and output tensor elements of one layer."""

    ops: int
    weights: int
    tensor_elems: int


@dataclass(frozen=True)
class ModelRequirements:
    """Totals of a network's per-layer requirements for a single input."""

    name: str
    o_total: int
    w_total: int
    t_total: int
    per_layer: Tuple[Tuple[str, LayerRequirements], ...] = ()

    @classmethod
    def from_totals(cls, name: str, o_total: int, w_total: int, t_total: int = 0) -> "ModelRequirements":
        """Build requirements from published totals, kept as one aggregate entry."""
        aggregate = LayerRequirements(ops=o_total, weights=w_total, tensor_elems=t_total)
        return cls(name=name, o_total=o_total, w_total=w_total, t_total=t_total,
                   per_layer=((name, aggregate),))

    @property
    def o_gop(self) -> float:
        return self.o_total / 1e9

    @property
    def w_me(self) -> float:
        return self.w_total / 1e6

    def layer_ops(self, name: str) -> Optional[int]:
        """Ops of a single named layer."""
        for layer_name, req in self.per_layer:
            if layer_name == name:
                return req.ops
        return None


@dataclass(frozen=True)
class TrainingRequirements:
    """Compute and buffer requirements of one training step on a single input."""

    ot_total: int
    wu_total_elems: int
    tg_total_elems: int
    tensor_buffer_elems: int


@dataclass(frozen=True)
class MemoryFootprint:
    """Storage of a model's weights and tensors at one datatype, in bytes."""

    datatype: str
    weight_bytes: Fraction
    tensor_bytes: Fraction
    training_weight_bytes: Fraction
    training_tensor_bytes: Fraction


@dataclass(frozen=True)
class RangeStats:
    minimum: int
    maximum: int
    mean: Fraction


@dataclass(frozen=True)
class RequirementsSummary:
    """Ranges and means of requirements across a set of models."""

    count: int
    ops: RangeStats
    weights: RangeStats
    tensors: RangeStats
    training_ops: RangeStats
    training_weights: RangeStats
    models: Tuple[str, ...] = field(default_factory=tuple)


def parse_topology(
    text: str,
    name: Optional[str] = None,
    default_seq_len: int = DEFAULT_SEQ_LEN,
) -> NetworkModel:
    """Parse topology file contents into a NetworkModel."""
    model_name: Optional[str] = None
    header: Optional[Tuple[str, ...]] = None
    layers: List[LayerSpec] = []
    seen: Dict[str, int] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            match = _MODEL_NAME_PATTERN.match(stripped)
            if match and model_name is None:
                model_name = match.group("name")
            continue

        fields = [cell.strip() for cell in next(csv.reader([stripped]))]

        if header is None:
            header = _parse_header(fields, line_no)
            continue

        if len(fields) != len(header):
            raise TopologyParseError(
                line_no, f"expected {len(header)} fields, found {len(fields)}"
            )
        layer = _parse_layer(dict(zip(header, fields)), line_no, default_seq_len)
        if layer.name in seen:
            raise TopologyParseError(
                line_no, f"duplicate layer name '{layer.name}' (first defined on line {seen[layer.name]})"
            )
        seen[layer.name] = line_no
        layers.append(layer)

    if header is None:
        raise TopologyParseError(1, "missing header line")

    resolved = model_name or name or "model"
    logger.debug(f"Parsed topology {resolved} with {len(layers)} layers")
    return NetworkModel(name=resolved, layers=tuple(layers))


def _parse_header(fields: List[str], line_no: int) -> Tuple[str, ...]:
    columns = tuple(cell.lower() for cell in fields)
    if columns not in (BASE_COLUMNS, EXTENDED_COLUMNS):
        expected = f"{','.join(BASE_COLUMNS)}[,{','.join(LSTM_COLUMNS)}]"
        raise TopologyParseError(line_no, f"unexpected header {','.join(fields)}; expected {expected}")
    return columns


def _parse_layer(row: Dict[str, str], line_no: int, default_seq_len: int) -> LayerSpec:
    layer_name = row["name"]
    if not layer_name:
        raise TopologyParseError(line_no, "layer name is empty")

    try:
        kind = LayerKind(row["kind"].lower())
    except ValueError:
        raise TopologyParseError(line_no, f"unknown layer kind '{row['kind']}' for layer '{layer_name}'")

    required = _REQUIRED_FIELDS[kind]
    allowed = set(required) | set(_OPTIONAL_FIELDS[kind])

    values: Dict[str, int] = {}
    for column in _DIMENSION_FIELDS:
        cell = row.get(column, "")
        if not cell:
            continue
        if column not in allowed:
            raise TopologyParseError(line_no, f"field '{column}' does not apply to {kind.value} layer '{layer_name}'")
        values[column] = _parse_dimension(cell, column, layer_name, line_no)

    for column in required:
        if column not in values:
            raise TopologyParseError(line_no, f"{kind.value} layer '{layer_name}' is missing required field '{column}'")

    bidir_cell = row.get("bidir", "")
    bidirectional: Optional[bool] = None
    if bidir_cell:
        if "bidir" not in allowed:
            raise TopologyParseError(line_no, f"field 'bidir' does not apply to {kind.value} layer '{layer_name}'")
        bidirectional = _parse_flag(bidir_cell, layer_name, line_no)

    if kind in (LayerKind.FC, LayerKind.LSTM):
        for column in ("out_h", "out_w"):
            if values.get(column, 1) != 1:
                raise TopologyParseError(line_no, f"{kind.value} layer '{layer_name}' must have {column} of 1")
            values[column] = 1

    if kind is LayerKind.LSTM:
        bidirectional = bool(bidirectional)
        values.setdefault("seq_len", default_seq_len)
        expected_out = values["hidden"] * (2 if bidirectional else 1)
        if values.setdefault("out_ch", expected_out) != expected_out:
            raise TopologyParseError(
                line_no, f"lstm layer '{layer_name}' out_ch must equal hidden x directions ({expected_out})"
            )

    return LayerSpec(name=layer_name, kind=kind, bidirectional=bidirectional, **values)


def _parse_dimension(cell: str, column: str, layer_name: str, line_no: int) -> int:
    try:
        value = int(cell)
    except ValueError:
        raise TopologyParseError(line_no, f"field '{column}' of layer '{layer_name}' is not an integer: '{cell}'")
    if value < 1:
        raise TopologyParseError(line_no, f"field '{column}' of layer '{layer_name}' must be positive, got {value}")
    return value


def _parse_flag(cell: str, layer_name: str, line_no: int) -> bool:
    lowered = cell.lower()
    if lowered in _TRUE_VALUES:
        return True
    if lowered in _FALSE_VALUES:
        return False
    raise TopologyParseError(line_no, f"field 'bidir' of layer '{layer_name}' is not a flag: '{cell}'")


def serialize_topology(model: NetworkModel) -> str:
    """Write a NetworkModel in the topology file format."""
    has_lstm = any(layer.kind is LayerKind.LSTM for layer in model.layers)
    columns = EXTENDED_COLUMNS if has_lstm else BASE_COLUMNS

    lines = [f"# model: {model.name}", ",".join(columns)]
    for layer in model.layers:
        cells = []
        for column in columns:
            if column == "name":
                cells.append(quote_cell(layer.name))
            elif column == "kind":
                cells.append(layer.kind.value)
            elif column == "bidir":
                cells.append("" if layer.bidirectional is None else ("1" if layer.bidirectional else "0"))
            else:
                value = getattr(layer, column)
                cells.append("" if value is None else str(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def layer_requirements(layer: LayerSpec) -> LayerRequirements:
    """Count operations, weights and output tensor elements of one layer."""
    kind = layer.kind

    if kind is LayerKind.LSTM:
        gates_in = layer.in_ch + layer.hidden
        directions = layer.directions
        ops = 2 * 4 * gates_in * layer.hidden * layer.seq_len * directions
        weights = 4 * (gates_in * layer.hidden + layer.hidden) * directions
        return LayerRequirements(ops=ops, weights=weights, tensor_elems=layer.seq_len * layer.out_ch)

    elems = layer.out_h * layer.out_w * layer.out_ch

    if kind is LayerKind.CONV:
        macs = elems * layer.kernel_h * layer.kernel_w * layer.in_ch
        weights = layer.kernel_h * layer.kernel_w * layer.in_ch * layer.out_ch + layer.out_ch
        return LayerRequirements(ops=2 * macs, weights=weights, tensor_elems=elems)
    if kind is LayerKind.FC:
        return LayerRequirements(
            ops=2 * layer.in_ch * layer.out_ch,
            weights=layer.in_ch * layer.out_ch + layer.out_ch,
            tensor_elems=layer.out_ch,
        )
    if kind is LayerKind.POOL:
        return LayerRequirements(ops=elems * layer.kernel_h * layer.kernel_w, weights=0, tensor_elems=elems)
    if kind is LayerKind.BATCHNORM:
        return LayerRequirements(ops=2 * elems, weights=2 * layer.out_ch, tensor_elems=elems)
    # activation and eltwise_add: one op per output element
    return LayerRequirements(ops=elems, weights=0, tensor_elems=elems)


def model_requirements(model: NetworkModel) -> ModelRequirements:
    """Sum per-layer requirements over the whole model."""
    per_layer = tuple((layer.name, layer_requirements(layer)) for layer in model.layers)
    return ModelRequirements(
        name=model.name,
        o_total=sum(req.ops for _, req in per_layer),
        w_total=sum(req.weights for _, req in per_layer),
        t_total=sum(req.tensor_elems for _, req in per_layer),
        per_layer=per_layer,
    )


def training_requirements(req: ModelRequirements) -> TrainingRequirements:
    """Derive training compute and buffering from inference requirements."""
    return TrainingRequirements(
        ot_total=3 * req.o_total + req.w_total,
        wu_total_elems=3 * req.w_total,
        tg_total_elems=req.t_total,
        tensor_buffer_elems=2 * req.t_total,
    )


def memory_footprint(req: ModelRequirements, datatype: DatatypeSpec) -> MemoryFootprint:
    """Weight and tensor storage of a model at the datatype's storage width."""
    width = datatype_bytes(datatype)
    training = training_requirements(req)
    return MemoryFootprint(
        datatype=datatype.name,
        weight_bytes=req.w_total * width,
        tensor_bytes=req.t_total * width,
        training_weight_bytes=training.wu_total_elems * width,
        training_tensor_bytes=training.tensor_buffer_elems * width,
    )


def requirements_summary(reqs: Iterable[ModelRequirements]) -> RequirementsSummary:
    """Min, max and mean of each requirement across models."""
    reqs = list(reqs)
    if not reqs:
        raise TopologyError("cannot summarise an empty set of models")

    trainings = [training_requirements(req) for req in reqs]

    def _range(values: List[int]) -> RangeStats:
        return RangeStats(minimum=min(values), maximum=max(values), mean=Fraction(sum(values), len(values)))

    return RequirementsSummary(
        count=len(reqs),
        ops=_range([req.o_total for req in reqs]),
        weights=_range([req.w_total for req in reqs]),
        tensors=_range([req.t_total for req in reqs]),
        training_ops=_range([t.ot_total for t in trainings]),
        training_weights=_range([t.wu_total_elems for t in trainings]),
        models=tuple(req.name for req in reqs),
    )


def load_topology(path: Union[str, Path], default_seq_len: int = DEFAULT_SEQ_LEN) -> NetworkModel:
    """Read and parse a topology file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise TopologyError(f"Cannot read topology {path}: {e}") from e
    try:
        return parse_topology(text, name=path.stem, default_seq_len=default_seq_len)
    except TopologyParseError as e:
        raise TopologyParseError(e.line, f"{path.name}: {e.message}") from e


def bundled_model_names() -> List[str]:
    return sorted(p.stem for p in MODELS_DIR.glob(f"*{TOPOLOGY_SUFFIX}"))


def find_topology(name: str, models_dir: Optional[Union[str, Path]] = None) -> Path:
    """Resolve a model name to a topology file, case-insensitively."""
    candidate = Path(name)
    if candidate.suffix == TOPOLOGY_SUFFIX and candidate.exists():
        return candidate

    search_dirs = [Path(models_dir)] if models_dir else []
    search_dirs.append(MODELS_DIR)
    wanted = candidate.stem.lower()
    for directory in search_dirs:
        for path in sorted(directory.glob(f"*{TOPOLOGY_SUFFIX}")):
            if path.stem.lower() == wanted:
                return path
    raise UnknownModelError(f"Unknown model '{name}' (bundled: {', '.join(bundled_model_names())})")


def load_model(
    name_or_path: Union[str, Path],
    models_dir: Optional[Union[str, Path]] = None,
    default_seq_len: int = DEFAULT_SEQ_LEN,
) -> NetworkModel:
    """Load a topology by file path or by bundled model name."""
    return load_topology(find_topology(str(name_or_path), models_dir), default_seq_len)


def parse_published_totals(text: str) -> Dict[str, ModelRequirements]:
    """Parse a published totals table (GOP and ME columns) into exact requirements."""
    reader = csv.DictReader(io.StringIO(_strip_comments(text)))
    expected = {"model", "o_total_gop", "w_total_me"}
    if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
        raise TopologyError(f"published totals header must contain {', '.join(sorted(expected))}")

    totals: Dict[str, ModelRequirements] = {}
    for row in reader:
        try:
            o_total = int(Decimal(row["o_total_gop"]) * 10**9)
            w_total = int(Decimal(row["w_total_me"]) * 10**6)
        except (InvalidOperation, TypeError) as e:
            raise TopologyError(f"Invalid published totals for {row.get('model')}: {e}") from e
        totals[row["model"].lower()] = ModelRequirements.from_totals(row["model"], o_total, w_total)
    return totals


def load_published_totals(path: Optional[Union[str, Path]] = None) -> Dict[str, ModelRequirements]:
    """Published Level 0 totals keyed by lower-cased model name."""
    source = Path(path) if path else PUBLISHED_TOTALS_FILE
    return parse_published_totals(source.read_text(encoding="utf-8"))


def published_requirements(name: str, path: Optional[Union[str, Path]] = None) -> ModelRequirements:
    totals = load_published_totals(path)
    try:
        return totals[Path(name).stem.lower()]
    except KeyError:
        raise UnknownModelError(f"No published totals for model '{name}'")


def with_layers(model: NetworkModel, *layers: LayerSpec) -> NetworkModel:
    """Return a copy of the model with layers appended."""
    return replace(model, layers=model.layers + tuple(layers))


def _strip_comments(text: str) -> str:
    return "\n".join(line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#"))
