"""Seeded synthetic topologies, catalogs and measurement records."""

import random
from dataclasses import replace
from decimal import Decimal
from typing import Callable, List, Optional, Sequence

from faker import Faker

from .catalog import NAMED_DATATYPE_BITS, DatatypeSpec, PlatformEntry
from .measurements import MeasurementRecord, Parallelism, ParallelismKind, Scope
from .topology import LayerKind, LayerSpec, NetworkModel

MODES = ("", "MaxN", "MaxQ", "MaxP", "666MHz", "750MHz", "dense", "sparse")


class SyntheticFactory:
    """Generate valid random inputs for property checks."""

    def __init__(self, seed: int = 0, locale: str = "en_US") -> None:
        self.rng = random.Random(seed)
        self.fake = Faker(locale)
        self.fake.seed_instance(seed)

    def _dim(self, high: int = 64) -> int:
        return self.rng.randint(1, high)

    def _decimal(self, low: int, high: int, places: int = 2) -> Decimal:
        return Decimal(self.rng.randint(low, high)) / (Decimal(10) ** places)

    def _awkward(self, name: str) -> str:
        prefix = self.rng.choice(["", "#", "\"", "a,"])
        suffix = self.rng.choice(["", ",b", "\"q\"", ", c"])
        return f"{prefix}{name}{suffix}"

    def layer(self, name: str, kind: Optional[LayerKind] = None) -> LayerSpec:
        """One schema-valid layer of the given or a random kind."""
        kind = kind or self.rng.choice(list(LayerKind))
        if kind is LayerKind.CONV:
            return LayerSpec(name=name, kind=kind, out_h=self._dim(), out_w=self._dim(), in_ch=self._dim(),
                             kernel_h=self._dim(7), kernel_w=self._dim(7), stride=self._dim(2), out_ch=self._dim())
        if kind is LayerKind.POOL:
            return LayerSpec(name=name, kind=kind, out_h=self._dim(), out_w=self._dim(), in_ch=self._dim(),
                             kernel_h=self._dim(3), kernel_w=self._dim(3), stride=self._dim(2), out_ch=self._dim())
        if kind is LayerKind.FC:
            return LayerSpec(name=name, kind=kind, out_h=1, out_w=1, in_ch=self._dim(4096), out_ch=self._dim(4096))
        if kind is LayerKind.LSTM:
            hidden = self._dim(512)
            bidirectional = self.rng.random() < 0.5
            return LayerSpec(name=name, kind=kind, out_h=1, out_w=1, in_ch=self._dim(512),
                             out_ch=hidden * (2 if bidirectional else 1), seq_len=self._dim(3000),
                             hidden=hidden, bidirectional=bidirectional)
        return LayerSpec(name=name, kind=kind, out_h=self._dim(), out_w=self._dim(), out_ch=self._dim())

    def model(
        self,
        max_layers: int = 12,
        kinds: Optional[Sequence[LayerKind]] = None,
        awkward_names: bool = False,
    ) -> NetworkModel:
        """A network with uniquely named random layers.

        With ``awkward_names`` the names carry commas, quotes and leading ``#``.
        """
        count = self.rng.randint(0, max_layers)
        layers = []
        for index in range(count):
            kind = self.rng.choice(list(kinds)) if kinds else None
            name = f"{self.fake.word()}_{index}"
            if awkward_names:
                name = self._awkward(name)
            layers.append(self.layer(name, kind))
        return NetworkModel(name=self.fake.word().capitalize(), layers=tuple(layers))

    def datatype(self) -> DatatypeSpec:
        if self.rng.random() < 0.8:
            name = self.rng.choice(sorted(NAMED_DATATYPE_BITS))
            return DatatypeSpec(name=name, bits_per_element=NAMED_DATATYPE_BITS[name])
        return DatatypeSpec(name=f"custom{self.rng.randint(1, 64)}", bits_per_element=self.rng.choice([1, 2, 4, 8, 16]))

    def catalog(self, size: int = 10) -> List[PlatformEntry]:
        """Entries with distinct (platform, mode, datatype) keys."""
        entries: List[PlatformEntry] = []
        keys = set()
        while len(entries) < size:
            entry = PlatformEntry(
                platform=self.fake.company(),
                mode=self.rng.choice(MODES),
                datatype=self.datatype(),
                peak_tops=self._decimal(1, 200000, 3),
                mem_bw_gbps=self._maybe(lambda: self._decimal(1, 100000, 1)),
                tdp_watts=self._maybe(lambda: self._decimal(1, 40000, 2)),
                cost_usd=self._maybe(lambda: Decimal(self.rng.randint(0, 20000))),
                tops_per_watt=self._maybe(lambda: self._decimal(0, 5000, 3)),
            )
            folded = tuple(part.lower() for part in entry.key)
            if folded in keys:
                continue
            keys.add(folded)
            entries.append(entry)
        return entries

    def _maybe(self, make: Callable[[], Decimal]) -> Optional[Decimal]:
        return make() if self.rng.random() < 0.7 else None

    def record(self, row: int, source: str = "synthetic.csv", level: Optional[int] = None,
               complete: bool = False) -> MeasurementRecord:
        """A valid record; ``complete`` fills every optional numeric field."""
        level = level or self.rng.randint(1, 3)
        kind = self.rng.choice(list(ParallelismKind))
        optional = (lambda make: make()) if complete else self._maybe
        top5 = self._decimal(0, 10000)
        return MeasurementRecord(
            record_id=(source, row),
            level=level,
            platform_key=(self.fake.company(), self.rng.choice(MODES), self.datatype().name),
            model=self.fake.word().capitalize(),
            layer=None if level == 3 else f"{self.fake.word()}_{row}",
            parallelism=Parallelism(kind=kind, n=self.rng.randint(1, 128)),
            scope=self.rng.choice(list(Scope)),
            latency_ms=self._decimal(1, 100000, 3),
            throughput_gops=optional(lambda: self._decimal(0, 500000)),
            power_watts=optional(lambda: self._decimal(0, 30000)),
            top1_pct=top5 - min(top5, self._decimal(0, 2000)) if level == 3 or complete else None,
            top5_pct=top5 if level == 3 or complete else None,
            reported_efficiency=optional(lambda: self._decimal(0, 100)),
        )

    def records(self, count: int, source: str = "synthetic.csv", complete: bool = False) -> List[MeasurementRecord]:
        return [self.record(row, source, complete=complete) for row in range(1, count + 1)]

    def objective_records(self, count: int, fields: Sequence[str], levels: int = 20,
                          source: str = "synthetic.csv") -> List[MeasurementRecord]:
        """Level 3 records whose objective fields come from a small grid, so ties occur."""
        records = []
        for row in range(1, count + 1):
            base = self.record(row, source, level=3, complete=True)
            values = {}
            for name in fields:
                attribute = {"top1": "top1_pct", "top5": "top5_pct", "throughput": "throughput_gops",
                             "latency": "latency_ms", "power": "power_watts"}[name]
                low = 1 if attribute == "latency_ms" else 0
                values[attribute] = Decimal(self.rng.randint(low, levels))
            records.append(replace(base, **values))
        return records
