"""Tests for the pareto module."""

from dataclasses import replace
from decimal import Decimal

import pytest

from tierbench.catalog import load_catalog
from tierbench.measurements import (
    MEASUREMENTS_DIR,
    NUMERIC_FIELDS,
    efficiency_getter,
    filter_records,
    load_measurements,
)
from tierbench.pareto import (
    Direction,
    InvalidObjectiveError,
    Objective,
    ParetoError,
    brute_force_frontier,
    dominates,
    frontier_csv,
    pareto_frontier,
    scatter_csv,
    validate_objectives,
)
from tierbench.synthetic import SyntheticFactory


def _objectives(*texts):
    return [Objective.parse(text) for text in texts]


def _application_records():
    records = []
    for name in ("level3_googlenetv1.csv", "level3_resnet50.csv"):
        loaded, _ = load_measurements(MEASUREMENTS_DIR / name)
        records.extend(loaded)
    return filter_records(records, [("scope", "system")])


class TestObjective:
    """Test cases for objective parsing."""

    @pytest.mark.parametrize("text,field,direction", [
        ("top5:max", "top5", Direction.MAXIMIZE),
        ("Latency:MIN", "latency", Direction.MINIMIZE),
        (" power : minimize ", "power", Direction.MINIMIZE),
        ("efficiency:maximize", "efficiency", Direction.MAXIMIZE),
    ])
    def test_parse(self, text, field, direction):
        """Test accepted objective spellings."""
        objective = Objective.parse(text)
        assert objective.field == field
        assert objective.direction is direction

    @pytest.mark.parametrize("text,message", [
        ("top5", "field:max"),
        (":max", "field:max"),
        ("speed:max", "unknown objective field"),
        ("top5:most", "direction must be max or min"),
    ])
    def test_parse_errors(self, text, message):
        """Test malformed objectives are rejected."""
        with pytest.raises(InvalidObjectiveError, match=message):
            Objective.parse(text)

    def test_str(self):
        """Test objectives print back in field:direction form."""
        assert str(Objective.parse("throughput:maximize")) == "throughput:max"

    def test_needs_two_distinct(self):
        """Test objective sets need two distinct fields."""
        with pytest.raises(InvalidObjectiveError, match="at least two"):
            validate_objectives(_objectives("top5:max"))
        with pytest.raises(InvalidObjectiveError, match="distinct"):
            validate_objectives(_objectives("top5:max", "top5:min"))


class TestDominance:
    """Test cases for the dominance relation."""

    def setup_method(self):
        """Set up test fixtures."""
        self.factory = SyntheticFactory(seed=51)
        self.objectives = _objectives("top5:max", "latency:min")

    def test_irreflexive(self):
        """Test no record dominates itself."""
        for record in self.factory.objective_records(200, ["top5", "latency"]):
            assert not dominates(record, record, self.objectives)

    def test_strict_improvement(self):
        """Test equal in one objective and better in the other dominates."""
        base = self.factory.record(1, level=3, complete=True)
        a = replace(base, top5_pct=Decimal(90), latency_ms=Decimal(10))
        b = replace(base, record_id=("s", 2), top5_pct=Decimal(90), latency_ms=Decimal(12))
        assert dominates(a, b, self.objectives)
        assert not dominates(b, a, self.objectives)

    def test_trade_off(self):
        """Test a trade-off means neither dominates."""
        base = self.factory.record(1, level=3, complete=True)
        a = replace(base, top5_pct=Decimal(91), latency_ms=Decimal(20))
        b = replace(base, record_id=("s", 2), top5_pct=Decimal(90), latency_ms=Decimal(10))
        assert not dominates(a, b, self.objectives)
        assert not dominates(b, a, self.objectives)


class TestParetoFrontier:
    """Test cases for frontier computation."""

    def setup_method(self):
        """Set up test fixtures."""
        self.records = _application_records()
        self.objectives = _objectives("top5:max", "throughput:max")

    def test_application_frontier(self):
        """Test the application-level accuracy/throughput frontier."""
        result = pareto_frontier(self.records, self.objectives)
        assert result.frontier_ids == [("level3_resnet50.csv", 34), ("level3_resnet50.csv", 18)]
        tx2, zcu = result.frontier
        assert tx2.platform_key == ("Nvidia Jetson TX2", "MaxN", "FP16")
        assert tx2.parallelism.n == 128
        assert zcu.throughput_gops == Decimal("948.05")
        assert result.dominated_count == len(self.records) - 2
        assert result.excluded == ()

    def test_resnet_dominates_googlenet_on_zcu104(self):
        """Test ResNet50 at 8 threads dominates GoogleNetV1 at 7 threads on ZCU104."""
        by_id = {r.record_id: r for r in self.records}
        resnet = by_id[("level3_resnet50.csv", 18)]
        googlenet = by_id[("level3_googlenetv1.csv", 16)]
        assert dominates(resnet, googlenet, self.objectives)

    def test_missing_objective_excluded(self):
        """Test records lacking an objective are left out with a warning."""
        records = list(self.records)
        records[0] = replace(records[0], throughput_gops=None)
        result = pareto_frontier(records, self.objectives)
        assert [f.record_id for f in result.excluded] == [records[0].record_id]
        assert result.excluded[0].rule == "missing-objective"
        assert records[0].record_id not in result.frontier_ids

    def test_all_excluded(self):
        """Test a frontier where every record lacks a field is empty."""
        records = [replace(r, power_watts=None) for r in self.records]
        result = pareto_frontier(records, _objectives("top5:max", "power:min"))
        assert result.frontier == ()
        assert len(result.excluded) == len(records)

    def test_no_records(self):
        """Test an empty record set is an error."""
        with pytest.raises(ParetoError):
            pareto_frontier([], self.objectives)

    def test_efficiency_objective(self):
        """Test efficiency objectives use the supplied getter."""
        getter = efficiency_getter(load_catalog())
        result = pareto_frontier(self.records, _objectives("efficiency:max", "top5:max"), getter)
        expected = brute_force_frontier(self.records, result.objectives, getter)
        assert set(result.frontier_ids) == {r.record_id for r in expected}

    def test_efficiency_without_getter(self):
        """Test efficiency objectives without a catalog exclude every record."""
        result = pareto_frontier(self.records, _objectives("efficiency:max", "top5:max"))
        assert result.frontier == ()
        assert len(result.excluded) == len(self.records)

    def test_frontier_csv(self):
        """Test the frontier CSV layout."""
        text = frontier_csv(pareto_frontier(self.records, self.objectives))
        lines = text.splitlines()
        assert lines[0] == "source,row,level,model,platform,mode,datatype,parallelism,scope,top5,throughput"
        assert lines[1] == (
            "level3_resnet50.csv,34,3,ResNet50,Nvidia Jetson TX2,MaxN,FP16,b=128,system,92.12,809.47"
        )
        assert lines[2] == (
            "level3_resnet50.csv,18,3,ResNet50,Xilinx ZCU104 DPU,666MHz,INT8,t=8,system,90.85,948.05"
        )
        assert len(lines) == 3

    def test_scatter_csv(self):
        """Test every record appears in the scatter with a frontier flag."""
        result = pareto_frontier(self.records, self.objectives)
        lines = scatter_csv(self.records, result).splitlines()
        assert lines[0].endswith(",top5,throughput,frontier")
        assert len(lines) == len(self.records) + 1
        assert sum(1 for line in lines[1:] if line.endswith(",1")) == 2


class TestParetoProperties:
    """Seeded property checks against the quadratic reference."""

    @pytest.mark.parametrize("fields", [
        ("top5", "throughput"),
        ("top1", "latency", "power"),
    ])
    def test_matches_brute_force(self, fields):
        """Test the frontier equals the brute-force non-dominated set."""
        factory = SyntheticFactory(seed=53)
        for _ in range(1000):
            objectives = [
                Objective(name, factory.rng.choice(list(Direction))) for name in fields
            ]
            records = factory.objective_records(factory.rng.randint(1, 12), fields, levels=4)
            result = pareto_frontier(records, objectives)
            expected = brute_force_frontier(records, objectives)
            assert set(result.frontier_ids) == {r.record_id for r in expected}
            assert result.dominated_count == len(records) - len(expected)

    def test_frontier_mutually_non_dominated(self):
        """Test no frontier member dominates another and every other record is dominated."""
        factory = SyntheticFactory(seed=57)
        objectives = _objectives("top5:max", "latency:min")
        for _ in range(200):
            records = factory.objective_records(15, ["top5", "latency"], levels=6)
            result = pareto_frontier(records, objectives)
            members = set(result.frontier_ids)
            for a in result.frontier:
                assert not any(dominates(b, a, objectives) for b in result.frontier)
            for record in records:
                if record.record_id not in members:
                    assert any(dominates(m, record, objectives) for m in result.frontier)

    @pytest.mark.parametrize("count,levels", [(1, 4), (2, 4), (50, 6), (120, 30), (200, 8), (200, 1000)])
    def test_four_objectives_match_brute_force(self, count, levels):
        """Test larger four-objective sets against the quadratic reference."""
        factory = SyntheticFactory(seed=count + levels)
        fields = ("top1", "top5", "throughput", "power")
        for _ in range(3):
            objectives = [Objective(name, factory.rng.choice(list(Direction))) for name in fields]
            records = factory.objective_records(count, fields, levels=levels)
            result = pareto_frontier(records, objectives)
            expected = brute_force_frontier(records, objectives)
            assert set(result.frontier_ids) == {r.record_id for r in expected}
            assert result.dominated_count == count - len(expected)

    def test_direction_inversion(self):
        """Test maximizing a field selects the same records as minimizing its negation."""
        factory = SyntheticFactory(seed=61)
        fields = ("top5", "throughput", "latency")
        for _ in range(50):
            records = factory.objective_records(40, fields, levels=10)
            negated = [replace(r, throughput_gops=-r.throughput_gops) for r in records]
            result = pareto_frontier(records, _objectives("top5:max", "throughput:max", "latency:min"))
            inverted = pareto_frontier(negated, _objectives("top5:max", "throughput:min", "latency:min"))
            assert inverted.frontier_ids == result.frontier_ids

    def test_monotone_transform_invariance(self):
        """Test strictly increasing rescaling of every field leaves the frontier unchanged."""
        factory = SyntheticFactory(seed=67)
        fields = ("top1", "throughput", "latency", "power")
        objectives = _objectives("top1:max", "throughput:max", "latency:min", "power:min")
        for _ in range(50):
            records = factory.objective_records(40, fields, levels=12)
            transformed = [
                replace(r, **{
                    NUMERIC_FIELDS[name]: 3 * getattr(r, NUMERIC_FIELDS[name]) ** 3 + Decimal("0.5")
                    for name in fields
                })
                for r in records
            ]
            result = pareto_frontier(records, objectives)
            assert pareto_frontier(transformed, objectives).frontier_ids == result.frontier_ids

    def test_frontier_idempotent(self):
        """Test the frontier of a frontier is itself."""
        factory = SyntheticFactory(seed=71)
        fields = ("top1", "top5", "throughput", "power")
        objectives = _objectives("top1:max", "top5:max", "throughput:max", "power:min")
        for _ in range(50):
            result = pareto_frontier(factory.objective_records(60, fields, levels=8), objectives)
            again = pareto_frontier(list(result.frontier), objectives)
            assert again.frontier_ids == result.frontier_ids
            assert again.dominated_count == 0
