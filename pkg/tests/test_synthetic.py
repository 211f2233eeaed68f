"""Tests for the synthetic module."""

from tierbench.catalog import parse_catalog, serialize_catalog
from tierbench.measurements import ingest_measurements, serialize_measurements
from tierbench.synthetic import SyntheticFactory
from tierbench.topology import LayerKind, parse_topology, serialize_topology


class TestSyntheticFactory:
    """Test cases for seeded synthetic inputs."""

    def test_same_seed_same_output(self):
        """Test equal seeds give equal models, catalogs and records."""
        first, second = SyntheticFactory(seed=7), SyntheticFactory(seed=7)
        assert first.model() == second.model()
        assert first.catalog(5) == second.catalog(5)
        assert first.records(20) == second.records(20)

    def test_different_seeds_differ(self):
        """Test different seeds give different records."""
        assert SyntheticFactory(seed=1).records(20) != SyntheticFactory(seed=2).records(20)

    def test_models_parse(self):
        """Test generated models survive serialization."""
        factory = SyntheticFactory(seed=3)
        for _ in range(50):
            model = factory.model()
            assert parse_topology(serialize_topology(model)) == model

    def test_restricted_kinds(self):
        """Test models can be limited to some layer kinds."""
        model = SyntheticFactory(seed=5).model(max_layers=20, kinds=[LayerKind.CONV, LayerKind.FC])
        assert {layer.kind for layer in model.layers} <= {LayerKind.CONV, LayerKind.FC}

    def test_catalog_keys_distinct(self):
        """Test catalog keys are unique ignoring case."""
        entries = SyntheticFactory(seed=9).catalog(50)
        keys = {tuple(part.lower() for part in entry.key) for entry in entries}
        assert len(keys) == 50
        assert parse_catalog(serialize_catalog(entries)) == entries

    def test_records_ingest_cleanly(self):
        """Test generated records are valid measurement rows."""
        records = SyntheticFactory(seed=11).records(200)
        _, report = ingest_measurements(serialize_measurements(records))
        assert report.findings == ()
        assert report.record_count == 200

    def test_complete_records(self):
        """Test complete records carry every numeric field."""
        for record in SyntheticFactory(seed=13).records(50, complete=True):
            assert record.throughput_gops is not None
            assert record.power_watts is not None
            assert record.top1_pct <= record.top5_pct

    def test_objective_records_grid(self):
        """Test objective fields come from the small grid."""
        records = SyntheticFactory(seed=17).objective_records(100, ["top5", "latency"], levels=3)
        assert {int(r.top5_pct) for r in records} <= {0, 1, 2, 3}
        assert {int(r.latency_ms) for r in records} <= {1, 2, 3}
        assert all(r.level == 3 for r in records)
