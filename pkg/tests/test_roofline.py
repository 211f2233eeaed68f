"""Tests for the roofline module."""

from decimal import Decimal
from fractions import Fraction

import pytest

from tierbench.catalog import (
    CatalogError,
    PlatformEntry,
    find_platforms,
    load_catalog,
    lookup,
    parse_catalog,
    parse_datatype,
    serialize_catalog,
)
from tierbench.roofline import (
    Bound,
    InvalidWorkloadError,
    RooflineError,
    WorkloadPoint,
    arithmetic_intensity,
    attainable_performance,
    log_spaced_samples,
    prediction_table,
    ridge_point,
    roofline_curve,
    serialize_curve,
    serialize_predictions,
)
from tierbench.synthetic import SyntheticFactory
from tierbench.topology import ModelRequirements, load_published_totals


def _workload(ai, batch=1, datatype="FP16"):
    return WorkloadPoint(label="w", ai=Fraction(ai), ops=1, batch=batch, datatype=parse_datatype(datatype), model="m")


class TestArithmeticIntensity:
    """Test cases for arithmetic intensity."""

    def setup_method(self):
        """Set up test fixtures."""
        totals = load_published_totals()
        self.resnet = totals["resnet50"]
        self.googlenet = totals["googlenetv1"]

    @pytest.mark.parametrize("model,datatype,batch,expected", [
        ("resnet", "INT8", 1, 303),
        ("resnet", "INT8", 8, 2422),
        ("resnet", "FP16", 1, 151),
        ("resnet", "FP16", 8, 1211),
        ("googlenet", "INT8", 1, 523),
        ("googlenet", "INT8", 8, 4188),
        ("googlenet", "FP16", 1, 262),
        ("googlenet", "FP16", 8, 2094),
    ])
    def test_published_values(self, model, datatype, batch, expected):
        """Test intensities from published totals match the reference values."""
        req = getattr(self, model)
        point = arithmetic_intensity(req, parse_datatype(datatype), batch)
        assert abs(float(point.ai) - expected) <= 1

    def test_exact_and_linear_in_batch(self):
        """Test intensity is an exact rational, linear in batch."""
        dt = parse_datatype("FP16")
        one = arithmetic_intensity(self.resnet, dt, 1)
        assert one.ai == Fraction(7_720_000_000, 2 * 25_500_000)
        for batch in (2, 16, 128):
            assert arithmetic_intensity(self.resnet, dt, batch).ai == batch * one.ai

    @pytest.mark.parametrize("batch", [0, -1])
    def test_invalid_batch(self, batch):
        """Test batch sizes below one are rejected."""
        with pytest.raises(InvalidWorkloadError, match="batch"):
            arithmetic_intensity(self.resnet, parse_datatype("INT8"), batch)

    def test_no_weights(self):
        """Test a model without weights has no defined intensity."""
        with pytest.raises(InvalidWorkloadError, match="no weights"):
            arithmetic_intensity(ModelRequirements.from_totals("x", 10, 0), parse_datatype("INT8"), 1)


class TestAttainablePerformance:
    """Test cases for attainable performance."""

    def setup_method(self):
        """Set up test fixtures."""
        self.catalog = load_catalog()
        self.tx2 = lookup(self.catalog, "Nvidia Jetson TX2", "MaxN", "FP16")
        self.zcu = lookup(self.catalog, "Xilinx ZCU104 DPU", "666MHz", "INT8")

    def test_tx2_compute_bound(self):
        """Test TX2 MaxN FP16 at intensity 151 hits the compute roof."""
        prediction = attainable_performance(self.tx2, _workload(151))
        assert prediction.attainable_gops == 1333
        assert prediction.bound is Bound.COMPUTE_BOUND
        assert prediction.warning is None

    def test_zcu104_compute_bound(self):
        """Test ZCU104 at intensity 303 hits the compute roof."""
        prediction = attainable_performance(self.zcu, _workload(303, datatype="INT8"))
        assert prediction.attainable_gops == 4604
        assert prediction.attainable_tops == Fraction("4.604")

    def test_memory_bound(self):
        """Test low intensity is limited by bandwidth."""
        prediction = attainable_performance(self.tx2, _workload(1))
        assert prediction.attainable_gops == Fraction("59.7")
        assert prediction.bound is Bound.MEMORY_BOUND

    def test_ridge(self):
        """Test the exact ridge intensity is tagged as such."""
        ridge = ridge_point(self.tx2)
        assert float(ridge) == pytest.approx(22.33, abs=0.01)
        prediction = attainable_performance(self.tx2, _workload(ridge))
        assert prediction.bound is Bound.RIDGE
        assert prediction.attainable_gops == 1333
        assert float(ridge_point(self.zcu)) == pytest.approx(239.8, abs=0.05)

    def test_missing_bandwidth_degrades(self):
        """Test platforms without bandwidth fall back to compute bound with a warning."""
        tpu = lookup(self.catalog, "Google TPUv3", "", "FP16")
        prediction = attainable_performance(tpu, _workload(1))
        assert prediction.attainable_gops == 90000
        assert prediction.bound is Bound.COMPUTE_BOUND
        assert "no memory bandwidth" in prediction.warning
        assert ridge_point(tpu) is None

    def test_nonpositive_intensity(self):
        """Test non-positive intensities are rejected."""
        with pytest.raises(InvalidWorkloadError):
            attainable_performance(self.tx2, _workload(0))

    def test_min_of_roofs_property(self):
        """Test attainable equals min(peak, ai x bandwidth) on random catalogs."""
        factory = SyntheticFactory(seed=31)
        for _ in range(1000):
            entry = factory.catalog(size=1)[0]
            ai = Fraction(factory.rng.randint(1, 10**6), factory.rng.randint(1, 1000))
            prediction = attainable_performance(entry, _workload(ai))
            if entry.mem_bw_gbps is None:
                assert prediction.attainable_gops == entry.peak_gops
            else:
                assert prediction.attainable_gops == min(entry.peak_gops, ai * Fraction(entry.mem_bw_gbps))
            assert prediction.attainable_gops <= entry.peak_gops


class TestPredictionTable:
    """Test cases for prediction tables."""

    def setup_method(self):
        """Set up test fixtures."""
        self.catalog = load_catalog()
        self.resnet = load_published_totals()["resnet50"]

    def test_reference_predictions(self):
        """Test embedded platform peaks are reached exactly at batch 1."""
        platforms = find_platforms(self.catalog, ["TX2", "ZCU104"], modes=["MaxN", "MaxQ", "666MHz", "750MHz"])
        predictions = prediction_table([self.resnet], platforms, None, 1)
        tops = {p.platform_key: p.attainable_tops for p in predictions}
        assert tops[("Nvidia Jetson TX2", "MaxN", "FP32")] == Fraction("0.667")
        assert tops[("Nvidia Jetson TX2", "MaxN", "FP16")] == Fraction("1.333")
        assert tops[("Nvidia Jetson TX2", "MaxQ", "FP32")] == Fraction("0.437")
        assert tops[("Nvidia Jetson TX2", "MaxQ", "FP16")] == Fraction("0.874")
        assert tops[("Xilinx ZCU104 DPU", "666MHz", "INT8")] == Fraction("4.604")
        assert tops[("Xilinx ZCU104 DPU", "750MHz", "INT8")] == Fraction("5.357")
        assert all(p.bound is Bound.COMPUTE_BOUND for p in predictions)

    def test_native_datatypes_one_row_per_entry(self):
        """Test each catalog entry contributes its own datatype when none are requested."""
        platforms = find_platforms(self.catalog, ["TX2"])
        predictions = prediction_table([self.resnet], platforms, None, 1)
        assert len(predictions) == len(platforms)
        assert all(p.supported for p in predictions)

    def test_unsupported_datatype(self):
        """Test requested datatypes a platform lacks become unsupported rows."""
        platforms = find_platforms(self.catalog, ["TX2"], modes=["MaxN"])
        predictions = prediction_table([self.resnet], platforms, ["FP16", "INT8"], 1)
        assert [(p.platform_key[2], p.bound) for p in predictions] == [
            ("FP16", Bound.COMPUTE_BOUND),
            ("INT8", Bound.UNSUPPORTED),
        ]
        unsupported = predictions[1]
        assert unsupported.attainable_gops is None
        assert "does not support INT8" in unsupported.warning

    def test_full_cross_product(self):
        """Test rows cover every model, platform mode and datatype."""
        other = ModelRequirements.from_totals("Other", 10**9, 10**6)
        platforms = find_platforms(self.catalog, ["TX2"])
        predictions = prediction_table([self.resnet, other], platforms, ["FP32", "FP16", "INT8"], 4)
        assert len(predictions) == 2 * 3 * 3
        assert {p.batch for p in predictions} == {4}

    def test_empty_inputs(self):
        """Test empty model, platform or datatype lists raise."""
        platforms = find_platforms(self.catalog, ["TX2"])
        with pytest.raises(RooflineError):
            prediction_table([], platforms, None, 1)
        with pytest.raises(RooflineError):
            prediction_table([self.resnet], [], None, 1)
        with pytest.raises(RooflineError):
            prediction_table([self.resnet], platforms, [], 1)

    def test_serialize_predictions(self):
        """Test the prediction CSV layout."""
        platforms = find_platforms(self.catalog, ["TX2"], modes=["MaxN"], datatypes=["FP16"])
        text = serialize_predictions(prediction_table([self.resnet], platforms, None, 1))
        lines = text.splitlines()
        assert lines[0] == "model,platform,mode,datatype,batch,ai_op_per_byte,attainable_gops,bound"
        assert lines[1] == "ResNet50,Nvidia Jetson TX2,MaxN,FP16,1,151.37,1333.00,compute_bound"

    def test_serialize_predictions_exact(self):
        """Test exact output keeps integers whole."""
        platforms = find_platforms(self.catalog, ["TX2"], modes=["MaxN"], datatypes=["FP16"])
        text = serialize_predictions(prediction_table([self.resnet], platforms, None, 1), exact=True)
        assert text.splitlines()[1].endswith(",1333,compute_bound")

    def test_custom_datatype_by_name(self):
        """Test a requested custom datatype resolves to the catalog entry of that name."""
        platforms = find_platforms(self.catalog, ["VU9P"])
        predictions = prediction_table([self.resnet], platforms, ["2b/8b"], 1)
        assert len(predictions) == 1
        assert predictions[0].platform_key == ("Xilinx VU9P", "", "2b/8b")
        assert predictions[0].supported
        assert predictions[0].attainable_tops == Fraction("93")

    def test_custom_datatype_missing_on_platform(self):
        """Test a custom datatype known to one platform is unsupported on another."""
        platforms = find_platforms(self.catalog, ["VU9P", "TX2"], modes=["", "MaxN"])
        predictions = prediction_table([self.resnet], platforms, ["2b/4b"], 1)
        bounds = {p.platform_key[0]: p.bound for p in predictions}
        assert bounds["Xilinx VU9P"] is not Bound.UNSUPPORTED
        assert bounds["Nvidia Jetson TX2"] is Bound.UNSUPPORTED

    def test_unknown_custom_datatype_raises(self):
        """Test a custom name no platform carries still needs explicit bits."""
        platforms = find_platforms(self.catalog, ["TX2"])
        with pytest.raises(CatalogError, match="explicit bits"):
            prediction_table([self.resnet], platforms, ["3b/3b"], 1)

    def test_same_after_catalog_reload(self):
        """Test predictions are unchanged after the catalog is written and read back."""
        platforms = find_platforms(self.catalog, ["TX2", "ZCU104", "VU9P"])
        reloaded = find_platforms(parse_catalog(serialize_catalog(self.catalog)), ["TX2", "ZCU104", "VU9P"])
        for datatypes in (None, ["FP16", "INT8", "2b/2b"]):
            first = prediction_table([self.resnet], platforms, datatypes, 8)
            assert prediction_table([self.resnet], reloaded, datatypes, 8) == first


class TestRooflineCurve:
    """Test cases for roofline sampling."""

    def setup_method(self):
        """Set up test fixtures."""
        self.tx2 = PlatformEntry(
            platform="TX2", mode="MaxN", datatype=parse_datatype("FP16"),
            peak_tops=Decimal("1.333"), mem_bw_gbps=Decimal("59.7"),
        )

    def test_ridge_inserted(self):
        """Test the ridge point is added when not sampled."""
        points = roofline_curve(self.tx2, [1, 10, 100])
        assert len(points) == 4
        assert points[2] == (ridge_point(self.tx2), Fraction(1333))
        assert points[0] == (Fraction(1), Fraction("59.7"))
        assert points[-1][1] == 1333

    def test_ridge_not_duplicated(self):
        """Test a sampled ridge is not added twice."""
        ridge = ridge_point(self.tx2)
        assert len(roofline_curve(self.tx2, [1, ridge, 100])) == 3

    def test_samples_validated(self):
        """Test samples must be positive and ascending."""
        with pytest.raises(InvalidWorkloadError, match="positive"):
            roofline_curve(self.tx2, [0, 1])
        with pytest.raises(InvalidWorkloadError, match="ascending"):
            roofline_curve(self.tx2, [10, 1])

    def test_curve_monotone(self):
        """Test attainable performance never falls as intensity grows."""
        points = roofline_curve(self.tx2, log_spaced_samples(0.01, 10000, 64))
        values = [value for _, value in points]
        assert values == sorted(values)
        assert max(values) == 1333

    def test_log_spaced_samples(self):
        """Test log spacing covers both ends."""
        samples = log_spaced_samples(0.1, 1000, 5)
        assert samples == pytest.approx([0.1, 1, 10, 100, 1000])
        with pytest.raises(InvalidWorkloadError):
            log_spaced_samples(10, 1, 5)

    def test_serialize_curve(self):
        """Test the curve CSV layout."""
        text = serialize_curve(roofline_curve(self.tx2, [1]))
        assert text.splitlines() == ["ai,attainable_gops", "1.0000,59.70", "22.3283,1333.00"]

    def test_curve_concave(self):
        """Test slopes between consecutive curve points never increase."""
        points = roofline_curve(self.tx2, log_spaced_samples(0.01, 10000, 64))
        slopes = [(v2 - v1) / (a2 - a1) for (a1, v1), (a2, v2) in zip(points, points[1:])]
        assert all(later <= earlier for earlier, later in zip(slopes, slopes[1:]))
        assert slopes[0] == Fraction("59.7")
        assert slopes[-1] == 0

    def test_bound_changes_once_across_ridge(self):
        """Test the limiting roof switches from memory to compute exactly once."""
        ridge = ridge_point(self.tx2)
        bounds = [
            attainable_performance(self.tx2, _workload(ai)).bound
            for ai in log_spaced_samples(0.01, 10000, 97)
        ]
        switches = sum(1 for a, b in zip(bounds, bounds[1:]) if a is not b)
        assert switches == 1
        assert bounds[0] is Bound.MEMORY_BOUND
        assert bounds[-1] is Bound.COMPUTE_BOUND
        assert attainable_performance(self.tx2, _workload(ridge)).bound is Bound.RIDGE
        assert attainable_performance(self.tx2, _workload(ridge * Fraction(999, 1000))).bound is Bound.MEMORY_BOUND
        assert attainable_performance(self.tx2, _workload(ridge * Fraction(1001, 1000))).bound is Bound.COMPUTE_BOUND
