"""
Unit Tests for the domain model
Encodings, validation diagnostics and Dataset views
"""

import pytest
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))

from tmc_transfer.domain_model import (
    CSV_COLUMNS, PREDICTOR_NAMES, Dataset, FeatureVector, clock_to_interval,
    decode_interval, decode_left_turn_type, decode_road_type, encode_interval,
    encode_left_turn_type, encode_road_type, interval_to_clock, validate_instance,
)
from tmc_transfer.errors import ArgumentError, ValidationError


class TestEncodings:
    """Test categorical and temporal encoders"""

    def test_road_type_codes(self):
        """major -> 1, minor -> 2"""
        assert encode_road_type("major") == 1
        assert encode_road_type("minor") == 2

    def test_unknown_road_type(self):
        """Unknown token is named in the error"""
        with pytest.raises(ValidationError, match="arterial"):
            encode_road_type("arterial")

    def test_left_turn_codes(self):
        """permissive -> 1, protected_permissive -> 2, protected -> 3"""
        assert encode_left_turn_type("permissive") == 1
        assert encode_left_turn_type("protected_permissive") == 2
        assert encode_left_turn_type("protected") == 3

    def test_unknown_left_turn_type(self):
        """flashing_yellow is not an enumerated type"""
        with pytest.raises(ValidationError, match="flashing_yellow"):
            encode_left_turn_type("flashing_yellow")

    def test_interval_encoding(self):
        """Midnight and 11 pm edge cases"""
        assert encode_interval(0, 0) == (1, 0)
        assert encode_interval(23, 3) == (4, 23)

    def test_interval_out_of_range(self):
        """Hour 24 is rejected"""
        with pytest.raises(ValidationError):
            encode_interval(24, 0)
        with pytest.raises(ValidationError):
            encode_interval(7, 4)

    def test_round_trips(self):
        """decode(encode(x)) == x for every encoder"""
        for kind in ("major", "minor"):
            assert decode_road_type(encode_road_type(kind)) == kind
        for kind in ("permissive", "protected_permissive", "protected"):
            assert decode_left_turn_type(encode_left_turn_type(kind)) == kind
        for hour in range(24):
            for quarter in range(4):
                h_moh, h_hod = encode_interval(hour, quarter)
                assert decode_interval(h_moh, h_hod) == (hour, quarter)

    def test_peak_bins(self):
        """16 bins cover 07:00-09:00 and 16:00-18:00"""
        assert interval_to_clock(0) == (7, 0)
        assert interval_to_clock(7) == (8, 3)
        assert interval_to_clock(8) == (16, 0)
        assert interval_to_clock(15) == (17, 3)
        for b in range(16):
            assert clock_to_interval(*interval_to_clock(b)) == b
        with pytest.raises(ValidationError):
            interval_to_clock(16)


class TestValidateInstance:
    """Test raw record validation"""

    def test_well_formed_row(self, raw_record):
        """Complete row gives an instance"""
        instance = validate_instance(raw_record(), row=2)
        assert instance.intersection_id == "INT000"
        assert instance.features.g_tm == 400.0
        assert instance.features.e_poie == 850
        assert instance.v_tm == 70.25
        assert instance.is_labeled

    def test_green_time_over_interval(self, raw_record):
        """g_tm = 1200 exceeds the 900 s interval"""
        with pytest.raises(ValidationError, match="range") as info:
            validate_instance(raw_record(g_tm="1200"), row=5)
        assert info.value.row == 5
        assert info.value.field == "g_tm"

    def test_missing_field(self, raw_record):
        """Row missing e_poic"""
        record = raw_record()
        del record["e_poic"]
        with pytest.raises(ValidationError, match="missing field") as info:
            validate_instance(record, row=3)
        assert info.value.field == "e_poic"
        assert "row 3" in str(info.value)

    def test_non_numeric_token(self, raw_record):
        """Non-numeric token is reported with its field"""
        with pytest.raises(ValidationError, match="non-numeric") as info:
            validate_instance(raw_record(d_tm="abc"), row=9)
        assert info.value.field == "d_tm"

    def test_negative_label(self, raw_record):
        """Labels must be nonnegative"""
        with pytest.raises(ValidationError) as info:
            validate_instance(raw_record(v_rm="-1"))
        assert info.value.field == "v_rm"

    def test_code_ranges(self, raw_record):
        """r, l and h_moh outside their code sets"""
        for field, token in (("r", "3"), ("l", "0"), ("h_moh", "5")):
            with pytest.raises(ValidationError) as info:
                validate_instance(raw_record(**{field: token}))
            assert info.value.field == field

    def test_fractional_integer_field(self, raw_record):
        """Lane counts must be integers"""
        with pytest.raises(ValidationError) as info:
            validate_instance(raw_record(l_tl="2.5"))
        assert info.value.field == "l_tl"

    def test_clock_mismatch(self, raw_record):
        """h_hod must agree with interval_index"""
        with pytest.raises(ValidationError) as info:
            validate_instance(raw_record(h_hod="16"))
        assert info.value.field == "h_hod"

    def test_unlabeled_rows(self, raw_record):
        """Empty label cells only pass when allowed"""
        record = raw_record(v_lm="", v_tm="", v_rm="")
        with pytest.raises(ValidationError):
            validate_instance(record)
        instance = validate_instance(record, allow_unlabeled=True)
        assert not instance.is_labeled
        assert instance.label("v_tm") is None

    def test_partial_labels(self, raw_record):
        """Either all three labels or none"""
        with pytest.raises(ValidationError):
            validate_instance(raw_record(v_tm=""), allow_unlabeled=True)

    def test_total_on_garbage(self):
        """Non-mapping input is a diagnostic, not a crash"""
        with pytest.raises(ValidationError):
            validate_instance(["not", "a", "record"])


class TestFeatureVector:
    """Test predictor vector ordering"""

    def test_array_round_trip(self, raw_record):
        """to_array / from_array keep the fixed order"""
        features = validate_instance(raw_record()).features
        values = features.to_array()
        assert len(values) == len(PREDICTOR_NAMES) == 24
        assert FeatureVector.from_array(values) == features
        assert values[PREDICTOR_NAMES.index("g_tm")] == 400.0

    def test_csv_columns(self):
        """Keys, 24 predictors, 3 labels"""
        assert len(CSV_COLUMNS) == 31
        assert CSV_COLUMNS[:4] == ("intersection_id", "approach_id", "day_index", "interval_index")
        assert CSV_COLUMNS[-3:] == ("v_lm", "v_tm", "v_rm")


class TestDataset:
    """Test Dataset views"""

    def test_duplicate_keys_rejected(self, raw_record):
        """(intersection, approach, day, interval) must be unique"""
        instance = validate_instance(raw_record())
        with pytest.raises(ValidationError, match="duplicate"):
            Dataset([instance, instance])

    def test_views(self, small_network):
        """Per-intersection views and feature subsets"""
        dataset = small_network.dataset
        assert dataset.intersection_ids == ("INT000", "INT001", "INT002", "INT003")
        view = dataset.for_intersection("INT001")
        assert len(view) == 2 * 16 * 4
        assert set(view.intersection_ids) == {"INT001"}
        rest = dataset.excluding_intersection("INT001")
        assert len(rest) + len(view) == len(dataset)
        X = dataset.features(["g_tm", "d_tm"])
        assert X.shape == (len(dataset), 2)
        np.testing.assert_array_equal(X[:, 0], dataset.features()[:, PREDICTOR_NAMES.index("g_tm")])

    def test_unknown_intersection(self, small_network):
        """Missing intersection is an argument error"""
        with pytest.raises(ArgumentError):
            small_network.dataset.for_intersection("NOPE")

    def test_without_labels(self, small_network):
        """Label-stripped view hides every label"""
        stripped = small_network.dataset.for_intersection("INT000").without_labels()
        assert not stripped.is_labeled
        with pytest.raises(ArgumentError):
            stripped.labels("v_tm")
        with pytest.raises(ArgumentError):
            stripped.require_labeled()

    def test_frame(self, small_network):
        """DataFrame view has the CSV layout"""
        frame = small_network.dataset.to_frame()
        assert list(frame.columns) == list(CSV_COLUMNS)
        assert len(frame) == len(small_network.dataset)


# Test runner
if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
