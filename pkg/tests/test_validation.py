"""Unit tests for validation.py - chain and scenario schema checks."""

from validation import (
    CHAIN_SCHEMA,
    SCENARIO_SCHEMA,
    schema_errors,
    validate_document,
)


class TestSchemaErrors:
    """Tests for schema_errors."""

    def test_valid_chain(self):
        """Test a minimal chain document."""
        assert schema_errors({"modules": [{"axis": "z"}]}, CHAIN_SCHEMA) == []

    def test_root_path(self):
        """Test that root-level errors use the (root) path."""
        errors = schema_errors({}, CHAIN_SCHEMA)
        assert errors == ["(root): 'modules' is a required property"]

    def test_nested_path(self):
        """Test dotted paths into arrays."""
        doc = {"modules": [{"axis": "z"}, {"axis": "z", "offset": [0, 0]}]}
        errors = schema_errors(doc, CHAIN_SCHEMA)
        assert len(errors) == 1
        assert errors[0].startswith("modules.1.offset: ")

    def test_axis_forms(self):
        """Test named, signed and vector axes."""
        for axis in ("x", "-y", "+z", [0.0, 1.0, 0.0]):
            assert schema_errors({"modules": [{"axis": axis}]}, CHAIN_SCHEMA) == []
        assert schema_errors({"modules": [{"axis": "w"}]}, CHAIN_SCHEMA)

    def test_errors_sorted_by_path(self):
        """Test that errors come out in document order."""
        doc = {"modules": [{"axis": "z", "limits": {"qd": 0}}, {}], "extra": 1}
        paths = [e.split(":")[0] for e in schema_errors(doc, CHAIN_SCHEMA)]
        assert paths == ["(root)", "modules.0.limits.qd", "modules.1"]

    def test_scenario_controller_enum(self):
        """Test the accepted controller names."""
        doc = {"chain": "A", "waypoints": [[0, 0, 0]], "controller": "weighted_mpc"}
        assert schema_errors(doc, SCENARIO_SCHEMA) == []
        doc["controller"] = "pid"
        assert schema_errors(doc, SCENARIO_SCHEMA)[0].startswith("controller: ")

    def test_scenario_inline_chain(self):
        """Test that a scenario may embed a chain document."""
        doc = {"chain": {"modules": [{"axis": "z"}]}, "waypoints": [[0, 0, 1]]}
        assert schema_errors(doc, SCENARIO_SCHEMA) == []


class TestValidateDocument:
    """Tests for validate_document."""

    def test_valid(self):
        """Test a valid document."""
        is_valid, error = validate_document({"modules": [{"axis": "z"}]}, CHAIN_SCHEMA)
        assert is_valid is True
        assert error is None

    def test_joined_errors(self):
        """Test that every error is joined into one message."""
        doc = {"waypoints": [], "dt": -1}
        is_valid, error = validate_document(doc, SCENARIO_SCHEMA)
        assert is_valid is False
        assert error.count("; ") == 2
        assert "'chain' is a required property" in error

    def test_unexpected_failure(self, caplog):
        """Test that a broken schema is reported rather than raised."""
        is_valid, error = validate_document({}, {"type": 12})
        assert is_valid is False
        assert error.startswith("Validation failed:")
        assert "Unexpected error during validation" in caplog.text
