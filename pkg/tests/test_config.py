import json

import pytest

from nestedkrig.config import KernelRecord, build_config, merge_records, read_config_file
from nestedkrig.errors import ConfigError
from nestedkrig.kernels import KernelFamily
from nestedkrig.variance_aggregators import AggregationMethod


def write_config(tmp_path, payload):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class TestBuildConfig:
    """Test config loading, merging and validation."""

    def test_defaults(self):
        """Test an empty configuration resolves to the defaults."""
        config = build_config()
        assert config.spec.family is KernelFamily.MATERN32
        assert config.spec.lengthscale == (0.2,)
        assert config.data is None
        assert config.grid.count == 101
        assert config.aggregation(AggregationMethod.NESTED) is AggregationMethod.NESTED

    def test_flags_override_file(self, tmp_path):
        path = write_config(
            tmp_path,
            {"kernel": {"family": "matern52", "lengthscale": 0.5}, "method": "bcm"},
        )
        config = build_config(path, {"kernel": {"lengthscale": 0.3}, "method": None})
        assert config.spec.family is KernelFamily.MATERN52
        assert config.spec.lengthscale == (0.3,)
        assert config.aggregation(AggregationMethod.NESTED) is AggregationMethod.BCM

    def test_family_aliases_normalize(self):
        assert build_config(overrides={"kernel": {"family": "rbf"}}).kernel.family == "squared_exponential"

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="invalid configuration"):
            build_config(overrides={"kernal": {"family": "matern32"}})

    def test_nested_unknown_key(self):
        """Test an unknown key inside a section names the section."""
        with pytest.raises(ConfigError, match="grid"):
            build_config(overrides={"grid": {"step": 0.1}})

    def test_invalid_values(self):
        with pytest.raises(ConfigError):
            build_config(overrides={"kernel": {"family": "cauchy"}})
        with pytest.raises(ConfigError):
            build_config(overrides={"kernel": {"lengthscale": [0.1, 0.2], "dim": 3}})
        with pytest.raises(ConfigError):
            build_config(overrides={"kernel": {"variance": -1.0}})
        with pytest.raises(ConfigError):
            build_config(overrides={"method": "median"})
        with pytest.raises(ConfigError):
            build_config(overrides={"partition": {"strategy": "kmeans"}})
        with pytest.raises(ConfigError):
            build_config(overrides={"grid": {"min": 1.0, "max": 0.0}})
        with pytest.raises(ConfigError):
            build_config(overrides={"experiment": {"grid_count": 1}})

    def test_data_needs_a_source(self):
        """Test a data section without path or generator is rejected."""
        with pytest.raises(ConfigError, match="data"):
            build_config(overrides={"data": {}})

    def test_synthetic_data(self):
        config = build_config(overrides={"data": {"synthetic": {"n": 30, "design": "halton"}}})
        assert config.data.synthetic.n == 30
        assert config.data.path is None


class TestConfigFile:
    """Test reading the JSON document."""

    def test_invalid_json(self, tmp_path):
        """Test the JSON error carries its line number."""
        path = tmp_path / "run.json"
        path.write_text("{\n  'kernel': 1\n}", encoding="utf-8")
        with pytest.raises(ConfigError, match="invalid JSON at line 2"):
            read_config_file(path)

    def test_top_level_must_be_object(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError, match="JSON object"):
            read_config_file(path)

    def test_missing_file(self, tmp_path):
        """Test an absent config file is a ConfigError."""
        with pytest.raises(ConfigError, match="cannot read config"):
            build_config(tmp_path / "absent.json")


def test_merge_records():
    base = {"kernel": {"family": "matern32", "dim": 1}, "method": "poe"}
    merged = merge_records(base, {"kernel": {"dim": 2, "variance": None}, "grid": {"count": 5}})
    assert merged == {
        "kernel": {"family": "matern32", "dim": 2},
        "method": "poe",
        "grid": {"count": 5},
    }
    assert base["kernel"]["dim"] == 1


def test_kernel_record_to_spec():
    spec = KernelRecord(family="matern12", variance=2.0, lengthscale=[0.1, 0.4], dim=2).to_spec()
    assert spec.family is KernelFamily.MATERN12
    assert spec.lengthscale == (0.1, 0.4)
