"""
Tests for dataset_repo.py: CSV + sidecar persistence and line-numbered parse errors.
"""
import numpy as np
import pytest


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_round_trip_is_exact(tmp_path, rng):
    """Test that 17 significant digits reproduce every float bit for bit"""
    from bellml.repositories.dataset_repo import load_dataset, save_dataset, sidecar_path
    from bellml.services.dataset import Dataset

    features = rng.uniform(-1, 1, size=(20, 4))
    targets = rng.uniform(0, 0.25, size=20)
    metadata = {"scenario": "bipartite", "m": 2, "seed": 9, "feature_schema": ["A0B0", "A0B1", "A1B0", "A1B1"], "probe_rows": [19]}
    path = save_dataset(Dataset(features, targets, metadata), tmp_path / "data" / "m2.csv")

    loaded = load_dataset(path)

    assert sidecar_path(path).name == "m2.meta.yaml"
    assert np.array_equal(loaded.features, features)
    assert np.array_equal(loaded.targets, targets)
    assert loaded.metadata["feature_schema"] == metadata["feature_schema"]
    assert loaded.metadata["seed"] == 9
    assert loaded.probe_rows == [19]
    assert "n_records" not in loaded.metadata


def test_header(tmp_path):
    from bellml.repositories.dataset_repo import save_dataset
    from bellml.services.dataset import Dataset

    path = save_dataset(Dataset(np.zeros((1, 3)), np.zeros(1)), tmp_path / "x.csv")

    assert path.read_text().splitlines()[0] == "f0,f1,f2,target"


def test_empty_dataset_is_header_only(tmp_path):
    from bellml.repositories.dataset_repo import load_dataset, save_dataset
    from bellml.services.dataset import Dataset

    empty = Dataset(np.zeros((0, 4)), np.zeros(0), {"feature_schema": ["I", "J", "A0", "A1"]})
    path = save_dataset(empty, tmp_path / "empty.csv")

    assert path.read_text().strip() == "f0,f1,f2,f3,target"
    loaded = load_dataset(path)
    assert len(loaded) == 0
    assert loaded.width == 4


def test_wrong_column_count_reports_line(tmp_path):
    from bellml.errors import ParseError
    from bellml.repositories.dataset_repo import load_dataset

    path = _write(tmp_path / "bad.csv", "f0,f1,target\n0.1,0.2,0.3\n0.4,0.5,0.6,0.7\n")

    with pytest.raises(ParseError) as excinfo:
        load_dataset(path)

    assert excinfo.value.line == 3
    assert "line 3" in str(excinfo.value)


def test_short_row_reports_line(tmp_path):
    from bellml.errors import ParseError
    from bellml.repositories.dataset_repo import load_dataset

    path = _write(tmp_path / "short.csv", "f0,f1,target\n0.1,0.2,0.3\n0.1,0.2,0.3\n0.4,0.5\n")

    with pytest.raises(ParseError) as excinfo:
        load_dataset(path)

    assert excinfo.value.line == 4


def test_non_numeric_value_reports_line(tmp_path):
    from bellml.errors import ParseError
    from bellml.repositories.dataset_repo import load_dataset

    path = _write(tmp_path / "text.csv", "f0,f1,target\n0.1,0.2,0.3\n0.1,abc,0.3\n")

    with pytest.raises(ParseError) as excinfo:
        load_dataset(path)

    assert excinfo.value.line == 3


def test_bad_header(tmp_path):
    from bellml.errors import ParseError
    from bellml.repositories.dataset_repo import load_dataset

    path = _write(tmp_path / "header.csv", "a,b,label\n0.1,0.2,0.3\n")

    with pytest.raises(ParseError) as excinfo:
        load_dataset(path)

    assert excinfo.value.line == 1


def test_empty_file(tmp_path):
    from bellml.errors import ParseError
    from bellml.repositories.dataset_repo import load_dataset

    with pytest.raises(ParseError):
        load_dataset(_write(tmp_path / "nothing.csv", ""))


def test_missing_file(tmp_path):
    from bellml.errors import DataError
    from bellml.repositories.dataset_repo import load_dataset

    with pytest.raises(DataError, match="not found"):
        load_dataset(tmp_path / "absent.csv")


def test_missing_sidecar_uses_generic_schema(tmp_path, caplog):
    from bellml.repositories.dataset_repo import load_dataset

    path = _write(tmp_path / "bare.csv", "f0,f1,target\n0.1,0.2,0.3\n")

    loaded = load_dataset(path)

    assert loaded.metadata["feature_schema"] == ["f0", "f1"]
    assert "no sidecar" in caplog.text


def test_sidecar_record_count_mismatch(tmp_path):
    from bellml.errors import DataError
    from bellml.repositories.dataset_repo import load_dataset

    path = _write(tmp_path / "d.csv", "f0,f1,target\n0.1,0.2,0.3\n")
    _write(tmp_path / "d.meta.yaml", "n_records: 5\nfeature_schema: [a, b]\n")

    with pytest.raises(DataError, match="5 records"):
        load_dataset(path)


def test_sidecar_schema_mismatch(tmp_path):
    from bellml.errors import DataError
    from bellml.repositories.dataset_repo import load_dataset

    path = _write(tmp_path / "d.csv", "f0,f1,target\n0.1,0.2,0.3\n")
    _write(tmp_path / "d.meta.yaml", "feature_schema: [a, b, c]\n")

    with pytest.raises(DataError, match="schema"):
        load_dataset(path)
