"""
Tests for dataset.py: generation, feature expansion, splitting and probe rows.
"""
import numpy as np
import pytest


@pytest.fixture
def small_bipartite():
    from bellml.services.dataset import gen_regression

    return gen_regression("bipartite", n=12, seed=7, m=2)


def test_bipartite_targets_come_from_the_oracle(small_bipartite):
    from bellml.services.lp_engine import nl_distance
    from bellml.services.scenario import CorrelatorVector

    d = small_bipartite

    assert len(d) == 12
    assert d.width == 4
    for record in d.records():
        assert record.target == pytest.approx(nl_distance(CorrelatorVector.of(record.features)).nl, abs=1e-12)
        assert 0.0 <= record.target <= 1.0


def test_generation_metadata(small_bipartite):
    from bellml.services.dataset import GENERATOR_VERSION

    meta = small_bipartite.metadata

    assert meta["scenario"] == "bipartite"
    assert meta["seed"] == 7
    assert meta["generator_version"] == GENERATOR_VERSION
    assert meta["feature_schema"] == ["A0B0", "A0B1", "A1B0", "A1B1"]
    assert meta["task"] == "regression"
    assert meta["target_range"] == [0.0, 1.0]
    assert meta["poly_degree"] is None
    assert meta["throughput"]["oracle_seconds_median"] >= 0.0


def test_generation_is_reproducible(small_bipartite):
    from bellml.services.dataset import gen_regression

    again = gen_regression("bipartite", n=12, seed=7, m=2)
    other = gen_regression("bipartite", n=12, seed=8, m=2)

    assert np.array_equal(again.features, small_bipartite.features)
    assert np.array_equal(again.targets, small_bipartite.targets)
    assert not np.array_equal(other.features, small_bipartite.features)


def test_prefix_does_not_depend_on_n(small_bipartite):
    """Test that record i only uses stream i of the seed"""
    from bellml.services.dataset import gen_regression

    shorter = gen_regression("bipartite", n=5, seed=7, m=2)

    assert np.array_equal(shorter.features, small_bipartite.features[:5])


def test_unknown_regression_scenario():
    from bellml.errors import UsageError
    from bellml.services.dataset import gen_regression

    with pytest.raises(UsageError):
        gen_regression("classification", n=3, seed=0)


def test_empty_generation():
    from bellml.services.dataset import gen_regression

    d = gen_regression("bilocal10", n=0, seed=0)

    assert len(d) == 0
    assert d.width == 10


@pytest.mark.slow
def test_bilocal_generation_records_acceptance():
    from bellml.services.dataset import gen_regression

    d = gen_regression("bilocal4", n=2, seed=3, nu_grid=50)

    assert d.width == 4
    assert np.all((d.targets >= 0.0) & (d.targets <= 0.5 + 1e-9))
    assert d.metadata["acceptance"]["accepted"] == 2
    assert d.metadata["acceptance"]["attempts"] >= 2


@pytest.mark.slow
def test_parallel_generation_matches_serial():
    from bellml.services.dataset import gen_regression

    serial = gen_regression("bipartite", n=8, seed=2, m=3)
    parallel = gen_regression("bipartite", n=8, seed=2, m=3, workers=2)

    assert np.array_equal(serial.features, parallel.features)
    assert np.array_equal(serial.targets, parallel.targets)


def test_classification_is_balanced_and_labeled():
    from bellml.services.analytic_classifier import classify_array
    from bellml.services.dataset import gen_classification

    d = gen_classification(n=300, seed=4, batch=2000)

    assert len(d) == 300
    assert d.task == "classification"
    assert np.bincount(d.labels, minlength=3).tolist() == [100, 100, 100]
    assert np.array_equal(classify_array(d.features), d.labels)
    fractions = d.metadata["volume_fractions"]
    assert sum(fractions.values()) == pytest.approx(1.0)
    assert fractions["local"] > fractions["post_quantum"]


def test_classification_needs_multiple_of_three():
    from bellml.errors import UsageError
    from bellml.services.dataset import gen_classification

    with pytest.raises(UsageError):
        gen_classification(n=31, seed=0)


def test_expand_features_two_columns():
    from bellml.services.dataset import expand_features, expanded_names

    expanded = expand_features(np.array([[2.0, 3.0]]))

    assert expanded.tolist() == [[2.0, 3.0, 4.0, 6.0, 9.0]]
    assert expanded_names(["a", "b"]) == ["a", "b", "a^2", "a b", "b^2"]


@pytest.mark.parametrize("k", [1, 4, 9, 10, 16])
def test_expanded_width(k):
    from bellml.services.dataset import expand_features

    expanded = expand_features(np.zeros((2, k)))

    assert expanded.shape == (2, k + k * (k + 1) // 2)
    assert np.all(expanded == 0.0)


def test_poly_features(small_bipartite):
    from bellml.errors import UsageError
    from bellml.services.dataset import poly_features

    expanded = poly_features(small_bipartite)

    assert expanded.width == 14
    assert expanded.metadata["poly_degree"] == 2
    assert expanded.metadata["raw_feature_schema"] == small_bipartite.metadata["feature_schema"]
    assert np.array_equal(expanded.features[:, :4], small_bipartite.features)
    with pytest.raises(UsageError):
        poly_features(expanded)
    with pytest.raises(UsageError):
        poly_features(small_bipartite, degree=3)


def _numbered(n):
    from bellml.services.dataset import Dataset

    features = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    return Dataset(features, np.full(n, 0.1), {"feature_schema": ["x", "y"]})


def test_split_sizes_and_union():
    from bellml.services.dataset import SplitSpec, split

    d = _numbered(100)

    train, test = split(d, SplitSpec(0.75, seed=5))

    assert (len(train), len(test)) == (75, 25)
    together = np.sort(np.concatenate([train.features[:, 0], test.features[:, 0]]))
    assert np.array_equal(together, np.arange(100, dtype=float))


def test_split_is_deterministic():
    from bellml.services.dataset import SplitSpec, split

    d = _numbered(40)

    first, _ = split(d, SplitSpec(0.5, seed=1))
    second, _ = split(d, SplitSpec(0.5, seed=1))
    third, _ = split(d, SplitSpec(0.5, seed=2))

    assert np.array_equal(first.features, second.features)
    assert not np.array_equal(first.features, third.features)


def test_split_needs_four_records():
    from bellml.errors import UsageError
    from bellml.services.dataset import SplitSpec, split

    with pytest.raises(UsageError):
        split(_numbered(3), SplitSpec())
    with pytest.raises(UsageError):
        SplitSpec(train_fraction=1.0)


def test_dataset_validation():
    from bellml.errors import DataError
    from bellml.services.dataset import Dataset

    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.zeros(3), {"feature_schema": ["a", "b", "c"]})
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), np.array([0.1, -0.1]))
    # labels are not regression targets
    Dataset(np.zeros((1, 4)), np.array([2.0]), {"task": "classification"})


def test_chsh_probes_are_excluded_from_splits(small_bipartite):
    from bellml.services.dataset import SplitSpec, add_probes, probes, split

    d = add_probes(small_bipartite, [np.pi / 4])

    assert len(d) == 13
    assert d.probe_rows == [12]
    assert d.targets[12] == pytest.approx((np.sqrt(2) - 1) / 4, abs=1e-4)
    probe_set = probes(d)
    assert len(probe_set) == 1
    assert probe_set.probe_rows == [0]
    train, test = split(d, SplitSpec(0.75, seed=0))
    assert len(train) + len(test) == 12
    assert d.metadata["probes"] == [{"parameter": pytest.approx(np.pi / 4), "expected": None}]


def test_probes_need_a_known_family():
    from bellml.errors import UsageError
    from bellml.services.dataset import add_probes, gen_regression

    with pytest.raises(UsageError):
        add_probes(gen_regression("bipartite", n=1, seed=0, m=3), [0.5])


@pytest.mark.slow
def test_werner_probe_targets():
    from bellml.services.dataset import add_probes, gen_regression

    d = add_probes(gen_regression("bilocal10", n=0, seed=0), [1.0, 0.5], nu_grid=300)

    assert d.targets[0] == pytest.approx(0.5, abs=2e-3)
    assert d.targets[1] == pytest.approx(0.0, abs=2e-3)
    assert [p["expected"] for p in d.metadata["probes"]] == [pytest.approx(0.5), 0.0]


def test_quantum_bipartite_set():
    from bellml.services.dataset import gen_quantum_bipartite

    d = gen_quantum_bipartite([np.pi / 4, np.pi / 8])

    assert len(d) == 2
    assert d.metadata["source"] == "quantum-chsh"
    assert d.targets[0] > d.targets[1] > 0.0


def test_quantum_bipartite_set_for_three_settings():
    from bellml.services.dataset import gen_quantum_bipartite

    d = gen_quantum_bipartite([np.pi / 4, 0.02], m=3)

    assert d.features.shape == (2, 9)
    assert d.metadata["source"] == "quantum-chained"
    assert d.metadata["m"] == 3
    assert d.targets[0] > 1e-3
    assert d.targets[1] < d.targets[0]


def test_random_quantum_settings_are_seeded():
    from bellml.services.dataset import gen_quantum_bipartite

    a = gen_quantum_bipartite([0.3, 0.7], m=5, settings="random", seed=4)
    b = gen_quantum_bipartite([0.3, 0.7], m=5, settings="random", seed=4)

    assert a.features.shape == (2, 25)
    assert np.array_equal(a.features, b.features)
    assert np.all(a.targets >= 0.0)


def test_chsh_settings_need_two_measurements():
    from bellml.errors import UsageError
    from bellml.services.dataset import gen_quantum_bipartite

    with pytest.raises(UsageError):
        gen_quantum_bipartite([0.3], m=3, settings="chsh")
