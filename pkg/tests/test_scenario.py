"""
Tests for scenario.py: behaviors, strategy enumeration and the CHSH / bilocal functionals.
"""
import numpy as np
import pytest


@pytest.mark.parametrize("m", [2, 3, 4])
def test_strategy_matrix_shape_and_columns(m):
    """Test that every deterministic strategy puts exactly one 1 in each (x, y) block"""
    from bellml.services.scenario import build_strategy_matrix

    a = build_strategy_matrix(m)

    assert a.shape == (4 * m * m, 2 ** (2 * m))
    assert set(np.unique(a.entries)) <= {0.0, 1.0}
    blocks = a.entries.reshape(2, 2, m, m, -1).sum(axis=(0, 1))
    assert np.all(blocks == 1.0)
    # columns are distinct strategies
    assert len({tuple(col) for col in a.entries.T}) == a.shape[1]


@pytest.mark.parametrize("m", [1, 7])
def test_strategy_matrix_rejects_bad_m(m):
    from bellml.errors import ConfigurationError
    from bellml.services.scenario import build_strategy_matrix

    with pytest.raises(ConfigurationError):
        build_strategy_matrix(m)


def test_deterministic_columns_give_unit_correlators():
    from bellml.services.scenario import build_correlator_map, build_strategy_matrix

    a = build_strategy_matrix(3)
    cor = build_correlator_map(3)

    values = cor.matrix @ a.entries
    assert np.allclose(np.abs(values), 1.0)


def test_canonical_completion_recovers_correlators(rng):
    """Test that M_cor applied to the uniform-marginal completion returns the input"""
    from bellml.services.scenario import CorrelatorVector, behavior_from_correlators, build_correlator_map

    for m in (2, 3, 5):
        c = CorrelatorVector(m, rng.uniform(-1, 1, size=m * m))
        p = behavior_from_correlators(c)
        assert np.allclose(build_correlator_map(m).apply(p).values, c.values)


def test_behavior_rejects_signaling():
    from bellml.errors import UsageError
    from bellml.services.scenario import BipartiteBehavior

    table = np.full((2, 2, 2, 2), 0.25)
    # Alice's marginal now depends on y
    table[:, :, 0, 1] = [[0.5, 0.5], [0.0, 0.0]]
    with pytest.raises(UsageError, match="marginal"):
        BipartiteBehavior(m=2, p=table.ravel())


def test_behavior_rejects_wrong_length():
    from bellml.errors import UsageError
    from bellml.services.scenario import BipartiteBehavior

    with pytest.raises(UsageError):
        BipartiteBehavior(m=2, p=np.full(10, 0.1))


@pytest.mark.parametrize("values", [[0.1] * 5, [1.5, 0, 0, 0], [np.nan, 0, 0, 0]])
def test_correlator_vector_validation(values):
    from bellml.errors import UsageError
    from bellml.services.scenario import CorrelatorVector

    with pytest.raises(UsageError):
        CorrelatorVector.of(values)


def test_correlator_vector_is_read_only():
    from bellml.services.scenario import CorrelatorVector

    c = CorrelatorVector.of([0.1, 0.2, 0.3, 0.4])
    assert c.m == 2
    with pytest.raises(ValueError):
        c.values[0] = 1.0


def test_chsh_symmetries_of_pr_box():
    from bellml.services.scenario import CorrelatorVector, chsh_symmetries

    values = chsh_symmetries(CorrelatorVector.of([1, 1, 1, -1]))

    assert np.allclose(values, [4.0, 0.0, 0.0, 0.0])


def test_chsh_symmetries_of_tsirelson_point():
    from bellml.services.scenario import CorrelatorVector, chsh_symmetries

    s = 1 / np.sqrt(2)
    values = chsh_symmetries(CorrelatorVector.of([s, s, s, -s]))

    assert values.max() == pytest.approx(2 * np.sqrt(2))


def test_chsh_symmetries_need_m2():
    from bellml.errors import UsageError
    from bellml.services.scenario import CorrelatorVector, chsh_symmetries

    with pytest.raises(UsageError):
        chsh_symmetries(CorrelatorVector.of([0.0] * 9))


def test_joint_index_corners():
    from bellml.services.scenario import joint_index

    assert joint_index(0, 0, 0, 0, 0, 0) == 0
    assert joint_index(1, 1, 1, 1, 1, 1) == 63
    assert joint_index(0, 0, 0, 0, 0, 1) == 1


def test_deterministic_tripartite_correlators():
    """Test the correlators of a fixed strategy: a=(0,1), b=(1,1), c=(0,0)"""
    from bellml.services.scenario import deterministic_tripartite, tripartite_correlators

    t = tripartite_correlators(deterministic_tripartite((0, 1), (1, 1), (0, 0)))

    cube = t.cube()
    assert np.allclose(cube[0], -1.0)
    assert np.allclose(cube[1], 1.0)
    assert np.allclose(t.a_marg, [1.0, -1.0])


def test_tripartite_behavior_normalized():
    from bellml.services.scenario import tripartite_from_joint

    q = np.full(64, 1 / 64)
    p = tripartite_from_joint(q)

    assert np.allclose(p.p.reshape((2,) * 6).sum(axis=(0, 1, 2)), 1.0)
    assert np.allclose(p.a_marg, 0.0)


def test_tripartite_from_joint_rejects_unnormalized():
    from bellml.errors import UsageError
    from bellml.services.scenario import tripartite_from_joint

    with pytest.raises(UsageError):
        tripartite_from_joint(np.full(64, 0.1))


def test_ij_functionals():
    from bellml.services.scenario import TripartiteCorrelators, bilocal_inequality_value, ij_functionals, ij_point

    abc = np.array([0.5, 0.5, 0.5, -0.5, 0.5, 0.5, -0.5, 0.5])
    t = TripartiteCorrelators(abc=abc, a_marg=[0.1, -0.2])

    i_value, j_value = ij_functionals(t)

    assert i_value == pytest.approx(0.5)
    assert j_value == pytest.approx(0.5)
    assert bilocal_inequality_value(i_value, j_value) == pytest.approx(np.sqrt(2))
    point = ij_point(t)
    assert np.allclose(point.vector, [0.5, 0.5, 0.1, -0.2])


def test_feature_schema():
    from bellml.errors import ConfigurationError
    from bellml.services.scenario import feature_schema

    assert feature_schema("bipartite", 2) == ["A0B0", "A0B1", "A1B0", "A1B1"]
    assert len(feature_schema("bipartite", 3)) == 9
    assert feature_schema("bilocal4") == ["I", "J", "A0", "A1"]
    assert len(feature_schema("bilocal10")) == 10
    assert feature_schema("bilocal10")[:2] == ["A0B0C0", "A0B0C1"]
    with pytest.raises(ConfigurationError):
        feature_schema("tripartite")


def test_ij_functionals_are_linear(rng):
    from bellml.services.scenario import TripartiteCorrelators, ij_functionals

    a = TripartiteCorrelators(abc=rng.uniform(-0.5, 0.5, 8), a_marg=[0.0, 0.0])
    b = TripartiteCorrelators(abc=rng.uniform(-0.5, 0.5, 8), a_marg=[0.0, 0.0])
    combined = TripartiteCorrelators(abc=0.6 * a.abc + 0.8 * b.abc, a_marg=[0.0, 0.0])

    expected = 0.6 * np.array(ij_functionals(a)) + 0.8 * np.array(ij_functionals(b))
    assert np.allclose(ij_functionals(combined), expected)


def test_bilocal_inequality_ignores_signs(rng):
    from bellml.services.scenario import bilocal_inequality_value

    for i_value, j_value in rng.uniform(-1, 1, size=(20, 2)):
        value = bilocal_inequality_value(i_value, j_value)
        assert bilocal_inequality_value(-i_value, j_value) == value
        assert bilocal_inequality_value(i_value, -j_value) == value
        assert bilocal_inequality_value(-i_value, -j_value) == value
