"""
Tests for lp_engine.py: the LP wrapper, the NL program and the nu-sweep for NBL.
"""
import numpy as np
import pytest

S = 1 / np.sqrt(2)


def test_solve_simple_bound():
    """Test min x subject to x >= 3"""
    from bellml.services.lp_engine import LinearProgram, LPStatus, solve

    solution = solve(LinearProgram(c=[1.0], a_ub=[[-1.0]], b_ub=[-3.0]))

    assert solution.status is LPStatus.OPTIMAL
    assert solution.optimal
    assert solution.objective == pytest.approx(3.0)
    assert solution.residual <= 1e-7


def test_solve_reports_infeasible():
    from bellml.services.lp_engine import LinearProgram, LPStatus, solve

    solution = solve(LinearProgram(c=[0.0], a_eq=[[1.0], [1.0]], b_eq=[1.0, 2.0]))

    assert solution.status is LPStatus.INFEASIBLE
    assert solution.x is None
    assert not solution.optimal


def test_solve_reports_unbounded():
    from bellml.services.lp_engine import LinearProgram, LPStatus, solve

    solution = solve(LinearProgram(c=[-1.0]))

    assert solution.status is LPStatus.UNBOUNDED


def test_l1_norm_gadget():
    """Test that min Σt with -t <= v <= t gives the l1 norm of v"""
    from bellml.services.lp_engine import LinearProgram, solve

    v = np.array([0.5, -2.0, 1.0])
    eye = np.eye(3)
    lp = LinearProgram(c=np.ones(3), a_ub=np.vstack([-eye, -eye]), b_ub=np.concatenate([v, -v]))

    solution = solve(lp)

    assert solution.objective == pytest.approx(3.5)
    assert np.allclose(solution.x, np.abs(v))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"c": [1.0, 1.0], "a_eq": [[1.0]], "b_eq": [1.0]},
        {"c": [1.0], "a_eq": [[1.0]], "b_eq": [1.0, 2.0]},
        {"c": [np.nan]},
        {"c": [1.0], "lower": [2.0], "upper": [1.0]},
        {"c": [1.0], "names": ["x", "y"]},
    ],
)
def test_linear_program_validation(kwargs):
    from bellml.errors import UsageError
    from bellml.services.lp_engine import LinearProgram

    with pytest.raises(UsageError):
        LinearProgram(**kwargs)


def test_write_lp(tmp_path):
    from bellml.services.lp_engine import LinearProgram, write_lp

    lp = LinearProgram(
        c=[1.0, -2.0],
        a_eq=[[1.0, 1.0]],
        b_eq=[1.0],
        a_ub=[[1.0, 0.0]],
        b_ub=[0.75],
        lower=[0.0, -np.inf],
        upper=[np.inf, np.inf],
        names=["x", "y"],
    )

    text = write_lp(lp, tmp_path / "toy.lp").read_text()

    assert "Minimize" in text
    assert " obj: + 1.0 x - 2.0 y" in text
    assert " e0: + 1.0 x + 1.0 y = 1.0" in text
    assert " u0: + 1.0 x <= 0.75" in text
    assert " y free" in text
    assert text.rstrip().endswith("End")


def test_nl_of_pr_box():
    from bellml.services.lp_engine import nl_distance
    from bellml.services.scenario import CorrelatorVector

    result = nl_distance(CorrelatorVector.of([1, 1, 1, -1]))

    assert result.nl == pytest.approx(0.25, abs=1e-7)
    assert result.weights.sum() == pytest.approx(1.0)


def test_nl_of_tsirelson_point():
    from bellml.services.lp_engine import nl_distance
    from bellml.services.scenario import CorrelatorVector

    result = nl_distance(CorrelatorVector.of([S, S, S, -S]))

    assert result.nl == pytest.approx((np.sqrt(2) - 1) / 4, abs=1e-7)


@pytest.mark.parametrize("m", [2, 3])
def test_nl_of_deterministic_strategies_is_zero(m):
    from bellml.services.lp_engine import nl_distance
    from bellml.services.scenario import CorrelatorVector, build_correlator_map, build_strategy_matrix

    a = build_strategy_matrix(m).entries
    cor = build_correlator_map(m).matrix
    for column in (0, a.shape[1] // 3, a.shape[1] - 1):
        c = CorrelatorVector(m, np.clip(cor @ a[:, column], -1, 1))
        assert nl_distance(c).nl == pytest.approx(0.0, abs=1e-7)


@pytest.mark.slow
def test_nl_of_local_mixtures_is_zero(rng):
    from bellml.services.lp_engine import nl_distance
    from bellml.services.scenario import CorrelatorVector, build_correlator_map, build_strategy_matrix

    for m in (2, 3):
        a = build_strategy_matrix(m).entries
        cor = build_correlator_map(m).matrix
        for _ in range(100):
            weights = rng.dirichlet(np.ones(a.shape[1]))
            c = CorrelatorVector(m, np.clip(cor @ a @ weights, -1, 1))
            assert nl_distance(c).nl == pytest.approx(0.0, abs=1e-7)


def test_nl_is_invariant_under_party_swap(rng):
    from bellml.services.lp_engine import nl_distance
    from bellml.services.scenario import CorrelatorVector

    for _ in range(5):
        c = CorrelatorVector(3, rng.uniform(-1, 1, size=9))
        swapped = CorrelatorVector(3, c.matrix().T.ravel())
        assert nl_distance(c).nl == pytest.approx(nl_distance(swapped).nl, abs=1e-6)


def test_nl_is_invariant_under_outcome_relabeling(rng):
    from bellml.services.lp_engine import nl_distance
    from bellml.services.scenario import CorrelatorVector

    for _ in range(5):
        c = CorrelatorVector(3, rng.uniform(-1, 1, size=9))
        # flipping the outcomes of one measurement flips the sign of its row or column
        alice_flip = c.matrix().copy()
        alice_flip[1, :] *= -1
        bob_flip = c.matrix().copy()
        bob_flip[:, 2] *= -1
        base = nl_distance(c).nl
        assert nl_distance(CorrelatorVector(3, alice_flip.ravel())).nl == pytest.approx(base, abs=1e-6)
        assert nl_distance(CorrelatorVector(3, bob_flip.ravel())).nl == pytest.approx(base, abs=1e-6)


def test_nl_is_invariant_under_setting_permutation(rng):
    from bellml.services.lp_engine import nl_distance
    from bellml.services.scenario import CorrelatorVector

    for _ in range(5):
        c = CorrelatorVector(3, rng.uniform(-1, 1, size=9))
        rows, cols = rng.permutation(3), rng.permutation(3)
        permuted = CorrelatorVector(3, c.matrix()[rows][:, cols].ravel())
        assert nl_distance(permuted).nl == pytest.approx(nl_distance(c).nl, abs=1e-6)


def test_nl_rejects_mismatched_m():
    from bellml.errors import UsageError
    from bellml.services.lp_engine import nl_distance
    from bellml.services.scenario import CorrelatorVector

    with pytest.raises(UsageError):
        nl_distance(CorrelatorVector.of([0.0] * 4), m=3)


@pytest.mark.slow
def test_nl_agrees_with_chsh_on_random_points(rng):
    """Test that NL > 0 exactly when some CHSH symmetry exceeds 2"""
    from bellml.services.lp_engine import nl_distance
    from bellml.services.sampler import sample_bipartite
    from bellml.services.scenario import chsh_symmetries

    for _ in range(1000):
        c = sample_bipartite(2, rng)
        nonlocal_by_lp = nl_distance(c).nl > 1e-6
        nonlocal_by_chsh = chsh_symmetries(c).max() > 2.0
        assert nonlocal_by_lp == nonlocal_by_chsh


def test_marginal_qfunctions():
    from bellml.services.lp_engine import marginal_qfunctions

    assert marginal_qfunctions(0.0, 0.0, 0.25) == pytest.approx((0.25, 0.25, 0.25, 0.25))
    assert marginal_qfunctions(1.0, 1.0, 1.0) == pytest.approx((1.0, 0.0, 0.0, 0.0))
    assert sum(marginal_qfunctions(0.3, -0.6, 0.1)) == pytest.approx(1.0)


@pytest.mark.parametrize("outcomes,expected", [((0, 0), (1.0, 1.0)), ((1, 1), (0.0, 0.0)), ((0, 1), (0.0, 0.0))])
def test_nu_bounds_of_deterministic_points(outcomes, expected):
    from bellml.services.lp_engine import nu_bounds
    from bellml.services.scenario import deterministic_tripartite

    low, high = nu_bounds(deterministic_tripartite(outcomes, (0, 1), (1, 0)))

    assert low == pytest.approx(expected[0], abs=1e-9)
    assert high == pytest.approx(expected[1], abs=1e-9)


def test_nu_bounds_of_silent_point():
    from bellml.services.lp_engine import nu_bounds
    from bellml.services.scenario import TripartiteCorrelators

    low, high = nu_bounds(TripartiteCorrelators(abc=np.zeros(8), a_marg=np.zeros(2)))

    assert low == pytest.approx(0.0, abs=1e-9)
    assert high == pytest.approx(0.5, abs=1e-9)


def _inconsistent_point():
    from bellml.services.scenario import TripartiteCorrelators

    # with A0 fixed to +1 the four B·C products cannot multiply to -1
    abc = np.array([1.0, 1.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0])
    return TripartiteCorrelators(abc=abc, a_marg=[1.0, 0.0])


def test_feasibility():
    from bellml.services.lp_engine import nbl_feasibility
    from bellml.services.scenario import TripartiteCorrelators, deterministic_tripartite

    assert nbl_feasibility(TripartiteCorrelators(abc=np.zeros(8), a_marg=np.zeros(2)))
    assert nbl_feasibility(deterministic_tripartite((0, 1), (1, 1), (0, 1)))
    assert not nbl_feasibility(_inconsistent_point())


def test_infeasible_point_raises_domain_error():
    from bellml.errors import DomainError
    from bellml.services.lp_engine import nbl_distance

    with pytest.raises(DomainError, match="resample"):
        nbl_distance(_inconsistent_point(), grid=10)


def test_nbl_of_deterministic_point_exits_early():
    from bellml.services.lp_engine import nbl_distance
    from bellml.services.scenario import deterministic_tripartite

    result = nbl_distance(deterministic_tripartite((0, 1), (1, 0), (1, 1)), grid=10)

    assert result.nbl == 0.0
    assert result.early_exit is True


def test_nbl_of_silent_point_is_zero():
    from bellml.services.lp_engine import nbl_distance
    from bellml.services.scenario import TripartiteCorrelators

    result = nbl_distance(TripartiteCorrelators(abc=np.zeros(8), a_marg=np.zeros(2)), grid=11, keep_trace=True)

    assert result.nbl == 0.0
    assert result.trace.shape[1] == 2
    assert result.trace.shape[0] <= 11


def test_nbl_rejects_tiny_grid():
    from bellml.errors import UsageError
    from bellml.services.lp_engine import nbl_distance
    from bellml.services.scenario import TripartiteCorrelators

    with pytest.raises(UsageError):
        nbl_distance(TripartiteCorrelators(abc=np.zeros(8), a_marg=np.zeros(2)), grid=1)


def test_ij_features_are_accepted(rng):
    from bellml.services.lp_engine import nbl_feasibility
    from bellml.services.scenario import IJPoint, ij_point, tripartite_correlators, tripartite_from_joint

    assert nbl_feasibility(IJPoint(0.0, 0.0, 0.0, 0.0))
    q = rng.dirichlet(np.ones(64))
    assert nbl_feasibility(ij_point(tripartite_correlators(tripartite_from_joint(q))))


@pytest.mark.slow
@pytest.mark.parametrize("v", [0.5, 0.75, 0.80, 0.85, 0.90, 0.95, 1.0])
def test_nbl_of_werner_swap(v):
    """Test the entanglement-swapping family: NBL = max(0, v² - 1/2)"""
    from bellml.services.lp_engine import nbl_distance
    from bellml.services.sampler import quantum_swap_correlators

    result = nbl_distance(quantum_swap_correlators(v), grid=1000)

    assert result.nbl == pytest.approx(max(0.0, v * v - 0.5), abs=2e-3)


@pytest.mark.slow
def test_parallel_sweep_matches_sequential():
    from bellml.services.lp_engine import nbl_distance
    from bellml.services.sampler import quantum_swap_correlators

    point = quantum_swap_correlators(0.95)
    sequential = nbl_distance(point, grid=60)
    parallel = nbl_distance(point, grid=60, parallel=True, workers=2)

    assert parallel.nbl == pytest.approx(sequential.nbl, abs=1e-9)


def _bilocal_product_point(rng):
    """A and C draw independent strategies, B answers deterministically from both."""
    from bellml.services.scenario import joint_index, tripartite_correlators, tripartite_from_joint

    p_a, p_c = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    b_of = rng.integers(0, 4, size=(4, 4))
    q = np.zeros(64)
    for lam in range(4):
        for mu in range(4):
            b = b_of[lam, mu]
            q[joint_index(lam >> 1, lam & 1, b >> 1, b & 1, mu >> 1, mu & 1)] += p_a[lam] * p_c[mu]
    return tripartite_correlators(tripartite_from_joint(q))


@pytest.mark.slow
def test_bilocal_products_are_certified_zero(rng):
    from bellml.services.lp_engine import nbl_distance

    for _ in range(50):
        result = nbl_distance(_bilocal_product_point(rng), grid=1000)
        assert result.nbl == 0.0
        assert result.early_exit is True


@pytest.mark.slow
def test_nbl_is_stable_under_grid_doubling(rng):
    from bellml.services.lp_engine import nbl_distance
    from bellml.services.sampler import quantum_swap_correlators, sample_tripartite

    for point in (quantum_swap_correlators(0.9), sample_tripartite(rng), sample_tripartite(rng)):
        coarse = nbl_distance(point, grid=1000).nbl
        fine = nbl_distance(point, grid=2000).nbl
        assert abs(coarse - fine) <= 1e-3
