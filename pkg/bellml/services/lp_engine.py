"""
線形計画 (LP) の表現と求解、および 2 つの厳密オラクル。

- NL(q): 相関子点から局所多面体までの正規化トレース距離
- NBL(q): bilocal 集合からの距離。ν を掃引する LP の族で評価する

ソルバーは scipy.optimize.linprog の HiGHS 双対改訂シンプレックス ("highs-ds")。
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import linprog, minimize_scalar

from ..errors import DomainError, NumericError, UsageError
from . import scenario
from .scenario import CorrelatorVector, IJPoint, TripartiteBehavior, TripartiteCorrelators

logger = logging.getLogger(__name__)

SOLVER_METHOD = "highs-ds"
SOLVER_TOL = 1e-10
RESIDUAL_TOL = 1e-7
ZERO_TOL = 1e-9
DEFAULT_NU_GRID = 1000

TripartitePoint = Union[TripartiteCorrelators, IJPoint, TripartiteBehavior]


class LPStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERIC_FAILURE = "numeric-failure"


@dataclass(eq=False)
class LinearProgram:
    """
    min c·x  s.t.  A_eq x = b_eq,  A_ub x ≤ b_ub,  lower ≤ x ≤ upper。
    上下限は ±inf を許す。names は LP ファイル出力用の変数名。
    """

    c: np.ndarray
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    names: Optional[List[str]] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        if self.lower is None:
            self.lower = np.zeros(n)
        if self.upper is None:
            self.upper = np.full(n, np.inf)
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        self.a_eq, self.b_eq = self._rows(self.a_eq, self.b_eq, "equality")
        self.a_ub, self.b_ub = self._rows(self.a_ub, self.b_ub, "inequality")
        if not np.all(np.isfinite(self.c)):
            raise UsageError("objective coefficients must be finite")
        if np.any(self.lower > self.upper):
            raise UsageError("variable lower bound exceeds upper bound")
        if self.names is not None and len(self.names) != n:
            raise UsageError(f"expected {n} variable names, got {len(self.names)}")

    @property
    def n_vars(self) -> int:
        return self.c.size

    def _rows(self, matrix, rhs, what: str) -> Tuple[np.ndarray, np.ndarray]:
        n = self.c.size
        if matrix is None:
            return np.zeros((0, n)), np.zeros(0)
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        rhs = np.asarray(rhs, dtype=float).ravel()
        if matrix.shape[1] != n:
            raise UsageError(f"{what} matrix has {matrix.shape[1]} columns, expected {n}")
        if matrix.shape[0] != rhs.size:
            raise UsageError(f"{what} matrix has {matrix.shape[0]} rows but rhs has {rhs.size}")
        if not (np.all(np.isfinite(matrix)) and np.all(np.isfinite(rhs))):
            raise UsageError(f"{what} constraints must be finite")
        return matrix, rhs

    def residual(self, x: np.ndarray) -> float:
        """x における制約違反の最大値。"""
        parts = [0.0]
        if self.b_eq.size:
            parts.append(float(np.max(np.abs(self.a_eq @ x - self.b_eq))))
        if self.b_ub.size:
            parts.append(float(np.max(self.a_ub @ x - self.b_ub)))
        parts.append(float(np.max(self.lower - x)))
        parts.append(float(np.max(x - self.upper)))
        return max(parts)


@dataclass(eq=False)
class LPSolution:
    status: LPStatus
    objective: Optional[float] = None
    x: Optional[np.ndarray] = None
    iterations: int = 0
    residual: Optional[float] = None
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is LPStatus.OPTIMAL


@dataclass(eq=False)
class NLResult:
    nl: float
    weights: np.ndarray
    completion: np.ndarray


@dataclass(eq=False)
class NBLResult:
    nbl: float
    nu_grid_size: int
    nu_argmin: float
    nu_min: float
    nu_max: float
    early_exit: bool = False
    trace: Optional[np.ndarray] = field(default=None, repr=False)


_LINPROG_STATUS = {
    0: LPStatus.OPTIMAL,
    1: LPStatus.NUMERIC_FAILURE,  # iteration limit
    2: LPStatus.INFEASIBLE,
    3: LPStatus.UNBOUNDED,
    4: LPStatus.NUMERIC_FAILURE,
}


def solve(lp: LinearProgram) -> LPSolution:
    """
    LP を解く。最適解は制約残差を検査し、許容値を超えれば numeric-failure を返す。
    numeric-failure を infeasible として扱うことはしない。
    """
    bounds = [
        (None if np.isinf(lo) else lo, None if np.isinf(hi) else hi)
        for lo, hi in zip(lp.lower, lp.upper)
    ]
    res = linprog(
        lp.c,
        A_ub=lp.a_ub if lp.b_ub.size else None,
        b_ub=lp.b_ub if lp.b_ub.size else None,
        A_eq=lp.a_eq if lp.b_eq.size else None,
        b_eq=lp.b_eq if lp.b_eq.size else None,
        bounds=bounds,
        method=SOLVER_METHOD,
        options={
            "primal_feasibility_tolerance": SOLVER_TOL,
            "dual_feasibility_tolerance": SOLVER_TOL,
        },
    )
    status = _LINPROG_STATUS.get(res.status, LPStatus.NUMERIC_FAILURE)
    iterations = int(getattr(res, "nit", 0) or 0)
    if status is not LPStatus.OPTIMAL:
        return LPSolution(status=status, iterations=iterations, message=str(res.message))

    x = np.asarray(res.x, dtype=float)
    residual = lp.residual(x)
    if residual > RESIDUAL_TOL:
        logger.warning("LP residual %.3e exceeds tolerance %.1e", residual, RESIDUAL_TOL)
        return LPSolution(
            status=LPStatus.NUMERIC_FAILURE,
            iterations=iterations,
            residual=residual,
            message=f"constraint residual {residual:.3e}",
        )
    return LPSolution(
        status=LPStatus.OPTIMAL,
        objective=float(res.fun),
        x=x,
        iterations=iterations,
        residual=residual,
        message=str(res.message),
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def _lp_row(coeffs: np.ndarray, names: List[str]) -> str:
    terms = [f"{'+' if v >= 0 else '-'} {_fmt(abs(v))} {names[i]}" for i, v in enumerate(coeffs) if v != 0.0]
    return " ".join(terms) if terms else f"0 {names[0]}"


def write_lp(lp: LinearProgram, path: Union[str, Path]) -> Path:
    """LP を CPLEX LP 形式のテキストで書き出す (外部ソルバーとの突き合わせ用)。"""
    names = lp.names or [f"x{i}" for i in range(lp.n_vars)]
    lines = ["\\ bellml linear program", "Minimize", f" obj: {_lp_row(lp.c, names)}", "Subject To"]
    for r in range(lp.b_eq.size):
        lines.append(f" e{r}: {_lp_row(lp.a_eq[r], names)} = {_fmt(lp.b_eq[r])}")
    for r in range(lp.b_ub.size):
        lines.append(f" u{r}: {_lp_row(lp.a_ub[r], names)} <= {_fmt(lp.b_ub[r])}")
    lines.append("Bounds")
    for name, lo, hi in zip(names, lp.lower, lp.upper):
        if np.isinf(lo) and np.isinf(hi):
            lines.append(f" {name} free")
        else:
            lo_s = "-inf" if np.isinf(lo) else _fmt(lo)
            hi_s = "+inf" if np.isinf(hi) else _fmt(hi)
            lines.append(f" {lo_s} <= {name} <= {hi_s}")
    lines.append("End")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug("wrote LP with %d variables to %s", lp.n_vars, path)
    return path


# ---------------------------------------------------------------------------
# NL(q)
# ---------------------------------------------------------------------------

def _no_signaling_rows(m: int) -> np.ndarray:
    """Σ_a q(ab|0y) - Σ_a q(ab|x'y) = 0 と Σ_b q(ab|x0) - Σ_b q(ab|xy') = 0 の行。"""
    rows = []
    for b in (0, 1):
        for y in range(m):
            for x in range(1, m):
                row = np.zeros((2, 2, m, m))
                row[:, b, 0, y] += 1.0
                row[:, b, x, y] -= 1.0
                rows.append(row.ravel())
    for a in (0, 1):
        for x in range(m):
            for y in range(1, m):
                row = np.zeros((2, 2, m, m))
                row[a, :, x, 0] += 1.0
                row[a, :, x, y] -= 1.0
                rows.append(row.ravel())
    return np.array(rows)


def _normalization_rows(m: int) -> np.ndarray:
    rows = np.zeros((m * m, 2, 2, m, m))
    for x in range(m):
        for y in range(m):
            rows[x * m + y, :, :, x, y] = 1.0
    return rows.reshape(m * m, 4 * m * m)


def nl_program(c: CorrelatorVector) -> Tuple[LinearProgram, Dict[str, slice]]:
    """
    NL の LP を組み立てる。変数は (t, λ, q) の順。

    min Σt  s.t. -t ≤ q - Aλ ≤ t, Σλ = 1, q は規格化・NS・非負, M_cor q = c
    """
    m = c.m
    strategies = scenario.build_strategy_matrix(m).entries
    n, k = strategies.shape
    eye = np.eye(n)
    slices = {"t": slice(0, n), "lambda": slice(n, n + k), "q": slice(n + k, 2 * n + k)}

    a_ub = np.block([
        [-eye, -strategies, eye],
        [-eye, strategies, -eye],
    ])
    b_ub = np.zeros(2 * n)

    weights_row = np.concatenate([np.zeros(n), np.ones(k), np.zeros(n)])[None, :]

    def on_q(rows: np.ndarray) -> np.ndarray:
        return np.hstack([np.zeros((rows.shape[0], n + k)), rows])

    norm = _normalization_rows(m)
    ns = _no_signaling_rows(m)
    cor = scenario.build_correlator_map(m).matrix
    a_eq = np.vstack([weights_row, on_q(norm), on_q(ns), on_q(cor)])
    b_eq = np.concatenate([[1.0], np.ones(norm.shape[0]), np.zeros(ns.shape[0]), c.values])

    names = [f"t{i}" for i in range(n)] + [f"l{i}" for i in range(k)] + [f"q{i}" for i in range(n)]
    objective = np.concatenate([np.ones(n), np.zeros(k + n)])
    lp = LinearProgram(c=objective, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub, names=names)
    return lp, slices


def nl_distance(c: CorrelatorVector, m: Optional[int] = None) -> NLResult:
    """
    相関子点 c の非局所性 NL = (LP 最適値) / (2m²) を返す。

    q は c と整合する NS 補完として LP の中で自由に選ばれる。
    """
    if m is not None and m != c.m:
        raise UsageError(f"correlator vector has m={c.m}, requested m={m}")
    lp, slices = nl_program(c)
    solution = solve(lp)
    if solution.status is LPStatus.INFEASIBLE:
        # every point of the correlator hypercube has an NS completion
        raise NumericError("NL program reported infeasible", diagnostics={"point": c.values.tolist()})
    if not solution.optimal:
        raise NumericError(
            f"NL program failed: {solution.status.value}",
            diagnostics={"point": c.values.tolist(), "message": solution.message},
        )
    nl = max(0.0, solution.objective / (2.0 * c.m * c.m))
    weights = np.clip(solution.x[slices["lambda"]], 0.0, None)
    weights = weights / weights.sum()
    return NLResult(nl=min(nl, 1.0), weights=weights, completion=solution.x[slices["q"]])


# ---------------------------------------------------------------------------
# NBL(q)
# ---------------------------------------------------------------------------

_N_JOINT = 64
_N_P = 64
_N_T = 16


def marginal_qfunctions(a0: float, a1: float, nu: float) -> Tuple[float, float, float, float]:
    """
    A の周辺 q_{a0,a1} を ν と ⟨A_0⟩, ⟨A_1⟩ で表す。f11 は規格化から決める。
    符号規約は ⟨A_x⟩ = 1 ⇔ p(0|x) = 1。
    """
    f00 = nu
    f01 = (a0 + 1.0) / 2.0 - nu
    f10 = (a1 + 1.0) / 2.0 - nu
    f11 = 1.0 - f00 - f01 - f10
    return f00, f01, f10, f11


def _feature_rows(point: TripartitePoint) -> Tuple[np.ndarray, np.ndarray]:
    """p (64 要素) に課す特徴量制約 (行列, 右辺)。"""
    cor = scenario.tripartite_correlator_map()
    if isinstance(point, TripartiteCorrelators):
        return cor, point.vector
    if isinstance(point, IJPoint):
        cube_rows = cor[:8].reshape(2, 2, 2, _N_P)  # [x, y, z, p]
        signs = np.array([[1.0, -1.0], [-1.0, 1.0]])
        i_row = 0.25 * cube_rows[:, 0, :, :].sum(axis=(0, 1))
        j_row = 0.25 * np.einsum("xz,xzp->p", signs, cube_rows[:, 1, :, :])
        return np.vstack([i_row, j_row, cor[8:]]), point.vector
    if isinstance(point, TripartiteBehavior):
        return np.eye(_N_P), point.p
    raise UsageError(f"unsupported tripartite point type {type(point).__name__}")


def _a_marginals(point: TripartitePoint) -> np.ndarray:
    return np.asarray(point.a_marg, dtype=float)


def _p_normalization_rows() -> np.ndarray:
    rows = np.zeros((8, 2, 2, 2, 2, 2, 2))
    for r in range(8):
        x, y, z = (r >> 2) & 1, (r >> 1) & 1, r & 1
        rows[r, :, :, :, x, y, z] = 1.0
    return rows.reshape(8, _N_P)


def _a_marginal_rows() -> np.ndarray:
    """q の A 周辺 q_{a0,a1} を取り出す 4×64 行列 ((a0, a1) row-major)。"""
    rows = np.zeros((4,) + (2,) * 6)
    for a0 in (0, 1):
        for a1 in (0, 1):
            rows[2 * a0 + a1, a0, a1] = 1.0
    return rows.reshape(4, _N_JOINT)


def _ac_rows() -> Tuple[np.ndarray, np.ndarray]:
    """q_{a0,a1,c0,c1} (16×64) と q_{c0,c1} (4×64) の周辺化行列。"""
    ac = np.zeros((2, 2, 2, 2) + (2,) * 6)
    c_only = np.zeros((2, 2) + (2,) * 6)
    for a0, a1, b0, b1, c0, c1 in np.ndindex(*(2,) * 6):
        ac[a0, a1, c0, c1, a0, a1, b0, b1, c0, c1] = 1.0
        c_only[c0, c1, a0, a1, b0, b1, c0, c1] = 1.0
    return ac.reshape(16, _N_JOINT), c_only.reshape(4, _N_JOINT)


class _TripartiteProgram:
    """
    三者の LP に共通する制約ブロック。変数は (q, p) の順で 128 個。
    A q = p, Σq = 1, p の設定ごとの規格化, 特徴量制約, q, p ≥ 0。
    """

    def __init__(self, point: TripartitePoint):
        self.point = point
        joint = scenario.tripartite_joint_map()
        feat_rows, feat_rhs = _feature_rows(point)
        zeros_q = np.zeros((_N_P, _N_JOINT))
        self.a_eq = np.vstack([
            np.hstack([joint, -np.eye(_N_P)]),
            np.concatenate([np.ones(_N_JOINT), np.zeros(_N_P)])[None, :],
            np.hstack([zeros_q[:8], _p_normalization_rows()]),
            np.hstack([np.zeros((feat_rows.shape[0], _N_JOINT)), feat_rows]),
        ])
        self.b_eq = np.concatenate([np.zeros(_N_P), [1.0], np.ones(8), feat_rhs])
        self.a_marg = _a_marginals(point)

    def program(self, objective: np.ndarray) -> LinearProgram:
        return LinearProgram(c=objective, a_eq=self.a_eq, b_eq=self.b_eq)


def nbl_feasibility(point: TripartitePoint) -> bool:
    """与えられた特徴量と整合する joint q ≥ 0 (Σq = 1) が存在するか。"""
    program = _TripartiteProgram(point)
    solution = solve(program.program(np.zeros(_N_JOINT + _N_P)))
    if solution.status is LPStatus.INFEASIBLE:
        return False
    if not solution.optimal:
        raise NumericError(f"feasibility program failed: {solution.status.value}", diagnostics={"message": solution.message})
    return True


def nu_bounds(point: TripartitePoint) -> Tuple[float, float]:
    """制約下での q_{a0=0,a1=0} の最小値と最大値。実行不能なら DomainError。"""
    program = _TripartiteProgram(point)
    selector = np.concatenate([_a_marginal_rows()[0], np.zeros(_N_P)])
    low = solve(program.program(selector))
    high = solve(program.program(-selector))
    for solution in (low, high):
        if solution.status is LPStatus.INFEASIBLE:
            raise DomainError("point is outside the bilocality quantifier's domain; resample it")
        if not solution.optimal:
            raise NumericError(f"nu bound program failed: {solution.status.value}", diagnostics={"message": solution.message})
    nu_min = float(low.objective)
    nu_max = float(-high.objective)
    if nu_min > nu_max:
        nu_min, nu_max = nu_max, nu_min
    return nu_min, nu_max


class _NuSweep:
    """固定 ν ごとの LP: min Σt, -t ≤ M^ν q ≤ t, A 周辺を f(ν) に固定。変数は (t, q, p)。"""

    def __init__(self, point: TripartitePoint):
        self.base = _TripartiteProgram(point)
        self.ac_rows, self.c_rows = _ac_rows()
        self.a_rows = _a_marginal_rows()
        n_vars = _N_T + _N_JOINT + _N_P
        self.objective = np.concatenate([np.ones(_N_T), np.zeros(_N_JOINT + _N_P)])
        self.a_eq_shared = np.hstack([np.zeros((self.base.a_eq.shape[0], _N_T)), self.base.a_eq])
        self.a_eq_pin = np.hstack([np.zeros((4, _N_T)), self.a_rows, np.zeros((4, _N_P))])
        self.a_eq = np.vstack([self.a_eq_shared, self.a_eq_pin])
        self.lower = np.zeros(n_vars)

    def m_nu(self, nu: float) -> np.ndarray:
        """(M^ν q)_{a,c} = q_{a,c} - f_a(ν) q_c の 16×64 行列。"""
        f = np.array(marginal_qfunctions(self.base.a_marg[0], self.base.a_marg[1], nu))
        return self.ac_rows - np.repeat(f, 4)[:, None] * np.tile(self.c_rows, (4, 1))

    def program(self, nu: float) -> LinearProgram:
        m_nu = self.m_nu(nu)
        eye = np.eye(_N_T)
        zeros_p = np.zeros((_N_T, _N_P))
        a_ub = np.vstack([
            np.hstack([-eye, m_nu, zeros_p]),
            np.hstack([-eye, -m_nu, zeros_p]),
        ])
        f = np.array(marginal_qfunctions(self.base.a_marg[0], self.base.a_marg[1], nu))
        b_eq = np.concatenate([self.base.b_eq, f])
        return LinearProgram(
            c=self.objective, a_eq=self.a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=np.zeros(2 * _N_T), lower=self.lower
        )

    def value(self, nu: float) -> float:
        """ν における最適値 (実行不能なら +inf)。"""
        solution = solve(self.program(nu))
        if solution.status is LPStatus.INFEASIBLE:
            return float("inf")
        if not solution.optimal:
            raise NumericError(
                f"per-nu program failed at nu={nu:.6g}: {solution.status.value}",
                diagnostics={"nu": nu, "message": solution.message},
            )
        return max(0.0, float(solution.objective))


def _sweep_chunk(point: TripartitePoint, nus: Sequence[float]) -> List[float]:
    sweep = _NuSweep(point)
    return [sweep.value(nu) for nu in nus]


def nbl_distance(
    point: TripartitePoint,
    grid: int = DEFAULT_NU_GRID,
    parallel: bool = False,
    workers: int = 1,
    keep_trace: bool = False,
    refine: bool = True,
) -> NBLResult:
    """
    NBL = (1/2) min_ν [ν ごとの LP 最適値] を返す。

    ν は [ν_min, ν_max] の両端を含む等間隔グリッド。逐次掃引ではいずれかの ν で
    最適値が 1e-9 以下になった時点で 0 を返す。parallel=True は全 ν を評価して同じ値を返す。
    """
    if grid < 2:
        raise UsageError(f"nu grid must have at least 2 points, got {grid}")
    nu_min, nu_max = nu_bounds(point)
    nus = np.linspace(nu_min, nu_max, grid)
    sweep = _NuSweep(point)

    values: List[float] = []
    if parallel and workers > 1:
        chunks = np.array_split(nus, workers)
        results = Parallel(n_jobs=workers)(delayed(_sweep_chunk)(point, chunk) for chunk in chunks)
        values = [v for chunk in results for v in chunk]
    else:
        for nu in nus:
            value = sweep.value(nu)
            values.append(value)
            if value <= ZERO_TOL:
                break

    values_arr = np.asarray(values)
    trace = np.column_stack([nus[: values_arr.size], values_arr]) if keep_trace else None
    best = int(np.argmin(values_arr))
    best_nu, best_value = float(nus[best]), float(values_arr[best])
    if not np.isfinite(best_value):
        raise DomainError("no value of nu admits a feasible joint distribution; resample the point")

    if best_value <= ZERO_TOL:
        logger.debug("nbl early exit at nu=%.6g", best_nu)
        return NBLResult(0.0, grid, best_nu, nu_min, nu_max, early_exit=True, trace=trace)

    if refine and nu_max > nu_min:
        lo = float(nus[max(best - 1, 0)])
        hi = float(nus[min(best + 1, grid - 1)])
        refined = minimize_scalar(sweep.value, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        if refined.success and np.isfinite(refined.fun) and float(refined.fun) < best_value:
            best_nu, best_value = float(refined.x), float(refined.fun)
            if best_value <= ZERO_TOL:
                return NBLResult(0.0, grid, best_nu, nu_min, nu_max, early_exit=True, trace=trace)

    nbl = 0.5 * best_value
    if nbl > 0.5 + 1e-9:
        logger.warning("nbl %.6f exceeds 1/2 for point %s", nbl, type(point).__name__)
    return NBLResult(nbl, grid, best_nu, nu_min, nu_max, early_exit=False, trace=trace)
