"""
Bell シナリオの代数: 振る舞い (behavior)・相関子写像・決定論的戦略の列挙と、
CHSH / bilocality の汎関数をまとめる。

インデックス規約 (全モジュール共通):
  - 二者の振る舞い p は (a, b, x, y) の row-major で 4·m² 要素
  - 戦略行列の列 λ は (f_a, f_b) の真理値表の辞書式順
  - 相関子は (x, y) の row-major
  - 三者の振る舞い p は (a, b, c, x, y, z) の row-major で 64 要素
  - 三者の joint q は (a0, a1, b0, b1, c0, c1) の row-major で 64 要素
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, UsageError

logger = logging.getLogger(__name__)

MIN_SETTINGS = 2
MAX_SETTINGS = 6
_TOL = 1e-9
_SIGN = np.array([[1.0, -1.0], [-1.0, 1.0]])  # (-1)^(a+b)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_unit_interval(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise UsageError(f"{what}: entries must be finite")
    if np.any(np.abs(values) > 1.0 + _TOL):
        raise UsageError(f"{what}: entries must lie in [-1, 1]")


@dataclass(frozen=True, eq=False)
class CorrelatorVector:
    """⟨A_x B_y⟩ を (x, y) row-major で並べた m² 次元ベクトル。"""

    m: int
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values).ravel()
        if self.m < MIN_SETTINGS:
            raise UsageError(f"m must be >= {MIN_SETTINGS}, got {self.m}")
        if values.size != self.m * self.m:
            raise UsageError(f"expected {self.m * self.m} correlators for m={self.m}, got {values.size}")
        _check_unit_interval(values, "CorrelatorVector")
        object.__setattr__(self, "values", values)

    @classmethod
    def of(cls, values: Sequence[float]) -> "CorrelatorVector":
        """長さから m を推定して生成する。"""
        size = len(values)
        m = int(round(np.sqrt(size)))
        if m * m != size:
            raise UsageError(f"correlator count {size} is not a perfect square")
        return cls(m=m, values=np.asarray(values, dtype=float))

    def matrix(self) -> np.ndarray:
        return self.values.reshape(self.m, self.m)


@dataclass(frozen=True, eq=False)
class BipartiteBehavior:
    """p(ab|xy) の表。生成時に非負・規格化・no-signaling を検証する。"""

    m: int
    p: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p).ravel()
        if p.size != 4 * self.m * self.m:
            raise UsageError(f"expected {4 * self.m * self.m} probabilities, got {p.size}")
        object.__setattr__(self, "p", p)
        problems = behavior_violations(p, self.m)
        if problems:
            raise UsageError("invalid behavior: " + "; ".join(problems))

    def table(self) -> np.ndarray:
        """[a, b, x, y] 形状のビュー。"""
        return self.p.reshape(2, 2, self.m, self.m)


def behavior_violations(p: np.ndarray, m: int, tol: float = _TOL) -> List[str]:
    """BipartiteBehavior の不変条件に反する箇所を列挙する (空なら妥当)。"""
    table = np.asarray(p, dtype=float).reshape(2, 2, m, m)
    problems = []
    if np.any(table < -tol):
        problems.append("negative entries")
    sums = table.sum(axis=(0, 1))
    if np.any(np.abs(sums - 1.0) > tol):
        problems.append("(x, y) blocks do not sum to 1")
    bob = table.sum(axis=0)  # [b, x, y]
    if np.any(np.abs(bob - bob[:, :1, :]) > tol):
        problems.append("Bob's marginal depends on x")
    alice = table.sum(axis=1)  # [a, x, y]
    if np.any(np.abs(alice - alice[:, :, :1]) > tol):
        problems.append("Alice's marginal depends on y")
    return problems


@dataclass(frozen=True, eq=False)
class TripartiteCorrelators:
    """⟨A_x B_y C_z⟩ (x, y, z row-major の 8 個) と ⟨A_0⟩, ⟨A_1⟩。"""

    abc: np.ndarray
    a_marg: np.ndarray

    def __post_init__(self):
        abc = _frozen(self.abc).ravel()
        a_marg = _frozen(self.a_marg).ravel()
        if abc.size != 8 or a_marg.size != 2:
            raise UsageError("TripartiteCorrelators needs 8 correlators and 2 marginals")
        _check_unit_interval(np.concatenate([abc, a_marg]), "TripartiteCorrelators")
        object.__setattr__(self, "abc", abc)
        object.__setattr__(self, "a_marg", a_marg)

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> "TripartiteCorrelators":
        values = np.asarray(values, dtype=float).ravel()
        if values.size != 10:
            raise UsageError(f"expected 10 values, got {values.size}")
        return cls(abc=values[:8], a_marg=values[8:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.abc, self.a_marg])

    def cube(self) -> np.ndarray:
        """[x, y, z] 形状の相関子。"""
        return self.abc.reshape(2, 2, 2)


@dataclass(frozen=True, eq=False)
class IJPoint:
    """4 特徴量の bilocal 表現 (I, J, ⟨A_0⟩, ⟨A_1⟩)。"""

    i: float
    j: float
    a0: float
    a1: float

    def __post_init__(self):
        _check_unit_interval(self.vector, "IJPoint")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.i, self.j, self.a0, self.a1], dtype=float)

    @property
    def a_marg(self) -> np.ndarray:
        return np.array([self.a0, self.a1], dtype=float)


@dataclass(frozen=True, eq=False)
class TripartiteBehavior:
    """p(abc|xyz) の 64 要素表。非負かつ設定ごとに規格化されている。"""

    p: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p).ravel()
        if p.size != 64:
            raise UsageError(f"expected 64 probabilities, got {p.size}")
        table = p.reshape(2, 2, 2, 2, 2, 2)
        if np.any(p < -_TOL):
            raise UsageError("invalid tripartite behavior: negative entries")
        if np.any(np.abs(table.sum(axis=(0, 1, 2)) - 1.0) > _TOL):
            raise UsageError("invalid tripartite behavior: setting blocks do not sum to 1")
        object.__setattr__(self, "p", p)

    @property
    def a_marg(self) -> np.ndarray:
        return tripartite_correlator_map()[8:] @ self.p


@dataclass(frozen=True, eq=False)
class StrategyMatrix:
    """決定論的局所戦略を列に持つ 4m² × 2^(2m) の 0/1 行列。"""

    m: int
    entries: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True, eq=False)
class CorrelatorMap:
    """振る舞いベクトルを相関子ベクトルへ写す m² × 4m² 行列 M_cor。"""

    m: int
    matrix: np.ndarray

    def apply(self, behavior: BipartiteBehavior) -> CorrelatorVector:
        if behavior.m != self.m:
            raise UsageError(f"behavior has m={behavior.m}, map expects m={self.m}")
        return CorrelatorVector(self.m, self.matrix @ behavior.p)


def _check_settings(m: int) -> None:
    if not isinstance(m, (int, np.integer)) or not MIN_SETTINGS <= m <= MAX_SETTINGS:
        raise ConfigurationError(f"m must be an integer in [{MIN_SETTINGS}, {MAX_SETTINGS}], got {m!r}")


@lru_cache(maxsize=None)
def build_strategy_matrix(m: int) -> StrategyMatrix:
    """
    全ての決定論的局所戦略 (f_a, f_b) を列挙した行列 A を返す。

    A[j, λ] = δ(a, f_a(x)) δ(b, f_b(y)), j = (a, b, x, y)。
    """
    _check_settings(m)
    truth_tables = list(itertools.product((0, 1), repeat=m))
    entries = np.zeros((2, 2, m, m, len(truth_tables) ** 2))
    for col, (fa, fb) in enumerate(itertools.product(truth_tables, truth_tables)):
        for x in range(m):
            for y in range(m):
                entries[fa[x], fb[y], x, y, col] = 1.0
    return StrategyMatrix(m=m, entries=_frozen(entries.reshape(4 * m * m, -1)))


@lru_cache(maxsize=None)
def build_correlator_map(m: int) -> CorrelatorMap:
    """⟨A_x B_y⟩ = Σ_ab (-1)^(a+b) p(ab|xy) を表す行列を返す。"""
    if not isinstance(m, (int, np.integer)) or m < MIN_SETTINGS:
        raise ConfigurationError(f"m must be an integer >= {MIN_SETTINGS}, got {m!r}")
    eye = np.eye(m)
    matrix = np.einsum("ab,xX,yY->xyabXY", _SIGN, eye, eye).reshape(m * m, 4 * m * m)
    return CorrelatorMap(m=m, matrix=_frozen(matrix))


def behavior_from_correlators(c: CorrelatorVector) -> BipartiteBehavior:
    """周辺分布を一様にした正準の NS 補完 p(ab|xy) = (1 + (-1)^(a+b) c_xy) / 4。"""
    table = (1.0 + _SIGN[:, :, None, None] * c.matrix()[None, None, :, :]) / 4.0
    return BipartiteBehavior(m=c.m, p=table.ravel())


def chsh_symmetries(c: CorrelatorVector) -> np.ndarray:
    """
    CHSH 式の 4 つの対称形の絶対値を返す。

    マイナス符号を ⟨A1B1⟩, ⟨A1B0⟩, ⟨A0B1⟩, ⟨A0B0⟩ の順に置く。
    """
    if c.m != 2:
        raise UsageError(f"CHSH symmetries are defined for m=2, got m={c.m}")
    v = c.values
    total = v.sum()
    return np.abs(total - 2.0 * v[[3, 2, 1, 0]])


def ij_functionals(t: TripartiteCorrelators) -> Tuple[float, float]:
    """I = (1/4)Σ⟨A_x B_0 C_z⟩, J = (1/4)Σ(-1)^(x+z)⟨A_x B_1 C_z⟩。"""
    cube = t.cube()
    signs = np.array([[1.0, -1.0], [-1.0, 1.0]])
    i_value = 0.25 * float(cube[:, 0, :].sum())
    j_value = 0.25 * float((signs * cube[:, 1, :]).sum())
    return i_value, j_value


def bilocal_inequality_value(i_value: float, j_value: float) -> float:
    return float(np.sqrt(abs(i_value)) + np.sqrt(abs(j_value)))


def ij_point(t: TripartiteCorrelators) -> IJPoint:
    i_value, j_value = ij_functionals(t)
    return IJPoint(i=i_value, j=j_value, a0=float(t.a_marg[0]), a1=float(t.a_marg[1]))


@lru_cache(maxsize=None)
def tripartite_joint_map() -> np.ndarray:
    """joint q(a0,a1,b0,b1,c0,c1) から p(abc|xyz) への決定論的周辺化行列 (64×64)。"""
    entries = np.zeros((2,) * 6 + (64,))
    for col, (a0, a1, b0, b1, c0, c1) in enumerate(itertools.product((0, 1), repeat=6)):
        a_resp, b_resp, c_resp = (a0, a1), (b0, b1), (c0, c1)
        for x, y, z in itertools.product((0, 1), repeat=3):
            entries[a_resp[x], b_resp[y], c_resp[z], x, y, z, col] = 1.0
    return _frozen(entries.reshape(64, 64))


@lru_cache(maxsize=None)
def tripartite_correlator_map() -> np.ndarray:
    """p(abc|xyz) から 8 個の三者相関子と ⟨A_0⟩, ⟨A_1⟩ (y=z=0 で評価) への 10×64 行列。"""
    rows = np.zeros((10,) + (2,) * 6)
    for r, (x, y, z) in enumerate(itertools.product((0, 1), repeat=3)):
        for a, b, c in itertools.product((0, 1), repeat=3):
            rows[r, a, b, c, x, y, z] = (-1.0) ** (a + b + c)
    for x in (0, 1):
        for a, b, c in itertools.product((0, 1), repeat=3):
            rows[8 + x, a, b, c, x, 0, 0] = (-1.0) ** a
    return _frozen(rows.reshape(10, 64))


def joint_index(a0: int, a1: int, b0: int, b1: int, c0: int, c1: int) -> int:
    return int(np.ravel_multi_index((a0, a1, b0, b1, c0, c1), (2,) * 6))


def deterministic_tripartite(fa: Sequence[int], fb: Sequence[int], fc: Sequence[int]) -> TripartiteBehavior:
    """各パーティの応答関数 (setting -> outcome) から決定論的な三者の振る舞いを作る。"""
    q = np.zeros(64)
    q[joint_index(fa[0], fa[1], fb[0], fb[1], fc[0], fc[1])] = 1.0
    return TripartiteBehavior(p=tripartite_joint_map() @ q)


def tripartite_from_joint(q: np.ndarray) -> TripartiteBehavior:
    q = np.asarray(q, dtype=float).ravel()
    if q.size != 64 or np.any(q < -_TOL) or abs(q.sum() - 1.0) > _TOL:
        raise UsageError("joint distribution must be 64 non-negative weights summing to 1")
    return TripartiteBehavior(p=tripartite_joint_map() @ q)


def tripartite_correlators(p: TripartiteBehavior) -> TripartiteCorrelators:
    return TripartiteCorrelators.from_vector(np.clip(tripartite_correlator_map() @ p.p, -1.0, 1.0))


def feature_schema(scenario: str, m: int = 2) -> List[str]:
    """シナリオごとの特徴量名 (CSV ヘッダやメタデータに載る順序)。"""
    if scenario in ("bipartite", "classification"):
        return [f"A{x}B{y}" for x in range(m) for y in range(m)]
    if scenario == "bilocal10":
        return [f"A{x}B{y}C{z}" for x, y, z in itertools.product((0, 1), repeat=3)] + ["A0", "A1"]
    if scenario == "bilocal4":
        return ["I", "J", "A0", "A1"]
    raise ConfigurationError(f"unknown scenario {scenario!r}")
