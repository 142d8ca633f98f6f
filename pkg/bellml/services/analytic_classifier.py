"""
2×2 相関子点の三値分類 (局所 / 量子 / 超量子)。
CHSH の 4 対称形と arcsin 条件を直接評価する。境界上の点は弱い側のクラスに入れる。
"""
import enum

import numpy as np

from ..errors import UsageError
from . import scenario
from .scenario import CorrelatorVector

BOUNDARY_TOL = 1e-9
LABEL_CONVENTION = "boundary points take the weaker class (<= with tolerance 1e-9)"


class CorrelationClass(enum.IntEnum):
    LOCAL = 0
    QUANTUM = 1
    POST_QUANTUM = 2


def _require_m2(c: CorrelatorVector) -> None:
    if c.m != 2:
        raise UsageError(f"analytic classification is defined for m=2, got m={c.m}")


def masanes_values(c: CorrelatorVector) -> np.ndarray:
    """|Σ arcsin⟨A_xB_y⟩ - 2 arcsin⟨·⟩| の 4 対称形 (符号の置き方は chsh_symmetries と同じ)。"""
    _require_m2(c)
    angles = np.arcsin(np.clip(c.values, -1.0, 1.0))
    return np.abs(angles.sum() - 2.0 * angles[[3, 2, 1, 0]])


def quantum_realizable(c: CorrelatorVector) -> bool:
    return bool(np.all(masanes_values(c) <= np.pi + BOUNDARY_TOL))


def local_member(c: CorrelatorVector) -> bool:
    _require_m2(c)
    return bool(np.max(scenario.chsh_symmetries(c)) <= 2.0 + BOUNDARY_TOL)


def classify(c: CorrelatorVector) -> CorrelationClass:
    if local_member(c):
        return CorrelationClass.LOCAL
    if quantum_realizable(c):
        return CorrelationClass.QUANTUM
    return CorrelationClass.POST_QUANTUM


def classify_array(values: np.ndarray) -> np.ndarray:
    """(n, 4) 配列をまとめてラベル付けする。classify と同じ判定をベクトル化したもの。"""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[1] != 4:
        raise UsageError(f"expected 4 correlators per row, got {values.shape[1]}")
    flip = [3, 2, 1, 0]
    chsh = np.abs(values.sum(axis=1, keepdims=True) - 2.0 * values[:, flip])
    angles = np.arcsin(np.clip(values, -1.0, 1.0))
    arcsin_sums = np.abs(angles.sum(axis=1, keepdims=True) - 2.0 * angles[:, flip])
    local = np.max(chsh, axis=1) <= 2.0 + BOUNDARY_TOL
    quantum = np.max(arcsin_sums, axis=1) <= np.pi + BOUNDARY_TOL
    labels = np.full(values.shape[0], int(CorrelationClass.POST_QUANTUM))
    labels[quantum] = int(CorrelationClass.QUANTUM)
    labels[local] = int(CorrelationClass.LOCAL)
    return labels
