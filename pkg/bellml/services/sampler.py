"""
非信号 (NS) 相関のランダム生成と、量子力学的な相関の生成器。

乱数は Philox (カウンタベース 64bit) を使い、レコードごとのサブストリームは
SeedSequence.spawn で切り出す。ワーカー数を変えても結果は変わらない。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from ..errors import NumericError, SamplingError, UsageError
from . import lp_engine, scenario
from .scenario import CorrelatorVector, IJPoint, TripartiteCorrelators

logger = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 1_000_000
_UNIT_TOL = 1e-9
_CHSH_CHECK_TOL = 1e-4

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class SamplerConfig:
    scenario: str
    seed: int
    count: int
    m: int = 2

    def __post_init__(self):
        if self.count < 1:
            raise UsageError(f"count must be >= 1, got {self.count}")
        if self.seed < 0:
            raise UsageError(f"seed must be non-negative, got {self.seed}")
        if self.scenario not in ("bipartite", "bilocal4", "bilocal10", "classification"):
            raise UsageError(f"unknown scenario {self.scenario!r}")


@dataclass
class AcceptanceStats:
    """棄却サンプリングの試行数と受理数。"""

    attempts: int = 0
    accepted: int = 0

    @property
    def rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0

    def merge(self, other: "AcceptanceStats") -> "AcceptanceStats":
        return AcceptanceStats(self.attempts + other.attempts, self.accepted + other.accepted)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, count: int) -> List[np.random.Generator]:
    """seed から count 本の独立ストリームを作る (i 番目は常に同じ)。"""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


# ---------------------------------------------------------------------------
# NS samplers
# ---------------------------------------------------------------------------

def sample_bipartite(m: int, rng: np.random.Generator) -> CorrelatorVector:
    if m < scenario.MIN_SETTINGS:
        raise UsageError(f"m must be >= {scenario.MIN_SETTINGS}, got {m}")
    return CorrelatorVector(m=m, values=rng.uniform(-1.0, 1.0, size=m * m))


def _rejection_loop(draw, rng, max_attempts: int, stats: Optional[AcceptanceStats], what: str):
    stats = stats if stats is not None else AcceptanceStats()
    for _ in range(max_attempts):
        stats.attempts += 1
        candidate = draw(rng)
        if lp_engine.nbl_feasibility(candidate):
            stats.accepted += 1
            return candidate
    raise SamplingError(
        f"{what}: no feasible sample after {max_attempts} attempts",
        diagnostics={"attempts": stats.attempts, "accepted": stats.accepted},
    )


def sample_tripartite(
    rng: np.random.Generator,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    stats: Optional[AcceptanceStats] = None,
) -> TripartiteCorrelators:
    """8 個の三者相関子と ⟨A_0⟩, ⟨A_1⟩ を一様に引き、joint q が存在するものだけ受理する。"""
    return _rejection_loop(
        lambda r: TripartiteCorrelators.from_vector(r.uniform(-1.0, 1.0, size=10)),
        rng, max_attempts, stats, "sample_tripartite",
    )


def sample_ij(
    rng: np.random.Generator,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    stats: Optional[AcceptanceStats] = None,
) -> IJPoint:
    """(I, J, ⟨A_0⟩, ⟨A_1⟩) を直接一様に引く 4 特徴量版。"""
    return _rejection_loop(
        lambda r: IJPoint(*r.uniform(-1.0, 1.0, size=4)),
        rng, max_attempts, stats, "sample_ij",
    )


# ---------------------------------------------------------------------------
# Quantum generators
# ---------------------------------------------------------------------------

def bloch_vector(polar: float, azimuth: float = 0.0) -> np.ndarray:
    return np.array([
        np.sin(polar) * np.cos(azimuth),
        np.sin(polar) * np.sin(azimuth),
        np.cos(polar),
    ])


def observable(n: np.ndarray) -> np.ndarray:
    """n·σ。"""
    return n[0] * PAULI_X + n[1] * PAULI_Y + n[2] * PAULI_Z


def _check_unit(vectors: np.ndarray, what: str) -> np.ndarray:
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.shape[-1] != 3 or not np.all(np.isfinite(vectors)):
        raise UsageError(f"{what}: expected finite 3-component Bloch vectors")
    norms = np.linalg.norm(vectors, axis=-1)
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        raise UsageError(f"{what}: Bloch vectors must have unit length, got norms {np.round(norms, 6).tolist()}")
    return vectors


def pure_state(theta: float) -> np.ndarray:
    """cosθ|00⟩ + sinθ|11⟩ の密度行列。"""
    psi = np.zeros(4, dtype=complex)
    psi[0], psi[3] = np.cos(theta), np.sin(theta)
    return np.outer(psi, psi.conj())


def werner_state(v: float) -> np.ndarray:
    """v|Φ⁺⟩⟨Φ⁺| + (1 - v) 𝟙/4。"""
    if not 0.0 <= v <= 1.0:
        raise UsageError(f"visibility must lie in [0, 1], got {v}")
    return v * pure_state(np.pi / 4) + (1.0 - v) * np.eye(4, dtype=complex) / 4.0


def _expectation(rho: np.ndarray, operator: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ operator)))


@dataclass(frozen=True, eq=False)
class QuantumSettings:
    """二者の状態パラメータ θ と各設定の Bloch ベクトル ((m, 3) 配列)。"""

    theta: float
    alice: np.ndarray
    bob: np.ndarray
    visibility: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.theta):
            raise UsageError("theta must be finite")
        if self.visibility is not None and not 0.0 <= self.visibility <= 1.0:
            raise UsageError(f"visibility must lie in [0, 1], got {self.visibility}")

    def state(self) -> np.ndarray:
        rho = pure_state(self.theta)
        if self.visibility is not None:
            rho = self.visibility * rho + (1.0 - self.visibility) * np.eye(4, dtype=complex) / 4.0
        return rho


def quantum_bipartite_correlators(settings: QuantumSettings, m: Optional[int] = None) -> CorrelatorVector:
    """⟨A_x B_y⟩ = Tr[(a_x·σ ⊗ b_y·σ) ρ] を厳密に計算する。"""
    alice = _check_unit(settings.alice, "alice")
    bob = _check_unit(settings.bob, "bob")
    m = m if m is not None else alice.shape[0]
    if alice.shape[0] != m or bob.shape[0] != m:
        raise UsageError(f"expected {m} Bloch vectors per party, got {alice.shape[0]} and {bob.shape[0]}")
    rho = settings.state()
    values = [
        _expectation(rho, np.kron(observable(a), observable(b)))
        for a in alice
        for b in bob
    ]
    return CorrelatorVector(m=m, values=np.clip(values, -1.0, 1.0))


def _settings_from_polar(theta: float, polar: Sequence[float]) -> QuantumSettings:
    a0, a1, b0, b1 = polar
    return QuantumSettings(
        theta=theta,
        alice=np.array([bloch_vector(a0), bloch_vector(a1)]),
        bob=np.array([bloch_vector(b0), bloch_vector(b1)]),
    )


def chsh_value(settings: QuantumSettings) -> float:
    return float(np.max(scenario.chsh_symmetries(quantum_bipartite_correlators(settings, 2))))


def chsh_optimal_settings(theta: float) -> QuantumSettings:
    """
    cosθ|00⟩ + sinθ|11⟩ に対して CHSH を最大化する x–z 面内の測定を求める。

    Nelder-Mead を解析解 (A: Z, X / B: tan μ = sin2θ の ±μ) から始め、
    最終値を閉形式 2√(1 + sin²2θ) と突き合わせる。
    """
    if not 0.0 < theta < np.pi / 2:
        raise UsageError(f"theta must lie in (0, pi/2), got {theta}")
    mu = float(np.arctan(np.sin(2.0 * theta)))
    start = np.array([0.0, np.pi / 2, mu, -mu])

    def objective(polar):
        return -chsh_value(_settings_from_polar(theta, polar))

    result = minimize(objective, start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    expected = 2.0 * np.sqrt(1.0 + np.sin(2.0 * theta) ** 2)
    best = -float(result.fun)
    if abs(best - expected) > _CHSH_CHECK_TOL:
        raise NumericError(
            "CHSH maximization did not reach the closed-form optimum",
            diagnostics={"theta": theta, "value": best, "expected": expected, "message": str(result.message)},
        )
    return _settings_from_polar(theta, result.x)


def chained_settings(theta: float, m: int) -> QuantumSettings:
    """x–z 面に等間隔の m 測定。A は角 xπ/m、B は (y + 1/2)π/m (m=2 では CHSH の標準配置)。"""
    if m < scenario.MIN_SETTINGS:
        raise UsageError(f"m must be >= {scenario.MIN_SETTINGS}, got {m}")
    return QuantumSettings(
        theta=theta,
        alice=np.array([bloch_vector(np.pi * x / m) for x in range(m)]),
        bob=np.array([bloch_vector(np.pi * (y + 0.5) / m) for y in range(m)]),
    )


def random_settings(theta: float, m: int, rng: np.random.Generator) -> QuantumSettings:
    """各パーティの m 個の Bloch ベクトルを球面上の一様分布から引く。"""
    if m < scenario.MIN_SETTINGS:
        raise UsageError(f"m must be >= {scenario.MIN_SETTINGS}, got {m}")

    def draw() -> np.ndarray:
        v = rng.normal(size=(m, 3))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    return QuantumSettings(theta=theta, alice=draw(), bob=draw())


# ---------------------------------------------------------------------------
# Entanglement swapping network: A - (B1 B2) - C
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SwapSettings:
    """
    A と C は設定ごとの Bloch ベクトル ((2, 3))。
    中央の B_y は 2 量子ビット上の積観測量 (b_y¹·σ)⊗(b_y²·σ) で bob は (2, 2, 3)。
    """

    alice: np.ndarray
    bob: np.ndarray
    charlie: np.ndarray

    def __post_init__(self):
        _check_unit(self.alice, "alice")
        _check_unit(self.charlie, "charlie")
        bob = np.asarray(self.bob, dtype=float)
        if bob.shape != (2, 2, 3):
            raise UsageError(f"bob settings must have shape (2, 2, 3), got {bob.shape}")
        _check_unit(bob.reshape(4, 3), "bob")

    def bob_observable(self, y: int) -> np.ndarray:
        return np.kron(observable(self.bob[y][0]), observable(self.bob[y][1]))


def werner_swap_settings() -> SwapSettings:
    """不等式を最大に破る標準配置: A_x, C_z = (Z ± X)/√2, B_0 = Z⊗Z, B_1 = X⊗X。"""
    plus, minus = bloch_vector(np.pi / 4), bloch_vector(-np.pi / 4)
    z, x = bloch_vector(0.0), bloch_vector(np.pi / 2)
    return SwapSettings(
        alice=np.array([plus, minus]),
        bob=np.array([[z, z], [x, x]]),
        charlie=np.array([plus, minus]),
    )


def swap_settings_from_angles(angles: Sequence[float]) -> SwapSettings:
    """x–z 面内の 8 角 (A0, A1, C0, C1, B0 の 2 量子ビット, B1 の 2 量子ビット) から設定を作る。"""
    angles = np.asarray(angles, dtype=float)
    if angles.size != 8:
        raise UsageError(f"expected 8 measurement angles, got {angles.size}")
    a0, a1, c0, c1, b00, b01, b10, b11 = angles
    return SwapSettings(
        alice=np.array([bloch_vector(a0), bloch_vector(a1)]),
        bob=np.array([[bloch_vector(b00), bloch_vector(b01)], [bloch_vector(b10), bloch_vector(b11)]]),
        charlie=np.array([bloch_vector(c0), bloch_vector(c1)]),
    )


def _swap_correlators(rho_ab: np.ndarray, rho_bc: np.ndarray, settings: SwapSettings) -> TripartiteCorrelators:
    rho = np.kron(rho_ab, rho_bc)  # qubits: A, B1, B2, C
    a_obs = [observable(a) for a in settings.alice]
    c_obs = [observable(c) for c in settings.charlie]
    b_obs = [settings.bob_observable(y) for y in (0, 1)]
    abc = [
        _expectation(rho, np.kron(np.kron(a_obs[x], b_obs[y]), c_obs[z]))
        for x in (0, 1)
        for y in (0, 1)
        for z in (0, 1)
    ]
    rest = np.eye(8, dtype=complex)
    a_marg = [_expectation(rho, np.kron(a_obs[x], rest)) for x in (0, 1)]
    return TripartiteCorrelators(abc=np.clip(abc, -1.0, 1.0), a_marg=np.clip(a_marg, -1.0, 1.0))


def quantum_swap_correlators(v: float, settings: Optional[SwapSettings] = None) -> TripartiteCorrelators:
    """両ソースが Werner 状態 ρ(v) のネットワークの Born 則による相関子。"""
    rho = werner_state(v)
    return _swap_correlators(rho, rho, settings or werner_swap_settings())


def quantum_swap_nonmax(theta: float, settings: Optional[SwapSettings] = None) -> TripartiteCorrelators:
    """両ソースが cosθ|00⟩ + sinθ|11⟩ のネットワークの相関子。"""
    if not 0.0 < theta < np.pi / 2:
        raise UsageError(f"theta must lie in (0, pi/2), got {theta}")
    rho = pure_state(theta)
    return _swap_correlators(rho, rho, settings or werner_swap_settings())


def ij_violation(t: TripartiteCorrelators) -> float:
    i_value, j_value = scenario.ij_functionals(t)
    return scenario.bilocal_inequality_value(i_value, j_value)


def maximize_ij_violation(v: float, restarts: int = 4, seed: int = 0) -> Tuple[float, SwapSettings]:
    """√|I| + √|J| を 8 角について数値最大化する (標準配置の検算用)。"""
    rho = werner_state(v)
    rng = make_rng(seed)
    starts = [np.array([np.pi / 4, -np.pi / 4, np.pi / 4, -np.pi / 4, 0.0, 0.0, np.pi / 2, np.pi / 2])]
    starts += [rng.uniform(-np.pi, np.pi, size=8) for _ in range(max(restarts - 1, 0))]

    def objective(angles):
        return -ij_violation(_swap_correlators(rho, rho, swap_settings_from_angles(angles)))

    best = None
    for start in starts:
        result = minimize(objective, start, method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 8000})
        if best is None or result.fun < best.fun:
            best = result
    logger.debug("max sqrt|I|+sqrt|J| at v=%.4f: %.8f", v, -best.fun)
    return -float(best.fun), swap_settings_from_angles(best.x)
