"""
ラベル付きコーパスの生成・特徴量エンジニアリング・分割。

特徴量は生の相関子のまま保存し、2 次の多項式展開は学習時に行う。
永続化は repositories.dataset_repo が担当する。
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.preprocessing import PolynomialFeatures

from ..errors import DataError, DomainError, UsageError
from . import analytic_classifier, lp_engine, sampler, scenario

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "bellml-gen/1"
REGRESSION_SCENARIOS = ("bipartite", "bilocal4", "bilocal10")
TARGET_RANGES = {"bipartite": (0.0, 1.0), "bilocal4": (0.0, 0.5), "bilocal10": (0.0, 0.5)}
SUPPORTED_DEGREE = 2
_MAX_DOMAIN_RESAMPLES = 1000


@dataclass(frozen=True)
class Record:
    features: Tuple[float, ...]
    target: float


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise UsageError(f"train fraction must lie in (0, 1), got {self.train_fraction}")


@dataclass(eq=False)
class Dataset:
    """
    features: (n, k) の特徴量行列、targets: (n,) の目的変数 (分類ではクラスラベル)。
    metadata にはシナリオ・特徴量スキーマ・シード・生成器バージョン・実効設定などを持つ。
    """

    features: np.ndarray
    targets: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        schema = self.metadata.get("feature_schema")
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2:
            if self.features.size:
                raise DataError("features must be a 2-D array")
            self.features = np.zeros((0, len(schema or [])))
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if self.features.shape[0] != self.targets.size:
            raise DataError(f"{self.features.shape[0]} feature rows but {self.targets.size} targets")
        if schema is not None and len(schema) != self.features.shape[1]:
            raise DataError(f"feature schema has {len(schema)} names but records have width {self.features.shape[1]}")
        if self.task == "regression" and np.any(self.targets < 0.0):
            raise DataError("regression targets must be non-negative")

    def __len__(self) -> int:
        return self.targets.size

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def task(self) -> str:
        return self.metadata.get("task", "regression")

    @property
    def labels(self) -> np.ndarray:
        return self.targets.astype(int)

    @property
    def probe_rows(self) -> List[int]:
        return list(self.metadata.get("probe_rows", []))

    def records(self) -> Iterator[Record]:
        for row, target in zip(self.features, self.targets):
            yield Record(tuple(float(v) for v in row), float(target))

    def subset(self, rows: Sequence[int], keep_probes: bool = False) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        metadata = dict(self.metadata)
        if keep_probes:
            position = {int(r): i for i, r in enumerate(rows)}
            metadata["probe_rows"] = [position[r] for r in self.probe_rows if r in position]
        else:
            metadata["probe_rows"] = []
        return Dataset(self.features[rows], self.targets[rows], metadata)


def _base_metadata(scenario_name: str, m: int, seed: int, task: str, config: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
    return {
        "scenario": scenario_name,
        "m": m,
        "feature_schema": scenario.feature_schema(scenario_name, m),
        "seed": seed,
        "generator_version": GENERATOR_VERSION,
        "label_convention": analytic_classifier.LABEL_CONVENTION,
        "task": task,
        "target_range": list(TARGET_RANGES[scenario_name]) if scenario_name in TARGET_RANGES else None,
        "poly_degree": None,
        "probe_rows": [],
        "resample_count": 0,
        "config": dict(config or {}),
    }


def _regression_record(
    scenario_name: str,
    m: int,
    rng: np.random.Generator,
    nu_grid: int,
    max_attempts: int,
) -> Tuple[np.ndarray, float, sampler.AcceptanceStats, int, float]:
    """1 レコード分の (特徴量, 目的変数, 受理統計, 再サンプル数, オラクル時間)。"""
    stats = sampler.AcceptanceStats()
    if scenario_name == "bipartite":
        point = sampler.sample_bipartite(m, rng)
        started = time.perf_counter()
        target = lp_engine.nl_distance(point, m).nl
        return point.values.copy(), target, stats, 0, time.perf_counter() - started

    draw = sampler.sample_tripartite if scenario_name == "bilocal10" else sampler.sample_ij
    for resamples in range(_MAX_DOMAIN_RESAMPLES):
        point = draw(rng, max_attempts=max_attempts, stats=stats)
        started = time.perf_counter()
        try:
            target = lp_engine.nbl_distance(point, grid=nu_grid).nbl
        except DomainError:
            logger.debug("domain error on sampled point; resampling")
            continue
        return point.vector.copy(), target, stats, resamples, time.perf_counter() - started
    raise DomainError(f"gave up after {_MAX_DOMAIN_RESAMPLES} domain-error resamples")


def _regression_chunk(scenario_name, m, rngs, nu_grid, max_attempts):
    return [_regression_record(scenario_name, m, rng, nu_grid, max_attempts) for rng in rngs]


def gen_regression(
    scenario_name: str,
    n: int,
    seed: int,
    m: int = 2,
    nu_grid: int = lp_engine.DEFAULT_NU_GRID,
    max_attempts: int = sampler.DEFAULT_MAX_ATTEMPTS,
    workers: int = 1,
    config: Optional[Mapping[str, Any]] = None,
) -> Dataset:
    """
    NS サンプルと厳密オラクルの値から回帰用データセットを作る。

    レコード i は seed から切り出した i 番目のストリームだけを使うため、
    workers を変えても同じデータになる。
    """
    if scenario_name not in REGRESSION_SCENARIOS:
        raise UsageError(f"regression scenario must be one of {REGRESSION_SCENARIOS}, got {scenario_name!r}")
    if n < 0:
        raise UsageError(f"n must be non-negative, got {n}")
    metadata = _base_metadata(scenario_name, m, seed, "regression", config)
    width = len(metadata["feature_schema"])
    if n == 0:
        return Dataset(np.zeros((0, width)), np.zeros(0), metadata)

    rngs = sampler.spawn_rngs(seed, n)
    started = time.perf_counter()
    if workers > 1:
        chunks = [list(c) for c in np.array_split(np.arange(n), min(workers, n))]
        parts = Parallel(n_jobs=workers)(
            delayed(_regression_chunk)(scenario_name, m, [rngs[i] for i in chunk], nu_grid, max_attempts)
            for chunk in chunks
        )
        results = [r for part in parts for r in part]
    else:
        results = _regression_chunk(scenario_name, m, rngs, nu_grid, max_attempts)
    elapsed = time.perf_counter() - started

    features = np.array([r[0] for r in results])
    targets = np.array([max(0.0, r[1]) for r in results])
    acceptance = sampler.AcceptanceStats()
    for r in results:
        acceptance = acceptance.merge(r[2])
    oracle_times = np.array([r[4] for r in results])

    metadata["resample_count"] = int(sum(r[3] for r in results))
    metadata["throughput"] = {
        "records_per_second": float(n / elapsed) if elapsed > 0 else None,
        "oracle_seconds_median": float(np.median(oracle_times)),
        "oracle_seconds_mean": float(np.mean(oracle_times)),
        "oracle_seconds_max": float(np.max(oracle_times)),
    }
    if scenario_name != "bipartite":
        metadata["acceptance"] = {
            "attempts": acceptance.attempts,
            "accepted": acceptance.accepted,
            "rate": acceptance.rate,
        }
        logger.info("rejection sampling acceptance rate %.4f (%d/%d)", acceptance.rate, acceptance.accepted, acceptance.attempts)
    logger.info("generated %d %s records in %.1fs (median oracle %.4fs)", n, scenario_name, elapsed, np.median(oracle_times))
    return Dataset(features, targets, metadata)


def gen_classification(
    n: int,
    seed: int,
    batch: int = 10_000,
    config: Optional[Mapping[str, Any]] = None,
) -> Dataset:
    """
    [-1,1]^4 の一様サンプルを classify で振り分け、各クラス n/3 件ずつ集める。
    各クラス領域の体積比 (観測値) を metadata に残す。
    """
    if n < 0 or n % 3 != 0:
        raise UsageError(f"classification n must be a non-negative multiple of 3, got {n}")
    per_class = n // 3
    rng = sampler.make_rng(seed)
    buckets: List[List[np.ndarray]] = [[], [], []]
    filled = [0, 0, 0]
    draws = 0
    seen = np.zeros(3, dtype=int)
    while min(filled) < per_class:
        points = rng.uniform(-1.0, 1.0, size=(batch, 4))
        labels = analytic_classifier.classify_array(points)
        draws += batch
        seen += np.bincount(labels, minlength=3)
        for label in range(3):
            need = per_class - filled[label]
            if need <= 0:
                continue
            chosen = points[labels == label][:need]
            buckets[label].append(chosen)
            filled[label] += chosen.shape[0]

    features = np.vstack([np.vstack(b) if b else np.zeros((0, 4)) for b in buckets])
    targets = np.repeat(np.arange(3, dtype=float), per_class)
    order = rng.permutation(n)
    metadata = _base_metadata("classification", 2, seed, "classification", config)
    metadata["volume_fractions"] = {
        cls.name.lower(): (float(seen[int(cls)] / draws) if draws else None)
        for cls in analytic_classifier.CorrelationClass
    }
    metadata["class_counts"] = [per_class] * 3
    logger.info("bucketed %d classification records from %d uniform draws", n, draws)
    return Dataset(features[order], targets[order], metadata)


def expand_features(features: np.ndarray, degree: int = SUPPORTED_DEGREE) -> np.ndarray:
    """定数項を除いた次数 degree 以下の全単項式 ([a, b] → [a, b, a², ab, b²])。"""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    poly = PolynomialFeatures(degree=degree, include_bias=False)
    if features.shape[0] == 0:
        width = poly.fit(np.zeros((1, features.shape[1]))).n_output_features_
        return np.zeros((0, width))
    return poly.fit_transform(features)


def expanded_names(names: Sequence[str], degree: int = SUPPORTED_DEGREE) -> List[str]:
    poly = PolynomialFeatures(degree=degree, include_bias=False).fit(np.zeros((1, len(names))))
    return [str(name) for name in poly.get_feature_names_out(list(names))]


def poly_features(d: Dataset, degree: int = SUPPORTED_DEGREE) -> Dataset:
    if degree != SUPPORTED_DEGREE:
        raise UsageError(f"only degree {SUPPORTED_DEGREE} feature expansion is supported, got {degree}")
    if d.metadata.get("poly_degree"):
        raise UsageError("dataset features are already expanded")
    metadata = dict(d.metadata)
    metadata["poly_degree"] = degree
    metadata["raw_feature_schema"] = list(d.metadata.get("feature_schema", []))
    metadata["feature_schema"] = expanded_names(metadata["raw_feature_schema"], degree)
    return Dataset(expand_features(d.features, degree), d.targets.copy(), metadata)


def split(d: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset]:
    """
    プローブ行を除いたレコードをシャッフルして train/test に分ける。
    同じ seed なら同じ分割になる。
    """
    probe_set = set(d.probe_rows)
    rows = np.array([i for i in range(len(d)) if i not in probe_set], dtype=int)
    if rows.size < 4:
        raise UsageError(f"need at least 4 non-probe records to split, got {rows.size}")
    permuted = rows[sampler.make_rng(spec.seed).permutation(rows.size)]
    n_train = int(round(rows.size * spec.train_fraction))
    n_train = min(max(n_train, 1), rows.size - 1)
    return d.subset(permuted[:n_train]), d.subset(permuted[n_train:])


def probes(d: Dataset) -> Dataset:
    return d.subset(d.probe_rows, keep_probes=True)


def _werner_probe(scenario_name: str, v: float, nu_grid: int) -> Tuple[np.ndarray, float]:
    t = sampler.quantum_swap_correlators(v)
    point = scenario.ij_point(t) if scenario_name == "bilocal4" else t
    return point.vector.copy(), lp_engine.nbl_distance(point, grid=nu_grid).nbl


def _chsh_probe(theta: float) -> Tuple[np.ndarray, float]:
    c = sampler.quantum_bipartite_correlators(sampler.chsh_optimal_settings(theta), 2)
    return c.values.copy(), lp_engine.nl_distance(c, 2).nl


def add_probes(d: Dataset, values: Sequence[float], nu_grid: int = lp_engine.DEFAULT_NU_GRID) -> Dataset:
    """
    既知解をもつ量子プローブ行を末尾に追加し、metadata で印を付ける。

    bilocal では values を Werner 状態の可視度 v、bipartite (m=2) では状態パラメータ θ とみなす。
    """
    scenario_name = d.metadata.get("scenario")
    if d.metadata.get("poly_degree"):
        raise UsageError("probes must be added before feature expansion")
    rows, targets, expected = [], [], []
    for value in values:
        if scenario_name in ("bilocal4", "bilocal10"):
            row, target = _werner_probe(scenario_name, float(value), nu_grid)
            expected.append(max(0.0, float(value) ** 2 - 0.5))
        elif scenario_name == "bipartite" and d.metadata.get("m") == 2:
            row, target = _chsh_probe(float(value))
            expected.append(None)
        else:
            raise UsageError(f"probes are not defined for scenario {scenario_name!r} with m={d.metadata.get('m')}")
        rows.append(row)
        targets.append(max(0.0, target))

    width = d.width
    base = d.features if len(d) else np.zeros((0, width))
    features = np.vstack([base, np.array(rows).reshape(len(rows), width)])
    metadata = dict(d.metadata)
    metadata["probe_rows"] = d.probe_rows + list(range(len(d), len(d) + len(rows)))
    metadata["probes"] = list(d.metadata.get("probes", [])) + [
        {"parameter": float(v), "expected": e} for v, e in zip(values, expected)
    ]
    return Dataset(features, np.concatenate([d.targets, targets]), metadata)


QUANTUM_SETTINGS = ("chsh", "chained", "random")


def gen_quantum_bipartite(
    thetas: Sequence[float],
    config: Optional[Mapping[str, Any]] = None,
    m: int = 2,
    settings: Optional[str] = None,
    seed: int = 0,
) -> Dataset:
    """
    cosθ|00⟩ + sinθ|11⟩ への射影測定で作る量子テスト集合。目的変数は NL オラクルの値。

    settings:
        chsh: CHSH 最適測定 (m=2 のみ、m=2 の既定)
        chained: x–z 面に等間隔の m 測定 (m>=3 の既定)
        random: 球面上で一様な測定 (seed で再現)
    """
    settings = settings or ("chsh" if m == 2 else "chained")
    if settings not in QUANTUM_SETTINGS:
        raise UsageError(f"settings must be one of {QUANTUM_SETTINGS}, got {settings!r}")
    if settings == "chsh" and m != 2:
        raise UsageError(f"CHSH-optimal settings need m=2, got m={m}")
    rng = sampler.make_rng(seed)
    rows = []
    for theta in thetas:
        theta = float(theta)
        if settings == "chsh":
            rows.append(_chsh_probe(theta))
            continue
        q = sampler.chained_settings(theta, m) if settings == "chained" else sampler.random_settings(theta, m, rng)
        c = sampler.quantum_bipartite_correlators(q, m)
        rows.append((c.values.copy(), lp_engine.nl_distance(c, m).nl))
    metadata = _base_metadata("bipartite", m, seed, "regression", config)
    metadata["source"] = f"quantum-{settings}"
    metadata["parameters"] = [float(t) for t in thetas]
    features = np.array([r[0] for r in rows]).reshape(len(rows), m * m)
    return Dataset(features, np.array([max(0.0, r[1]) for r in rows]), metadata)


def gen_quantum_bilocal(
    scenario_name: str,
    visibilities: Sequence[float],
    nu_grid: int = lp_engine.DEFAULT_NU_GRID,
    config: Optional[Mapping[str, Any]] = None,
) -> Dataset:
    """Werner 状態の entanglement swapping から得た bilocal テスト集合。"""
    if scenario_name not in ("bilocal4", "bilocal10"):
        raise UsageError(f"Werner sweep needs a bilocal scenario, got {scenario_name!r}")
    rows = [_werner_probe(scenario_name, float(v), nu_grid) for v in visibilities]
    metadata = _base_metadata(scenario_name, 2, 0, "regression", config)
    metadata["source"] = "quantum-werner"
    metadata["parameters"] = [float(v) for v in visibilities]
    width = len(metadata["feature_schema"])
    features = np.array([r[0] for r in rows]).reshape(len(rows), width)
    return Dataset(features, np.array([max(0.0, r[1]) for r in rows]), metadata)
