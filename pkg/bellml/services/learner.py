"""
MLP グリッド (36 構成) の学習、多項式ベースラインによるフィルタ、ブレンダーによる統合、評価指標。

メンバーは 2 次展開済みの特徴量を受け取り、EnsembleModel は生の特徴量を受け取って
内部で同じ展開を適用する。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.special import comb
from sklearn.ensemble import ExtraTreesClassifier, GradientBoostingRegressor
from sklearn.linear_model import Ridge
from sklearn.metrics import accuracy_score, confusion_matrix, mean_absolute_error
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import PolynomialFeatures

from ..errors import EmptyEnsembleError, TrainingError, UsageError
from . import dataset as ds
from .analytic_classifier import CorrelationClass
from .dataset import Dataset
from .mlp import GRID_LAYERS, GRID_WIDTHS, MLPConfig, MLPModel, fit_arrays

logger = logging.getLogger(__name__)

BASELINE_RIDGE = 1e-8
CLASS_NAMES = [cls.name.lower().replace("_", "-") for cls in CorrelationClass]


@dataclass(eq=False)
class Metrics:
    mae: Optional[float] = None
    accuracy: Optional[float] = None
    confusion: Optional[np.ndarray] = None
    n: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mae": self.mae,
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist() if self.confusion is not None else None,
            "n": self.n,
        }


def _member_outputs(members: Sequence[MLPModel], task: str, expanded: np.ndarray) -> np.ndarray:
    """ブレンダーの入力行列 (回帰: n × メンバー数, 分類: n × メンバー数·3)。"""
    if task == "regression":
        return np.column_stack([member.predict(expanded) for member in members])
    return np.hstack([member.output(expanded) for member in members])


@dataclass(eq=False)
class EnsembleModel:
    """
    フィルタを通過したメンバーと、その予測を入力とするブレンダー。
    ledger にはグリッド全体の構成・指標・採否を残す。
    """

    members: List[MLPModel]
    blender: Any
    task: str
    poly_degree: int = ds.SUPPORTED_DEGREE
    output_range: Optional[Tuple[float, float]] = None
    ledger: List[Dict[str, Any]] = field(default_factory=list)
    baseline_mae: Optional[float] = None
    raw_feature_schema: Optional[List[str]] = None

    def __post_init__(self):
        if not self.members:
            raise EmptyEnsembleError("an ensemble needs at least one member")
        expected = self.blender_width
        fitted = getattr(self.blender, "n_features_in_", expected)
        if fitted != expected:
            raise UsageError(f"blender was fitted on {fitted} inputs, members provide {expected}")

    @property
    def blender_width(self) -> int:
        per_member = 1 if self.task == "regression" else self.members[0].config.n_classes
        return per_member * len(self.members)

    def member_outputs(self, expanded: np.ndarray) -> np.ndarray:
        return _member_outputs(self.members, self.task, expanded)

    def predict(self, raw_features: np.ndarray) -> np.ndarray:
        return ensemble_predict(self, raw_features)


def grid_configs(base: MLPConfig) -> List[MLPConfig]:
    """層数 {2..5} × 幅 {100..500} の 36 構成。初期化シードは構成ごとに独立。"""
    seeds = np.random.SeedSequence(base.seed).generate_state(len(GRID_LAYERS) * len(GRID_WIDTHS))
    configs = []
    for index, (layers, width) in enumerate((l, w) for l in GRID_LAYERS for w in GRID_WIDTHS):
        cfg = replace(base, hidden_layers=layers, width=width, seed=int(seeds[index]))
        cfg.check_grid_shape()
        configs.append(cfg)
    return configs


def _train_member(cfg: MLPConfig, train: Dataset, val: Dataset):
    try:
        return fit_arrays(
            cfg, train.features, train.targets, val.features, val.targets,
            feature_schema=train.metadata.get("feature_schema"),
        ), None
    except TrainingError as exc:
        return None, {"hidden_layers": cfg.hidden_layers, "width": cfg.width, "seed": cfg.seed, "error": str(exc)}


def train_grid(
    train: Dataset,
    val: Dataset,
    task: str,
    base: Optional[MLPConfig] = None,
    workers: int = 1,
    configs: Optional[Sequence[MLPConfig]] = None,
) -> Tuple[List[MLPModel], List[Dict[str, Any]]]:
    """
    36 個の MLP を独立に学習する。個別の失敗は failures に記録し、
    1 つも残らない場合だけ TrainingError を送出する。
    """
    base = base or MLPConfig(task=task)
    if base.task != task:
        base = replace(base, task=task, loss=None)
    configs = list(configs) if configs is not None else grid_configs(base)
    results = Parallel(n_jobs=workers)(delayed(_train_member)(cfg, train, val) for cfg in configs)
    models = [model for model, _ in results if model is not None]
    failures = [failure for _, failure in results if failure is not None]
    for failure in failures:
        logger.warning("grid member %dx%d failed: %s", failure["hidden_layers"], failure["width"], failure["error"])
    if not models:
        raise TrainingError("every grid member failed to train")
    logger.info("trained %d/%d grid members", len(models), len(configs))
    return models, failures


def baseline_degree_for(width: int, degree: int, max_features: int) -> int:
    """展開後の列数が上限を超えるなら次数 2 に落とす。"""
    expanded = int(comb(width + degree, degree, exact=True)) - 1
    if expanded > max_features and degree > 2:
        logger.warning(
            "degree-%d baseline needs %d features (cap %d); falling back to degree 2", degree, expanded, max_features
        )
        return 2
    return degree


def fit_poly_baseline(train: Dataset, test: Dataset, degree: int = 4, max_features: int = 5000) -> float:
    """生の特徴量の次数 degree 多項式を最小二乗 (ridge 1e-8) で当て、test の MAE を返す。"""
    if train.task != "regression":
        raise UsageError("the polynomial baseline is defined for regression datasets")
    if not len(test):
        raise UsageError("baseline test set is empty")
    degree = baseline_degree_for(train.width, degree, max_features)
    model = make_pipeline(PolynomialFeatures(degree=degree, include_bias=False), Ridge(alpha=BASELINE_RIDGE))
    model.fit(train.features, train.targets)
    mae = float(mean_absolute_error(test.targets, model.predict(test.features)))
    logger.info("degree-%d polynomial baseline MAE %.6g", degree, mae)
    return mae


def metrics_from_predictions(task: str, y_true: np.ndarray, y_pred: np.ndarray) -> Metrics:
    y_true = np.asarray(y_true)
    if y_true.size == 0:
        raise UsageError("cannot evaluate on an empty set")
    if task == "regression":
        return Metrics(mae=float(mean_absolute_error(y_true, y_pred)), n=int(y_true.size))
    labels = list(range(len(CLASS_NAMES)))
    y_true = y_true.astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    return Metrics(
        accuracy=float(accuracy_score(y_true, y_pred)),
        confusion=confusion_matrix(y_true, y_pred, labels=labels),
        n=int(y_true.size),
    )


def evaluate(model, test: Dataset) -> Metrics:
    """
    MLPModel には展開済み、EnsembleModel には生の特徴量をもつ test を渡す。
    回帰は MAE、分類は accuracy と 3×3 混同行列。
    """
    if not len(test):
        raise UsageError("test set is empty")
    if isinstance(model, EnsembleModel):
        predictions = ensemble_predict(model, test.features)
        task = model.task
    else:
        task = model.config.task
        predictions = model.predict_labels(test.features) if task == "classification" else model.predict(test.features)
    return metrics_from_predictions(task, test.targets, predictions)


def filter_members(
    evaluated: Sequence[Tuple[MLPModel, Metrics]],
    task: str,
    baseline_mae: Optional[float] = None,
    accuracy_floor: float = 0.985,
    ratio: float = 0.7,
) -> List[Tuple[MLPModel, Metrics]]:
    """
    回帰: MAE < ratio × ベースライン MAE のメンバーを残す。
    分類: accuracy ≥ accuracy_floor のメンバーを残す。
    """
    if task == "regression":
        if baseline_mae is None:
            raise UsageError("regression filtering needs the baseline MAE")
        threshold = ratio * baseline_mae
        kept = [(m, s) for m, s in evaluated if s.mae < threshold]
    else:
        kept = [(m, s) for m, s in evaluated if s.accuracy >= accuracy_floor]
    logger.info("%d/%d members passed the filter", len(kept), len(evaluated))
    if not kept:
        raise EmptyEnsembleError(
            "no grid member passed the filter; generate more data or train for more epochs"
        )
    return kept


def train_blender(
    members: Sequence[MLPModel],
    blend_train: Dataset,
    task: str,
    trees: int = 100,
    seed: int = 0,
    poly_degree: int = ds.SUPPORTED_DEGREE,
    ledger: Optional[List[Dict[str, Any]]] = None,
    baseline_mae: Optional[float] = None,
) -> EnsembleModel:
    """
    メンバーの予測行列の上にブレンダーを学習する。blend_train は生の特徴量で、
    メンバーの学習に使っていない fold であること。
    """
    if not members:
        raise EmptyEnsembleError("an ensemble needs at least one member")
    if not len(blend_train):
        raise UsageError("blending fold is empty")
    if task == "regression":
        blender = GradientBoostingRegressor(n_estimators=trees, max_depth=3, learning_rate=0.1, random_state=seed)
    else:
        blender = ExtraTreesClassifier(n_estimators=trees, max_depth=None, random_state=seed)
    inputs = _member_outputs(members, task, ds.expand_features(blend_train.features, poly_degree))
    targets = blend_train.targets if task == "regression" else blend_train.labels
    blender.fit(inputs, targets)
    return EnsembleModel(
        members=list(members),
        blender=blender,
        task=task,
        poly_degree=poly_degree,
        output_range=members[0].config.output_range if task == "regression" else None,
        ledger=list(ledger or []),
        baseline_mae=baseline_mae,
        raw_feature_schema=blend_train.metadata.get("feature_schema"),
    )


def ensemble_predict(ensemble: EnsembleModel, raw_features: np.ndarray) -> np.ndarray:
    raw = np.atleast_2d(np.asarray(raw_features, dtype=float))
    if ensemble.raw_feature_schema is not None and raw.shape[1] != len(ensemble.raw_feature_schema):
        raise UsageError(f"ensemble expects {len(ensemble.raw_feature_schema)} raw features, got {raw.shape[1]}")
    inputs = ensemble.member_outputs(ds.expand_features(raw, ensemble.poly_degree))
    out = ensemble.blender.predict(inputs)
    if ensemble.task == "regression":
        out = np.asarray(out, dtype=float)
        if ensemble.output_range is not None:
            out = np.clip(out, *ensemble.output_range)
        return out
    return np.asarray(out).astype(int)


def predict_labels(model: MLPModel, features: np.ndarray) -> np.ndarray:
    return model.predict_labels(features)


# ---------------------------------------------------------------------------
# learning curve
# ---------------------------------------------------------------------------

def learning_curve(
    pool: Dataset,
    test: Dataset,
    sizes: Sequence[int],
    config: MLPConfig,
    val_fraction: float = 0.1,
) -> List[Tuple[int, float]]:
    """
    学習集合のサイズごとに同じ構成を学習し (n, 誤差) を返す。
    誤差は回帰では MAE、分類では 1 - accuracy。pool は事前にシャッフル済みであること。
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise UsageError("at least one training size is required")
    if any(s <= 0 for s in sizes):
        raise UsageError("training sizes must be positive")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise UsageError("training sizes must be strictly ascending without repeats")
    if sizes[-1] > len(pool):
        raise UsageError(f"largest size {sizes[-1]} exceeds the {len(pool)} available records")

    expanded_test = ds.poly_features(test)
    curve = []
    for size in sizes:
        n_val = int(round(size * val_fraction))
        subset = pool.subset(np.arange(size))
        fit_part = ds.poly_features(subset.subset(np.arange(size - n_val)))
        val_part = ds.poly_features(subset.subset(np.arange(size - n_val, size)))
        model = fit_arrays(config, fit_part.features, fit_part.targets, val_part.features, val_part.targets)
        metrics = evaluate(model, expanded_test)
        error = metrics.mae if config.task == "regression" else 1.0 - metrics.accuracy
        logger.info("learning curve n=%d error=%.6g", size, error)
        curve.append((size, float(error)))
    return curve


def detect_plateau(curve: Sequence[Tuple[int, float]], rel_tol: float = 0.05) -> Optional[int]:
    """相対改善が以降ずっと rel_tol 未満になる最初のサイズ (なければ None)。"""
    for i in range(len(curve) - 1):
        improvements = [
            (curve[j - 1][1] - curve[j][1]) / curve[j - 1][1] if curve[j - 1][1] > 0 else 0.0
            for j in range(i + 1, len(curve))
        ]
        if all(imp < rel_tol for imp in improvements):
            return int(curve[i][0])
    return None


# ---------------------------------------------------------------------------
# report tables
# ---------------------------------------------------------------------------

def regression_table(
    member_maes: Sequence[float],
    blend_mae: float,
    baseline_mae: Optional[float] = None,
) -> pd.DataFrame:
    """手法ごとの test MAE ("Typical MLP" はメンバー MAE の中央値)。"""
    rows = []
    if baseline_mae is not None:
        rows.append(("Polynomial fit", baseline_mae))
    rows.append(("Typical MLP", float(np.median(member_maes))))
    rows.append(("Best MLP", float(np.min(member_maes))))
    rows.append(("Blending", blend_mae))
    return pd.DataFrame(rows, columns=["method", "mae"])


def confusion_table(confusion: np.ndarray) -> pd.DataFrame:
    """行が真のクラス、列が予測クラス。"""
    return pd.DataFrame(
        np.asarray(confusion, dtype=int),
        index=pd.Index(CLASS_NAMES, name="true"),
        columns=pd.Index(CLASS_NAMES, name="predicted"),
    )
