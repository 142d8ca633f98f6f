"""
numpy だけで実装した多層パーセプトロン (ReLU 隠れ層、Adam、早期終了)。

回帰は MSE、分類は softmax 出力と交差エントロピーで学習する。
"""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError, TrainingError, UsageError
from .dataset import Dataset
from .sampler import spawn_rngs

logger = logging.getLogger(__name__)

GRID_LAYERS = (2, 3, 4, 5)
GRID_WIDTHS = tuple(range(100, 501, 50))
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class MLPConfig:
    hidden_layers: int = 3
    width: int = 200
    learning_rate: float = 1e-5
    activation: str = "relu"
    loss: Optional[str] = None
    batch_size: int = 200
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    task: str = "regression"
    output_range: Optional[Tuple[float, float]] = (0.0, 1.0)
    n_classes: int = 3

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise ConfigurationError(f"task must be regression or classification, got {self.task!r}")
        if self.loss is None:
            self.loss = "mse" if self.task == "regression" else "cross_entropy"
        expected_loss = "mse" if self.task == "regression" else "cross_entropy"
        if self.loss != expected_loss:
            raise ConfigurationError(f"{self.task} models are trained with {expected_loss}, got {self.loss!r}")
        if self.activation != "relu":
            raise ConfigurationError(f"only relu activation is supported, got {self.activation!r}")
        if self.hidden_layers < 1 or self.width < 1:
            raise ConfigurationError("hidden_layers and width must be positive")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("batch_size, max_epochs and patience must be positive")
        if self.output_range is not None:
            low, high = self.output_range
            if not low < high:
                raise ConfigurationError(f"invalid output range {self.output_range}")
            self.output_range = (float(low), float(high))
        if self.task == "classification" and self.n_classes < 2:
            raise ConfigurationError("classification needs at least 2 classes")

    def check_grid_shape(self) -> None:
        """グリッド構成の形 (層数 2-5、幅 100-500 の 50 刻み) を満たしているか。"""
        if self.hidden_layers not in GRID_LAYERS:
            raise ConfigurationError(f"hidden layer count must be in {GRID_LAYERS}, got {self.hidden_layers}")
        if self.width not in GRID_WIDTHS:
            raise ConfigurationError(f"width must be a multiple of 50 in [100, 500], got {self.width}")

    @property
    def output_width(self) -> int:
        return 1 if self.task == "regression" else self.n_classes

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["output_range"] = list(self.output_range) if self.output_range is not None else None
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MLPConfig":
        data = dict(data)
        if data.get("output_range") is not None:
            data["output_range"] = tuple(data["output_range"])
        return cls(**data)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=1, keepdims=True)


@dataclass(eq=False)
class MLPModel:
    config: MLPConfig
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    history: Dict[str, List[float]] = field(default_factory=lambda: {"train_loss": [], "val_loss": []})
    feature_schema: Optional[List[str]] = None

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise UsageError("weights and biases must be non-empty lists of equal length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise UsageError(f"layer {i}: bias shape {b.shape} does not match weights {w.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise UsageError(f"layer {i}: input width {w.shape[0]} does not chain from {self.weights[i - 1].shape[1]}")
        if self.weights[-1].shape[1] != self.config.output_width:
            raise UsageError(f"output width {self.weights[-1].shape[1]} does not match task {self.config.task}")

    @classmethod
    def initialize(cls, config: MLPConfig, input_width: int, feature_schema: Optional[List[str]] = None) -> "MLPModel":
        """He 初期化 (N(0, 2/fan_in))。バイアスは 0。"""
        rng = spawn_rngs(config.seed, 2)[0]
        widths = [input_width] + [config.width] * config.hidden_layers + [config.output_width]
        weights = [rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)) for fan_in, fan_out in zip(widths[:-1], widths[1:])]
        biases = [np.zeros(fan_out) for fan_out in widths[1:]]
        return cls(config=config, weights=weights, biases=biases, feature_schema=feature_schema)

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[0]

    def forward(self, x: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        """各層の前活性 z と活性 a を返す (activations[0] は入力そのもの)。"""
        activations = [x]
        pre_activations = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ w + b
            pre_activations.append(z)
            last = i == len(self.weights) - 1
            activations.append(z if last else relu(z))
        return pre_activations, activations

    def _check_width(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.input_width:
            raise UsageError(f"model expects {self.input_width} features, got {x.shape[1]}")
        return x

    def output(self, x: np.ndarray) -> np.ndarray:
        """クランプ前の出力 (回帰は (n,)、分類はスコア (n, k))。"""
        _, activations = self.forward(self._check_width(x))
        out = activations[-1]
        if self.config.task == "classification":
            return softmax(out)
        return out[:, 0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = self.output(x)
        if self.config.task == "regression" and self.config.output_range is not None:
            low, high = self.config.output_range
            out = np.clip(out, low, high)
        return out

    def predict_labels(self, x: np.ndarray) -> np.ndarray:
        if self.config.task != "classification":
            raise UsageError("predict_labels needs a classification model")
        return np.argmax(self.output(x), axis=1)

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        return self.loss_and_gradients(x, y, need_gradients=False)[0]

    def loss_and_gradients(
        self, x: np.ndarray, y: np.ndarray, need_gradients: bool = True
    ) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
        """損失と (重み, バイアス) の勾配。回帰は J = (1/n)Σ(ŷ - y)²。"""
        x = self._check_width(x)
        n = x.shape[0]
        pre_activations, activations = self.forward(x)
        out = activations[-1]
        if self.config.task == "regression":
            residual = out[:, 0] - np.asarray(y, dtype=float)
            loss = float(np.mean(residual ** 2))
            delta = (2.0 / n) * residual[:, None]
        else:
            labels = np.asarray(y, dtype=int)
            probs = softmax(out)
            picked = np.clip(probs[np.arange(n), labels], 1e-300, None)
            loss = float(-np.mean(np.log(picked)))
            delta = probs.copy()
            delta[np.arange(n), labels] -= 1.0
            delta /= n
        if not need_gradients:
            return loss, [], []

        grads_w: List[np.ndarray] = [None] * len(self.weights)
        grads_b: List[np.ndarray] = [None] * len(self.biases)
        for i in reversed(range(len(self.weights))):
            grads_w[i] = activations[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i:
                delta = (delta @ self.weights[i].T) * (pre_activations[i - 1] > 0.0)
        return loss, grads_w, grads_b


class _Adam:
    def __init__(self, model: MLPModel, learning_rate: float):
        self.learning_rate = learning_rate
        self.step_count = 0
        params = model.weights + model.biases
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, model: MLPModel, grads: List[np.ndarray]) -> None:
        self.step_count += 1
        params = model.weights + model.biases
        correction1 = 1.0 - ADAM_BETA1 ** self.step_count
        correction2 = 1.0 - ADAM_BETA2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPS)


def fit_arrays(
    config: MLPConfig,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: Optional[np.ndarray] = None,
    y_val: Optional[np.ndarray] = None,
    feature_schema: Optional[List[str]] = None,
) -> MLPModel:
    """
    ミニバッチ Adam で学習し、検証損失が最良だった重みを返す。
    検証集合が空のときは学習損失で早期終了を判定する。
    回帰では出力層を重み 0、バイアス = 目的変数の平均から始める (定数関数から学習を始める)。
    """
    x_train = np.atleast_2d(np.asarray(x_train, dtype=float))
    y_train = np.asarray(y_train, dtype=float).ravel()
    if x_train.shape[0] == 0:
        raise UsageError("training set is empty")
    has_val = x_val is not None and len(x_val) > 0
    model = MLPModel.initialize(config, x_train.shape[1], feature_schema)
    if config.task == "regression":
        model.weights[-1] = np.zeros_like(model.weights[-1])
        model.biases[-1] = np.full_like(model.biases[-1], float(np.mean(y_train)))
    optimizer = _Adam(model, config.learning_rate)
    shuffle_rng = spawn_rngs(config.seed, 2)[1]
    history: Dict[str, List[float]] = {"train_loss": [], "val_loss": []}

    best_loss = np.inf
    best_params = (copy.deepcopy(model.weights), copy.deepcopy(model.biases))
    stale = 0
    n = x_train.shape[0]
    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            _, grads_w, grads_b = model.loss_and_gradients(x_train[batch], y_train[batch])
            optimizer.step(model, grads_w + grads_b)

        train_loss = model.loss(x_train, y_train)
        val_loss = model.loss(x_val, y_val) if has_val else train_loss
        history["train_loss"].append(train_loss)
        history["val_loss"].append(val_loss)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingError(f"loss diverged at epoch {epoch + 1}", history=history)
        logger.debug("epoch %d train=%.6g val=%.6g", epoch + 1, train_loss, val_loss)

        if val_loss < best_loss:
            best_loss = val_loss
            best_params = (copy.deepcopy(model.weights), copy.deepcopy(model.biases))
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.debug("early stop at epoch %d (best val %.6g)", epoch + 1, best_loss)
                break

    model.weights, model.biases = best_params
    model.history = history
    return model


def train_mlp(config: MLPConfig, train: Dataset, val: Optional[Dataset] = None) -> MLPModel:
    """Dataset 同士で学習する。特徴量スキーマが一致しない場合は UsageError。"""
    schema = train.metadata.get("feature_schema")
    if val is not None and len(val) and val.metadata.get("feature_schema") != schema:
        raise UsageError("train and validation datasets have different feature schemas")
    if (config.task == "classification") != (train.task == "classification"):
        raise UsageError(f"config task {config.task!r} does not match dataset task {train.task!r}")
    return fit_arrays(
        config,
        train.features,
        train.targets,
        val.features if val is not None else None,
        val.targets if val is not None else None,
        feature_schema=list(schema) if schema is not None else None,
    )
