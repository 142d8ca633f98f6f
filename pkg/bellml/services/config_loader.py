"""
YAML 定義の実行設定 (RunConfig) を読み込み、スキーマ検証と正規化を行うユーティリティ。
config/defaults.yaml を土台に、ファイル・CLI の上書きを同じ規則で検証する。
"""
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import yaml

DEFAULTS_PATH = Path(__file__).resolve().parents[1] / "config" / "defaults.yaml"

SCENARIOS = ("bipartite", "bilocal4", "bilocal10", "classification")
TRANSFER_SETTINGS = ("auto", "chsh", "chained", "random")


def _positive(v) -> bool:
    return v > 0


def _non_negative(v) -> bool:
    return v >= 0


def _fraction(v) -> bool:
    return 0.0 < v < 1.0


# key -> (型, 追加チェック, チェック失敗時の説明)
_SCHEMA: Dict[str, Tuple[type, Optional[Callable[[Any], bool]], str]] = {
    "scenario": (str, lambda v: v in SCENARIOS, f"one of {SCENARIOS}"),
    "m": (int, lambda v: 2 <= v <= 6, "an integer in [2, 6]"),
    "n": (int, _non_negative, "a non-negative integer"),
    "seed": (int, _non_negative, "a non-negative integer"),
    "workers": (int, _non_negative, "a non-negative integer"),
    "nu_grid": (int, lambda v: v >= 2, "an integer >= 2"),
    "max_attempts": (int, _positive, "a positive integer"),
    "train_fraction": (float, _fraction, "a fraction in (0, 1)"),
    "blend_fraction": (float, _fraction, "a fraction in (0, 1)"),
    "val_fraction": (float, _fraction, "a fraction in (0, 1)"),
    "poly_degree": (int, lambda v: v == 2, "2 (only supported degree)"),
    "learning_rate": (float, _positive, "a positive number"),
    "batch_size": (int, _positive, "a positive integer"),
    "max_epochs": (int, _positive, "a positive integer"),
    "patience": (int, _positive, "a positive integer"),
    "filter_ratio": (float, _positive, "a positive number"),
    "accuracy_floor": (float, lambda v: 0.0 <= v <= 1.0, "a number in [0, 1]"),
    "baseline_degree": (int, lambda v: 1 <= v <= 6, "an integer in [1, 6]"),
    "baseline_max_features": (int, _positive, "a positive integer"),
    "blender_trees": (int, _positive, "a positive integer"),
    "search_restarts": (int, _positive, "a positive integer"),
    "search_certify": (int, _positive, "a positive integer"),
    "bench_points": (int, _non_negative, "a non-negative integer"),
    "transfer_points": (int, _positive, "a positive integer"),
    "transfer_settings": (str, lambda v: v in TRANSFER_SETTINGS, f"one of {TRANSFER_SETTINGS}"),
}


class ValidationResult:
    """バリデーションの結果を運ぶシンプルなコンテナ。"""
    def __init__(self, success: bool = True, config: Optional[Dict] = None, errors: Optional[List[str]] = None):
        self.success = success
        self.config = config if config is not None else {}
        self.errors = errors if errors is not None else []


def known_keys() -> List[str]:
    return list(_SCHEMA.keys())


def _read_yaml(yaml_path: str) -> Tuple[Any, List[str]]:
    if not os.path.exists(yaml_path):
        return None, [f"File not found: {yaml_path}"]
    try:
        with open(yaml_path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f), []
    except yaml.YAMLError as e:
        return None, [f"YAML parse error: {str(e)}"]
    except Exception as e:
        return None, [f"Error reading file: {str(e)}"]


def _coerce(key: str, value: Any) -> Tuple[Any, Optional[str]]:
    """1 項目を型変換・検証し、(値, エラーメッセージ) を返す。"""
    expected, check, description = _SCHEMA[key]
    if isinstance(value, bool):
        return None, f"'{key}': must be {description}, got {value!r}"
    try:
        if expected is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            coerced = int(value)
        elif expected is float:
            coerced = float(value)
        else:
            if not isinstance(value, str):
                raise ValueError(value)
            coerced = value
    except (TypeError, ValueError):
        return None, f"'{key}': must be {description}, got {value!r}"
    if check is not None and not check(coerced):
        return None, f"'{key}': must be {description}, got {value!r}"
    return coerced, None


def validate_mapping(raw: Mapping[str, Any]) -> Tuple[Dict[str, Any], List[str]]:
    """未知のキーは拒否し、既知のキーは型と範囲を確認する。"""
    errors = []
    values = {}
    for key, value in raw.items():
        if key not in _SCHEMA:
            errors.append(f"Unknown config key '{key}'")
            continue
        coerced, error = _coerce(key, value)
        if error:
            errors.append(error)
        else:
            values[key] = coerced
    return values, errors


def load_run_config(yaml_path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> ValidationResult:
    """
    既定値の上に設定ファイルと上書き値を重ね、検証済みの RunConfig を返す。

    Args:
        yaml_path: 追加の設定ファイル。データセット/モデルのサイドカー (config: を含む) も受け付ける
        overrides: CLI から渡された上書き値

    Returns:
        ValidationResult: 成否フラグと正規化済み設定、エラーリスト
    """
    raw_defaults, errors = _read_yaml(str(DEFAULTS_PATH))
    if errors:
        return ValidationResult(success=False, errors=errors)
    config, errors = validate_mapping(raw_defaults or {})
    if errors:
        return ValidationResult(success=False, errors=[f"defaults: {e}" for e in errors])

    if yaml_path:
        raw_data, errors = _read_yaml(yaml_path)
        if errors:
            return ValidationResult(success=False, errors=errors)
        # Sidecar files nest the effective config under "config"
        if isinstance(raw_data, dict) and isinstance(raw_data.get("config"), dict):
            raw_data = raw_data["config"]
        if raw_data is None:
            raw_data = {}
        if not isinstance(raw_data, dict):
            return ValidationResult(
                success=False,
                errors=["Root of YAML must be a mapping of config keys to values"]
            )
        values, errors = validate_mapping(raw_data)
        if errors:
            return ValidationResult(success=False, errors=errors)
        config.update(values)

    if overrides:
        values, errors = validate_mapping({k: v for k, v in overrides.items() if v is not None})
        if errors:
            return ValidationResult(success=False, errors=errors)
        config.update(values)

    return ValidationResult(success=True, config=config)


def parse_assignments(assignments: List[str]) -> Dict[str, Any]:
    """
    "key=value" 形式の文字列リストを dict に変換する。値は YAML スカラーとして解釈する。

    Raises:
        ValueError: "=" を含まない項目がある場合
    """
    parsed = {}
    for item in assignments:
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        parsed[key.strip()] = yaml.safe_load(value)
    return parsed
