"""
レポート (YAML) と図用データ (CSV) の書き出し。
numpy 型は YAML に載せる前に素の Python 値へ変換する。
"""
from __future__ import annotations

import enum
import logging
from pathlib import Path
from typing import Any, Mapping, Union

import numpy as np
import pandas as pd
import yaml

from ..errors import DataError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def to_plain(value: Any) -> Any:
    """yaml.safe_dump できる値 (dict / list / 数値 / 文字列 / None) に変換する。"""
    if isinstance(value, Mapping):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, enum.Enum):
        return value.name
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_yaml(data: Mapping[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(to_plain(data), f, sort_keys=False, allow_unicode=True)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    logger.debug("wrote %s", path)
    return path


def read_yaml(path: PathLike) -> Any:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f)
    except FileNotFoundError as exc:
        raise DataError(f"file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise DataError(f"YAML parse error in {path}: {exc}") from exc


def write_table(frame: pd.DataFrame, path: PathLike, index: bool = False) -> Path:
    """図・表のデータを CSV (17 桁) で書き出す。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        frame.to_csv(path, index=index, float_format="%.17g")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    logger.info("wrote %d rows to %s", len(frame), path)
    return path


def write_report(report: Mapping[str, Any], path: PathLike) -> Path:
    path = write_yaml(report, path)
    logger.info("wrote report %s", path)
    return path
