"""
データセットの CSV 永続化。

本体: ヘッダ f0,…,fk,target と 17 有効桁の 10 進数。
メタデータ: 同じディレクトリの <stem>.meta.yaml (サイドカー)。
"""
from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

from ..errors import DataError, ParseError
from ..services.dataset import Dataset
from .report_repo import read_yaml, write_yaml

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
_LINE_RE = re.compile(r"line (\d+)")


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}.meta.yaml")


def _columns(width: int):
    return [f"f{i}" for i in range(width)] + ["target"]


def save_dataset(d: Dataset, path: PathLike) -> Path:
    """CSV とサイドカーを書き出す。空のデータセットはヘッダ行だけのファイルになる。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(np.column_stack([d.features, d.targets]) if len(d) else None, columns=_columns(d.width))
    try:
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    metadata = dict(d.metadata)
    metadata["n_records"] = len(d)
    write_yaml(metadata, sidecar_path(path))
    logger.info("saved %d records to %s", len(d), path)
    return path


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError as exc:
        raise DataError(f"dataset not found: {path}") from exc
    except pd.errors.EmptyDataError as exc:
        raise ParseError("file is empty; expected a header row", line=1) from exc
    except pd.errors.ParserError as exc:
        match = _LINE_RE.search(str(exc))
        raise ParseError(f"wrong column count ({exc})", line=int(match.group(1)) if match else None) from exc


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return float("nan")


def load_dataset(path: PathLike) -> Dataset:
    """
    CSV とサイドカーから Dataset を復元する。

    Raises:
        ParseError: ヘッダや列数が不正、数値でない値がある (行番号はヘッダ = 1)
        DataError: ファイルが無い、サイドカーと中身が食い違う
    """
    path = Path(path)
    frame = _read_frame(path)
    columns = list(frame.columns)
    if not columns or columns[-1] != "target" or columns[:-1] != _columns(len(columns) - 1)[:-1]:
        raise ParseError(f"header must be f0,...,fk,target; got {','.join(map(str, columns))}", line=1)

    values = np.vectorize(_to_float, otypes=[float])(frame.to_numpy(dtype=object)) if len(frame) else np.zeros((0, len(columns)))
    bad_rows = np.flatnonzero(~np.all(np.isfinite(values), axis=1))
    if len(bad_rows):
        raise ParseError("missing or non-numeric value", line=int(bad_rows[0]) + 2)

    side = sidecar_path(path)
    if side.exists():
        metadata: Dict[str, Any] = read_yaml(side) or {}
        if not isinstance(metadata, dict):
            raise DataError(f"sidecar {side} must be a mapping")
    else:
        logger.warning("no sidecar for %s; using a generic regression schema", path)
        metadata = {"task": "regression", "feature_schema": columns[:-1], "probe_rows": []}

    expected = metadata.pop("n_records", None)
    if expected is not None and int(expected) != len(frame):
        raise DataError(f"sidecar lists {expected} records but {path} has {len(frame)}")
    schema = metadata.get("feature_schema")
    if schema is not None and len(schema) != len(columns) - 1:
        raise DataError(f"sidecar schema has {len(schema)} features but {path} has {len(columns) - 1} columns")

    features = values[:, :-1] if len(frame) else np.zeros((0, len(columns) - 1))
    targets = values[:, -1] if len(frame) else np.zeros(0)
    logger.info("loaded %d records from %s", len(frame), path)
    return Dataset(features, targets, metadata)
