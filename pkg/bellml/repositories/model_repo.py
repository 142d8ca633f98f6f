"""
学習済みモデルの永続化。

MLP ファイル: YAML ヘッダ (schema_version, config, feature_schema, layer_shapes, history) の後に
区切り行を置き、各配列を "名前 行数 列数" の見出し行と row-major の行 (17 有効桁) で並べる。

アンサンブル: ディレクトリに member_XX.mlp, blender.joblib, ensemble.yaml を置く。
"""
from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import joblib
import numpy as np
import yaml

from ..errors import DataError, ParseError
from ..services.learner import EnsembleModel
from ..services.mlp import MLPConfig, MLPModel
from .report_repo import read_yaml, to_plain, write_yaml

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SCHEMA_VERSION = 1
ARRAY_MARKER = "%% arrays"
ENSEMBLE_FILE = "ensemble.yaml"
BLENDER_FILE = "blender.joblib"


def _dump_array(fh, name: str, arr: np.ndarray) -> None:
    matrix = np.atleast_2d(arr)
    fh.write(f"{name} {matrix.shape[0]} {matrix.shape[1]}\n")
    np.savetxt(fh, matrix, fmt="%.17g")


def save_model(model: MLPModel, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "schema_version": SCHEMA_VERSION,
        "config": model.config.to_dict(),
        "feature_schema": model.feature_schema,
        "layer_shapes": [list(w.shape) for w in model.weights],
        "history": model.history,
    }
    buffer = io.StringIO()
    buffer.write(yaml.safe_dump(to_plain(header), sort_keys=False))
    buffer.write(ARRAY_MARKER + "\n")
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        _dump_array(buffer, f"W{i}", w)
        _dump_array(buffer, f"b{i}", b)
    try:
        path.write_text(buffer.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path


def _parse_arrays(lines: List[str], first_line: int) -> Dict[str, np.ndarray]:
    arrays: Dict[str, np.ndarray] = {}
    i = 0
    while i < len(lines):
        lineno = first_line + i
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split()
        if len(parts) != 3:
            raise ParseError(f"expected 'name rows cols', got {lines[i]!r}", line=lineno)
        name = parts[0]
        try:
            rows, cols = int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ParseError(f"bad array dimensions in {lines[i]!r}", line=lineno) from exc
        if i + rows >= len(lines):
            raise ParseError(f"array {name} is truncated", line=lineno)
        block = []
        for r in range(rows):
            row_line = first_line + i + 1 + r
            try:
                row = [float(v) for v in lines[i + 1 + r].split()]
            except ValueError as exc:
                raise ParseError(f"non-numeric entry in array {name}", line=row_line) from exc
            if len(row) != cols:
                raise ParseError(f"array {name} row has {len(row)} values, expected {cols}", line=row_line)
            block.append(row)
        arrays[name] = np.array(block, dtype=float).reshape(rows, cols)
        i += rows + 1
    return arrays


def load_model(path: PathLike) -> MLPModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(f"model file not found: {path}") from exc
    lines = text.splitlines()
    try:
        marker = lines.index(ARRAY_MARKER)
    except ValueError as exc:
        raise ParseError(f"missing '{ARRAY_MARKER}' separator", line=len(lines) or 1) from exc
    try:
        header = yaml.safe_load("\n".join(lines[:marker])) or {}
    except yaml.YAMLError as exc:
        raise ParseError(f"model header is not valid YAML: {exc}", line=1) from exc
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported model schema version {header.get('schema_version')!r}")

    arrays = _parse_arrays(lines[marker + 1:], first_line=marker + 2)
    shapes = header.get("layer_shapes") or []
    weights, biases = [], []
    for i, shape in enumerate(shapes):
        if f"W{i}" not in arrays or f"b{i}" not in arrays:
            raise DataError(f"model file is missing layer {i}")
        w = arrays[f"W{i}"]
        if list(w.shape) != list(shape):
            raise DataError(f"layer {i} has shape {list(w.shape)}, header says {shape}")
        weights.append(w)
        biases.append(arrays[f"b{i}"].ravel())
    config = MLPConfig.from_dict(header.get("config") or {})
    return MLPModel(
        config=config,
        weights=weights,
        biases=biases,
        history=header.get("history") or {"train_loss": [], "val_loss": []},
        feature_schema=header.get("feature_schema"),
    )


def save_ensemble(ensemble: EnsembleModel, directory: PathLike, config: Optional[Mapping[str, Any]] = None) -> Path:
    """メンバー・ブレンダー・台帳をディレクトリに書き出す。config は実効設定としてそのまま埋め込む。"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    member_files = []
    for i, member in enumerate(ensemble.members):
        name = f"member_{i:02d}.mlp"
        save_model(member, directory / name)
        member_files.append(name)
    joblib.dump(ensemble.blender, directory / BLENDER_FILE)
    write_yaml(
        {
            "schema_version": SCHEMA_VERSION,
            "task": ensemble.task,
            "poly_degree": ensemble.poly_degree,
            "output_range": list(ensemble.output_range) if ensemble.output_range else None,
            "raw_feature_schema": ensemble.raw_feature_schema,
            "baseline_mae": ensemble.baseline_mae,
            "members": member_files,
            "blender": BLENDER_FILE,
            "ledger": ensemble.ledger,
            "config": dict(config or {}),
        },
        directory / ENSEMBLE_FILE,
    )
    logger.info("saved ensemble with %d members to %s", len(ensemble.members), directory)
    return directory


def load_ensemble(directory: PathLike) -> Tuple[EnsembleModel, Dict[str, Any]]:
    """(EnsembleModel, ensemble.yaml の中身) を返す。"""
    directory = Path(directory)
    manifest = read_yaml(directory / ENSEMBLE_FILE)
    if not isinstance(manifest, dict) or manifest.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"{directory / ENSEMBLE_FILE} is not a supported ensemble manifest")
    members = [load_model(directory / name) for name in manifest.get("members", [])]
    try:
        blender = joblib.load(directory / manifest.get("blender", BLENDER_FILE))
    except FileNotFoundError as exc:
        raise DataError(f"blender file missing in {directory}") from exc
    output_range = manifest.get("output_range")
    ensemble = EnsembleModel(
        members=members,
        blender=blender,
        task=manifest["task"],
        poly_degree=int(manifest.get("poly_degree", 2)),
        output_range=tuple(output_range) if output_range else None,
        ledger=manifest.get("ledger") or [],
        baseline_mae=manifest.get("baseline_mae"),
        raw_feature_schema=manifest.get("raw_feature_schema"),
    )
    return ensemble, manifest
