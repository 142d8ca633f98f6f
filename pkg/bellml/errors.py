"""
パッケージ共通の例外階層。
各例外は CLI の終了コード (exit_code) を持ち、pipeline 層がコンテキストへ変換する。
"""
from __future__ import annotations

from typing import Any, Dict, List, Optional


class BellMLError(Exception):
    """bellml が送出する例外の基底クラス。"""

    exit_code = 1


class ConfigurationError(BellMLError, ValueError):
    """設定値やパラメータ範囲が不正。"""

    exit_code = 2


class UsageError(BellMLError, ValueError):
    """呼び出し側の引数が前提条件を満たしていない。"""

    exit_code = 2


class DataError(BellMLError):
    """データセットやモデルファイルのスキーマ不整合。"""

    exit_code = 3


class ParseError(DataError):
    """ファイルの読み込みに失敗した。line は 1 始まりの行番号 (ヘッダ行 = 1)。"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(BellMLError):
    """ソルバーや最適化の数値的失敗。diagnostics に診断情報を載せる。"""

    exit_code = 4

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class SamplingError(NumericError):
    """棄却サンプリングが試行上限に達した。"""


class DomainError(NumericError):
    """点が量化子の定義域の外にある (実行可能な joint q が存在しない)。"""


class TrainingError(NumericError):
    """学習が発散した。history に途中までの損失履歴を持つ。"""

    def __init__(self, message: str, history: Optional[Dict[str, List[float]]] = None):
        self.history = history or {"train_loss": [], "val_loss": []}
        super().__init__(message, diagnostics={"epochs": len(self.history.get("train_loss", []))})


class EmptyEnsembleError(TrainingError):
    """フィルタ後に残るメンバーがいない。"""


class SearchFailed(NumericError):
    """探索ハーネス自体が失敗した (最適化器のエラーなど)。"""


class SearchRefuted(BellMLError):
    """学習済みモデルの予測がオラクルで裏付けられなかった。"""

    exit_code = 5
