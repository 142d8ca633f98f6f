import os
import logging

from dotenv import load_dotenv

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

# テスト・スクリプト経由でも .env の環境変数を拾えるように先読み
load_dotenv()

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class Settings:
    """プロセス単位の設定 (ワーカー数・ログレベル・既定の設定ファイル)。"""

    def __init__(self, workers: int, log_level: str, config_path: str | None):
        self.workers = workers
        self.log_level = log_level
        self.config_path = config_path

    def __repr__(self) -> str:
        return f"Settings(workers={self.workers}, log_level={self.log_level!r}, config_path={self.config_path!r})"


def _int_env(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{name} must be an integer, got {raw!r}") from exc


def load_settings() -> Settings:
    """環境変数から実行設定を読み込み、不正値は明示的に失敗させる。"""
    workers = _int_env("BELLML_WORKERS", 0)
    if workers < 0:
        raise ConfigurationError("BELLML_WORKERS must be >= 0")
    if workers == 0:
        workers = os.cpu_count() or 1
    log_level = os.environ.get("BELLML_LOG_LEVEL", "INFO").upper()
    if log_level not in _LOG_LEVELS:
        raise ConfigurationError(f"BELLML_LOG_LEVEL must be one of {_LOG_LEVELS}")
    config_path = os.environ.get("BELLML_CONFIG") or None
    return Settings(workers=workers, log_level=log_level, config_path=config_path)


def resolve_workers(requested: int | None) -> int:
    """0 / None は利用可能なコア数に読み替える。"""
    if requested is None or requested <= 0:
        return load_settings().workers
    return requested
