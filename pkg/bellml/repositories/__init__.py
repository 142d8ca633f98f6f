"""ファイル永続化 (データセット・モデル・レポート)。"""
