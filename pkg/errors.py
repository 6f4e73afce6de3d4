"""
Errors Module
シミュレーション全体で使用する例外クラスを定義するモジュール

主な機能:
- 定義域・範囲・精度エラーの区別
- 積分発散時の軌道インデックスとステップ番号の保持
- 設定エラーのキーパス保持
- CLI終了コードへの対応付け
"""

from typing import Optional, Tuple


class SimulationError(Exception):
    """全てのシミュレーションエラーの基底クラス"""

    exit_code = 1


class DomainError(SimulationError, ValueError):
    """入力が定義域外（非有限値、負の時間など）"""

    exit_code = 2


class UsageError(SimulationError, ValueError):
    """呼び出し側の誤用（空のサンプル、不正な分率など）"""

    exit_code = 2


class ConfigError(UsageError):
    """設定ファイルの不正。問題のキーパスを保持する"""

    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class RangeOverflowError(SimulationError, OverflowError):
    """指数計算のオーバーフロー。指数の値を保持する"""

    exit_code = 3

    def __init__(self, exponent: float, message: Optional[str] = None):
        self.exponent = exponent
        super().__init__(message or f"exp({exponent}) overflows a float64")


class PrecisionError(SimulationError):
    """一次近似の精度条件を満たさない（rate·dt > 0.1 など）"""

    exit_code = 3


class IntegrationBlowupError(SimulationError):
    """積分結果が非有限値になった"""

    exit_code = 3

    def __init__(self,
                 step_index: int,
                 trajectory_index: Optional[int] = None,
                 seed_path: Optional[Tuple[int, int]] = None):
        self.step_index = step_index
        self.trajectory_index = trajectory_index
        self.seed_path = seed_path
        super().__init__(
            f"non-finite state at step {step_index}"
            f" (trajectory {trajectory_index}, seed path {seed_path})")


class InconclusiveError(SimulationError):
    """ステップ予算内に結論が出なかった"""

    exit_code = 4
