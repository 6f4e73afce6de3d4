"""
Entropy Accounting Module
情報エントロピーと熱力学的な量を計算し、消去の判定レポートを作成するモジュール

主な機能:
- ビット集団の Shannon エントロピー（ビット単位）
- サンプルからのビット確率の推定（プラグイン推定量と標準誤差）
- Landauer の最小発熱量
- ヒストグラムからの Gibbs（微分）エントロピー推定
- 測定された散逸と Landauer 限界を比較する ErasureReport の作成

情報エントロピーはビット、熱力学量はナット。ln 2 の換算は landauer_min_heat でのみ行う。
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from errors import DomainError, UsageError
from model_core import BathParams

if TYPE_CHECKING:
    from experiment_harness import EnsembleStats

# 判定に使う有意帯の幅（標準誤差の倍数）
VERDICT_SIGMAS = 3.0
# 「発熱ほぼゼロ」とみなす絶対許容幅の既定値（k_BT 単位）
DEFAULT_ZERO_HEAT_TOLERANCE = 0.05


class Verdict(str, Enum):
    CONSISTENT = "consistent"
    VIOLATES_BOUND = "violates-bound"
    BOUND_VACUOUS = "bound-vacuous"


@dataclass(frozen=True)
class BitEnsemble:
    p1: np.ndarray
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        p1 = np.atleast_1d(np.asarray(self.p1, dtype=np.float64))
        if not np.all(np.isfinite(p1)) or np.any((p1 < 0) | (p1 > 1)):
            raise DomainError("every bit probability must lie in [0, 1]")
        object.__setattr__(self, "p1", p1)

    @property
    def n_cells(self) -> int:
        return int(self.p1.size)

    @classmethod
    def deterministic(cls, bits: Sequence[int]) -> "BitEnsemble":
        return cls(np.asarray(bits, dtype=np.float64))

    def concatenate(self, other: "BitEnsemble") -> "BitEnsemble":
        return BitEnsemble(np.concatenate([self.p1, other.p1]))


@dataclass(frozen=True)
class ErasureReport:
    delta_s_info: float
    measured_work: float
    measured_heat_to_bath: float
    heat_stderr: float
    landauer_min_heat: float
    verdict: Verdict
    kbt: float = 1.0

    def recomputed_bound(self) -> float:
        return -self.kbt * math.log(2.0) * self.delta_s_info


def shannon_entropy_bits(ensemble: BitEnsemble) -> float:
    """
    S_1 = Σ_j Σ_m p_{j,m}·log2(1/p_{j,m})。p = 0 の項は 0 とする

    Args:
        ensemble: セルごとの p1 を持つビット集団

    Returns:
        ビット単位のエントロピー（0 ≤ S_1 ≤ N）
    """
    p = ensemble.p1
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h1 = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
        h0 = np.where(q > 0, -q * np.log2(np.where(q > 0, q, 1.0)), 0.0)
    return float(np.sum(h1 + h0))


def estimate_bit_probabilities(outcomes) -> BitEnsemble:
    """
    セルごとのビットサンプルから p1 をプラグイン推定する

    Args:
        outcomes: 形状 (サンプル数,) または (サンプル数, セル数) の 0/1 配列

    Returns:
        BitEnsemble: p1 と標準誤差 sqrt(p(1−p)/n)

    Raises:
        UsageError: サンプルが空の場合
    """
    samples = np.asarray(outcomes, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.size == 0 or samples.shape[0] == 0:
        raise UsageError("estimate_bit_probabilities needs at least one sample per cell")
    if np.any((samples != 0) & (samples != 1)):
        raise DomainError("bit samples must be 0 or 1")
    n = samples.shape[0]
    p1 = samples.mean(axis=0)
    stderr = np.sqrt(p1 * (1.0 - p1) / n)
    return BitEnsemble(p1, stderr)


def landauer_min_heat(delta_s_info: float, bath: BathParams) -> float:
    """ΔQ_min = −k_BT·ln(2)·ΔS_1（ΔS_1 はビット単位）"""
    return -bath.kbt * math.log(2.0) * delta_s_info


def gibbs_entropy_from_histogram(counts, bin_width: float) -> float:
    """
    一様幅ヒストグラムからの微分エントロピー −Σ p_i·ln p_i + ln(幅)（ナット）

    Raises:
        UsageError: 総カウントが 0、または幅が正でない場合
    """
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if not total > 0:
        raise UsageError("histogram has zero total count")
    if not bin_width > 0:
        raise UsageError(f"bin width must be > 0, got {bin_width}")
    p = counts[counts > 0] / total
    return float(-np.sum(p * np.log(p)) + math.log(bin_width))


def judge(heat: float, heat_stderr: float, bound: float,
          zero_heat_tolerance: float = 0.0) -> Verdict:
    """発熱の測定値と限界値から判定を返す"""
    band = VERDICT_SIGMAS * heat_stderr
    if bound < 0 and abs(heat) <= max(band, zero_heat_tolerance):
        return Verdict.BOUND_VACUOUS
    if heat >= bound - band:
        return Verdict.CONSISTENT
    return Verdict.VIOLATES_BOUND


def make_erasure_report(ensemble_before: BitEnsemble, ensemble_after: BitEnsemble,
                        stats: "EnsembleStats", bath: BathParams,
                        zero_heat_tolerance: float = DEFAULT_ZERO_HEAT_TOLERANCE) -> ErasureReport:
    """
    消去前後のビット集団とアンサンブル統計から ErasureReport を作成する

    Args:
        ensemble_before: 消去前のビット集団
        ensemble_after: 消去後のビット集団
        stats: 測定された仕事・熱の統計
        bath: 熱浴パラメータ
        zero_heat_tolerance: 発熱ゼロとみなす絶対幅（k_BT 単位、kbt 倍して使う）

    Raises:
        UsageError: セル数が一致しない場合
    """
    if ensemble_before.n_cells != ensemble_after.n_cells:
        raise UsageError(
            f"cell count mismatch: {ensemble_before.n_cells} before, "
            f"{ensemble_after.n_cells} after")
    delta_s = shannon_entropy_bits(ensemble_after) - shannon_entropy_bits(ensemble_before)
    bound = landauer_min_heat(delta_s, bath)
    verdict = judge(stats.mean_heat_to_bath, stats.stderr_heat, bound,
                    zero_heat_tolerance * bath.kbt)
    return ErasureReport(
        delta_s_info=delta_s,
        measured_work=stats.mean_work,
        measured_heat_to_bath=stats.mean_heat_to_bath,
        heat_stderr=stats.stderr_heat,
        landauer_min_heat=bound,
        verdict=verdict,
        kbt=bath.kbt)
