"""
Protocols Module
消去シナリオを実行可能な制御スケジュールと解析的計算として表現するモジュール

主な機能:
- 区分線形の制御スケジュール（障壁スケール・傾き）
- ゼロへのリセット（障壁低下・傾斜・復帰）のスケジュール
- 受動的／能動的な情報理論的消去（ITE）のスケジュール
- キャパシタ ITE のアンサンブル実行
- 上書き消去のアドレスコスト、氷キューブメモリのリセット
- π ビット列の生成と決定論的データの監査
"""

import math
import os
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
from dotenv import load_dotenv

from entropy_accounting import estimate_bit_probabilities, shannon_entropy_bits
from errors import DomainError, UsageError
from model_core import (AttemptTime, BathParams, CapacitorSpec, ControlState,
                        PotentialSpec, kramers_time)
from pi_digits import hex_digits_to_bits, pi_hex_prefix

if TYPE_CHECKING:
    from experiment_harness import EnsembleStats, ExperimentHarness

DEFAULT_PI_MAX_BITS = 10 ** 6
MIN_SETTLE_MULTIPLIER = 10.0
MIN_AUDIT_BITS = 1000

ControlPoint = Tuple[float, float, float]


@dataclass(frozen=True)
class ProtocolSchedule:
    """(時刻, 障壁スケール, 傾き) の列。点の間は線形補間する"""

    control_points: Tuple[ControlPoint, ...]
    duration: float

    def __post_init__(self):
        points = tuple((float(t), float(b), float(a)) for t, b, a in self.control_points)
        object.__setattr__(self, "control_points", points)
        if not points:
            raise UsageError("a schedule needs at least one control point")
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise UsageError(f"schedule duration must be finite and >= 0, got {self.duration}")
        times = [t for t, _, _ in points]
        if times[0] != 0.0:
            raise UsageError("schedule must start at time 0")
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise UsageError("schedule times must be strictly increasing")
        if times[-1] != self.duration:
            raise UsageError(
                f"last control point at {times[-1]} does not match duration {self.duration}")
        for _, b, a in points:
            ControlState(b, a)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _, _ in self.control_points])

    def control_at(self, t: float) -> ControlState:
        b, a = self._interpolate(np.array([t]))
        return ControlState(float(b[0]), float(a[0]))

    def sample(self, n_steps: int) -> Tuple[np.ndarray, np.ndarray]:
        """時刻 k·duration/n_steps（k = 0..n_steps）での制御値"""
        if n_steps == 0:
            _, b0, a0 = self.control_points[0]
            return np.array([b0]), np.array([a0])
        grid = np.arange(n_steps + 1) * (self.duration / n_steps)
        grid[-1] = self.duration
        return self._interpolate(grid)

    def values_at(self, times) -> Tuple[np.ndarray, np.ndarray]:
        """任意の時刻列での (障壁スケール, 傾き)"""
        return self._interpolate(np.asarray(times, dtype=np.float64))

    def is_constant(self) -> bool:
        return len({(b, a) for _, b, a in self.control_points}) == 1

    def _interpolate(self, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        times = self.times
        barrier = np.array([b for _, b, _ in self.control_points])
        tilt = np.array([a for _, _, a in self.control_points])
        if times.size == 1:
            return np.full(grid.shape, barrier[0]), np.full(grid.shape, tilt[0])
        return np.interp(grid, times, barrier), np.interp(grid, times, tilt)


@dataclass(frozen=True)
class IceCubeSpec:
    n_bits: int
    latent_heat_per_bit: float
    melt_temperature: float

    def __post_init__(self):
        if self.n_bits < 0:
            raise DomainError(f"n_bits must be >= 0, got {self.n_bits}")
        if not self.latent_heat_per_bit > 0:
            raise DomainError("latent_heat_per_bit must be > 0")
        if not self.melt_temperature > 0:
            raise DomainError("melt_temperature must be > 0")


@dataclass(frozen=True)
class IceCubeOutcome:
    heat_to_bath: float
    delta_s_thermo: float


@dataclass(frozen=True)
class DataAudit:
    n_bits: int
    ones_fraction: float
    empirical_entropy_bits_per_bit: float
    description_cost_bits: float


def make_constant_schedule(duration: float, control: ControlState) -> ProtocolSchedule:
    if duration == 0:
        return ProtocolSchedule(((0.0, control.barrier_scale, control.tilt),), 0.0)
    return ProtocolSchedule(((0.0, control.barrier_scale, control.tilt),
                             (duration, control.barrier_scale, control.tilt)), duration)


def make_reset_schedule(duration: float, lower_fraction: float,
                        tilt_peak: float) -> ProtocolSchedule:
    """
    ゼロへのリセット: 障壁を下げる → bit 0 側へ傾ける → 障壁を戻す → 傾きを戻す

    Args:
        duration: プロトコル時間（正）
        lower_fraction: 障壁を下げる割合（0〜1）
        tilt_peak: 傾きの最大値（正なら bit 0 側に偏る）

    Returns:
        5点からなる ProtocolSchedule

    Raises:
        UsageError: duration ≤ 0 または lower_fraction が範囲外の場合
    """
    if not (math.isfinite(duration) and duration > 0):
        raise UsageError(f"reset duration must be > 0, got {duration}")
    if not 0.0 <= lower_fraction <= 1.0:
        raise UsageError(f"lower_fraction must lie in [0, 1], got {lower_fraction}")
    low = 1.0 - lower_fraction
    d = duration
    return ProtocolSchedule(((0.0, 1.0, 0.0),
                             (d / 4, low, 0.0),
                             (d / 2, low, tilt_peak),
                             (3 * d / 4, 1.0, tilt_peak),
                             (d, 1.0, 0.0)), d)


def make_passive_ite_schedule(wait_multiplier: float, tau0: AttemptTime,
                              spec: PotentialSpec, bath: BathParams) -> ProtocolSchedule:
    """
    受動的 ITE: 制御を (b=1, a=0) に固定したまま Kramers 時間の wait_multiplier 倍だけ待つ

    Raises:
        UsageError: wait_multiplier < 1 の場合
        RangeOverflowError: Kramers 時間がオーバーフローする場合
    """
    if not wait_multiplier >= 1:
        raise UsageError(f"wait_multiplier must be >= 1, got {wait_multiplier}")
    duration = wait_multiplier * kramers_time(tau0, spec.barrier_height, bath)
    return make_constant_schedule(duration, ControlState(1.0, 0.0))


def make_active_ite_schedule(duration: float, lower_fraction: float) -> ProtocolSchedule:
    """能動的 ITE: 障壁を下げて熱的にランダム化し、傾けずに障壁を戻す"""
    if not (math.isfinite(duration) and duration > 0):
        raise UsageError(f"active ITE duration must be > 0, got {duration}")
    if not 0.0 <= lower_fraction <= 1.0:
        raise UsageError(f"lower_fraction must lie in [0, 1], got {lower_fraction}")
    low = 1.0 - lower_fraction
    d = duration
    return ProtocolSchedule(((0.0, 1.0, 0.0),
                             (d / 4, low, 0.0),
                             (3 * d / 4, low, 0.0),
                             (d, 1.0, 0.0)), d)


def run_capacitor_ite(spec: CapacitorSpec, bath: BathParams, ensemble_size: int,
                      settle_multiplier: float,
                      harness: Optional["ExperimentHarness"] = None,
                      master_seed: int = 0, steps_per_rc: int = 10,
                      switch_cost: float = 0.0, workers: int = 1) -> "EnsembleStats":
    """
    キャパシタ ITE: 各セルを電圧 V_s から出発させ、スイッチを閉じて熱平衡まで緩和させる

    Args:
        spec: キャパシタの仕様
        bath: 熱浴パラメータ
        ensemble_size: 軌道数
        settle_multiplier: 緩和時間を RC の何倍にするか（10 以上）
        harness: 実行に使うハーネス（省略時は新規作成）
        master_seed: マスターシード
        steps_per_rc: RC あたりのステップ数
        switch_cost: スイッチ閉路の制御コスト
        workers: 並列ワーカー数

    Returns:
        EnsembleStats: 平均発熱は ½·C·V_s² − ½·k_BT に近づく
    """
    if not settle_multiplier >= MIN_SETTLE_MULTIPLIER:
        raise UsageError(
            f"settle_multiplier must be >= {MIN_SETTLE_MULTIPLIER}, got {settle_multiplier}")
    from experiment_harness import EnsembleConfig, ExperimentHarness
    from dynamics_engine import Backend, StepParams

    if harness is None:
        from logger import Logger
        harness = ExperimentHarness(Logger())
    duration = settle_multiplier * spec.rc
    config = EnsembleConfig(
        experiment="capacitor_ite",
        backend=Backend.CAPACITOR,
        model=spec,
        bath=bath,
        schedule=make_constant_schedule(duration, ControlState(1.0, 0.0)),
        step=StepParams(dt=spec.rc / steps_per_rc, record_stride=10 ** 9),
        n_trajectories=ensemble_size,
        switch_cost=switch_cost)
    return harness.run_ensemble(config, master_seed, workers=workers)


def write_over_cost_bits(memory_size_n: int) -> float:
    """
    上書き消去の簿記コスト: 解放ブロックを指すアドレスのビット数 log2(N)

    Raises:
        DomainError: N < 1 の場合
    """
    if int(memory_size_n) != memory_size_n or memory_size_n < 1:
        raise DomainError(f"memory size must be an integer >= 1, got {memory_size_n}")
    n = int(memory_size_n)
    if n & (n - 1) == 0:
        return float(n.bit_length() - 1)
    return math.log2(n)


def ice_cube_reset(spec: IceCubeSpec) -> IceCubeOutcome:
    """環境による融解でのリセット: 熱は吸収され（−n·L）、メモリのエントロピーは +n·L/T 増える"""
    total_latent = spec.n_bits * spec.latent_heat_per_bit
    return IceCubeOutcome(heat_to_bath=-total_latent if total_latent else 0.0,
                          delta_s_thermo=total_latent / spec.melt_temperature)


def pi_max_bits() -> int:
    load_dotenv()
    return int(os.environ.get("ERASURE_PI_MAX_BITS", DEFAULT_PI_MAX_BITS))


def pi_bits(n: int, max_bits: Optional[int] = None) -> List[int]:
    """
    π の16進小数展開の先頭 n ビット（1桁4ビット、上位ビットが先）

    Raises:
        UsageError: n < 1 または上限を超える場合
    """
    bound = pi_max_bits() if max_bits is None else max_bits
    if int(n) != n or n < 1:
        raise UsageError(f"pi_bits needs n >= 1, got {n}")
    if n > bound:
        raise UsageError(f"pi_bits limited to {bound} bits, got {n}")
    n = int(n)
    digits = pi_hex_prefix((n + 3) // 4)
    return hex_digits_to_bits(digits)[:n]


def deterministic_data_audit(n: int, max_bits: Optional[int] = None) -> DataAudit:
    """
    π ビット列の統計的エントロピー（ビットあたり）と記述コスト log2(n) を並べて返す

    Raises:
        UsageError: n < 1000 の場合
    """
    if n < MIN_AUDIT_BITS:
        raise UsageError(f"deterministic_data_audit needs n >= {MIN_AUDIT_BITS}, got {n}")
    bits = pi_bits(n, max_bits)
    ensemble = estimate_bit_probabilities(bits)
    return DataAudit(n_bits=int(n),
                     ones_fraction=float(ensemble.p1[0]),
                     empirical_entropy_bits_per_bit=shannon_entropy_bits(ensemble),
                     description_cost_bits=math.log2(n))
