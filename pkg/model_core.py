"""
Model Core Module
メモリセルの物理モデルを定義するモジュール

主な機能:
- 熱浴・二重井戸ポテンシャル・制御状態・キャパシタ・二状態モデルの型定義
- 二重井戸ポテンシャル U(x; b, a) とその力の解析的評価
- Kramers 時間と曲率から求める試行時間の計算
- 二状態モデルの緩和の閉形式解
- Boltzmann 分布のビン確率

単位系は k_BT を一つの数として扱う自然単位（既定値 kbt=1, gamma=1, x0=1）。
"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate

from errors import DomainError, RangeOverflowError

ArrayLike = Union[float, np.ndarray]

# float64 の exp がオーバーフローしない指数の上限
MAX_EXPONENT = math.log(np.finfo(np.float64).max)


@dataclass(frozen=True)
class BathParams:
    kbt: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not self.kbt > 0:
            raise DomainError(f"kbt must be > 0, got {self.kbt}")
        if not self.gamma > 0:
            raise DomainError(f"gamma must be > 0, got {self.gamma}")


@dataclass(frozen=True)
class PotentialSpec:
    barrier_height: float = 10.0
    well_halfwidth: float = 1.0

    def __post_init__(self):
        if not self.barrier_height > 0:
            raise DomainError(
                f"barrier_height must be > 0, got {self.barrier_height}")
        if not self.well_halfwidth > 0:
            raise DomainError(
                f"well_halfwidth must be > 0, got {self.well_halfwidth}")


@dataclass(frozen=True)
class ControlState:
    """制御パラメータ。tilt が正なら bit 0 側（x < 0）の井戸に傾く"""

    barrier_scale: float = 1.0
    tilt: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.barrier_scale <= 1.0:
            raise DomainError(
                f"ControlState.barrier_scale must lie in [0, 1], got {self.barrier_scale}")
        if not math.isfinite(self.tilt):
            raise DomainError(f"ControlState.tilt must be finite, got {self.tilt}")


@dataclass(frozen=True)
class CapacitorSpec:
    capacitance: float = 1.0
    resistance: float = 1.0
    setpoint_voltage: float = 1.0

    def __post_init__(self):
        if not self.capacitance > 0:
            raise DomainError(f"capacitance must be > 0, got {self.capacitance}")
        if not self.resistance > 0:
            raise DomainError(f"resistance must be > 0, got {self.resistance}")
        if not math.isfinite(self.setpoint_voltage):
            raise DomainError("setpoint_voltage must be finite")

    @property
    def rc(self) -> float:
        return self.resistance * self.capacitance

    @property
    def stored_energy(self) -> float:
        return 0.5 * self.capacitance * self.setpoint_voltage ** 2


@dataclass(frozen=True)
class TwoStateSpec:
    rate: float = 1.0
    p1_initial: float = 1.0

    def __post_init__(self):
        if not self.rate >= 0:
            raise DomainError(f"rate must be >= 0, got {self.rate}")
        if not 0.0 <= self.p1_initial <= 1.0:
            raise DomainError(f"p1_initial must lie in [0, 1], got {self.p1_initial}")


@dataclass(frozen=True)
class AttemptTime:
    tau0: float = 1.0

    def __post_init__(self):
        if not self.tau0 > 0:
            raise DomainError(f"tau0 must be > 0, got {self.tau0}")


def _check_finite(x: ArrayLike, name: str = "x") -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite")


def quartic_energy(x: ArrayLike, barrier_height: float, well_halfwidth: float,
                   barrier_scale: float, tilt: float) -> ArrayLike:
    """検証なしの U(x; b, a)。エンジンの内側ループ用"""
    u = x / well_halfwidth
    return barrier_scale * barrier_height * (u * u - 1.0) ** 2 + tilt * u


def quartic_force(x: ArrayLike, barrier_height: float, well_halfwidth: float,
                  barrier_scale: float, tilt: float) -> ArrayLike:
    """検証なしの F(x) = -dU/dx"""
    u = x / well_halfwidth
    return -(4.0 * barrier_scale * barrier_height * x * (u * u - 1.0)
             / well_halfwidth ** 2 + tilt / well_halfwidth)


def potential_energy(spec: PotentialSpec, control: ControlState,
                     x: ArrayLike) -> ArrayLike:
    """
    二重井戸ポテンシャル U(x; b, a) = b·E·((x/x0)² − 1)² + a·(x/x0)

    Args:
        spec: ポテンシャルの形状パラメータ
        control: 障壁スケールと傾き
        x: 位置（スカラーまたは配列）

    Returns:
        エネルギー（x と同じ形状）

    Raises:
        DomainError: x が非有限値の場合
    """
    _check_finite(x)
    return quartic_energy(x, spec.barrier_height, spec.well_halfwidth,
                          control.barrier_scale, control.tilt)


def potential_force(spec: PotentialSpec, control: ControlState,
                    x: ArrayLike) -> ArrayLike:
    """
    potential_energy の解析的な負の微分 F = −dU/dx

    Raises:
        DomainError: x が非有限値の場合
    """
    _check_finite(x)
    return quartic_force(x, spec.barrier_height, spec.well_halfwidth,
                         control.barrier_scale, control.tilt)


def two_state_energy(control: ControlState, bit: ArrayLike) -> ArrayLike:
    """二状態モデルのエネルギー。井戸の底 x = ±x0 での U と一致し、bit 1 で +a、bit 0 で −a"""
    return control.tilt * (2.0 * np.asarray(bit, dtype=np.float64) - 1.0)


def capacitor_energy(spec: CapacitorSpec, v: ArrayLike) -> ArrayLike:
    """キャパシタの蓄積エネルギー ½·C·v²"""
    return 0.5 * spec.capacitance * np.asarray(v, dtype=np.float64) ** 2


def kramers_time(tau0: AttemptTime, barrier: float, bath: BathParams) -> float:
    """
    熱活性化による脱出時間 t = τ0·exp(E/k_BT)

    Args:
        tau0: 試行時間
        barrier: 障壁の高さ E（0 以上）
        bath: 熱浴パラメータ

    Returns:
        脱出時間

    Raises:
        DomainError: barrier が負または非有限の場合
        RangeOverflowError: 結果が float64 で表現できない場合
    """
    if not (math.isfinite(barrier) and barrier >= 0):
        raise DomainError(f"barrier must be finite and >= 0, got {barrier}")
    exponent = barrier / bath.kbt
    if exponent + math.log(tau0.tau0) >= MAX_EXPONENT:
        raise RangeOverflowError(
            exponent, f"kramers_time overflows: E/k_BT = {exponent}")
    return tau0.tau0 * math.exp(exponent)


def kramers_attempt_time(spec: PotentialSpec, bath: BathParams) -> AttemptTime:
    """
    傾きのない四次井戸の曲率から求めた Kramers の前因子 τ0 = 2πγ / sqrt(U''(x0)·|U''(0)|)

    U''(x0) = 8E/x0²、U''(0) = −4E/x0² なので τ0 = 2πγ·x0² / (sqrt(32)·E)。
    """
    e = spec.barrier_height
    x0 = spec.well_halfwidth
    curvature_min = 8.0 * e / x0 ** 2
    curvature_top = 4.0 * e / x0 ** 2
    return AttemptTime(2.0 * math.pi * bath.gamma /
                       math.sqrt(curvature_min * curvature_top))


def two_state_relaxation(spec: TwoStateSpec, t: float) -> float:
    """
    対称二状態モデルの p1(t) = 0.5 + (p1(0) − 0.5)·exp(−2rt)

    Raises:
        DomainError: t が負または非有限の場合
    """
    if not (math.isfinite(t) and t >= 0):
        raise DomainError(f"t must be finite and >= 0, got {t}")
    p = 0.5 + (spec.p1_initial - 0.5) * math.exp(-2.0 * spec.rate * t)
    return min(1.0, max(0.0, p))


def boltzmann_bin_probabilities(spec: PotentialSpec, control: ControlState,
                                bath: BathParams, edges: np.ndarray) -> np.ndarray:
    """
    各ビンの Boltzmann 重み exp(−U/k_BT) の積分を正規化した確率

    Args:
        edges: 単調増加のビン境界（長さ k+1）

    Returns:
        長さ k の確率配列（合計 1）
    """
    def weight(x):
        return math.exp(-float(potential_energy(spec, control, x)) / bath.kbt)

    masses = np.array([integrate.quad(weight, lo, hi)[0]
                       for lo, hi in zip(edges[:-1], edges[1:])])
    return masses / masses.sum()
