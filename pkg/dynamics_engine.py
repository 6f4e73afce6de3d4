"""
Dynamics Engine Module
三種類の物理バックエンドで軌道を積分し、第一法則の台帳を記録するモジュール

主な機能:
- 過減衰 Langevin 方程式の Euler–Maruyama 積分（二重井戸）
- RC 回路の Ornstein–Uhlenbeck 過程の厳密遷移サンプリング（キャパシタ）
- 固定刻みの二状態ジャンプ過程
- 仕事・熱・内部エネルギーの台帳（ΔU = W − Q_bath が恒等的に成立）
- 軌道ごとの乱数ストリームによるバッチ積分

台帳の規則: 各ステップで (1) 制御 λ→λ' を進めて W += U(x, λ') − U(x, λ)、
(2) λ' を固定して状態 x→x' を進めて Q_bath += U(x, λ') − U(x', λ')。
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DomainError, IntegrationBlowupError, PrecisionError, UsageError
from logger import Logger
from model_core import (ArrayLike, BathParams, CapacitorSpec, ControlState, PotentialSpec,
                        TwoStateSpec, capacitor_energy, potential_energy, potential_force,
                        two_state_energy)
from protocols import ProtocolSchedule
from rng_streams import StreamBatch, seed_path as make_seed_path

ModelSpec = Union[PotentialSpec, CapacitorSpec, TwoStateSpec]

# 一次近似でのフリップ確率が許される rate·dt の上限
MAX_JUMP_PROBABILITY_ARGUMENT = 0.1
# Euler–Maruyama の安定性条件 dt ≤ STABILITY_FACTOR·γ·x0²/E
STABILITY_FACTOR = 0.01


class Backend(str, Enum):
    LANGEVIN = "langevin"
    TWO_STATE = "two-state"
    CAPACITOR = "capacitor"

    @classmethod
    def parse(cls, name: str) -> "Backend":
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(b.value for b in cls)
            raise UsageError(f"unknown backend '{name}' (expected one of {choices})")


@dataclass(frozen=True)
class StepParams:
    dt: float
    record_stride: int = 1
    max_steps: int = 10 ** 8

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be finite and > 0, got {self.dt}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise DomainError(
                f"record_stride must be a positive integer, got {self.record_stride}")
        if self.max_steps < 1:
            raise DomainError(f"max_steps must be >= 1, got {self.max_steps}")

    def stability_limit(self, spec: PotentialSpec, bath: BathParams) -> float:
        return STABILITY_FACTOR * bath.gamma * spec.well_halfwidth ** 2 / spec.barrier_height

    def check_stability(self, spec: PotentialSpec, bath: BathParams) -> None:
        limit = self.stability_limit(spec, bath)
        if self.dt > limit:
            raise DomainError(
                f"dt = {self.dt} exceeds the stability limit 0.01·γ·x0²/E = {limit}")

    def step_count(self, duration: float) -> int:
        if duration <= 0:
            return 0
        return max(1, int(math.ceil(duration / self.dt * (1.0 - 1e-12))))


@dataclass(frozen=True)
class TrajectoryLedger:
    times: np.ndarray
    states: np.ndarray
    work: float
    heat_to_bath: float
    u_initial: float
    u_final: float
    seed_path: Tuple[int, int]
    passage_time: float = math.nan

    @property
    def delta_u(self) -> float:
        return self.u_final - self.u_initial

    @property
    def first_law_residual(self) -> float:
        return self.u_final - self.u_initial - self.work + self.heat_to_bath

    @property
    def final_state(self) -> float:
        return float(self.states[-1])


@dataclass
class BatchOutcome:
    """バッチ積分の結果。各配列の先頭次元が軌道に対応する"""

    indices: np.ndarray
    master_seed: int
    work: np.ndarray
    heat_to_bath: np.ndarray
    u_initial: np.ndarray
    u_final: np.ndarray
    initial_bits: np.ndarray
    final_states: np.ndarray
    final_bits: np.ndarray
    passage_times: np.ndarray
    record_times: np.ndarray
    record_states: np.ndarray
    n_steps: int = 0
    budget_exhausted: bool = False

    def ledger(self, position: int) -> TrajectoryLedger:
        times = self.record_times.copy()
        states = self.record_states[position].copy()
        times.flags.writeable = False
        states.flags.writeable = False
        return TrajectoryLedger(
            times=times,
            states=states,
            work=float(self.work[position]),
            heat_to_bath=float(self.heat_to_bath[position]),
            u_initial=float(self.u_initial[position]),
            u_final=float(self.u_final[position]),
            seed_path=make_seed_path(self.master_seed, self.indices[position]),
            passage_time=float(self.passage_times[position]))

    def ledgers(self) -> List[TrajectoryLedger]:
        return [self.ledger(i) for i in range(len(self.indices))]


class CompensatedSum:
    """Neumaier の補償加算。ステップ数が多くても台帳の丸め誤差を ε 程度に抑える"""

    def __init__(self, size: int):
        self.total = np.zeros(size)
        self.compensation = np.zeros(size)

    def add(self, values: np.ndarray) -> None:
        t = self.total + values
        big = np.abs(self.total) >= np.abs(values)
        self.compensation += np.where(big, (self.total - t) + values,
                                      (values - t) + self.total)
        self.total = t

    def value(self) -> np.ndarray:
        return self.total + self.compensation


def em_step(x: ArrayLike, control: ControlState, bath: BathParams, spec: PotentialSpec,
            dt: float, noise: ArrayLike, step_index: int = 0,
            check_finite: bool = True) -> ArrayLike:
    """
    過減衰 Langevin 方程式の Euler–Maruyama 1ステップ
    x' = x + F(x)·dt/γ + sqrt(2·k_BT·dt/γ)·ξ

    Args:
        x: 現在位置（スカラーまたは軌道ごとの配列）
        control: 固定された制御状態
        bath: 熱浴パラメータ
        spec: ポテンシャル
        dt: 時間刻み
        noise: 標準正規乱数 ξ（x と同じ形状）
        step_index: エラー報告用のステップ番号
        check_finite: False なら非有限値の検査を呼び出し側に任せる

    Returns:
        次の位置

    Raises:
        IntegrationBlowupError: 結果が非有限の場合
    """
    force = potential_force(spec, control, x)
    x_next = x + force * dt / bath.gamma + math.sqrt(2.0 * bath.kbt * dt / bath.gamma) * noise
    if check_finite and not np.all(np.isfinite(x_next)):
        raise IntegrationBlowupError(step_index)
    return x_next


def ou_step(v: ArrayLike, spec: CapacitorSpec, bath: BathParams, dt: float,
            noise: ArrayLike) -> ArrayLike:
    """
    RC 回路の電圧の厳密な OU 遷移
    v' = v·exp(−dt/RC) + sqrt((k_BT/C)·(1 − exp(−2dt/RC)))·ξ
    """
    if not dt >= 0:
        raise DomainError(f"dt must be >= 0, got {dt}")
    decay = math.exp(-dt / spec.rc)
    spread = math.sqrt(bath.kbt / spec.capacitance * (1.0 - decay * decay))
    return v * decay + spread * noise


def jump_probability(rate: ArrayLike, dt: float) -> np.ndarray:
    argument = np.asarray(rate, dtype=np.float64) * dt
    worst = float(argument.max()) if argument.size else 0.0
    if worst > MAX_JUMP_PROBABILITY_ARGUMENT:
        raise PrecisionError(
            f"rate·dt = {worst} exceeds {MAX_JUMP_PROBABILITY_ARGUMENT}; reduce dt")
    return -np.expm1(-argument)


def jump_step(state: ArrayLike, rate: ArrayLike, dt: float, uniform: ArrayLike) -> np.ndarray:
    """
    固定刻みの二状態ジャンプ。確率 1 − exp(−rate·dt) で反転する

    Raises:
        PrecisionError: rate·dt > 0.1 の場合
    """
    return np.where(np.asarray(uniform) < jump_probability(rate, dt), 1 - state, state)


def two_state_rates(spec: TwoStateSpec, control: ControlState, bath: BathParams,
                    state: ArrayLike) -> np.ndarray:
    """詳細釣り合い: r·exp(−ΔU/2k_BT)、ΔU = U(反転後) − U(現在)"""
    flipped = 1.0 - np.asarray(state, dtype=np.float64)
    delta_u = two_state_energy(control, flipped) - two_state_energy(control, state)
    return spec.rate * np.exp(-delta_u / (2.0 * bath.kbt))


def read_bits(backend: Backend, states: np.ndarray) -> np.ndarray:
    """状態からビットを読み出す。Langevin とキャパシタは符号、二状態はラベル"""
    if backend is Backend.TWO_STATE:
        return states.astype(np.int8)
    return (states > 0).astype(np.int8)


class DynamicsEngine:

    def __init__(self, logger: Logger):
        """
        動力学エンジンの初期化

        Args:
            logger: ログ出力用のLoggerインスタンス
        """
        self.logger = logger

    def evolve_trajectory(self, initial: float, schedule: ProtocolSchedule,
                          backend: Backend, params: StepParams, bath: BathParams,
                          spec: ModelSpec, seed_path: Tuple[int, int],
                          preequilibration_time: float = 0.0) -> TrajectoryLedger:
        """
        1本の軌道を積分して台帳を返す

        Args:
            initial: 初期状態（位置・ビット・電圧）
            schedule: 制御スケジュール
            backend: 物理バックエンド
            params: 時間刻みと記録間隔
            bath: 熱浴パラメータ
            spec: バックエンドに対応したモデル仕様
            seed_path: (マスターシード, 軌道インデックス)
            preequilibration_time: 台帳開始前の井戸内局所平衡化の時間（Langevin のみ）

        Returns:
            TrajectoryLedger: 第一法則を満たす台帳
        """
        master_seed, index = seed_path
        outcome = self.evolve_batch(schedule, backend, params, bath, spec,
                                    master_seed, [index], initial=initial,
                                    preequilibration_time=preequilibration_time)
        return outcome.ledger(0)

    def evolve_batch(self, schedule: ProtocolSchedule, backend: Backend,
                     params: StepParams, bath: BathParams, spec: ModelSpec,
                     master_seed: int, indices: Sequence[int],
                     initial: Optional[float] = None,
                     p1_initial: Optional[float] = None,
                     preequilibration_time: float = 0.0,
                     absorbing_threshold: Optional[float] = None,
                     switch_cost: float = 0.0) -> BatchOutcome:
        """
        複数軌道をまとめて積分する。各軌道は自分の乱数ストリームだけを消費するので、
        結果はバッチの分け方に依存しない

        Args:
            initial: 全軌道共通の初期状態。None なら p1_initial でビットを抽選
            p1_initial: 初期ビットが 1 である確率（Langevin / 二状態）
            absorbing_threshold: 位置がこれ以下になった時刻を初通過時刻として記録し凍結（Langevin）
            switch_cost: キャパシタのスイッチ閉路に要する仕事（同量が熱として散逸）

        Raises:
            IntegrationBlowupError: 非有限値が出た場合（軌道インデックス付き）
            UsageError: バックエンドとモデル仕様が一致しない場合
        """
        self._check_spec(backend, spec)
        streams = StreamBatch(master_seed, indices)
        size = len(streams)

        # 初期ビットの抽選は常に各ストリームの最初の一様乱数を使う
        draws = streams.uniform_each()
        if initial is not None:
            states = np.full(size, float(initial))
            initial_bits = read_bits(backend, states)
        else:
            p1 = 1.0 if p1_initial is None else float(p1_initial)
            initial_bits = (draws < p1).astype(np.int8)
            states = self._states_from_bits(backend, spec, initial_bits)

        if backend is Backend.LANGEVIN:
            params.check_stability(spec, bath)
            if preequilibration_time > 0:
                states = self._preequilibrate(states, schedule.control_at(0.0), spec,
                                              bath, params, streams,
                                              preequilibration_time)

        n_required = params.step_count(schedule.duration)
        budget_exhausted = n_required > params.max_steps
        if budget_exhausted:
            self.logger.warning(
                f"Step budget {params.max_steps} below required {n_required}; truncating")
        n_steps = min(n_required, params.max_steps)
        h = schedule.duration / n_required if n_required else 0.0

        if budget_exhausted:
            # 刻みは保ったまま、スケジュールの先頭部分だけを積分する
            barrier_path, tilt_path = schedule.values_at(np.arange(n_steps + 1) * h)
        else:
            barrier_path, tilt_path = schedule.sample(n_steps)
        # 線形補間の丸めで [0, 1] を 1 ulp はみ出さないように
        barrier_path = np.clip(barrier_path, 0.0, 1.0)
        energy = self._energy_function(backend, spec)
        u_current = energy(states, barrier_path[0], tilt_path[0])
        u_initial = u_current.copy()

        work = CompensatedSum(size)
        heat = CompensatedSum(size)
        if backend is Backend.CAPACITOR and switch_cost:
            cost = np.full(size, float(switch_cost))
            work.add(cost)
            heat.add(cost)

        passage_times = np.full(size, math.nan)
        active = np.ones(size, dtype=bool)
        if absorbing_threshold is not None:
            crossed = states <= absorbing_threshold
            passage_times[crossed] = 0.0
            active &= ~crossed

        record_times = [0.0]
        record_states = [states.copy()]
        step = self._step_function(backend, spec, bath, h)

        for k in range(n_steps):
            b_next, a_next = barrier_path[k + 1], tilt_path[k + 1]
            changed = b_next != barrier_path[k] or a_next != tilt_path[k]
            if changed:
                u_shifted = energy(states, b_next, a_next)
                work.add(u_shifted)
                work.add(-u_current)
            else:
                u_shifted = u_current

            proposed = step(states, b_next, a_next, streams)
            if absorbing_threshold is not None:
                proposed = np.where(active, proposed, states)
            if not np.all(np.isfinite(proposed)):
                position = int(np.flatnonzero(~np.isfinite(proposed))[0])
                trajectory = int(streams.indices[position])
                path = make_seed_path(master_seed, trajectory)
                self.logger.trajectory_blowup(trajectory, k, path)
                raise IntegrationBlowupError(k, trajectory, path)

            u_next = energy(proposed, b_next, a_next)
            heat.add(u_shifted)
            heat.add(-u_next)
            states, u_current = proposed, u_next

            if absorbing_threshold is not None:
                crossed = active & (states <= absorbing_threshold)
                passage_times[crossed] = (k + 1) * h
                active &= ~crossed
                if not active.any():
                    record_times.append((k + 1) * h)
                    record_states.append(states.copy())
                    break

            if (k + 1) % params.record_stride == 0 or k + 1 == n_steps:
                record_times.append((k + 1) * h)
                record_states.append(states.copy())

        return BatchOutcome(
            indices=np.asarray(streams.indices, dtype=np.int64),
            master_seed=int(master_seed),
            work=work.value(),
            heat_to_bath=heat.value(),
            u_initial=u_initial,
            u_final=u_current,
            initial_bits=initial_bits,
            final_states=states,
            final_bits=read_bits(backend, states),
            passage_times=passage_times,
            record_times=np.array(record_times),
            record_states=np.stack(record_states, axis=1),
            n_steps=n_steps,
            budget_exhausted=budget_exhausted)

    def _check_spec(self, backend: Backend, spec: ModelSpec) -> None:
        expected = {Backend.LANGEVIN: PotentialSpec,
                    Backend.TWO_STATE: TwoStateSpec,
                    Backend.CAPACITOR: CapacitorSpec}[backend]
        if not isinstance(spec, expected):
            raise UsageError(
                f"backend '{backend.value}' requires {expected.__name__}, "
                f"got {type(spec).__name__}")

    def _states_from_bits(self, backend: Backend, spec: ModelSpec,
                          bits: np.ndarray) -> np.ndarray:
        if backend is Backend.LANGEVIN:
            return np.where(bits == 1, spec.well_halfwidth, -spec.well_halfwidth)
        if backend is Backend.TWO_STATE:
            return bits.astype(np.float64)
        return np.full(bits.shape, float(spec.setpoint_voltage))

    def _energy_function(self, backend: Backend, spec: ModelSpec):
        if backend is Backend.LANGEVIN:
            return lambda x, b, a: potential_energy(spec, ControlState(b, a), x)
        if backend is Backend.TWO_STATE:
            return lambda s, b, a: two_state_energy(ControlState(b, a), s)
        return lambda v, b, a: capacitor_energy(spec, v)

    def _step_function(self, backend: Backend, spec: ModelSpec, bath: BathParams,
                       h: float):
        if backend is Backend.LANGEVIN:
            def langevin(x, b, a, streams):
                return em_step(x, ControlState(b, a), bath, spec, h, streams.next_normal(),
                               check_finite=False)
            return langevin

        if backend is Backend.CAPACITOR:
            def capacitor(v, b, a, streams):
                return ou_step(v, spec, bath, h, streams.next_normal())
            return capacitor

        def two_state(s, b, a, streams):
            rates = two_state_rates(spec, ControlState(b, a), bath, s)
            return jump_step(s, rates, h, streams.next_uniform())
        return two_state

    def _preequilibrate(self, states: np.ndarray, control: ControlState,
                        spec: PotentialSpec, bath: BathParams, params: StepParams,
                        streams: StreamBatch, duration: float) -> np.ndarray:
        """
        各軌道を x = 0 での反射により自分の井戸に閉じ込めたまま局所平衡化する

        x = 0 から始まる軌道は bit 1 側（x > 0）の井戸に属するとみなす。

        Raises:
            IntegrationBlowupError: 非有限値が出た場合（軌道インデックスとシード経路付き）
        """
        n_steps = params.step_count(duration)
        h = duration / n_steps
        sides = np.where(states >= 0, 1.0, -1.0)
        x = states.copy()
        for k in range(n_steps):
            x = sides * np.abs(em_step(x, control, bath, spec, h, streams.next_normal(),
                                       check_finite=False))
            if not np.all(np.isfinite(x)):
                position = int(np.flatnonzero(~np.isfinite(x))[0])
                trajectory = streams.indices[position]
                path = make_seed_path(streams.master_seed, trajectory)
                self.logger.trajectory_blowup(trajectory, k, path)
                raise IntegrationBlowupError(k, trajectory, path)
        return x
