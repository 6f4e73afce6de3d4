"""
Experiment Harness Module
軌道アンサンブルとパラメータスイープを再現可能に実行し、統計を集計するモジュール

主な機能:
- 固定サイズのブロックに分けた軌道の並列実行（ワーカー数に依存しない結果）
- 仕事・熱・最終ビット確率・誤り確率の平均と標準誤差
- 平均初通過時間（MFPT）による Kramers スケーリングの検証
- リセット時間に対する誤り確率と散逸のトレードオフ
- 受動的 ITE・能動的 ITE・リセット・既知データのリセット・キャパシタ ITE の名前付き実験
- 平衡統計（Boltzmann ヒストグラム、OU 定常分散）と第一法則台帳の検査
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats as scistats

from dynamics_engine import Backend, BatchOutcome, DynamicsEngine, ModelSpec, StepParams
from entropy_accounting import (BitEnsemble, ErasureReport, estimate_bit_probabilities,
                                make_erasure_report)
from errors import ConfigError, SimulationError, UsageError
from logger import Logger
from model_core import (AttemptTime, BathParams, CapacitorSpec, ControlState,
                        PotentialSpec, TwoStateSpec, boltzmann_bin_probabilities,
                        kramers_attempt_time, kramers_time)
from protocols import (IceCubeSpec, ProtocolSchedule, deterministic_data_audit,
                       ice_cube_reset, make_active_ite_schedule, make_constant_schedule,
                       make_passive_ite_schedule, make_reset_schedule,
                       write_over_cost_bits)
from run_config import DEFAULT_MFPT_BARRIERS, DEFAULT_RESET_DURATIONS, RunConfig

# 1ブロックの軌道数。結果はこの値にもワーカー数にも依存しない
TRAJECTORY_BLOCK = 1024
MFPT_BARRIER_RANGE = (2.0, 10.0)
# 初通過時間の打ち切り（曲率から求めた Kramers 時間の倍数）
MFPT_TIME_BUDGET = 20.0
# χ² 検定で期待度数がこれ未満のビンは隣と統合する
MIN_EXPECTED_COUNT = 5.0
# 実験そのものがパラメータ格子上のスイープになっているもの
SWEEP_EXPERIMENTS = ("mfpt", "error_vs_dissipation")


@dataclass(frozen=True)
class EnsembleConfig:
    experiment: str
    backend: Backend
    model: ModelSpec
    bath: BathParams
    schedule: ProtocolSchedule
    step: StepParams
    n_trajectories: int
    p1_initial: Optional[float] = None
    initial: Optional[float] = None
    preequilibration_time: float = 0.0
    target_bit: Optional[int] = None
    switch_cost: float = 0.0
    absorbing_threshold: Optional[float] = None

    def __post_init__(self):
        if self.n_trajectories < 2:
            raise UsageError(f"n_trajectories must be >= 2, got {self.n_trajectories}")


@dataclass(frozen=True)
class EnsembleStats:
    n_trajectories: int
    mean_work: float
    stderr_work: float
    mean_heat_to_bath: float
    stderr_heat: float
    final_p1: float
    stderr_p1: float
    error_probability: float
    stderr_error: float
    initial_p1: float = math.nan
    wall_time: float = 0.0
    mean_passage_time: float = math.nan
    stderr_passage_time: float = math.nan
    crossings: int = 0
    budget_exhausted: bool = False


@dataclass
class EnsembleArrays:
    """全軌道の結果をインデックス順に連結したもの"""

    work: np.ndarray
    heat_to_bath: np.ndarray
    u_initial: np.ndarray
    u_final: np.ndarray
    initial_bits: np.ndarray
    final_bits: np.ndarray
    final_states: np.ndarray
    passage_times: np.ndarray
    budget_exhausted: bool


@dataclass(frozen=True)
class SweepRow:
    value: float
    stats: EnsembleStats
    inconclusive: bool = False
    extras: Dict[str, float] = field(default_factory=dict)
    report: Optional[ErasureReport] = None


@dataclass(frozen=True)
class SweepResult:
    axis: str
    values: Tuple[float, ...]
    rows: Tuple[SweepRow, ...]
    fit: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.rows) != len(self.values):
            raise UsageError(
                f"sweep '{self.axis}' has {len(self.rows)} rows for {len(self.values)} grid values")

    @property
    def inconclusive(self) -> bool:
        return any(row.inconclusive for row in self.rows)

    def non_increasing_violations(self, attribute: str, stderr_attribute: str,
                                  sigmas: float = 2.0) -> List[int]:
        """隣接する行で attribute が sigmas·stderr を超えて増加した位置"""
        violations = []
        for i, (a, b) in enumerate(zip(self.rows, self.rows[1:])):
            va, vb = getattr(a.stats, attribute), getattr(b.stats, attribute)
            band = sigmas * math.hypot(getattr(a.stats, stderr_attribute),
                                       getattr(b.stats, stderr_attribute))
            if vb - va > band:
                violations.append(i)
        return violations


@dataclass(frozen=True)
class ErasureExperiment:
    """名前付き実験の結果。判定レポートと、その元になった統計"""

    name: str
    report: ErasureReport
    stats: EnsembleStats
    before: BitEnsemble
    after: BitEnsemble


@dataclass(frozen=True)
class AnalyticResult:
    """軌道を使わない実験（π 監査、上書き消去、氷キューブ）の値"""

    name: str
    values: Dict[str, float]


RunOutcome = Union[ErasureExperiment, SweepResult, EnsembleStats, AnalyticResult]


def analytic_result(config: RunConfig) -> AnalyticResult:
    """
    解析的な実験を [analytic] セクションの値で評価する

    Raises:
        UsageError: 解析的な実験でない場合、または監査のビット数が足りない場合
    """
    a = config.analytic
    name = config.experiment
    if name == "deterministic_data_audit":
        audit = deterministic_data_audit(a.n_bits)
        values = {"n_bits": float(audit.n_bits),
                  "ones_fraction": audit.ones_fraction,
                  "empirical_entropy_bits_per_bit": audit.empirical_entropy_bits_per_bit,
                  "description_cost_bits": audit.description_cost_bits}
    elif name == "write_over":
        values = {"memory_size": float(a.memory_size),
                  "address_bits": write_over_cost_bits(a.memory_size)}
    elif name == "ice_cube":
        outcome = ice_cube_reset(IceCubeSpec(a.n_bits, a.latent_heat_per_bit,
                                             a.melt_temperature))
        values = {"n_bits": float(a.n_bits),
                  "heat_to_bath": outcome.heat_to_bath,
                  "delta_s_thermo": outcome.delta_s_thermo}
    else:
        raise UsageError(f"experiment '{name}' is not analytic")
    return AnalyticResult(name, values)


def _mean_stderr(values: np.ndarray) -> Tuple[float, float]:
    n = values.size
    if n == 0:
        return math.nan, math.nan
    mean = float(np.mean(values))
    if n < 2:
        return mean, math.nan
    return mean, float(np.std(values, ddof=1) / math.sqrt(n))


def _run_block(task) -> BatchOutcome:
    """ワーカープロセスで1ブロックを積分する"""
    config, master_seed, indices = task
    engine = DynamicsEngine(Logger())
    return engine.evolve_batch(
        config.schedule, config.backend, config.step, config.bath, config.model,
        master_seed, indices,
        initial=config.initial,
        p1_initial=config.p1_initial,
        preequilibration_time=config.preequilibration_time,
        absorbing_threshold=config.absorbing_threshold,
        switch_cost=config.switch_cost)


class ExperimentHarness:

    def __init__(self, logger: Logger):
        """
        実験ハーネスの初期化

        Args:
            logger: ログ出力用のLoggerインスタンス
        """
        self.logger = logger
        self.engine = DynamicsEngine(logger)

    # ------------------------------------------------------------------
    # アンサンブル
    # ------------------------------------------------------------------

    def collect(self, config: EnsembleConfig, master_seed: int,
                workers: int = 1) -> EnsembleArrays:
        """
        全軌道を積分して結果の配列をインデックス順に返す

        Args:
            config: アンサンブル設定
            master_seed: マスターシード
            workers: 並列ワーカー数（結果には影響しない）

        Raises:
            IntegrationBlowupError: いずれかの軌道が発散した場合（シードパス付き）
        """
        n = config.n_trajectories
        tasks = [(config, master_seed, list(range(start, min(start + TRAJECTORY_BLOCK, n))))
                 for start in range(0, n, TRAJECTORY_BLOCK)]
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(_run_block, tasks))
        else:
            outcomes = [self.engine.evolve_batch(
                config.schedule, config.backend, config.step, config.bath, config.model,
                master_seed, indices,
                initial=config.initial,
                p1_initial=config.p1_initial,
                preequilibration_time=config.preequilibration_time,
                absorbing_threshold=config.absorbing_threshold,
                switch_cost=config.switch_cost) for _, _, indices in tasks]

        def join(name):
            return np.concatenate([getattr(o, name) for o in outcomes])

        return EnsembleArrays(
            work=join("work"),
            heat_to_bath=join("heat_to_bath"),
            u_initial=join("u_initial"),
            u_final=join("u_final"),
            initial_bits=join("initial_bits"),
            final_bits=join("final_bits"),
            final_states=join("final_states"),
            passage_times=join("passage_times"),
            budget_exhausted=any(o.budget_exhausted for o in outcomes))

    def summarize(self, arrays: EnsembleArrays, target_bit: Optional[int],
                  wall_time: float = 0.0) -> EnsembleStats:
        """配列から EnsembleStats を計算する（集計順は常にインデックス順）"""
        n = arrays.work.size
        mean_work, se_work = _mean_stderr(arrays.work)
        mean_heat, se_heat = _mean_stderr(arrays.heat_to_bath)
        final_p1, se_p1 = _mean_stderr(arrays.final_bits.astype(np.float64))
        if target_bit is None:
            error, se_error = math.nan, math.nan
        else:
            error, se_error = _mean_stderr(
                (arrays.final_bits != target_bit).astype(np.float64))
        crossed = arrays.passage_times[np.isfinite(arrays.passage_times)]
        mean_fpt, se_fpt = _mean_stderr(crossed)
        return EnsembleStats(
            n_trajectories=n,
            mean_work=mean_work,
            stderr_work=se_work,
            mean_heat_to_bath=mean_heat,
            stderr_heat=se_heat,
            final_p1=final_p1,
            stderr_p1=se_p1,
            error_probability=error,
            stderr_error=se_error,
            initial_p1=float(np.mean(arrays.initial_bits)),
            wall_time=wall_time,
            mean_passage_time=mean_fpt,
            stderr_passage_time=se_fpt,
            crossings=int(crossed.size),
            budget_exhausted=arrays.budget_exhausted)

    def run_ensemble(self, config: EnsembleConfig, master_seed: int,
                     workers: int = 1) -> EnsembleStats:
        """
        n 本の独立な軌道を実行して統計を返す

        Args:
            config: 検証済みのアンサンブル設定（n_trajectories ≥ 2）
            master_seed: マスターシード
            workers: 並列ワーカー数

        Returns:
            EnsembleStats: 同じ (config, master_seed) ならワーカー数に関係なく同一
        """
        stats, _ = self._run(config, master_seed, workers)
        return stats

    def _run(self, config: EnsembleConfig, master_seed: int,
             workers: int) -> Tuple[EnsembleStats, EnsembleArrays]:
        self.logger.ensemble_start(config.experiment, config.backend.value,
                                   config.n_trajectories, workers)
        started = time.perf_counter()
        try:
            arrays = self.collect(config, master_seed, workers)
        except SimulationError as e:
            self.logger.error(f"Ensemble '{config.experiment}' aborted", e)
            raise
        wall_time = time.perf_counter() - started
        self.logger.ensemble_end(config.experiment, config.n_trajectories, wall_time)
        return self.summarize(arrays, config.target_bit, wall_time), arrays

    # ------------------------------------------------------------------
    # スイープ
    # ------------------------------------------------------------------

    def run_sweep(self, base: EnsembleConfig, axis: str, values: Sequence[float],
                  build, master_seed: int, workers: int = 1) -> SweepResult:
        """
        任意のパラメータ格子でアンサンブルを繰り返す

        Args:
            base: 基準となる設定
            axis: 軸の名前
            values: 狭義単調増加の格子
            build: (base, value) → EnsembleConfig を返す関数
        """
        self.logger.method_start("run_sweep")
        values = tuple(float(v) for v in values)
        if any(b <= a for a, b in zip(values, values[1:])):
            raise UsageError(f"sweep grid for '{axis}' must be strictly increasing")
        rows = []
        for i, value in enumerate(values):
            self.logger.sweep_point(axis, value, i, len(values))
            config = build(base, value)
            stats = self.run_ensemble(config, master_seed, workers)
            rows.append(SweepRow(value, stats, inconclusive=stats.budget_exhausted))
        self.logger.method_end("run_sweep")
        return SweepResult(axis, values, tuple(rows))

    def mfpt_experiment(self, barriers: Sequence[float], spec: PotentialSpec,
                        bath: BathParams, n_per_point: int, master_seed: int = 0,
                        workers: int = 1, dt: Optional[float] = None,
                        time_budget: float = MFPT_TIME_BUDGET) -> SweepResult:
        """
        x = +x0 から x = −x0 への平均初通過時間を障壁ごとに測定する

        ln(MFPT) を E/k_BT に対して最小二乗フィットし、生の傾きと、曲率から求めた
        前因子 τ0(E) で割った傾きの両方を fit に入れる。

        Args:
            barriers: E/k_BT の格子（[2, 10] の範囲）
            spec: 井戸の半幅を与えるポテンシャル（障壁の高さは格子で置き換える）
            bath: 熱浴パラメータ
            n_per_point: 障壁あたりの軌道数
            dt: 時間刻み（省略時は各障壁の安定性上限）
            time_budget: 打ち切り時間（Kramers 時間の倍数）

        Returns:
            SweepResult: 通過が n/2 未満の点は inconclusive
        """
        self.logger.method_start("mfpt_experiment")
        barriers = tuple(float(b) for b in barriers)
        lo, hi = MFPT_BARRIER_RANGE
        if any(not lo <= b <= hi for b in barriers):
            raise UsageError(f"MFPT barriers must lie in [{lo}, {hi}] k_BT, got {barriers}")
        rows = []
        for i, reduced in enumerate(barriers):
            self.logger.sweep_point("barrier_height", reduced, i, len(barriers))
            point = PotentialSpec(reduced * bath.kbt, spec.well_halfwidth)
            tau0 = kramers_attempt_time(point, bath)
            step = StepParams(dt=dt or 0.01 * bath.gamma * point.well_halfwidth ** 2
                              / point.barrier_height,
                              record_stride=10 ** 12)
            budget = time_budget * kramers_time(tau0, point.barrier_height, bath)
            config = EnsembleConfig(
                experiment="mfpt",
                backend=Backend.LANGEVIN,
                model=point,
                bath=bath,
                schedule=make_constant_schedule(budget, ControlState(1.0, 0.0)),
                step=step,
                n_trajectories=n_per_point,
                initial=point.well_halfwidth,
                absorbing_threshold=-point.well_halfwidth)
            stats = self.run_ensemble(config, master_seed, workers)
            inconclusive = stats.crossings < n_per_point / 2
            if inconclusive:
                self.logger.warning(
                    f"MFPT at E={reduced} k_BT inconclusive: {stats.crossings}/{n_per_point} crossings")
            rows.append(SweepRow(reduced, stats, inconclusive, {
                "mean_passage_time": stats.mean_passage_time,
                "stderr_passage_time": stats.stderr_passage_time,
                "crossings": float(stats.crossings),
                "attempt_time": tau0.tau0,
            }))
        result = SweepResult("barrier_height", barriers, tuple(rows),
                             self._kramers_fit(rows))
        self.logger.method_end("mfpt_experiment")
        return result

    def _kramers_fit(self, rows: List[SweepRow]) -> Dict[str, float]:
        usable = [r for r in rows if not r.inconclusive and r.stats.mean_passage_time > 0]
        if len(usable) < 2:
            return {}
        x = np.array([r.value for r in usable])
        ln_mfpt = np.log([r.stats.mean_passage_time for r in usable])
        ln_scaled = ln_mfpt - np.log([r.extras["attempt_time"] for r in usable])
        raw = scistats.linregress(x, ln_mfpt)
        scaled = scistats.linregress(x, ln_scaled)
        return {"slope_raw": float(raw.slope),
                "slope_raw_stderr": float(raw.stderr),
                "slope": float(scaled.slope),
                "slope_stderr": float(scaled.stderr),
                "intercept": float(scaled.intercept)}

    def error_vs_dissipation_experiment(self, durations: Sequence[float],
                                        spec: PotentialSpec, bath: BathParams,
                                        n_per_point: int, master_seed: int = 0,
                                        workers: int = 1, lower_fraction: float = 0.9,
                                        tilt_peak: Optional[float] = None,
                                        dt: Optional[float] = None,
                                        preequilibration_time: Optional[float] = None,
                                        max_steps: int = 10 ** 8) -> SweepResult:
        """
        ランダムな初期ビットのリセットについて、時間ごとの (平均発熱, 誤り確率) を測定する

        Raises:
            UsageError: durations が狭義単調増加でない場合
        """
        self.logger.method_start("error_vs_dissipation_experiment")
        tilt = 2.0 * spec.barrier_height if tilt_peak is None else tilt_peak
        step = StepParams(dt=dt or 0.01 * bath.gamma * spec.well_halfwidth ** 2
                          / spec.barrier_height, record_stride=10 ** 12, max_steps=max_steps)
        base = EnsembleConfig(
            experiment="error_vs_dissipation",
            backend=Backend.LANGEVIN,
            model=spec,
            bath=bath,
            schedule=make_reset_schedule(1.0, lower_fraction, tilt),
            step=step,
            n_trajectories=n_per_point,
            p1_initial=0.5,
            preequilibration_time=self._preequilibration(spec, bath, preequilibration_time),
            target_bit=0)

        def build(config, duration):
            return replace(config, schedule=make_reset_schedule(duration, lower_fraction, tilt))

        result = self.run_sweep(base, "duration", durations, build, master_seed, workers)
        self.logger.method_end("error_vs_dissipation_experiment")
        return result

    # ------------------------------------------------------------------
    # 名前付き実験
    # ------------------------------------------------------------------

    def _preequilibration(self, spec: PotentialSpec, bath: BathParams,
                          value: Optional[float]) -> float:
        if value is not None:
            return value
        return 5.0 * bath.gamma * spec.well_halfwidth ** 2 / bath.kbt

    def _erasure(self, name: str, config: EnsembleConfig, master_seed: int,
                 workers: int, zero_heat_tolerance: float,
                 before: Optional[BitEnsemble] = None) -> ErasureExperiment:
        self.logger.method_start(name)
        try:
            stats, arrays = self._run(config, master_seed, workers)
            if before is None:
                before = estimate_bit_probabilities(arrays.initial_bits)
            after = estimate_bit_probabilities(arrays.final_bits)
            report = make_erasure_report(before, after, stats, config.bath,
                                         zero_heat_tolerance)
        except SimulationError as e:
            self.logger.error(f"Experiment '{name}' failed", e)
            raise
        self.logger.info(
            f"[{name}] ΔS_1={report.delta_s_info:+.4f} bit, <W>={stats.mean_work:.6g}, "
            f"<Q>={stats.mean_heat_to_bath:.6g}±{stats.stderr_heat:.2g}, "
            f"bound={report.landauer_min_heat:.6g}, verdict={report.verdict.value}")
        self.logger.method_end(name)
        return ErasureExperiment(name, report, stats, before, after)

    def passive_ite_experiment(self, spec, bath: BathParams, n_trajectories: int,
                               master_seed: int = 0, workers: int = 1,
                               wait_multiplier: float = 20.0,
                               tau0: AttemptTime = AttemptTime(1.0),
                               p1_initial: float = 1.0,
                               step: Optional[StepParams] = None,
                               preequilibration_time: Optional[float] = None,
                               zero_heat_tolerance: float = 0.05) -> ErasureExperiment:
        """
        受動的 ITE: 制御を一切変えずに待つだけで、ビットを 50/50 に熱化させる

        Args:
            spec: PotentialSpec（Langevin）または TwoStateSpec（二状態）
            wait_multiplier: 待ち時間（Kramers 時間の倍数、二状態では 1/r の倍数）
            tau0: Kramers 時間の試行時間
            p1_initial: 初期ビットが 1 である確率

        Returns:
            ErasureExperiment: ΔS_1 ≈ +1 bit/cell、仕事は厳密に 0
        """
        if isinstance(spec, TwoStateSpec):
            if spec.rate <= 0:
                raise UsageError("two-state passive ITE needs rate > 0")
            if not wait_multiplier >= 1:
                raise UsageError(f"wait_multiplier must be >= 1, got {wait_multiplier}")
            schedule = make_constant_schedule(wait_multiplier / spec.rate,
                                              ControlState(1.0, 0.0))
            config = EnsembleConfig(
                experiment="passive_ite", backend=Backend.TWO_STATE, model=spec,
                bath=bath, schedule=schedule,
                step=step or StepParams(dt=0.05 / spec.rate, record_stride=10 ** 12),
                n_trajectories=n_trajectories, p1_initial=p1_initial, target_bit=None)
        else:
            schedule = make_passive_ite_schedule(wait_multiplier, tau0, spec, bath)
            config = EnsembleConfig(
                experiment="passive_ite", backend=Backend.LANGEVIN, model=spec,
                bath=bath, schedule=schedule,
                step=step or StepParams(dt=0.01 * bath.gamma * spec.well_halfwidth ** 2
                                        / spec.barrier_height, record_stride=10 ** 12),
                n_trajectories=n_trajectories, p1_initial=p1_initial,
                preequilibration_time=self._preequilibration(spec, bath, preequilibration_time))
        return self._erasure("passive_ite", config, master_seed, workers, zero_heat_tolerance)

    def active_ite_experiment(self, spec: PotentialSpec, bath: BathParams,
                              n_trajectories: int, duration: float,
                              master_seed: int = 0, workers: int = 1,
                              lower_fraction: float = 0.9, p1_initial: float = 1.0,
                              step: Optional[StepParams] = None,
                              preequilibration_time: Optional[float] = None,
                              zero_heat_tolerance: float = 0.05) -> ErasureExperiment:
        """能動的 ITE: 障壁を下げて熱的に混ぜ、傾けずに障壁を戻す"""
        config = EnsembleConfig(
            experiment="active_ite", backend=Backend.LANGEVIN, model=spec, bath=bath,
            schedule=make_active_ite_schedule(duration, lower_fraction),
            step=step or StepParams(dt=0.01 * bath.gamma * spec.well_halfwidth ** 2
                                    / spec.barrier_height, record_stride=10 ** 12),
            n_trajectories=n_trajectories, p1_initial=p1_initial,
            preequilibration_time=self._preequilibration(spec, bath, preequilibration_time))
        return self._erasure("active_ite", config, master_seed, workers, zero_heat_tolerance)

    def reset_experiment(self, spec: PotentialSpec, bath: BathParams,
                         n_trajectories: int, duration: float,
                         master_seed: int = 0, workers: int = 1,
                         lower_fraction: float = 0.9, tilt_peak: Optional[float] = None,
                         p1_initial: float = 0.5, step: Optional[StepParams] = None,
                         preequilibration_time: Optional[float] = None,
                         zero_heat_tolerance: float = 0.05,
                         name: str = "reset") -> ErasureExperiment:
        """
        ゼロへのリセット。既定ではランダムな初期ビット（S_1 = 1 bit）から出発する

        Returns:
            ErasureExperiment: 準静的な極限で ΔS_1 ≈ −1 bit、平均発熱 ≥ k_BT·ln 2
        """
        tilt = 2.0 * spec.barrier_height if tilt_peak is None else tilt_peak
        config = EnsembleConfig(
            experiment=name, backend=Backend.LANGEVIN, model=spec, bath=bath,
            schedule=make_reset_schedule(duration, lower_fraction, tilt),
            step=step or StepParams(dt=0.01 * bath.gamma * spec.well_halfwidth ** 2
                                    / spec.barrier_height, record_stride=10 ** 12),
            n_trajectories=n_trajectories, p1_initial=p1_initial,
            preequilibration_time=self._preequilibration(spec, bath, preequilibration_time),
            target_bit=0)
        return self._erasure(name, config, master_seed, workers, zero_heat_tolerance)

    def known_data_reset_experiment(self, spec: PotentialSpec, bath: BathParams,
                                    n_trajectories: int, duration: float,
                                    master_seed: int = 0, workers: int = 1,
                                    **kwargs) -> ErasureExperiment:
        """
        既知データ（全ビット 1）のリセット。前後とも S_1 = 0 なので限界は 0 だが、
        測定される散逸は消えない
        """
        return self.reset_experiment(spec, bath, n_trajectories, duration,
                                     master_seed, workers, p1_initial=1.0,
                                     name="known_data_reset", **kwargs)

    def capacitor_experiment(self, spec: CapacitorSpec, bath: BathParams,
                             n_trajectories: int, settle_multiplier: float = 10.0,
                             master_seed: int = 0, workers: int = 1,
                             switch_cost: float = 0.0, steps_per_rc: int = 10,
                             step: Optional[StepParams] = None,
                             zero_heat_tolerance: float = 0.05) -> ErasureExperiment:
        """
        キャパシタ ITE。消去前は確定した値（bit 1）、消去後は電圧の符号で読み出す。
        誤り確率は報告しない（エネルギーのみが対象）
        """
        if not settle_multiplier >= 10:
            raise UsageError(f"settle_multiplier must be >= 10, got {settle_multiplier}")
        config = EnsembleConfig(
            experiment="capacitor_ite", backend=Backend.CAPACITOR, model=spec, bath=bath,
            schedule=make_constant_schedule(settle_multiplier * spec.rc,
                                            ControlState(1.0, 0.0)),
            step=step or StepParams(dt=spec.rc / steps_per_rc, record_stride=10 ** 12),
            n_trajectories=n_trajectories, switch_cost=switch_cost)
        return self._erasure("capacitor_ite", config, master_seed, workers,
                             zero_heat_tolerance, before=BitEnsemble.deterministic([1]))

    # ------------------------------------------------------------------
    # 設定からの実行
    # ------------------------------------------------------------------

    def run_configured(self, config: RunConfig, workers: int = 1) -> "RunOutcome":
        """
        RunConfig の実験名に応じて実験を1回実行する

        mfpt と error_vs_dissipation はそれ自体がスイープなので、[sweep] の格子
        （無ければ既定の格子）で SweepResult を返す。

        Args:
            config: 検証済みの実行設定
            workers: 並列ワーカー数（結果には影響しない）

        Returns:
            ErasureExperiment / SweepResult / EnsembleStats / AnalyticResult のいずれか
        """
        name = config.experiment
        self.logger.info(f"Running '{name}' with seed {config.master_seed}")
        if config.is_analytic:
            return analytic_result(config)
        if name in SWEEP_EXPERIMENTS:
            return self.sweep_configured(config, workers)
        if config.sweep is not None:
            self.logger.warning(f"[sweep] section ignored by a single run of '{name}'")
        return self._run_point(config, workers)

    def sweep_configured(self, config: RunConfig, workers: int = 1) -> SweepResult:
        """
        [sweep] の軸と格子で実験を繰り返す

        軸は任意の数値キー（'section.key'）。各点では設定を再解析するので、
        障壁の高さに依存する dt などの既定値も点ごとに決まり直す。

        Raises:
            ConfigError: [sweep] が無い場合（mfpt / error_vs_dissipation を除く）
            UsageError: 解析的な実験をスイープしようとした場合
        """
        name = config.experiment
        p = config.protocol
        if name == "mfpt":
            grid = config.sweep.values if config.sweep else DEFAULT_MFPT_BARRIERS
            explicit = dict(config.explicit)
            return self.mfpt_experiment(grid, config.potential, config.bath,
                                        config.n_trajectories, config.master_seed, workers,
                                        dt=explicit.get("integration.dt"))
        if name == "error_vs_dissipation":
            grid = config.sweep.values if config.sweep else DEFAULT_RESET_DURATIONS
            return self.error_vs_dissipation_experiment(
                grid, config.potential, config.bath, config.n_trajectories,
                config.master_seed, workers, lower_fraction=p.lower_fraction,
                tilt_peak=p.tilt_peak, dt=config.dt,
                preequilibration_time=p.preequilibration_time, max_steps=config.max_steps)
        if config.is_analytic:
            raise UsageError(f"experiment '{name}' is analytic and has no ensemble to sweep")
        if config.sweep is None:
            raise ConfigError("sweep", f"experiment '{name}' needs a [sweep] section")

        self.logger.method_start("sweep_configured")
        axis, values = config.sweep.axis, config.sweep.values
        rows = []
        for i, value in enumerate(values):
            self.logger.sweep_point(axis, value, i, len(values))
            outcome = self._run_point(config.with_value(axis, value), workers)
            if isinstance(outcome, ErasureExperiment):
                stats, report = outcome.stats, outcome.report
            else:
                stats, report = outcome, None
            rows.append(SweepRow(value, stats, stats.budget_exhausted, report=report))
        self.logger.method_end("sweep_configured")
        return SweepResult(axis, values, tuple(rows))

    def _run_point(self, config: RunConfig, workers: int):
        name = config.experiment
        bath, p = config.bath, config.protocol
        seed, n = config.master_seed, config.n_trajectories
        step = config.step_params()
        tolerance = p.zero_heat_tolerance

        if name == "passive_ite":
            if config.backend is Backend.TWO_STATE:
                spec, p1 = config.two_state, config.two_state.p1_initial
            else:
                spec, p1 = config.potential, p.p1_initial
            return self.passive_ite_experiment(
                spec, bath, n, seed, workers, wait_multiplier=p.wait_multiplier,
                tau0=config.attempt_time, p1_initial=p1, step=step,
                preequilibration_time=p.preequilibration_time,
                zero_heat_tolerance=tolerance)
        if name == "active_ite":
            return self.active_ite_experiment(
                config.potential, bath, n, p.duration, seed, workers,
                lower_fraction=p.lower_fraction, p1_initial=p.p1_initial, step=step,
                preequilibration_time=p.preequilibration_time,
                zero_heat_tolerance=tolerance)
        if name in ("reset", "known_data_reset"):
            options = dict(lower_fraction=p.lower_fraction, tilt_peak=p.tilt_peak, step=step,
                           preequilibration_time=p.preequilibration_time,
                           zero_heat_tolerance=tolerance)
            if name == "reset":
                return self.reset_experiment(config.potential, bath, n, p.duration, seed,
                                             workers, p1_initial=p.p1_initial, **options)
            return self.known_data_reset_experiment(config.potential, bath, n, p.duration,
                                                    seed, workers, **options)
        if name == "capacitor_ite":
            return self.capacitor_experiment(
                config.capacitor, bath, n, p.settle_multiplier, seed, workers,
                switch_cost=config.switch_cost, step=step, zero_heat_tolerance=tolerance)
        return self.run_ensemble(self._static_ensemble(config), seed, workers)

    def _static_ensemble(self, config: RunConfig) -> EnsembleConfig:
        """汎用アンサンブル: [control] の制御を protocol.duration だけ保持する"""
        backend = config.backend
        model = {Backend.LANGEVIN: config.potential,
                 Backend.TWO_STATE: config.two_state,
                 Backend.CAPACITOR: config.capacitor}[backend]
        return EnsembleConfig(
            experiment=config.experiment, backend=backend, model=model, bath=config.bath,
            schedule=make_constant_schedule(config.protocol.duration, config.control),
            step=config.step_params(),
            n_trajectories=config.n_trajectories,
            p1_initial=(config.two_state.p1_initial if backend is Backend.TWO_STATE
                        else config.protocol.p1_initial),
            preequilibration_time=(config.protocol.preequilibration_time
                                   if backend is Backend.LANGEVIN else 0.0),
            switch_cost=config.switch_cost if backend is Backend.CAPACITOR else 0.0)

    # ------------------------------------------------------------------
    # 検査
    # ------------------------------------------------------------------

    def boltzmann_check(self, spec: PotentialSpec, bath: BathParams, n_samples: int,
                        master_seed: int = 0, workers: int = 1, n_bins: int = 50,
                        duration: float = 20.0, half_range: float = 2.0,
                        step_fraction: float = 0.1) -> Dict[str, float]:
        """
        静的な対称二重井戸での最終位置のヒストグラムを Boltzmann 重みと χ² 検定で比較する

        各軌道は局所平衡化された井戸から始まる独立なサンプルを1つ与える。
        端のビンは範囲外の質量も含み、期待度数の小さいビンは隣と統合する。
        Euler–Maruyama の定常分布の偏りは dt に比例するので、刻みは安定性上限の
        step_fraction 倍にする。
        """
        self.logger.method_start("boltzmann_check")
        config = EnsembleConfig(
            experiment="boltzmann_check", backend=Backend.LANGEVIN, model=spec, bath=bath,
            schedule=make_constant_schedule(duration, ControlState(1.0, 0.0)),
            step=StepParams(dt=step_fraction * 0.01 * bath.gamma * spec.well_halfwidth ** 2
                            / spec.barrier_height, record_stride=10 ** 12),
            n_trajectories=n_samples, p1_initial=0.5,
            preequilibration_time=self._preequilibration(spec, bath, None))
        arrays = self.collect(config, master_seed, workers)
        edges = np.linspace(-half_range, half_range, n_bins + 1) * spec.well_halfwidth
        clipped = np.clip(arrays.final_states, edges[0], edges[-1])
        observed, _ = np.histogram(clipped, bins=edges)
        wide = edges.copy()
        wide[0], wide[-1] = -np.inf, np.inf
        expected = boltzmann_bin_probabilities(spec, ControlState(1.0, 0.0), bath, wide) * n_samples
        observed, expected = _merge_sparse_bins(observed.astype(np.float64), expected)
        chi2, p_value = scistats.chisquare(observed, expected)
        self.logger.info(f"Boltzmann χ² = {chi2:.3f} over {observed.size} bins, p = {p_value:.4f}")
        self.logger.method_end("boltzmann_check")
        return {"chi2": float(chi2), "p_value": float(p_value), "bins": float(observed.size)}

    def ou_variance_check(self, spec: CapacitorSpec, bath: BathParams, n_samples: int,
                          master_seed: int = 0, workers: int = 1,
                          settle_multiplier: float = 20.0) -> Dict[str, float]:
        """OU 過程を長時間緩和させた電圧の分散と等分配則 k_BT/C の相対誤差"""
        self.logger.method_start("ou_variance_check")
        config = EnsembleConfig(
            experiment="ou_variance_check", backend=Backend.CAPACITOR, model=spec, bath=bath,
            schedule=make_constant_schedule(settle_multiplier * spec.rc,
                                            ControlState(1.0, 0.0)),
            step=StepParams(dt=spec.rc, record_stride=10 ** 12),
            n_trajectories=n_samples)
        arrays = self.collect(config, master_seed, workers)
        variance = float(np.var(arrays.final_states, ddof=1))
        expected = bath.kbt / spec.capacitance
        self.logger.method_end("ou_variance_check")
        return {"variance": variance, "expected": expected,
                "relative_error": abs(variance - expected) / expected}

    def equilibrium_check(self, potential: PotentialSpec, capacitor: CapacitorSpec,
                          bath: BathParams, n_samples: int, master_seed: int = 0,
                          workers: int = 1,
                          n_histogram_samples: Optional[int] = None) -> Dict[str, Dict[str, float]]:
        """
        平衡統計の検査をまとめて実行する

        Args:
            potential: Boltzmann ヒストグラムを取る二重井戸
            capacitor: 定常分散を測るキャパシタ
            bath: 熱浴パラメータ
            n_samples: OU 分散のサンプル数
            n_histogram_samples: ヒストグラムのサンプル数（省略時は n_samples）

        Returns:
            Dict: "boltzmann" と "ou_variance" の結果
        """
        return {
            "boltzmann": self.boltzmann_check(potential, bath, n_histogram_samples or n_samples,
                                              master_seed, workers),
            "ou_variance": self.ou_variance_check(capacitor, bath, n_samples,
                                                  master_seed, workers),
        }

    def ledger_exactness_check(self, n_configs: int = 100, n_steps: int = 1000,
                               master_seed: int = 0) -> Dict[str, float]:
        """
        ランダムなポテンシャル・スケジュール・バックエンドで |ΔU − W + Q| の最大値を求める
        """
        self.logger.method_start("ledger_exactness_check")
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed)))
        worst = 0.0
        for i in range(n_configs):
            backend = (Backend.LANGEVIN, Backend.TWO_STATE, Backend.CAPACITOR)[i % 3]
            bath = BathParams(kbt=float(rng.uniform(0.5, 2.0)),
                              gamma=float(rng.uniform(0.5, 2.0)))
            points = [(0.0, float(rng.uniform(0, 1)), float(rng.uniform(-3, 3)))]
            for t in np.sort(rng.uniform(0, 1, size=3)):
                points.append((float(t), float(rng.uniform(0, 1)), float(rng.uniform(-3, 3))))
            if backend is Backend.LANGEVIN:
                model = PotentialSpec(float(rng.uniform(1, 10)), float(rng.uniform(0.5, 2)))
                dt = 0.01 * bath.gamma * model.well_halfwidth ** 2 / model.barrier_height
            elif backend is Backend.TWO_STATE:
                model = TwoStateSpec(rate=float(rng.uniform(0.1, 2.0)), p1_initial=0.5)
                dt = 0.05 / (model.rate * math.exp(3.0 / bath.kbt))
            else:
                model = CapacitorSpec(float(rng.uniform(0.5, 2)), float(rng.uniform(0.5, 2)),
                                      float(rng.normal()))
                dt = 0.05 * model.rc
            duration = n_steps * dt
            scaled = tuple((t * duration, b, a) for t, b, a in points[:1] + points[1:])
            if scaled[-1][0] < duration:
                scaled = scaled + ((duration, scaled[-1][1], scaled[-1][2]),)
            schedule = ProtocolSchedule(_strictly_increasing(scaled), duration)
            outcome = self.engine.evolve_batch(
                schedule, backend, StepParams(dt=dt, record_stride=10 ** 12), bath, model,
                master_seed, [i], p1_initial=0.5)
            residual = np.abs(outcome.u_final - outcome.u_initial
                              - outcome.work + outcome.heat_to_bath)
            worst = max(worst, float(residual.max()))
        self.logger.info(f"Ledger exactness: max |ΔU − W + Q| = {worst:.3e}")
        self.logger.method_end("ledger_exactness_check")
        return {"max_residual": worst, "configs": float(n_configs), "steps": float(n_steps)}


def _strictly_increasing(points):
    kept = [points[0]]
    for p in points[1:]:
        if p[0] > kept[-1][0]:
            kept.append(p)
    return tuple(kept)


def _merge_sparse_bins(observed: np.ndarray,
                       expected: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """期待度数が MIN_EXPECTED_COUNT 未満のビンを隣接ビンへ順に統合する"""
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= MIN_EXPECTED_COUNT:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and exp:
        obs[-1] += acc_o
        exp[-1] += acc_e
    obs_arr, exp_arr = np.array(obs), np.array(exp)
    # chisquare は合計の一致を要求する
    exp_arr *= obs_arr.sum() / exp_arr.sum()
    return obs_arr, exp_arr
