"""
Acceptance Suite Module
組み込みの受け入れ基準（A1〜A9）を実行し、基準ごとに合否を判定するモジュール

主な機能:
- 受動的 ITE、準静的リセット、キャパシタ ITE の物理的な検証
- 第一法則台帳の厳密性、Kramers スケーリング、平衡統計の検証
- π ビット列の監査と誤り・散逸トレードオフの検証
- A1〜A8 を縮小規模・ワーカー数違いで再実行し、計測結果のバイト単位の一致を検証
- 機械可読な 'PASS|FAIL|INCONCLUSIVE <id> <detail>' 形式の出力
"""

import json
import math
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from errors import InconclusiveError, SimulationError
from experiment_harness import TRAJECTORY_BLOCK, ExperimentHarness
from logger import Logger
from model_core import AttemptTime, BathParams, CapacitorSpec, PotentialSpec
from pi_digits import hex_digits_to_bits, pi_hex_digits, pi_hex_prefix
from protocols import deterministic_data_audit

QUICK_CRITERIA = ("A1", "A4", "A6")
LN2 = math.log(2.0)

# 縮小実行の軌道数。2 ブロックにまたがるので並列経路を通る
REDUCED_TRAJECTORIES = TRAJECTORY_BLOCK + 76
# 縮小実行の MFPT 格子（高い障壁は通過に時間がかかる）
REDUCED_MFPT_BARRIERS = (4.0, 5.0)
# 計測結果の比較から除くフィールド
VOLATILE_FIELDS = frozenset({"wall_time"})


class Status(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class CriterionResult:
    criterion_id: str
    status: Status
    detail: str
    evidence: str = field(default="", compare=False, repr=False)

    def line(self) -> str:
        return f"{self.status.value} {self.criterion_id} {self.detail}"


def _status(passed: bool) -> Status:
    return Status.PASS if passed else Status.FAIL


def _canonical(value: Any) -> Any:
    if is_dataclass(value) and not isinstance(value, type):
        return {f.name: _canonical(getattr(value, f.name))
                for f in fields(value) if f.name not in VOLATILE_FIELDS}
    if isinstance(value, Enum):
        return _canonical(value.value)
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in value.items() if k not in VOLATILE_FIELDS}
    if isinstance(value, np.ndarray):
        return [_canonical(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value).hex()
    return value


def fingerprint(value: Any) -> str:
    """
    計測結果の正準な JSON 表現

    浮動小数点は16進表記で全ビットを保存する。経過時間は含めない。
    """
    return json.dumps(_canonical(value), sort_keys=True, ensure_ascii=False)


class AcceptanceSuite:

    def __init__(self, logger: Logger, workers: int = 1, master_seed: int = 0):
        """
        受け入れスイートの初期化

        Args:
            logger: ログ出力用のLoggerインスタンス
            workers: 並列ワーカー数
            master_seed: 全基準で共通のマスターシード
        """
        self.logger = logger
        self.workers = workers
        self.master_seed = master_seed
        self.harness = ExperimentHarness(logger)
        self.bath = BathParams(1.0, 1.0)

    def criteria(self) -> Dict[str, Callable[..., CriterionResult]]:
        return {
            "A1": self.passive_ite,
            "A2": self.quasi_static_reset,
            "A3": self.capacitor_negative_dissipation,
            "A4": self.ledger_exactness,
            "A5": self.kramers_scaling,
            "A6": self.equilibrium_statistics,
            "A7": self.deterministic_data,
            "A8": self.error_dissipation_tradeoff,
            "A9": self.reproducibility,
        }

    def run(self, quick: bool = False) -> List[CriterionResult]:
        """
        基準を順に実行する。1つの基準の失敗で残りを止めない

        Args:
            quick: True なら A1, A4, A6 だけを実行する

        Returns:
            List[CriterionResult]: 基準ごとの結果
        """
        self.logger.method_start("AcceptanceSuite.run")
        results = []
        for criterion_id, check in self.criteria().items():
            if quick and criterion_id not in QUICK_CRITERIA:
                continue
            try:
                result = check()
            except InconclusiveError as e:
                result = CriterionResult(criterion_id, Status.INCONCLUSIVE, str(e))
            except SimulationError as e:
                self.logger.error(f"Criterion {criterion_id} raised", e)
                result = CriterionResult(criterion_id, Status.FAIL,
                                         f"{type(e).__name__}: {e}")
            self.logger.criterion_result(result.criterion_id, result.status.value,
                                         result.detail)
            results.append(result)
        self.logger.method_end("AcceptanceSuite.run")
        return results

    def _trajectories(self, full: int, reduced: bool) -> int:
        return REDUCED_TRAJECTORIES if reduced else full

    def _workers(self, workers: Optional[int]) -> int:
        return self.workers if workers is None else workers

    # ------------------------------------------------------------------
    # 基準
    # 各基準は reduced=True で軌道数を縮小し、workers で並列数を上書きできる
    # ------------------------------------------------------------------

    def passive_ite(self, reduced: bool = False,
                    workers: Optional[int] = None) -> CriterionResult:
        experiment = self.harness.passive_ite_experiment(
            PotentialSpec(4.0, 1.0), self.bath, self._trajectories(10 ** 4, reduced),
            self.master_seed, self._workers(workers),
            wait_multiplier=20.0, tau0=AttemptTime(1.0), p1_initial=1.0)
        stats, report = experiment.stats, experiment.report
        band = max(3.0 * stats.stderr_heat, 0.05 * self.bath.kbt)
        checks = {
            "work": stats.mean_work == 0.0 and stats.stderr_work == 0.0,
            "p1": 0.48 <= stats.final_p1 <= 0.52,
            "dS": abs(report.delta_s_info - 1.0) <= 0.01,
            "heat": abs(stats.mean_heat_to_bath) <= band,
            "verdict": report.verdict.value == "bound-vacuous",
        }
        detail = (f"work={stats.mean_work:g} p1={stats.final_p1:.4f} "
                  f"dS={report.delta_s_info:.4f} heat={stats.mean_heat_to_bath:.4f}"
                  f"±{stats.stderr_heat:.4f} verdict={report.verdict.value}")
        return self._verdict("A1", checks, detail, experiment)

    def quasi_static_reset(self, reduced: bool = False,
                           workers: Optional[int] = None) -> CriterionResult:
        experiment = self.harness.reset_experiment(
            PotentialSpec(6.0, 1.0), self.bath, self._trajectories(10 ** 4, reduced),
            duration=100.0, master_seed=self.master_seed, workers=self._workers(workers),
            p1_initial=0.5)
        stats = experiment.stats
        bound = self.bath.kbt * LN2
        checks = {
            "heat": bound <= stats.mean_heat_to_bath <= 1.5 * bound,
            "error": stats.error_probability <= 0.05,
        }
        detail = (f"heat={stats.mean_heat_to_bath:.4f}±{stats.stderr_heat:.4f} "
                  f"(kTln2={bound:.4f}) error={stats.error_probability:.4f}")
        return self._verdict("A2", checks, detail, experiment)

    def capacitor_negative_dissipation(self, reduced: bool = False,
                                       workers: Optional[int] = None) -> CriterionResult:
        checks, parts, measured = {}, [], []
        for stored in (0.0, 0.25, 0.5, 1.0, 2.0):
            spec = CapacitorSpec(1.0, 1.0, math.sqrt(2.0 * stored * self.bath.kbt))
            stats = self.harness.capacitor_experiment(
                spec, self.bath, self._trajectories(10 ** 5, reduced), settle_multiplier=10.0,
                master_seed=self.master_seed, workers=self._workers(workers)).stats
            measured.append(stats)
            expected = stored * self.bath.kbt - 0.5 * self.bath.kbt
            heat = stats.mean_heat_to_bath
            checks[f"energy@{stored}"] = abs(heat - expected) <= 3.0 * stats.stderr_heat
            if stored < 0.5:
                checks[f"sign@{stored}"] = heat < 0
            elif stored > 0.5:
                checks[f"sign@{stored}"] = heat > 0
            parts.append(f"{stored}:{heat:+.4f}/{expected:+.4f}")
        return self._verdict("A3", checks, " ".join(parts), measured)

    def ledger_exactness(self, reduced: bool = False,
                         workers: Optional[int] = None) -> CriterionResult:
        n_configs, n_steps = (12, 200) if reduced else (100, 1000)
        outcome = self.harness.ledger_exactness_check(n_configs, n_steps, self.master_seed)
        residual = outcome["max_residual"]
        return self._verdict("A4", {"residual": residual <= 1e-12},
                             f"max|dU-W+Q|={residual:.3e}", outcome)

    def kramers_scaling(self, reduced: bool = False,
                        workers: Optional[int] = None) -> CriterionResult:
        barriers = REDUCED_MFPT_BARRIERS if reduced else (4.0, 5.0, 6.0, 7.0, 8.0)
        result = self.harness.mfpt_experiment(
            barriers, PotentialSpec(4.0, 1.0), self.bath, self._trajectories(500, reduced),
            self.master_seed, self._workers(workers))
        if result.inconclusive or "slope" not in result.fit:
            raise InconclusiveError(
                "too few crossings within the step budget: "
                + ", ".join(f"E={r.value:g}:{r.stats.crossings}" for r in result.rows))
        slope = result.fit["slope"]
        detail = (f"slope={slope:.4f}±{result.fit['slope_stderr']:.4f} "
                  f"raw={result.fit['slope_raw']:.4f}")
        return self._verdict("A5", {"slope": abs(slope - 1.0) <= 0.1}, detail, result)

    def equilibrium_statistics(self, reduced: bool = False,
                               workers: Optional[int] = None) -> CriterionResult:
        outcome = self.harness.equilibrium_check(
            PotentialSpec(4.0, 1.0), CapacitorSpec(1.0, 1.0, 0.0), self.bath,
            n_samples=self._trajectories(10 ** 5, reduced), master_seed=self.master_seed,
            workers=self._workers(workers),
            n_histogram_samples=self._trajectories(2 * 10 ** 4, reduced))
        variance, boltzmann = outcome["ou_variance"], outcome["boltzmann"]
        checks = {"ou": variance["relative_error"] <= 0.01,
                  "chi2": boltzmann["p_value"] > 0.01}
        detail = (f"var={variance['variance']:.5f} (kT/C={variance['expected']:.5f}) "
                  f"chi2_p={boltzmann['p_value']:.4f}")
        return self._verdict("A6", checks, detail, outcome)

    def deterministic_data(self, reduced: bool = False,
                           workers: Optional[int] = None) -> CriterionResult:
        n_bits = 10 ** 3 if reduced else 10 ** 4
        audit = deterministic_data_audit(n_bits)
        first = hex_digits_to_bits(pi_hex_prefix(8))
        expected = [int(b) for b in format(0x243F6A88, "032b")]
        extracted = pi_hex_digits(1000, 24) == pi_hex_prefix(1024)[1000:]
        checks = {
            "entropy": 0.99 <= audit.empirical_entropy_bits_per_bit <= 1.0,
            "cost": abs(audit.description_cost_bits - math.log2(n_bits)) < 1e-12,
            "prefix": first == expected,
            "extraction": extracted,
        }
        detail = (f"entropy={audit.empirical_entropy_bits_per_bit:.5f} bits/bit "
                  f"cost={audit.description_cost_bits:.2f} bits prefix_ok={first == expected} "
                  f"extraction_ok={extracted}")
        return self._verdict("A7", checks, detail,
                             {"audit": audit, "prefix": first, "extraction": extracted})

    def error_dissipation_tradeoff(self, reduced: bool = False,
                                   workers: Optional[int] = None) -> CriterionResult:
        result = self.harness.error_vs_dissipation_experiment(
            (0.01, 0.1, 1.0, 10.0), PotentialSpec(6.0, 1.0), self.bath,
            self._trajectories(2000, reduced), self.master_seed, self._workers(workers))
        if result.inconclusive:
            raise InconclusiveError("step budget exhausted in the duration sweep")
        errors = [row.stats.error_probability for row in result.rows]
        violations = result.non_increasing_violations("error_probability", "stderr_error")
        checks = {"short": errors[0] >= 0.4,
                  "long": errors[-1] <= 0.05,
                  "monotone": not violations}
        detail = "error=" + ",".join(f"{v:g}:{e:.3f}" for v, e in zip(result.values, errors))
        return self._verdict("A8", checks, detail, result)

    def reproducibility(self) -> CriterionResult:
        """
        A1〜A8 を縮小規模で、同じシードのままワーカー数だけを変えて2回実行し、
        計測結果の正準表現をバイト単位で比較する

        基準が例外で終わった場合は例外の種類とメッセージを比較する。
        """
        other = max(2, self.workers)
        checks = {}
        for criterion_id, check in self.criteria().items():
            if criterion_id == "A9":
                continue
            outputs = []
            for workers in (1, other):
                try:
                    outputs.append(check(reduced=True, workers=workers).evidence)
                except SimulationError as e:
                    outputs.append(f"{type(e).__name__}: {e}")
            checks[criterion_id] = outputs[0] == outputs[1]
        detail = f"workers 1 vs {other}: " + " ".join(
            f"{cid}={'same' if same else 'differs'}" for cid, same in checks.items())
        return self._verdict("A9", checks, detail)

    def _verdict(self, criterion_id: str, checks: Dict[str, bool], detail: str,
                 measured: Any = None) -> CriterionResult:
        failed = [name for name, ok in checks.items() if not ok]
        if failed:
            detail = f"{detail} failed=[{','.join(failed)}]"
        evidence = "" if measured is None else fingerprint(measured)
        return CriterionResult(criterion_id, _status(not failed), detail, evidence)
