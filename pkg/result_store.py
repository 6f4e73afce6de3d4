"""
Result Store Module
実験結果を行区切りのレコードとして永続化し、表・CSV・プロット用データに変換するモジュール

主な機能:
- 実験結果（単発・スイープ・解析的計算）から固定フィールド順のレコードを作成
- 解決済みの設定とアーティファクトのバージョンをレコードに埋め込み
- UTF-8 の行区切りレコードの書き込み・読み込み
- pandas による表形式・CSV（17桁の有効数字）の出力
- スイープの関係ごとの (x, y, err) 形式のプロット用テキスト
"""

import json
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from entropy_accounting import ErasureReport
from errors import UsageError
from experiment_harness import (AnalyticResult, EnsembleStats, ErasureExperiment,
                                RunOutcome, SweepResult)
from logger import Logger
from run_config import RunConfig

ARTIFACT_VERSION = "0.1.0"

# 永続化レコードと CSV の先頭に並ぶフィールド（この順序は固定）
RECORD_FIELDS = (
    "experiment", "seed", "n",
    "mean_work", "stderr_work",
    "mean_heat", "stderr_heat",
    "final_p1", "stderr_p1",
    "error_prob",
    "delta_s_info_bits", "landauer_min_heat", "verdict",
)
# 表示用の列（表形式）
TABLE_FIELDS = ("experiment", "axis_value", "n", "mean_work", "mean_heat", "stderr_heat",
                "final_p1", "error_prob", "delta_s_info_bits", "landauer_min_heat",
                "verdict", "inconclusive")
CSV_FLOAT_FORMAT = "%.17g"


def _clean(value: Any) -> Any:
    """JSON に書ける値へ変換する。非有限の浮動小数点は null"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _number(value: Optional[float]) -> float:
    return math.nan if value is None else float(value)


class ResultStore:

    def __init__(self, logger: Logger):
        """
        結果ストアの初期化

        Args:
            logger: ログ出力用のLoggerインスタンス
        """
        self.logger = logger

    # ------------------------------------------------------------------
    # レコードの作成
    # ------------------------------------------------------------------

    def records_for(self, config: RunConfig, outcome: RunOutcome) -> List[Dict[str, Any]]:
        """
        実験結果をレコードのリストに変換する

        Args:
            config: 実行に使った設定（レコードに埋め込む）
            outcome: ExperimentHarness.run_configured / sweep_configured の戻り値

        Returns:
            List[Dict]: アンサンブル1つ（スイープでは格子点1つ）につき1レコード
        """
        if isinstance(outcome, SweepResult):
            records = []
            for row in outcome.rows:
                record = self._ensemble_fields(config, row.stats, row.report)
                record["axis"] = outcome.axis
                record["axis_value"] = row.value
                record["inconclusive"] = row.inconclusive
                record.update(row.extras)
                if outcome.fit:
                    record["fit"] = dict(outcome.fit)
                records.append(self._finish(config, record))
            return records
        if isinstance(outcome, ErasureExperiment):
            return [self._finish(config, self._ensemble_fields(config, outcome.stats,
                                                               outcome.report))]
        if isinstance(outcome, EnsembleStats):
            return [self._finish(config, self._ensemble_fields(config, outcome, None))]
        if isinstance(outcome, AnalyticResult):
            record: Dict[str, Any] = {key: None for key in RECORD_FIELDS}
            record["experiment"] = outcome.name
            record["seed"] = config.master_seed
            record["values"] = dict(outcome.values)
            return [self._finish(config, record)]
        raise UsageError(f"cannot persist a result of type {type(outcome).__name__}")

    def _ensemble_fields(self, config: RunConfig, stats: EnsembleStats,
                         report: Optional[ErasureReport]) -> Dict[str, Any]:
        # 経過時間は実行ごとに変わるのでレコードには入れない
        record: Dict[str, Any] = {
            "experiment": config.experiment,
            "seed": config.master_seed,
            "n": stats.n_trajectories,
            "mean_work": stats.mean_work,
            "stderr_work": stats.stderr_work,
            "mean_heat": stats.mean_heat_to_bath,
            "stderr_heat": stats.stderr_heat,
            "final_p1": stats.final_p1,
            "stderr_p1": stats.stderr_p1,
            "error_prob": stats.error_probability,
            "delta_s_info_bits": report.delta_s_info if report else None,
            "landauer_min_heat": report.landauer_min_heat if report else None,
            "verdict": report.verdict.value if report else None,
        }
        record["stderr_error_prob"] = stats.stderr_error
        record["inconclusive"] = stats.budget_exhausted
        return record

    def _finish(self, config: RunConfig, record: Dict[str, Any]) -> Dict[str, Any]:
        record["version"] = ARTIFACT_VERSION
        record["config"] = config.to_dict()
        return _clean(record)

    # ------------------------------------------------------------------
    # 永続化
    # ------------------------------------------------------------------

    def dumps(self, records: List[Dict[str, Any]]) -> str:
        """1行1レコードのテキスト。同じレコードからは常に同じバイト列になる"""
        return "".join(json.dumps(_clean(r), ensure_ascii=False, allow_nan=False) + "\n"
                       for r in records)

    def write(self, path: str, records: List[Dict[str, Any]]) -> None:
        """
        レコードをファイルに書き込む（既存のファイルは置き換える）

        Args:
            path: 出力先のパス
            records: 書き込むレコード
        """
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.write(self.dumps(records))
            self.logger.info(f"Wrote {len(records)} record(s) to {path}")
        except OSError as e:
            self.logger.error(f"Failed to write results to {path}", e)
            raise

    def read(self, path: str) -> List[Dict[str, Any]]:
        """
        行区切りのレコードを読み込む

        Raises:
            UsageError: ファイルが存在しない、またはレコードとして解釈できない行がある場合
        """
        try:
            with open(path, encoding="utf-8") as f:
                lines = f.readlines()
        except FileNotFoundError:
            raise UsageError(f"result file not found: {path}")
        records = []
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise UsageError(f"{path}:{number}: not a result record ({e.msg})")
            if not isinstance(record, dict) or "experiment" not in record:
                raise UsageError(f"{path}:{number}: record has no 'experiment' field")
            records.append(record)
        self.logger.info(f"Read {len(records)} record(s) from {path}")
        return records

    # ------------------------------------------------------------------
    # 表示・エクスポート
    # ------------------------------------------------------------------

    def to_frame(self, records: List[Dict[str, Any]]) -> pd.DataFrame:
        """
        レコードを DataFrame にする。列は固定フィールド順、その後に追加フィールド

        埋め込まれた設定とバージョンは除き、入れ子の値は 'values.n_bits' のように展開する。
        """
        if not records:
            return pd.DataFrame(columns=list(RECORD_FIELDS))
        stripped = [{k: v for k, v in r.items() if k not in ("config", "version")}
                    for r in records]
        frame = pd.json_normalize(stripped, sep=".")
        extra = [c for c in frame.columns if c not in RECORD_FIELDS]
        for column in RECORD_FIELDS:
            if column not in frame.columns:
                frame[column] = None
        return frame[list(RECORD_FIELDS) + extra]

    def to_csv(self, records: List[Dict[str, Any]]) -> str:
        """ヘッダ付き CSV。浮動小数点は 17 桁の有効数字（読み戻して厳密に一致）"""
        return self.to_frame(records).to_csv(index=False, float_format=CSV_FLOAT_FORMAT,
                                              lineterminator="\n")

    def render_table(self, records: List[Dict[str, Any]]) -> str:
        """人が読む表と、スイープがあればプロット用ブロックを続けたテキスト"""
        frame = self.to_frame(records)
        columns = [c for c in TABLE_FIELDS if c in frame.columns]
        value_columns = [c for c in frame.columns if c.startswith("values.")]
        table = frame[columns + value_columns].to_string(
            index=False, na_rep="-", float_format=lambda v: f"{v:.6g}")
        blocks = self.plot_blocks(records)
        return table + "\n" + ("\n" + blocks if blocks else "")

    def plot_blocks(self, records: List[Dict[str, Any]]) -> str:
        """
        スイープのレコードから関係ごとに 'x y err' の3列ブロックを作る

        mfpt では ln(MFPT) を、それ以外では平均発熱と（あれば）誤り確率を軸の値に対して並べる。
        """
        groups: Dict[Tuple[str, str], List[Dict[str, Any]]] = {}
        for record in records:
            if record.get("axis") is not None:
                groups.setdefault((record["experiment"], record["axis"]), []).append(record)

        blocks = []
        for (experiment, axis), rows in groups.items():
            x = [_number(r["axis_value"]) for r in rows]
            relations = []
            if experiment == "mfpt":
                means = np.array([_number(r.get("mean_passage_time")) for r in rows])
                errors = np.array([_number(r.get("stderr_passage_time")) for r in rows])
                with np.errstate(divide="ignore", invalid="ignore"):
                    relations.append(("ln_mfpt", np.log(means), errors / means))
            relations.append(("mean_heat",
                              [_number(r.get("mean_heat")) for r in rows],
                              [_number(r.get("stderr_heat")) for r in rows]))
            if any(r.get("error_prob") is not None for r in rows):
                relations.append(("error_prob",
                                  [_number(r.get("error_prob")) for r in rows],
                                  [_number(r.get("stderr_error_prob")) for r in rows]))
            for label, y, err in relations:
                data = pd.DataFrame({"x": x, "y": y, "err": err})
                body = data.to_csv(sep=" ", index=False, header=False,
                                   float_format=CSV_FLOAT_FORMAT, na_rep="nan",
                                   lineterminator="\n")
                blocks.append(f"# {experiment}: {label} vs {axis}\n# x y err\n{body}")
        return "\n".join(blocks)
