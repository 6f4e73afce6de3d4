"""
Logger Module
アプリケーション全体のログ管理を行うモジュール

主な機能:
- メソッドの実行開始/終了のログ記録
- アンサンブル実行とスイープ点のログ
- 受け入れ基準の判定結果のログ
- エラー処理とスタックトレースの記録
- ログレベルと出力先の環境変数による制御
"""

import logging
import os
import sys

from dotenv import load_dotenv


class Logger:

    def __init__(self):
        load_dotenv()
        level_name = os.environ.get("ERASURE_LOG_LEVEL", "INFO").upper()
        level = getattr(logging, level_name, logging.INFO)

        # 標準出力は validate / report の結果専用なので stderr に出す
        handlers = [logging.StreamHandler(sys.stderr)]
        log_file = os.environ.get("ERASURE_LOG_FILE")
        if log_file:
            handlers.append(logging.FileHandler(log_file, encoding='utf-8'))

        logging.basicConfig(level=level,
                            format='%(asctime)s [%(levelname)s] %(message)s',
                            handlers=handlers)
        self.logger = logging.getLogger('ErasureLab')
        self.logger.setLevel(level)

    def method_start(self, method_name):
        """メソッドの開始をログに記録"""
        self.logger.info(
            f"============== Method Start: {method_name} ==============")

    def method_end(self, method_name):
        """メソッドの終了をログに記録"""
        self.logger.info(
            f"============== Method End: {method_name} ==============")

    def ensemble_start(self, experiment, backend, n_trajectories, workers):
        """アンサンブル実行の開始をログに記録"""
        self.logger.info(
            f">>>>> Start Ensemble - Experiment: {experiment}, Backend: {backend}, "
            f"Trajectories: {n_trajectories}, Workers: {workers}")

    def ensemble_end(self, experiment, n_trajectories, wall_time):
        """アンサンブル実行の終了をログに記録"""
        self.logger.info(
            f"<<<<< End Ensemble - Experiment: {experiment}, "
            f"Trajectories: {n_trajectories}, Wall time: {wall_time:.3f}s")

    def sweep_point(self, axis, value, index, total):
        """スイープの各格子点をログに記録"""
        self.logger.info(
            f"[Sweep Point] Axis: {axis}, Value: {value} ({index + 1}/{total})")

    def trajectory_blowup(self, trajectory_index, step_index, seed_path):
        """軌道の発散をログに記録"""
        self.logger.error(
            f"[Integration Blowup] Trajectory: {trajectory_index}, "
            f"Step: {step_index}, Seed path: {seed_path}")

    def criterion_result(self, criterion_id, status, detail):
        """受け入れ基準の判定結果をログに記録"""
        self.logger.info(f"[Criterion] {criterion_id}: {status} ({detail})")

    def info(self, message):
        """一般情報をログに記録"""
        self.logger.info(message)

    def warning(self, message):
        """警告をログに記録"""
        self.logger.warning(message)

    def error(self, message, error=None):
        """エラー情報をログに記録"""
        if error:
            self.logger.error(f"{message}: {str(error)}")
        else:
            self.logger.error(message)

    def exception(self, error):
        """例外のスタックトレースを記録"""
        self.logger.exception(error)

    def debug(self, message):
        """デバッグ情報をログに記録"""
        self.logger.debug(message)
