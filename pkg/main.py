"""
Information Erasure Lab - メインアプリケーション
このモジュールはコマンドラインインターフェースを提供し、
消去実験の実行・スイープ・受け入れ検証・結果の表示を行います。

主な機能:
- run: 設定ファイルの実験を1回実行して結果を保存
- sweep: 設定ファイルの [sweep] 格子で実験を繰り返して保存
- validate: 組み込みの受け入れ基準を実行し、基準ごとに PASS/FAIL/INCONCLUSIVE を出力
- report: 保存された結果を表・CSV・プロット用データとして出力

終了コード: 0 成功、1 基準の不合格、2 設定エラー、3 実行時の発散、4 結論が出ない
"""

import argparse
import sys
from typing import List, Optional

from acceptance_suite import AcceptanceSuite, Status
from errors import ConfigError, InconclusiveError, SimulationError
from experiment_harness import EnsembleStats, ErasureExperiment, ExperimentHarness, SweepResult
from logger import Logger
from result_store import ResultStore
from run_config import default_workers, parse_config

EXIT_OK = 0
EXIT_FAILED_CRITERIA = 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erasure-lab",
        description="Stochastic-thermodynamics experiments on information erasure")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_common(sub, with_config: bool):
        if with_config:
            sub.add_argument("--config", required=True, help="experiment configuration file")
        sub.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        sub.add_argument("--workers", type=int, default=None,
                         help="parallel workers (affects speed only, never results)")

    run = subparsers.add_parser("run", help="run one experiment")
    add_common(run, with_config=True)
    run.add_argument("--out", default=None, help="result file (line-delimited records)")

    sweep = subparsers.add_parser("sweep", help="run an experiment over the [sweep] grid")
    add_common(sweep, with_config=True)
    sweep.add_argument("--out", default=None, help="result file (line-delimited records)")

    validate = subparsers.add_parser("validate", help="run the built-in acceptance criteria")
    add_common(validate, with_config=False)
    validate.add_argument("--quick", action="store_true", help="run A1, A4 and A6 only")

    report = subparsers.add_parser("report", help="render a persisted result file")
    report.add_argument("results", help="result file written by run or sweep")
    report.add_argument("--format", choices=("table", "csv", "plot"), default="table")
    report.add_argument("--out", default=None, help="write the rendering to this file")
    return parser


def load_config(path: str):
    """
    設定ファイルを読み込んで検証する

    Raises:
        ConfigError: ファイルが読めない、または設定が不正な場合
    """
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError("--config", f"cannot read '{path}': {e}")
    return parse_config(text)


def is_inconclusive(outcome) -> bool:
    if isinstance(outcome, SweepResult):
        return outcome.inconclusive
    if isinstance(outcome, ErasureExperiment):
        return outcome.stats.budget_exhausted
    if isinstance(outcome, EnsembleStats):
        return outcome.budget_exhausted
    return False


def command_experiment(args, logger: Logger, sweep: bool) -> int:
    """run / sweep サブコマンド"""
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    workers = args.workers or default_workers()
    harness = ExperimentHarness(logger)
    store = ResultStore(logger)

    if sweep:
        outcome = harness.sweep_configured(config, workers)
    else:
        outcome = harness.run_configured(config, workers)
    records = store.records_for(config, outcome)

    output = args.out or config.output
    if output:
        store.write(output, records)
    else:
        sys.stdout.write(store.dumps(records))

    if is_inconclusive(outcome):
        raise InconclusiveError(
            f"'{config.experiment}' did not reach a conclusion within the step budget "
            "(results were written with inconclusive flags)")
    return EXIT_OK


def command_validate(args, logger: Logger) -> int:
    """validate サブコマンド。1行1基準で結果を出力する"""
    suite = AcceptanceSuite(logger, workers=args.workers or default_workers(),
                            master_seed=args.seed or 0)
    results = suite.run(quick=args.quick)
    for result in results:
        print(result.line(), flush=True)
    statuses = {r.status for r in results}
    if Status.FAIL in statuses:
        return EXIT_FAILED_CRITERIA
    if Status.INCONCLUSIVE in statuses:
        return InconclusiveError.exit_code
    return EXIT_OK


def command_report(args, logger: Logger) -> int:
    """report サブコマンド"""
    store = ResultStore(logger)
    records = store.read(args.results)
    if args.format == "csv":
        text = store.to_csv(records)
    elif args.format == "plot":
        text = store.plot_blocks(records)
    else:
        text = store.render_table(records)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        logger.info(f"Wrote {args.format} report to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def run_command(args: argparse.Namespace) -> int:
    """
    解析済みの引数でサブコマンドを実行する

    Returns:
        int: 終了コード（エラーは例外クラスの exit_code に対応付ける）
    """
    logger = Logger()
    logger.method_start(f"main:{args.command}")
    try:
        if args.command == "run":
            status = command_experiment(args, logger, sweep=False)
        elif args.command == "sweep":
            status = command_experiment(args, logger, sweep=True)
        elif args.command == "validate":
            status = command_validate(args, logger)
        else:
            status = command_report(args, logger)
    except SimulationError as e:
        logger.error(f"{args.command} failed", e)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}", e)
        logger.exception(e)
        return EXIT_FAILED_CRITERIA
    logger.method_end(f"main:{args.command}")
    return status


def main(argv: Optional[List[str]] = None) -> int:
    return run_command(build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
