import textwrap

import pytest

from experiment_harness import ExperimentHarness
from logger import Logger
from model_core import BathParams
from result_store import ResultStore


@pytest.fixture(scope="session")
def logger():
    return Logger()


@pytest.fixture
def harness(logger):
    return ExperimentHarness(logger)


@pytest.fixture
def store(logger):
    return ResultStore(logger)


@pytest.fixture
def bath():
    return BathParams(kbt=1.0, gamma=1.0)


@pytest.fixture
def write_config(tmp_path):
    """設定テキストを一時ファイルに書き、そのパスを返す"""

    def write(text, name="run.cfg"):
        path = tmp_path / name
        path.write_text(textwrap.dedent(text), encoding="utf-8")
        return str(path)

    return write
