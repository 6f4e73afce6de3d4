"""
RNG Streams Module
軌道ごとの独立した乱数ストリームを生成するモジュール

主な機能:
- (マスターシード, 軌道インデックス) からカウンタベース乱数生成器を構築
- ワーカー数や実行順序に依存しない再現性の保証
- 一定サイズのブロック単位での正規乱数・一様乱数の供給
"""

from typing import List, Sequence, Tuple

import numpy as np

# 乱数はこの単位で引く。ストリーム内の消費順序をバッチ構成から切り離すための固定値
NOISE_BLOCK = 4096


def trajectory_generator(master_seed: int, trajectory_index: int) -> np.random.Generator:
    """
    軌道専用の Philox 生成器を返す

    Args:
        master_seed: 実行全体のマスターシード（非負整数）
        trajectory_index: 軌道インデックス（非負整数）

    Returns:
        np.random.Generator: 同じ (seed, index) なら常に同じストリーム
    """
    seed_seq = np.random.SeedSequence(int(master_seed),
                                      spawn_key=(int(trajectory_index),))
    return np.random.Generator(np.random.Philox(seed_seq))


def seed_path(master_seed: int, trajectory_index: int) -> Tuple[int, int]:
    return (int(master_seed), int(trajectory_index))


class StreamBatch:
    """複数軌道の乱数ストリームを束ね、ブロック単位で行列として払い出す"""

    def __init__(self, master_seed: int, indices: Sequence[int]):
        self.master_seed = int(master_seed)
        self.indices: List[int] = [int(i) for i in indices]
        self.generators = [trajectory_generator(self.master_seed, i)
                           for i in self.indices]
        self._normal_block = None
        self._uniform_block = None
        self._normal_cursor = NOISE_BLOCK
        self._uniform_cursor = NOISE_BLOCK

    def __len__(self):
        return len(self.generators)

    def uniform_each(self) -> np.ndarray:
        """各ストリームから一様乱数を1つずつ（初期ビットの抽選用）"""
        return np.array([g.random() for g in self.generators])

    def next_normal(self) -> np.ndarray:
        """各ストリームの次の標準正規乱数（長さ = 軌道数）"""
        if self._normal_cursor == NOISE_BLOCK:
            self._normal_block = np.stack(
                [g.standard_normal(NOISE_BLOCK) for g in self.generators])
            self._normal_cursor = 0
        column = self._normal_block[:, self._normal_cursor]
        self._normal_cursor += 1
        return column

    def next_uniform(self) -> np.ndarray:
        """各ストリームの次の [0, 1) 一様乱数"""
        if self._uniform_cursor == NOISE_BLOCK:
            self._uniform_block = np.stack(
                [g.random(NOISE_BLOCK) for g in self.generators])
            self._uniform_cursor = 0
        column = self._uniform_block[:, self._uniform_cursor]
        self._uniform_cursor += 1
        return column
