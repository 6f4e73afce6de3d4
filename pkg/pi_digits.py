"""
Pi Digits Module
π の16進小数部を整数固定小数点演算で計算するモジュール

主な機能:
- 先頭からの16進桁の一括計算（Machin の公式、1回の固定小数点評価）
- 任意位置から始まる16進桁の抽出（BBP 型の級数、1回のブロック評価）
- 16進桁のビット列への展開（1桁4ビット、上位ビットが先）

位置 0 は "3." の直後の桁（2）を指す。
"""

from typing import List

HEX_ALPHABET = "0123456789ABCDEF"


def _guard_bits(position: int, count: int) -> int:
    return 64 + (position + 4 * count).bit_length()


def _to_digits(value: int, count: int) -> List[int]:
    # 2の冪の基数への整数の文字列化は桁数に対して線形
    return [int(c, 16) for c in format(value, f"0{count}x")]


def _arctan_inverse(x: int, one: int) -> int:
    """arctan(1/x) を one 倍した整数（交代級数、項が 0 になるまで）"""
    power = one // x
    total = power
    x2 = x * x
    k = 1
    while power:
        power //= x2
        term = power // (2 * k + 1)
        total = total - term if k % 2 else total + term
        k += 1
    return total


def pi_hex_prefix(count: int) -> List[int]:
    """
    π の16進小数部の先頭 count 桁を返す

    π = 16·arctan(1/5) − 4·arctan(1/239) を 4·count ビット＋ガードの精度で一度だけ評価する。
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    guard = _guard_bits(0, count)
    precision = 4 * count + guard
    one = 1 << precision
    scaled = 4 * (4 * _arctan_inverse(5, one) - _arctan_inverse(239, one))
    fraction = scaled - (3 << precision)
    return _to_digits(fraction >> guard, count)


def _series_fraction(j: int, position: int, precision: int) -> int:
    """
    frac(Σ_k 16^(position−k) / (8k + j)) を 2^precision 倍した整数で返す

    k ≤ position の項は冪剰余で、k > position の項は右シフトで計算する。
    """
    modulus = 1 << precision
    total = 0
    for k in range(position + 1):
        r = 8 * k + j
        total = (total + (pow(16, position - k, r) << precision) // r) % modulus
    k = position + 1
    shift = precision - 4
    while shift > 0:
        total += (1 << shift) // (8 * k + j)
        k += 1
        shift -= 4
    return total % modulus


def pi_hex_digits(start: int, count: int) -> List[int]:
    """
    π の16進小数部の桁を start から count 個返す

    要求全体を1ブロックとして級数を一度だけ評価する。先頭からの長い桁列は
    pi_hex_prefix の方が速い。

    Args:
        start: 開始位置（0 以上）
        count: 桁数（0 以上）

    Returns:
        List[int]: 0〜15 の整数のリスト
    """
    if start < 0:
        raise ValueError("start must be >= 0")
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    guard = _guard_bits(start, count)
    precision = 4 * count + guard
    s1 = _series_fraction(1, start, precision)
    s4 = _series_fraction(4, start, precision)
    s5 = _series_fraction(5, start, precision)
    s6 = _series_fraction(6, start, precision)
    fraction = (4 * s1 - 2 * s4 - s5 - s6) % (1 << precision)
    return _to_digits(fraction >> guard, count)


def hex_digits_to_bits(digits: List[int]) -> List[int]:
    """16進桁を上位ビットから順に4ビットずつ展開"""
    return [(d >> shift) & 1 for d in digits for shift in (3, 2, 1, 0)]
