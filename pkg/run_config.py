"""
Run Config Module
実行設定（セクション付きのキー・値テキスト）を解析・検証するモジュール

主な機能:
- 厳格な構文解析（未知のセクション・キーはエラー）
- 既定値の補完と各モジュールの不変条件の事前検証
- バックエンドごとの時間刻みの既定値の解決
- 再現用に完全に解決された設定の辞書化
"""

import configparser
import math
import os
from dataclasses import asdict, dataclass, replace
from typing import Any, Callable, Dict, Optional, Tuple

from dotenv import load_dotenv

from dynamics_engine import Backend, StepParams
from errors import ConfigError, SimulationError
from model_core import (AttemptTime, BathParams, CapacitorSpec, ControlState,
                        PotentialSpec, TwoStateSpec)

EXPERIMENTS = {
    "passive_ite": (Backend.LANGEVIN, Backend.TWO_STATE),
    "active_ite": (Backend.LANGEVIN,),
    "reset": (Backend.LANGEVIN,),
    "known_data_reset": (Backend.LANGEVIN,),
    "capacitor_ite": (Backend.CAPACITOR,),
    "ensemble": (Backend.LANGEVIN, Backend.TWO_STATE, Backend.CAPACITOR),
    "mfpt": (Backend.LANGEVIN,),
    "error_vs_dissipation": (Backend.LANGEVIN,),
    "deterministic_data_audit": (),
    "write_over": (),
    "ice_cube": (),
}
ANALYTIC_EXPERIMENTS = ("deterministic_data_audit", "write_over", "ice_cube")

_REQUIRED = object()


def _positive(v):
    return v > 0


def _non_negative(v):
    return v >= 0


def _unit_interval(v):
    return 0 <= v <= 1


def _finite(v):
    return math.isfinite(v)


def _at_least(bound):
    return lambda v: v >= bound


# (型, 既定値, 検証関数, 制約の説明)
Field = Tuple[type, Any, Optional[Callable[[Any], bool]], str]

SCHEMA: Dict[str, Dict[str, Field]] = {
    "experiment": {
        "name": (str, _REQUIRED, lambda v: v in EXPERIMENTS,
                 "one of " + ", ".join(EXPERIMENTS)),
        "backend": (str, None, lambda v: v in {b.value for b in Backend},
                    "one of " + ", ".join(b.value for b in Backend)),
        "n_trajectories": (int, 1000, _at_least(2), "n_trajectories >= 2"),
        "seed": (int, 0, _non_negative, "seed >= 0"),
        "output": (str, None, None, ""),
    },
    "bath": {
        "kbt": (float, 1.0, _positive, "BathParams invariant kbt > 0"),
        "gamma": (float, 1.0, _positive, "BathParams invariant gamma > 0"),
    },
    "potential": {
        "barrier_height": (float, 10.0, _positive, "PotentialSpec invariant barrier_height > 0"),
        "well_halfwidth": (float, 1.0, _positive, "PotentialSpec invariant well_halfwidth > 0"),
        "attempt_time": (float, 1.0, _positive, "AttemptTime invariant tau0 > 0"),
    },
    "control": {
        "barrier_scale": (float, 1.0, _unit_interval,
                          "ControlState invariant 0 <= barrier_scale <= 1"),
        "tilt": (float, 0.0, _finite, "ControlState invariant tilt finite"),
    },
    "protocol": {
        "duration": (float, 100.0, _positive, "duration > 0"),
        "lower_fraction": (float, 0.9, _unit_interval, "0 <= lower_fraction <= 1"),
        "tilt_peak": (float, None, _finite, "tilt_peak finite"),
        "wait_multiplier": (float, 20.0, _at_least(1), "wait_multiplier >= 1"),
        "settle_multiplier": (float, 10.0, _at_least(10), "settle_multiplier >= 10"),
        "p1_initial": (float, None, _unit_interval, "0 <= p1_initial <= 1"),
        "preequilibration_time": (float, None, _non_negative, "preequilibration_time >= 0"),
        "zero_heat_tolerance": (float, 0.05, _non_negative, "zero_heat_tolerance >= 0"),
    },
    "capacitor": {
        "capacitance": (float, 1.0, _positive, "CapacitorSpec invariant capacitance > 0"),
        "resistance": (float, 1.0, _positive, "CapacitorSpec invariant resistance > 0"),
        "setpoint_voltage": (float, 1.0, _finite, "setpoint_voltage finite"),
        "switch_cost": (float, 0.0, _non_negative, "switch_cost >= 0"),
    },
    "two_state": {
        "rate": (float, 1.0, _non_negative, "TwoStateSpec invariant rate >= 0"),
        "p1_initial": (float, 1.0, _unit_interval, "TwoStateSpec invariant 0 <= p1_initial <= 1"),
    },
    "integration": {
        "dt": (float, None, _positive, "dt > 0"),
        "record_stride": (int, 1000, _at_least(1), "record_stride >= 1"),
        "max_steps": (int, 10 ** 8, _at_least(1), "max_steps >= 1"),
    },
    "sweep": {
        "axis": (str, _REQUIRED, None, ""),
        "values": (str, _REQUIRED, None, ""),
    },
    "analytic": {
        "n_bits": (int, 10000, _at_least(0), "n_bits >= 0"),
        "latent_heat_per_bit": (float, 100.0, _positive, "latent_heat_per_bit > 0"),
        "melt_temperature": (float, 1.0, _positive, "melt_temperature > 0"),
        "memory_size": (int, 1024, _at_least(1), "memory_size >= 1"),
    },
}

# 既定の格子（[sweep] が無い場合）
DEFAULT_MFPT_BARRIERS = (4.0, 5.0, 6.0, 7.0, 8.0)
DEFAULT_RESET_DURATIONS = (0.01, 0.1, 1.0, 10.0, 100.0)


@dataclass(frozen=True)
class ProtocolParams:
    duration: float = 100.0
    lower_fraction: float = 0.9
    tilt_peak: float = 20.0
    wait_multiplier: float = 20.0
    settle_multiplier: float = 10.0
    p1_initial: float = 0.5
    preequilibration_time: float = 5.0
    zero_heat_tolerance: float = 0.05


@dataclass(frozen=True)
class AnalyticParams:
    n_bits: int = 10000
    latent_heat_per_bit: float = 100.0
    melt_temperature: float = 1.0
    memory_size: int = 1024


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: Tuple[float, ...]


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    backend: Backend
    n_trajectories: int
    master_seed: int
    bath: BathParams
    potential: PotentialSpec
    attempt_time: AttemptTime
    control: ControlState
    protocol: ProtocolParams
    capacitor: CapacitorSpec
    switch_cost: float
    two_state: TwoStateSpec
    dt: float
    record_stride: int
    max_steps: int
    analytic: AnalyticParams
    sweep: Optional[SweepSpec] = None
    output: Optional[str] = None
    # 設定テキストに明示されたキーだけを (キーパス, 値) で保持する
    explicit: Tuple[Tuple[str, Any], ...] = ()

    @property
    def is_analytic(self) -> bool:
        return self.experiment in ANALYTIC_EXPERIMENTS

    def step_params(self, dt: Optional[float] = None) -> StepParams:
        return StepParams(dt=self.dt if dt is None else dt,
                          record_stride=self.record_stride,
                          max_steps=self.max_steps)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, master_seed=int(seed))

    def with_value(self, key_path: str, value: float) -> "RunConfig":
        """
        'section.key' を差し替えた設定を返す（スイープ用）

        明示キーから再解析するので、dt や tilt_peak などの派生既定値も追従する。
        """
        return parse_config(render_config(self, overrides={key_path: value}))

    def to_dict(self) -> Dict[str, Any]:
        """永続化用の完全に解決された設定。ワーカー数と出力先は結果に影響しないので含めない"""
        resolved = asdict(self)
        resolved["backend"] = self.backend.value
        resolved.pop("output")
        resolved.pop("explicit")
        if self.sweep is not None:
            resolved["sweep"] = {"axis": self.sweep.axis, "values": list(self.sweep.values)}
        return resolved


def default_workers() -> int:
    load_dotenv()
    return max(1, int(os.environ.get("ERASURE_WORKERS", "1")))


def _convert(section: str, key: str, raw: str, field: Field):
    kind, _, check, constraint = field
    key_path = f"{section}.{key}"
    try:
        value = kind(raw.strip())
    except ValueError:
        raise ConfigError(key_path, f"expected {kind.__name__}, got '{raw}'")
    if kind is float and not math.isfinite(value):
        raise ConfigError(key_path, f"must be finite, got {raw}")
    if check is not None and not check(value):
        raise ConfigError(key_path, f"violates {constraint} (got {value})")
    return value


def _parse_values(raw: str) -> Tuple[float, ...]:
    try:
        values = tuple(float(v) for v in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError("sweep.values", f"expected numbers, got '{raw}'")
    if not values:
        raise ConfigError("sweep.values", "needs at least one value")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep.values", "grid must be strictly increasing")
    return values


def _read_sections(text: str) -> Tuple[Dict[str, Dict[str, Any]], Tuple[Tuple[str, Any], ...]]:
    parser = configparser.ConfigParser(strict=True, interpolation=None,
                                       default_section="__defaults__")
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError("<document>", f"malformed configuration: {e}")

    values: Dict[str, Dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        fields = SCHEMA[section]
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in fields:
                raise ConfigError(f"{section}.{key}", "unknown key")
            values[section][key] = _convert(section, key, raw, fields[key])
    explicit = tuple((f"{section}.{key}", value)
                     for section, items in values.items()
                     for key, value in items.items())

    for section, fields in SCHEMA.items():
        present = values.get(section)
        if present is None and section in ("sweep",):
            continue
        present = values.setdefault(section, {})
        for key, (_, default, _, _) in fields.items():
            if key in present:
                continue
            if default is _REQUIRED:
                raise ConfigError(f"{section}.{key}", "missing required key")
            present[key] = default
    return values, explicit


def parse_config(text: str) -> RunConfig:
    """
    設定テキストを解析して検証済みの RunConfig を返す

    Args:
        text: セクション付きのキー・値テキスト

    Returns:
        RunConfig: 既定値を補完した設定

    Raises:
        ConfigError: 未知のキー、必須キーの欠落、制約違反（キーパス付き）
    """
    v, explicit = _read_sections(text)
    exp = v["experiment"]
    name = exp["name"]
    allowed = EXPERIMENTS[name]
    if exp["backend"] is None:
        backend = allowed[0] if allowed else Backend.LANGEVIN
    else:
        backend = Backend(exp["backend"])
        if allowed and backend not in allowed:
            raise ConfigError("experiment.backend",
                              f"experiment '{name}' supports "
                              + ", ".join(b.value for b in allowed))

    bath = BathParams(**v["bath"])
    pot = v["potential"]
    potential = PotentialSpec(pot["barrier_height"], pot["well_halfwidth"])
    cap = v["capacitor"]
    capacitor = CapacitorSpec(cap["capacitance"], cap["resistance"], cap["setpoint_voltage"])
    two_state = TwoStateSpec(**v["two_state"])

    proto = v["protocol"]
    relax_time = bath.gamma * potential.well_halfwidth ** 2 / bath.kbt
    protocol = ProtocolParams(
        duration=proto["duration"],
        lower_fraction=proto["lower_fraction"],
        tilt_peak=(2.0 * potential.barrier_height if proto["tilt_peak"] is None
                   else proto["tilt_peak"]),
        wait_multiplier=proto["wait_multiplier"],
        settle_multiplier=proto["settle_multiplier"],
        p1_initial=(_default_p1(name) if proto["p1_initial"] is None
                    else proto["p1_initial"]),
        preequilibration_time=(5.0 * relax_time if proto["preequilibration_time"] is None
                               else proto["preequilibration_time"]),
        zero_heat_tolerance=proto["zero_heat_tolerance"])

    integ = v["integration"]
    dt = integ["dt"] if integ["dt"] is not None else _default_dt(
        backend, potential, bath, capacitor, two_state, name)
    # mfpt は障壁ごとに dt を決め直すのでここでは検査しない
    if backend is Backend.LANGEVIN and name != "mfpt" and name not in ANALYTIC_EXPERIMENTS:
        step = StepParams(dt, integ["record_stride"], integ["max_steps"])
        try:
            step.check_stability(potential, bath)
        except SimulationError as e:
            raise ConfigError("integration.dt", str(e))

    sweep = None
    if "sweep" in v:
        axis = v["sweep"]["axis"]
        if name not in ("mfpt", "error_vs_dissipation"):
            section, _, key = axis.partition(".")
            if section not in SCHEMA or key not in SCHEMA[section] \
                    or SCHEMA[section][key][0] not in (int, float):
                raise ConfigError("sweep.axis", f"'{axis}' is not a numeric configuration key")
        sweep = SweepSpec(axis, _parse_values(v["sweep"]["values"]))

    return RunConfig(
        experiment=name,
        backend=backend,
        n_trajectories=exp["n_trajectories"],
        master_seed=exp["seed"],
        bath=bath,
        potential=potential,
        attempt_time=AttemptTime(pot["attempt_time"]),
        control=ControlState(**v["control"]),
        protocol=protocol,
        capacitor=capacitor,
        switch_cost=cap["switch_cost"],
        two_state=two_state,
        dt=dt,
        record_stride=integ["record_stride"],
        max_steps=integ["max_steps"],
        analytic=AnalyticParams(**v["analytic"]),
        sweep=sweep,
        output=exp["output"],
        explicit=explicit)


def _default_p1(name: str) -> float:
    if name in ("reset", "error_vs_dissipation"):
        return 0.5
    return 1.0


def _default_dt(backend: Backend, potential: PotentialSpec, bath: BathParams,
                capacitor: CapacitorSpec, two_state: TwoStateSpec, name: str) -> float:
    if backend is Backend.CAPACITOR:
        return capacitor.rc / 10.0
    if backend is Backend.TWO_STATE:
        return 0.05 / two_state.rate if two_state.rate > 0 else 1.0
    return 0.01 * bath.gamma * potential.well_halfwidth ** 2 / potential.barrier_height


def render_config(config: RunConfig, overrides: Optional[Dict[str, Any]] = None) -> str:
    """
    RunConfig の明示キーを parse_config で読み戻せるテキストに変換する

    Args:
        config: 元の設定
        overrides: 差し替える 'section.key' → 値

    Returns:
        str: 設定テキスト
    """
    entries: Dict[str, Any] = dict(config.explicit)
    entries["experiment.seed"] = config.master_seed
    for key_path, value in (overrides or {}).items():
        section, _, key = key_path.partition(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(key_path, "unknown key")
        entries[key_path] = SCHEMA[section][key][0](value)

    sections: Dict[str, Dict[str, Any]] = {}
    for key_path, value in entries.items():
        section, _, key = key_path.partition(".")
        sections.setdefault(section, {})[key] = value

    lines = []
    for section, items in sections.items():
        lines.append(f"[{section}]")
        for key, value in items.items():
            lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
