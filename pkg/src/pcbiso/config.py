"""Run configuration: strict TOML with unit-suffixed keys.

Every key has a default, unknown sections or keys are errors, and each
value is converted to SI by the factor attached to its unit suffix.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .devices import BjtParams, DiodeParams, MosfetParams
from .magnetics import BoardStack, CoilGeometry, extract_transformer

_BJT = BjtParams()

# section -> key -> (default, factor to SI)
SCHEMA: dict[str, dict[str, tuple[object, float]]] = {
    "coil": {
        "turns": (8, 1),
        "trace_width_um": (200.0, 1e-6),
        "trace_spacing_um": (200.0, 1e-6),
        "inner_side_mm": (9.7, 1e-3),
        "copper_thickness_um": (35.0, 1e-6),
        "extraction_frequency_mhz": (1.0, 1e6),
    },
    "board": {
        "board_thickness_mm": (1.6, 1e-3),
        "dielectric_strength_kv_per_mm": (20.0, 1e6),
        "copper_resistivity_ohm_m": (1.68e-8, 1),
    },
    "mosfet": {
        "vth_v": (2.1, 1),
        "kn_a_per_v2": (0.08, 1),
        "lambda_per_v": (0.01, 1),
        "cgs_pf": (35.0, 1e-12),
        "cgd_pf": (7.0, 1e-12),
        "cds_pf": (14.0, 1e-12),
    },
    "bjt": {
        "i_s_a": (6.7e-15, 1),
        "beta_f": (200.0, 1),
        "v_t_v": (0.02585, 1),
        "storage_tau_ns": (_BJT.storage_tau * 1e9, 1e-9),
        "c_junction_pf": (4.0, 1e-12),
        "vce_sat_v": (0.1, 1),
    },
    "diode": {
        "i_s_a": (1e-12, 1),
        "n_ideality": (1.5, 1),
        "c_junction_pf": (10.0, 1e-12),
    },
    "isolator": {
        "r_drain_a_ohm": (0.0, 1),  # 0 leaves R12 out
        "r_drain_b_ohm": (1000.0, 1),
        "r_base_ohm": (1000.0, 1),
        "r_divider_ohm": (1000.0, 1),
        "r_pullup_ohm": (5100.0, 1),
        "supply_v": (5.0, 1),
    },
    "halfbridge": {
        "r_shared_ohm": (1800.0, 1),
        "supply_pos_v": (5.0, 1),
        "supply_neg_v": (-5.0, 1),
        "r_base_ohm": (1000.0, 1),
        "r_divider_ohm": (1000.0, 1),
        "r_pullup_ohm": (5100.0, 1),
        "rx_supply_v": (5.0, 1),
        "frequency_khz": (50.0, 1e3),
        "cycles": (10, 1),
        "v_active_v": (0.8, 1),
    },
    "sim": {
        "dt_max_ns": (0.0, 1e-9),  # 0 picks the automatic value
        "newton_tol_v": (1e-6, 1),
        "newton_max_iter": (50, 1),
        "output_decimation": (4, 1),
        "t_stop_us": (5.0, 1e-6),
        "f_osc_mhz": (20.0, 1e6),
    },
    "link": {
        "bit_rate_mbps": (1.0, 1e6),
        "bits": (1000, 1),
        "seed": (0x7F, 1),
        "rise_fall_ns": (10.0, 1e-9),
        "v_threshold_v": (2.5, 1),
    },
}


class ConfigError(ValueError):
    pass


def _coerce(section: str, key: str, value):
    default, _ = SCHEMA[section][key]
    where = f"[{section}] {key}"
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


@dataclass
class RunConfig:
    values: dict[str, dict[str, object]] = field(
        default_factory=lambda: {s: {k: d for k, (d, _) in keys.items()} for s, keys in SCHEMA.items()}
    )

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        cfg = cls()
        for section, body in data.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            if not isinstance(body, dict):
                raise ConfigError(f"[{section}] must be a table")
            for key, val in body.items():
                cfg.set(section, key, val)
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_mapping(data)

    def set(self, section: str, key: str, value) -> None:
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        self.values[section][key] = _coerce(section, key, value)

    def override(self, assignment: str) -> "RunConfig":
        """Copy with one ``section.key=value`` assignment applied."""
        try:
            lhs, rhs = assignment.split("=", 1)
            section, key = lhs.strip().split(".", 1)
        except ValueError:
            raise ConfigError(f"override {assignment!r} is not section.key=value") from None
        try:
            value = tomllib.loads(f"v = {rhs.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            raise ConfigError(f"override {assignment!r}: cannot parse value") from None
        out = RunConfig(copy.deepcopy(self.values))
        out.set(section, key.strip(), value)
        return out

    def si(self, section: str, key: str) -> float:
        return self.values[section][key] * SCHEMA[section][key][1]

    def get(self, section: str, key: str):
        return self.values[section][key]

    # builders -----------------------------------------------------------

    def coil(self) -> CoilGeometry:
        return CoilGeometry(
            turns=self.get("coil", "turns"),
            trace_width=self.si("coil", "trace_width_um"),
            trace_spacing=self.si("coil", "trace_spacing_um"),
            inner_side=self.si("coil", "inner_side_mm"),
            copper_thickness=self.si("coil", "copper_thickness_um"),
        )

    def board(self) -> BoardStack:
        return BoardStack(
            board_thickness=self.si("board", "board_thickness_mm"),
            dielectric_strength=self.si("board", "dielectric_strength_kv_per_mm"),
            copper_resistivity=self.si("board", "copper_resistivity_ohm_m"),
        )

    def transformer(self):
        return extract_transformer(self.coil(), self.board(), self.si("coil", "extraction_frequency_mhz"))

    def diode(self) -> DiodeParams:
        return DiodeParams(self.si("diode", "i_s_a"), self.si("diode", "n_ideality"),
                           self.si("diode", "c_junction_pf"))

    def mosfet(self) -> MosfetParams:
        return MosfetParams(
            vth=self.si("mosfet", "vth_v"),
            kn=self.si("mosfet", "kn_a_per_v2"),
            lambda_=self.si("mosfet", "lambda_per_v"),
            cgs=self.si("mosfet", "cgs_pf"),
            cgd=self.si("mosfet", "cgd_pf"),
            cds=self.si("mosfet", "cds_pf"),
            body_diode=self.diode(),
        )

    def bjt(self) -> BjtParams:
        return BjtParams(
            i_s=self.si("bjt", "i_s_a"),
            beta_f=self.si("bjt", "beta_f"),
            v_t=self.si("bjt", "v_t_v"),
            storage_tau=self.si("bjt", "storage_tau_ns"),
            c_junction=self.si("bjt", "c_junction_pf"),
            vce_sat=self.si("bjt", "vce_sat_v"),
        )

    def isolator(self):
        from .topologies import IsolatorConfig

        r12 = self.si("isolator", "r_drain_a_ohm")
        return IsolatorConfig(
            transformer=self.transformer(),
            r_drain_a=r12 if r12 > 0 else None,
            r_drain_b=self.si("isolator", "r_drain_b_ohm"),
            r_base=self.si("isolator", "r_base_ohm"),
            r_divider=self.si("isolator", "r_divider_ohm"),
            r_pullup=self.si("isolator", "r_pullup_ohm"),
            supply=self.si("isolator", "supply_v"),
            mosfet=self.mosfet(),
            bjt=self.bjt(),
        )

    def halfbridge(self):
        from .topologies import HalfBridgeConfig

        tm = self.transformer()
        return HalfBridgeConfig(
            transformer_low=tm,
            transformer_high=tm,
            r_shared=self.si("halfbridge", "r_shared_ohm"),
            supply_pos=self.si("halfbridge", "supply_pos_v"),
            supply_neg=self.si("halfbridge", "supply_neg_v"),
            r_base=self.si("halfbridge", "r_base_ohm"),
            r_divider=self.si("halfbridge", "r_divider_ohm"),
            r_pullup=self.si("halfbridge", "r_pullup_ohm"),
            rx_supply=self.si("halfbridge", "rx_supply_v"),
            mosfet=self.mosfet(),
            bjt=self.bjt(),
        )
