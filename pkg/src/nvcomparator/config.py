"""TOML configuration for comparator campaigns.

Mandatory keys have no default and are reported together when missing.
Everything else falls back to the defaults below, which match the shipped
``calibrated.toml``. Unknown keys are logged as warnings and ignored.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dsp import SquareWaveProtocol
from .magcore import CoreGeometry, CoreMaterial, WindingConfig
from .noise import NoiseModel
from .nvsensor import SensorPhysics, TrackerConfig
from .series import ValidationError
from .simulation import ACDrive, ComparatorConfig, DCDrive, DriftModel

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "CampaignSettings",
    "MANDATORY_KEYS",
    "load_config",
    "load_settings",
    "parse_config",
    "default_config_path",
]


class ConfigError(ValueError):
    """Unreadable, incomplete or physically invalid configuration."""


MANDATORY_KEYS = (
    "geometry.outer_diameter",
    "geometry.inner_diameter",
    "geometry.thickness",
    "geometry.gap_length",
    "material.relative_permeability",
    "windings.primary_turns",
    "ratio_error.eps_h",
    "ratio_error.eps_e",
    "simulation.sample_rate",
    "simulation.seed",
)

# section -> {key: default}; mandatory keys are listed with a None default
_SCHEMA = {
    "geometry": {"outer_diameter": None, "inner_diameter": None, "thickness": None,
                 "gap_length": None},
    "material": {"relative_permeability": None, "eddy_corner_frequency": 67.0 / 0.75,
                 "hysteresis_attenuation": 0.0},
    "windings": {"primary_turns": None, "secondary_turns": 10, "auxiliary_turns": 10},
    "ratio_error": {"eps_h": None, "eps_e": None, "dc": 1.5e-7},
    "noise": {"white_asd": 0.0, "flicker_knee": 0.0, "random_walk_asd": 0.0, "line_spurs": []},
    "sensor": {"zero_field_splitting": 2.87e9, "gyromagnetic_ratio": 28.024e9, "contrast": 0.01,
               "linewidth_fwhm": 1.0e6, "photon_rate": 1.0e15},
    "tracker": {"fm_deviation": 1.0e5, "multiplex_period": 1.0e-4, "loop_gain": 1.0,
                "loop_bandwidth": 300.0, "guard_field": None},
    "drift.ac": {"flicker_floor": 0.0, "random_walk": 0.0},
    "drift.dc": {"flicker_floor": 0.0, "random_walk": 0.0},
    "simulation": {"sample_rate": None, "seed": None, "offset_field": 100e-6,
                   "system_bandwidth": 300.0, "sensor_mode": "ideal"},
    "campaign": {"frequencies": [67.0], "amplitudes": [1.0], "window": 1.0, "repeats": 100,
                 "time_scale": 1.0},
    "campaign.ac": {"frequency": 67.0, "amplitude": 1.0},
    "campaign.dc": {"current": 1.0, "half_period": 1.0, "transient_exclusion": 0.5,
                    "cycles": 100},
    "campaign.allan_ac": {"frequency": 67.0, "amplitude": 1.0, "total_duration": 2000.0,
                          "time_scale": 1.0},
    "campaign.allan_dc": {"current": 1.0, "total_duration": 20000.0, "time_scale": 1.0},
}


@dataclass(frozen=True)
class CampaignSettings:
    frequencies: tuple = (67.0,)
    amplitudes: tuple = (1.0,)
    window: float = 1.0
    repeats: int = 100
    time_scale: float = 1.0
    ac: ACDrive = field(default_factory=lambda: ACDrive(67.0, 1.0))
    dc_current: float = 1.0
    dc_protocol: SquareWaveProtocol = field(default_factory=SquareWaveProtocol)
    allan_ac: ACDrive = field(default_factory=lambda: ACDrive(67.0, 1.0))
    allan_ac_duration: float = 2000.0
    allan_ac_time_scale: float = 1.0
    allan_dc: DCDrive = field(default_factory=lambda: DCDrive(1.0))
    allan_dc_duration: float = 20000.0
    allan_dc_time_scale: float = 1.0


def default_config_path() -> Path:
    """Location of the shipped calibrated configuration."""
    return Path(str(resources.files("nvcomparator") / "configs" / "calibrated.toml"))


def _section(data: dict, dotted: str):
    node = data
    for part in dotted.split("."):
        if not isinstance(node, dict):
            return None
        node = node.get(part)
        if node is None:
            return None
    return node


def _flatten(data: dict, prefix: str = "") -> list[str]:
    keys = []
    for k, v in data.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            keys.extend(_flatten(v, name + "."))
        else:
            keys.append(name)
    return keys


def _resolve(data: dict) -> dict:
    """Fill defaults, check mandatory keys, warn about unknown ones."""
    known = {f"{s}.{k}" for s, keys in _SCHEMA.items() for k in keys}
    for key in _flatten(data):
        if key not in known:
            log.warning("ignoring unknown configuration key %r", key)
    missing = [k for k in MANDATORY_KEYS if _section(data, k) is None]
    if missing:
        raise ConfigError("missing mandatory keys: " + ", ".join(missing))
    out = {}
    for sec, keys in _SCHEMA.items():
        given = _section(data, sec) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"[{sec}] must be a table")
        out[sec] = {k: given.get(k, d) for k, d in keys.items()}
    return out


def _build(v: dict) -> tuple[ComparatorConfig, CampaignSettings]:
    sim = v["simulation"]
    eps = v["ratio_error"]
    noise = dict(v["noise"])
    noise["line_spurs"] = tuple(tuple(s) for s in noise["line_spurs"])
    for s in noise["line_spurs"]:
        if len(s) != 2:
            raise ValidationError("line_spurs entries must be [frequency_Hz, amplitude_T]")
    cfg = ComparatorConfig(
        geometry=CoreGeometry(**v["geometry"]),
        material=CoreMaterial(**v["material"]),
        windings=WindingConfig(**{k: int(n) for k, n in v["windings"].items()}),
        injected_ratio_error=(eps["eps_h"], eps["eps_e"]),
        dc_ratio_error=float(eps["dc"]),
        noise=NoiseModel(**noise),
        sensor=SensorPhysics(**v["sensor"]),
        tracker=TrackerConfig(**v["tracker"]),
        sample_rate=float(sim["sample_rate"]),
        seed=int(sim["seed"]),
        offset_field=float(sim["offset_field"]),
        system_bandwidth=float(sim["system_bandwidth"]),
        sensor_mode=str(sim["sensor_mode"]),
        ac_drift=DriftModel(**v["drift.ac"]),
        dc_drift=DriftModel(**v["drift.dc"]),
    )
    c = v["campaign"]
    dc = v["campaign.dc"]
    aa = v["campaign.allan_ac"]
    ad = v["campaign.allan_dc"]
    proto = SquareWaveProtocol(float(dc["half_period"]), float(dc["transient_exclusion"]),
                               int(dc["cycles"]))
    settings = CampaignSettings(
        frequencies=tuple(float(f) for f in c["frequencies"]),
        amplitudes=tuple(float(a) for a in c["amplitudes"]),
        window=float(c["window"]),
        repeats=int(c["repeats"]),
        time_scale=float(c["time_scale"]),
        ac=ACDrive(float(v["campaign.ac"]["frequency"]), float(v["campaign.ac"]["amplitude"])),
        dc_current=float(dc["current"]),
        dc_protocol=proto,
        allan_ac=ACDrive(float(aa["frequency"]), float(aa["amplitude"])),
        allan_ac_duration=float(aa["total_duration"]),
        allan_ac_time_scale=float(aa["time_scale"]),
        allan_dc=DCDrive(float(ad["current"]), SquareWaveProtocol(proto.half_period,
                                                                  proto.transient_exclusion)),
        allan_dc_duration=float(ad["total_duration"]),
        allan_dc_time_scale=float(ad["time_scale"]),
    )
    fmax = max((*settings.frequencies, settings.ac.frequency, settings.allan_ac.frequency))
    if not cfg.sample_rate > 2 * fmax:
        raise ValidationError(
            f"sample_rate {cfg.sample_rate:g} Hz must exceed twice the highest drive frequency "
            f"{fmax:g} Hz"
        )
    return cfg, settings


def parse_config(text: str, source: str = "<string>") -> tuple[ComparatorConfig, CampaignSettings]:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    try:
        return _build(_resolve(data))
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    except (ValidationError, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: invalid configuration: {exc}") from exc


def load_settings(path) -> tuple[ComparatorConfig, CampaignSettings]:
    """Comparator model and campaign settings from a TOML file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def load_config(path) -> ComparatorConfig:
    return load_settings(path)[0]
