"""Magnetic equivalent circuit of the air-gapped toroidal comparator core.

The gap is treated as a fringing-free prism with the same cross-section as
the core, so the circuit is two reluctances in series::

    R_total = g / (mu0 A) + l_m / (mu0 mu_r A)

Frequency dependence of the flux transfer is a first-order eddy-current
low-pass times a flat hysteresis attenuation. The ratio error itself is a
separate affine function of frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.constants import mu_0

from .series import ValidationError

__all__ = [
    "CoreGeometry",
    "CoreMaterial",
    "WindingConfig",
    "total_reluctance",
    "gap_flux_density",
    "gap_sweep",
    "transfer_attenuation",
    "conversion_coefficient",
    "ratio_error_model",
    "eddy_corner_for_ratio",
]


@dataclass(frozen=True)
class CoreGeometry:
    outer_diameter: float = 0.10
    inner_diameter: float = 0.06
    thickness: float = 0.02
    gap_length: float = 0.02

    def __post_init__(self):
        if not self.inner_diameter > 0:
            raise ValidationError("inner_diameter must be > 0")
        if not self.outer_diameter > self.inner_diameter:
            raise ValidationError("outer_diameter must exceed inner_diameter")
        if not self.thickness > 0:
            raise ValidationError("thickness must be > 0")
        if not 0 < self.gap_length < self.mean_circumference:
            raise ValidationError(
                f"gap_length must lie in (0, {self.mean_circumference:.6g}) m, "
                f"got {self.gap_length}"
            )

    @property
    def mean_circumference(self) -> float:
        return math.pi * (self.outer_diameter + self.inner_diameter) / 2

    @property
    def cross_section(self) -> float:
        return (self.outer_diameter - self.inner_diameter) / 2 * self.thickness

    @property
    def path_length(self) -> float:
        """Magnetic path through the core material (gap excluded)."""
        return self.mean_circumference - self.gap_length

    def with_gap(self, gap_length: float) -> "CoreGeometry":
        return replace(self, gap_length=gap_length)


@dataclass(frozen=True)
class CoreMaterial:
    relative_permeability: float = 3.0e4
    eddy_corner_frequency: float = 67.0 / 0.75  # A(67 Hz) / A(0) = 0.8
    hysteresis_attenuation: float = 0.0

    def __post_init__(self):
        if not self.relative_permeability >= 1:
            raise ValidationError("relative_permeability must be >= 1")
        if not self.eddy_corner_frequency > 0:
            raise ValidationError("eddy_corner_frequency must be > 0")
        if not 0 <= self.hysteresis_attenuation < 1:
            raise ValidationError("hysteresis_attenuation must lie in [0, 1)")


@dataclass(frozen=True)
class WindingConfig:
    primary_turns: int = 10
    secondary_turns: int = 10
    auxiliary_turns: int = 10

    def __post_init__(self):
        for name in ("primary_turns", "secondary_turns", "auxiliary_turns"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")

    @property
    def one_to_one(self) -> bool:
        return self.primary_turns == self.secondary_turns


def _check_circuit(geom: CoreGeometry):
    if geom.cross_section <= 0 or geom.path_length <= 0:
        raise ValidationError("non-physical geometry: cross-section and path length must be > 0")


def total_reluctance(geom: CoreGeometry, mat: CoreMaterial) -> float:
    """Series reluctance of gap plus core, in ampere-turns per weber."""
    _check_circuit(geom)
    a = geom.cross_section
    r_gap = geom.gap_length / (mu_0 * a)
    r_core = geom.path_length / (mu_0 * mat.relative_permeability * a)
    return r_gap + r_core


def gap_flux_density(geom: CoreGeometry, mat: CoreMaterial, ampere_turns: float) -> float:
    """Flux density in the gap (T) for a net ampere-turn unbalance."""
    _check_circuit(geom)
    effective_length = geom.gap_length + geom.path_length / mat.relative_permeability
    return mu_0 * ampere_turns / effective_length


def gap_sweep(geom: CoreGeometry, mat: CoreMaterial, ampere_turns: float,
              gap_values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Gap flux density across air-gap lengths, path length recomputed per point."""
    gaps = np.asarray(gap_values, dtype=float).ravel()
    if gaps.size == 0:
        raise ValidationError("gap_values is empty")
    flux = np.array([gap_flux_density(geom.with_gap(g), mat, ampere_turns) for g in gaps])
    return gaps, flux


def transfer_attenuation(f, mat: CoreMaterial):
    """Loss attenuation of the gap flux, ``(1 - h) / sqrt(1 + (f/f_e)^2)``."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValidationError("frequency must be >= 0")
    out = (1 - mat.hysteresis_attenuation) / np.sqrt(1 + (f / mat.eddy_corner_frequency) ** 2)
    return float(out) if out.ndim == 0 else out


def transfer_phase(f, mat: CoreMaterial):
    """Phase lag (rad) of the first-order eddy-current pole."""
    return -np.arctan(np.asarray(f, dtype=float) / mat.eddy_corner_frequency)


def conversion_coefficient(geom: CoreGeometry, mat: CoreMaterial, turns: int, f: float = 0.0):
    """Gap flux per ampere of current difference through ``turns`` turns (T/A).

    Multiply by 1e3 for pT/nA.
    """
    if turns < 1:
        raise ValidationError("turns must be >= 1")
    return gap_flux_density(geom, mat, float(turns)) * transfer_attenuation(f, mat)


def ratio_error_model(f, eps_h: float, eps_e: float):
    """Relative ratio error ``eps_h + eps_e * f`` (A/A); may be negative."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValidationError("frequency must be >= 0")
    out = eps_h + eps_e * f
    return float(out) if out.ndim == 0 else out


def eddy_corner_for_ratio(f: float, ratio: float) -> float:
    """Corner frequency giving ``A(f)/A(0) == ratio`` for the first-order pole."""
    if not 0 < ratio < 1:
        raise ValidationError("ratio must lie in (0, 1)")
    return f / math.sqrt(1 / ratio**2 - 1)
