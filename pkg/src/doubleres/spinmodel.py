"""Linear effective-g Zeeman model of the erbium ground and excited doublets.

Levels, counted from the bottom of each doublet::

    |4>  excited upper     nu0 + g_e muB B / 2h
    |3>  excited lower     nu0 - g_e muB B / 2h
    |2>  ground upper          + g_g muB B / 2h
    |1>  ground lower          - g_g muB B / 2h

All frequencies are in Hz, fields in T.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .physcore import H, K_B, MUB_OVER_H

__all__ = [
    "ZeemanSystem",
    "TransitionId",
    "ThermalState",
    "level_energies",
    "transition_frequency",
    "transition_slope",
    "resonant_field",
    "thermal_populations",
    "population_difference",
    "UnreachableTargetError",
]


class UnreachableTargetError(ValueError):
    pass


@dataclass(frozen=True)
class ZeemanSystem:
    nu0: float = 195116.7e9
    g_ground: float = 11.52
    g_excited: float = 7.7

    def __post_init__(self):
        if not (self.nu0 > 0 and self.g_ground > 0 and self.g_excited > 0):
            raise ValueError("nu0, g_ground and g_excited must be positive")


class TransitionId(enum.Enum):
    MW_12 = (1, 2)
    O_23 = (2, 3)
    O_13 = (1, 3)
    O_24 = (2, 4)
    O_14 = (1, 4)

    @property
    def lower(self) -> int:
        return self.value[0]

    @property
    def upper(self) -> int:
        return self.value[1]

    @property
    def is_optical(self) -> bool:
        return self is not TransitionId.MW_12

    @classmethod
    def parse(cls, name: str) -> "TransitionId":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown transition {name!r}") from None


@dataclass(frozen=True)
class ThermalState:
    temperature: float
    populations: tuple[float, float]

    @property
    def difference(self) -> float:
        return self.populations[0] - self.populations[1]


def level_energies(sys: ZeemanSystem, B):
    """Level energies E1..E4 divided by h, in Hz."""
    B = np.asarray(B, dtype=float)
    if np.any(B < 0):
        raise ValueError("field must be non-negative")
    half_g = 0.5 * sys.g_ground * MUB_OVER_H * B
    half_e = 0.5 * sys.g_excited * MUB_OVER_H * B
    return (-half_g, half_g, sys.nu0 - half_e, sys.nu0 + half_e)


def transition_slope(sys: ZeemanSystem, tid: TransitionId) -> float:
    """d(frequency)/dB in Hz/T."""
    # energy slope of each level in units of muB/h
    level_slope = {
        1: -0.5 * sys.g_ground,
        2: 0.5 * sys.g_ground,
        3: -0.5 * sys.g_excited,
        4: 0.5 * sys.g_excited,
    }
    return (level_slope[tid.upper] - level_slope[tid.lower]) * MUB_OVER_H


def _offset(sys: ZeemanSystem, tid: TransitionId) -> float:
    return sys.nu0 if tid.is_optical else 0.0


def transition_frequency(sys: ZeemanSystem, tid: TransitionId, B):
    E = level_energies(sys, B)
    return E[tid.upper - 1] - E[tid.lower - 1]


def resonant_field(sys: ZeemanSystem, tid: TransitionId, target: float) -> float:
    """Field at which ``transition_frequency(tid, B) == target``.

    Optical targets are absolute frequencies (Hz), not offsets from nu0.
    """
    shift = target - _offset(sys, tid)
    if shift == 0:
        return 0.0
    B = shift / transition_slope(sys, tid)
    if B < 0:
        raise UnreachableTargetError(
            f"{tid.name} cannot reach {target:.6g} Hz at non-negative field"
        )
    return B


def thermal_populations(sys: ZeemanSystem, B: float, T: float) -> ThermalState:
    """Boltzmann occupation of the ground doublet; excited levels empty."""
    if T <= 0:
        raise ValueError("temperature must be positive")
    nu12 = float(transition_frequency(sys, TransitionId.MW_12, B))
    diff = np.tanh(H * nu12 / (2.0 * K_B * T))
    return ThermalState(T, (0.5 * (1.0 + diff), 0.5 * (1.0 - diff)))


def population_difference(state: ThermalState, tid: TransitionId, model: str = "polarization") -> float:
    """Population difference entering the coupling of transition ``tid``.

    ``"polarization"`` uses the ground-doublet difference p1 - p2 for every
    transition. ``"lower-level"`` uses the occupation of the lower level of
    the transition (p1 - p2 for MW_12), which is the ground-state population an
    optical transition out of that level actually sees.
    """
    if model == "polarization" or tid is TransitionId.MW_12:
        return state.difference
    if model == "lower-level":
        return state.populations[tid.lower - 1]
    raise ValueError(f"unknown population model {model!r}")
