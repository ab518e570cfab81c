"""Rectangular scan grids: the exchange format between simulation, fitting and I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Axis", "ScanResult"]


@dataclass(frozen=True)
class Axis:
    name: str
    unit: str
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError(f"axis {self.name!r} must be a non-empty 1-D grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class ScanResult:
    axis1: Axis
    values: np.ndarray
    name: str = "value"
    unit: str = ""
    axis2: Axis | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values)
        shape = (len(self.axis1),) if self.axis2 is None else (len(self.axis1), len(self.axis2))
        if v.size != int(np.prod(shape)):
            raise ValueError(f"{v.size} values for a grid of shape {shape}")
        v = np.array(v.reshape(shape))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def is_2d(self) -> bool:
        return self.axis2 is not None
