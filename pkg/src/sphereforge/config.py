"""Numerical tolerances shared by every module.

All defaults live here so that a run record can embed one object and
reproduce every threshold that was used.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    unit_norm: float = 1e-12
    weight_sum: float = 1e-12
    orthonormal: float = 1e-10
    gram_condition: float = 1e12
    lp_feasibility: float = 1e-9
    lp_pivot: float = 1e-9
    certificate_margin: float = 1e-9
    design_residual: float = 1e-10
    isometry: float = 1e-10

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


DEFAULT = Tolerances()
