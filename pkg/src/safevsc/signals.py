"""Clarke transforms and sinusoidal reference generation in the stationary alpha-beta frame."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

SQRT3 = math.sqrt(3.0)
TWO_THIRDS = 2.0 / 3.0


class AlphaBeta(NamedTuple):
    """Two-axis vector in the stationary alpha-beta frame (volts or amperes)."""

    alpha: float
    beta: float

    def magnitude(self) -> float:
        return math.hypot(self.alpha, self.beta)


@dataclass(frozen=True)
class ReferenceSpec:
    """Per-phase peak amplitude, frequency and initial phase of the rotating reference."""

    amplitude: float = 200.0
    frequency: float = 50.0
    phase0: float = 0.0

    def __post_init__(self) -> None:
        if not self.amplitude > 0.0:
            raise ValueError("reference amplitude must be positive")
        if not self.frequency > 0.0:
            raise ValueError("reference frequency must be positive")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency

    @property
    def period(self) -> float:
        return 1.0 / self.frequency


def clarke(a: float, b: float, c: float) -> AlphaBeta:
    """Amplitude-invariant Clarke transform, abc to alpha-beta."""
    return AlphaBeta(TWO_THIRDS * (a - 0.5 * b - 0.5 * c), (b - c) / SQRT3)


def inverse_clarke(v: AlphaBeta) -> tuple[float, float, float]:
    """Alpha-beta back to three phases, zero-sequence free."""
    half_beta = 0.5 * SQRT3 * v.beta
    return v.alpha, -0.5 * v.alpha + half_beta, -0.5 * v.alpha - half_beta


def reference_at(spec: ReferenceSpec, t: float) -> AlphaBeta:
    """Reference vector of constant magnitude rotating at the fundamental frequency."""
    angle = spec.omega * t + spec.phase0
    return AlphaBeta(spec.amplitude * math.cos(angle), spec.amplitude * math.sin(angle))
