"""Two-level VSC with an output LC filter and resistive load, per-axis alpha-beta model.

State is [i_f; v_f] per axis with input [v_i; i_o]; the alpha and beta axes are
decoupled and share the same 2x2 discrete model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from .signals import AlphaBeta, clarke

EULER = "euler"
EXACT_ZOH = "exact_zoh"
SCHEMES = (EULER, EXACT_ZOH)


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the converter, filter and load."""

    v_dc: float = 520.0
    l_f: float = 2.5e-3
    r_f: float = 0.013
    c_f: float = 30e-6
    r_load: float = 50.0
    t_s: float = 20e-6

    def __post_init__(self) -> None:
        for name in ("v_dc", "l_f", "c_f", "r_load", "t_s"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.r_f < 0.0:
            raise ValueError("r_f must be non-negative")


class PlantState(NamedTuple):
    """Filter current, capacitor voltage and simulation time."""

    i_f: AlphaBeta
    v_f: AlphaBeta
    t: float


def zero_state() -> PlantState:
    return PlantState(AlphaBeta(0.0, 0.0), AlphaBeta(0.0, 0.0), 0.0)


# Active vectors 1..6 at angles 0, 60, ..., 300 degrees; index 7 is the zero vector.
ACTIVE_GATES: dict[int, tuple[int, int, int]] = {
    1: (1, 0, 0),
    2: (1, 1, 0),
    3: (0, 1, 0),
    4: (0, 1, 1),
    5: (0, 0, 1),
    6: (1, 0, 1),
}
ZERO_INDEX = 7
ACTION_INDICES = (1, 2, 3, 4, 5, 6, 7)


class SwitchAction(NamedTuple):
    """One of the 7 voltage vectors with its concrete gate pattern."""

    index: int
    gates: tuple[int, int, int]


def zero_vector_gates(prev_gates: tuple[int, int, int] | None) -> tuple[int, int, int]:
    """Pick (0,0,0) or (1,1,1) for the zero vector, minimizing gate toggles from prev."""
    if prev_gates is None:
        return (0, 0, 0)
    toggles_low = sum(g != 0 for g in prev_gates)
    toggles_high = 3 - toggles_low
    return (1, 1, 1) if toggles_high < toggles_low else (0, 0, 0)


def make_action(index: int, prev: SwitchAction | None = None) -> SwitchAction:
    """Materialize an action index 1..7 into a gate pattern."""
    if index == ZERO_INDEX:
        return SwitchAction(ZERO_INDEX, zero_vector_gates(prev.gates if prev else None))
    return SwitchAction(index, ACTIVE_GATES[index])


def all_actions(prev: SwitchAction | None = None) -> tuple[SwitchAction, ...]:
    """The full 7-action set, with the zero vector resolved against prev."""
    return tuple(make_action(i, prev) for i in ACTION_INDICES)


def inverter_voltage(a: SwitchAction, v_dc: float) -> AlphaBeta:
    """Alpha-beta inverter output voltage of a gate pattern (Clarke of pole voltages)."""
    s_a, s_b, s_c = a.gates
    third = v_dc / 3.0
    v_an = third * (2 * s_a - s_b - s_c)
    v_bn = third * (2 * s_b - s_a - s_c)
    v_cn = third * (2 * s_c - s_a - s_b)
    return clarke(v_an, v_bn, v_cn)


@dataclass(frozen=True)
class DiscreteModel:
    """Per-axis 2x2 discrete state and input matrices."""

    a_d: np.ndarray
    b_d: np.ndarray
    t_s: float
    scheme: str

    def coeffs(self) -> tuple[float, float, float, float, float, float, float, float]:
        """Flat (a11, a12, a21, a22, b11, b12, b21, b22) for scalar stepping."""
        a, b = self.a_d, self.b_d
        return (a[0, 0], a[0, 1], a[1, 0], a[1, 1], b[0, 0], b[0, 1], b[1, 0], b[1, 1])


def continuous_matrices(p: PlantParams) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time A, B of the LC filter acting on [i_f; v_f] with input [v_i; i_o]."""
    a = np.array([[-p.r_f / p.l_f, -1.0 / p.l_f], [1.0 / p.c_f, 0.0]])
    b = np.array([[1.0 / p.l_f, 0.0], [0.0, -1.0 / p.c_f]])
    return a, b


def discretize(a: np.ndarray, b: np.ndarray, t_s: float, scheme: str) -> DiscreteModel:
    """Forward-Euler or exact zero-order-hold discretization with sampling time t_s."""
    if not t_s > 0.0:
        raise ValueError("t_s must be positive")
    if scheme == EULER:
        a_d = np.eye(2) + a * t_s
        b_d = b * t_s
    elif scheme == EXACT_ZOH:
        # expm of the [[A, B], [0, 0]] block gives [[A_d, B_d], [0, I]].
        block = np.zeros((4, 4))
        block[:2, :2] = a
        block[:2, 2:] = b
        phi = expm(block * t_s)
        a_d = phi[:2, :2]
        b_d = phi[:2, 2:]
    else:
        raise ValueError(f"unknown discretization scheme: {scheme!r}")
    return DiscreteModel(a_d=a_d, b_d=b_d, t_s=t_s, scheme=scheme)


@lru_cache(maxsize=64)
def discrete_model(p: PlantParams, scheme: str) -> DiscreteModel:
    """Cached discrete model for a parameter set."""
    a, b = continuous_matrices(p)
    return discretize(a, b, p.t_s, scheme)


def load_current(v_f: AlphaBeta, r_load: float) -> AlphaBeta:
    """Resistive load current drawn from the capacitor voltage."""
    if not r_load > 0.0:
        raise ValueError("r_load must be positive")
    return AlphaBeta(v_f.alpha / r_load, v_f.beta / r_load)


def step_axes(
    if_a: float,
    if_b: float,
    vf_a: float,
    vf_b: float,
    vi_a: float,
    vi_b: float,
    io_a: float,
    io_b: float,
    c: tuple[float, float, float, float, float, float, float, float],
) -> tuple[float, float, float, float]:
    """Advance both decoupled axes one step; shared by plant and all predictors."""
    a11, a12, a21, a22, b11, b12, b21, b22 = c
    return (
        a11 * if_a + a12 * vf_a + b11 * vi_a + b12 * io_a,
        a11 * if_b + a12 * vf_b + b11 * vi_b + b12 * io_b,
        a21 * if_a + a22 * vf_a + b21 * vi_a + b22 * io_a,
        a21 * if_b + a22 * vf_b + b21 * vi_b + b22 * io_b,
    )


def step(state: PlantState, a: SwitchAction, model: DiscreteModel, p: PlantParams) -> PlantState:
    """One sampling period of the plant; load current is taken at the step start."""
    v_i = inverter_voltage(a, p.v_dc)
    i_o = load_current(state.v_f, p.r_load)
    nif_a, nif_b, nvf_a, nvf_b = step_axes(
        state.i_f.alpha,
        state.i_f.beta,
        state.v_f.alpha,
        state.v_f.beta,
        v_i.alpha,
        v_i.beta,
        i_o.alpha,
        i_o.beta,
        model.coeffs(),
    )
    return PlantState(AlphaBeta(nif_a, nif_b), AlphaBeta(nvf_a, nvf_b), state.t + model.t_s)


def stored_energy(state: PlantState, p: PlantParams) -> float:
    """Total filter energy 0.5*L*|i|^2 + 0.5*C*|v|^2."""
    i2 = state.i_f.alpha**2 + state.i_f.beta**2
    v2 = state.v_f.alpha**2 + state.v_f.beta**2
    return 0.5 * p.l_f * i2 + 0.5 * p.c_f * v2
