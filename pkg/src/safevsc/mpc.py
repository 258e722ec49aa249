"""One-step finite control-set MPC: enumerate the 7 vectors, pick the cheapest safe one."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .plant import (
    EXACT_ZOH,
    PlantParams,
    PlantState,
    SwitchAction,
    all_actions,
    discrete_model,
    inverter_voltage,
    load_current,
    step_axes,
)
from .signals import AlphaBeta

# Overcurrent sentinel, larger than any finite tracking cost.
UNSAFE_COST = math.inf


@dataclass
class MpcConfig:
    """Controller-side model and limits; model_params may differ from plant truth.

    prediction_scheme defaults to exact_zoh: under forward Euler the one-step
    capacitor-voltage row has no direct inverter-voltage input (B_d[1][0] = 0),
    so a voltage-only cost cannot distinguish the 7 vectors.
    """

    model_params: PlantParams = field(default_factory=PlantParams)
    i_max: float = 20.0
    prediction_scheme: str = EXACT_ZOH
    lambda_d: float = 0.0
    omega_ref: float = 2.0 * math.pi * 50.0

    def __post_init__(self) -> None:
        if not self.i_max > 0.0:
            raise ValueError("i_max must be positive")


class MpcChoice(NamedTuple):
    """Selected action plus the evidence behind it."""

    action: SwitchAction
    cost: float
    all_unsafe: bool


def predict_one_step(state: PlantState, a: SwitchAction, cfg: MpcConfig) -> PlantState:
    """Next state under the controller's believed parameters and scheme."""
    p = cfg.model_params
    model = discrete_model(p, cfg.prediction_scheme)
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


def mpc_cost(pred: PlantState, ref: AlphaBeta, i_max: float) -> float:
    """Squared voltage tracking error, or the overcurrent sentinel past the limit."""
    if math.hypot(pred.i_f.alpha, pred.i_f.beta) > i_max:
        return UNSAFE_COST
    ea = ref.alpha - pred.v_f.alpha
    eb = ref.beta - pred.v_f.beta
    return ea * ea + eb * eb


def derivative_cost(pred: PlantState, ref: AlphaBeta, cfg: MpcConfig) -> float:
    """Optional damping term on the predicted capacitor current, off by default."""
    p = cfg.model_params
    i_o = load_current(pred.v_f, p.r_load)
    cw = p.c_f * cfg.omega_ref
    ga = cw * ref.beta - pred.i_f.alpha + i_o.alpha
    gb = cw * ref.alpha + pred.i_f.beta - i_o.beta
    return ga * ga + gb * gb


def action_costs(
    state: PlantState, ref: AlphaBeta, cfg: MpcConfig, prev: SwitchAction | None = None
) -> tuple[tuple[SwitchAction, ...], list[PlantState], list[float]]:
    """Predictions and costs for the full 7-action set."""
    actions = all_actions(prev)
    preds = [predict_one_step(state, a, cfg) for a in actions]
    costs = []
    for pred in preds:
        g = mpc_cost(pred, ref, cfg.i_max)
        if cfg.lambda_d != 0.0 and g != UNSAFE_COST:
            g += cfg.lambda_d * derivative_cost(pred, ref, cfg)
        costs.append(g)
    return actions, preds, costs


def choose_action(
    state: PlantState, ref: AlphaBeta, cfg: MpcConfig, prev: SwitchAction | None = None
) -> MpcChoice:
    """Cost-minimizing action; ties keep prev, else lowest index.

    If every action violates the current limit, fall back to the action with
    the smallest predicted current norm and flag the step.
    """
    actions, preds, costs = action_costs(state, ref, cfg, prev)
    best = min(costs)
    if best == UNSAFE_COST:
        norms = [math.hypot(p.i_f.alpha, p.i_f.beta) for p in preds]
        k = norms.index(min(norms))
        return MpcChoice(actions[k], costs[k], True)
    if prev is not None and costs[prev.index - 1] == best:
        return MpcChoice(actions[prev.index - 1], best, False)
    k = costs.index(best)
    return MpcChoice(actions[k], best, False)


def select_action(
    state: PlantState, ref: AlphaBeta, cfg: MpcConfig, prev: SwitchAction | None = None
) -> SwitchAction:
    """Convenience wrapper around choose_action returning only the action."""
    return choose_action(state, ref, cfg, prev).action
