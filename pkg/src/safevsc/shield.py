"""One-step predictive current-limit shield wrapped around any action proposal.

The shield predicts the filter current one sampling period ahead for the
proposed switching state. Safe proposals pass through untouched; unsafe ones
are replaced by the cheapest safe alternative from the full 7-vector set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import mpc
from .plant import EULER, PlantParams, PlantState, SwitchAction, all_actions
from .signals import AlphaBeta


@dataclass
class ShieldConfig:
    """Believed model, the shield threshold i_max and the hardware damage limit."""

    model_params: PlantParams = field(default_factory=PlantParams)
    i_max: float = 20.0
    i_hw_limit: float = 24.0
    prediction_scheme: str = EULER
    enabled: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.i_max <= self.i_hw_limit:
            raise ValueError("require 0 < i_max <= i_hw_limit")

    def _mpc_config(self) -> mpc.MpcConfig:
        return mpc.MpcConfig(
            model_params=self.model_params,
            i_max=self.i_max,
            prediction_scheme=self.prediction_scheme,
        )


@dataclass(frozen=True)
class ShieldDecision:
    """What was executed versus proposed, and the prediction behind it."""

    executed: SwitchAction
    proposed: SwitchAction
    intervened: bool
    predicted_norm: float
    safe_action_existed: bool


def predict_next(ps: PlantState, a: SwitchAction, cfg: ShieldConfig) -> PlantState:
    """Full one-step prediction under the shield's believed model."""
    return mpc.predict_one_step(ps, a, cfg._mpc_config())


def predict_current(ps: PlantState, a: SwitchAction, cfg: ShieldConfig) -> AlphaBeta:
    """The filter-current row of the one-step prediction."""
    return predict_next(ps, a, cfg).i_f


def is_safe(i_pred: AlphaBeta, i_max: float) -> bool:
    """Non-strict current-norm limit check."""
    return math.hypot(i_pred.alpha, i_pred.beta) <= i_max


def shield(
    ps: PlantState,
    proposed: SwitchAction,
    ref: AlphaBeta,
    prev: SwitchAction | None,
    cfg: ShieldConfig,
) -> ShieldDecision:
    """Pass a safe proposal through, else substitute the cheapest safe action.

    The fallback minimizes the one-step voltage-tracking cost over the safe
    subset; if no action is safe, it minimizes the predicted current norm.
    At most 7 one-step predictions are made per invocation.
    """
    if not cfg.enabled:
        return ShieldDecision(proposed, proposed, False, math.nan, True)

    pred = predict_next(ps, proposed, cfg)
    norm = math.hypot(pred.i_f.alpha, pred.i_f.beta)
    if norm <= cfg.i_max:
        return ShieldDecision(proposed, proposed, False, norm, True)

    preds = {proposed.index: pred}
    for a in all_actions(prev):
        if a.index not in preds:
            preds[a.index] = predict_next(ps, a, cfg)

    safe: list[tuple[float, int, SwitchAction, float]] = []
    norms: list[tuple[float, int, SwitchAction]] = []
    for a in all_actions(prev):
        pa = preds[a.index]
        na = math.hypot(pa.i_f.alpha, pa.i_f.beta)
        norms.append((na, a.index, a))
        if na <= cfg.i_max:
            cost = mpc.mpc_cost(pa, ref, cfg.i_max)
            safe.append((cost, a.index, a, na))

    if safe:
        cost, _, action, na = min(safe)
        return ShieldDecision(action, proposed, True, na, True)
    na, _, action = min(norms)
    return ShieldDecision(action, proposed, True, na, False)
