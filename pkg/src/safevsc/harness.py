"""Closed-loop orchestration: training runs, greedy evaluation and sensitivity sweeps.

Every run is a pure function of (config, seed): action selection, replay
sampling and per-episode reference phases all derive from seeded generators,
so repeated runs produce byte-identical reports.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis, mpc as mpc_mod, shield as shield_mod
from .agent import AgentConfig, DqnAgent, encode_state, epsilon_at, learning_rate_at, reward
from .mpc import MpcConfig
from .plant import (
    EXACT_ZOH,
    PlantParams,
    PlantState,
    ZERO_INDEX,
    discrete_model,
    inverter_voltage,
    load_current,
    make_action,
    step_axes,
    zero_state,
)
from .shield import ShieldConfig, ShieldDecision
from .signals import AlphaBeta, ReferenceSpec, inverse_clarke, reference_at

CONTROLLERS = ("fcs_mpc", "dqn", "safe_dqn")


class SimulationDiverged(RuntimeError):
    """Raised when a plant state stops being finite; signals a controller bug."""


@dataclass
class RunConfig:
    """Everything needed to reproduce one run."""

    plant: PlantParams = field(default_factory=PlantParams)
    believed: PlantParams = field(default_factory=PlantParams)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    agent: AgentConfig = field(default_factory=AgentConfig)
    shield: ShieldConfig = field(default_factory=ShieldConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    episodes: int = 150
    steps_per_episode: int = 1000
    controller: str = "safe_dqn"
    plant_scheme: str = EXACT_ZOH
    seed: int = 0

    def __post_init__(self) -> None:
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller kind: {self.controller!r}")
        if self.steps_per_episode < 1:
            raise ValueError("steps_per_episode must be >= 1")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        t_s = self.plant.t_s
        for other in (self.believed, self.shield.model_params, self.mpc.model_params):
            if other.t_s != t_s:
                raise ValueError("inconsistent t_s across sub-configs")


def default_config(
    controller: str = "safe_dqn",
    seed: int = 0,
    *,
    episodes: int = 150,
    steps_per_episode: int = 1000,
    plant: PlantParams | None = None,
    believed: PlantParams | None = None,
    reference: ReferenceSpec | None = None,
    agent: AgentConfig | None = None,
    i_max: float = 20.0,
    i_hw_limit: float = 24.0,
    shield_enabled: bool | None = None,
    prediction_scheme: str = EXACT_ZOH,
    plant_scheme: str = EXACT_ZOH,
    lambda_d: float = 0.0,
) -> RunConfig:
    """Consistent run configuration with the shield/MPC wired to the believed model.

    Controller-side predictions default to exact_zoh so the flagship runs use a
    shield scheme matched to the plant; pass prediction_scheme="euler" for the
    lighter first-order predictor.
    """
    plant = plant or PlantParams()
    believed = believed or plant
    reference = reference or ReferenceSpec()
    agent = agent or AgentConfig(seed=seed)
    if shield_enabled is None:
        shield_enabled = controller == "safe_dqn"
    shield_cfg = ShieldConfig(
        model_params=believed,
        i_max=i_max,
        i_hw_limit=i_hw_limit,
        prediction_scheme=prediction_scheme,
        enabled=shield_enabled,
    )
    mpc_cfg = MpcConfig(
        model_params=believed,
        i_max=i_max,
        prediction_scheme=prediction_scheme,
        lambda_d=lambda_d,
        omega_ref=reference.omega,
    )
    return RunConfig(
        plant=plant,
        believed=believed,
        reference=reference,
        agent=agent,
        shield=shield_cfg,
        mpc=mpc_cfg,
        episodes=episodes,
        steps_per_episode=steps_per_episode,
        controller=controller,
        plant_scheme=plant_scheme,
        seed=seed,
    )


def config_to_dict(cfg: RunConfig) -> dict:
    """JSON-friendly echo of the full configuration."""
    d = asdict(cfg)
    d["agent"]["hidden_sizes"] = list(d["agent"]["hidden_sizes"])
    return d


def episode_phase(seed: int, episode: int) -> float:
    """Reference phase for an episode, independent of controller kind and rng history."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, episode]))
    return float(rng.uniform(0.0, 2.0 * math.pi))


@dataclass
class EpisodeLog:
    """Per-step trace of one episode plus its summary counters."""

    episode: int
    epsilon: float
    t: np.ndarray
    ref_alpha: np.ndarray
    ref_beta: np.ndarray
    vf_alpha: np.ndarray
    vf_beta: np.ndarray
    if_alpha: np.ndarray
    if_beta: np.ndarray
    proposed: np.ndarray
    executed: np.ndarray
    intervened: np.ndarray
    rewards: np.ndarray
    i_norm: np.ndarray
    no_safe_action: np.ndarray
    accumulated_reward: float
    max_current: float
    violations_imax: int
    violations_hw: int
    interventions: int
    no_safe_action_steps: int


def _run_closed_loop(
    cfg: RunConfig,
    agent: DqnAgent | None,
    episode_index: int,
    *,
    steps: int | None = None,
    epsilon: float | None = None,
    learn: bool = True,
    randomize_phase: bool = True,
    rng: np.random.Generator | None = None,
) -> EpisodeLog:
    """One deterministic episode; the single loop shared by training and evaluation."""
    steps = steps or cfg.steps_per_episode
    controller = cfg.controller
    is_rl = controller in ("dqn", "safe_dqn")
    if is_rl and agent is None:
        raise ValueError(f"controller {controller!r} needs an agent")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1_000_003 + episode_index]))
    if epsilon is None:
        epsilon = epsilon_at(cfg.agent, episode_index) if is_rl else 0.0

    phase = episode_phase(cfg.seed, episode_index) if randomize_phase else cfg.reference.phase0
    refspec = replace(cfg.reference, phase0=phase)

    model = discrete_model(cfg.plant, cfg.plant_scheme)
    coeffs = model.coeffs()
    t_s = cfg.plant.t_s
    v_dc = cfg.plant.v_dc
    r_load = cfg.plant.r_load
    i_max = cfg.shield.i_max
    i_hw = cfg.shield.i_hw_limit

    state = zero_state()
    prev = make_action(ZERO_INDEX)
    ref = reference_at(refspec, 0.0)
    feats = (
        encode_state(state, ref, prev, cfg.believed, i_max, cfg.agent.prev_action_one_hot)
        if is_rl
        else None
    )

    t_arr = np.empty(steps)
    ref_a = np.empty(steps)
    ref_b = np.empty(steps)
    vf_a = np.empty(steps)
    vf_b = np.empty(steps)
    if_a = np.empty(steps)
    if_b = np.empty(steps)
    prop_arr = np.empty(steps, dtype=np.int64)
    exec_arr = np.empty(steps, dtype=np.int64)
    interv_arr = np.zeros(steps, dtype=bool)
    reward_arr = np.empty(steps)
    norm_arr = np.empty(steps)
    nosafe_arr = np.zeros(steps, dtype=bool)

    for k in range(steps):
        if is_rl:
            a_idx = agent.propose(feats, epsilon, rng)
            proposed = make_action(a_idx, prev)
            decision = shield_mod.shield(state, proposed, ref, prev, cfg.shield)
        else:
            choice = mpc_mod.choose_action(state, ref, cfg.mpc, prev)
            proposed = choice.action
            decision = ShieldDecision(proposed, proposed, False, math.nan, not choice.all_unsafe)
        executed = decision.executed

        v_i = inverter_voltage(executed, v_dc)
        i_o = load_current(state.v_f, r_load)
        nif_a, nif_b, nvf_a, nvf_b = step_axes(
            state.i_f.alpha,
            state.i_f.beta,
            state.v_f.alpha,
            state.v_f.beta,
            v_i.alpha,
            v_i.beta,
            i_o.alpha,
            i_o.beta,
            coeffs,
        )
        if not (
            math.isfinite(nif_a) and math.isfinite(nif_b) and math.isfinite(nvf_a) and math.isfinite(nvf_b)
        ):
            raise SimulationDiverged(
                f"non-finite state at episode {episode_index}, step {k}: "
                f"i_f=({nif_a}, {nif_b}) v_f=({nvf_a}, {nvf_b})"
            )
        t_next = state.t + t_s
        r = reward(ref, AlphaBeta(nvf_a, nvf_b))

        t_arr[k] = t_next
        ref_a[k] = ref.alpha
        ref_b[k] = ref.beta
        vf_a[k] = nvf_a
        vf_b[k] = nvf_b
        if_a[k] = nif_a
        if_b[k] = nif_b
        prop_arr[k] = proposed.index
        exec_arr[k] = executed.index
        interv_arr[k] = decision.intervened
        reward_arr[k] = r
        norm_arr[k] = math.hypot(nif_a, nif_b)
        nosafe_arr[k] = not decision.safe_action_existed

        next_state = PlantState(AlphaBeta(nif_a, nif_b), AlphaBeta(nvf_a, nvf_b), t_next)
        next_ref = reference_at(refspec, t_next)
        if is_rl:
            next_feats = encode_state(
                next_state, next_ref, executed, cfg.believed, i_max, cfg.agent.prev_action_one_hot
            )
            if learn:
                agent.remember(feats, executed.index, r, next_feats, k == steps - 1)
                agent.learn(rng)
            feats = next_feats
        state = next_state
        ref = next_ref
        prev = executed

    return EpisodeLog(
        episode=episode_index,
        epsilon=epsilon,
        t=t_arr,
        ref_alpha=ref_a,
        ref_beta=ref_b,
        vf_alpha=vf_a,
        vf_beta=vf_b,
        if_alpha=if_a,
        if_beta=if_b,
        proposed=prop_arr,
        executed=exec_arr,
        intervened=interv_arr,
        rewards=reward_arr,
        i_norm=norm_arr,
        no_safe_action=nosafe_arr,
        accumulated_reward=float(reward_arr.sum()),
        max_current=float(norm_arr.max()),
        violations_imax=int(np.count_nonzero(norm_arr > i_max)),
        violations_hw=int(np.count_nonzero(norm_arr > i_hw)),
        interventions=int(np.count_nonzero(interv_arr)),
        no_safe_action_steps=int(np.count_nonzero(nosafe_arr)),
    )


def run_episode(
    cfg: RunConfig,
    agent: DqnAgent | None,
    episode_index: int,
    *,
    rng: np.random.Generator | None = None,
    epsilon: float | None = None,
    learn: bool = True,
) -> EpisodeLog:
    """One training-protocol episode: zero initial state, seeded reference phase."""
    return _run_closed_loop(
        cfg, agent, episode_index, epsilon=epsilon, learn=learn, randomize_phase=True, rng=rng
    )


@dataclass
class RunReport:
    """Per-episode learning curve, safety counters and the final evaluation."""

    controller: str
    seed: int
    config: dict
    episode_rewards: np.ndarray
    episode_max_currents: np.ndarray
    episode_violations_imax: np.ndarray
    episode_violations_hw: np.ndarray
    episode_interventions: np.ndarray
    episode_no_safe_action: np.ndarray
    episode_epsilons: np.ndarray
    evaluation: dict | None = None

    @property
    def reward_moving_avg(self) -> np.ndarray:
        return analysis.moving_average(self.episode_rewards, 10)

    def config_digest(self) -> str:
        blob = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "kind": "run_report",
            "controller": self.controller,
            "seed": self.seed,
            "config": self.config,
            "episodes": {
                "reward": self.episode_rewards.tolist(),
                "reward_moving_avg": self.reward_moving_avg.tolist(),
                "max_current": self.episode_max_currents.tolist(),
                "violations_imax": self.episode_violations_imax.tolist(),
                "violations_hw": self.episode_violations_hw.tolist(),
                "interventions": self.episode_interventions.tolist(),
                "no_safe_action_steps": self.episode_no_safe_action.tolist(),
                "epsilon": self.episode_epsilons.tolist(),
            },
            "evaluation": self.evaluation,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        ep = d["episodes"]
        return cls(
            controller=d["controller"],
            seed=d["seed"],
            config=d["config"],
            episode_rewards=np.asarray(ep["reward"], dtype=np.float64),
            episode_max_currents=np.asarray(ep["max_current"], dtype=np.float64),
            episode_violations_imax=np.asarray(ep["violations_imax"], dtype=np.int64),
            episode_violations_hw=np.asarray(ep["violations_hw"], dtype=np.int64),
            episode_interventions=np.asarray(ep["interventions"], dtype=np.int64),
            episode_no_safe_action=np.asarray(ep["no_safe_action_steps"], dtype=np.int64),
            episode_epsilons=np.asarray(ep["epsilon"], dtype=np.float64),
            evaluation=d.get("evaluation"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _report_from_logs(cfg: RunConfig, logs: list[EpisodeLog]) -> RunReport:
    return RunReport(
        controller=cfg.controller,
        seed=cfg.seed,
        config=config_to_dict(cfg),
        episode_rewards=np.array([log.accumulated_reward for log in logs]),
        episode_max_currents=np.array([log.max_current for log in logs]),
        episode_violations_imax=np.array([log.violations_imax for log in logs], dtype=np.int64),
        episode_violations_hw=np.array([log.violations_hw for log in logs], dtype=np.int64),
        episode_interventions=np.array([log.interventions for log in logs], dtype=np.int64),
        episode_no_safe_action=np.array([log.no_safe_action_steps for log in logs], dtype=np.int64),
        episode_epsilons=np.array([log.epsilon for log in logs]),
    )


def train(cfg: RunConfig, *, progress: bool = False) -> tuple[DqnAgent, RunReport]:
    """Full training run followed by a greedy evaluation embedded in the report."""
    if cfg.controller not in ("dqn", "safe_dqn"):
        raise ValueError(f"train() needs a DQN controller kind, got {cfg.controller!r}")
    agent = DqnAgent(cfg.agent)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
    logs = []
    for e in range(cfg.episodes):
        agent.opt.lr = learning_rate_at(cfg.agent, e, cfg.episodes)
        log = run_episode(cfg, agent, e, rng=rng)
        agent.episodes_trained += 1
        logs.append(log)
        if progress and ((e + 1) % 10 == 0 or e == 0):
            print(
                f"episode {e + 1:4d}/{cfg.episodes}  reward {log.accumulated_reward:14.1f}  "
                f"max|i| {log.max_current:6.2f} A  eps {log.epsilon:.3f}"
            )
    report = _report_from_logs(cfg, logs)
    _, metrics, _ = evaluate(cfg, agent)
    report.evaluation = metrics
    return agent, report


def baseline_report(cfg: RunConfig, *, progress: bool = False) -> RunReport:
    """Run the FCS-MPC baseline through the training-episode protocol."""
    if cfg.controller != "fcs_mpc":
        raise ValueError("baseline_report() is for the fcs_mpc controller")
    logs = []
    for e in range(cfg.episodes):
        log = run_episode(cfg, None, e)
        logs.append(log)
        if progress and ((e + 1) % 10 == 0 or e == 0):
            print(f"episode {e + 1:4d}/{cfg.episodes}  reward {log.accumulated_reward:14.1f}")
    report = _report_from_logs(cfg, logs)
    _, metrics, _ = evaluate(cfg, None)
    report.evaluation = metrics
    return report


def evaluate(
    cfg: RunConfig,
    agent: DqnAgent | None,
    *,
    periods: int = 10,
    warmup_periods: int = 2,
    max_harmonic: int = 500,
) -> tuple[dict[str, analysis.Waveform], dict, EpisodeLog]:
    """Greedy steady-state evaluation over `periods` fundamentals after a warm-up.

    Returns reconstructed phase waveforms, a metrics dict (THD, RMS error, max
    current) and the full per-step trace.
    """
    spp = round(1.0 / (cfg.reference.frequency * cfg.plant.t_s))
    total = (warmup_periods + periods) * spp
    log = _run_closed_loop(
        cfg, agent, 0, steps=total, epsilon=0.0, learn=False, randomize_phase=False
    )
    sample_rate = 1.0 / cfg.plant.t_s
    lo = warmup_periods * spp

    phase_a, phase_b, phase_c = [], [], []
    ref_a = []
    for va, vb, ra, rb in zip(log.vf_alpha[lo:], log.vf_beta[lo:], log.ref_alpha[lo:], log.ref_beta[lo:]):
        a, b, c = inverse_clarke(AlphaBeta(va, vb))
        phase_a.append(a)
        phase_b.append(b)
        phase_c.append(c)
        ref_a.append(inverse_clarke(AlphaBeta(ra, rb))[0])
    waveforms = {
        "v_phase_a": analysis.Waveform(np.array(phase_a), sample_rate, "v_f phase a"),
        "v_phase_b": analysis.Waveform(np.array(phase_b), sample_rate, "v_f phase b"),
        "v_phase_c": analysis.Waveform(np.array(phase_c), sample_rate, "v_f phase c"),
        "v_alpha": analysis.Waveform(log.vf_alpha[lo:], sample_rate, "v_f alpha"),
        "v_beta": analysis.Waveform(log.vf_beta[lo:], sample_rate, "v_f beta"),
        "i_alpha": analysis.Waveform(log.if_alpha[lo:], sample_rate, "i_f alpha"),
        "i_beta": analysis.Waveform(log.if_beta[lo:], sample_rate, "i_f beta"),
        "ref_alpha": analysis.Waveform(log.ref_alpha[lo:], sample_rate, "ref alpha"),
        "ref_beta": analysis.Waveform(log.ref_beta[lo:], sample_rate, "ref beta"),
    }
    thd_res = analysis.thd(waveforms["v_phase_a"], cfg.reference.frequency, max_harmonic)
    vf_trace = np.column_stack([log.vf_alpha[lo:], log.vf_beta[lo:]])
    ref_trace = np.column_stack([log.ref_alpha[lo:], log.ref_beta[lo:]])
    plot_window = min(2 * spp, len(phase_a))
    metrics = {
        "controller": cfg.controller,
        "periods": periods,
        "warmup_periods": warmup_periods,
        "sample_rate": sample_rate,
        "fundamental_hz": cfg.reference.frequency,
        "thd": thd_res.thd,
        "thd_percent": thd_res.thd_percent,
        "fundamental_magnitude": thd_res.fundamental,
        "rms_error": analysis.rms_tracking_error(vf_trace, ref_trace),
        "max_current": float(log.i_norm[lo:].max()),
        "mean_step_reward": float(log.rewards[lo:].mean()),
        "harmonic_orders": [int(h) for h in thd_res.orders],
        "harmonic_magnitudes": thd_res.harmonics.tolist(),
        "waveform_phase_a": phase_a[:plot_window],
        "ref_phase_a": ref_a[:plot_window],
    }
    return waveforms, metrics, log


@dataclass
class SweepEntry:
    """One sensitivity run: fractional parameter deltas and its report."""

    delta_l: float
    delta_c: float
    report: RunReport


def perturbed_config(cfg: RunConfig, delta_l: float, delta_c: float) -> RunConfig:
    """Perturb plant truth; the believed model in shield/MPC stays nominal."""
    truth = replace(
        cfg.plant, l_f=cfg.plant.l_f * (1.0 + delta_l), c_f=cfg.plant.c_f * (1.0 + delta_c)
    )
    return replace(cfg, plant=truth)


def _sweep_worker(args: tuple[RunConfig, float, float]) -> tuple[float, float, str]:
    cfg, delta_l, delta_c = args
    _, report = train(perturbed_config(cfg, delta_l, delta_c))
    return delta_l, delta_c, report.to_json()


def sensitivity_sweep(
    cfg: RunConfig,
    deltas: list[tuple[float, float]],
    *,
    max_workers: int | None = None,
) -> list[SweepEntry]:
    """Train once per (delta_l, delta_c) pair, optionally across worker processes."""
    for dl, dc in deltas:
        if not (-0.3 <= dl <= 0.3 and -0.3 <= dc <= 0.3):
            raise ValueError(f"delta ({dl}, {dc}) outside [-0.3, 0.3]")
    jobs = [(cfg, dl, dc) for dl, dc in deltas]
    if max_workers is not None and max_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(job) for job in jobs]
    return [
        SweepEntry(dl, dc, RunReport.from_dict(json.loads(blob))) for dl, dc, blob in results
    ]


TRACE_COLUMNS = (
    "t",
    "v_ref_a",
    "v_ref_b",
    "vf_a",
    "vf_b",
    "if_a",
    "if_b",
    "action",
    "intervened",
    "reward",
)


def write_trace_csv(log: EpisodeLog, path: str | Path, provenance: str = "") -> None:
    """Per-step trace in the documented column order; floats written losslessly."""
    with open(path, "w", newline="") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for k in range(len(log.t)):
            writer.writerow(
                [
                    repr(float(log.t[k])),
                    repr(float(log.ref_alpha[k])),
                    repr(float(log.ref_beta[k])),
                    repr(float(log.vf_alpha[k])),
                    repr(float(log.vf_beta[k])),
                    repr(float(log.if_alpha[k])),
                    repr(float(log.if_beta[k])),
                    int(log.executed[k]),
                    int(log.intervened[k]),
                    repr(float(log.rewards[k])),
                ]
            )
