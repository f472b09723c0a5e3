"""Sequential decision environment over a 24-step dispatch day.

States are the normalized loads and available wind of all three
communities; each community is an agent holding an 8-entry action in
[-1, 1] that maps affinely onto its physical setpoints.  One step decodes
the joint action, projects the exchanges, evaluates balances and fuel
cost, and returns a shared scalar reward.  The environment is a value
machine: independent instances can run in parallel, a single instance is
not shared between concurrent callers.

Action layout per agent (all in [-1, 1]):
  0 CHP electric output      4 gas-turbine output
  1 CHP heat-to-power ratio  5 gas-boiler output
  2 cogeneration gross power 6 electric exchange (import positive)
  3 water production rate    7 heat exchange (import positive)
The CHP heat output is controlled through the ratio rather than directly
so the electric/heat coupling always holds, and the cogeneration unit is
controlled through its gross output so its limit stays a plain box.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .scenario import N_STEPS, ScenarioData
from .system import (
    BalanceResult,
    CommunityConfig,
    CommunityLoads,
    DispatchDecision,
    ExchangeLimits,
    SystemConfig,
    clip_to_limits,
    community_cost,
    power_balance,
    project_exchanges,
)

N_AGENTS = 3
STATE_DIM = 12
ACTION_DIM = 8
EPISODE_STEPS = N_STEPS
MODES = ("coordinated", "independent")
OBSERVATION_MODES = ("own", "full")

# State layout: four entries per community, communities in id order.
_QUANTITIES = ("p_load", "h_load", "w_load", "p_wind")


@dataclass(frozen=True)
class RewardParams:
    """Shared reward: u - (cost + kappa * total imbalance) / z.

    ``kappa`` converts the kW-equivalent imbalance into currency per step;
    ``z`` scales the sum into a convenient range and ``u`` keeps the
    reward positive near good dispatches, which also makes it an upper
    bound on any attainable reward.
    """

    z: float = 1e5
    u: float = 10.0
    kappa: float = 1.0

    def __post_init__(self) -> None:
        if self.z <= 0.0:
            raise ValueError(f"z must be positive, got {self.z}")
        if self.kappa < 0.0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")


def compute_scales(scenario: ScenarioData) -> np.ndarray:
    """Per-community, per-quantity normalization scales (3, 4).

    Defaults to each quantity's scenario maximum, floored at 1 so all-zero
    profiles stay well defined.  Persist these with any trained policy so
    evaluation sees the same scaling.
    """
    scales = np.stack([scenario.column(f"{q}_kw" if q != "w_load" else "w_load_m3h").max(axis=1)
                       for q in _QUANTITIES], axis=1)
    return np.maximum(scales, 1.0)


def encode_state(scenario: ScenarioData, t: int, scales: np.ndarray) -> np.ndarray:
    """Normalized 12-vector (p1, h1, w1, wind1, p2, ..., wind3) at step t."""
    if not 0 <= t < EPISODE_STEPS:
        raise ValueError(f"step must be in [0, {EPISODE_STEPS}), got {t}")
    raw = np.stack(
        [scenario.p_load[:, t], scenario.h_load[:, t], scenario.w_load[:, t], scenario.p_wind[:, t]],
        axis=1,
    )
    return (raw / scales).ravel()


def agent_observation(state: np.ndarray, agent: int, observation: str = "own") -> np.ndarray:
    """What one actor sees: its own 4-entry block, or the full state."""
    if observation == "full":
        return np.asarray(state, dtype=float)
    if observation != "own":
        raise ValueError(f"observation must be one of {OBSERVATION_MODES}, got {observation!r}")
    return np.asarray(state, dtype=float)[4 * agent : 4 * agent + 4]


def observation_dim(observation: str) -> int:
    return STATE_DIM if observation == "full" else 4


def action_to_setpoints(
    action: Sequence[float],
    cfg: CommunityConfig,
    limits: ExchangeLimits,
    dt: float = 1.0,
) -> DispatchDecision:
    """Affine map from a clamped [-1, 1] action onto physical setpoints.

    The map is a bijection between the action box and the setpoint boxes;
    endpoint actions land exactly on the device limits.
    """
    a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    if a.shape != (ACTION_DIM,):
        raise ValueError(f"action must have {ACTION_DIM} entries, got shape {a.shape}")

    def lin(u: float, lo: float, hi: float) -> float:
        return float(lo + (u + 1.0) * 0.5 * (hi - lo))

    return DispatchDecision(
        p_chp=lin(a[0], cfg.chp.p_min, cfg.chp.p_max),
        b_chp=lin(a[1], cfg.chp.b_min, cfg.chp.b_max),
        p_tp=lin(a[2], cfg.ro.p_tp_min, cfg.ro.p_tp_max),
        w_rate=lin(a[3], 0.0, cfg.ro.w_max / dt),
        p_gt=lin(a[4], cfg.gt.out_min, cfg.gt.out_max),
        h_gb=lin(a[5], cfg.gb.out_min, cfg.gb.out_max),
        p_exch=lin(a[6], -limits.p_max, limits.p_max),
        h_exch=lin(a[7], -limits.h_max, limits.h_max),
    )


def decode_action(
    action: Sequence[float],
    cfg: CommunityConfig,
    limits: ExchangeLimits,
    dt: float = 1.0,
) -> DispatchDecision:
    """Affine decode followed by clipping into the feasible boxes."""
    return clip_to_limits(action_to_setpoints(action, cfg, limits, dt), cfg, limits, dt)


def step_reward(cost: float, penalties: Sequence[float], params: RewardParams) -> float:
    """Shared team reward for one step; bounded above by ``params.u``."""
    return params.u - (cost + params.kappa * float(sum(penalties))) / params.z


@dataclass(frozen=True)
class StepRecord:
    """Everything observable about one evaluated step."""

    t: int
    decisions: tuple[DispatchDecision, ...]
    balances: tuple[BalanceResult, ...]
    costs: tuple[float, ...]
    wind_avail: tuple[float, ...]
    reward: float
    done: bool

    @property
    def cost_total(self) -> float:
        return sum(self.costs)

    @property
    def penalty_total(self) -> float:
        return sum(b.penalty for b in self.balances)

    @property
    def curtailed_total(self) -> float:
        return sum(b.curtailed for b in self.balances)

    def agent_rewards(self, params: RewardParams) -> tuple[float, ...]:
        """Per-community rewards used when each community learns alone."""
        return tuple(
            params.u - (self.costs[i] + params.kappa * self.balances[i].penalty) / params.z
            for i in range(len(self.costs))
        )


def evaluate_step(
    scenario: ScenarioData,
    t: int,
    actions: np.ndarray,
    system_cfg: SystemConfig,
    reward_params: RewardParams,
    mode: str = "coordinated",
    dt: float = 1.0,
) -> StepRecord:
    """Decode, project, balance and price one joint action. Deterministic."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    actions = np.asarray(actions, dtype=float)
    if actions.shape != (N_AGENTS, ACTION_DIM):
        raise ValueError(f"actions must have shape {(N_AGENTS, ACTION_DIM)}, got {actions.shape}")
    cfgs = system_cfg.communities
    limits = system_cfg.limits

    decisions = [decode_action(actions[i], cfgs[i], limits, dt) for i in range(N_AGENTS)]
    if mode == "independent":
        decisions = [replace(d, p_exch=0.0, h_exch=0.0) for d in decisions]
    p_exch, h_exch = project_exchanges(
        [d.p_exch for d in decisions], [d.h_exch for d in decisions], limits.p_max, limits.h_max
    )
    decisions = [replace(d, p_exch=p_exch[i], h_exch=h_exch[i]) for i, d in enumerate(decisions)]

    balances = []
    final = []
    costs = []
    wind = []
    for i, d in enumerate(decisions):
        loads = CommunityLoads(
            p_load=float(scenario.p_load[i, t]),
            h_load=float(scenario.h_load[i, t]),
            w_load=float(scenario.w_load[i, t]),
        )
        avail = float(scenario.p_wind[i, t])
        bal = power_balance(d, loads, avail, cfgs[i], system_cfg.options, dt)
        balances.append(bal)
        final.append(replace(d, wind_used=avail - bal.curtailed))
        costs.append(community_cost(d, cfgs[i], system_cfg.price))
        wind.append(avail)

    reward = step_reward(sum(costs), [b.penalty for b in balances], reward_params)
    return StepRecord(
        t=t,
        decisions=tuple(final),
        balances=tuple(balances),
        costs=tuple(costs),
        wind_avail=tuple(wind),
        reward=reward,
        done=t == EPISODE_STEPS - 1,
    )


class DispatchEnv:
    """Stateful wrapper driving one 24-step episode at a time."""

    def __init__(
        self,
        scenario: ScenarioData,
        system_cfg: SystemConfig,
        reward_params: RewardParams = RewardParams(),
        mode: str = "coordinated",
        observation: str = "own",
        scales: np.ndarray | None = None,
        dt: float = 1.0,
    ) -> None:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if observation not in OBSERVATION_MODES:
            raise ValueError(f"observation must be one of {OBSERVATION_MODES}, got {observation!r}")
        self.scenario = scenario
        self.system_cfg = system_cfg
        self.reward_params = reward_params
        self.mode = mode
        self.observation = observation
        self.scales = compute_scales(scenario) if scales is None else np.asarray(scales, dtype=float)
        self.dt = dt
        self._t = 0

    @property
    def t(self) -> int:
        return self._t

    def reset(self) -> np.ndarray:
        self._t = 0
        return encode_state(self.scenario, 0, self.scales)

    def agent_obs(self, state: np.ndarray) -> list[np.ndarray]:
        return [agent_observation(state, i, self.observation) for i in range(N_AGENTS)]

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, float, bool, StepRecord]:
        if self._t >= EPISODE_STEPS:
            raise RuntimeError("episode finished; call reset() first")
        record = evaluate_step(
            self.scenario, self._t, actions, self.system_cfg, self.reward_params, self.mode, self.dt
        )
        self._t += 1
        if record.done:
            next_state = np.zeros(STATE_DIM)
        else:
            next_state = encode_state(self.scenario, self._t, self.scales)
        return next_state, record.reward, record.done, record
