"""The two-agent harvesting Markov game.

Group-U (arms 1, 2) and group-D (arms 3, 4) act simultaneously.  Each joint
step every group picks a :class:`GroupAction`; the arm bits select one of the
nine intra-group transitions, time is charged per transition kind, and the
two group clocks are realigned whenever a group pauses.

:func:`step` is a pure function of its arguments.  :class:`HarvestEnv` wraps
it in the usual reset/step loop for rollouts.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import IllegalAction, InvalidState, TooManyFruits
from .types import (
    GROUPS,
    ArmState,
    EpisodeMetrics,
    FruitLayout,
    GroupAction,
    Phase,
    SystemState,
    TransitionKind,
    validate_state,
)
from .workspace import WorkspaceConfig, phase_duration, travel_time, zone_of

AEG, RP = Phase.AEG, Phase.RP

# Bit-pair head order of the factorized action space.
BIT_PAIRS = ((0, 1), (1, 0), (1, 1))
PAUSE_BITS = 2

_TABLE = {
    ((AEG, RP), (1, 1)): TransitionKind.T1,
    ((AEG, RP), (1, 0)): TransitionKind.T2,
    ((AEG, RP), (0, 1)): TransitionKind.T3,
    ((RP, AEG), (0, 1)): TransitionKind.T4,
    ((RP, AEG), (1, 0)): TransitionKind.T5,
    ((RP, AEG), (1, 1)): TransitionKind.T6,
    ((RP, RP), (1, 1)): TransitionKind.T7,
    ((RP, RP), (0, 1)): TransitionKind.T8,
    ((RP, RP), (1, 0)): TransitionKind.T9,
}

_AEG_ONLY = {TransitionKind.T2, TransitionKind.T4, TransitionKind.T8, TransitionKind.T9}
_FULL_CYCLE = {TransitionKind.T3, TransitionKind.T5}


class DoneReason(enum.Enum):
    ALL_PICKED = "AllPicked"
    TIMEOUT = "Timeout"
    NOT_DONE = "NotDone"


@dataclass(frozen=True)
class EnvConfig:
    alpha: float = 1.0
    r_explore: float = 0.05
    r_conflict: float = -0.1
    r_timeout: float = -50.0
    r_complete: float = 100.0
    k_max: Optional[int] = None  # None: 6 joint steps per fruit
    max_attempts: int = 3
    gamma: float = 0.95
    n_max: int = 60
    t_norm: float = 100.0
    conflict_rule: str = "distance"  # or "zone"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.k_max is not None and self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if not 1 <= self.max_attempts <= 3:
            raise ValueError("max_attempts must be in 1..3")
        if self.conflict_rule not in ("distance", "zone"):
            raise ValueError(f"unknown conflict rule {self.conflict_rule!r}")

    def horizon(self, n_fruits: int) -> int:
        if self.k_max is not None:
            return self.k_max
        return max(1, 6 * n_fruits)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        return cls(**d)


class PhaseDurations(NamedTuple):
    aeg: float = 0.0
    rp: float = 0.0


@dataclass(frozen=True)
class StepResult:
    next_state: SystemState
    rewards: tuple
    transition_kinds: tuple
    time_deltas: tuple
    done: bool
    done_reason: DoneReason
    conflict: bool = False
    arm_work: tuple = (0.0, 0.0, 0.0, 0.0)


def classify_transition(prev_phases, action_bits) -> TransitionKind:
    key = (tuple(Phase(p) for p in prev_phases), tuple(int(b) for b in action_bits))
    try:
        return _TABLE[key]
    except KeyError:
        raise IllegalAction(f"no transition from phases {key[0]} with bits {key[1]}") from None


def next_phases(kind: TransitionKind) -> tuple:
    for (_, bits), k in _TABLE.items():
        if k is kind:
            return (Phase(bits[0]), Phase(bits[1]))
    raise AssertionError(kind)


def time_cost(kind: TransitionKind, durations: PhaseDurations, other_agent_delta: float = 0.0) -> float:
    """Time charged to a group for one transition.

    For pauses ``durations.rp`` is whatever the group still has to finish on
    its own (a pending retraction), so the idle time never hides real work.
    """
    if kind in _AEG_ONLY:
        return durations.aeg
    if kind in _FULL_CYCLE:
        return durations.aeg + durations.rp
    return max(durations.rp, other_agent_delta)


def time_reward(t: float, alpha: float = 1.0) -> float:
    return alpha * math.expm1(-t)


def initial_state(layout: FruitLayout, ws: WorkspaceConfig) -> SystemState:
    return SystemState.initial(layout, ws.drop_points)


@lru_cache(maxsize=64)
def _reach_matrix(layout: FruitLayout, ws: WorkspaceConfig) -> np.ndarray:
    pos = layout.positions
    out = np.zeros((layout.n, 4), dtype=bool)
    for m, (lo, hi) in enumerate(ws.arm_boxes):
        out[:, m] = np.all((pos >= np.array(lo)) & (pos <= np.array(hi)), axis=1)
    return out


def reach_matrix(layout: FruitLayout, ws: WorkspaceConfig) -> np.ndarray:
    """N x 4 boolean matrix: fruit n reachable by arm m+1."""
    return _reach_matrix(layout, ws)


def open_fruits(state: SystemState, cfg: EnvConfig) -> np.ndarray:
    """Fruits that may still be claimed: unpicked, unallocated, attempts left."""
    total = state.attempts.sum(axis=1)
    return (~state.picked.any(axis=1)) & (state.allocation.sum(axis=1) == 0) & (total < cfg.max_attempts)


def in_progress_targets(state: SystemState, group: int) -> list:
    """Positions held by the group's arms that are currently in AEG."""
    return [state.arms[m].position for m in GROUPS[group] if state.arms[m].phase == AEG]


def _separated(state: SystemState, group: int, ws: WorkspaceConfig) -> np.ndarray:
    pos = state.layout.positions
    ok = np.ones(state.layout.n, dtype=bool)
    for p in in_progress_targets(state, 1 - group):
        ok &= np.linalg.norm(pos - np.asarray(p), axis=1) >= ws.d_min
    return ok


def legal_target_sets(state: SystemState, cfg: EnvConfig, ws: WorkspaceConfig) -> tuple:
    """Per group, per arm offset (left, right): 0-based indices of claimable fruits."""
    base = open_fruits(state, cfg)
    reach = reach_matrix(state.layout, ws)
    out = []
    for g, arms in enumerate(GROUPS):
        ok = base & _separated(state, g, ws)
        out.append(tuple(np.flatnonzero(ok & reach[:, m]) for m in arms))
    return tuple(out)


def legal_actions(state: SystemState, cfg: EnvConfig, ws: WorkspaceConfig) -> tuple:
    """Per group: the pause action followed by every legal (target, bits) action.

    Bits (0, 1) send the left arm into AEG, (1, 0) the right arm.  A joint
    action is legal when each part is in its group's list and the two groups
    do not claim the same fruit.
    """
    sets = legal_target_sets(state, cfg, ws)
    out = []
    for left, right in sets:
        acts = [GroupAction.pause()]
        acts += [GroupAction(int(n) + 1, 0, 1) for n in left]
        acts += [GroupAction(int(n) + 1, 1, 0) for n in right]
        out.append(acts)
    return tuple(out)


def is_legal(state: SystemState, actions, cfg: EnvConfig, ws: WorkspaceConfig) -> bool:
    try:
        check_joint_action(state, actions, cfg, ws)
    except IllegalAction:
        return False
    return True


def check_joint_action(state, actions, cfg, ws) -> None:
    if len(actions) != 2:
        raise IllegalAction("need one action per group")
    sets = legal_target_sets(state, cfg, ws)
    for g, act in enumerate(actions):
        if not isinstance(act, GroupAction):
            raise IllegalAction(f"group {g} action is not a GroupAction")
        e = act.entering
        if e is None:
            continue
        if act.target == 0:
            raise IllegalAction(f"group {'UD'[g]}: an arm entering AEG needs a target")
        if act.fruit not in sets[g][e]:
            raise IllegalAction(f"group {'UD'[g]}: fruit {act.target} is masked for arm {GROUPS[g][e] + 1}")
    if actions[0].target and actions[0].target == actions[1].target:
        raise IllegalAction(f"both groups claim fruit {actions[0].target}")


def is_complete(state: SystemState, cfg: EnvConfig) -> bool:
    resolved = state.picked.any(axis=1) | (state.attempts.sum(axis=1) >= cfg.max_attempts)
    return bool(resolved.all()) and all(a.phase == RP for a in state.arms)


def _in_conflict(p, q, ws: WorkspaceConfig, rule: str) -> bool:
    if rule == "zone":
        z = zone_of(p, ws)
        return z is not None and z == zone_of(q, ws) and z in ("OL", "OR", "OC")
    return math.dist(p, q) < ws.d_min


def step(
    state: SystemState,
    actions: Sequence[GroupAction],
    cfg: EnvConfig,
    ws: WorkspaceConfig,
    check: bool = True,
) -> StepResult:
    """Advance the game by one joint step.

    ``check=False`` skips the state and mask validation; the exhaustive
    search uses it on states it generated itself.
    """
    if check:
        bad = validate_state(state, k_max=cfg.horizon(state.layout.n))
        if bad:
            raise InvalidState(f"invalid state: {bad}")
        check_joint_action(state, actions, cfg, ws)

    layout = state.layout
    arms = list(state.arms)
    alloc = state.allocation.copy()
    att = state.attempts.copy()
    picked = state.picked.copy()
    clocks = state.agent_clock
    work = [0.0] * 4
    kinds, ends, durs = [], [], []
    active = [None, None]
    explored = [False, False]

    for g, idx in enumerate(GROUPS):
        act = actions[g]
        c = clocks[g]
        kind = classify_transition((arms[idx[0]].phase, arms[idx[1]].phase), act.bits)
        rp = 0.0
        for m in idx:
            arm = arms[m]
            if arm.phase == AEG:
                # Every arm leaving its grasp retracts first, including T3/T5 re-entries.
                rp = phase_duration(arm, arm.position, ws, RP)
                arms[m] = ArmState(m + 1, ws.drop_points[m], RP, c + rp)
                work[m] += rp
        e = act.entering
        if e is None:
            end = max([c] + [arms[m].busy_until for m in idx])
            durs.append(PhaseDurations(0.0, end - c))
        else:
            m = idx[e]
            n = act.fruit
            target = tuple(float(v) for v in layout.positions[n])
            start = max(c, arms[m].busy_until)
            aeg = phase_duration(arms[m], target, ws)
            end = start + aeg
            arms[m] = ArmState(m + 1, target, AEG, end)
            work[m] += aeg
            active[g] = target

            explored[g] = att[n].sum() == 0
            att[n, m] += 1
            alloc[n, :] = 0
            if att[n].sum() >= layout.required_attempts[n]:
                picked[n, m] = 1
                alloc[n, m] = 1
            if kind in _FULL_CYCLE:
                durs.append(PhaseDurations(end - c - rp, rp))
            else:
                durs.append(PhaseDurations(end - c, rp))
        kinds.append(kind)
        ends.append(end)

    deltas = []
    for g in (0, 1):
        other_gap = max(0.0, ends[1 - g] - clocks[g])
        deltas.append(time_cost(kinds[g], durs[g], other_gap))
    new_clocks = [clocks[g] + deltas[g] for g in (0, 1)]

    conflict = (
        active[0] is not None
        and active[1] is not None
        and _in_conflict(active[0], active[1], ws, cfg.conflict_rule)
    )
    rewards = []
    for g in (0, 1):
        r = time_reward(deltas[g], cfg.alpha)
        if explored[g]:
            r += cfg.r_explore
        if conflict:
            r += cfg.r_conflict
        rewards.append(r)

    k = state.step_index + 1
    nxt = SystemState(layout, tuple(arms), alloc, att, picked, tuple(new_clocks), k)
    reason = DoneReason.NOT_DONE
    if is_complete(nxt, cfg):
        reason = DoneReason.ALL_PICKED
        rewards = [cfg.r_complete, cfg.r_complete]
    elif k >= cfg.horizon(layout.n):
        reason = DoneReason.TIMEOUT
        rewards = [cfg.r_timeout, cfg.r_timeout]
        # The finished agent idles until the last arm stops.
        final = max(new_clocks + [a.busy_until for a in arms])
        deltas = [final - clocks[g] for g in (0, 1)]
        nxt = replace(nxt, agent_clock=(final, final))
    return StepResult(
        next_state=nxt,
        rewards=tuple(rewards),
        transition_kinds=tuple(kinds),
        time_deltas=tuple(deltas),
        done=reason is not DoneReason.NOT_DONE,
        done_reason=reason,
        conflict=conflict,
        arm_work=tuple(work),
    )


# ---------------------------------------------------------------------------
# Observation encoding and factorized masks


def observation_size(n_max: int) -> int:
    return n_max * 3 + n_max * 4 + 4 * 4 + 2


def mask_size(n_max: int) -> int:
    return 2 * (n_max + 1) + 2 * 3


def encode_observation(state: SystemState, cfg: EnvConfig, ws: Optional[WorkspaceConfig] = None):
    """Flat observation vector and the marginal action mask.

    Mask layout: [target-U (n_max+1) | bits-U (3) | target-D (n_max+1) | bits-D (3)].
    A target slot is set if it is legal under at least one bit pair.
    """
    ws = ws or WorkspaceConfig()
    obs = observation_vector(state, cfg, ws)
    masks = action_masks(state, cfg, ws)
    parts = []
    for bits_mask, target_masks in masks:
        parts += [target_masks.any(axis=0), bits_mask]
    return obs, np.concatenate(parts)


def observation_vector(state: SystemState, cfg: EnvConfig, ws: WorkspaceConfig) -> np.ndarray:
    n, n_max = state.layout.n, cfg.n_max
    if n > n_max:
        raise TooManyFruits(f"{n} fruits exceed n_max={n_max}")
    lo, hi = ws.extents
    span = hi - lo
    fruit_pos = np.zeros((n_max, 3))
    flags = np.zeros((n_max, 4))
    if n:
        fruit_pos[:n] = (state.layout.positions - lo) / span
        picked = state.picked.any(axis=1)
        total = state.attempts.sum(axis=1)
        flags[:n, 0] = state.allocation.any(axis=1)
        flags[:n, 1] = total / 3.0
        flags[:n, 2] = picked
        flags[:n, 3] = ~picked & (total >= cfg.max_attempts)
    arm_feat = np.zeros((4, 4))
    for m, a in enumerate(state.arms):
        arm_feat[m, :3] = (np.asarray(a.position) - lo) / span
        arm_feat[m, 3] = float(a.phase)
    clocks = np.asarray(state.agent_clock) / cfg.t_norm
    return np.concatenate([fruit_pos.ravel(), flags.ravel(), arm_feat.ravel(), clocks])


def decode_fruit_positions(obs: np.ndarray, n: int, ws: WorkspaceConfig) -> np.ndarray:
    lo, hi = ws.extents
    return obs[: n * 3].reshape(n, 3) * (hi - lo) + lo


def action_masks(state: SystemState, cfg: EnvConfig, ws: WorkspaceConfig, exclude=None) -> tuple:
    """Per group: (bits mask of shape (3,), target masks of shape (3, n_max+1)).

    ``target_masks[b]`` is the legal target set given bit pair ``b``.
    ``exclude`` maps a group index to a 0-based fruit that group may not take
    (the fruit the other group already chose this step).
    """
    n_max = cfg.n_max
    sets = legal_target_sets(state, cfg, ws)
    exclude = exclude or {}
    out = []
    for g in (0, 1):
        tm = np.zeros((3, n_max + 1), dtype=bool)
        left, right = sets[g]
        tm[0, left + 1] = True
        tm[1, right + 1] = True
        tm[PAUSE_BITS, 0] = True
        if exclude.get(g) is not None:
            tm[:2, exclude[g] + 1] = False
        out.append((tm.any(axis=1), tm))
    return tuple(out)


def action_from_heads(target_idx: int, bits_idx: int) -> GroupAction:
    bl, br = BIT_PAIRS[bits_idx]
    return GroupAction(int(target_idx), bl, br)


def heads_from_action(action: GroupAction) -> tuple:
    return action.target, BIT_PAIRS.index(action.bits)


# ---------------------------------------------------------------------------
# Rollout helpers


def trajectory_record(state: SystemState, actions, result: StepResult) -> dict:
    nxt = result.next_state
    return {
        "k": nxt.step_index,
        "actions": [a.to_list() for a in actions],
        "transition_kinds": [k.name for k in result.transition_kinds],
        "time_deltas": list(result.time_deltas),
        "rewards": list(result.rewards),
        "clocks": list(nxt.agent_clock),
        "picked_count": int(nxt.picked.any(axis=1).sum()),
    }


class HarvestEnv:
    """Stateful reset/step wrapper around :func:`step`.

    ``layout_source`` is either a fixed layout or a callable taking a numpy
    Generator and returning a fresh layout on every reset.
    """

    def __init__(self, layout_source, cfg: EnvConfig = EnvConfig(), ws: WorkspaceConfig = WorkspaceConfig(), seed=None):
        self.layout_source = layout_source
        self.cfg = cfg
        self.ws = ws
        self.rng = np.random.default_rng(seed)
        self.state: Optional[SystemState] = None

    def reset(self) -> SystemState:
        src = self.layout_source
        layout = src(self.rng) if callable(src) else src
        self.state = initial_state(layout, self.ws)
        return self.state

    @property
    def done(self) -> bool:
        return self.state is None or is_complete(self.state, self.cfg)

    def legal(self):
        return legal_actions(self.state, self.cfg, self.ws)

    def step(self, actions) -> StepResult:
        res = step(self.state, actions, self.cfg, self.ws)
        self.state = res.next_state
        return res


@dataclass
class Episode:
    metrics: EpisodeMetrics
    records: list = field(default_factory=list)
    final_state: Optional[SystemState] = None


def run_episode(
    layout: FruitLayout,
    policy: Callable,
    cfg: EnvConfig = EnvConfig(),
    ws: WorkspaceConfig = WorkspaceConfig(),
    record: bool = False,
) -> Episode:
    """Play one episode with ``policy(state, legal) -> (action_U, action_D)``.

    Only the wall-clock time of the policy call counts toward planning latency.
    """
    state = initial_state(layout, ws)
    work = np.zeros(4)
    conflicts = 0
    latencies = []
    records = []
    reason = DoneReason.ALL_PICKED if is_complete(state, cfg) else DoneReason.NOT_DONE
    while reason is DoneReason.NOT_DONE:
        legal = legal_actions(state, cfg, ws)
        t0 = time.perf_counter()
        actions = policy(state, legal)
        latencies.append(time.perf_counter() - t0)
        res = step(state, actions, cfg, ws)
        work += res.arm_work
        conflicts += res.conflict
        if record:
            records.append(trajectory_record(state, actions, res))
        state = res.next_state
        reason = res.done_reason
    makespan = max(state.agent_clock)
    picked, remaining, abandoned = state.counts(cfg.max_attempts)
    metrics = EpisodeMetrics(
        makespan=makespan,
        idle_per_arm=tuple(float(makespan - w) for w in work),
        conflicts=int(conflicts),
        remaining=remaining,
        abandoned=abandoned,
        picked_total=picked,
        planning_latency_mean=float(np.mean(latencies)) if latencies else 0.0,
        steps=state.step_index,
        done_reason=reason.value,
    )
    return Episode(metrics, records, state)


def action_time(state: SystemState, group: int, action: GroupAction, ws: WorkspaceConfig) -> float:
    """Own time a non-pause action costs its group, before any realignment.

    Matches the ``time_deltas`` entry :func:`step` reports for that group.
    """
    e = action.entering
    if e is None:
        raise ValueError("pause actions have no own duration")
    idx = GROUPS[group]
    c = state.agent_clock[group]
    m = idx[e]
    arm = state.arms[m]
    target = tuple(float(v) for v in state.layout.positions[action.fruit])
    if arm.phase == AEG:
        rp = phase_duration(arm, arm.position, ws, RP)
        start = c + rp
        pos = ws.drop_points[m]
    else:
        start = max(c, arm.busy_until)
        pos = arm.position
    return start - c + travel_time(pos, target, ws) + ws.t_grasp
