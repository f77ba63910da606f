"""Exhaustive minimum-makespan search for tiny instances.

Depth-first branch and bound over every legal joint-action sequence, driven
by :func:`harvestplan.env.step` itself so the search and the simulator can
never disagree about dynamics.

Pruning is exact:

* a lower bound against the incumbent: both clocks end equal, each group
  must still do its share of the minimal remaining grasp work, and at least
  one group ends with a placement;
* Pareto dominance between visits of the same discrete configuration.  All
  time updates in the game are monotone (sums and maxima), so a visit whose
  clocks, arm-busy times and step count are all no better than an earlier
  visit cannot lead to a shorter makespan.

Visits are bucketed by the 0.1 s clock difference of the two groups before
the dominance comparison, which keeps the per-key Pareto lists short.
"""
from __future__ import annotations

import math
from itertools import product

from .env import (
    DoneReason,
    EnvConfig,
    initial_state,
    is_complete,
    legal_actions,
    reach_matrix,
    step,
)
from .errors import SearchBudgetExceeded
from .planners import greedy_planner
from .types import FruitLayout, Phase
from .workspace import WorkspaceConfig, travel_time

MAX_FRUITS = 6
DEFAULT_BUDGET = 10_000_000
BUCKET = 0.1
_EPS = 1e-12


def _min_grasp_work(layout: FruitLayout, ws: WorkspaceConfig) -> list:
    reach = reach_matrix(layout, ws)
    out = []
    for n, p in enumerate(layout.positions):
        t = min(travel_time(ws.drop_points[m], p, ws) for m in range(4) if reach[n, m])
        out.append(t + ws.t_grasp)
    return out


def _lower_bound(state, cfg, ws, grasp_work) -> float:
    cu, cd = state.agent_clock
    lb = max(cu, cd, max(a.busy_until for a in state.arms))
    req = state.layout.required_attempts
    picked = state.picked.any(axis=1)
    tried = state.attempts.sum(axis=1)
    remaining = 0.0
    for n in range(state.layout.n):
        if not picked[n] and tried[n] < cfg.max_attempts:
            need = min(req[n], cfg.max_attempts) - tried[n]
            remaining += need * grasp_work[n]
    if remaining > 0:
        lb = max(lb, (cu + cd + remaining + ws.t_place) / 2)
    for g, idx in enumerate(((0, 1), (2, 3))):
        for m in idx:
            a = state.arms[m]
            if a.phase == Phase.AEG:
                rp = travel_time(a.position, ws.drop_points[m], ws) + ws.t_place
                lb = max(lb, state.agent_clock[g] + rp)
    return lb


def _greedy_incumbent(layout, cfg, ws):
    state = initial_state(layout, ws)
    seq = []
    while True:
        joint = greedy_planner(state, legal_actions(state, cfg, ws), ws)
        res = step(state, joint, cfg, ws, check=False)
        seq.append(joint)
        state = res.next_state
        if res.done_reason is DoneReason.ALL_PICKED:
            return max(state.agent_clock), seq
        if res.done:
            return None


def _signature(state):
    arms = tuple((int(a.phase), a.position) for a in state.arms)
    cu, cd = state.agent_clock
    bucket = math.floor((cu - cd) / BUCKET)
    disc = (
        arms,
        state.allocation.tobytes(),
        state.attempts.tobytes(),
        state.picked.tobytes(),
        bucket,
    )
    times = (cu, cd) + tuple(a.busy_until for a in state.arms) + (state.step_index,)
    return disc, times


def optimal_makespan(
    layout: FruitLayout,
    ws: WorkspaceConfig = WorkspaceConfig(),
    cfg: EnvConfig = EnvConfig(),
    with_failures: bool = False,
    budget: int = DEFAULT_BUDGET,
):
    """Minimal makespan over all legal joint-action sequences and one witness.

    Returns ``(makespan, actions)`` where ``actions`` is a list of
    ``(action_U, action_D)`` pairs.  Raises :class:`SearchBudgetExceeded`
    after ``budget`` expanded nodes.
    """
    if layout.n == 0:
        return 0.0, []
    if layout.n > MAX_FRUITS:
        raise ValueError(f"oracle handles at most {MAX_FRUITS} fruits, got {layout.n}")
    if not with_failures and any(r != 1 for r in layout.required_attempts):
        raise ValueError("layout has grasp failures; pass with_failures=True")

    grasp_work = _min_grasp_work(layout, ws)
    best = [math.inf, None]
    seed_seq = _greedy_incumbent(layout, cfg, ws)
    if seed_seq is not None:
        best[0], best[1] = seed_seq

    memo: dict = {}
    nodes = [0]
    path: list = []

    def dominated(state) -> bool:
        disc, times = _signature(state)
        front = memo.setdefault(disc, [])
        for other in front:
            if all(o <= t + _EPS for o, t in zip(other, times)):
                return True
        front[:] = [o for o in front if not all(t <= o + _EPS for t, o in zip(times, o))]
        front.append(times)
        return False

    def dfs(state):
        nodes[0] += 1
        if nodes[0] > budget:
            raise SearchBudgetExceeded(f"more than {budget} nodes expanded")
        if _lower_bound(state, cfg, ws, grasp_work) >= best[0] - _EPS:
            return
        if dominated(state):
            return
        legal_u, legal_d = legal_actions(state, cfg, ws)
        children = []
        for a_u, a_d in product(legal_u, legal_d):
            if a_u.target and a_u.target == a_d.target:
                continue
            res = step(state, (a_u, a_d), cfg, ws, check=False)
            nxt = res.next_state
            if res.done_reason is DoneReason.TIMEOUT:
                continue
            if a_u.entering is None and a_d.entering is None and nxt.agent_clock == state.agent_clock and nxt.arms == state.arms:
                continue  # no-op double pause
            children.append((max(nxt.agent_clock), a_u.target, a_d.target, (a_u, a_d), res))
        children.sort(key=lambda c: c[:3])
        for _, _, _, joint, res in children:
            path.append(joint)
            if res.done_reason is DoneReason.ALL_PICKED:
                ms = max(res.next_state.agent_clock)
                if ms < best[0] - _EPS:
                    best[0], best[1] = ms, list(path)
            else:
                dfs(res.next_state)
            path.pop()

    start = initial_state(layout, ws)
    if is_complete(start, cfg):
        return 0.0, []
    dfs(start)
    if best[1] is None:
        raise RuntimeError("no complete action sequence within the step horizon")
    return best[0], best[1]


def replay(layout: FruitLayout, actions, ws: WorkspaceConfig = WorkspaceConfig(), cfg: EnvConfig = EnvConfig()):
    """Run a joint-action sequence through the checked simulator; return the final StepResult."""
    state = initial_state(layout, ws)
    res = None
    for joint in actions:
        res = step(state, joint, cfg, ws)
        state = res.next_state
    return res
