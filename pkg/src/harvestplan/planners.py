"""Baseline decision policies.

Every planner is a callable ``planner(state, legal) -> (action_U, action_D)``
with an optional ``reset(layout)`` hook called before each episode, so the
episode runner treats baselines and the learned policy alike.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .env import action_time
from .types import GROUPS, FruitLayout, GroupAction, Phase
from .workspace import WorkspaceConfig, reaching_arms, travel_time


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _without(actions, target):
    if not target:
        return list(actions)
    return [a for a in actions if a.target != target]


def random_planner(state, legal, seed=None) -> tuple:
    """Uniform choice per group; group-D never takes the fruit group-U just took."""
    rng = _rng(seed)
    a_u = legal[0][rng.integers(len(legal[0]))]
    d_opts = _without(legal[1], a_u.target)
    a_d = d_opts[rng.integers(len(d_opts))]
    return a_u, a_d


def greedy_planner(state, legal, ws: WorkspaceConfig) -> tuple:
    """Each group takes the legal action with the smallest own time cost.

    Ties go to the lowest fruit index, then the left arm.  A group pauses only
    when it has no legal target.
    """
    chosen = []
    taken = 0
    for g in (0, 1):
        best, best_key = GroupAction.pause(), None
        for a in _without(legal[g], taken):
            if a.entering is None:
                continue
            key = (action_time(state, g, a, ws), a.target, a.entering)
            if best_key is None or key < best_key:
                best, best_key = a, key
        chosen.append(best)
        taken = best.target
    return tuple(chosen)


def static_list_planner(layout: FruitLayout, ws: WorkspaceConfig) -> list:
    """Offline plan: one ordered fruit list (0-based indices) per arm.

    Fruits in an exclusive zone go to their arm.  Fruits reachable by several
    arms go, in index order, to the candidate with the fewest fruits so far
    (ties to the lower arm id).  Each list is then ordered by nearest-neighbour
    chaining from the arm's start position.
    """
    assigned: list = [[] for _ in range(4)]
    common = []
    for n, p in enumerate(layout.positions):
        arms = sorted(reaching_arms(p, ws))
        if len(arms) == 1:
            assigned[arms[0] - 1].append(n)
        elif arms:
            common.append((n, arms))
    for n, arms in common:
        arm = min(arms, key=lambda a: (len(assigned[a - 1]), a))
        assigned[arm - 1].append(n)

    plans = []
    for m, fruits in enumerate(assigned):
        pos = ws.drop_points[m]
        todo = sorted(fruits)
        order = []
        while todo:
            nxt = min(todo, key=lambda n: (travel_time(pos, layout.positions[n], ws), n))
            todo.remove(nxt)
            order.append(nxt)
            pos = layout.positions[nxt]
        plans.append(order)
    return plans


class RandomPlanner:
    def __init__(self, seed=None):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def reset(self, layout=None, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)

    def __call__(self, state, legal):
        return random_planner(state, legal, self.rng)


class GreedyPlanner:
    def __init__(self, ws: WorkspaceConfig = WorkspaceConfig()):
        self.ws = ws

    def reset(self, layout=None, seed=None):
        pass

    def __call__(self, state, legal):
        return greedy_planner(state, legal, self.ws)


class StaticListPlanner:
    """Executes the offline plan open-loop: every fruit is tried exactly once.

    Within a group the arms alternate while both have work; a planned fruit
    that is momentarily masked (too close to the other group's grasp) makes
    the group wait rather than re-plan.
    """

    def __init__(self, ws: WorkspaceConfig = WorkspaceConfig()):
        self.ws = ws
        self.queues = None

    def reset(self, layout: FruitLayout, seed=None):
        self.queues = [deque(p) for p in static_list_planner(layout, self.ws)]

    def __call__(self, state, legal):
        if self.queues is None:
            self.reset(state.layout)
        out = []
        for g, idx in enumerate(GROUPS):
            offsets = (0, 1)
            holding = [state.arms[m].phase == Phase.AEG for m in idx]
            if holding[0]:
                offsets = (1, 0)
            elif not holding[1] and len(self.queues[idx[1]]) > len(self.queues[idx[0]]):
                offsets = (1, 0)
            act = GroupAction.pause()
            for off in offsets:
                q = self.queues[idx[off]]
                if not q:
                    continue
                cand = GroupAction(q[0] + 1, off, 1 - off)
                if cand in legal[g]:
                    act = cand
                    q.popleft()
                break
            out.append(act)
        return tuple(out)
