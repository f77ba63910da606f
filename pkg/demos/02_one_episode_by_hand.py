"""Step the two-group game by hand and watch phases, clocks and rewards."""
import numpy as np

from harvestplan import EnvConfig, FruitLayout, GroupAction, WorkspaceConfig, legal_actions, step
from harvestplan.env import initial_state

ws = WorkspaceConfig()
cfg = EnvConfig()

# One fruit only arm 1 can reach, one only arm 4 can reach.
lay = FruitLayout(np.array([[0.2, 0.4, 1.8], [0.2, 0.4, 0.3]]), (1, 2), "demo")
s = initial_state(lay, ws)
print("phases", [a.phase.name for a in s.arms], "clocks", s.agent_clock)

# Each group action is {target, b_left, b_right}; the bits are the arms'
# next phases (0 = out grasping, 1 = retracting/placing).  {0,1,1} pauses.
u, d = legal_actions(s, cfg, ws)
print("group U may do", [a.to_list() for a in u])
print("group D may do", [a.to_list() for a in d])


def show(res):
    print(
        [k.name for k in res.transition_kinds],
        "dt", np.round(res.time_deltas, 2),
        "rewards", np.round(res.rewards, 3),
        "clocks", np.round(res.next_state.agent_clock, 2),
        res.done_reason.value,
    )


# Both groups send an arm out at once: two restarts running in parallel.
res = step(s, (GroupAction(1, 0, 1), GroupAction(2, 1, 0)), cfg, ws)
show(res)

# Fruit 2 needs two grasps: the first one failed, so it is free again.
s = res.next_state
print("picked", s.picked_mask(), "attempts", s.attempts_total())

# Arm 4 tries again right away (non-alternation: retract, then go back out).
res = step(s, (GroupAction.pause(), GroupAction(2, 1, 0)), cfg, ws)
show(res)

# Everyone retracts; the episode ends once every arm is back.
res = step(res.next_state, (GroupAction.pause(), GroupAction.pause()), cfg, ws)
show(res)
