"""Exact optimum on tiny layouts, and how far the greedy baseline is from it."""
import numpy as np

from harvestplan import EnvConfig, GreedyPlanner, LayoutSpec, WorkspaceConfig, generate, optimal_makespan, run_episode
from harvestplan.oracle import replay

ws = WorkspaceConfig()
cfg = EnvConfig()

gaps = []
for seed in range(10):
    lay = generate(LayoutSpec(4, seed=seed), ws)
    best, seq = optimal_makespan(lay, ws, cfg)
    # The witness replays through the same simulator to the same number.
    assert max(replay(lay, seq, ws, cfg).next_state.agent_clock) == best
    greedy = run_episode(lay, GreedyPlanner(ws), cfg, ws).metrics.makespan
    gaps.append(greedy / best - 1)
    print(f"seed {seed}: optimum {best:5.2f} s in {len(seq)} joint steps, greedy {greedy:5.2f} s")

print(f"greedy is {100 * np.mean(gaps):.1f}% above optimal on average")

# The witness is a list of joint actions, group U first.
print([[a.to_list() for a in joint] for joint in seq])
