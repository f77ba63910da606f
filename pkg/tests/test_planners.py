from collections import Counter

import numpy as np
import pytest

from harvestplan.env import EnvConfig, initial_state, legal_actions, run_episode
from harvestplan.layouts import PRESETS, LayoutSpec, generate
from harvestplan.planners import (
    GreedyPlanner,
    RandomPlanner,
    StaticListPlanner,
    greedy_planner,
    random_planner,
    static_list_planner,
)
from harvestplan.env import observation_size
from harvestplan.ppo import PolicyNet, PPOPlanner
from harvestplan.types import GroupAction
from harvestplan.workspace import reaching_arms

from conftest import make_layout


def test_random_single_option_is_forced(ws, cfg):
    lay = make_layout([[0.2, 0.3, 1.8]])
    s = initial_state(lay, ws)
    legal = ([GroupAction(1, 0, 1)], [GroupAction.pause()])
    assert random_planner(s, legal, 3) == (GroupAction(1, 0, 1), GroupAction.pause())


def test_random_is_seeded(ws, cfg):
    lay = generate(LayoutSpec(10, seed=0), ws)
    s = initial_state(lay, ws)
    legal = legal_actions(s, cfg, ws)
    assert random_planner(s, legal, 11) == random_planner(s, legal, 11)


def test_random_uniform_over_three_actions(ws, cfg):
    lay = make_layout([[0.2, 0.3, 1.8], [0.3, 0.6, 1.9]])  # both E1
    s = initial_state(lay, ws)
    legal = legal_actions(s, cfg, ws)
    assert len(legal[0]) == 3
    rng = np.random.default_rng(2024)
    n = 10_000
    counts = Counter(random_planner(s, legal, rng)[0] for _ in range(n))
    sigma = np.sqrt(n * (1 / 3) * (2 / 3))
    for a in legal[0]:
        assert abs(counts[a] - n / 3) <= 3 * sigma


def test_greedy_prefers_nearer(ws, cfg):
    x0, y0, z0 = ws.drop_points[0]
    lay = make_layout([[x0, y0 + 0.8, z0 + 0.4], [x0, y0 + 0.2, z0 + 0.4]])
    s = initial_state(lay, ws)
    a_u, _ = greedy_planner(s, legal_actions(s, cfg, ws), ws)
    assert a_u.target == 2


def test_greedy_tie_breaks_on_index(ws, cfg):
    far = [[0.1, 0.7, 2.0], [1.6, 0.7, 2.0], [1.6, 0.7, 0.1], [0.1, 0.7, 0.1], [1.0, 0.7, 1.6]]
    pts = far[:2] + [[0.4, 0.1, 1.0]] + far[2:] + [[0.6, 0.1, 1.0]]
    lay = make_layout(pts)
    s = initial_state(lay, ws)
    a_u, a_d = greedy_planner(s, legal_actions(s, cfg, ws), ws)
    assert a_u.target == 3
    assert a_d.target != 3


def test_greedy_pauses_without_targets(ws, cfg):
    lay = make_layout([[0.2, 0.3, 1.8]])
    s = initial_state(lay, ws)
    assert greedy_planner(s, legal_actions(s, cfg, ws), ws)[1] == GroupAction.pause()


def test_static_exclusive_zone(ws):
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(0.05, 0.65, 6), rng.uniform(0, 0.8, 6), rng.uniform(1.25, 2.05, 6)])
    lay = make_layout(pts)
    assert all(sorted(reaching_arms(p, ws)) == [1] for p in pts)
    plans = static_list_planner(lay, ws)
    assert sorted(plans[0]) == list(range(6)) and plans[1:] == [[], [], []]


def test_static_common_zone_split(ws):
    pts = [[0.8, 0.1, 1.5], [0.85, 0.3, 1.6], [0.9, 0.5, 1.7], [0.95, 0.7, 1.8]]  # x in the 1/2 overlap
    lay = make_layout(pts)
    plans = static_list_planner(lay, ws)
    assert sorted(plans[0]) == [0, 2] and sorted(plans[1]) == [1, 3]


def test_static_nearest_neighbour_order(ws):
    pts = [[0.3, 0.7, 2.0], [0.3, 0.1, 1.3], [0.3, 0.4, 1.6]]
    plans = static_list_planner(make_layout(pts), ws)
    assert plans[0] == [1, 2, 0]


def test_static_leaves_failures_unpicked(ws, cfg):
    lay = generate(PRESETS["30-A"], ws)
    p = StaticListPlanner(ws)
    for rep in range(5):
        p.reset(lay, seed=rep)
        ep = run_episode(lay, p, cfg, ws)
        assert ep.metrics.remaining == 9
        assert ep.final_state.attempts_total().max() == 1


def test_replanning_leaves_at_most_one(ws, cfg):
    lay = generate(PRESETS["30-A"], ws)
    rem = [run_episode(lay, GreedyPlanner(ws), cfg, ws).metrics.remaining for _ in range(5)]
    assert np.mean(rem) <= 1


def _checked(planner, seen):
    def call(state, legal):
        joint = planner(state, legal)
        assert joint[0] in legal[0] and joint[1] in legal[1]
        assert joint[0].target == 0 or joint[0].target != joint[1].target
        seen.append(1)
        return joint

    return call


@pytest.mark.parametrize("kind", ["random", "greedy", "static", "ppo"])
def test_planners_only_emit_legal_actions(ws, kind):
    cfg = EnvConfig(n_max=12)
    seen = []
    for seed in range(6):
        lay = generate(LayoutSpec(12, n_double=3, n_triple=1, seed=seed), ws)
        planner = {
            "random": lambda: RandomPlanner(seed),
            "greedy": lambda: GreedyPlanner(ws),
            "static": lambda: StaticListPlanner(ws),
            "ppo": lambda: PPOPlanner(PolicyNet(observation_size(12), 12, (32, 32), seed=seed), cfg, ws, deterministic=False, seed=seed),
        }[kind]()
        planner.reset(lay, seed=seed)
        run_episode(lay, _checked(planner, seen), cfg, ws)
    assert seen


def test_greedy_beats_random_mean(ws, cfg):
    for seed in range(5):
        lay = generate(LayoutSpec(10, seed=500 + seed), ws)
        greedy = run_episode(lay, GreedyPlanner(ws), cfg, ws).metrics.makespan
        rnd = np.mean([run_episode(lay, RandomPlanner(s), cfg, ws).metrics.makespan for s in range(20)])
        assert greedy <= rnd
