import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from harvestplan.errors import InvalidArm, Unreachable
from harvestplan.layouts import LayoutSpec, generate
from harvestplan.types import ArmState
from harvestplan.workspace import (
    WorkspaceConfig,
    phase_duration,
    reachable,
    separation_ok,
    travel_time,
    zone_of,
    zone_regions,
)

coord = st.floats(-3, 3, allow_nan=False)
point = st.tuples(coord, coord, coord)


def center(box):
    lo, hi = box
    return tuple((a + b) / 2 for a, b in zip(lo, hi))


def test_zone_partition_has_nine_regions(ws):
    regions = zone_regions(ws)
    assert set(regions) == {"E1", "E2", "E3", "E4", "OU", "OD", "OL", "OR", "OC"}


def test_exclusive_zones_belong_to_one_arm(ws):
    regions = zone_regions(ws)
    for label, boxes in regions.items():
        for box in boxes:
            c = center(box)
            arms = [m for m in (1, 2, 3, 4) if reachable(m, c, ws)]
            if label.startswith("E"):
                assert arms == [int(label[1])]
            else:
                assert len(arms) >= 2


def test_box_overlaps_follow_groups(ws):
    def overlap(a, b):
        (la, ha), (lb, hb) = ws.arm_boxes[a - 1], ws.arm_boxes[b - 1]
        return all(max(la[j], lb[j]) <= min(ha[j], hb[j]) for j in range(3))

    assert overlap(1, 2) and overlap(3, 4) and overlap(1, 4) and overlap(2, 3)


def test_reachable_examples(ws):
    e1 = center(zone_regions(ws)["E1"][0])
    assert reachable(1, e1, ws)
    assert not reachable(3, e1, ws)
    # x = 1.0 is the right edge of box 1 and inside box 2: closed on both sides.
    boundary = (ws.arm_boxes[0][1][0], 0.4, 1.5)
    assert reachable(1, boundary, ws) and reachable(2, boundary, ws)
    assert zone_of(boundary, ws) == "OU"
    with pytest.raises(InvalidArm):
        reachable(5, e1, ws)
    with pytest.raises(InvalidArm):
        reachable(0, e1, ws)


def test_travel_time_examples():
    ws = WorkspaceConfig()
    assert travel_time((0, 0, 0), (0, 0, 0), ws) == 0.0
    assert travel_time((0, 0, 0), (0.5, 0.25, 0.1), ws) == pytest.approx(1.0, abs=1e-12)
    slow = WorkspaceConfig(axis_speeds=(0.5, 0.3, 0.4))
    assert travel_time((0, 0, 0), (0, 0.3, 0), slow) == pytest.approx(1.0, abs=1e-12)


@given(point, point, point)
def test_travel_time_is_a_metric(a, b, c):
    ws = WorkspaceConfig()
    ab, ba = travel_time(a, b, ws), travel_time(b, a, ws)
    assert ab == ba
    assert (ab == 0) == (a == b)
    assert travel_time(a, c, ws) <= ab + travel_time(b, c, ws) + 1e-9


def test_phase_duration_examples(ws):
    drop = ws.drop_points[0]
    arm = ArmState(1, drop)
    assert phase_duration(arm, drop, ws) == ws.t_grasp
    free = WorkspaceConfig(
        arm_boxes=(((-1, -1, -1), (1, 1, 1)),) * 4,
        drop_points=((0, 0, 0),) * 4,
        axis_speeds=(0.5, 0.5, 0.5),
        t_grasp=1.5,
    )
    assert phase_duration(ArmState(1, (0, 0, 0)), (0.5, 0, 0), free) == pytest.approx(2.5)
    # RP goes from the fruit back to the drop point.
    assert phase_duration(ArmState(1, (0.5, 0, 0)), (0.5, 0, 0), free, phase=1) == pytest.approx(1.0 + free.t_place)
    with pytest.raises(Unreachable):
        phase_duration(ArmState(3, ws.drop_points[2]), center(zone_regions(ws)["E1"][0]), ws)


@given(st.floats(0.0, 0.45), st.floats(0.0, 0.45))
def test_phase_duration_monotone_along_axis(d1, d2):
    ws = WorkspaceConfig()
    arm = ArmState(1, ws.drop_points[0])
    x0, y0, z0 = ws.drop_points[0]
    near, far = sorted((d1, d2))
    t_near = phase_duration(arm, (x0, y0 + near, z0 + 0.1), ws)
    t_far = phase_duration(arm, (x0, y0 + far, z0 + 0.1), ws)
    assert t_near <= t_far


def test_cycle_time_calibration(ws):
    """Mean AEG + RP over uniform layouts sits near the 5.8 s field average."""
    cycles = []
    for seed in range(20):
        lay = generate(LayoutSpec(30, seed=seed), ws)
        for p in lay.positions:
            arms = [m for m in (1, 2, 3, 4) if reachable(m, p, ws)]
            for m in arms:
                arm = ArmState(m, ws.drop_points[m - 1])
                aeg = phase_duration(arm, p, ws)
                rp = phase_duration(ArmState(m, p), p, ws, phase=1)
                cycles.append(aeg + rp)
    assert abs(np.mean(cycles) - 5.8) <= 1.5


def test_separation_boundary_inclusive():
    ws = WorkspaceConfig(d_min=0.3)
    assert not separation_ok((0, 0, 0), (0, 0, 0), ws)
    assert separation_ok((0, 0, 0), (1, 0, 0), ws)
    # 0.3 is not exact in binary; use a boundary distance that is: 3-4-5 triangle.
    ws2 = WorkspaceConfig(d_min=0.5)
    assert separation_ok((0, 0, 0), (0.3, 0.4, 0), ws2)
    ws3 = WorkspaceConfig(d_min=0.25)
    assert separation_ok((0, 0, 0), (0.25, 0, 0), ws3)
    assert not separation_ok((0, 0, 0), (0.2499999, 0, 0), ws3)


def test_config_json_round_trip(tmp_path, ws):
    p = tmp_path / "ws.json"
    ws.save(p)
    assert WorkspaceConfig.load(p) == ws


def test_config_validation():
    with pytest.raises(ValueError):
        WorkspaceConfig(axis_speeds=(0.5, 0.0, 0.5))
    with pytest.raises(ValueError):
        WorkspaceConfig(d_min=0)
