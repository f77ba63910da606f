"""Robot geometry: per-arm reachable boxes, zones, travel times and separation.

Coordinates are (x, y, z): x is the horizontal joint-2 axis, y the
longitudinal joint-3 axis (reach into the canopy) and z the vertical joint-1
axis.  Arms 1 and 2 (group-U) sit above arms 4 and 3 (group-D); arm 1 is
above arm 4, arm 2 above arm 3.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidArm, Unreachable
from .types import ArmState, Phase

# Zone label for each set of arms whose boxes contain a point.
_ZONE_LABELS = {
    frozenset({1}): "E1",
    frozenset({2}): "E2",
    frozenset({3}): "E3",
    frozenset({4}): "E4",
    frozenset({1, 2}): "OU",
    frozenset({3, 4}): "OD",
    frozenset({1, 4}): "OL",
    frozenset({2, 3}): "OR",
    frozenset({1, 2, 3, 4}): "OC",
}


def _default_boxes():
    # 1.0 m wide (x), 0.8 m deep (y), 1.2 m tall (z); 0.3 m overlaps in x and z.
    left, right = (0.0, 1.0), (0.7, 1.7)
    upper, lower = (0.9, 2.1), (0.0, 1.2)
    depth = (0.0, 0.8)

    def box(xr, zr):
        return ((xr[0], depth[0], zr[0]), (xr[1], depth[1], zr[1]))

    return (box(left, upper), box(right, upper), box(right, lower), box(left, lower))


def _default_drops():
    # Conveyors run between the two groups, at the retracted (y = 0) edge.
    return ((0.5, 0.0, 0.9), (1.2, 0.0, 0.9), (1.2, 0.0, 1.2), (0.5, 0.0, 1.2))


@dataclass(frozen=True)
class WorkspaceConfig:
    arm_boxes: tuple = field(default_factory=_default_boxes)
    drop_points: tuple = field(default_factory=_default_drops)
    axis_speeds: tuple = (0.5, 0.5, 0.5)
    t_grasp: float = 1.5
    t_place: float = 1.0
    d_min: float = 0.3

    def __post_init__(self):
        boxes = tuple(
            (tuple(float(c) for c in lo), tuple(float(c) for c in hi)) for lo, hi in self.arm_boxes
        )
        drops = tuple(tuple(float(c) for c in p) for p in self.drop_points)
        speeds = tuple(float(s) for s in self.axis_speeds)
        if len(boxes) != 4 or len(drops) != 4 or len(speeds) != 3:
            raise ValueError("need 4 arm boxes, 4 drop points and 3 axis speeds")
        if any(s <= 0 for s in speeds):
            raise ValueError("axis speeds must be positive")
        if min(self.t_grasp, self.t_place, self.d_min) <= 0:
            raise ValueError("t_grasp, t_place and d_min must be positive")
        for lo, hi in boxes:
            if any(a > b for a, b in zip(lo, hi)):
                raise ValueError(f"box min {lo} exceeds max {hi}")
        object.__setattr__(self, "arm_boxes", boxes)
        object.__setattr__(self, "drop_points", drops)
        object.__setattr__(self, "axis_speeds", speeds)
        for m, p in enumerate(drops):
            if not self.contains(m + 1, p):
                raise ValueError(f"drop point of arm {m + 1} outside its box")

    def contains(self, arm_id: int, point) -> bool:
        lo, hi = self.arm_boxes[arm_id - 1]
        return all(lo[j] <= point[j] <= hi[j] for j in range(3))

    @property
    def extents(self) -> tuple:
        """Bounding box (min, max) of the union of all arm boxes."""
        lo = np.min([b[0] for b in self.arm_boxes], axis=0)
        hi = np.max([b[1] for b in self.arm_boxes], axis=0)
        return lo, hi

    def to_dict(self) -> dict:
        return {
            "arm_boxes": [[list(lo), list(hi)] for lo, hi in self.arm_boxes],
            "drop_points": [list(p) for p in self.drop_points],
            "axis_speeds": list(self.axis_speeds),
            "t_grasp": self.t_grasp,
            "t_place": self.t_place,
            "d_min": self.d_min,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorkspaceConfig":
        kw = {k: d[k] for k in ("arm_boxes", "drop_points", "axis_speeds", "t_grasp", "t_place", "d_min") if k in d}
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "WorkspaceConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def _check_arm(arm_id) -> None:
    if not isinstance(arm_id, (int, np.integer)) or not 1 <= arm_id <= 4:
        raise InvalidArm(f"arm id must be 1..4, got {arm_id!r}")


def reachable(arm_id: int, point, cfg: WorkspaceConfig) -> bool:
    _check_arm(arm_id)
    return cfg.contains(int(arm_id), point)


def reaching_arms(point, cfg: WorkspaceConfig) -> frozenset:
    return frozenset(m for m in (1, 2, 3, 4) if cfg.contains(m, point))


def zone_of(point, cfg: WorkspaceConfig) -> Optional[str]:
    """Zone label of a point, or None if no arm reaches it."""
    arms = reaching_arms(point, cfg)
    if not arms:
        return None
    return _ZONE_LABELS.get(arms, "O" + "".join(str(a) for a in sorted(arms)))


def zone_regions(cfg: WorkspaceConfig) -> dict:
    """Partition the union of arm boxes into labeled boxes.

    The cells come from the grid spanned by every box boundary, so zones are
    derived from the boxes and cannot disagree with them.
    """
    cuts = [sorted({b[s][j] for b in cfg.arm_boxes for s in (0, 1)}) for j in range(3)]
    regions: dict = {}
    for x0, x1 in zip(cuts[0], cuts[0][1:]):
        for y0, y1 in zip(cuts[1], cuts[1][1:]):
            for z0, z1 in zip(cuts[2], cuts[2][1:]):
                center = ((x0 + x1) / 2, (y0 + y1) / 2, (z0 + z1) / 2)
                label = zone_of(center, cfg)
                if label is not None:
                    regions.setdefault(label, []).append(((x0, y0, z0), (x1, y1, z1)))
    return regions


def travel_time(src, dst, cfg: WorkspaceConfig) -> float:
    """Simultaneous three-axis move: the slowest axis sets the duration."""
    return max(abs(dst[j] - src[j]) / cfg.axis_speeds[j] for j in range(3))


def phase_duration(arm: ArmState, target, cfg: WorkspaceConfig, phase: Phase = Phase.AEG) -> float:
    """Duration of one phase for ``arm``.

    AEG: travel from the arm's position to ``target`` plus the grasp time.
    RP: travel from ``target`` (where the arm holds the fruit) to the arm's
    drop point plus the placing time.
    """
    if phase == Phase.AEG:
        if not cfg.contains(arm.arm_id, target):
            raise Unreachable(f"arm {arm.arm_id} cannot reach {tuple(target)}")
        return travel_time(arm.position, target, cfg) + cfg.t_grasp
    return travel_time(target, cfg.drop_points[arm.arm_id - 1], cfg) + cfg.t_place


def separation_ok(a, b, cfg: WorkspaceConfig) -> bool:
    return math.dist(a, b) >= cfg.d_min
