"""Seeded fruit-layout generators.

All randomness comes from numpy's PCG64 bit generator seeded through a
``SeedSequence``; PCG64 streams are fixed by numpy across platforms, so a
(spec, seed) pair always yields the same layout.
"""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import GenerationFailed
from .types import EPSILON_POS, FruitLayout
from .workspace import WorkspaceConfig

MAX_ROUNDS = 10_000
CLUSTER_STD = 0.15


class Distribution(str, enum.Enum):
    UNIFORM = "Uniform"
    CLUSTERED = "Clustered"


@dataclass(frozen=True)
class LayoutSpec:
    n_fruits: int
    distribution: Distribution = Distribution.UNIFORM
    cluster_count: int = 3
    n_double: int = 0
    n_triple: int = 0
    seed: int = 0
    n_max: int = 60
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "distribution", Distribution(self.distribution))
        if self.n_fruits < 1:
            raise ValueError("n_fruits must be >= 1")
        if self.n_fruits > self.n_max:
            raise ValueError(f"n_fruits={self.n_fruits} exceeds n_max={self.n_max}")
        if self.n_double < 0 or self.n_triple < 0 or self.n_double + self.n_triple > self.n_fruits:
            raise ValueError("failure profile does not fit n_fruits")
        if self.distribution is Distribution.CLUSTERED and self.cluster_count < 1:
            raise ValueError("cluster_count must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["distribution"] = self.distribution.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayoutSpec":
        d = dict(d)
        if "failure_profile" in d:
            prof = d.pop("failure_profile")
            d["n_double"], d["n_triple"] = prof.get("n_double", 0), prof.get("n_triple", 0)
        return cls(**d)

    @classmethod
    def load(cls, path) -> "LayoutSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


# Experimental groups: A is uniform, B clustered around three centers.
PRESETS = {
    "30-A": LayoutSpec(30, Distribution.UNIFORM, n_double=7, n_triple=2, seed=1, id="30-A"),
    "30-B": LayoutSpec(30, Distribution.CLUSTERED, 3, n_double=8, n_triple=4, seed=2, id="30-B"),
    "60-A": LayoutSpec(60, Distribution.UNIFORM, n_double=10, n_triple=5, seed=3, id="60-A"),
    "60-B": LayoutSpec(60, Distribution.CLUSTERED, 3, n_double=12, n_triple=3, seed=4, id="60-B"),
}


def _in_union(p, boxes) -> bool:
    return any(all(lo[j] <= p[j] <= hi[j] for j in range(3)) for lo, hi in boxes)


def generate(spec: LayoutSpec, ws: WorkspaceConfig = WorkspaceConfig()) -> FruitLayout:
    """Sample a layout; positions are rounded to the 1 um grid used by layout files."""
    pos_rng, att_rng = (np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(spec.seed).spawn(2))
    lo, hi = ws.extents
    boxes = ws.arm_boxes

    def draw_uniform():
        return pos_rng.uniform(lo, hi)

    centers = []
    if spec.distribution is Distribution.CLUSTERED:
        for _ in range(spec.cluster_count):
            for _ in range(MAX_ROUNDS):
                c = draw_uniform()
                if _in_union(c, boxes):
                    centers.append(c)
                    break
            else:
                raise GenerationFailed("could not place a cluster center")

    points: list = []
    rejections = 0
    while len(points) < spec.n_fruits:
        if centers:
            c = centers[pos_rng.integers(len(centers))]
            p = pos_rng.normal(c, CLUSTER_STD)
        else:
            p = draw_uniform()
        p = np.round(p, 6)
        if not _in_union(p, boxes) or (
            points and np.min(np.linalg.norm(np.asarray(points) - p, axis=1)) < EPSILON_POS
        ):
            rejections += 1
            if rejections >= MAX_ROUNDS:
                raise GenerationFailed(f"placed {len(points)} of {spec.n_fruits} fruits after {MAX_ROUNDS} rejections")
            continue
        points.append(p)

    required = np.ones(spec.n_fruits, dtype=int)
    chosen = att_rng.permutation(spec.n_fruits)[: spec.n_double + spec.n_triple]
    required[chosen[: spec.n_double]] = 2
    required[chosen[spec.n_double :]] = 3
    return FruitLayout(np.asarray(points), tuple(int(r) for r in required), spec.id or f"{spec.distribution.value}-{spec.n_fruits}-s{spec.seed}")


def random_layout_source(n_range=(1, 10), distribution=Distribution.UNIFORM, ws: WorkspaceConfig = WorkspaceConfig()):
    """Factory of layouts with a random fruit count, for curriculum training."""

    def source(rng: np.random.Generator) -> FruitLayout:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        seed = int(rng.integers(2**63))
        return generate(LayoutSpec(n, distribution, seed=seed), ws)

    return source
