"""Value types for the four-arm harvesting game.

Every type here is immutable after construction.  Matrices inside
:class:`SystemState` are numpy arrays with the write flag cleared, so a state
can be shared freely; successor states are built by the environment.

Fruit indices are 0-based everywhere in memory.  The only 1-based numbers are
:attr:`GroupAction.target` (``0`` means "no new target", ``n`` means fruit
``n - 1``) and the indices written to files and logs.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import InvalidLayout, InvalidState

EPSILON_POS = 1e-3
MAX_ATTEMPTS = 3
N_ARMS = 4
GROUPS = ((0, 1), (2, 3))  # arm indices (0-based) of group-U and group-D


class Phase(enum.IntEnum):
    AEG = 0
    RP = 1


class Semantic(enum.Enum):
    PAUSE = "Pause"
    ALTERNATION = "Alternation"
    NON_ALTERNATION = "NonAlternation"
    RESTART = "Restart"


class TransitionKind(enum.Enum):
    T1 = 1
    T2 = 2
    T3 = 3
    T4 = 4
    T5 = 5
    T6 = 6
    T7 = 7
    T8 = 8
    T9 = 9

    @property
    def semantic(self) -> Semantic:
        return _SEMANTICS[self]

    @property
    def is_pause(self) -> bool:
        return _SEMANTICS[self] is Semantic.PAUSE


_SEMANTICS = {
    TransitionKind.T1: Semantic.PAUSE,
    TransitionKind.T2: Semantic.ALTERNATION,
    TransitionKind.T3: Semantic.NON_ALTERNATION,
    TransitionKind.T4: Semantic.ALTERNATION,
    TransitionKind.T5: Semantic.NON_ALTERNATION,
    TransitionKind.T6: Semantic.PAUSE,
    TransitionKind.T7: Semantic.PAUSE,
    TransitionKind.T8: Semantic.RESTART,
    TransitionKind.T9: Semantic.RESTART,
}


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FruitLayout:
    """Fruit positions (meters, robot base frame) and per-fruit required attempts.

    The in-memory type accepts an empty layout so that degenerate cases can be
    expressed; :meth:`from_dict` rejects it.
    """

    positions: np.ndarray
    required_attempts: tuple
    id: str = "layout"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        req = tuple(int(r) for r in self.required_attempts)
        if len(req) != len(pos):
            raise InvalidLayout(f"{len(pos)} positions but {len(req)} attempt counts")
        if not np.all(np.isfinite(pos)):
            raise InvalidLayout("non-finite fruit coordinate")
        bad = [r for r in req if r not in (1, 2, 3)]
        if bad:
            raise InvalidLayout(f"required_attempts must be in {{1,2,3}}, got {bad[0]}")
        if len(pos) > 1:
            d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
            d[np.diag_indices(len(pos))] = np.inf
            if d.min() < EPSILON_POS:
                i, j = np.unravel_index(np.argmin(d), d.shape)
                raise InvalidLayout(f"fruits {i} and {j} closer than {EPSILON_POS} m")
        object.__setattr__(self, "positions", _frozen(pos, float))
        object.__setattr__(self, "required_attempts", req)

    @property
    def n(self) -> int:
        return len(self.required_attempts)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, FruitLayout):
            return NotImplemented
        return (
            self.id == other.id
            and self.required_attempts == other.required_attempts
            and np.array_equal(self.positions, other.positions)
        )

    def __hash__(self):
        return hash((self.id, self.required_attempts, self.positions.tobytes()))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "positions": [[round(float(c), 6) for c in p] for p in self.positions],
            "required_attempts": list(self.required_attempts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FruitLayout":
        if not d.get("positions"):
            raise InvalidLayout("layout file must contain at least one fruit")
        return cls(
            positions=np.asarray(d["positions"], dtype=float),
            required_attempts=tuple(d["required_attempts"]),
            id=str(d.get("id", "layout")),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "FruitLayout":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ArmState:
    arm_id: int
    position: tuple
    phase: Phase = Phase.RP
    busy_until: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "phase", Phase(self.phase))
        object.__setattr__(self, "busy_until", float(self.busy_until))


@dataclass(frozen=True)
class GroupAction:
    """One group's decision: a 1-based fruit number (0 = none) and the two arm bits.

    Bit value 0 sends the arm into AEG, 1 keeps it in (or sends it to) RP.
    """

    target: int
    b_left: int
    b_right: int

    def __post_init__(self):
        if self.b_left not in (0, 1) or self.b_right not in (0, 1):
            raise ValueError("arm bits must be 0 or 1")
        if (self.b_left, self.b_right) == (0, 0):
            raise ValueError("bits (0, 0) would put both arms of a group in AEG")
        if self.target < 0:
            raise ValueError("target must be >= 0")
        if self.target > 0 and (self.b_left, self.b_right) == (1, 1):
            raise ValueError("a pausing group cannot claim a target")

    @property
    def bits(self) -> tuple:
        return (self.b_left, self.b_right)

    @property
    def fruit(self) -> Optional[int]:
        return self.target - 1 if self.target > 0 else None

    @property
    def entering(self) -> Optional[int]:
        """Offset (0 = left, 1 = right) of the arm that enters AEG, if any."""
        if self.b_left == 0:
            return 0
        if self.b_right == 0:
            return 1
        return None

    @classmethod
    def pause(cls) -> "GroupAction":
        return cls(0, 1, 1)

    def to_list(self) -> list:
        return [self.target, self.b_left, self.b_right]


class Violation(NamedTuple):
    code: str
    fruit: Optional[int] = None
    arm: Optional[int] = None
    detail: str = ""


@dataclass(frozen=True, eq=False)
class SystemState:
    """Full game state: layout, arms, allocation, attempts, picked flags and clocks.

    ``allocation``, ``attempts`` and ``picked`` are N x 4 integer matrices
    (rows are fruits, columns arms 1-4).  ``agent_clock`` holds the
    accumulated time of group-U and group-D.
    """

    layout: FruitLayout
    arms: tuple
    allocation: np.ndarray
    attempts: np.ndarray
    picked: np.ndarray
    agent_clock: tuple = (0.0, 0.0)
    step_index: int = 0

    def __post_init__(self):
        n = self.layout.n
        for name in ("allocation", "attempts", "picked"):
            arr = np.asarray(getattr(self, name)).reshape(n, N_ARMS)
            object.__setattr__(self, name, _frozen(arr, np.int8))
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "agent_clock", tuple(float(c) for c in self.agent_clock))
        if len(self.arms) != N_ARMS or len(self.agent_clock) != 2:
            raise InvalidState("state needs 4 arms and 2 agent clocks")

    @classmethod
    def initial(cls, layout: FruitLayout, start_positions: Sequence) -> "SystemState":
        n = layout.n
        zeros = np.zeros((n, N_ARMS), dtype=np.int8)
        arms = tuple(ArmState(m + 1, start_positions[m]) for m in range(N_ARMS))
        return cls(layout, arms, zeros, zeros, zeros)

    @property
    def phases(self) -> tuple:
        return tuple(a.phase for a in self.arms)

    def picked_mask(self) -> np.ndarray:
        return self.picked.any(axis=1)

    def attempts_total(self) -> np.ndarray:
        return self.attempts.sum(axis=1)

    def abandoned_mask(self, max_attempts: int = MAX_ATTEMPTS) -> np.ndarray:
        return ~self.picked_mask() & (self.attempts_total() >= max_attempts)

    def counts(self, max_attempts: int = MAX_ATTEMPTS) -> tuple:
        """(picked, remaining, abandoned) fruit counts."""
        picked = int(self.picked_mask().sum())
        abandoned = int(self.abandoned_mask(max_attempts).sum())
        return picked, self.layout.n - picked - abandoned, abandoned

    def __eq__(self, other):
        if not isinstance(other, SystemState):
            return NotImplemented
        return (
            self.layout == other.layout
            and self.arms == other.arms
            and np.array_equal(self.allocation, other.allocation)
            and np.array_equal(self.attempts, other.attempts)
            and np.array_equal(self.picked, other.picked)
            and self.agent_clock == other.agent_clock
            and self.step_index == other.step_index
        )

    __hash__ = None


def validate_state(state: SystemState, k_max: Optional[int] = None, ws=None) -> list:
    """Return one :class:`Violation` per broken state invariant (empty if valid).

    ``k_max`` and ``ws`` (a WorkspaceConfig) enable the step-bound and
    arm-box checks respectively.
    """
    out = []
    picked, attempts, alloc = state.picked, state.attempts, state.allocation
    for n in np.flatnonzero(picked.sum(axis=1) > 1):
        out.append(Violation("DoublePick", fruit=int(n)))
    for n in np.flatnonzero(alloc.sum(axis=1) > 1):
        out.append(Violation("DoubleAllocation", fruit=int(n)))
    for n, m in np.argwhere(attempts > MAX_ATTEMPTS):
        out.append(Violation("AttemptOverflow", fruit=int(n), arm=int(m) + 1))
    for n, m in np.argwhere(attempts < 0):
        out.append(Violation("NegativeAttempts", fruit=int(n), arm=int(m) + 1))
    for n, m in np.argwhere(attempts < picked):
        out.append(Violation("PickedWithoutAttempt", fruit=int(n), arm=int(m) + 1))
    for name, arr in (("allocation", alloc), ("picked", picked)):
        for n, m in np.argwhere((arr != 0) & (arr != 1)):
            out.append(Violation("NonBinary", fruit=int(n), arm=int(m) + 1, detail=name))
    for m, arm in enumerate(state.arms):
        if arm.arm_id != m + 1:
            out.append(Violation("ArmOrder", arm=m + 1))
        if not (arm.busy_until >= 0 and math.isfinite(arm.busy_until)):
            out.append(Violation("NegativeBusy", arm=m + 1))
        if ws is not None and not ws.contains(m + 1, arm.position):
            out.append(Violation("ArmOutOfBox", arm=m + 1))
    for g, (a, b) in enumerate(GROUPS):
        if state.arms[a].phase == Phase.AEG and state.arms[b].phase == Phase.AEG:
            out.append(Violation("GroupDoubleAEG", detail="U" if g == 0 else "D"))
    if any(not (c >= 0 and math.isfinite(c)) for c in state.agent_clock):
        out.append(Violation("BadClock"))
    if state.step_index < 0 or (k_max is not None and state.step_index > k_max):
        out.append(Violation("StepOverflow", detail=str(state.step_index)))
    return out


def state_to_dict(state: SystemState) -> dict:
    return {
        "layout": state.layout.to_dict() | {"positions": state.layout.positions.tolist()},
        "arms": [
            {
                "arm_id": a.arm_id,
                "position": list(a.position),
                "phase": int(a.phase),
                "busy_until": a.busy_until,
            }
            for a in state.arms
        ],
        "allocation": state.allocation.tolist(),
        "attempts": state.attempts.tolist(),
        "picked": state.picked.tolist(),
        "agent_clock": list(state.agent_clock),
        "step_index": state.step_index,
    }


def state_from_dict(d: dict) -> SystemState:
    lay = d["layout"]
    layout = FruitLayout(
        np.asarray(lay["positions"], dtype=float).reshape(-1, 3),
        tuple(lay["required_attempts"]),
        lay["id"],
    )
    arms = tuple(ArmState(a["arm_id"], a["position"], a["phase"], a["busy_until"]) for a in d["arms"])
    return SystemState(
        layout,
        arms,
        d["allocation"],
        d["attempts"],
        d["picked"],
        tuple(d["agent_clock"]),
        int(d["step_index"]),
    )


def encode_state(state: SystemState) -> str:
    return json.dumps(state_to_dict(state))


def decode_state(s: str) -> SystemState:
    return state_from_dict(json.loads(s))


@dataclass
class EpisodeMetrics:
    makespan: float
    idle_per_arm: tuple
    conflicts: int
    remaining: int
    abandoned: int
    picked_total: int
    planning_latency_mean: float = 0.0
    steps: int = 0
    done_reason: str = "NotDone"
    extra: dict = field(default_factory=dict)
