"""Episode reward: goal bonus, collision penalty, shaped distance progress."""
from __future__ import annotations

import enum
from typing import Union

from ..world import CollisionReport

R_GOAL = 10.0
R_COLLISION = 10.0
W_DIST = 1.0     # per-meter progress toward the target
C_STEP = 0.01    # per-tick time cost


class RewardEvent(enum.Enum):
    REACHED = "Reached"
    STEP = "Step"


def reward(
    prev_dist: float,
    new_dist: float,
    event: Union[RewardEvent, CollisionReport] = RewardEvent.STEP,
) -> float:
    """Collision of any kind ends the episode with the full penalty."""
    if prev_dist < 0 or new_dist < 0:
        raise ValueError("distances must be non-negative")
    if isinstance(event, CollisionReport):
        if event.any:
            return -R_COLLISION
        event = RewardEvent.STEP
    if event is RewardEvent.REACHED:
        return R_GOAL
    return W_DIST * (prev_dist - new_dist) - C_STEP
