"""Policy observation: pooled merged scan + goal in polar robot frame + velocity."""
from __future__ import annotations

import math

import numpy as np

from ..geometry import Point, norm_angle
from ..world import DEFAULT_LIMITS, LaserScan, MotionLimits, RobotState

POOL_FACTOR = 4          # 360 raw beams -> 90 pooled
SCAN_DIM = 90
RHO_MAX = 10.0           # target-distance normalizer, room diagonal scale
OBS_DIM = SCAN_DIM + 3 + 2


def pool_scan(ranges: np.ndarray, max_range: float) -> np.ndarray:
    """Min-pool consecutive beams: conservative (nearest obstacle survives)."""
    n = ranges.shape[0]
    if n % POOL_FACTOR != 0:
        raise ValueError(f"beam count {n} not divisible by {POOL_FACTOR}")
    pooled = ranges.reshape(n // POOL_FACTOR, POOL_FACTOR).min(axis=1)
    return pooled / max_range


def build_observation(
    scan: LaserScan,
    target: Point,
    state: RobotState,
    limits: MotionLimits = DEFAULT_LIMITS,
) -> np.ndarray:
    """95-dim float32 vector, every component in [-1, 1]."""
    pooled = pool_scan(scan.ranges, scan.config.max_range)
    x, y = state.pose.xy()
    dx, dy = target[0] - x, target[1] - y
    rho = math.hypot(dx, dy)
    phi = norm_angle(math.atan2(dy, dx) - state.pose.theta)
    goal = (min(rho, RHO_MAX) / RHO_MAX, math.sin(phi), math.cos(phi))
    vel = (state.v / limits.v_max, state.w / limits.w_max)
    out = np.empty(OBS_DIM, dtype=np.float32)
    out[:SCAN_DIM] = pooled
    out[SCAN_DIM:SCAN_DIM + 3] = goal
    out[SCAN_DIM + 3:] = vel
    return out
