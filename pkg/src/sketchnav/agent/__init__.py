from .networks import NumericalFaultError, SquashedGaussianActor, TwinQ
from .observations import OBS_DIM, RHO_MAX, SCAN_DIM, build_observation, pool_scan
from .replay import ReplayBuffer
from .rewards import C_STEP, R_COLLISION, R_GOAL, W_DIST, RewardEvent, reward
from .sac import SacAgent, SacConfig

__all__ = [
    "NumericalFaultError", "SquashedGaussianActor", "TwinQ",
    "OBS_DIM", "RHO_MAX", "SCAN_DIM", "build_observation", "pool_scan",
    "ReplayBuffer",
    "C_STEP", "R_COLLISION", "R_GOAL", "W_DIST", "RewardEvent", "reward",
    "SacAgent", "SacConfig",
]
