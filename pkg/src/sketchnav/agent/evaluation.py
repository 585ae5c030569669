"""Deterministic policy evaluation with failure-incident bookkeeping.

Evaluation episodes keep running after a virtual-obstacle or zone incident
(the judge records it; the robot physically can continue), so one episode
can expose several incident kinds. The exclusive outcome is the first one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
import torch

from ..service.metrics import (
    EpisodeRecord,
    Metrics,
    classify_outcome,
    incident_for_contact,
)
from ..world import DT, ContactKind
from .envs import EnvConfig, NavEnv
from .sac import SacAgent


@dataclass(frozen=True)
class EvalConfig:
    n_episodes: int = 100
    seed: int = 1000
    continue_after_failure: bool = True
    constraints_in_scan: bool = True    # False = constraint-blind ablation


def evaluate_env(
    agent: Union[SacAgent, str],
    env_config: EnvConfig,
    eval_config: EvalConfig = EvalConfig(),
) -> Metrics:
    """Roll the deterministic policy over freshly seeded episodes."""
    torch.set_num_threads(1)
    if isinstance(agent, str):
        agent = SacAgent.load(agent)

    stop = (ContactKind.PHYSICAL,) if eval_config.continue_after_failure else (
        ContactKind.PHYSICAL, ContactKind.VIRTUAL, ContactKind.SAFETY_ZONE
    )
    env_config = replace(
        env_config,
        scan_includes_constraints=eval_config.constraints_in_scan,
        stop_contacts=stop,
    )
    env = NavEnv(env_config, seed=eval_config.seed)

    metrics = Metrics()
    for _ in range(eval_config.n_episodes):
        obs = env.reset()
        incidents: list[str] = []
        reached = False
        reward_sum = 0.0
        path_len = 0.0
        prev_xy = env.state.pose.xy()
        ticks = 0
        while True:
            action = agent.act(obs, deterministic=True)
            obs, r, done, info = env.step(action)
            ticks = info["tick"]
            reward_sum += r
            xy = env.state.pose.xy()
            path_len += math.dist(prev_xy, xy)
            prev_xy = xy
            inc = incident_for_contact(info["contact"]) if info["contact"] else None
            if inc is not None and inc not in incidents:
                incidents.append(inc)
            if done:
                reached = info.get("outcome") == "Success"
                break
        metrics.add(EpisodeRecord(
            outcome=classify_outcome(incidents, reached),
            incidents=tuple(incidents),
            time_s=ticks * DT,
            path_length=path_len,
            ticks=ticks,
            reward_sum=reward_sum,
        ))
    return metrics


def compare_constraint_ablation(
    agent: Union[SacAgent, str],
    env_config: EnvConfig,
    n_episodes: int = 100,
    seed: int = 1000,
) -> dict:
    """Same checkpoint, same worlds: constraint-aware scan vs blind scan.

    Returns both metrics plus the incident-rate ratios the aware mode
    achieves relative to the blind one (lower is better).
    """
    if isinstance(agent, str):
        agent = SacAgent.load(agent)
    aware = evaluate_env(
        agent, env_config, EvalConfig(n_episodes=n_episodes, seed=seed, constraints_in_scan=True)
    )
    blind = evaluate_env(
        agent, env_config, EvalConfig(n_episodes=n_episodes, seed=seed, constraints_in_scan=False)
    )

    def ratio(kind: str) -> float:
        b = blind.incident_rate(kind)
        a = aware.incident_rate(kind)
        return a / b if b > 0 else (0.0 if a == 0 else float("inf"))

    return {
        "aware": aware,
        "blind": blind,
        "alpha_ratio": ratio("Alpha"),
        "beta_ratio": ratio("Beta"),
    }
