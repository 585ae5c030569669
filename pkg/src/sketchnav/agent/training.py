"""Deterministic training loop: env rollouts feeding one SAC learner."""
from __future__ import annotations

import csv
import math
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from ..world import V_MAX, V_MIN, W_MAX
from .envs import EnvConfig, NavEnv
from .observations import OBS_DIM
from .replay import ReplayBuffer
from .sac import SacAgent, SacConfig

ACT_LOW = (V_MIN, -W_MAX)
ACT_HIGH = (V_MAX, W_MAX)


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 150_000
    start_steps: int = 2_000        # uniform-random warmup actions
    update_after: int = 1_000
    updates_per_step: float = 1.0
    seed: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    checkpoint_path: str = "checkpoints/policy.pt"
    log_path: str = "checkpoints/train_log.csv"
    checkpoint_every: int = 50_000
    progress_every: int = 0         # stdout cadence in steps; 0 = silent


@dataclass
class TrainResult:
    steps: int
    episodes: int
    success_rate: float             # trailing 100 episodes
    checkpoint_path: str
    log_path: str
    wall_time_s: float


LOG_FIELDS = (
    "step", "episode", "return", "length", "outcome",
    "success_rate", "critic_loss", "actor_loss", "alpha",
)


def train(config: TrainConfig) -> TrainResult:
    torch.set_num_threads(1)
    env = NavEnv(config.env, seed=config.seed)
    agent = SacAgent(OBS_DIM, ACT_LOW, ACT_HIGH, config.sac, seed=config.seed)
    buffer = ReplayBuffer(config.sac.buffer_capacity, OBS_DIM, 2, seed=config.seed + 1)
    warmup_rng = np.random.default_rng(config.seed + 2)

    log_path = Path(config.log_path)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    ckpt_path = Path(config.checkpoint_path)

    trailing: deque[int] = deque(maxlen=100)
    episodes = 0
    ep_return = 0.0
    ep_len = 0
    last_losses = {"critic_loss": math.nan, "actor_loss": math.nan, "alpha": agent.alpha}
    update_debt = 0.0
    t0 = time.perf_counter()

    obs = env.reset()
    with open(log_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()

        for step in range(1, config.total_steps + 1):
            if step <= config.start_steps:
                action = np.array([
                    warmup_rng.uniform(ACT_LOW[0], ACT_HIGH[0]),
                    warmup_rng.uniform(ACT_LOW[1], ACT_HIGH[1]),
                ], dtype=np.float32)
            else:
                action = agent.act(obs)
            next_obs, r, done, info = env.step(action)
            # timeout is a horizon cut, not a terminal state
            stored_done = done and info.get("outcome") != "Timeout"
            buffer.push(obs, action, r, next_obs, stored_done)
            obs = next_obs
            ep_return += r
            ep_len += 1

            if step > config.update_after and len(buffer) >= config.sac.batch_size:
                update_debt += config.updates_per_step
                while update_debt >= 1.0:
                    update_debt -= 1.0
                    last_losses = agent.update(buffer.sample(config.sac.batch_size))

            if done:
                episodes += 1
                trailing.append(1 if info.get("outcome") == "Success" else 0)
                writer.writerow({
                    "step": step,
                    "episode": episodes,
                    "return": round(ep_return, 4),
                    "length": ep_len,
                    "outcome": info.get("outcome"),
                    "success_rate": round(sum(trailing) / len(trailing), 4),
                    "critic_loss": round(last_losses.get("critic_loss", math.nan), 5),
                    "actor_loss": round(last_losses.get("actor_loss", math.nan), 5),
                    "alpha": round(last_losses.get("alpha", agent.alpha), 5),
                })
                obs = env.reset()
                ep_return = 0.0
                ep_len = 0

            if config.checkpoint_every and step % config.checkpoint_every == 0:
                agent.save(ckpt_path)
            if config.progress_every and step % config.progress_every == 0:
                rate = sum(trailing) / len(trailing) if trailing else 0.0
                print(
                    f"step {step}/{config.total_steps} episodes {episodes} "
                    f"success {rate:.2f} alpha {agent.alpha:.3f} "
                    f"elapsed {time.perf_counter() - t0:.0f}s",
                    flush=True,
                )

    agent.save(ckpt_path)
    rate = sum(trailing) / len(trailing) if trailing else 0.0
    return TrainResult(
        steps=config.total_steps,
        episodes=episodes,
        success_rate=rate,
        checkpoint_path=str(ckpt_path),
        log_path=str(log_path),
        wall_time_s=time.perf_counter() - t0,
    )
