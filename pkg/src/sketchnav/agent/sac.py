"""Soft actor-critic: twin critics, implicit value, auto-tuned temperature.

Loss computations accept injected reparametrization noise so tests can treat
them as deterministic functions of the parameters (finite-difference checks,
exact replays). Checkpoints are versioned torch archives.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .networks import NumericalFaultError, SquashedGaussianActor, TwinQ

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SacConfig:
    gamma: float = 0.99
    tau: float = 0.005               # Polyak smoothing toward targets
    lr: float = 3e-4
    alpha_init: float = 0.2
    autotune_alpha: bool = True
    target_entropy: float = -2.0     # -dim(action)
    hidden: tuple[int, ...] = (256, 256)
    batch_size: int = 256
    buffer_capacity: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.alpha_init <= 0.0:
            raise ValueError("alpha must be positive")


class SacAgent:
    def __init__(
        self,
        obs_dim: int,
        act_low,
        act_high,
        config: SacConfig = SacConfig(),
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ):
        self.obs_dim = obs_dim
        self.act_low = tuple(float(v) for v in act_low)
        self.act_high = tuple(float(v) for v in act_high)
        self.config = config
        self.dtype = dtype
        act_dim = len(self.act_low)

        init_gen = torch.Generator().manual_seed(seed)
        with _temp_default_generator(init_gen):
            self.actor = SquashedGaussianActor(
                obs_dim, self.act_low, self.act_high, config.hidden, dtype
            )
            self.critic = TwinQ(obs_dim, act_dim, config.hidden, dtype)
        self.critic_targ = TwinQ(obs_dim, act_dim, config.hidden, dtype)
        self.critic_targ.load_state_dict(self.critic.state_dict())
        for p in self.critic_targ.parameters():
            p.requires_grad_(False)

        self.log_alpha = torch.tensor(
            float(np.log(config.alpha_init)), dtype=dtype, requires_grad=True
        )
        self.opt_actor = torch.optim.Adam(self.actor.parameters(), lr=config.lr)
        self.opt_critic = torch.optim.Adam(self.critic.parameters(), lr=config.lr)
        self.opt_alpha = torch.optim.Adam([self.log_alpha], lr=config.lr)
        self.sample_gen = torch.Generator().manual_seed(seed + 1)

    @property
    def alpha(self) -> float:
        return float(self.log_alpha.detach().exp())

    # --- acting -------------------------------------------------------------

    def act(self, obs: np.ndarray, deterministic: bool = False) -> np.ndarray:
        t = torch.as_tensor(obs, dtype=self.dtype).unsqueeze(0)
        with torch.no_grad():
            action, _ = self.actor.sample(
                t, deterministic=deterministic, generator=self.sample_gen
            )
        return action.squeeze(0).numpy()

    # --- losses (pure given injected noise) ----------------------------------

    def _tensors(self, batch: dict) -> dict[str, torch.Tensor]:
        return {k: torch.as_tensor(v, dtype=self.dtype) for k, v in batch.items()}

    def critic_target(self, batch: dict, noise_next: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Soft Bellman backup y = r + (1-done) * gamma * (minQ' - alpha*logpi)."""
        b = self._tensors(batch)
        with torch.no_grad():
            next_act, next_logp = self.actor.sample(
                b["next_obs"], noise=noise_next, generator=self.sample_gen
            )
            q_next = self.critic_targ.min_q(b["next_obs"], next_act)
            soft = q_next - self.log_alpha.exp().detach() * next_logp
            return b["rew"] + (1.0 - b["done"]) * self.config.gamma * soft

    def critic_loss(self, batch: dict, noise_next: Optional[torch.Tensor] = None) -> torch.Tensor:
        b = self._tensors(batch)
        y = self.critic_target(batch, noise_next=noise_next)
        q1, q2 = self.critic(b["obs"], b["act"])
        return ((q1 - y) ** 2).mean() + ((q2 - y) ** 2).mean()

    def actor_loss(self, batch: dict, noise_pi: Optional[torch.Tensor] = None) -> torch.Tensor:
        b = self._tensors(batch)
        act, logp = self.actor.sample(b["obs"], noise=noise_pi, generator=self.sample_gen)
        q = self.critic.min_q(b["obs"], act)
        return (self.log_alpha.exp().detach() * logp - q).mean()

    def alpha_loss(self, batch: dict, noise_pi: Optional[torch.Tensor] = None) -> torch.Tensor:
        b = self._tensors(batch)
        with torch.no_grad():
            _, logp = self.actor.sample(b["obs"], noise=noise_pi, generator=self.sample_gen)
        return -(self.log_alpha * (logp + self.config.target_entropy).detach()).mean()

    # --- one gradient step ----------------------------------------------------

    def update(
        self,
        batch: dict,
        noise_pi: Optional[torch.Tensor] = None,
        noise_next: Optional[torch.Tensor] = None,
    ) -> dict[str, float]:
        c_loss = self.critic_loss(batch, noise_next=noise_next)
        self.opt_critic.zero_grad()
        c_loss.backward()
        self.opt_critic.step()

        for p in self.critic.parameters():
            p.requires_grad_(False)
        a_loss = self.actor_loss(batch, noise_pi=noise_pi)
        self.opt_actor.zero_grad()
        a_loss.backward()
        self.opt_actor.step()
        for p in self.critic.parameters():
            p.requires_grad_(True)

        if self.config.autotune_alpha:
            t_loss = self.alpha_loss(batch, noise_pi=noise_pi)
            self.opt_alpha.zero_grad()
            t_loss.backward()
            self.opt_alpha.step()
            alpha_val = float(t_loss.detach())
        else:
            alpha_val = 0.0

        losses = {
            "critic_loss": float(c_loss.detach()),
            "actor_loss": float(a_loss.detach()),
            "alpha_loss": alpha_val,
            "alpha": self.alpha,
        }
        if not all(np.isfinite(v) for v in losses.values()):
            raise NumericalFaultError(f"non-finite loss: {losses}")
        self._polyak()
        return losses

    def _polyak(self) -> None:
        tau = self.config.tau
        with torch.no_grad():
            for p, pt in zip(self.critic.parameters(), self.critic_targ.parameters()):
                pt.mul_(1.0 - tau).add_(tau * p)

    # --- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        payload = {
            "version": CHECKPOINT_VERSION,
            "obs_dim": self.obs_dim,
            "act_low": self.act_low,
            "act_high": self.act_high,
            "config": asdict(self.config),
            "actor": self.actor.state_dict(),
            "critic": self.critic.state_dict(),
            "critic_targ": self.critic_targ.state_dict(),
            "log_alpha": float(self.log_alpha),
            "opt_actor": self.opt_actor.state_dict(),
            "opt_critic": self.opt_critic.state_dict(),
            "opt_alpha": self.opt_alpha.state_dict(),
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, path)

    @classmethod
    def load(cls, path, seed: int = 0) -> "SacAgent":
        payload = torch.load(path, map_location="cpu", weights_only=False)
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
        cfg = payload["config"]
        cfg["hidden"] = tuple(cfg["hidden"])
        agent = cls(
            payload["obs_dim"],
            payload["act_low"],
            payload["act_high"],
            SacConfig(**cfg),
            seed=seed,
        )
        agent.actor.load_state_dict(payload["actor"])
        agent.critic.load_state_dict(payload["critic"])
        agent.critic_targ.load_state_dict(payload["critic_targ"])
        with torch.no_grad():
            agent.log_alpha.fill_(payload["log_alpha"])
        agent.opt_actor.load_state_dict(payload["opt_actor"])
        agent.opt_critic.load_state_dict(payload["opt_critic"])
        agent.opt_alpha.load_state_dict(payload["opt_alpha"])
        return agent


class _temp_default_generator:
    """Route default-RNG weight init through a private generator."""

    def __init__(self, gen: torch.Generator):
        self.gen = gen

    def __enter__(self):
        self.saved = torch.random.get_rng_state()
        torch.random.set_rng_state(self.gen.get_state())
        return self

    def __exit__(self, *exc):
        self.gen.set_state(torch.random.get_rng_state())
        torch.random.set_rng_state(self.saved)
        return False
