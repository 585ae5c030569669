"""Actor and critic networks for the soft actor-critic policy.

The actor emits a tanh-squashed Gaussian mapped onto the (v, w) action box;
its log-prob carries the exact change-of-variables terms so the entropy
bonus is correct. Noise can be injected for finite-difference testing.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import torch
import torch.nn as nn

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class NumericalFaultError(RuntimeError):
    """Non-finite value out of a network; training must abort loudly."""


def mlp(sizes: Sequence[int], dtype: torch.dtype = torch.float32) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1], dtype=dtype))
        if i < len(sizes) - 2:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class SquashedGaussianActor(nn.Module):
    def __init__(
        self,
        obs_dim: int,
        act_low: Sequence[float],
        act_high: Sequence[float],
        hidden: Sequence[int] = (256, 256),
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        act_dim = len(act_low)
        self.net = mlp([obs_dim, *hidden], dtype=dtype)
        self.mean_head = nn.Linear(hidden[-1], act_dim, dtype=dtype)
        self.log_std_head = nn.Linear(hidden[-1], act_dim, dtype=dtype)
        low = torch.as_tensor(act_low, dtype=dtype)
        high = torch.as_tensor(act_high, dtype=dtype)
        self.register_buffer("act_scale", (high - low) / 2.0)
        self.register_buffer("act_bias", (high + low) / 2.0)

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = torch.relu(self.net(obs))
        mean = self.mean_head(h)
        log_std = torch.clamp(self.log_std_head(h), LOG_STD_MIN, LOG_STD_MAX)
        if not torch.isfinite(mean).all() or not torch.isfinite(log_std).all():
            raise NumericalFaultError("actor produced non-finite statistics")
        return mean, log_std

    def sample(
        self,
        obs: torch.Tensor,
        deterministic: bool = False,
        noise: Optional[torch.Tensor] = None,
        generator: Optional[torch.Generator] = None,
    ) -> tuple[torch.Tensor, Optional[torch.Tensor]]:
        """Returns (action, log_prob); log_prob is None in deterministic mode."""
        mean, log_std = self(obs)
        if deterministic:
            return torch.tanh(mean) * self.act_scale + self.act_bias, None
        std = log_std.exp()
        if noise is None:
            noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        z = mean + std * noise
        action = torch.tanh(z) * self.act_scale + self.act_bias
        # log N(z; mean, std) - log |d action / d z|
        log_prob = -0.5 * noise.pow(2) - log_std - _HALF_LOG_2PI
        log_prob = log_prob - 2.0 * (math.log(2.0) - z - torch.nn.functional.softplus(-2.0 * z))
        log_prob = log_prob - torch.log(self.act_scale)
        return action, log_prob.sum(dim=-1)


class TwinQ(nn.Module):
    """Independent Q heads; targets take their elementwise minimum."""

    def __init__(
        self,
        obs_dim: int,
        act_dim: int,
        hidden: Sequence[int] = (256, 256),
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        self.q1 = mlp([obs_dim + act_dim, *hidden, 1], dtype=dtype)
        self.q2 = mlp([obs_dim + act_dim, *hidden, 1], dtype=dtype)

    def forward(self, obs: torch.Tensor, act: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = torch.cat([obs, act], dim=-1)
        return self.q1(x).squeeze(-1), self.q2(x).squeeze(-1)

    def min_q(self, obs: torch.Tensor, act: torch.Tensor) -> torch.Tensor:
        a, b = self(obs, act)
        return torch.minimum(a, b)
