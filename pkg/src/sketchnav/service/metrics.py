"""Episode outcome taxonomy and aggregate rates.

Outcomes are exclusive (first failure in time wins) so the rates always sum
to one. Incident flags are kept separately and non-exclusively: evaluation
episodes continue after a failure, so one run can touch a virtual obstacle
and later cross a safety zone.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..world import ContactKind

OUTCOME_SUCCESS = "Success"
OUTCOME_ALPHA = "Alpha"      # virtual-obstacle contact (physical folds in here)
OUTCOME_BETA = "Beta"        # safety-zone entry
OUTCOME_GAMMA = "Gamma"      # required via point never passed
OUTCOME_TIMEOUT = "Timeout"
OUTCOMES = (OUTCOME_SUCCESS, OUTCOME_ALPHA, OUTCOME_BETA, OUTCOME_GAMMA, OUTCOME_TIMEOUT)

_CONTACT_TO_INCIDENT = {
    ContactKind.PHYSICAL: OUTCOME_ALPHA,
    ContactKind.VIRTUAL: OUTCOME_ALPHA,
    ContactKind.SAFETY_ZONE: OUTCOME_BETA,
}


def incident_for_contact(kind: str) -> Optional[str]:
    return _CONTACT_TO_INCIDENT.get(kind)


def classify_outcome(
    incidents: Sequence[str],
    reached: bool,
    missed_vias: int = 0,
) -> str:
    """Exclusive outcome: earliest contact failure, then gamma, then goal/timeout."""
    for inc in incidents:
        if inc in (OUTCOME_ALPHA, OUTCOME_BETA):
            return inc
    if missed_vias > 0:
        return OUTCOME_GAMMA
    return OUTCOME_SUCCESS if reached else OUTCOME_TIMEOUT


@dataclass(frozen=True)
class EpisodeRecord:
    outcome: str
    incidents: tuple[str, ...] = ()       # time-ordered, duplicates removed
    time_s: float = 0.0
    path_length: float = 0.0
    ticks: int = 0
    reward_sum: float = 0.0

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")

    def to_json(self) -> dict:
        return {
            "outcome": self.outcome,
            "incidents": list(self.incidents),
            "time_s": self.time_s,
            "path_length": self.path_length,
            "ticks": self.ticks,
            "reward_sum": self.reward_sum,
        }


@dataclass
class Metrics:
    episodes: list[EpisodeRecord] = field(default_factory=list)

    def add(self, record: EpisodeRecord) -> None:
        self.episodes.append(record)

    def rates(self) -> dict[str, float]:
        n = len(self.episodes)
        if n == 0:
            return {k: 0.0 for k in OUTCOMES}
        return {k: sum(1 for e in self.episodes if e.outcome == k) / n for k in OUTCOMES}

    @property
    def success_rate(self) -> float:
        return self.rates()[OUTCOME_SUCCESS]

    def incident_rate(self, kind: str) -> float:
        """Fraction of episodes in which `kind` ever occurred."""
        n = len(self.episodes)
        if n == 0:
            return 0.0
        return sum(1 for e in self.episodes if kind in e.incidents) / n

    def mean_time(self) -> float:
        done = [e.time_s for e in self.episodes if e.outcome == OUTCOME_SUCCESS]
        return sum(done) / len(done) if done else 0.0

    def mean_path_length(self) -> float:
        done = [e.path_length for e in self.episodes if e.outcome == OUTCOME_SUCCESS]
        return sum(done) / len(done) if done else 0.0

    def to_json(self) -> dict:
        return {
            "episodes": [e.to_json() for e in self.episodes],
            "rates": self.rates(),
            "incident_rates": {
                OUTCOME_ALPHA: self.incident_rate(OUTCOME_ALPHA),
                OUTCOME_BETA: self.incident_rate(OUTCOME_BETA),
                OUTCOME_GAMMA: self.incident_rate(OUTCOME_GAMMA),
            },
            "mean_time_s": self.mean_time(),
            "mean_path_length": self.mean_path_length(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Metrics":
        m = cls()
        for e in data["episodes"]:
            m.add(
                EpisodeRecord(
                    outcome=e["outcome"],
                    incidents=tuple(e.get("incidents", ())),
                    time_s=float(e.get("time_s", 0.0)),
                    path_length=float(e.get("path_length", 0.0)),
                    ticks=int(e.get("ticks", 0)),
                    reward_sum=float(e.get("reward_sum", 0.0)),
                )
            )
        return m
