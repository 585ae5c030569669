"""Session event logs and deterministic replay.

A log is JSONL: a meta header, then one line per inbound message ("in"),
tick ("tick"), or emitted frame ("out"). Because a session is a pure
function of its message/tick history, re-driving a fresh session from the
"in"/"tick" lines must reproduce the "out" lines byte for byte; replay()
checks exactly that.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Optional

from .protocol import dumps
from .scenario import Scenario
from .session import Session, SessionConfig

LOG_VERSION = 1


class ReplayError(ValueError):
    pass


class Recorder:
    """Streams log lines to a file as the live session runs."""

    def __init__(self, fh: IO[str], scenario: Scenario, config: SessionConfig,
                 checkpoint: Optional[str] = None):
        self._fh = fh
        self._write(
            {
                "dir": "meta",
                "v": LOG_VERSION,
                "scenario": scenario.to_json(),
                "checkpoint": checkpoint,
                "config": {
                    "timeout_ticks": config.timeout_ticks,
                    "constraints_in_scan": config.constraints_in_scan,
                },
            }
        )

    def _write(self, rec: dict) -> None:
        self._fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
        self._fh.flush()

    def record_in(self, frame: dict) -> None:
        self._write({"dir": "in", "frame": frame})

    def record_tick(self) -> None:
        self._write({"dir": "tick"})

    def record_out(self, frames) -> None:
        for f in frames:
            self._write({"dir": "out", "frame": f})


@dataclass
class ReplayResult:
    ok: bool
    frames: list = field(default_factory=list)      # frames the replay produced
    mismatches: list = field(default_factory=list)  # (index, expected, got)
    in_count: int = 0
    tick_count: int = 0

    @property
    def out_count(self) -> int:
        return len(self.frames)


def _load_lines(path: str | Path) -> list[dict]:
    lines = []
    with open(path) as fh:
        for i, raw in enumerate(fh):
            raw = raw.strip()
            if not raw:
                continue
            try:
                lines.append(json.loads(raw))
            except ValueError as exc:
                raise ReplayError(f"line {i + 1}: bad JSON ({exc})") from exc
    if not lines:
        raise ReplayError("empty log")
    return lines


def replay(path: str | Path, policy=None) -> ReplayResult:
    """Re-drive a fresh session from the log; verify emitted frames match.

    `policy` overrides checkpoint loading (tests use it); otherwise the
    meta header's checkpoint path is loaded on demand.
    """
    lines = _load_lines(path)
    meta = lines[0]
    if meta.get("dir") != "meta":
        raise ReplayError("log does not start with a meta header")
    if meta.get("v") != LOG_VERSION:
        raise ReplayError(f"unsupported log version {meta.get('v')!r}")

    scenario = Scenario.from_json(meta["scenario"])
    cfg = meta.get("config", {})
    config = SessionConfig(
        timeout_ticks=int(cfg.get("timeout_ticks", 400)),
        constraints_in_scan=bool(cfg.get("constraints_in_scan", True)),
    )
    if policy is None and meta.get("checkpoint"):
        from ..agent.sac import SacAgent

        policy = SacAgent.load(meta["checkpoint"])
    session = Session(scenario, policy=policy, config=config)

    expected = [rec["frame"] for rec in lines[1:] if rec.get("dir") == "out"]
    result = ReplayResult(ok=True)
    for rec in lines[1:]:
        d = rec.get("dir")
        if d == "in":
            result.in_count += 1
            result.frames.extend(session.handle_message(rec["frame"]))
        elif d == "tick":
            result.tick_count += 1
            result.frames.extend(session.tick())
        elif d != "out":
            raise ReplayError(f"unknown record dir {d!r}")

    for i in range(max(len(expected), len(result.frames))):
        want = dumps(expected[i]) if i < len(expected) else "<missing>"
        got = dumps(result.frames[i]) if i < len(result.frames) else "<missing>"
        if want != got:
            result.ok = False
            result.mismatches.append((i, want, got))
    return result
