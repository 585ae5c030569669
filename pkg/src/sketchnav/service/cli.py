"""Command-line entry points: train, eval, serve, replay, report."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from .metrics import OUTCOME_ALPHA, OUTCOME_BETA, OUTCOME_GAMMA, OUTCOME_SUCCESS, OUTCOME_TIMEOUT
from .report import EmptyReportError, write_report
from .scenario import Scenario, ScenarioError


def _coerce(value):
    if isinstance(value, list):
        return tuple(_coerce(v) for v in value)
    return value


def _dataclass_from(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**{k: _coerce(v) for k, v in data.items()})


def _load_train_config(path: Optional[str], seed: Optional[int]):
    # imported lazily: torch is heavy and serve/report don't need it
    from ..agent.envs import EnvConfig
    from ..agent.sac import SacConfig
    from ..agent.training import TrainConfig

    data = json.loads(Path(path).read_text()) if path else {}
    env = _dataclass_from(EnvConfig, data.pop("env", {}))
    sac = _dataclass_from(SacConfig, data.pop("sac", {}))
    cfg = _dataclass_from(TrainConfig, {**data, "env": env, "sac": sac})
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


def _cmd_train(args) -> int:
    from ..agent.training import train

    cfg = _load_train_config(args.config, args.seed)
    result = train(cfg)
    print(
        f"trained {result.steps} steps, {result.episodes} episodes, "
        f"trailing success {result.success_rate:.1%}, "
        f"{result.wall_time_s:.0f}s -> {result.checkpoint_path}"
    )
    return 0


def _cmd_eval(args) -> int:
    from ..agent.sac import SacAgent
    from .session import SessionConfig, evaluate_scenario

    try:
        scenario = Scenario.load(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    policy = SacAgent.load(args.checkpoint) if args.checkpoint else None
    metrics, trajectories = evaluate_scenario(
        scenario,
        policy=policy,
        episodes=args.episodes,
        constraints_in_scan=not args.no_ci,
    )
    rates = metrics.rates()
    print(
        f"{args.method}: n={len(metrics.episodes)} "
        f"success={rates[OUTCOME_SUCCESS]:.1%} alpha={rates[OUTCOME_ALPHA]:.1%} "
        f"beta={rates[OUTCOME_BETA]:.1%} gamma={rates[OUTCOME_GAMMA]:.1%} "
        f"timeout={rates[OUTCOME_TIMEOUT]:.1%}"
    )
    if args.out:
        payload = {
            "v": 1,
            "method": args.method,
            "metrics": metrics.to_json(),
            "trajectories": [[[round(x, 4), round(y, 4)] for x, y in t] for t in trajectories],
            "world": scenario.world.to_json(),
        }
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(payload))
        print(f"wrote {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .server import SessionServer
    from .session import SessionConfig

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    try:
        scenario = Scenario.load(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    policy = None
    if args.checkpoint:
        from ..agent.sac import SacAgent

        policy = SacAgent.load(args.checkpoint)
    server = SessionServer(
        scenario,
        policy=policy,
        config=SessionConfig(constraints_in_scan=not args.no_ci),
        host=args.host,
        port=args.port,
        realtime=args.realtime,
        static_dir=args.static,
        log_path=args.log,
        checkpoint=args.checkpoint,
    )
    port = server.start()
    print(f"serving {scenario.name} on {args.host}:{port} "
          f"(realtime={'on' if args.realtime else 'off'})")
    server.serve_forever()
    return 0


def _cmd_replay(args) -> int:
    from .replay import ReplayError, replay

    try:
        result = replay(args.log)
    except ReplayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    status = "PASS" if result.ok else "FAIL"
    print(
        f"{status}: {result.in_count} messages, {result.tick_count} ticks, "
        f"{result.out_count} frames replayed"
    )
    if not result.ok:
        idx, want, got = result.mismatches[0]
        print(f"first mismatch at frame {idx}:")
        print(f"  expected: {want[:240]}")
        print(f"  got:      {got[:240]}")
        return 1
    return 0


def _cmd_report(args) -> int:
    try:
        written = write_report(args.infile, args.out, plots_dir=args.plots)
    except EmptyReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in written:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sketchnav")
    sub = p.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("train", help="train a policy")
    t.add_argument("--config", help="training config JSON")
    t.add_argument("--seed", type=int, help="override the config seed")
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="run scripted scenario tests with a policy")
    e.add_argument("--checkpoint", help="policy checkpoint (omit for idle manual)")
    e.add_argument("--scenario", required=True, help="scenario JSON")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--no-ci", action="store_true",
                   help="hide constraints from the policy's scan")
    e.add_argument("--out", help="write metrics+trajectories JSON here")
    e.add_argument("--method", default="policy", help="label used in reports")
    e.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("serve", help="run the interactive session server")
    s.add_argument("--port", type=int, default=8765)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--scenario", required=True)
    s.add_argument("--realtime", action="store_true", help="pace ticks at 10 Hz")
    s.add_argument("--checkpoint", help="policy for autonomous control")
    s.add_argument("--static", help="directory of UI files to serve over HTTP")
    s.add_argument("--log", help="record the first connection's event log here")
    s.add_argument("--no-ci", action="store_true")
    s.set_defaults(fn=_cmd_serve)

    r = sub.add_parser("replay", help="verify an event log replays identically")
    r.add_argument("--log", required=True)
    r.set_defaults(fn=_cmd_replay)

    rp = sub.add_parser("report", help="render eval output to CSV and plots")
    rp.add_argument("--in", dest="infile", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--plots", help="also write plot files to this directory")
    rp.set_defaults(fn=_cmd_report)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
