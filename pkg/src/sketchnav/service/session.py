"""Interactive session: one world, one robot, a message inbox, a tick loop.

All mutable state lives here and is touched only by the owning loop; the
network layer talks to a session exclusively through handle_message / tick
return values, so every outbound frame is a pure function of the inbound
message history (which is what makes replays bit-identical).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .. import taskmode
from ..agent.observations import build_observation
from ..agent.rewards import RewardEvent, reward
from ..command import (
    NeedsClarification,
    Parsed,
    TaskSpec,
    TaskType,
    parse_instruction,
    retry_with_answer,
)
from ..constraints import (
    ConstraintSet,
    SemanticMap,
    Sketch,
    SketchValidationError,
    UnknownFixtureError,
    compile_sketches,
)
from ..crowd import DiscAgent, Pedestrian, step_crowd
from ..taskmode import DEFAULT_TASK_PARAMS, GroundedTask, Phase, TaskProgress
from ..world import (
    DT,
    DEFAULT_LIMITS,
    ContactKind,
    DegeneratePoseError,
    LaserScan,
    PedestrianDisc,
    RobotState,
    World,
    classify_contact,
    merge_scan,
    raycast_scan,
    step_dynamics,
)
from .metrics import (
    EpisodeRecord,
    Metrics,
    OUTCOME_SUCCESS,
    OUTCOME_TIMEOUT,
    classify_outcome,
    incident_for_contact,
)
from .protocol import ProtocolError, make_frame, validate_client_frame
from .scenario import Scenario, ScenarioError

DEFAULT_TIMEOUT_TICKS = 400  # 40 s at 10 Hz


class ControlMode(enum.Enum):
    POLICY = "Policy"
    MANUAL = "Manual"


@dataclass(frozen=True)
class SessionConfig:
    timeout_ticks: int = DEFAULT_TIMEOUT_TICKS
    # False runs the no-constraint-information ablation: the policy sees the
    # physical scan only, while contact classification still sees everything.
    constraints_in_scan: bool = True
    task_params: taskmode.TaskParams = DEFAULT_TASK_PARAMS


def packaged_scenario_path(name: str) -> Path:
    base = resources.files("sketchnav").joinpath("data", "scenarios")
    return Path(str(base.joinpath(f"{name}.json")))


def _round_pt(p) -> list[float]:
    return [round(float(p[0]), 6), round(float(p[1]), 6)]


class Session:
    def __init__(
        self,
        scenario: Scenario,
        policy=None,
        config: SessionConfig = SessionConfig(),
    ):
        self.config = config
        self._policy = policy
        self._seq = 0
        self.metrics = Metrics()
        self.trajectories: list[list[tuple[float, float]]] = []
        self._load(scenario)
        self.control = ControlMode.POLICY if policy is not None else ControlMode.MANUAL

    # --- scenario / episode state -------------------------------------------

    def _load(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.world: World = scenario.world
        self.smap: SemanticMap = scenario.semantic_map
        self.sketches: list[Sketch] = []
        self._sketch_counter = 0
        self._instr_counter = 0
        self._sketch_constraints = ConstraintSet()
        self._instr_constraints = ConstraintSet()
        self._pending_vias: list[tuple[float, float]] = []
        self._pending_clarification: Optional[tuple[str, NeedsClarification]] = None
        self.spec: Optional[TaskSpec] = None
        self.task: Optional[GroundedTask] = None
        self.progress: Optional[TaskProgress] = None
        self.manual_cmd = (0.0, 0.0)
        self.running = False
        self.episode_over = False
        self._reset_episode()

    def _reset_episode(self) -> None:
        self.state = RobotState(pose=self.scenario.robot_pose)
        self.peds: list[Pedestrian] = list(self.scenario.pedestrians)
        self.tick_count = 0
        self._incidents: list[str] = []
        self._path_len = 0.0
        self._reward_sum = 0.0
        self._reached = False
        self._trajectory: list[tuple[float, float]] = [self.state.pose.xy()]
        self._last_scan: Optional[LaserScan] = None
        self._target: Optional[tuple[float, float]] = None

    def constraints(self) -> ConstraintSet:
        return self._sketch_constraints.merged_with(self._instr_constraints)

    def hello(self) -> list[dict]:
        """Connection greeting: lets a client draw the world before any input.

        Unstamped and never recorded: it carries no session history, so
        replayed logs stay aligned with the live seq numbering.
        """
        return [self._scenario_loaded_frame()]

    # --- message handling ----------------------------------------------------

    def handle_message(self, msg: dict) -> list[dict]:
        """Process one inbound frame; returns the ack followed by broadcasts.

        The caller must write these before any later StateFrame so a client
        always sees the ack before the tick that reflects the change.
        """
        try:
            validate_client_frame(msg)
            handler = getattr(self, "_on_" + _snake(msg["type"]))
            out = [self._ack(msg)]
            out.extend(handler(msg))
            return out
        except ProtocolError as exc:
            return [self._stamp(make_frame("Error", code=exc.code, message=exc.message))]
        except UnknownFixtureError as exc:
            return [
                self._stamp(
                    make_frame("Error", code="unknown_fixture", message=str(exc.name))
                )
            ]
        except (ScenarioError, SketchValidationError, ValueError) as exc:
            return [self._stamp(make_frame("Error", code="bad_request", message=str(exc)))]

    def _stamp(self, frame: dict) -> dict:
        self._seq += 1
        frame["seq"] = self._seq
        return frame

    def _ack(self, msg: dict) -> dict:
        ack = make_frame("Ack", of=msg["type"])
        if "seq" in msg:
            ack["client_seq"] = msg["seq"]
        return self._stamp(ack)

    def _on_load_scenario(self, msg: dict) -> list[dict]:
        if "path" in msg:
            scenario = Scenario.load(str(msg["path"]))
        elif "name" in msg:
            scenario = Scenario.load(packaged_scenario_path(str(msg["name"])))
        else:
            raise ProtocolError("bad_request", "LoadScenario needs a name or a path")
        self._load(scenario)
        return [self._stamp(self._scenario_loaded_frame())]

    def _scenario_loaded_frame(self) -> dict:
        return make_frame(
            "ScenarioLoaded",
            name=self.scenario.name,
            world=self.world.to_json(),
            semantic_map=self.smap.to_json(),
            robot_pose=[self.state.pose.x, self.state.pose.y, self.state.pose.theta],
            pedestrians=[self._ped_json(p) for p in self.peds],
            mode=self.scenario.mode.value,
        )

    def _on_add_sketch(self, msg: dict) -> list[dict]:
        if "sketch" not in msg:
            raise ProtocolError("bad_request", "AddSketch needs a sketch")
        try:
            sketch = Sketch.from_json(msg["sketch"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError("bad_sketch", f"unparseable sketch: {exc}") from exc
        try:
            cset, vias, goal = compile_sketches([sketch], id_prefix=f"sk{self._sketch_counter}")
        except SketchValidationError as exc:
            raise ProtocolError("bad_sketch", str(exc)) from exc
        self._sketch_counter += 1
        self.sketches.append(sketch)
        out: list[dict] = []
        if not cset.is_empty():
            self._sketch_constraints = self._sketch_constraints.merged_with(cset)
            out.append(self._stamp(self._constraint_frame()))
        if vias:
            self._absorb_vias(vias)
        if goal is not None:
            out.extend(self._set_goal_mark(goal))
        return out

    def _absorb_vias(self, vias: Sequence[tuple[float, float]]) -> None:
        if self.task is not None and not (self.progress and self.progress.done):
            self.task = replace(self.task, via=self.task.via + tuple(vias))
            self.progress = replace(
                self.progress,
                vias_visited=self.progress.vias_visited + (False,) * len(vias),
            )
        else:
            self._pending_vias.extend(vias)

    def _set_goal_mark(self, goal: tuple[float, float]) -> list[dict]:
        if self.task is not None and self.task.task is not TaskType.FOLLOWING:
            self.task = replace(self.task, goal=tuple(goal))
            if self.progress is not None and self.progress.done:
                self.progress = replace(self.progress, phase=Phase.TO_GOAL)
        else:
            spec = TaskSpec(task=TaskType.POINT_TO_POINT, goal=tuple(goal))
            self.spec = spec
            self.task = GroundedTask(
                task=TaskType.POINT_TO_POINT,
                goal=tuple(goal),
                via=tuple(self._pending_vias),
            )
            self._pending_vias = []
            self.progress = taskmode.start_progress(self.task, self.config.task_params)
        return [self._stamp(self._task_frame())]

    def _on_clear_sketches(self, msg: dict) -> list[dict]:
        self.sketches = []
        self._sketch_constraints = ConstraintSet()
        self._pending_vias = []
        return [self._stamp(self._constraint_frame())]

    def _on_command(self, msg: dict) -> list[dict]:
        text = msg.get("text")
        if not isinstance(text, str) or not text.strip():
            raise ProtocolError("bad_command", "Command needs non-empty text")
        result = parse_instruction(
            text,
            self.smap,
            known_pedestrians=[p.id for p in self.peds],
            id_prefix=f"instr{self._instr_counter}",
        )
        self._instr_counter += 1
        return self._apply_parse(text, result)

    def _on_clarification_answer(self, msg: dict) -> list[dict]:
        if self._pending_clarification is None:
            raise ProtocolError("no_pending_clarification", "nothing to clarify")
        text = msg.get("text")
        if not isinstance(text, str) or not text.strip():
            raise ProtocolError("bad_command", "ClarificationAnswer needs non-empty text")
        original, failure = self._pending_clarification
        result = retry_with_answer(
            original,
            failure,
            text,
            self.smap,
            known_pedestrians=[p.id for p in self.peds],
            id_prefix=f"instr{self._instr_counter}",
        )
        self._instr_counter += 1
        return self._apply_parse(original, result)

    def _apply_parse(self, original: str, result) -> list[dict]:
        out: list[dict] = []
        if isinstance(result, NeedsClarification):
            self._pending_clarification = (original, result)
            out.append(
                self._stamp(
                    make_frame(
                        "ClarificationRequest",
                        question=result.question,
                        slot=result.slot,
                    )
                )
            )
            return out
        assert isinstance(result, Parsed)
        self._pending_clarification = None
        if not result.constraints.is_empty():
            self._instr_constraints = self._instr_constraints.merged_with(result.constraints)
            out.append(self._stamp(self._constraint_frame()))
        if result.spec is not None:
            self.spec = result.spec
            self.task = taskmode.ground_task(result.spec, self.smap, self.state.pose.xy())
            if self._pending_vias:
                self.task = replace(
                    self.task, via=tuple(self._pending_vias) + self.task.via
                )
                self._pending_vias = []
            self.progress = taskmode.start_progress(self.task, self.config.task_params)
            out.append(self._stamp(self._task_frame()))
        return out

    def _constraint_frame(self) -> dict:
        """Full overlay echo: instruction constraints render as sketches too."""
        return make_frame(
            "ConstraintUpdate",
            constraints=self.constraints().to_json(),
            sketches=[s.to_json() for s in self.sketches],
        )

    def _task_frame(self) -> dict:
        grounded = {
            "goal": _round_pt(self.task.goal) if self.task.goal else None,
            "via": [_round_pt(p) for p in self.task.via],
            "vip_id": self.task.vip_id,
        }
        return make_frame(
            "TaskAssigned",
            spec=self.spec.to_json() if self.spec else None,
            grounded=grounded,
        )

    def _on_set_control(self, msg: dict) -> list[dict]:
        mode = msg.get("mode")
        try:
            control = ControlMode(mode)
        except ValueError:
            raise ProtocolError("bad_control", f"unknown control mode {mode!r}") from None
        if control is ControlMode.POLICY and self._policy is None:
            raise ProtocolError("no_policy", "no policy checkpoint loaded")
        self.control = control
        self.manual_cmd = (0.0, 0.0)
        return []

    def _on_manual_input(self, msg: dict) -> list[dict]:
        # "linear"/"angular", not "v"/"w": the bare v key is the schema version
        try:
            v, w = float(msg["linear"]), float(msg["angular"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(
                "bad_input", "ManualInput needs numeric linear and angular"
            ) from exc
        if not (math.isfinite(v) and math.isfinite(w)):
            raise ProtocolError("bad_input", "linear and angular must be finite")
        self.manual_cmd = (v, w)
        return []

    def _on_start(self, msg: dict) -> list[dict]:
        if self.episode_over:
            raise ProtocolError("episode_over", "episode finished; Reset first")
        self.running = True
        return []

    def _on_reset(self, msg: dict) -> list[dict]:
        # back to the scenario's initial conditions; sketches, constraints and
        # the task are user-session state and go too
        self.sketches = []
        self._sketch_constraints = ConstraintSet()
        self._instr_constraints = ConstraintSet()
        self._pending_vias = []
        self._pending_clarification = None
        self.spec = None
        self.task = None
        self.progress = None
        self.manual_cmd = (0.0, 0.0)
        self.running = False
        self.episode_over = False
        self._reset_episode()
        return [self._stamp(self._constraint_frame()), self._stamp(self._scenario_loaded_frame())]

    def _on_resync_request(self, msg: dict) -> list[dict]:
        frame = make_frame(
            "Resync",
            scenario=self._scenario_loaded_frame(),
            constraints=self.constraints().to_json(),
            sketches=[s.to_json() for s in self.sketches],
            task=self.spec.to_json() if self.spec else None,
            grounded=(
                {
                    "goal": _round_pt(self.task.goal) if self.task.goal else None,
                    "via": [_round_pt(p) for p in self.task.via],
                    "vip_id": self.task.vip_id,
                }
                if self.task
                else None
            ),
            control=self.control.value,
            running=self.running,
            episode_over=self.episode_over,
            tick=self.tick_count,
            state=self._state_frame_body(),
        )
        return [self._stamp(frame)]

    # --- simulation ----------------------------------------------------------

    def _observe(self):
        """Policy observation at the current state; also caches the frame scan."""
        physical = raycast_scan(self.world, self.state.pose)
        cset = self.constraints()
        merged = merge_scan(physical, cset, self.state.pose)
        self._last_scan = merged
        policy_scan = merged if self.config.constraints_in_scan else physical
        target = self._target if self._target is not None else self.state.pose.xy()
        return build_observation(policy_scan, target, self.state, DEFAULT_LIMITS)

    def _update_target(self) -> Optional[dict]:
        """Refresh g from the task FSM; a missing VIP voids the task."""
        if self.task is None or self.progress is None:
            self._target = None
            return None
        try:
            g, self.progress = taskmode.next_target(
                self.task, self.progress, self.state, self.peds
            )
        except taskmode.TaskFaultError as exc:
            self.task = None
            self.progress = None
            self._target = None
            return self._stamp(make_frame("Error", code="task_fault", message=str(exc)))
        self._target = g
        return None

    VIP_STANDOFF = 0.8  # < d_near so the FSM still counts the VIP as caught up

    def _steer_vip(self) -> None:
        """While guiding, the VIP walks toward the robot (they are being led).

        The waypoint sits a stand-off short of the robot: the follower keeps
        close without walking into the 0.6 m contact distance.
        """
        if self.task is None or self.task.task is not TaskType.GUIDING:
            return
        rxy = self.state.pose.xy()

        def wp(p: Pedestrian) -> tuple[float, float]:
            dx, dy = rxy[0] - p.position[0], rxy[1] - p.position[1]
            d = math.hypot(dx, dy)
            if d <= self.VIP_STANDOFF or d < 1e-9:
                return p.position
            return (rxy[0] - dx / d * self.VIP_STANDOFF, rxy[1] - dy / d * self.VIP_STANDOFF)

        self.peds = [
            replace(p, waypoints=(wp(p),), waypoint_index=0)
            if p.id == self.task.vip_id and not p.script
            else p
            for p in self.peds
        ]

    def tick(self) -> list[dict]:
        """Advance one step if running; returns broadcast frames for the tick."""
        if not self.running or self.episode_over:
            return []
        out: list[dict] = []
        fault = self._update_target()
        if fault is not None:
            out.append(fault)
        obs = self._observe()
        if self.control is ControlMode.POLICY and self._policy is not None:
            action = tuple(float(a) for a in self._policy.act(obs, deterministic=True))
        elif self.control is ControlMode.MANUAL:
            action = self.manual_cmd
        else:
            action = (0.0, 0.0)

        prev_xy = self.state.pose.xy()
        prev_dist = self._dist_to_target(prev_xy)
        self.state = step_dynamics(self.state, action)
        self._steer_vip()
        robot_disc = DiscAgent(
            position=self.state.pose.xy(),
            velocity=(
                self.state.v * math.cos(self.state.pose.theta),
                self.state.v * math.sin(self.state.pose.theta),
            ),
            radius=self.state.radius,
        )
        if self.peds:
            self.peds = step_crowd(self.peds, self.world, DT, robot=robot_disc)
        self.tick_count += 1
        xy = self.state.pose.xy()
        self._path_len += math.hypot(xy[0] - prev_xy[0], xy[1] - prev_xy[1])
        self._trajectory.append(xy)

        cset = self.constraints()
        report = classify_contact(
            self.state,
            self.world,
            cset,
            [PedestrianDisc(p.id, p.position, p.radius) for p in self.peds],
        )
        incident = incident_for_contact(report.kind)
        if incident is not None and incident not in self._incidents:
            self._incidents.append(incident)

        # frame scan at the post-step pose; a wedged robot keeps the last one
        if report.kind == ContactKind.PHYSICAL:
            scan = self._last_scan
        else:
            try:
                scan = merge_scan(raycast_scan(self.world, self.state.pose), cset, self.state.pose)
            except DegeneratePoseError:
                scan = self._last_scan
        self._last_scan = scan

        fault = self._update_target()
        if fault is not None:
            out.append(fault)
        new_dist = self._dist_to_target(xy)
        reached_now = bool(self.progress and self.progress.done and not self._reached)
        if reached_now:
            self._reached = True
        if report.any:
            self._reward_sum += reward(prev_dist, new_dist, report)
        else:
            event = RewardEvent.REACHED if reached_now else RewardEvent.STEP
            self._reward_sum += reward(prev_dist, new_dist, event)

        out.append(self._stamp(self._state_frame(report)))
        done = (
            report.any
            or self._reached
            or self.tick_count >= self.config.timeout_ticks
        )
        if done:
            out.append(self._stamp(self._finish_episode()))
        return out

    def _dist_to_target(self, xy) -> float:
        if self._target is None:
            return 0.0
        return math.hypot(self._target[0] - xy[0], self._target[1] - xy[1])

    def _state_frame_body(self) -> dict:
        pose = self.state.pose
        return {
            "tick": self.tick_count,
            "t": round(self.tick_count * DT, 3),
            "robot": {
                "x": round(pose.x, 6),
                "y": round(pose.y, 6),
                "theta": round(pose.theta, 6),
                "v": round(self.state.v, 6),
                "w": round(self.state.w, 6),
            },
            "scan": (
                [round(float(r), 4) for r in self._last_scan.ranges]
                if self._last_scan is not None
                else None
            ),
            "target": _round_pt(self._target) if self._target is not None else None,
            "phase": self.progress.phase.value if self.progress else None,
            "pedestrians": [self._ped_json(p) for p in self.peds],
            "control": self.control.value,
            "running": self.running,
        }

    def _ped_json(self, p: Pedestrian) -> dict:
        return {
            "id": p.id,
            "x": round(p.position[0], 6),
            "y": round(p.position[1], 6),
            "vip": p.vip,
        }

    def _state_frame(self, report) -> dict:
        body = self._state_frame_body()
        body["contact"] = report.kind if report.any else None
        return make_frame("StateFrame", **body)

    def _finish_episode(self) -> dict:
        self.running = False
        self.episode_over = True
        outcome = classify_outcome(
            self._incidents,
            reached=self._reached,
            missed_vias=self.progress.missed_vias() if self.progress else 0,
        )
        if not self._reached and not self._incidents:
            outcome = OUTCOME_TIMEOUT
        # a follow task has no goal: running out the clock still beside the
        # VIP counts as success, losing them counts as timeout
        if (
            outcome == OUTCOME_TIMEOUT
            and self.task is not None
            and self.task.task is TaskType.FOLLOWING
        ):
            vip = next((p for p in self.peds if p.id == self.task.vip_id), None)
            if vip is not None:
                xy = self.state.pose.xy()
                d = math.hypot(vip.position[0] - xy[0], vip.position[1] - xy[1])
                if d <= self.config.task_params.d_far:
                    outcome = OUTCOME_SUCCESS
        record = EpisodeRecord(
            outcome=outcome,
            incidents=tuple(self._incidents),
            time_s=round(self.tick_count * DT, 3),
            path_length=round(self._path_len, 6),
            ticks=self.tick_count,
            reward_sum=round(self._reward_sum, 6),
        )
        self.metrics.add(record)
        self.trajectories.append(list(self._trajectory))
        return make_frame("EpisodeEnd", record=record.to_json())


def _snake(name: str) -> str:
    out = []
    for i, ch in enumerate(name):
        if ch.isupper() and i > 0:
            out.append("_")
        out.append(ch.lower())
    return "".join(out)


# --- batch runner -------------------------------------------------------------


@dataclass(frozen=True)
class ManualScript:
    """Scripted manual control for batch runs: list of (v, w) per tick.

    Shorter scripts hold their last command; empty means idle at zero.
    """

    commands: tuple[tuple[float, float], ...] = ()

    def at(self, tick: int) -> tuple[float, float]:
        if not self.commands:
            return (0.0, 0.0)
        return self.commands[min(tick, len(self.commands) - 1)]


def run_session(
    scenario: Scenario,
    control=None,
    config: SessionConfig = SessionConfig(),
    messages: Sequence[dict] = (),
    max_ticks: Optional[int] = None,
) -> tuple[list[dict], Metrics]:
    """Run one episode headless; returns (event stream, metrics).

    `control` is a policy object (with .act), a ManualScript, or None (idle).
    `messages` are injected before Start, in order (commands, sketches, ...).
    """
    policy = control if control is not None and hasattr(control, "act") else None
    session = Session(scenario, policy=policy, config=config)
    script = control if isinstance(control, ManualScript) else None
    events: list[dict] = []
    for msg in messages:
        events.extend(session.handle_message(msg))
    mode = ControlMode.POLICY.value if policy is not None else ControlMode.MANUAL.value
    events.extend(session.handle_message(make_frame("SetControl", mode=mode)))
    events.extend(session.handle_message(make_frame("Start")))
    limit = max_ticks if max_ticks is not None else config.timeout_ticks
    while session.running and session.tick_count < limit:
        if script is not None:
            session.manual_cmd = script.at(session.tick_count)
        events.extend(session.tick())
    return events, session.metrics


class ScriptedTestError(RuntimeError):
    """A scenario's scripted command asked a question or got rejected."""


def evaluate_scenario(
    scenario: Scenario,
    policy=None,
    episodes: int = 10,
    constraints_in_scan: bool = True,
    config: Optional[SessionConfig] = None,
) -> tuple[Metrics, list[list[tuple[float, float]]]]:
    """Run the scenario's scripted tests round-robin; one episode each."""
    if episodes <= 0:
        raise ValueError("episodes must be positive")
    base = config if config is not None else SessionConfig()
    cfg = replace(base, constraints_in_scan=constraints_in_scan)
    metrics = Metrics()
    trajectories: list[list[tuple[float, float]]] = []
    for ep in range(episodes):
        session = Session(scenario, policy=policy, config=cfg)
        test = scenario.tests[ep % len(scenario.tests)] if scenario.tests else None
        msgs: list[dict] = []
        if test is not None:
            for sk in test.sketches:
                msgs.append(make_frame("AddSketch", sketch=sk.to_json()))
            msgs.append(make_frame("Command", text=test.command))
        mode = ControlMode.POLICY.value if policy is not None else ControlMode.MANUAL.value
        msgs.append(make_frame("SetControl", mode=mode))
        msgs.append(make_frame("Start"))
        for msg in msgs:
            for f in session.handle_message(msg):
                if f["type"] in ("Error", "ClarificationRequest"):
                    raise ScriptedTestError(
                        f"test {ep % max(1, len(scenario.tests))}: "
                        f"{f.get('code', f.get('question'))}"
                    )
        while session.running:
            session.tick()
        metrics.add(session.metrics.episodes[-1])
        trajectories.append(session.trajectories[-1])
    return metrics, trajectories
