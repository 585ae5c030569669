"""Instruction parsing: text -> task assignment + constraint additions.

The deterministic grammar backend is the default and the test target. An
external LLM endpoint can be plugged in behind the same result type; callers
fall back to the grammar when it is unreachable.
"""
from __future__ import annotations

import enum
import json
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from .constraints import (
    ConstraintPolygon,
    ConstraintSet,
    SemanticMap,
    Source,
    expand_location,
    FUNCTION_LIBRARY_DOCS,
)
from .geometry import Point

DEFAULT_HAZARD_RADIUS = 0.5  # inflation when the user names no distance


class TaskType(enum.Enum):
    POINT_TO_POINT = "PointToPoint"
    FOLLOWING = "Following"
    GUIDING = "Guiding"


GoalRef = Union[str, Point]


@dataclass(frozen=True)
class TaskSpec:
    task: TaskType
    goal: Optional[GoalRef] = None
    via: tuple[GoalRef, ...] = ()
    vip_id: Optional[str] = None

    def __post_init__(self):
        if self.task in (TaskType.POINT_TO_POINT, TaskType.GUIDING) and self.goal is None:
            raise ValueError(f"{self.task.value} requires a goal")
        if self.task in (TaskType.FOLLOWING, TaskType.GUIDING) and self.vip_id is None:
            raise ValueError(f"{self.task.value} requires a vip_id")

    def to_json(self) -> dict:
        def ref(g):
            return list(g) if isinstance(g, tuple) else g

        return {
            "task": self.task.value,
            "goal": ref(self.goal) if self.goal is not None else None,
            "via": [ref(v) for v in self.via],
            "vip_id": self.vip_id,
        }


@dataclass(frozen=True)
class Parsed:
    spec: Optional[TaskSpec]  # None for constraint-only utterances
    constraints: ConstraintSet = field(default_factory=ConstraintSet)


@dataclass(frozen=True)
class NeedsClarification:
    question: str
    slot: Optional[str] = None       # goal | via | vip | hazard_location | task
    offending: Optional[str] = None  # phrase to replace when the user answers


ParseResult = Union[Parsed, NeedsClarification]


# --- grammar tables ---------------------------------------------------------

_P2P_VERBS = r"go|navigate|head|move|drive|come|return"
_FOLLOW_VERBS = r"follow"
_GUIDE_VERBS = r"guide|lead|escort|bring|take"

_SPILL_WORDS = r"spilled|spilt|spill|puddle|wet|slippery"
_KEEPOUT_PHRASES = (
    r"do not enter|don'?t enter|stay out of|keep out of|stay away from|"
    r"keep away from|avoid|don'?t go near|do not go near"
)
_KEEP_R_AWAY = re.compile(
    r"\bkeep\s+(\d+(?:\.\d+)?)\s*(?:m|meters?|metres?)?\s+away\s+from\b"
)
_NEGATED_VERB = re.compile(
    r"\b(?:do not|don'?t|never|can'?t|cannot)\s+"
    r"(?:go|enter|drive|move|navigate|head|come|cross|pass|follow|take|lead|guide)\b[^,.;!?]*"
)
_VIP_TOKEN = re.compile(r"\b(vip[ _-]?(\d+))\b", re.IGNORECASE)
_PRONOUNS = re.compile(r"\b(him|her|them|me|it)\b")
_COORD = re.compile(r"\(\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\)")
_ARTICLES = re.compile(r"^(?:the|a|an|my|our)\s+")
# "next to the table" is a location, not a goal
_GOAL_PREP = re.compile(r"(?<!next )(?<!close )\bto\s+")
_VIA_PREP = re.compile(r"\b(?:near|past|via|by|alongside|through)\s+")


def _find_fixture_at(smap: SemanticMap, text: str, pos: int) -> Optional[tuple[str, int]]:
    """Longest fixture name starting at `pos` (after whitespace/article)."""
    while pos < len(text) and text[pos].isspace():
        pos += 1
    rest = _ARTICLES.sub("", text[pos:])
    best: Optional[tuple[str, int]] = None
    for name in smap.names():
        key = name.casefold()
        if rest.startswith(key):
            end = len(key)
            if end == len(rest) or not rest[end].isalnum():
                if best is None or end > best[1]:
                    best = (name, end)
    if best is None:
        return None
    offset = len(text[pos:]) - len(rest)
    return best[0], pos + offset + best[1]


def _phrase_after(text: str, pos: int, max_words: int = 3) -> str:
    """Raw noun phrase following `pos`, for error messages."""
    rest = _ARTICLES.sub("", text[pos:])
    words = re.split(r"[\s,.;!?]+", rest)
    return " ".join(w for w in words[:max_words] if w)


def _fixtures_in(smap: SemanticMap, text: str) -> list[tuple[int, int, str]]:
    """All (start, end, canonical-name) fixture mentions, leftmost first."""
    hits: list[tuple[int, int, str]] = []
    for name in smap.names():
        for m in re.finditer(rf"\b{re.escape(name.casefold())}\b", text):
            hits.append((m.start(), m.end(), name))
    hits.sort()
    return hits


def _canonical_vip(token: str, known: Sequence[str]) -> str:
    for k in known:
        if k.casefold() == token.casefold().replace(" ", "").replace("_", "").replace("-", ""):
            return k
    m = _VIP_TOKEN.match(token)
    if m:
        return f"VIP{m.group(2)}"
    return token.upper()


def _extract_vip(text_lower: str, known: Sequence[str]) -> Optional[str]:
    m = _VIP_TOKEN.search(text_lower)
    if m:
        return _canonical_vip(m.group(1), known)
    for k in known:
        if re.search(rf"\b{re.escape(k.casefold())}\b", text_lower):
            return k
    return None


def parse_instruction(
    text: str,
    smap: SemanticMap,
    known_pedestrians: Sequence[str] = (),
    id_prefix: str = "instr",
) -> ParseResult:
    """Deterministic, total parse: every input yields Parsed or a question.

    The parser never guesses: unknown fixtures, a missing VIP, or a missing
    goal surface as clarification requests with the offending phrase.
    """
    if not text or not text.strip():
        raise ValueError("instruction text must be non-empty")
    lower = text.casefold()

    constraints_result = _extract_hazards(lower, smap, id_prefix)
    if isinstance(constraints_result, NeedsClarification):
        return constraints_result
    constraints, masked = constraints_result
    masked = _NEGATED_VERB.sub(" ", masked)

    task = _detect_task(masked)
    vip = _extract_vip(lower, known_pedestrians)
    if vip is None and task in (TaskType.FOLLOWING, TaskType.GUIDING):
        if _PRONOUNS.search(masked) and len(known_pedestrians) == 1:
            vip = known_pedestrians[0]
        else:
            return NeedsClarification(
                "Which pedestrian should I serve? Please give an ID such as VIP05.",
                slot="vip",
            )

    goal = _extract_goal(masked, smap)
    if isinstance(goal, NeedsClarification):
        return goal
    vias = _extract_vias(masked, smap)
    if isinstance(vias, NeedsClarification):
        return vias

    if task is None:
        if constraints.is_empty():
            return NeedsClarification(
                "I couldn't find a task or a constraint in that. "
                "Try 'go to', 'follow', 'guide', or describe a hazard.",
                slot="task",
            )
        return Parsed(spec=None, constraints=constraints)

    if task in (TaskType.POINT_TO_POINT, TaskType.GUIDING) and goal is None:
        return NeedsClarification("Where should I go? Please name a destination.", slot="goal")

    if task is TaskType.FOLLOWING:
        spec = TaskSpec(task=task, vip_id=vip)
    else:
        spec = TaskSpec(task=task, goal=goal, via=tuple(vias), vip_id=vip)
    return Parsed(spec=spec, constraints=constraints)


def _detect_task(text: str) -> Optional[TaskType]:
    candidates: list[tuple[int, TaskType]] = []
    m = re.search(rf"\b(?:{_GUIDE_VERBS})\b", text)
    if m:
        candidates.append((m.start(), TaskType.GUIDING))
    m = re.search(rf"\b(?:{_FOLLOW_VERBS})\b", text)
    if m:
        candidates.append((m.start(), TaskType.FOLLOWING))
    m = re.search(rf"\b(?:{_P2P_VERBS})\b", text)
    if m:
        candidates.append((m.start(), TaskType.POINT_TO_POINT))
    if not candidates:
        return None
    return min(candidates)[1]


def _extract_goal(text: str, smap: SemanticMap) -> Union[GoalRef, None, NeedsClarification]:
    resolved: Optional[GoalRef] = None
    unknown: Optional[str] = None
    for m in _GOAL_PREP.finditer(text):
        pos = m.end()
        coord = _COORD.match(text[pos:])
        if coord:
            resolved = (float(coord.group(1)), float(coord.group(2)))
            continue
        hit = _find_fixture_at(smap, text, pos)
        if hit is not None:
            resolved = hit[0]
        else:
            phrase = _phrase_after(text, pos)
            if phrase:
                unknown = phrase
    if resolved is not None:
        return resolved
    if unknown is not None:
        return NeedsClarification(
            f"I don't know where '{unknown}' is. Which fixture do you mean?",
            slot="goal",
            offending=unknown,
        )
    return None


def _extract_vias(text: str, smap: SemanticMap) -> Union[list[GoalRef], NeedsClarification]:
    vias: list[GoalRef] = []
    for m in _VIA_PREP.finditer(text):
        pos = m.end()
        coord = _COORD.match(text[pos:])
        if coord:
            vias.append((float(coord.group(1)), float(coord.group(2))))
            continue
        hit = _find_fixture_at(smap, text, pos)
        if hit is not None:
            vias.append(hit[0])
        else:
            phrase = _phrase_after(text, pos)
            # bare prepositions inside ordinary prose ("by the way") only
            # matter when they look like a place reference
            looks_like_place = (
                phrase
                and re.match(r"^(?:the|a|an)\s", text[pos:])
                and not re.search(rf"\b(?:{_P2P_VERBS}|{_FOLLOW_VERBS}|{_GUIDE_VERBS})\b", phrase)
            )
            if looks_like_place:
                return NeedsClarification(
                    f"I don't know where '{phrase}' is. Which fixture should the route pass?",
                    slot="via",
                    offending=phrase,
                )
    return vias


def _extract_hazards(
    lower: str, smap: SemanticMap, id_prefix: str
) -> Union[tuple[ConstraintSet, str], NeedsClarification]:
    """Pull hazard phrases out of the text; returns constraints + masked text.

    Only the hazard span itself is masked so a task sharing the clause
    ("keep 1 m away from the cabinet and go to the sofa") still parses.
    """
    obstacles: list[ConstraintPolygon] = []
    zones: list[ConstraintPolygon] = []
    spans: list[tuple[int, int]] = []

    def add_zone(fixture_name: str, radius: float) -> None:
        zones.append(
            ConstraintPolygon.make(
                f"{id_prefix}-zone-{len(zones)}",
                expand_location(smap.get(fixture_name), radius),
                Source.PARSED_INSTRUCTION,
            )
        )

    def back_over_prep(clause: str, pos: int) -> int:
        """Include a location preposition + article sitting just before `pos`."""
        m = re.search(
            r"(?:\b(?:near|by|beside|around|next to|in front of|on|at|from|of)"
            r"\s+(?:the\s+|a\s+|an\s+)?)$",
            clause[:pos],
        )
        return m.start() if m else pos

    offset = 0
    # decimal points ("0.5 m") must not split clauses
    for clause in re.split(r"([;!?]+|[,.]+(?!\d))", lower):
        start = offset
        offset += len(clause)
        if not clause.strip() or re.fullmatch(r"[,.;!?]+", clause):
            continue
        mentions = _fixtures_in(smap, clause)

        m = _KEEP_R_AWAY.search(clause)
        if m:
            hit = _find_fixture_at(smap, clause, m.end())
            if hit is not None:
                target, end = hit
            elif mentions:
                target, end = mentions[0][2], mentions[0][1]
            else:
                return NeedsClarification(
                    "Which fixture should I keep away from?", slot="hazard_location"
                )
            add_zone(target, float(m.group(1)))
            spans.append((start + m.start(), start + max(m.end(), end)))
            continue

        m = re.search(rf"\b(?:{_KEEPOUT_PHRASES})\b", clause)
        if m:
            after = [h for h in mentions if h[0] >= m.start()]
            pick = after[0] if after else (mentions[-1] if mentions else None)
            if pick is None:
                return NeedsClarification(
                    "Which area should I stay away from?", slot="hazard_location"
                )
            add_zone(pick[2], DEFAULT_HAZARD_RADIUS)
            lo = min(m.start(), back_over_prep(clause, pick[0]))
            spans.append((start + lo, start + max(m.end(), pick[1])))
            continue

        m = re.search(rf"\b(?:{_SPILL_WORDS})\b", clause)
        if m:
            if not mentions:
                return NeedsClarification(
                    "Where is the hazard? Please name a nearby fixture.",
                    slot="hazard_location",
                )
            # closest fixture mention to the hazard word
            pick = min(mentions, key=lambda h: abs(h[0] - m.start()))
            obstacles.append(
                ConstraintPolygon.make(
                    f"{id_prefix}-obstacle-{len(obstacles)}",
                    expand_location(smap.get(pick[2]), DEFAULT_HAZARD_RADIUS),
                    Source.PARSED_INSTRUCTION,
                )
            )
            lo = min(m.start(), back_over_prep(clause, pick[0]))
            spans.append((start + lo, start + max(m.end(), pick[1])))

    chars = list(lower)
    for a, b in spans:
        chars[a:b] = " " * (b - a)
    return ConstraintSet(virtual_obstacles=obstacles, keep_out_zones=zones), "".join(chars)


def retry_with_answer(
    original: str,
    failure: NeedsClarification,
    answer: str,
    smap: SemanticMap,
    known_pedestrians: Sequence[str] = (),
    id_prefix: str = "instr",
) -> ParseResult:
    """Fold a clarification answer back into the pending instruction."""
    answer = answer.strip()
    if not answer:
        return failure
    # tolerate echoed phrasing: "to the table" and "the table" mean "table"
    answer = re.sub(r"^(?:go\s+)?(?:to|near|at)(?:\s+|$)", "", answer, flags=re.I)
    answer = re.sub(r"^(?:the|a|an)(?:\s+|$)", "", answer, flags=re.I)
    if not answer:
        return failure
    if failure.offending and failure.offending in original.casefold():
        idx = original.casefold().find(failure.offending)
        patched = original[:idx] + answer + original[idx + len(failure.offending):]
        return parse_instruction(patched, smap, known_pedestrians, id_prefix)
    # trailing punctuation would split the spliced phrase into its own clause
    base = original.rstrip().rstrip(".,;!?")
    if failure.slot == "vip":
        return parse_instruction(f"{base} {answer}", smap, known_pedestrians, id_prefix)
    if failure.slot == "goal":
        return parse_instruction(f"{base} to the {answer}", smap, known_pedestrians, id_prefix)
    if failure.slot == "hazard_location":
        return parse_instruction(f"{base} near the {answer}", smap, known_pedestrians, id_prefix)
    # unknown slot: try the answer as a full command first
    result = parse_instruction(answer, smap, known_pedestrians, id_prefix)
    if isinstance(result, Parsed):
        return result
    return parse_instruction(f"{original}. {answer}", smap, known_pedestrians, id_prefix)


def render_task(spec: TaskSpec) -> str:
    """Canonical phrase for a task; re-parses to an equal TaskSpec."""

    def ref(g: GoalRef) -> str:
        if isinstance(g, tuple):
            return f"({g[0]:.2f}, {g[1]:.2f})"
        return f"the {g}"

    if spec.task is TaskType.FOLLOWING:
        return f"Follow {spec.vip_id}."
    vias = "".join(f", via {ref(v)}" for v in spec.via)
    if spec.task is TaskType.POINT_TO_POINT:
        return f"Go to {ref(spec.goal)}{vias}."
    return f"Guide {spec.vip_id} to {ref(spec.goal)}{vias}."


# --- external LLM backend ---------------------------------------------------


class BackendUnavailableError(RuntimeError):
    """Transport-level failure talking to the LLM endpoint."""


ENDPOINT_ENV = "SKETCHNAV_LLM_ENDPOINT"
API_KEY_ENV = "SKETCHNAV_LLM_API_KEY"

_REPLY_SCHEMA_HINT = (
    'Reply with a single JSON object: {"task": "PointToPoint"|"Following"|"Guiding"|null, '
    '"goal": fixture-name or [x, y] or null, "via": [fixture-name...], "vip": id or null, '
    '"constraints": [{"kind": "virtual_obstacle"|"keep_out_zone", "fixture": name, "radius": meters}], '
    '"clarification": question-string or null}. '
    "Ask a clarification instead of guessing when anything is ambiguous."
)


def build_prompt(text: str, smap: SemanticMap, known_pedestrians: Sequence[str]) -> str:
    lines = [
        "You assign navigation tasks to an indoor robot.",
        "Task pool: PointToPoint, Following, Guiding.",
        f"Semantic map: {json.dumps(smap.to_json())}",
        f"Known pedestrians: {list(known_pedestrians)}",
        "Function library:",
    ]
    lines += [f"  {sig}: {doc}" for sig, doc in FUNCTION_LIBRARY_DOCS.items()]
    lines += [_REPLY_SCHEMA_HINT, f"Instruction: {text}"]
    return "\n".join(lines)


def _default_transport(url: str, payload: bytes, headers: dict, timeout: float) -> bytes:
    req = urllib.request.Request(url, data=payload, headers=headers, method="POST")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return resp.read()


class LlmBackend:
    """Adapter for an HTTP endpoint that answers in the ParseResult schema."""

    def __init__(
        self,
        endpoint: Optional[str] = None,
        api_key: Optional[str] = None,
        transport: Optional[Callable[[str, bytes, dict, float], bytes]] = None,
        timeout: float = 10.0,
    ):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        self.api_key = api_key or os.environ.get(API_KEY_ENV)
        self.transport = transport or _default_transport
        self.timeout = timeout

    @property
    def configured(self) -> bool:
        return bool(self.endpoint)

    def request(
        self,
        text: str,
        smap: SemanticMap,
        known_pedestrians: Sequence[str] = (),
        id_prefix: str = "instr",
    ) -> ParseResult:
        if not self.configured:
            raise BackendUnavailableError("no endpoint configured")
        prompt = build_prompt(text, smap, known_pedestrians)
        payload = json.dumps({"v": 1, "prompt": prompt}).encode()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        for _ in range(2):  # one retry on schema-invalid replies
            try:
                raw = self.transport(self.endpoint, payload, headers, self.timeout)
            except (urllib.error.URLError, OSError, TimeoutError) as exc:
                raise BackendUnavailableError(str(exc)) from exc
            result = self._parse_reply(raw, smap, id_prefix)
            if result is not None:
                return result
        return NeedsClarification(
            "I could not interpret that instruction. Could you rephrase it?"
        )

    def _parse_reply(
        self, raw: bytes, smap: SemanticMap, id_prefix: str
    ) -> Optional[ParseResult]:
        try:
            data = json.loads(raw.decode())
        except (ValueError, UnicodeDecodeError):
            return None
        if not isinstance(data, dict) or "task" not in data:
            return None
        if data.get("clarification"):
            return NeedsClarification(str(data["clarification"]))
        try:
            constraints = self._build_constraints(data.get("constraints") or [], smap, id_prefix)
            task_name = data.get("task")
            if task_name is None:
                return Parsed(spec=None, constraints=constraints)
            task = TaskType(task_name)
            goal = data.get("goal")
            if isinstance(goal, list):
                goal = (float(goal[0]), float(goal[1]))
            elif goal is not None:
                goal = self._resolve_name(goal, smap)
            via = tuple(
                (float(v[0]), float(v[1])) if isinstance(v, list) else self._resolve_name(v, smap)
                for v in data.get("via") or []
            )
            spec = TaskSpec(task=task, goal=goal, via=via, vip_id=data.get("vip"))
        except (ValueError, KeyError, TypeError):
            return None
        return Parsed(spec=spec, constraints=constraints)

    @staticmethod
    def _resolve_name(name: str, smap: SemanticMap) -> str:
        fixture = smap.get(str(name))
        if fixture is None:
            raise ValueError(f"unknown fixture {name!r}")
        return fixture.name

    @staticmethod
    def _build_constraints(entries: list, smap: SemanticMap, id_prefix: str) -> ConstraintSet:
        obstacles, zones = [], []
        for e in entries:
            fixture = smap.get(str(e["fixture"]))
            if fixture is None:
                raise ValueError(f"unknown fixture {e['fixture']!r}")
            radius = float(e.get("radius", DEFAULT_HAZARD_RADIUS))
            poly = expand_location(fixture, radius)
            if e["kind"] == "virtual_obstacle":
                obstacles.append(
                    ConstraintPolygon.make(
                        f"{id_prefix}-obstacle-{len(obstacles)}", poly, Source.PARSED_INSTRUCTION
                    )
                )
            elif e["kind"] == "keep_out_zone":
                zones.append(
                    ConstraintPolygon.make(
                        f"{id_prefix}-zone-{len(zones)}", poly, Source.PARSED_INSTRUCTION
                    )
                )
            else:
                raise ValueError(f"unknown constraint kind {e['kind']!r}")
        return ConstraintSet(virtual_obstacles=obstacles, keep_out_zones=zones)
