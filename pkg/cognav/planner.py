"""High-level target planning and low-level action compilation."""
import logging
import math
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .errors import BackendError, DisconnectedError, PlannerUnavailable, QuantizationError
from .geometry import Point, distance
from .llm_backend import Backend, ChatMessage, CompletionParams
from .perception import SceneDescription, format_description
from .prompts import (
    FORMAT_REMINDER,
    PLANNER_QUESTION,
    ROLE_PLANNER,
    render_sections,
    system_text,
)
from .world import (
    ANGLE_STEP,
    DIST_STEP,
    FORWARD,
    N_ANGLES,
    N_DISTANCES,
    TURN_LEFT,
    TURN_RIGHT,
    Action,
    Scene,
    Waypoint,
    geodesic,
)

logger = logging.getLogger(__name__)

STOP_TOKEN = "STOP"
VISITED_RADIUS = 0.5
_REPLY_RE = re.compile(r"\bSTOP\b|\d+")


@dataclass
class PlannerPrompt:
    system_preamble: str
    instruction: str
    guidance: str
    history_lines: List[str]
    reflections: List[str]
    candidates: List[str]
    question: str = PLANNER_QUESTION
    hint: str = ""

    def render(self) -> str:
        return render_sections(
            [
                ("Instruction", [self.instruction]),
                ("Guidance", [self.guidance]),
                ("History", self.history_lines),
                ("Reflections", self.reflections),
                ("Candidates", self.candidates),
                ("Question", [self.question]),
            ],
            hint=self.hint,
        )

    def to_messages(self) -> List[ChatMessage]:
        return [ChatMessage("system", self.system_preamble), ChatMessage("user", self.render())]


@dataclass(frozen=True)
class PlannerDecision:
    target: Optional[int]  # waypoint index, None for STOP
    stop: bool = False
    fallback: bool = False
    attempts: int = 1
    replies: Tuple[str, ...] = ()


def candidate_line(desc: SceneDescription) -> str:
    return f"Waypoint {desc.waypoint_index}: {format_description(desc)}"


def build_prompt(instruction: str, guidance: str, history_lines: Sequence[str],
                 reflections: Sequence[str], descriptions: Sequence[SceneDescription],
                 hint: str = "", char_cap: int = 6000) -> PlannerPrompt:
    """Assemble the planner prompt and trim it under ``char_cap``.

    Oldest history lines go first, then the lowest-ranked reflections (``reflections`` arrive
    best-first). Candidates and guidance are never trimmed.
    """
    if not descriptions:
        raise ValueError("the planner needs at least one candidate description")
    prompt = PlannerPrompt(
        system_preamble=system_text(ROLE_PLANNER),
        instruction=instruction,
        guidance=guidance,
        history_lines=list(history_lines),
        reflections=list(reflections),
        candidates=[candidate_line(d) for d in sorted(descriptions, key=lambda d: d.waypoint_index)],
        hint=hint,
    )
    while len(prompt.render()) > char_cap and prompt.history_lines:
        prompt.history_lines.pop(0)
    while len(prompt.render()) > char_cap and prompt.reflections:
        prompt.reflections.pop()
    return prompt


def parse_reply(text: str, m: int) -> Optional[PlannerDecision]:
    """Earliest STOP token or in-range index in ``text``; None when there is neither."""
    for match in _REPLY_RE.finditer(text):
        token = match.group(0)
        if token == STOP_TOKEN:
            return PlannerDecision(None, stop=True)
        value = int(token)
        if 1 <= value <= m:
            return PlannerDecision(value)
    return None


def select_target(prompt: PlannerPrompt, backend: Backend, m: int, fallback: int,
                  params: Optional[CompletionParams] = None, max_retries: int = 2) -> PlannerDecision:
    if m < 1:
        raise ValueError("select_target needs at least one candidate")
    messages = prompt.to_messages()
    replies: List[str] = []
    for attempt in range(1, max_retries + 2):
        try:
            reply = backend.complete(messages, params)
        except BackendError as e:
            logger.error(f"❌ Planner backend unavailable: {e}")
            raise PlannerUnavailable(str(e)) from e
        replies.append(reply)
        decision = parse_reply(reply, m)
        if decision is not None:
            return PlannerDecision(decision.target, decision.stop, False, attempt, tuple(replies))
        logger.warning(f"⚠️ Unparseable planner reply (attempt {attempt}): {reply[:60]!r}")
        messages = messages + [ChatMessage("assistant", reply or "(empty)"),
                               ChatMessage("user", FORMAT_REMINDER)]
    logger.warning(f"⚠️ Planner fell back to candidate {fallback}")
    return PlannerDecision(fallback, False, True, max_retries + 1, tuple(replies))


def to_actions(waypoint: Waypoint) -> List[Action]:
    """Shortest-way turns of 3 degrees, then 0.25 m forward steps."""
    turns_f = waypoint.rel_heading / ANGLE_STEP
    steps_f = waypoint.distance / DIST_STEP
    if abs(turns_f - round(turns_f)) > 1e-9 or abs(steps_f - round(steps_f)) > 1e-9:
        raise QuantizationError(
            f"Waypoint {waypoint.index} ({waypoint.rel_heading} deg, {waypoint.distance} m) is off-grid"
        )
    steps = int(round(steps_f))
    if not 1 <= steps <= N_DISTANCES:
        raise QuantizationError(f"Waypoint distance {waypoint.distance} outside the action range")
    turns = int(round(turns_f)) % N_ANGLES
    if turns > N_ANGLES // 2:
        turns -= N_ANGLES
    turn = TURN_RIGHT if turns > 0 else TURN_LEFT
    return [turn] * abs(turns) + [FORWARD] * steps


@dataclass(frozen=True)
class StopState:
    planner_stop: bool
    final_complete: bool
    steps_used: int
    step_budget: int


def decide_stop(state: StopState) -> bool:
    return state.planner_stop or state.final_complete or state.steps_used >= state.step_budget


def lands_on_visited(waypoint: Waypoint, visited: Sequence[Point], radius: float = VISITED_RADIUS) -> bool:
    return any(distance(waypoint.position, p) < radius for p in visited)


def oracle_choice(scene: Scene, waypoints: Sequence[Waypoint], target: Point,
                  visited: Sequence[Point] = ()) -> int:
    """Candidate with the smallest geodesic distance to ``target``; ties go to the lower index.

    Candidates landing on already visited places are skipped unless nothing else is left.
    """
    if not waypoints:
        raise ValueError("no candidates to choose from")
    pool = [wp for wp in waypoints if not lands_on_visited(wp, visited)] or list(waypoints)

    def cost(wp: Waypoint) -> Tuple[float, int]:
        try:
            return geodesic(scene, wp.position, target), wp.index
        except DisconnectedError:
            return math.inf, wp.index

    return min(pool, key=cost).index
