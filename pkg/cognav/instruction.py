"""Sub-instruction handling: splitting, rationalization, completion checks and guidance strings."""
import logging
import re
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

from .errors import BackendError
from .llm_backend import Backend, CompletionParams, chat
from .prompts import (
    ROLE_JUDGE,
    ROLE_RATIONALIZER,
    ROLE_SPLITTER,
    render_hint,
    render_sections,
    split_clauses,
)
from .world import SubGoal

logger = logging.getLogger(__name__)

SUCCESS_RADIUS = 3.0
PENDING, ACTIVE, COMPLETE = "pending", "active", "complete"


@dataclass(frozen=True)
class SubInstruction:
    i: int
    j: int
    text: str
    original_text: str
    kind: str  # "where" | "what"
    status: str = PENDING
    target: str = ""
    region: str = ""
    history: Tuple[str, ...] = ()


@dataclass
class InstructionState:
    original: str
    subs: List[SubInstruction]
    current: int = 1
    finished: bool = False

    def __post_init__(self):
        if not self.subs:
            raise ValueError("an instruction needs at least one sub-instruction")
        if self.subs[0].status == PENDING:
            self.subs[0] = replace(self.subs[0], status=ACTIVE)

    @property
    def active(self) -> SubInstruction:
        return self.subs[self.current - 1]

    @property
    def is_final(self) -> bool:
        return self.current == len(self.subs)

    def update_active(self, sub: SubInstruction) -> None:
        if sub.i != self.current:
            raise ValueError(f"sub {sub.i} is not the active one ({self.current})")
        self.subs[self.current - 1] = sub

    def advance(self) -> bool:
        """Complete the active sub; returns True when it was the final one."""
        self.subs[self.current - 1] = replace(self.active, status=COMPLETE)
        if self.is_final:
            self.finished = True
            return True
        self.current += 1
        self.subs[self.current - 1] = replace(self.active, status=ACTIVE)
        return False


def extract_target(text: str, vocab: Iterable[str]) -> Optional[str]:
    """Earliest vocabulary term in ``text`` (longest wins at the same position)."""
    lowered = text.lower()
    best = None
    for term in sorted(set(vocab)):
        match = re.search(r"\b" + re.escape(term.lower()) + r"\b", lowered)
        if match is None:
            continue
        key = (match.start(), -len(term))
        if best is None or key < best[0]:
            best = (key, term)
    return best[1] if best else None


def _tag(text: str, room_vocab: Sequence[str], object_vocab: Sequence[str]) -> Tuple[str, str]:
    room = extract_target(text, room_vocab)
    if room is not None:
        return "where", room
    return "what", extract_target(text, object_vocab) or ""


def split(instruction: str, backend: Backend, room_vocab: Sequence[str] = (),
          object_vocab: Sequence[str] = (), params: Optional[CompletionParams] = None) -> List[SubInstruction]:
    if not instruction.strip():
        raise ValueError("instruction must be non-empty")
    user = render_sections([("Instruction", [instruction.strip()])])
    try:
        reply = backend.complete(chat(ROLE_SPLITTER, user), params)
        clauses = [line.strip(" -*\t") for line in reply.splitlines() if line.strip(" -*\t")]
        if not clauses:
            raise BackendError("splitter returned no clauses")
    except BackendError as e:
        logger.warning(f"⚠️ Splitter failed, using clause rule: {e}")
        clauses = split_clauses(instruction)
    subs = []
    for i, clause in enumerate(clauses, start=1):
        kind, target = _tag(clause, room_vocab, object_vocab)
        subs.append(SubInstruction(i=i, j=0, text=clause, original_text=clause, kind=kind,
                                   target=target, history=(clause,)))
    return subs


def attach_annotations(subs: Sequence[SubInstruction], annotations: Sequence[SubGoal]) -> List[SubInstruction]:
    """Copy kind/target/region from ground-truth annotations when the counts line up."""
    if len(subs) != len(annotations):
        logger.warning(f"⚠️ {len(subs)} sub-instructions vs {len(annotations)} annotations; keeping tags")
        return list(subs)
    return [replace(s, kind=a.kind, target=a.target, region=a.region) for s, a in zip(subs, annotations)]


def rationalize(sub: SubInstruction, descriptions: Sequence[str], original: str, backend: Backend,
                current_room: str = "", hint: bool = True,
                params: Optional[CompletionParams] = None) -> SubInstruction:
    """Produce revision j+1 of ``sub`` conditioned on what is visible now."""
    user = render_sections(
        [
            ("Instruction", [original]),
            ("Sub-instruction", [sub.text]),
            ("Observations", list(descriptions)),
        ],
        hint=render_hint({"target": sub.target, "room": current_room}) if hint and sub.target else "",
    )
    try:
        text = backend.complete(chat(ROLE_RATIONALIZER, user), params).strip()
        if not text:
            raise BackendError("rationalizer returned an empty reply")
    except BackendError as e:
        logger.warning(f"⚠️ Rationalization of sub {sub.i} failed, keeping text: {e}")
        text = sub.text
    return replace(sub, j=sub.j + 1, text=text, history=sub.history + (text,))


def check_complete(sub: SubInstruction, agent_room: str,
                   visible_objects: Sequence[Tuple[str, float]], goal_distance: float,
                   final: bool = False) -> bool:
    if sub.kind == "where":
        done = agent_room == sub.target
    else:
        done = any(label == sub.target and d <= SUCCESS_RADIUS for label, d in visible_objects)
    if final:
        done = done and goal_distance <= SUCCESS_RADIUS
    return done


def judge_complete(sub: SubInstruction, agent_room: str,
                   visible_objects: Sequence[Tuple[str, float]], goal_distance: float,
                   backend: Backend, final: bool = False, hint: bool = True,
                   params: Optional[CompletionParams] = None) -> bool:
    """LLM-judged completion; falls back to the oracle rule on failure or an unclear answer."""
    oracle = check_complete(sub, agent_room, visible_objects, goal_distance, final)
    user = render_sections(
        [
            ("Sub-instruction", [sub.text]),
            ("Agent", [f"In: {agent_room}", f"See: {[label for label, _ in visible_objects]}"]),
            ("Question", ["Is the sub-instruction complete?"]),
        ],
        hint=render_hint({"complete": "yes" if oracle else "no"}) if hint else "",
    )
    try:
        reply = backend.complete(chat(ROLE_JUDGE, user), params).strip().lower()
    except BackendError as e:
        logger.warning(f"⚠️ Completion judge failed, using oracle rule: {e}")
        return oracle
    if reply.startswith("yes"):
        return True
    if reply.startswith("no"):
        return False
    logger.warning(f"⚠️ Unclear completion judgement {reply[:40]!r}, using oracle rule")
    return oracle


def guidance(sub: SubInstruction) -> str:
    if sub.kind == "where":
        return f"You should try to go ({sub.target})"
    return f"You should try to find ({sub.target})"
